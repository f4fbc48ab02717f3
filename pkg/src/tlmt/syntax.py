"""Concrete syntax, AST, parser and printer for lookahead-free LTLfMT over NRA.

Three layers are represented:

* terms  (``Num``, ``Name``, ``Var``, ``Const``, ``Neg``, ``Add``, ``Sub``,
  ``Mul``, ``Pow``, ``Abs``)
* first-order formulas (``Atom``, ``NotAtom``, ``LAnd``, ``LOr``)
* temporal formulas (``Top``, ``Bottom``, ``Lam``, ``And``, ``Or``, ``Next``,
  ``WeakNext``, ``Until``, ``Eventually``, ``Always``)

``Prop``/``NotProp`` are propositional letters; they only show up after
abstraction but share the temporal node classes so one printer and one
semantics serve both.

All nodes are frozen dataclasses: equality is structural and nodes hash.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, Union

__all__ = [
    "Num", "Name", "Var", "Const", "Neg", "Add", "Sub", "Mul", "Pow", "Abs",
    "Atom", "NotAtom", "LAnd", "LOr",
    "Top", "Bottom", "Lam", "And", "Or", "Next", "WeakNext", "Until",
    "Eventually", "Always", "Prop", "NotProp",
    "COMPARATORS", "Signature",
    "ParseError", "FragmentError", "ResolutionError",
    "parse_formula", "parse_prop", "print_formula", "print_term",
    "print_lambda", "resolve", "subformulas", "atoms", "normalize_key",
    "identifiers",
]

COMPARATORS = ("<", "<=", "=", "!=", ">=", ">")


# --------------------------------------------------------------------------
# terms

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Name:
    """Identifier that has not been classified yet."""
    name: str


@dataclass(frozen=True)
class Var:
    name: str
    index: int


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Term"


@dataclass(frozen=True)
class Add:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Sub:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Mul:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Pow:
    base: "Term"
    exponent: int

    def __post_init__(self):
        if not isinstance(self.exponent, int) or self.exponent < 0:
            raise ValueError(f"power exponent must be a non-negative int, got {self.exponent!r}")


@dataclass(frozen=True)
class Abs:
    arg: "Term"


Term = Union[Num, Name, Var, Const, Neg, Add, Sub, Mul, Pow, Abs]


# --------------------------------------------------------------------------
# first-order layer

@dataclass(frozen=True)
class Atom:
    left: Term
    op: str
    right: Term

    def __post_init__(self):
        if self.op not in COMPARATORS:
            raise ValueError(f"unknown comparator {self.op!r}")


@dataclass(frozen=True)
class NotAtom:
    atom: Atom


@dataclass(frozen=True)
class LAnd:
    left: "LambdaFormula"
    right: "LambdaFormula"


@dataclass(frozen=True)
class LOr:
    left: "LambdaFormula"
    right: "LambdaFormula"


LambdaFormula = Union[Atom, NotAtom, LAnd, LOr]


# --------------------------------------------------------------------------
# temporal layer

@dataclass(frozen=True)
class Top:
    pass


@dataclass(frozen=True)
class Bottom:
    pass


@dataclass(frozen=True)
class Lam:
    body: LambdaFormula


@dataclass(frozen=True)
class And:
    left: "TemporalFormula"
    right: "TemporalFormula"


@dataclass(frozen=True)
class Or:
    left: "TemporalFormula"
    right: "TemporalFormula"


@dataclass(frozen=True)
class Next:
    arg: "TemporalFormula"


@dataclass(frozen=True)
class WeakNext:
    arg: "TemporalFormula"


@dataclass(frozen=True)
class Until:
    left: "TemporalFormula"
    right: "TemporalFormula"


@dataclass(frozen=True)
class Eventually:
    arg: "TemporalFormula"


@dataclass(frozen=True)
class Always:
    arg: "TemporalFormula"


@dataclass(frozen=True)
class Prop:
    index: int


@dataclass(frozen=True)
class NotProp:
    index: int


TemporalFormula = Union[Top, Bottom, Lam, And, Or, Next, WeakNext, Until,
                        Eventually, Always, Prop, NotProp]

UNARY_TEMPORAL = (Next, WeakNext, Eventually, Always)
BINARY_TEMPORAL = (And, Or, Until)
_UNARY_KEYWORD = {"X": Next, "WX": WeakNext, "F": Eventually, "G": Always}
_KEYWORD_OF = {cls: kw for kw, cls in _UNARY_KEYWORD.items()}


# --------------------------------------------------------------------------
# errors

class ParseError(ValueError):
    """Syntax error carrying a 1-based line/column."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.message = message
        self.line = line
        self.column = column
        where = f" at line {line}, column {column}" if line else ""
        super().__init__(f"{message}{where}")


class FragmentError(ParseError):
    """Input is well-formed but leaves the lookahead-free, quantifier-free fragment."""


class ResolutionError(ValueError):
    pass


# --------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|!=|==|&&|\|\||[<>=!()+\-*^,])
  | (?P<forbidden>[∃∀○◦∘¬])
""", re.VERBOSE)

_QUANTIFIERS = {"exists", "forall", "∃", "∀"}
_LOOKAHEADS = {"next", "wnext", "○", "◦", "∘"}
_KEYWORDS = {"true", "false", "X", "WX", "F", "G", "U", "abs"}


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind == "ws":
            newlines = value.count("\n")
            if newlines:
                line += newlines
                line_start = pos + value.rfind("\n") + 1
        elif kind == "forbidden" or (kind == "ident" and value in _QUANTIFIERS | _LOOKAHEADS):
            if value in _QUANTIFIERS:
                raise FragmentError(f"quantifier {value!r} is not supported", line, col)
            if value == "¬":
                raise FragmentError("use '!' for negation of atoms", line, col)
            raise FragmentError(
                f"lookahead operator {value!r} is outside the lookahead-free fragment", line, col)
        else:
            if kind == "op" and value == "==":
                value = "="
            tokens.append(_Token(kind, value, line, col))
        pos = m.end()
    col = pos - line_start + 1
    tokens.append(_Token("eof", "", line, col))
    return tokens


# --------------------------------------------------------------------------
# parser

class _Fail(Exception):
    pass


class _Parser:
    def __init__(self, text: str, letters: bool = False):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.letters = letters
        self.furthest = (0, "formula")
        self.term_memo: dict[int, tuple[Term, int] | None] = {}

    # helpers
    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def at(self, *texts: str) -> bool:
        t = self.tok
        return t.kind in ("op", "ident") and t.text in texts

    def fail(self, expected: str):
        if self.pos >= self.furthest[0]:
            self.furthest = (self.pos, expected)
        raise _Fail

    def expect(self, text: str):
        if not self.at(text):
            self.fail(repr(text))
        self.pos += 1

    def error(self) -> ParseError:
        pos, expected = self.furthest
        tok = self.tokens[pos]
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return ParseError(f"expected {expected}, found {found}", tok.line, tok.col)

    def attempt(self, rule):
        saved = self.pos
        try:
            return rule()
        except _Fail:
            self.pos = saved
            return None

    # entry
    def parse(self) -> TemporalFormula:
        try:
            phi = self.until()
            if self.tok.kind != "eof":
                self.fail("end of input")
        except _Fail:
            raise self.error() from None
        return phi

    # temporal layer
    def until(self):
        left = self.disjunction()
        if self.at("U"):
            self.pos += 1
            return Until(left, self.until())
        return left

    def disjunction(self):
        left = self.conjunction()
        while self.at("||"):
            self.pos += 1
            right = self.conjunction()
            if isinstance(left, Lam) and isinstance(right, Lam):
                left = Lam(LOr(left.body, right.body))
            else:
                left = Or(left, right)
        return left

    def conjunction(self):
        left = self.unary()
        while self.at("&&"):
            self.pos += 1
            right = self.unary()
            if isinstance(left, Lam) and isinstance(right, Lam):
                left = Lam(LAnd(left.body, right.body))
            else:
                left = And(left, right)
        return left

    def unary(self):
        t = self.tok
        if t.kind == "ident" and t.text in _UNARY_KEYWORD:
            self.pos += 1
            return _UNARY_KEYWORD[t.text](self.unary())
        return self.primary()

    def primary(self):
        t = self.tok
        if t.kind == "ident":
            if t.text == "true":
                self.pos += 1
                return Top()
            if t.text == "false":
                self.pos += 1
                return Bottom()
            if self.letters and re.fullmatch(r"p\d+", t.text):
                self.pos += 1
                return Prop(int(t.text[1:]))
        if self.at("!"):
            return self.negation()
        atom = self.attempt(self.atom)
        if atom is not None:
            return Lam(atom)
        if self.at("("):
            self.pos += 1
            phi = self.until()
            self.expect(")")
            return phi
        self.fail("formula")

    def negation(self):
        bang = self.tok
        self.pos += 1
        t = self.tok
        if self.letters and t.kind == "ident" and re.fullmatch(r"p\d+", t.text):
            self.pos += 1
            return NotProp(int(t.text[1:]))
        atom = self.attempt(self.negated_atom)
        if atom is None:
            raise FragmentError(
                "negation is only allowed directly on an atom "
                "(the fragment has no temporal or Boolean negation)", bang.line, bang.col)
        if self.letters and isinstance(atom, Prop):
            return NotProp(atom.index)
        return Lam(NotAtom(atom))

    def negated_atom(self):
        atom = self.attempt(self.atom)
        if atom is not None:
            return atom
        if self.letters:
            t = self.tok
            if t.kind == "ident" and re.fullmatch(r"p\d+", t.text):
                self.pos += 1
                return Prop(int(t.text[1:]))
        self.expect("(")
        inner = self.negated_atom()
        self.expect(")")
        return inner

    def atom(self):
        left = self.term()
        t = self.tok
        if not (t.kind == "op" and t.text in COMPARATORS):
            self.fail("comparison operator")
        self.pos += 1
        right = self.term()
        return Atom(left, t.text, right)

    # terms
    def term(self):
        start = self.pos
        if start in self.term_memo:
            memo = self.term_memo[start]
            if memo is None:
                raise _Fail
            self.pos = memo[1]
            return memo[0]
        try:
            result = self.additive()
        except _Fail:
            self.term_memo[start] = None
            raise
        self.term_memo[start] = (result, self.pos)
        return result

    def additive(self):
        left = self.multiplicative()
        while self.at("+", "-"):
            op = self.tok.text
            self.pos += 1
            right = self.multiplicative()
            left = Add(left, right) if op == "+" else Sub(left, right)
        return left

    def multiplicative(self):
        left = self.signed()
        while self.at("*"):
            self.pos += 1
            left = Mul(left, self.signed())
        return left

    def signed(self):
        if self.at("-"):
            self.pos += 1
            return Neg(self.signed())
        return self.power()

    def power(self):
        base = self.term_primary()
        if self.at("^"):
            self.pos += 1
            t = self.tok
            if t.kind != "number" or not t.text.isdigit():
                if t.kind == "number":
                    raise ParseError("power exponent must be a non-negative integer literal",
                                     t.line, t.col)
                self.fail("integer exponent")
            self.pos += 1
            return Pow(base, int(t.text))
        return base

    def term_primary(self):
        t = self.tok
        if t.kind == "number":
            self.pos += 1
            return Num(float(t.text))
        if t.kind == "ident":
            if t.text == "abs":
                self.pos += 1
                self.expect("(")
                arg = self.term()
                self.expect(")")
                return Abs(arg)
            if t.text in ("X", "WX"):
                nxt = self.tokens[self.pos + 1]
                if nxt.kind == "ident" and nxt.text not in _KEYWORDS:
                    raise FragmentError(
                        f"lookahead '{t.text} {nxt.text}' on a term is outside the "
                        "lookahead-free fragment", t.line, t.col)
            if t.text in _KEYWORDS:
                self.fail("term")
            if self.letters and re.fullmatch(r"p\d+", t.text):
                self.fail("term")
            self.pos += 1
            return Name(t.text)
        if self.at("("):
            self.pos += 1
            inner = self.term()
            self.expect(")")
            return inner
        self.fail("term")


def parse_formula(text: str) -> TemporalFormula:
    """Parse a formula of the fragment.

    Raises :class:`ParseError` (with line/column) on malformed input and
    :class:`FragmentError` on negated temporal formulas, quantifiers or
    lookahead operators.
    """
    return _Parser(text).parse()


def parse_prop(text: str) -> TemporalFormula:
    """Parse a propositional LTLf formula whose letters are written ``p0, p1, ...``."""
    return _Parser(text, letters=True).parse()


# --------------------------------------------------------------------------
# printer

def _number(value: float) -> str:
    if not math.isfinite(value):
        raise ValueError(f"cannot print non-finite literal {value!r}")
    if value < 0:
        return f"(-{_number(-value)})"
    if value.is_integer() and value < 1e16:
        return str(int(value))
    return repr(value)


def print_term(t: Term) -> str:
    if isinstance(t, Num):
        return _number(t.value)
    if isinstance(t, (Name, Var, Const)):
        return t.name
    if isinstance(t, Neg):
        return f"(-{print_term(t.arg)})"
    if isinstance(t, Add):
        return f"({print_term(t.left)} + {print_term(t.right)})"
    if isinstance(t, Sub):
        return f"({print_term(t.left)} - {print_term(t.right)})"
    if isinstance(t, Mul):
        return f"({print_term(t.left)} * {print_term(t.right)})"
    if isinstance(t, Pow):
        return f"({print_term(t.base)}^{t.exponent})"
    if isinstance(t, Abs):
        return f"abs({print_term(t.arg)})"
    raise TypeError(f"not a term: {t!r}")


def print_lambda(f: LambdaFormula) -> str:
    if isinstance(f, Atom):
        return f"({print_term(f.left)} {f.op} {print_term(f.right)})"
    if isinstance(f, NotAtom):
        return "!" + print_lambda(f.atom)
    if isinstance(f, LAnd):
        return f"({print_lambda(f.left)} && {print_lambda(f.right)})"
    if isinstance(f, LOr):
        return f"({print_lambda(f.left)} || {print_lambda(f.right)})"
    raise TypeError(f"not a first-order formula: {f!r}")


def print_formula(f) -> str:
    """Fully parenthesized concrete syntax; ``parse_formula`` inverts it."""
    if isinstance(f, Top):
        return "true"
    if isinstance(f, Bottom):
        return "false"
    if isinstance(f, Prop):
        return f"p{f.index}"
    if isinstance(f, NotProp):
        return f"!p{f.index}"
    if isinstance(f, Lam):
        return print_lambda(f.body)
    if isinstance(f, And):
        return f"({print_formula(f.left)} && {print_formula(f.right)})"
    if isinstance(f, Or):
        return f"({print_formula(f.left)} || {print_formula(f.right)})"
    if isinstance(f, Until):
        return f"({print_formula(f.left)} U {print_formula(f.right)})"
    if isinstance(f, UNARY_TEMPORAL):
        return f"{_KEYWORD_OF[type(f)]} {print_formula(f.arg)}"
    if isinstance(f, (Atom, NotAtom, LAnd, LOr)):
        return print_lambda(f)
    return print_term(f)


# --------------------------------------------------------------------------
# traversal

def children(node) -> tuple:
    if isinstance(node, (Num, Name, Var, Const, Top, Bottom, Prop, NotProp)):
        return ()
    if isinstance(node, (Neg, Abs)):
        return (node.arg,)
    if isinstance(node, Pow):
        return (node.base,)
    if isinstance(node, NotAtom):
        return (node.atom,)
    if isinstance(node, Lam):
        return (node.body,)
    if isinstance(node, UNARY_TEMPORAL):
        return (node.arg,)
    return (node.left, node.right)


def rebuild(node, new_children: Sequence):
    """Return ``node`` with its children replaced (same arity and order as ``children``)."""
    if isinstance(node, Pow):
        return Pow(new_children[0], node.exponent)
    if isinstance(node, Atom):
        return Atom(new_children[0], node.op, new_children[1])
    if not new_children:
        return node
    return type(node)(*new_children)


def _walk(node) -> Iterator:
    yield node
    for c in children(node):
        yield from _walk(c)


def subformulas(phi: TemporalFormula) -> list:
    """Distinct temporal subformulas in depth-first, first-occurrence order.

    First-order formulas under ``Lam`` are leaves.
    """
    seen: dict = {}

    def visit(node):
        if node not in seen:
            seen[node] = None
        if isinstance(node, Lam):
            return
        for c in children(node):
            visit(c)

    visit(phi)
    return list(seen)


def atoms(phi) -> list[Atom]:
    """Atoms of ``phi`` in depth-first order, duplicates included."""
    return [n for n in _walk(phi) if isinstance(n, Atom)]


def identifiers(phi) -> list[str]:
    out: dict[str, None] = {}
    for n in _walk(phi):
        if isinstance(n, (Name, Var, Const)):
            out.setdefault(n.name)
    return list(out)


def normalize_key(node):
    """Canonical, hashable key used for deduplication.

    Commutative ``+``/``*`` chains are flattened and sorted, and ``&&``/``||``
    chains likewise, so ``x + y < 1`` and ``y + x < 1`` share a key.
    Identifier classification is ignored.
    """
    if isinstance(node, Num):
        return ("num", node.value)
    if isinstance(node, (Name, Var, Const)):
        return ("id", node.name)
    for cls, tag in ((Add, "+"), (Mul, "*"), (LAnd, "and"), (LOr, "or"), (And, "tand"), (Or, "tor")):
        if isinstance(node, cls):
            parts = []
            stack = [node]
            while stack:
                n = stack.pop()
                if isinstance(n, cls):
                    stack.extend((n.left, n.right))
                else:
                    parts.append(normalize_key(n))
            return (tag, tuple(sorted(parts, key=repr)))
    if isinstance(node, Pow):
        return ("^", normalize_key(node.base), node.exponent)
    if isinstance(node, Atom):
        return ("atom", node.op, normalize_key(node.left), normalize_key(node.right))
    if isinstance(node, (Prop, NotProp)):
        return (type(node).__name__, node.index)
    return (type(node).__name__,) + tuple(normalize_key(c) for c in children(node))


# --------------------------------------------------------------------------
# resolution

@dataclass(frozen=True)
class Signature:
    """State variables (ordered, indexing the state vector) and constant names."""
    variables: tuple[str, ...]
    constants: frozenset[str] = frozenset()

    def __post_init__(self):
        if len(set(self.variables)) != len(self.variables):
            raise ResolutionError(f"duplicate variable names in {self.variables}")
        both = set(self.variables) & set(self.constants)
        if both:
            raise ResolutionError(f"identifiers declared both variable and constant: {sorted(both)}")

    @property
    def arity(self) -> int:
        return len(self.variables)

    def index(self, name: str) -> int:
        return self.variables.index(name)


def resolve(phi, constants: Iterable[str], variables: Sequence[str]):
    """Tag every identifier of ``phi`` as a state variable (with index) or a constant.

    Returns ``(resolved_formula, Signature)``.
    """
    sig = Signature(tuple(variables), frozenset(constants))
    index = {v: i for i, v in enumerate(sig.variables)}

    def go(node):
        if isinstance(node, (Name, Var, Const)):
            if node.name in index:
                return Var(node.name, index[node.name])
            if node.name in sig.constants:
                return Const(node.name)
            raise ResolutionError(f"unresolved identifier {node.name!r}")
        kids = children(node)
        if not kids:
            return node
        return rebuild(node, [go(c) for c in kids])

    return go(phi), sig
