"""LTLf semantics, progression-based LTLf -> DFA compilation, minimization, I/O.

Residuals
---------
A DFA state is a *residual*: a positive Boolean combination of obligations on
the next trace position.  Obligations are ``X chi`` (a next position must exist
and satisfy ``chi``) and ``WX chi`` (if a next position exists it satisfies
``chi``), where ``chi`` is a subformula of the compiled formula.  Keeping the
strong/weak marker in the state is what makes acceptance at the end of the
trace exact: a residual accepts the empty suffix iff one of its clauses holds
only weak obligations.

Residuals are kept as minimal DNF over interned obligations (a set of clauses,
no clause a superset of another), which is a canonical form for monotone
Boolean functions over opaque obligations.  A handful of sound rewrites
(``WX true = true``, ``X false = false``, ``X chi`` makes ``X true`` redundant
and upgrades ``WX`` to ``X`` in the same clause) shrink it further;
:func:`minimize` takes care of whatever equivalences remain.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .syntax import (
    And, Always, Bottom, Eventually, Lam, Next, NotProp, Or, Prop, Top, Until,
    WeakNext, parse_prop, print_formula, subformulas,
)
from .theory import eval_lambda

__all__ = [
    "Dfa", "RunResult", "CompilationError", "DEFAULT_STATE_CAP",
    "ltlf_eval", "ltlfmt_eval", "progress", "empty_suffix_accepts",
    "compile_dfa", "minimize", "run", "accepts", "to_json", "from_json", "to_dot",
]

DEFAULT_STATE_CAP = 4096


class CompilationError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# semantics oracles

def _holds(node, t: int, n: int, leaf: Callable, memo: dict) -> bool:
    key = (id(node), t)
    if key in memo:
        return memo[key]
    if isinstance(node, Top):
        r = True
    elif isinstance(node, Bottom):
        r = False
    elif isinstance(node, (Prop, NotProp, Lam)):
        r = leaf(node, t)
    elif isinstance(node, And):
        r = _holds(node.left, t, n, leaf, memo) and _holds(node.right, t, n, leaf, memo)
    elif isinstance(node, Or):
        r = _holds(node.left, t, n, leaf, memo) or _holds(node.right, t, n, leaf, memo)
    elif isinstance(node, Next):
        r = t + 1 < n and _holds(node.arg, t + 1, n, leaf, memo)
    elif isinstance(node, WeakNext):
        r = t + 1 >= n or _holds(node.arg, t + 1, n, leaf, memo)
    elif isinstance(node, Until):
        r = any(_holds(node.right, j, n, leaf, memo)
                and all(_holds(node.left, k, n, leaf, memo) for k in range(t, j))
                for j in range(t, n))
    elif isinstance(node, Eventually):
        r = any(_holds(node.arg, j, n, leaf, memo) for j in range(t, n))
    elif isinstance(node, Always):
        r = all(_holds(node.arg, j, n, leaf, memo) for j in range(t, n))
    else:
        raise TypeError(f"not a temporal formula: {node!r}")
    memo[key] = r
    return r


def ltlf_eval(phi, w: Sequence[int], t: int = 0) -> bool:
    """Finite-trace satisfaction ``(w, t) |= phi`` for a propositional formula.

    ``w`` is a sequence of letter bitmasks.  Direct transcription of the
    semantics; used as the reference oracle.
    """
    n = len(w)
    if n == 0:
        raise ValueError("LTLf semantics is defined on nonempty traces")
    if not 0 <= t < n:
        raise IndexError(f"position {t} outside trace of length {n}")
    w = [int(x) for x in w]

    def leaf(node, i):
        if isinstance(node, Prop):
            return bool(w[i] >> node.index & 1)
        if isinstance(node, NotProp):
            return not (w[i] >> node.index & 1)
        raise TypeError("first-order leaf in a propositional formula; abstract it first")

    return _holds(phi, t, n, leaf, {})


def ltlfmt_eval(phi, trace, kappa: Mapping[str, float], t: int = 0) -> bool:
    """Satisfaction of a resolved first-order temporal formula on a numeric trace.

    Atoms are evaluated directly on each state; no abstraction is involved.
    """
    states = np.asarray(trace, dtype=float)
    n = len(states)
    if n == 0:
        raise ValueError("LTLfMT semantics is defined on nonempty traces")

    def leaf(node, i):
        if isinstance(node, Lam):
            return eval_lambda(node.body, states[i], kappa)
        raise TypeError("propositional letter in a first-order formula")

    return _holds(phi, t, n, leaf, {})


# --------------------------------------------------------------------------
# residuals

TRUE = frozenset([frozenset()])
FALSE: frozenset = frozenset()


def _minimal(clauses) -> frozenset:
    clauses = sorted(set(clauses), key=len)
    kept: list[frozenset] = []
    for c in clauses:
        if not any(k <= c for k in kept):
            kept.append(c)
    return frozenset(kept)


def _or(a: frozenset, b: frozenset) -> frozenset:
    if a == TRUE or b == TRUE:
        return TRUE
    if not a:
        return b
    if not b:
        return a
    return _minimal(a | b)


class _Closure:
    """Interned subformulas of one formula plus memoized progression."""

    def __init__(self, phi):
        self.nodes = subformulas(phi)
        for extra in (Top(), Bottom()):
            if extra not in self.nodes:
                self.nodes.append(extra)
        self.ids = {id(n): i for i, n in enumerate(self.nodes)}
        self.by_value = {n: i for i, n in enumerate(self.nodes)}
        self.top = self.by_value[Top()]
        self.bottom = self.by_value[Bottom()]
        self.memo: dict = {}

    def nid(self, node) -> int:
        i = self.ids.get(id(node))
        if i is None:
            i = self.by_value[node]
        return i

    # obligations are ints: 2*node_id for X, 2*node_id + 1 for WX
    def strong(self, i: int) -> int:
        return 2 * i

    def _clause(self, atoms) -> frozenset | None:
        atoms = set(atoms)
        has_strong = any(a % 2 == 0 for a in atoms)
        if has_strong:
            atoms = {a - 1 if a % 2 else a for a in atoms}
            if 2 * self.bottom in atoms:
                return None
            if len(atoms) > 1:
                atoms.discard(2 * self.top)
        else:
            atoms.discard(2 * self.top + 1)
            if 2 * self.bottom + 1 in atoms:
                atoms = {2 * self.bottom + 1}
        return frozenset(atoms)

    def _and(self, a: frozenset, b: frozenset) -> frozenset:
        if not a or not b:
            return FALSE
        if a == TRUE:
            return b
        if b == TRUE:
            return a
        out = []
        for x in a:
            for y in b:
                c = self._clause(x | y)
                if c is not None:
                    out.append(c)
        return _minimal(out)

    def wrap(self, node, weak: bool) -> frozenset:
        """Obligation ``X node`` / ``WX node`` as a residual."""
        if isinstance(node, And):
            return self._and(self.wrap(node.left, weak), self.wrap(node.right, weak))
        if isinstance(node, Or):
            return _or(self.wrap(node.left, weak), self.wrap(node.right, weak))
        if isinstance(node, Top) and weak:
            return TRUE
        if isinstance(node, Bottom) and not weak:
            return FALSE
        c = self._clause([2 * self.nid(node) + int(weak)])
        return FALSE if c is None else frozenset([c])

    def progress(self, node, nu: int) -> frozenset:
        key = (self.nid(node), nu)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        if isinstance(node, Top):
            r = TRUE
        elif isinstance(node, Bottom):
            r = FALSE
        elif isinstance(node, Prop):
            r = TRUE if nu >> node.index & 1 else FALSE
        elif isinstance(node, NotProp):
            r = FALSE if nu >> node.index & 1 else TRUE
        elif isinstance(node, And):
            r = self._and(self.progress(node.left, nu), self.progress(node.right, nu))
        elif isinstance(node, Or):
            r = _or(self.progress(node.left, nu), self.progress(node.right, nu))
        elif isinstance(node, Next):
            r = self.wrap(node.arg, weak=False)
        elif isinstance(node, WeakNext):
            r = self.wrap(node.arg, weak=True)
        elif isinstance(node, Until):
            r = _or(self.progress(node.right, nu),
                    self._and(self.progress(node.left, nu), self.wrap(node, weak=False)))
        elif isinstance(node, Eventually):
            r = _or(self.progress(node.arg, nu), self.wrap(node, weak=False))
        elif isinstance(node, Always):
            r = self._and(self.progress(node.arg, nu), self.wrap(node, weak=True))
        elif isinstance(node, Lam):
            raise TypeError("first-order formula inside a propositional formula; abstract it first")
        else:
            raise TypeError(f"not a temporal formula: {node!r}")
        self.memo[key] = r
        return r

    def step(self, residual: frozenset, nu: int) -> frozenset:
        """Consume one letter: every obligation is discharged at the new position."""
        out = FALSE
        for clause in residual:
            acc = TRUE
            for a in sorted(clause):
                acc = self._and(acc, self.progress(self.nodes[a // 2], nu))
                if not acc:
                    break
            out = _or(out, acc)
            if out == TRUE:
                break
        return out

    @staticmethod
    def accepts_empty(residual: frozenset) -> bool:
        return any(all(a % 2 for a in clause) for clause in residual)

    def to_formula(self, residual: frozenset):
        if residual == TRUE:
            return Top()
        if not residual:
            return Bottom()
        disjuncts = []
        for clause in residual:
            parts = sorted(
                ((WeakNext if a % 2 else Next)(self.nodes[a // 2]) for a in clause),
                key=print_formula)
            conj = parts[0]
            for p in parts[1:]:
                conj = And(conj, p)
            disjuncts.append(conj)
        disjuncts.sort(key=print_formula)
        out = disjuncts[0]
        for d in disjuncts[1:]:
            out = Or(out, d)
        return out

    def initial(self, phi) -> frozenset:
        return self.wrap(phi, weak=empty_suffix_accepts(phi))


def empty_suffix_accepts(psi) -> bool:
    """Whether ``psi`` is considered satisfied by the empty suffix.

    Strong obligations (``X``, ``U``, ``F``, letters) fail, weak ones
    (``WX``, ``G``) succeed.
    """
    if isinstance(psi, Top):
        return True
    if isinstance(psi, (Bottom, Prop, NotProp, Next, Until, Eventually, Lam)):
        return False
    if isinstance(psi, (WeakNext, Always)):
        return True
    if isinstance(psi, And):
        return empty_suffix_accepts(psi.left) and empty_suffix_accepts(psi.right)
    if isinstance(psi, Or):
        return empty_suffix_accepts(psi.left) or empty_suffix_accepts(psi.right)
    raise TypeError(f"not a temporal formula: {psi!r}")


def progress(psi, nu: int):
    """Residual obligation after reading letter set ``nu`` at the current position.

    ``psi`` is evaluated at the current position; the result constrains the
    rest of the trace and is expressed with ``X``/``WX`` obligations, e.g.
    ``progress(F p, {})`` is ``X F p``.
    """
    closure = _Closure(psi)
    return closure.to_formula(closure.progress(psi, int(nu)))


# --------------------------------------------------------------------------
# DFA

@dataclass
class Dfa:
    """Complete DFA over the alphabet of letter bitmasks ``0 .. 2**num_letters - 1``."""
    num_letters: int
    initial: int
    accepting: frozenset
    delta: np.ndarray
    residuals: list = field(default_factory=list)
    letters: tuple = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=np.int64)
        self.accepting = frozenset(int(q) for q in self.accepting)
        n = self.delta.shape[0]
        if self.delta.shape != (n, 1 << self.num_letters):
            raise ValueError(f"transition table shape {self.delta.shape} does not match "
                             f"{n} states x 2^{self.num_letters} letters")
        if n and (self.delta.min() < 0 or self.delta.max() >= n):
            raise ValueError("transition target out of range")
        if not 0 <= self.initial < max(n, 1) or not all(0 <= q < n for q in self.accepting):
            raise ValueError("initial/accepting state out of range")

    @property
    def num_states(self) -> int:
        return self.delta.shape[0]

    @property
    def alphabet_size(self) -> int:
        """Number of labels, ``2**num_letters``."""
        return self.delta.shape[1]

    @property
    def states(self) -> range:
        return range(self.num_states)

    def is_accepting(self, q: int) -> bool:
        return q in self.accepting

    def step(self, q: int, nu: int) -> int:
        return int(self.delta[q, nu])


def compile_dfa(phi_prime, table=None, *, num_letters: int | None = None,
                state_cap: int = DEFAULT_STATE_CAP, check_closure: bool = True) -> Dfa:
    """Breadth-first construction of the DFA of a propositional formula.

    ``table`` (a :class:`~tlmt.abstraction.LetterTable`) fixes the alphabet;
    without it ``num_letters`` or the highest letter index is used.
    """
    if table is not None:
        k = len(table)
        letters = tuple(entry["formula"] for entry in table.to_json())
    else:
        used = [n.index for n in subformulas(phi_prime) if isinstance(n, (Prop, NotProp))]
        k = num_letters if num_letters is not None else (max(used) + 1 if used else 0)
        letters = ()
    for n in subformulas(phi_prime):
        if isinstance(n, (Prop, NotProp)) and n.index >= k:
            raise CompilationError(f"letter p{n.index} outside alphabet of {k} letters")
    closure = _Closure(phi_prime)
    allowed = {2 * i for i in range(len(closure.nodes))} | {2 * i + 1 for i in range(len(closure.nodes))}
    start = closure.initial(phi_prime)
    index = {start: 0}
    order = [start]
    rows: list[list[int]] = []
    queue = deque([start])
    while queue:
        r = queue.popleft()
        row = []
        for nu in range(1 << k):
            s = closure.step(r, nu)
            if check_closure:
                assert all(a in allowed for c in s for a in c), "residual left the subformula closure"
            j = index.get(s)
            if j is None:
                if len(order) >= state_cap:
                    raise CompilationError(
                        f"DFA exceeds the state cap of {state_cap} states")
                j = index[s] = len(order)
                order.append(s)
                queue.append(s)
            row.append(j)
        rows.append(row)
    accepting = {i for i, r in enumerate(order) if closure.accepts_empty(r)}
    return Dfa(
        num_letters=k, initial=0, accepting=frozenset(accepting),
        delta=np.array(rows, dtype=np.int64).reshape(len(order), 1 << k),
        residuals=[closure.to_formula(r) for r in order], letters=letters,
        metadata={"states_before_minimization": len(order)},
    )


def _reachable(d: Dfa) -> list[int]:
    seen = {d.initial}
    order = [d.initial]
    queue = deque([d.initial])
    while queue:
        q = queue.popleft()
        for nxt in d.delta[q]:
            nxt = int(nxt)
            if nxt not in seen:
                seen.add(nxt)
                order.append(nxt)
                queue.append(nxt)
    return order


def minimize(d: Dfa) -> Dfa:
    """Language-equivalent minimal DFA by partition refinement.

    Unreachable states are dropped and states renumbered in breadth-first
    order from the initial state.  A merged block keeps the residual of its
    lowest-numbered member.
    """
    reach = _reachable(d)
    sub = np.array(sorted(reach))
    remap = {int(q): i for i, q in enumerate(sub)}
    delta = np.vectorize(remap.__getitem__, otypes=[np.int64])(d.delta[sub]) if len(sub) else d.delta
    acc = np.array([int(q) in d.accepting for q in sub], dtype=np.int64)
    blocks = acc.copy()
    n_blocks = len(np.unique(blocks))
    while True:
        sig = np.column_stack([blocks, blocks[delta]])
        _, new = np.unique(sig, axis=0, return_inverse=True)
        new = new.reshape(-1)
        count = int(new.max()) + 1
        if count == n_blocks:
            blocks = new
            break
        blocks, n_blocks = new, count
    # breadth-first renumbering of blocks
    init_block = blocks[remap[d.initial]]
    rep = {}
    for i in range(len(sub)):
        rep.setdefault(int(blocks[i]), i)
    number = {int(init_block): 0}
    queue = deque([int(init_block)])
    while queue:
        b = queue.popleft()
        for nxt in blocks[delta[rep[b]]]:
            nxt = int(nxt)
            if nxt not in number:
                number[nxt] = len(number)
                queue.append(nxt)
    by_number = sorted(number, key=number.get)
    new_delta = np.array([[number[int(blocks[t])] for t in delta[rep[b]]] for b in by_number],
                         dtype=np.int64).reshape(len(by_number), delta.shape[1])
    accepting = {number[b] for b in by_number if acc[rep[b]]}
    residuals = [d.residuals[int(sub[rep[b]])] if d.residuals else None for b in by_number]
    meta = dict(d.metadata)
    meta.setdefault("states_before_minimization", d.num_states)
    return Dfa(d.num_letters, 0, frozenset(accepting), new_delta, residuals, d.letters, meta)


class RunResult(NamedTuple):
    final: int
    accepted: bool
    first_accept_index: int | None


def run(d: Dfa, w: Sequence[int]) -> RunResult:
    """Feed a trace of bitmasks from the initial state.

    ``first_accept_index`` is the earliest position after which the run is in
    an accepting state (0 for an empty trace whose initial state accepts).
    """
    q = d.initial
    limit = 1 << d.num_letters
    first = 0 if (len(w) == 0 and q in d.accepting) else None
    for i, nu in enumerate(w):
        nu = int(nu)
        if not 0 <= nu < limit:
            raise ValueError(f"label {nu} does not fit {d.num_letters} letters")
        q = int(d.delta[q, nu])
        if first is None and q in d.accepting:
            first = i
    return RunResult(q, q in d.accepting, first)


def accepts(d: Dfa, w: Sequence[int]) -> bool:
    return run(d, w).accepted


# --------------------------------------------------------------------------
# serialization

def to_json(d: Dfa, letters: Sequence[str] | None = None) -> str:
    texts = list(letters if letters is not None else d.letters)
    texts += [""] * (d.num_letters - len(texts))
    doc = {
        "letters": [{"name": f"p{i}", "formula": texts[i]} for i in range(d.num_letters)],
        "num_states": d.num_states,
        "initial": d.initial,
        "accepting": sorted(d.accepting),
        "transitions": [{"from": q, "on": nu, "to": int(d.delta[q, nu])}
                        for q in range(d.num_states) for nu in range(1 << d.num_letters)],
        "residuals": [print_formula(r) if r is not None else None for r in d.residuals],
        "metadata": d.metadata,
    }
    return json.dumps(doc, indent=2)


def from_json(text: str) -> Dfa:
    doc = json.loads(text)
    k = len(doc["letters"])
    n = doc["num_states"]
    delta = np.full((n, 1 << k), -1, dtype=np.int64)
    for tr in doc["transitions"]:
        delta[tr["from"], tr["on"]] = tr["to"]
    if (delta < 0).any():
        raise ValueError("transition table in JSON is not total")
    residuals = [parse_prop(r) if r else None for r in doc.get("residuals", [])]
    return Dfa(k, doc["initial"], frozenset(doc["accepting"]), delta, residuals,
               tuple(entry["formula"] for entry in doc["letters"]), doc.get("metadata", {}))


def _letter_set(nu: int, k: int) -> str:
    return "{" + ",".join(f"p{i}" for i in range(k) if nu >> i & 1) + "}"


def to_dot(d: Dfa, name: str = "dfa") -> str:
    """Graphviz source; parallel edges are merged with all their letter sets as label."""
    lines = [f"digraph {name} {{", "  rankdir=LR;", '  start [shape=point];']
    for q in d.states:
        shape = "doublecircle" if q in d.accepting else "circle"
        lines.append(f'  q{q} [shape={shape}, label="{q}"];')
    lines.append(f"  start -> q{d.initial};")
    for q in d.states:
        targets: dict[int, list[int]] = {}
        for nu in range(1 << d.num_letters):
            targets.setdefault(int(d.delta[q, nu]), []).append(nu)
        for t, nus in targets.items():
            label = ", ".join(_letter_set(nu, d.num_letters) for nu in nus)
            lines.append(f'  q{q} -> q{t} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
