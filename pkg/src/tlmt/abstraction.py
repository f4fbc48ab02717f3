"""Propositionalization: atoms become letters, numeric traces become bitmask traces.

Letter ``i`` is bit ``i`` of a label.  Syntactically equal atoms (up to
:func:`~tlmt.syntax.normalize_key`) share a letter; letters are numbered by
first occurrence in a depth-first walk of the formula.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .syntax import (
    And, Atom, LAnd, Lam, LOr, NotAtom, NotProp, Or, Prop, children, normalize_key,
    print_lambda, rebuild,
)
from .theory import compile_lambda, substitute_constants

__all__ = ["LetterTable", "abstract_formula", "label_state", "abstract_trace"]


@dataclass(frozen=True)
class LetterTable:
    atoms: tuple[Atom, ...] = ()
    _index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        index = {}
        for i, a in enumerate(self.atoms):
            key = normalize_key(a)
            if key in index:
                raise ValueError(f"atom {print_lambda(a)} appears twice in letter table")
            index[key] = i
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def names(self) -> list[str]:
        return [f"p{i}" for i in range(len(self.atoms))]

    @property
    def formulas(self) -> list[str]:
        return [print_lambda(a) for a in self.atoms]

    def letter_of(self, atom: Atom) -> int:
        return self._index[normalize_key(atom)]

    @cached_property
    def _evaluators(self):
        return [compile_lambda(a) for a in self.atoms]

    def label(self, mu, kappa: Mapping[str, float]) -> int:
        bits = 0
        for i, f in enumerate(self._evaluators):
            if f(mu, kappa):
                bits |= 1 << i
        return bits

    def label_batch(self, states, kappa: Mapping[str, float]) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        if states.ndim != 2:
            raise ValueError("expected a 2-D array of states")
        bits = np.zeros(len(states), dtype=np.int64)
        for i, f in enumerate(self._evaluators):
            truth = np.broadcast_to(np.asarray(f(states, kappa), dtype=bool), bits.shape)
            bits |= truth.astype(np.int64) << i
        return bits

    def substitute(self, delta: Mapping[str, float]) -> "LetterTable":
        """Same letters, with constants of ``delta`` replaced by literals.

        Letter identity is positional, so two payloads that coincide after
        substitution still keep separate letters.
        """
        new = tuple(substitute_constants(a, delta, warn_unknown=False) for a in self.atoms)
        table = object.__new__(LetterTable)
        object.__setattr__(table, "atoms", new)
        object.__setattr__(table, "_index", dict(self._index))
        return table

    def to_json(self) -> list[dict]:
        return [{"name": n, "formula": f} for n, f in zip(self.names, self.formulas)]


def abstract_formula(phi):
    """Replace every atom of ``phi`` by a letter.

    Returns ``(prop_formula, LetterTable)``.  First-order ``&&``/``||``
    become temporal ``And``/``Or`` at the same position, and negated atoms
    become negated letters.
    """
    order: list[Atom] = []
    index: dict = {}

    def letter(a: Atom) -> int:
        key = normalize_key(a)
        if key not in index:
            index[key] = len(order)
            order.append(a)
        return index[key]

    def lam(f):
        if isinstance(f, Atom):
            return Prop(letter(f))
        if isinstance(f, NotAtom):
            return NotProp(letter(f.atom))
        if isinstance(f, LAnd):
            return And(lam(f.left), lam(f.right))
        if isinstance(f, LOr):
            return Or(lam(f.left), lam(f.right))
        raise TypeError(f"not a first-order formula: {f!r}")

    def go(node):
        if isinstance(node, Lam):
            return lam(node.body)
        kids = children(node)
        if not kids:
            return node
        return rebuild(node, [go(c) for c in kids])

    prop = go(phi)
    return prop, LetterTable(tuple(order))


def label_state(table: LetterTable, mu, kappa: Mapping[str, float]) -> int:
    """Bitmask of the letters true in state ``mu``."""
    return table.label(mu, kappa)


def abstract_trace(table: LetterTable, trace: Sequence, kappa: Mapping[str, float]) -> np.ndarray:
    """Pointwise :func:`label_state` over a trace of states."""
    states = np.asarray(trace, dtype=float)
    if len(states) == 0:
        return np.zeros(0, dtype=np.int64)
    return table.label_batch(states, kappa)
