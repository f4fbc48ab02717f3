"""Ground evaluation of quantifier-free NRA terms and first-order formulas.

For fully instantiated states the decision problem is plain evaluation, so
this module is the labeling backend.  Every evaluator accepts either a single
state (1-D array or sequence) or a batch of states (2-D array, one state per
row); in the batch case results are arrays over the rows.

Arithmetic is IEEE double precision; comparisons are exact.  Non-finite
intermediate values raise :class:`NonFiniteError`.
"""

from __future__ import annotations

import math
import operator
import warnings
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np

from .syntax import (
    Abs, Add, Atom, Const, LAnd, LOr, Mul, Name, Neg, NotAtom, Num, Pow, Sub,
    Var, children, rebuild,
)

__all__ = [
    "EvaluationError", "MissingConstantError", "NonFiniteError",
    "eval_term", "eval_lambda", "compile_term", "compile_lambda",
    "substitute_constants", "check_assignment",
]


class EvaluationError(ValueError):
    pass


class MissingConstantError(EvaluationError, KeyError):
    def __str__(self):
        return self.args[0]


class NonFiniteError(EvaluationError, ArithmeticError):
    pass


_CMP = {
    "<": operator.lt, "<=": operator.le, "=": operator.eq,
    "!=": operator.ne, ">=": operator.ge, ">": operator.gt,
}


def _finite(v):
    if isinstance(v, float):
        ok = math.isfinite(v)
    else:
        ok = bool(np.all(np.isfinite(v)))
    if not ok:
        raise NonFiniteError("non-finite intermediate value during term evaluation")
    return v


def _binary(op, left, right):
    def f(mu, kappa):
        return _finite(op(left(mu, kappa), right(mu, kappa)))
    return f


@lru_cache(maxsize=4096)
def compile_term(t) -> Callable:
    """Turn a resolved term into ``f(mu, kappa) -> value``."""
    if isinstance(t, Num):
        value = float(t.value)
        return lambda mu, kappa: value
    if isinstance(t, Var):
        i = t.index

        def var(mu, kappa):
            if isinstance(mu, np.ndarray) and mu.ndim > 1:
                return mu[..., i]
            return float(mu[i])
        return var
    if isinstance(t, Const):
        name = t.name

        def const(mu, kappa):
            try:
                return float(kappa[name])
            except KeyError:
                raise MissingConstantError(f"no value for constant {name!r}") from None
        return const
    if isinstance(t, Name):
        raise EvaluationError(f"identifier {t.name!r} is unresolved")
    if isinstance(t, Neg):
        arg = compile_term(t.arg)
        return lambda mu, kappa: -arg(mu, kappa)
    if isinstance(t, Abs):
        arg = compile_term(t.arg)
        return lambda mu, kappa: abs(arg(mu, kappa))
    if isinstance(t, Add):
        return _binary(operator.add, compile_term(t.left), compile_term(t.right))
    if isinstance(t, Sub):
        return _binary(operator.sub, compile_term(t.left), compile_term(t.right))
    if isinstance(t, Mul):
        return _binary(operator.mul, compile_term(t.left), compile_term(t.right))
    if isinstance(t, Pow):
        base, n = compile_term(t.base), t.exponent

        def power(mu, kappa):
            b = base(mu, kappa)
            try:
                return _finite(b ** n)
            except OverflowError:
                raise NonFiniteError("overflow in power") from None
        return power
    raise TypeError(f"not a term: {t!r}")


@lru_cache(maxsize=4096)
def compile_lambda(f) -> Callable:
    """Turn a resolved first-order formula into ``f(mu, kappa) -> bool``."""
    if isinstance(f, Atom):
        left, right, cmp = compile_term(f.left), compile_term(f.right), _CMP[f.op]
        return lambda mu, kappa: cmp(left(mu, kappa), right(mu, kappa))
    if isinstance(f, NotAtom):
        inner = compile_lambda(f.atom)
        return lambda mu, kappa: np.logical_not(inner(mu, kappa))
    if isinstance(f, LAnd):
        left, right = compile_lambda(f.left), compile_lambda(f.right)
        return lambda mu, kappa: np.logical_and(left(mu, kappa), right(mu, kappa))
    if isinstance(f, LOr):
        left, right = compile_lambda(f.left), compile_lambda(f.right)
        return lambda mu, kappa: np.logical_or(left(mu, kappa), right(mu, kappa))
    raise TypeError(f"not a first-order formula: {f!r}")


def eval_term(t, mu, kappa: Mapping[str, float] | None = None):
    return compile_term(t)(mu, kappa or {})


def eval_lambda(f, mu, kappa: Mapping[str, float] | None = None):
    """Truth of ``f`` in state ``mu`` (or per row of a batch of states)."""
    out = compile_lambda(f)(mu, kappa or {})
    if isinstance(out, np.ndarray) and out.ndim > 0:
        return out.astype(bool)
    return bool(out)


def substitute_constants(f, delta: Mapping[str, float], *, warn_unknown: bool = True):
    """Replace constants named in ``delta`` by numeric literals, at any layer.

    Names of ``delta`` absent from ``f`` are ignored (with a warning unless
    ``warn_unknown`` is false).
    """
    if not delta:
        return f
    used: set[str] = set()

    def go(node):
        if isinstance(node, (Const, Name)) and node.name in delta:
            used.add(node.name)
            return Num(float(delta[node.name]))
        kids = children(node)
        if not kids:
            return node
        new = [go(c) for c in kids]
        if all(a is b for a, b in zip(new, kids)):
            return node
        return rebuild(node, new)

    out = go(f)
    unknown = set(delta) - used
    if unknown and warn_unknown:
        warnings.warn(f"constants not present in formula: {sorted(unknown)}", stacklevel=2)
    return out


def check_assignment(mu, arity: int) -> np.ndarray:
    """Validate a variable assignment: right length, all entries finite."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape[-1] != arity:
        raise EvaluationError(f"assignment has {mu.shape[-1]} entries, signature has {arity}")
    if not np.all(np.isfinite(mu)):
        raise EvaluationError("assignment contains non-finite values")
    return mu
