"""Predicates and AND/OR expressions over them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Callable, Sequence, Union

from .geom import Rect

RATIONAL_GRANULARITY = 10**12


def rationalize(x: float | int | Fraction) -> Fraction:
    """Exact rational for a query endpoint, snapped at 1e-12 granularity."""
    if isinstance(x, Rational):
        return Fraction(x)
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot rationalize {x}")
    return Fraction(x).limit_denominator(RATIONAL_GRANULARITY)


class ThetaError(ValueError):
    pass


def check_theta(a: float, b: float) -> tuple[Fraction, Fraction]:
    fa, fb = rationalize(a), rationalize(b)
    if not 0 <= fa <= fb <= 1:
        raise ThetaError(f"need 0 <= a <= b <= 1, got [{a}, {b}]")
    return fa, fb


@dataclass(frozen=True)
class PtilePred:
    """``a <= |rect ∩ P| / |P| <= b``."""

    rect: Rect
    a: float
    b: float = 1.0

    def __post_init__(self) -> None:
        check_theta(self.a, self.b)


@dataclass(frozen=True)
class PrefPred:
    """k-th largest of ``<p, v>`` over ``P`` is at least ``a``."""

    v: tuple[float, ...]
    k: int
    a: float

    def __post_init__(self) -> None:
        v = tuple(float(x) for x in self.v)
        if abs(math.sqrt(sum(x * x for x in v)) - 1.0) > 1e-9:
            raise ValueError("preference vector must have unit length")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        object.__setattr__(self, "v", v)


Pred = Union[PtilePred, PrefPred]


@dataclass(frozen=True)
class And:
    children: tuple

    def __init__(self, *children):
        object.__setattr__(self, "children", tuple(children))


@dataclass(frozen=True)
class Or:
    children: tuple

    def __init__(self, *children):
        object.__setattr__(self, "children", tuple(children))


Expr = Union[PtilePred, PrefPred, And, Or]


def combine(preds: Sequence[Pred], how: str) -> Expr:
    if not preds:
        raise ValueError("need at least one predicate")
    if len(preds) == 1:
        return preds[0]
    if how == "and":
        return And(*preds)
    if how == "or":
        return Or(*preds)
    raise ValueError(f"unknown combinator {how!r}")


def evaluate(expr: Expr, leaf: Callable[[Pred], bool]) -> bool:
    if isinstance(expr, And):
        return all(evaluate(c, leaf) for c in expr.children)
    if isinstance(expr, Or):
        return any(evaluate(c, leaf) for c in expr.children)
    return leaf(expr)


def to_dnf(expr: Expr) -> list[tuple[Pred, ...]]:
    """Disjunction of conjunctions, each conjunction a tuple of predicates."""
    if isinstance(expr, Or):
        return [t for c in expr.children for t in to_dnf(c)]
    if isinstance(expr, And):
        terms: list[tuple[Pred, ...]] = [()]
        for c in expr.children:
            terms = [t + u for t in terms for u in to_dnf(c)]
        return terms
    return [(expr,)]


def leaves(expr: Expr) -> list[Pred]:
    if isinstance(expr, (And, Or)):
        return [p for c in expr.children for p in leaves(c)]
    return [expr]
