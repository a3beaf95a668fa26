"""Exact finitely-supported probability distributions over hashable values."""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Generic, Hashable, Iterable, Iterator, Mapping, TypeVar

T = TypeVar("T", bound=Hashable)
U = TypeVar("U", bound=Hashable)

ZERO = Fraction(0)
ONE = Fraction(1)
HALF = Fraction(1, 2)


class MassError(ValueError):
    """A weight is negative or the total mass differs from 1."""


def as_prob(value) -> Fraction:
    """Coerce to an exact Fraction and require it to lie in [0, 1]."""
    p = Fraction(value)
    if p < ZERO or p > ONE:
        raise ValueError(f"probability out of range [0, 1]: {p}")
    return p


class FinDist(Generic[T]):
    """Finite map from values to positive exact weights summing to 1.

    Zero weights are dropped and duplicate keys merged on construction, so
    two distributions are equal iff they have identical support and weights.
    """

    __slots__ = ("_weights",)

    def __init__(self, weights: Mapping[T, Fraction] | Iterable[tuple[T, Fraction]]):
        pairs = weights.items() if isinstance(weights, Mapping) else weights
        acc: dict[T, Fraction] = {}
        for value, weight in pairs:
            w = Fraction(weight)
            if w < ZERO:
                raise MassError(f"negative weight {w} for {value!r}")
            if w == ZERO:
                continue
            acc[value] = acc.get(value, ZERO) + w
        total = sum(acc.values(), ZERO)
        if total != ONE:
            raise MassError(f"total mass {total} != 1")
        self._weights = acc

    def items(self) -> list[tuple[T, Fraction]]:
        return list(self._weights.items())

    def support(self) -> set[T]:
        return set(self._weights)

    def prob(self, value: T) -> Fraction:
        return self._weights.get(value, ZERO)

    def __len__(self) -> int:
        return len(self._weights)

    def __iter__(self) -> Iterator[T]:
        return iter(self._weights)

    def __contains__(self, value: T) -> bool:
        return value in self._weights

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FinDist) and self._weights == other._weights

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        inner = ", ".join(f"{v!r}: {w}" for v, w in self._weights.items())
        return "FinDist({" + inner + "})"


def dirac(value: T) -> FinDist[T]:
    """Point mass at ``value``."""
    return FinDist({value: ONE})


def weighted_mix(branches: Iterable[tuple[Fraction, FinDist[T]]]) -> FinDist[T]:
    """Convex combination of distributions; branch weights must sum to 1."""
    branches = list(branches)
    total = ZERO
    acc: dict[T, Fraction] = {}
    for weight, dist in branches:
        w = Fraction(weight)
        if w < ZERO:
            raise MassError(f"negative branch weight {w}")
        total += w
        if w == ZERO:
            continue
        for value, q in dist.items():
            acc[value] = acc.get(value, ZERO) + w * q
    if total != ONE:
        raise MassError(f"branch weights sum to {total} != 1")
    return FinDist(acc)


def map_dist(dist: FinDist[T], fn: Callable[[T], U]) -> FinDist[U]:
    """Pushforward along ``fn``, merging keys that collide."""
    return FinDist([(fn(value), w) for value, w in dist.items()])


def bind_dist(dist: FinDist[T], kont: Callable[[T], FinDist[U]]) -> FinDist[U]:
    """Kleisli extension: mix ``kont(value)`` with weight ``dist(value)``."""
    acc: dict[U, Fraction] = {}
    for value, w in dist.items():
        for out, q in kont(value).items():
            acc[out] = acc.get(out, ZERO) + w * q
    return FinDist(acc)


def dist_eq(a: FinDist[T], b: FinDist[T]) -> bool:
    """Exact equality: same support, identical rational weights."""
    return a == b
