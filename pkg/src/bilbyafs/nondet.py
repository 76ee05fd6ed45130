"""Nondeterministic computations as symbolic outcome trees.

A tree denotes a set of values.  ``Return`` is a singleton, ``Choice`` is
union, ``Bind`` is the union of the continuation over every inner outcome,
and the two ``Select`` leaves pick from a finite collection or from a set
described by a membership predicate (possibly infinite).

Three ways to evaluate a tree:

* :func:`enumerate_outcomes` lists outcomes under a budget and says whether
  the listing is complete.
* :func:`contains` decides membership exactly.  Predicate leaves answer by
  predicate; a ``Bind`` over a predicate leaf needs an ``invert`` function
  that maps a target outcome back to the inner values that could produce it.
* :func:`sample` picks one outcome deterministically from a seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any, Callable, Generic, Iterable, Iterator, Optional, TypeVar

T = TypeVar("T")
S = TypeVar("S")

__all__ = [
    "Outcomes",
    "Return",
    "Bind",
    "Choice",
    "SelectFinite",
    "SelectPredicate",
    "EnumBudget",
    "Enumeration",
    "MembershipUndecidable",
    "pure",
    "bind",
    "choice",
    "select",
    "select_where",
    "nondet_error",
    "empty",
    "enumerate_outcomes",
    "contains",
    "sample",
]


class MembershipUndecidable(Exception):
    """Raised when a Bind over a predicate leaf has no inverter."""


class Outcomes(Generic[T]):
    """Base class for outcome tree nodes.  Nodes are immutable."""

    __slots__ = ()

    def bind(self, cont, invert=None) -> "Outcomes":
        return Bind(self, cont, invert)

    def __or__(self, other: "Outcomes[T]") -> "Outcomes[T]":
        return Choice(self, other)


@dataclass(frozen=True, eq=False)
class Return(Outcomes[T]):
    value: T


@dataclass(frozen=True, eq=False)
class Bind(Outcomes[T]):
    inner: Outcomes[Any]
    cont: Callable[[Any], Outcomes[T]]
    # target outcome -> iterable of inner values that may produce it; must
    # return a superset of the true preimage for membership to stay exact
    invert: Optional[Callable[[T], Iterable[Any]]] = None


@dataclass(frozen=True, eq=False)
class Choice(Outcomes[T]):
    left: Outcomes[T]
    right: Outcomes[T]


@dataclass(frozen=True, eq=False)
class SelectFinite(Outcomes[T]):
    candidates: tuple

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("SelectFinite needs at least one candidate")


@dataclass(frozen=True, eq=False)
class SelectPredicate(Outcomes[T]):
    member: Callable[[Any], bool]
    sampler: Callable[[], Iterable[T]]
    description: str = ""
    # True when the sampler yields every member of the set
    complete: bool = False


@dataclass(frozen=True)
class EnumBudget:
    max_outcomes: int = 100_000
    max_predicate_samples: int = 4

    def __post_init__(self):
        if self.max_outcomes <= 0 or self.max_predicate_samples <= 0:
            raise ValueError("budget limits must be strictly positive")


@dataclass(frozen=True)
class Enumeration(Generic[T]):
    values: tuple
    truncated: bool

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


# -- constructors -----------------------------------------------------------


def pure(x: T) -> Outcomes[T]:
    return Return(x)


def bind(m: Outcomes[S], k: Callable[[S], Outcomes[T]],
         invert: Optional[Callable[[T], Iterable[S]]] = None) -> Outcomes[T]:
    return Bind(m, k, invert)


def choice(*alternatives: Outcomes[T]) -> Outcomes[T]:
    """Union of one or more trees."""
    if not alternatives:
        raise ValueError("choice needs at least one alternative")
    tree = alternatives[-1]
    for alt in reversed(alternatives[:-1]):
        tree = Choice(alt, tree)
    return tree


def select(candidates: Iterable[T]) -> Outcomes[T]:
    """Pick any element of a finite, non-empty collection.

    Duplicates are dropped, first occurrence wins the position.
    """
    seen = []
    for c in candidates:
        if c not in seen:
            seen.append(c)
    if not seen:
        raise ValueError("select over an empty candidate set")
    return SelectFinite(tuple(seen))


def select_where(member: Callable[[Any], bool], sampler: Callable[[], Iterable[T]],
                 description: str = "", complete: bool = False) -> Outcomes[T]:
    return SelectPredicate(member, sampler, description, complete)


def nondet_error(codes: Iterable[Any], build: Callable[[Any], T]) -> Outcomes[T]:
    return Bind(select(codes), lambda e: Return(build(e)))


def _never(_x: Any) -> bool:
    return False


def _nothing() -> Iterator[Any]:
    return iter(())


EMPTY: Outcomes[Any] = SelectPredicate(_never, _nothing, "empty", complete=True)


def empty() -> Outcomes[Any]:
    """The computation with no outcomes."""
    return EMPTY


# -- enumeration ------------------------------------------------------------


class _Flag:
    __slots__ = ("truncated",)

    def __init__(self):
        self.truncated = False


class _Dedup:
    """Membership set that tolerates unhashable values."""

    __slots__ = ("_hashed", "_other")

    def __init__(self):
        self._hashed = set()
        self._other = []

    def add(self, x) -> bool:
        try:
            if x in self._hashed:
                return False
            self._hashed.add(x)
            return True
        except TypeError:
            if x in self._other:
                return False
            self._other.append(x)
            return True


def _walk(node: Outcomes, samples: int, flag: _Flag) -> Iterator[Any]:
    if isinstance(node, Return):
        yield node.value
    elif isinstance(node, Choice):
        yield from _walk(node.left, samples, flag)
        yield from _walk(node.right, samples, flag)
    elif isinstance(node, SelectFinite):
        yield from node.candidates
    elif isinstance(node, SelectPredicate):
        it = iter(node.sampler())
        n = 0
        for x in it:
            if n == samples:
                flag.truncated = True
                return
            yield x
            n += 1
        if not node.complete:
            flag.truncated = True
    elif isinstance(node, Bind):
        seen = _Dedup()
        for r in _walk(node.inner, samples, flag):
            if seen.add(r):
                yield from _walk(node.cont(r), samples, flag)
    else:
        raise TypeError(f"not an outcome tree: {node!r}")


def enumerate_outcomes(m: Outcomes[T], budget: EnumBudget = EnumBudget()) -> Enumeration[T]:
    """List the outcomes of ``m`` without duplicates.

    ``truncated`` is False only when the listing is exactly the denoted set.
    """
    flag = _Flag()
    seen = _Dedup()
    out = []
    for x in _walk(m, budget.max_predicate_samples, flag):
        if seen.add(x):
            if len(out) == budget.max_outcomes:
                flag.truncated = True
                break
            out.append(x)
    return Enumeration(tuple(out), flag.truncated)


def _exact(node: Outcomes) -> Iterator[Any]:
    """All outcomes of a tree, or MembershipUndecidable on an open predicate leaf."""
    if isinstance(node, Return):
        yield node.value
    elif isinstance(node, Choice):
        yield from _exact(node.left)
        yield from _exact(node.right)
    elif isinstance(node, SelectFinite):
        yield from node.candidates
    elif isinstance(node, SelectPredicate):
        if not node.complete:
            raise MembershipUndecidable(
                f"cannot enumerate predicate leaf {node.description!r} exactly")
        yield from node.sampler()
    elif isinstance(node, Bind):
        seen = _Dedup()
        for r in _exact(node.inner):
            if seen.add(r):
                yield from _exact(node.cont(r))
    else:
        raise TypeError(f"not an outcome tree: {node!r}")


def contains(m: Outcomes[T], x: Any) -> bool:
    """Exact membership of ``x`` in the set denoted by ``m``."""
    if isinstance(m, Return):
        return m.value == x
    if isinstance(m, Choice):
        return contains(m.left, x) or contains(m.right, x)
    if isinstance(m, SelectFinite):
        return x in m.candidates
    if isinstance(m, SelectPredicate):
        return bool(m.member(x))
    if isinstance(m, Bind):
        if m.invert is not None:
            for r in m.invert(x):
                if contains(m.inner, r) and contains(m.cont(r), x):
                    return True
            return False
        seen = _Dedup()
        for r in _exact(m.inner):
            if seen.add(r) and contains(m.cont(r), x):
                return True
        return False
    raise TypeError(f"not an outcome tree: {m!r}")


# -- sampling ---------------------------------------------------------------

_SAMPLE_WINDOW = 8
_SAMPLE_BUDGET = EnumBudget(max_outcomes=512, max_predicate_samples=_SAMPLE_WINDOW)


def _sample(node: Outcomes, rng: random.Random) -> tuple[bool, Any]:
    if isinstance(node, Return):
        return True, node.value
    if isinstance(node, Choice):
        first, second = (node.left, node.right) if rng.random() < 0.5 else (node.right, node.left)
        found, x = _sample(first, rng)
        if found:
            return found, x
        return _sample(second, rng)
    if isinstance(node, SelectFinite):
        return True, rng.choice(node.candidates)
    if isinstance(node, SelectPredicate):
        window = []
        for x in node.sampler():
            window.append(x)
            if len(window) == _SAMPLE_WINDOW:
                break
        if not window:
            return False, None
        return True, rng.choice(window)
    if isinstance(node, Bind):
        inner = list(enumerate_outcomes(node.inner, _SAMPLE_BUDGET).values)
        rng.shuffle(inner)
        for r in inner:
            found, x = _sample(node.cont(r), rng)
            if found:
                return found, x
        return False, None
    raise TypeError(f"not an outcome tree: {node!r}")


def sample(m: Outcomes[T], seed: int) -> Optional[T]:
    """One outcome of ``m`` chosen by ``seed``, or None if none was found.

    Predicate leaves draw from the first few sampler values, so the result
    is always a member of the denoted set.
    """
    found, x = _sample(m, random.Random(seed))
    return x if found else None
