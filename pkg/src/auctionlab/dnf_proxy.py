"""The classical benchmark proxy: proper learning of an XOR valuation.

The proxy challenges its hypothesis with a demand query; whenever the
person objects with a preferred bundle, a greedy trim pass shrinks that
bundle to an atomic one carrying the same value, which is then added to
the hypothesis. Against a person answering consistently from a monotone
valuation, the hypothesis converges to the exact valuation.
"""

from __future__ import annotations

from typing import Protocol

from .core import (
    EMPTY_BUNDLE,
    Bundle,
    DemandResponse,
    Money,
    PriceFunction,
    XorBid,
)
from .wdp import lindahl_prices


class PersonChannel(Protocol):
    """Query interface to a (real or simulated) person.

    Every call to one of the four answer methods counts as exactly one
    person interaction and increments the counter by one.
    """

    def answer_value(self, bundle: Bundle) -> Money:
        ...

    def answer_demand(self, prices: PriceFunction, bundle: Bundle) -> DemandResponse:
        ...

    def answer_natural(self, question: str) -> str:
        ...

    def answer_equivalence(
        self, hypothesis: XorBid, tolerance: Money
    ) -> list[tuple[Bundle, Money]]:
        ...

    @property
    def interactions(self) -> int:
        ...


def learn_step(person: PersonChannel, bundle: Bundle) -> tuple[Bundle, Money]:
    """Trim a counterexample bundle to an atomic bundle of equal value.

    Queries the bundle's value once, then walks its items in ascending
    index order, dropping any item whose removal leaves the value intact.
    The stored value is reused across removals. Uses at most 1 + |bundle|
    value queries.
    """
    nu = person.answer_value(bundle)
    trimmed = bundle
    for i in bundle.indices():
        without = trimmed.without_good(i)
        if person.answer_value(without) == nu:
            trimmed = without
    return trimmed, nu


class DnfProxy:
    """Message-subroutine wrapper around the demand-query learner."""

    def __init__(self, person: PersonChannel, n_goods: int):
        self.person = person
        self.candidate = XorBid.empty(n_goods)

    @property
    def interactions(self) -> int:
        return self.person.interactions

    def handle_message(self, bundle: Bundle, prices: PriceFunction) -> tuple[int, XorBid]:
        response = self.person.answer_demand(prices, bundle)
        if response.satisfied:
            return 1, self.candidate
        atom, value = learn_step(self.person, response.bundle)
        self.candidate = self.candidate.insert(atom, value)
        return 0, self.candidate


def learn_xor_full(person: PersonChannel, n_goods: int, max_rounds: int = 10_000) -> XorBid:
    """Learn the person's full valuation with demand queries at hypothesis prices.

    Each round prices every bundle at the hypothesis's own induced value
    and asks whether the person is happy with the previously demanded
    bundle at those prices. Satisfaction means the hypothesis matches the
    valuation everywhere; otherwise the demanded counterexample is trimmed
    and added. For a person with |B| atoms this takes at most |B| demand
    queries and |B| * (n+1) value queries.
    """
    hypothesis = XorBid.empty(n_goods)
    probe = EMPTY_BUNDLE
    for _ in range(max_rounds):
        response = person.answer_demand(lindahl_prices(hypothesis, 0), probe)
        if response.satisfied:
            return hypothesis
        atom, value = learn_step(person, response.bundle)
        updated = hypothesis.insert(atom, value)
        if updated == hypothesis:
            raise RuntimeError("learning stalled: counterexample added no information")
        hypothesis = updated
        probe = response.bundle
    raise RuntimeError("learning did not terminate within the round limit")
