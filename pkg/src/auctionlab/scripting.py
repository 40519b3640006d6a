"""Deterministic stand-ins for people and language models.

ScriptedPerson answers every query exactly from a fixed XOR valuation, so
auctions and learners can be exercised and verified without any model.
PolicyBackend fills fixture misses from a deterministic policy function
and can export what it recorded as a fixture directory for replay.
"""

from __future__ import annotations

import random
from typing import Callable, Mapping, Sequence

from .core import (
    Bundle,
    DemandResponse,
    Money,
    PriceFunction,
    Scenario,
    XorBid,
    all_bundles,
    best_demanded,
    utility,
)
from .gateway import FixtureMissing, ScriptedBackend
from .sim_bidders import value_prompt_bindings


class ScriptedPerson:
    """A quasilinear person answering consistently from a known bid."""

    def __init__(self, bid: XorBid, natural_reply: str = "I mostly care about my favourite items."):
        self.bid = bid
        self.natural_reply = natural_reply
        self.interaction_count = 0
        self.value_queries = 0
        self.demand_queries = 0
        self.natural_queries = 0
        self.equivalence_queries = 0

    @property
    def interactions(self) -> int:
        return self.interaction_count

    @property
    def true_bid(self) -> XorBid:
        return self.bid

    def answer_value(self, bundle: Bundle) -> Money:
        self.interaction_count += 1
        self.value_queries += 1
        return self.bid.value(bundle)

    def answer_demand(self, prices: PriceFunction, bundle: Bundle) -> DemandResponse:
        self.interaction_count += 1
        self.demand_queries += 1
        offered = utility(self.bid, prices, bundle)
        preferred = best_demanded(self.bid, prices)
        if offered == utility(self.bid, prices, preferred):
            return DemandResponse(satisfied=True, bundle=bundle)
        return DemandResponse(satisfied=False, bundle=preferred)

    def answer_natural(self, question: str) -> str:
        self.interaction_count += 1
        self.natural_queries += 1
        return self.natural_reply

    def answer_equivalence(
        self, hypothesis: XorBid, tolerance: Money, limit: int = 5
    ) -> list[tuple[Bundle, Money]]:
        """Report the worst mis-valued bundles above the tolerance."""
        self.interaction_count += 1
        self.equivalence_queries += 1
        hypothesis_atoms = hypothesis.atom_bundles()
        gaps = []
        for bundle in all_bundles(self.bid.n_goods):
            if bundle in hypothesis_atoms:
                continue
            gap = abs(self.bid.value(bundle) - hypothesis.value(bundle))
            if gap > tolerance:
                gaps.append((-gap, bundle.sort_key(), bundle))
        gaps.sort()
        return [(b, self.bid.value(b)) for _, _, b in gaps[:limit]]


class PolicyBackend(ScriptedBackend):
    """Scripted backend that synthesizes missing fixtures from a policy.

    The policy maps (template_id, messages) to a response text. Every
    synthesized response is recorded in the fixture map, so a run can be
    captured once and replayed byte-identically from save_dir output.
    """

    def __init__(self, policy: Callable[[str, Sequence[str]], str]):
        super().__init__()
        self.policy = policy

    def complete_messages(self, template_id: str, messages: Sequence[str]) -> str:
        try:
            return super().complete_messages(template_id, messages)
        except FixtureMissing:
            response = self.policy(template_id, messages)
            self.add_messages(template_id, messages, response)
            return response


def add_person_value_fixtures(
    backend: ScriptedBackend,
    scenario: Scenario,
    person_text: str,
    values: Mapping[Bundle, Money],
) -> None:
    """Register bundle-valuation fixtures for every bundle in `values`."""
    for bundle, cents in values.items():
        backend.add(
            "bundle_value",
            value_prompt_bindings(scenario, person_text, bundle),
            f"Bundle value: ${cents // 100}.{cents % 100:02d}",
        )


def random_xor_bid(
    rng: random.Random,
    n_goods: int,
    max_atoms: int = 8,
    max_value_cents: Money = 100_000,
    whole_dollars: bool = False,
) -> XorBid:
    """A random canonical XOR bid with at most max_atoms atoms."""
    bid = XorBid.empty(n_goods)
    target = rng.randint(1, max_atoms - 1) if max_atoms > 1 else 0
    for _ in range(target):
        mask = rng.randint(1, (1 << n_goods) - 1)
        if whole_dollars:
            value = rng.randint(1, max_value_cents // 100) * 100
        else:
            value = rng.randint(1, max_value_cents)
        bid = bid.insert(Bundle(mask), value)
    return bid


def random_monotone_values(
    rng: random.Random, n_goods: int, max_value_cents: Money = 100_000
) -> dict[Bundle, Money]:
    """A random monotone full valuation map, as a bid's induced values."""
    bid = random_xor_bid(rng, n_goods, max_atoms=8, max_value_cents=max_value_cents)
    return {b: bid.value(b) for b in all_bundles(n_goods)}
