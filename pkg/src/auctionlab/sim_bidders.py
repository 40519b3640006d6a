"""LLM-simulated bidders: seed generation, cached bids, query answering.

A simulated person is driven by a natural-language seed describing their
preferences. At creation time the full bundle lattice is valued through
the bundle-valuation prompt and folded into one cached XOR bid; value and
demand queries are then answered from that cache, which keeps the person
coherent across queries. Natural-language and equivalence queries go back
to the language model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from importlib import resources

from .core import (
    Bundle,
    DemandResponse,
    Money,
    PriceFunction,
    Scenario,
    XorBid,
    best_demanded,
    bundles_by_size,
    format_money,
    utility,
)
from .gateway import (
    LlmBackend,
    complete,
    complete_parsed,
    parse_answer,
    parse_bundle_value,
    parse_equivalence_bundles,
    parse_seed_versions,
    render_atoms_block,
    render_item_codes,
    render_value_pairs,
)

SHIPPED_SCENARIOS = ("electronics", "preserves", "transportation")


def load_scenario(name_or_path: str | Path) -> Scenario:
    """Load one of the shipped scenarios by name, or any config by path."""
    name = str(name_or_path)
    if name in SHIPPED_SCENARIOS:
        text = (
            resources.files("auctionlab")
            .joinpath("scenarios", f"{name}.json")
            .read_text(encoding="utf-8")
        )
        return Scenario.from_dict(json.loads(text))
    path = Path(name_or_path)
    if not path.exists():
        raise FileNotFoundError(
            f"unknown scenario {name!r}: not one of {SHIPPED_SCENARIOS} and no such file"
        )
    with open(path, encoding="utf-8") as fh:
        return Scenario.from_dict(json.load(fh))


@dataclass(frozen=True)
class Seed:
    """A person's natural-language preference description plus provenance."""

    text: str
    scenario_name: str
    stage_outputs: tuple[str, str, str, str] = ("", "", "", "")
    tranche: int | None = None
    index: int | None = None
    generation_config: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("seed text must be non-empty")

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "scenario": self.scenario_name,
            "stage_outputs": list(self.stage_outputs),
            "tranche": self.tranche,
            "index": self.index,
            "generation_config": self.generation_config,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Seed":
        return cls(
            text=data["text"],
            scenario_name=data["scenario"],
            stage_outputs=tuple(data.get("stage_outputs", ("", "", "", ""))),
            tranche=data.get("tranche"),
            index=data.get("index"),
            generation_config=dict(data.get("generation_config", {})),
        )


def value_prompt_bindings(scenario: Scenario, person_text: str, bundle: Bundle) -> dict:
    """Bindings for one bundle-valuation completion; shared with fixture tooling."""
    return {
        "scenario_description": scenario.description,
        "person_description": person_text,
        "bundle_description": scenario.describe_bundle(bundle),
        "bundle_size": bundle.size,
    }


def generate_seed(
    scenario: Scenario,
    backend: LlmBackend,
    rng_choice: int,
    tranche: int | None = None,
    index: int | None = None,
) -> Seed:
    """Run the four-stage seed pipeline and keep every stage output.

    Stage one drafts three candidate personas and rng_choice selects one;
    the remaining stages revise the running text for consistency, anchor it
    with explicit dollar values, and spell out how unspecified bundles are
    evaluated.
    """
    base = {
        "scenario_description": scenario.description,
        "item_codes": render_item_codes(scenario),
    }
    stage1_raw = complete(backend, "seed_step1", base)
    versions = parse_seed_versions(stage1_raw)
    draft = versions[rng_choice % 3]
    stage2 = complete(
        backend,
        "seed_step2",
        {"scenario_description": scenario.description, "person_description": draft},
    ).strip()
    stage3 = complete(backend, "seed_step3", {**base, "person_description": stage2}).strip()
    stage4 = complete(
        backend,
        "seed_step4",
        {"scenario_description": scenario.description, "person_description": stage3},
    ).strip()
    return Seed(
        text=stage4,
        scenario_name=scenario.name,
        stage_outputs=(stage1_raw, stage2, stage3, stage4),
        tranche=tranche,
        index=index,
        generation_config={"rng_choice": rng_choice % 3},
    )


def build_cached_bid(seed: Seed, scenario: Scenario, backend: LlmBackend) -> XorBid:
    """Value the whole lattice in ascending size order into one XOR bid.

    Each bundle's prompted value is inserted only when it beats the value
    already induced by smaller bundles, so the cached valuation satisfies
    free disposal by construction. Any unrecoverable parse failure aborts
    the build; there is no partial cache.
    """
    bid = XorBid.empty(scenario.n_goods)
    for bundle in bundles_by_size(scenario.n_goods):
        if not bundle:
            continue
        value = complete_parsed(
            backend,
            "bundle_value",
            value_prompt_bindings(scenario, seed.text, bundle),
            parse_bundle_value,
        )
        bid = bid.insert(bundle, value)
    return bid


class SimPerson:
    """A language-model-backed person answering the four query types."""

    def __init__(self, seed: Seed, scenario: Scenario, backend: LlmBackend, cached_bid: XorBid):
        if cached_bid.n_goods != scenario.n_goods:
            raise ValueError("cached bid does not match the scenario universe")
        self.seed = seed
        self.scenario = scenario
        self.backend = backend
        self.cached_bid = cached_bid
        self.interaction_count = 0
        self.revealed: list[tuple[Bundle, Money]] = []
        self.equivalence_calls = 0

    @classmethod
    def build(cls, seed: Seed, scenario: Scenario, backend: LlmBackend) -> "SimPerson":
        return cls(seed, scenario, backend, build_cached_bid(seed, scenario, backend))

    @property
    def interactions(self) -> int:
        return self.interaction_count

    @property
    def true_bid(self) -> XorBid:
        return self.cached_bid

    def answer_value(self, bundle: Bundle) -> Money:
        self.interaction_count += 1
        value = self.cached_bid.value(bundle)
        self.revealed.append((bundle, value))
        return value

    def answer_demand(self, prices: PriceFunction, bundle: Bundle) -> DemandResponse:
        self.interaction_count += 1
        offered = utility(self.cached_bid, prices, bundle)
        preferred = best_demanded(self.cached_bid, prices)
        if offered == utility(self.cached_bid, prices, preferred):
            return DemandResponse(satisfied=True, bundle=bundle)
        return DemandResponse(satisfied=False, bundle=preferred)

    def answer_natural(self, question: str) -> str:
        self.interaction_count += 1
        return complete_parsed(
            self.backend,
            "nl_answer",
            {
                "scenario_description": self.scenario.description,
                "person_description": self.seed.text,
                "question": question,
            },
            parse_answer,
        )

    def answer_equivalence(
        self,
        hypothesis: XorBid,
        tolerance: Money,
        num_calls: int | None = None,
    ) -> list[tuple[Bundle, Money]]:
        """Ask for likely counterexample bundles and verify them against truth.

        The model proposes up to five bundles; proposals already in the
        hypothesis or within the tolerance of the true value are dropped.
        An empty result means the hypothesis is equivalent within the
        tolerance.
        """
        self.interaction_count += 1
        self.equivalence_calls += 1
        call_number = num_calls if num_calls is not None else self.equivalence_calls
        proposals = complete_parsed(
            self.backend,
            "equivalence",
            {
                "scenario_description": self.scenario.description,
                "person_description": self.seed.text,
                "hypothesis_atoms": render_atoms_block(hypothesis, self.scenario),
                "revealed_values": render_value_pairs(self.revealed, self.scenario),
                "epsilon": format_money(tolerance),
                "num_calls": call_number,
                "item_codes": ", ".join(self.scenario.codes),
            },
            lambda text: parse_equivalence_bundles(text, self.scenario),
        )
        survivors: list[tuple[Bundle, Money]] = []
        hypothesis_atoms = hypothesis.atom_bundles()
        for bundle in proposals:
            if bundle in hypothesis_atoms:
                continue
            truth = self.cached_bid.value(bundle)
            if abs(truth - hypothesis.value(bundle)) <= tolerance:
                continue
            survivors.append((bundle, truth))
        return survivors
