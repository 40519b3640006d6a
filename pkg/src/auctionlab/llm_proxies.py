"""LLM-assisted proxy designs and the hybrid that hands over to the learner.

Four designs share one message-subroutine contract. The two drop-in
designs interact with their person only through value and demand queries;
an LLM chooses which query to make. The second design additionally reports
an inferred bid built from an LLM-estimated value function, discounted to
avoid over-bidding. The plus-questions design opens with one free-form
question. The hybrid behaves like the plus-questions design for a fixed
number of calls, then switches to the demand-query learner while decaying
the inferred values geometrically so its reported bid converges to the
learned candidate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping

from .core import (
    Bundle,
    DemandResponse,
    Money,
    PriceFunction,
    Scenario,
    XorBid,
    bundles_by_size,
    format_money,
    round_half_up,
)
from .dnf_proxy import PersonChannel, learn_step
from .gateway import (
    Action,
    CHANNEL_DEMAND,
    CHANNEL_ENGINE,
    CHANNEL_EQUIVALENCE,
    CHANNEL_NATURAL,
    CHANNEL_VALUE,
    AUCTIONEER_MSG,
    PERSON_ANSWER,
    PROXY_BID,
    PROXY_QUERY,
    LlmBackend,
    Transcript,
    complete,
    complete_parsed,
    get_template,
    parse_bundle_value,
    parse_decision,
    parse_question,
    render,
    render_atoms_block,
    render_item_codes,
    render_price_lines,
)

VD1 = "vd1"
VD2 = "vd2"
NVD = "nvd"
HYBRID = "hybrid"

PROXY_MODES = (VD1, VD2, NVD, HYBRID)


@dataclass(frozen=True)
class ProxyParams:
    """Tuning knobs shared by the LLM proxy designs."""

    epsilon: Fraction = Fraction(3, 4)
    alpha: int = 10
    delta: Fraction = Fraction(19, 20)
    gamma_refresh_period: int = 5

    def __post_init__(self) -> None:
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        if self.alpha < 1:
            raise ValueError("alpha must be at least 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.gamma_refresh_period < 1:
            raise ValueError("gamma_refresh_period must be at least 1")


@dataclass(frozen=True)
class InferenceFunction:
    """LLM-inferred bundle values, with an exact geometric decay factor.

    Values are stored undecayed; `scale` accumulates decay multipliers as
    an exact rational so the effective value after k decays is a single
    rounding of value * scale, never k accumulated roundings.
    """

    values: Mapping[Bundle, Money]
    computed_at_call: int
    scale: Fraction = Fraction(1)

    def scaled(self, factor: Fraction) -> "InferenceFunction":
        return replace(self, scale=self.scale * factor)

    def effective(self, bundle: Bundle) -> Money | None:
        raw = self.values.get(bundle)
        if raw is None:
            return None
        return round_half_up(self.scale * raw)

    def discounted(self, bundle: Bundle, epsilon: Fraction) -> Money | None:
        raw = self.values.get(bundle)
        if raw is None:
            return None
        return round_half_up(epsilon * self.scale * raw)


def vd2_infer_bid(candidate: XorBid, gamma: InferenceFunction | None, epsilon: Fraction) -> XorBid:
    """Extend the candidate with discounted inferred values.

    Walks bundles outside the candidate's atom set in ascending size order
    and inserts any whose discounted inferred value beats the induced value
    so far. Inferred insertions are capped so the result agrees with the
    candidate's induced valuation on every candidate atom.
    """
    if gamma is None:
        return candidate
    atom_bundles = candidate.atom_bundles()
    result = candidate
    for bundle in sorted(gamma.values, key=Bundle.sort_key):
        if bundle in atom_bundles:
            continue
        inferred = gamma.discounted(bundle, epsilon)
        if inferred is None or inferred <= 0:
            continue
        cap = min(
            (v for b, v in candidate.atoms if bundle.issubset(b) and b != bundle),
            default=None,
        )
        if cap is not None:
            inferred = min(inferred, cap)
        if result.value(bundle) < inferred:
            result = result.insert(bundle, inferred)
    return result


class _LoggedPerson:
    """PersonChannel wrapper that mirrors queries into the proxy transcript."""

    def __init__(self, person: PersonChannel, scenario: Scenario, transcript: Transcript):
        self._person = person
        self._scenario = scenario
        self._transcript = transcript

    @property
    def interactions(self) -> int:
        return self._person.interactions

    def answer_value(self, bundle: Bundle) -> Money:
        desc = self._scenario.describe_bundle(bundle)
        self._transcript.append(
            PROXY_QUERY, CHANNEL_VALUE, f"What is your value for the bundle {desc}?"
        )
        value = self._person.answer_value(bundle)
        self._transcript.append(PERSON_ANSWER, CHANNEL_VALUE, format_money(value))
        return value

    def answer_demand(self, prices: PriceFunction, bundle: Bundle) -> DemandResponse:
        desc = self._scenario.describe_bundle(bundle)
        self._transcript.append(
            PROXY_QUERY,
            CHANNEL_DEMAND,
            f"At the posted prices, are you happy with the bundle {desc}?",
        )
        response = self._person.answer_demand(prices, bundle)
        if response.satisfied:
            answer = "Yes, I am happy with that bundle at these prices."
        else:
            answer = (
                "No, I would prefer the bundle "
                f"{self._scenario.describe_bundle(response.bundle)}."
            )
        self._transcript.append(PERSON_ANSWER, CHANNEL_DEMAND, answer)
        return response

    def answer_natural(self, question: str) -> str:
        self._transcript.append(PROXY_QUERY, CHANNEL_NATURAL, question)
        answer = self._person.answer_natural(question)
        self._transcript.append(PERSON_ANSWER, CHANNEL_NATURAL, answer)
        return answer

    def answer_equivalence(self, hypothesis: XorBid, tolerance: Money):
        self._transcript.append(
            PROXY_QUERY,
            CHANNEL_EQUIVALENCE,
            f"Which bundles does my hypothesis misvalue by more than {format_money(tolerance)}?",
        )
        result = self._person.answer_equivalence(hypothesis, tolerance)
        listed = "; ".join(
            f"{self._scenario.describe_bundle(b)} at {format_money(v)}" for b, v in result
        )
        self._transcript.append(
            PERSON_ANSWER, CHANNEL_EQUIVALENCE, listed or "The hypothesis looks right."
        )
        return result


class LlmProxy:
    """Message subroutine for the vd1, vd2, nvd and hybrid designs."""

    def __init__(
        self,
        mode: str,
        person: PersonChannel,
        scenario: Scenario,
        backend: LlmBackend,
        params: ProxyParams = ProxyParams(),
    ) -> None:
        if mode not in PROXY_MODES:
            raise ValueError(f"unknown proxy mode: {mode!r}")
        self.mode = mode
        self.scenario = scenario
        self.backend = backend
        self.params = params
        self.transcript = Transcript()
        self.candidate = XorBid.empty(scenario.n_goods)
        self.gamma: InferenceFunction | None = None
        self.call_count = 0
        self._person = _LoggedPerson(person, scenario, self.transcript)

    @property
    def interactions(self) -> int:
        return self._person.interactions

    # -- engine contract ---------------------------------------------------

    def handle_message(self, bundle: Bundle, prices: PriceFunction) -> tuple[int, XorBid]:
        self.call_count += 1
        self.transcript.append(
            AUCTIONEER_MSG,
            CHANNEL_ENGINE,
            f"Round {self.call_count}: your tentative bundle is "
            f"{self.scenario.describe_bundle(bundle)}; posted prices: "
            f"{render_price_lines(prices, self.scenario)}",
        )
        if self.mode == HYBRID and self.call_count > self.params.alpha:
            flag, reported = self._learner_step(bundle, prices)
        else:
            if self.mode in (NVD, HYBRID) and self.call_count == 1:
                self._ask_opening_question()
            if self.mode != VD1 and self._gamma_refresh_due():
                self._refresh_gamma()
            flag = self._decide_and_query(bundle, prices)
            if self.mode == VD1:
                reported = self.candidate
            else:
                reported = vd2_infer_bid(self.candidate, self.gamma, self.params.epsilon)
        self.transcript.append(
            PROXY_BID,
            CHANNEL_ENGINE,
            f"Reported bid with {len(reported.atoms)} atoms; satisfied={flag}.",
        )
        return flag, reported

    # -- internals ----------------------------------------------------------

    def _gamma_refresh_due(self) -> bool:
        return (self.call_count - 1) % self.params.gamma_refresh_period == 0

    def _ask_opening_question(self) -> None:
        question = complete_parsed(
            self.backend,
            "proxy_next_question",
            {
                "scenario_description": self.scenario.description,
                "history": self.transcript.history(),
                "primary_history": self.transcript.primary_history(),
            },
            parse_question,
        )
        self._person.answer_natural(question)

    def _refresh_gamma(self) -> None:
        values: dict[Bundle, Money] = {}
        atom_bundles = self.candidate.atom_bundles()
        history = self.transcript.history()
        primary = self.transcript.primary_history()
        for bundle in bundles_by_size(self.scenario.n_goods):
            if bundle in atom_bundles:
                continue
            value = complete_parsed(
                self.backend,
                "proxy_value_infer",
                {
                    "scenario_description": self.scenario.description,
                    "history": history,
                    "primary_history": primary,
                    "bundle_description": self.scenario.describe_bundle(bundle),
                },
                parse_bundle_value,
            )
            values[bundle] = value
        self.gamma = InferenceFunction(values=values, computed_at_call=self.call_count)

    def _decide_and_query(self, bundle: Bundle, prices: PriceFunction) -> int:
        decision = self._ask_decision(bundle, prices)
        if decision.action is Action.HAPPY:
            return 1
        if decision.action is Action.TARGET_BUNDLE:
            value = self._person.answer_value(decision.bundle)
            self.candidate = self.candidate.insert(decision.bundle, value)
            return 0
        response = self._person.answer_demand(prices, bundle)
        if response.satisfied:
            return 1
        value = self._person.answer_value(response.bundle)
        self.candidate = self.candidate.insert(response.bundle, value)
        return 0

    def _ask_decision(self, bundle: Bundle, prices: PriceFunction):
        part1 = get_template("proxy_decision_part1")
        part1_bindings = {
            "scenario_description": self.scenario.description,
            "tracked_bundles": render_atoms_block(self.candidate, self.scenario),
            "prices": render_price_lines(prices, self.scenario),
            "allocation": self.scenario.describe_bundle(bundle),
            "history": self.transcript.history(),
        }
        part1_prompt = render(part1, part1_bindings)
        thinking = complete(self.backend, part1, part1_bindings)
        return complete_parsed(
            self.backend,
            "proxy_decision_part2",
            {"item_codes": render_item_codes(self.scenario)},
            lambda text: parse_decision(text, self.scenario),
            turns=[(part1_prompt, thinking)],
        )

    def _learner_step(self, bundle: Bundle, prices: PriceFunction) -> tuple[int, XorBid]:
        if self.gamma is not None:
            self.gamma = self.gamma.scaled(self.params.delta)
        response = self._person.answer_demand(prices, bundle)
        if response.satisfied:
            flag = 1
        else:
            atom, value = learn_step(self._person, response.bundle)
            self.candidate = self.candidate.insert(atom, value)
            flag = 0
        return flag, vd2_infer_bid(self.candidate, self.gamma, self.params.epsilon)
