"""The iterative competitive-equilibrium auction loop.

Each iteration solves the winner determination problem on the proxies'
current bids, posts maximal per-bidder Lindahl prices, and polls every
proxy for satisfaction with its tentative bundle. Unsatisfied proxies
return refined bids; the loop stops when everyone is satisfied or an
iteration cap is hit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

from .core import (
    EMPTY_BUNDLE,
    Bundle,
    Money,
    PriceFunction,
    Scenario,
    XorBid,
    demand_set,
    utility,
    zero_prices,
)
from .wdp import Allocation, lindahl_prices, solve_wdp

CONVERGED = "converged"
ITERATION_CAP = "iteration_cap"


class ProxyHandle(Protocol):
    """What the auctioneer needs from a proxy.

    handle_message(b, prices) answers whether the person is satisfied with
    bundle b at the posted prices: (1, bid) if satisfied, else (0, bid')
    where bid' incorporates new information. The interactions property
    reports the cumulative person-proxy query count for bookkeeping; the
    engine never drives it.
    """

    def handle_message(self, bundle: Bundle, prices: PriceFunction) -> tuple[int, XorBid]:
        ...

    @property
    def interactions(self) -> int:
        ...


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    bids: tuple[XorBid, ...]
    allocation: Allocation
    welfare: Money
    prices_offsets: tuple[Money, ...]
    satisfied_flags: tuple[bool, ...]
    cumulative_interactions: tuple[int, ...]


@dataclass(frozen=True)
class AuctionOutcome:
    records: tuple[IterationRecord, ...]
    terminated: str

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]

    @property
    def converged(self) -> bool:
        return self.terminated == CONVERGED


class AuctionAborted(RuntimeError):
    """Raised when a proxy fails or stalls; carries the partial run."""

    def __init__(self, reason: str, records: tuple[IterationRecord, ...]):
        super().__init__(reason)
        self.reason = reason
        self.records = records


def run_ceca(
    scenario: Scenario,
    proxies: Sequence[ProxyHandle],
    max_iterations: int = 16,
) -> AuctionOutcome:
    """Run the auction until all proxies are satisfied or the cap is hit.

    Before the first iteration every proxy is polled once on the empty
    bundle at zero prices; the returned bids seed iteration 1. Each
    iteration then solves the WDP, posts maximal Lindahl prices on each
    bidder's own manifest bid, and polls each proxy on its tentative
    bundle. A proxy that twice in a row returns flag 0 without changing
    its bid is treated as stalled and aborts the run.
    """
    if max_iterations < 1:
        raise ValueError("max_iterations must be at least 1")
    n = scenario.n_goods
    records: list[IterationRecord] = []
    stall_streak = [0] * len(proxies)
    bids: list[XorBid] = []

    def poll(i: int, bundle: Bundle, prices: PriceFunction, previous: XorBid | None) -> tuple[int, XorBid]:
        try:
            flag, bid = proxies[i].handle_message(bundle, prices)
        except Exception as exc:
            raise AuctionAborted(
                f"proxy {i} failed: {exc}", tuple(records)
            ) from exc
        if flag not in (0, 1):
            raise AuctionAborted(f"proxy {i} returned flag {flag!r}", tuple(records))
        if flag == 0 and previous is not None and bid == previous:
            stall_streak[i] += 1
            if stall_streak[i] >= 2:
                raise AuctionAborted(
                    f"proxy {i} made no progress twice in a row", tuple(records)
                )
        else:
            stall_streak[i] = 0
        return flag, bid

    # Seed bids: satisfaction poll on the empty allocation at zero prices.
    seed_prices = zero_prices(n)
    for i in range(len(proxies)):
        _, bid = poll(i, EMPTY_BUNDLE, seed_prices, None)
        bids.append(bid)

    for iteration in range(1, max_iterations + 1):
        solution = solve_wdp(bids)
        prices = [lindahl_prices(bid, 0) for bid in bids]
        flags: list[bool] = []
        new_bids: list[XorBid] = []
        for i in range(len(proxies)):
            flag, bid = poll(i, solution.allocation[i], prices[i], bids[i])
            flags.append(bool(flag))
            new_bids.append(bid)
        records.append(
            IterationRecord(
                iteration=iteration,
                bids=tuple(bids),
                allocation=solution.allocation,
                welfare=solution.welfare,
                prices_offsets=tuple(0 for _ in proxies),
                satisfied_flags=tuple(flags),
                cumulative_interactions=tuple(p.interactions for p in proxies),
            )
        )
        if all(flags):
            return AuctionOutcome(tuple(records), CONVERGED)
        bids = new_bids

    return AuctionOutcome(tuple(records), ITERATION_CAP)


def check_equilibrium(outcome: AuctionOutcome, true_bids: Sequence[XorBid]) -> bool:
    """Verify the converged outcome against ground-truth valuations.

    True iff the allocated bundles are pairwise disjoint and each one
    maximizes the person's true quasi-linear utility at the prices posted
    from that person's final manifest bid.
    """
    if not outcome.converged:
        raise ValueError("outcome did not converge")
    final = outcome.final
    used = 0
    for b in final.allocation.bundles:
        if used & b.mask:
            return False
        used |= b.mask
    for i, true_bid in enumerate(true_bids):
        prices = lindahl_prices(final.bids[i], final.prices_offsets[i])
        allocated = final.allocation[i]
        best = utility(true_bid, prices, demand_set(true_bid, prices)[0])
        if utility(true_bid, prices, allocated) != best:
            return False
    return True
