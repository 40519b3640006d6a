"""Exact winner determination for XOR bids and Lindahl price construction.

solve_wdp is a depth-first branch and bound over per-bidder atom choices.
brute_force_wdp is an independent oracle that exhaustively enumerates every
assignment of each item to a bidder or to nobody; it exists to cross-check
the solver and is limited to small instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Bundle, Money, PriceFunction, XorBid

BRUTE_FORCE_MAX_GOODS = 8
BRUTE_FORCE_MAX_BIDDERS = 5


@dataclass(frozen=True)
class Allocation:
    """One awarded bundle per bidder; bundles are pairwise disjoint."""

    bundles: tuple[Bundle, ...]

    def __post_init__(self) -> None:
        used = 0
        for b in self.bundles:
            if used & b.mask:
                raise ValueError("allocated bundles overlap")
            used |= b.mask

    def __getitem__(self, i: int) -> Bundle:
        return self.bundles[i]

    def __len__(self) -> int:
        return len(self.bundles)


@dataclass(frozen=True)
class WdpSolution:
    allocation: Allocation
    welfare: Money
    per_bidder_value: tuple[Money, ...]


def _check_universe(bids: Sequence[XorBid]) -> int:
    if not bids:
        raise ValueError("need at least one bidder")
    n = bids[0].n_goods
    if any(b.n_goods != n for b in bids):
        raise ValueError("bids cover different universes")
    return n


def solve_wdp(bids: Sequence[XorBid]) -> WdpSolution:
    """Welfare-maximizing choice of at most one atom per bidder.

    Chosen atoms must be item-disjoint. Ties are broken by preferring, in
    bidder order, the atom with the smaller index in each bid's canonical
    atom list; the depth-first search visits atom indices in ascending
    order and only accepts strict improvements, so the first optimum found
    is exactly that tie-break winner.
    """
    _check_universe(bids)
    m = len(bids)
    atoms = [bid.atoms for bid in bids]

    # Admissible bound: each remaining bidder contributes at most its best atom.
    suffix_bound = [0] * (m + 1)
    for i in range(m - 1, -1, -1):
        suffix_bound[i] = suffix_bound[i + 1] + max(v for _, v in atoms[i])

    best_welfare = -1
    best_choice: list[int] = [0] * m
    choice = [0] * m

    def dfs(i: int, used_mask: int, value: Money) -> None:
        nonlocal best_welfare, best_choice
        if value + suffix_bound[i] <= best_welfare:
            return
        if i == m:
            best_welfare = value
            best_choice = choice.copy()
            return
        for j, (bundle, v) in enumerate(atoms[i]):
            if bundle.mask & used_mask:
                continue
            choice[i] = j
            dfs(i + 1, used_mask | bundle.mask, value + v)
        choice[i] = 0

    dfs(0, 0, 0)

    chosen = [atoms[i][best_choice[i]] for i in range(m)]
    return WdpSolution(
        allocation=Allocation(tuple(b for b, _ in chosen)),
        welfare=sum(v for _, v in chosen),
        per_bidder_value=tuple(v for _, v in chosen),
    )


def brute_force_wdp(bids: Sequence[XorBid]) -> WdpSolution:
    """Independent oracle: score every item-to-bidder-or-nobody assignment.

    The optimal welfare is found by exhaustive enumeration over all
    (m+1)^n assignments, scored through each bid's induced valuation. The
    reported allocation is then the lexicographically first atom choice
    achieving that welfare, which matches solve_wdp's tie-break.
    """
    n = _check_universe(bids)
    m = len(bids)
    if n > BRUTE_FORCE_MAX_GOODS or m > BRUTE_FORCE_MAX_BIDDERS:
        raise ValueError(
            f"instance too large for brute force (n<={BRUTE_FORCE_MAX_GOODS}, "
            f"m<={BRUTE_FORCE_MAX_BIDDERS})"
        )

    tables = [
        np.array([bid.value(Bundle(mask)) for mask in range(1 << n)], dtype=np.int64)
        for bid in bids
    ]
    base = m + 1
    total = base**n
    idx = np.arange(total, dtype=np.int64)
    masks = [np.zeros(total, dtype=np.int64) for _ in range(m)]
    for item in range(n):
        digit = (idx // base**item) % base
        for i in range(m):
            masks[i] |= (digit == i + 1).astype(np.int64) << item
    welfare = masks[0] * 0
    for i in range(m):
        welfare = welfare + tables[i][masks[i]]
    target = int(welfare.max())

    # Recover the lex-first atom-index vector reaching the known optimum.
    atoms = [bid.atoms for bid in bids]
    suffix_bound = [0] * (m + 1)
    for i in range(m - 1, -1, -1):
        suffix_bound[i] = suffix_bound[i + 1] + max(v for _, v in atoms[i])

    choice = [0] * m

    def dfs(i: int, used_mask: int, value: Money) -> bool:
        if value + suffix_bound[i] < target:
            return False
        if i == m:
            return value == target
        for j, (bundle, v) in enumerate(atoms[i]):
            if bundle.mask & used_mask:
                continue
            choice[i] = j
            if dfs(i + 1, used_mask | bundle.mask, value + v):
                return True
        choice[i] = 0
        return False

    if not dfs(0, 0, 0):
        raise AssertionError("enumeration optimum unreachable by atom choices")

    chosen = [atoms[i][choice[i]] for i in range(m)]
    return WdpSolution(
        allocation=Allocation(tuple(b for b, _ in chosen)),
        welfare=target,
        per_bidder_value=tuple(v for _, v in chosen),
    )


def lindahl_prices(bid: XorBid, d: Money = 0) -> PriceFunction:
    """Bidder-specific bundle prices: the bid's induced value minus d.

    With d = 0 this is the maximal price vector, which supports any
    welfare-maximizing allocation as a competitive equilibrium.
    """
    if d < 0:
        raise ValueError("price offset must be non-negative")
    return PriceFunction(base=bid, offset=d)
