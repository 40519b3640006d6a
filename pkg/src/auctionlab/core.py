"""Shared vocabulary: goods, bundles, XOR bids, prices and demand.

All money amounts are exact integer cents. Bundles are bitmasks over a
universe of at most 16 goods, so full enumeration of the bundle lattice is
always feasible.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

MAX_GOODS = 16

# Money is a plain int holding non-negative cents.
Money = int


def round_half_up(x: Fraction | Decimal | float) -> Money:
    """Round a non-negative amount to whole cents, halves upward."""
    if isinstance(x, Fraction):
        if x < 0:
            raise ValueError("negative amount")
        return (2 * x.numerator + x.denominator) // (2 * x.denominator)
    d = Decimal(str(x)) if isinstance(x, float) else x
    if d < 0:
        raise ValueError("negative amount")
    return int(d.quantize(Decimal("1"), rounding=ROUND_HALF_UP))


def money_from_text(text: str) -> Money:
    """Parse a dollar figure like '1,234.5' into cents (half-up)."""
    cleaned = text.strip().lstrip("$").replace(",", "")
    if not re.fullmatch(r"\d+(\.\d{1,2})?", cleaned):
        raise ValueError(f"not a dollar amount: {text!r}")
    return round_half_up(Decimal(cleaned) * 100)


def format_money(cents: Money) -> str:
    return f"${cents // 100}.{cents % 100:02d}"


@dataclass(frozen=True, order=True)
class Bundle:
    """A set of good indices, stored as a bitmask."""

    mask: int = 0

    @classmethod
    def from_indices(cls, indices: Iterable[int]) -> "Bundle":
        mask = 0
        for i in indices:
            mask |= 1 << i
        return cls(mask)

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")

    def indices(self) -> list[int]:
        return [i for i in range(self.mask.bit_length()) if self.mask >> i & 1]

    def contains(self, index: int) -> bool:
        return bool(self.mask >> index & 1)

    def issubset(self, other: "Bundle") -> bool:
        return self.mask & other.mask == self.mask

    def disjoint(self, other: "Bundle") -> bool:
        return self.mask & other.mask == 0

    def with_good(self, index: int) -> "Bundle":
        return Bundle(self.mask | 1 << index)

    def without_good(self, index: int) -> "Bundle":
        return Bundle(self.mask & ~(1 << index))

    def sort_key(self) -> tuple[int, int]:
        return (self.size, self.mask)

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices())

    def __len__(self) -> int:
        return self.size

    def __bool__(self) -> bool:
        return self.mask != 0


EMPTY_BUNDLE = Bundle(0)


def all_bundles(n_goods: int) -> Iterator[Bundle]:
    """All 2^n bundles in plain mask order."""
    for mask in range(1 << n_goods):
        yield Bundle(mask)


def bundles_by_size(n_goods: int) -> list[Bundle]:
    """All 2^n bundles sorted by (cardinality, mask)."""
    return sorted(all_bundles(n_goods), key=Bundle.sort_key)


@dataclass(frozen=True)
class Good:
    index: int
    code: str
    name: str
    description: str = ""


@dataclass(frozen=True)
class Scenario:
    """An auction instance: its description text and the goods on offer."""

    name: str
    description: str
    goods: tuple[Good, ...]

    def __post_init__(self) -> None:
        n = len(self.goods)
        if not 1 <= n <= MAX_GOODS:
            raise ValueError(f"scenario must have 1..{MAX_GOODS} goods, got {n}")
        if sorted(g.index for g in self.goods) != list(range(n)):
            raise ValueError("good indices must be dense and unique")
        codes = [g.code for g in self.goods]
        if len(set(codes)) != n:
            raise ValueError("good codes must be unique")
        for code in codes:
            if not re.fullmatch(r"[A-Z][A-Z0-9]*", code):
                raise ValueError(f"bad good code: {code!r}")

    @property
    def n_goods(self) -> int:
        return len(self.goods)

    def good_by_index(self, index: int) -> Good:
        for g in self.goods:
            if g.index == index:
                return g
        raise KeyError(index)

    def good_by_code(self, code: str) -> Good:
        for g in self.goods:
            if g.code == code:
                return g
        raise KeyError(code)

    @property
    def codes(self) -> list[str]:
        return [self.good_by_index(i).code for i in range(self.n_goods)]

    def bundle_from_codes(self, codes: Iterable[str]) -> Bundle:
        return Bundle.from_indices(self.good_by_code(c).index for c in codes)

    def bundle_codes(self, bundle: Bundle) -> list[str]:
        return sorted(self.good_by_index(i).code for i in bundle)

    def describe_bundle(self, bundle: Bundle) -> str:
        if not bundle:
            return "(empty bundle - no items)"
        parts = []
        for i in bundle.indices():
            g = self.good_by_index(i)
            parts.append(f"{g.name} (code: {g.code})")
        return ", ".join(parts)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description_text": self.description,
            "goods": [
                {"code": g.code, "name": g.name, "description": g.description}
                for g in sorted(self.goods, key=lambda g: g.index)
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Scenario":
        goods = tuple(
            Good(index=i, code=g["code"], name=g["name"], description=g.get("description", ""))
            for i, g in enumerate(data["goods"])
        )
        return cls(name=data["name"], description=data["description_text"], goods=goods)


@dataclass(frozen=True)
class XorBid:
    """An XOR bid: atomic (bundle, value) pairs inducing a full valuation.

    A bundle's induced value is the highest atom value among atoms it
    contains. The stored atoms are canonical: sorted by (size, mask), the
    empty atom at zero is always present, and no atom is dominated by the
    valuation induced by the other atoms.
    """

    n_goods: int
    atoms: tuple[tuple[Bundle, Money], ...] = ((EMPTY_BUNDLE, 0),)

    def __post_init__(self) -> None:
        if not 1 <= self.n_goods <= MAX_GOODS:
            raise ValueError("n_goods out of range")
        if not self.atoms or self.atoms[0] != (EMPTY_BUNDLE, 0):
            raise ValueError("first atom must be the empty bundle at 0")
        universe = (1 << self.n_goods) - 1
        seen = set()
        for bundle, value in self.atoms:
            if bundle.mask & ~universe:
                raise ValueError("atom outside the good universe")
            if value < 0:
                raise ValueError("atom values must be non-negative")
            if bundle in seen:
                raise ValueError("duplicate atom bundle")
            seen.add(bundle)

    @classmethod
    def empty(cls, n_goods: int) -> "XorBid":
        return cls(n_goods=n_goods)

    @classmethod
    def from_atoms(cls, n_goods: int, pairs: Iterable[tuple[Bundle, Money]]) -> "XorBid":
        """Build the canonical bid inducing the pointwise max of the pairs."""
        bid = cls.empty(n_goods)
        for bundle, value in sorted(pairs, key=lambda p: p[0].sort_key()):
            bid = bid.insert(bundle, value)
        return bid

    def value(self, bundle: Bundle) -> Money:
        """Induced value: best atom contained in the bundle."""
        best = 0
        for atom, v in self.atoms:
            if atom.issubset(bundle) and v > best:
                best = v
        return best

    def insert(self, bundle: Bundle, value: Money) -> "XorBid":
        """Add an atom if it strictly beats the current induced value.

        Atoms that the new atom makes redundant are dropped; the induced
        valuation at every other bundle is unchanged.
        """
        if value < 0:
            raise ValueError("atom values must be non-negative")
        if not bundle or value <= self.value(bundle):
            return self
        kept = [
            (b, v) for b, v in self.atoms if not (bundle.issubset(b) and v <= value)
        ]
        kept.append((bundle, value))
        kept.sort(key=lambda p: p[0].sort_key())
        return XorBid(self.n_goods, tuple(kept))

    def atom_bundles(self) -> frozenset[Bundle]:
        return frozenset(b for b, _ in self.atoms)

    def max_atom_value(self) -> Money:
        return max(v for _, v in self.atoms)


@dataclass(frozen=True)
class PriceFunction:
    """Non-linear bundle prices: an XOR-induced price minus a constant.

    price(b) = max(base.value(b) - offset, 0).
    """

    base: XorBid
    offset: Money = 0

    def __post_init__(self) -> None:
        if self.offset < 0:
            raise ValueError("offset must be non-negative")

    @property
    def n_goods(self) -> int:
        return self.base.n_goods

    def price(self, bundle: Bundle) -> Money:
        return max(self.base.value(bundle) - self.offset, 0)


def zero_prices(n_goods: int) -> PriceFunction:
    return PriceFunction(XorBid.empty(n_goods), 0)


@dataclass(frozen=True)
class DemandResponse:
    """Answer to a demand query: happy with the offer, or a preferred bundle."""

    satisfied: bool
    bundle: Bundle


def utility(bid: XorBid, prices: PriceFunction, bundle: Bundle) -> Money:
    return bid.value(bundle) - prices.price(bundle)


def demand_set(bid: XorBid, prices: PriceFunction) -> list[Bundle]:
    """All bundles maximizing quasi-linear utility, sorted by (size, mask)."""
    if bid.n_goods != prices.n_goods:
        raise ValueError("bid and prices cover different universes")
    best: Money | None = None
    winners: list[Bundle] = []
    for bundle in all_bundles(bid.n_goods):
        u = utility(bid, prices, bundle)
        if best is None or u > best:
            best = u
            winners = [bundle]
        elif u == best:
            winners.append(bundle)
    winners.sort(key=Bundle.sort_key)
    return winners


def best_demanded(bid: XorBid, prices: PriceFunction) -> Bundle:
    """Deterministic pick from the demand set: minimal (size, mask)."""
    if bid.n_goods != prices.n_goods:
        raise ValueError("bid and prices cover different universes")
    best_u: Money | None = None
    best_b = EMPTY_BUNDLE
    for bundle in all_bundles(bid.n_goods):
        u = utility(bid, prices, bundle)
        if best_u is None or u > best_u or (u == best_u and bundle.sort_key() < best_b.sort_key()):
            best_u = u
            best_b = bundle
    return best_b


def is_monotone(values: Mapping[Bundle, Money], n_goods: int) -> bool:
    """True iff the full map never decreases under set inclusion."""
    if len(values) != 1 << n_goods:
        raise ValueError("map must cover all bundles")
    for bundle in all_bundles(n_goods):
        v = values[bundle]
        for i in bundle.indices():
            if values[bundle.without_good(i)] > v:
                return False
    return True


# Canonical serialization: bundles as sorted code lists, bids as atom lists.

def bundle_to_json(bundle: Bundle, scenario: Scenario) -> list[str]:
    return scenario.bundle_codes(bundle)


def bundle_from_json(codes: Sequence[str], scenario: Scenario) -> Bundle:
    return scenario.bundle_from_codes(codes)


def bid_to_json(bid: XorBid, scenario: Scenario) -> dict:
    return {
        "atoms": [
            {"bundle": bundle_to_json(b, scenario), "value_cents": v}
            for b, v in bid.atoms
        ]
    }


def bid_from_json(data: Mapping, scenario: Scenario) -> XorBid:
    pairs = [
        (bundle_from_json(a["bundle"], scenario), int(a["value_cents"]))
        for a in data["atoms"]
    ]
    return XorBid.from_atoms(scenario.n_goods, pairs)


def dump_json(data, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
