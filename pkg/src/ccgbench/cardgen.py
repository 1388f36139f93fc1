"""Seeded procedural card generation and fixed pool registries.

A pool is 120 cards regenerated bit-identically from a 64-bit seed. No
balancing pass runs on purpose: degenerate combinations (a zero-cost
creature with the instant-kill keyword, say) are part of the game.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Iterator

import numpy as np

POOL_SIZE = 120

CREATURE = 0
GREEN_ITEM = 1
RED_ITEM = 2
BLUE_ITEM = 3

KIND_NAMES = ("creature", "green_item", "red_item", "blue_item")

# Keyword bit positions, in flag-string order "BCDGLW".
KW_BREAKTHROUGH = 1
KW_CHARGE = 2
KW_DRAIN = 4
KW_GUARD = 8
KW_LETHAL = 16
KW_WARD = 32

KEYWORD_LETTERS = "BCDGLW"
ALL_KEYWORDS = (KW_BREAKTHROUGH, KW_CHARGE, KW_DRAIN, KW_GUARD, KW_LETHAL, KW_WARD)


def keywords_to_string(mask: int) -> str:
    return "".join(letter if mask & bit else "-" for letter, bit in zip(KEYWORD_LETTERS, ALL_KEYWORDS))


def keywords_from_string(flags: str) -> int:
    if len(flags) != 6:
        raise ValueError(f"keyword flag string must have 6 characters, got {flags!r}")
    mask = 0
    for ch, letter, bit in zip(flags, KEYWORD_LETTERS, ALL_KEYWORDS):
        if ch == letter:
            mask |= bit
        elif ch != "-":
            raise ValueError(f"unexpected flag character {ch!r} in {flags!r}")
    return mask


@dataclass(frozen=True)
class Card:
    """One card definition. For items, attack/defense are signed deltas."""

    id: int
    kind: int
    cost: int
    attack: int
    defense: int
    keywords: int  # bitmask over ALL_KEYWORDS
    player_hp: int  # health delta applied to the card's owner on play
    opponent_hp: int  # health delta applied to the opponent on play, <= 0
    card_draw: int  # bonus cards drawn at the owner's next draw step

    def is_creature(self) -> bool:
        return self.kind == CREATURE

    def validate(self) -> None:
        if not 0 <= self.id < POOL_SIZE:
            raise ValueError(f"card id {self.id} out of range")
        if self.kind not in (CREATURE, GREEN_ITEM, RED_ITEM, BLUE_ITEM):
            raise ValueError(f"bad kind {self.kind}")
        if self.cost < 0:
            raise ValueError("cost must be >= 0")
        if self.opponent_hp > 0:
            raise ValueError("opponent_hp must be <= 0")
        if self.card_draw < 0:
            raise ValueError("card_draw must be >= 0")
        if self.kind == CREATURE:
            if self.defense < 1:
                raise ValueError("creature defense must be >= 1")
            if self.attack < 0:
                raise ValueError("creature attack must be >= 0")
        elif self.kind == GREEN_ITEM:
            if self.attack < 0 or self.defense < 0:
                raise ValueError("green item deltas must be >= 0")
        elif self.kind == RED_ITEM:
            if self.attack > 0 or self.defense > 0:
                raise ValueError("red item deltas must be <= 0")
        else:  # blue item
            if self.defense > 0:
                raise ValueError("blue item defense delta must be <= 0")

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "kind": KIND_NAMES[self.kind],
            "cost": self.cost,
            "attack": self.attack,
            "defense": self.defense,
            "keywords": keywords_to_string(self.keywords),
            "player_hp": self.player_hp,
            "opponent_hp": self.opponent_hp,
            "card_draw": self.card_draw,
        }

    @staticmethod
    def from_record(rec: dict) -> "Card":
        card = Card(
            id=int(rec["id"]),
            kind=KIND_NAMES.index(rec["kind"]),
            cost=int(rec["cost"]),
            attack=int(rec["attack"]),
            defense=int(rec["defense"]),
            keywords=keywords_from_string(rec["keywords"]),
            player_hp=int(rec["player_hp"]),
            opponent_hp=int(rec["opponent_hp"]),
            card_draw=int(rec["card_draw"]),
        )
        card.validate()
        return card


@dataclass(frozen=True)
class GeneratorParams:
    """Distribution knobs for the card generator. All overridable via config."""

    creature_weight: float = 0.70
    green_weight: float = 0.10
    red_weight: float = 0.10
    blue_weight: float = 0.10
    max_cost: int = 12
    stat_budget_per_cost: float = 2.0
    stat_noise: float = 0.5  # budget multiplier drawn from [1-noise, 1+noise]
    keyword_prob: float = 0.1  # each keyword independently
    bonus_prob: float = 0.1  # each of player_hp / opponent_hp / card_draw

    def kind_weights(self) -> np.ndarray:
        w = np.array(
            [self.creature_weight, self.green_weight, self.red_weight, self.blue_weight],
            dtype=np.float64,
        )
        total = w.sum()
        if total <= 0:
            raise ValueError("kind weights must sum to a positive value")
        return w / total

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "GeneratorParams":
        return GeneratorParams(**d)


class CardPool:
    """Exactly 120 cards with ids 0..119, regenerable from pool_seed."""

    __slots__ = ("pool_seed", "cards", "_feature_matrix")

    def __init__(self, pool_seed: int, cards: list[Card]):
        if len(cards) != POOL_SIZE:
            raise ValueError(f"pool must contain {POOL_SIZE} cards, got {len(cards)}")
        for i, card in enumerate(cards):
            if card.id != i:
                raise ValueError(f"card at position {i} has id {card.id}")
        self.pool_seed = pool_seed
        self.cards = tuple(cards)
        self._feature_matrix = None

    def __len__(self) -> int:
        return POOL_SIZE

    def __getitem__(self, card_id: int) -> Card:
        return self.cards[card_id]

    def __iter__(self) -> Iterator[Card]:
        return iter(self.cards)

    def feature_matrix(self) -> np.ndarray:
        """Cached (120, 16) float32 per-card feature rows (see encoding)."""
        if self._feature_matrix is None:
            from . import encoding

            self._feature_matrix = encoding.card_feature_matrix(self)
        return self._feature_matrix

    def to_json(self) -> str:
        payload = {"pool_seed": self.pool_seed, "cards": [c.to_record() for c in self.cards]}
        return json.dumps(payload, indent=1)

    @staticmethod
    def from_json(text: str) -> "CardPool":
        payload = json.loads(text)
        cards = [Card.from_record(rec) for rec in payload["cards"]]
        return CardPool(int(payload.get("pool_seed", -1)), cards)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())
            f.write("\n")

    @staticmethod
    def load(path) -> "CardPool":
        with open(path, "r", encoding="utf-8") as f:
            return CardPool.from_json(f.read())


def _draw_card(card_id: int, rng: np.random.Generator, params: GeneratorParams, weights: np.ndarray) -> Card:
    kind = int(rng.choice(4, p=weights))
    cost = int(rng.integers(0, params.max_cost + 1))
    noise = float(rng.uniform(1.0 - params.stat_noise, 1.0 + params.stat_noise))
    budget = max(0, int(round((params.stat_budget_per_cost * cost + 1.0) * noise)))

    if kind == CREATURE:
        attack = int(rng.integers(0, budget + 1))
        defense = max(1, budget - attack)
    elif kind == GREEN_ITEM:
        attack = int(rng.integers(0, budget + 1))
        defense = budget - attack
    elif kind == RED_ITEM:
        attack = -int(rng.integers(0, budget + 1))
        defense = -(budget + attack)  # attack is <= 0 here
    else:  # blue: pure burst, no attack delta
        attack = 0
        defense = -budget

    keywords = 0
    for bit in ALL_KEYWORDS:
        if rng.random() < params.keyword_prob:
            keywords |= bit

    player_hp = int(rng.integers(1, 4)) if rng.random() < params.bonus_prob else 0
    opponent_hp = -int(rng.integers(1, 4)) if rng.random() < params.bonus_prob else 0
    card_draw = int(rng.integers(1, 3)) if rng.random() < params.bonus_prob else 0

    card = Card(card_id, kind, cost, attack, defense, keywords, player_hp, opponent_hp, card_draw)
    card.validate()
    return card


def generate_pool(pool_seed: int, params: GeneratorParams | None = None) -> CardPool:
    """Generate the 120-card pool for a seed. Pure function of (seed, params)."""
    params = params or GeneratorParams()
    rng = np.random.Generator(np.random.PCG64(pool_seed))
    weights = params.kind_weights()
    cards = [_draw_card(i, rng, params, weights) for i in range(POOL_SIZE)]
    return CardPool(pool_seed, cards)


class PoolRegistry:
    """Fixed family of pools generated from seeds 0..size-1.

    Pools are generated lazily and cached, so registry(1024) is cheap to
    construct. Prefix property: registry(n).get(i) == registry(m).get(i)
    for every i < min(n, m).
    """

    def __init__(self, size: int, params: GeneratorParams | None = None):
        if size < 1:
            raise ValueError(f"registry size must be >= 1, got {size}")
        self.size = size
        self.params = params or GeneratorParams()
        self._cache: dict[int, CardPool] = {}

    def get(self, index: int) -> CardPool:
        if not 0 <= index < self.size:
            raise IndexError(f"pool index {index} out of range for size {self.size}")
        pool = self._cache.get(index)
        if pool is None:
            pool = generate_pool(index, self.params)
            self._cache[index] = pool
        return pool

    def __len__(self) -> int:
        return self.size

    def sample(self, rng: np.random.Generator) -> CardPool:
        """Draw a pool uniformly for one episode."""
        return self.get(int(rng.integers(0, self.size)))


def registry(size: int, params: GeneratorParams | None = None) -> PoolRegistry:
    return PoolRegistry(size, params)
