"""Deterministic rules engine for the two-stage card game.

Stage one ("constructed"): both players assemble a 30-card deck from the
shared 120-card pool, at most two copies per card, one pick per player per
round. Picks are hidden; observations never expose the opponent's choices.

Stage two ("battle"): turn-based combat on two lanes of up to three
creatures per player, up to 50 rounds. Flat battle action codes:

    0                  Pass
    1   .. 16          Summon(hand_slot 0..7, lane 0..1), slot-major
    17  .. 120         Use(hand_slot 0..7, target 0..12), slot-major
    121 .. 144         Attack(attacker_slot 0..5, target 0..3), attacker-major

Use targets: 0..5 own creatures (lane-major), 6..11 enemy creatures
(lane-major), 12 the opponent's face. Attack targets: 0..2 the enemy
creatures in the attacker's lane by current position, 3 the face.

All randomness flows through the state-owned generator; the only random
event after ``new_game`` is the deck shuffle in ``begin_battle``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .cardgen import (
    BLUE_ITEM,
    CREATURE,
    GREEN_ITEM,
    KW_BREAKTHROUGH,
    KW_CHARGE,
    KW_DRAIN,
    KW_GUARD,
    KW_LETHAL,
    KW_WARD,
    POOL_SIZE,
    RED_ITEM,
    CardPool,
)

DECK_SIZE = 30
MAX_COPIES = 2
HAND_LIMIT = 8
LANE_COUNT = 2
LANE_CAP = 3
MAX_ROUNDS = 50
MANA_CAP = 12
START_HEALTH = 30
FIRST_HAND = 4
SECOND_HAND = 5

CONSTRUCTED_ACTIONS = 120
BATTLE_ACTIONS = 145

PASS = 0
SUMMON_BASE = 1  # 16 codes
USE_BASE = 17  # 104 codes
ATTACK_BASE = 121  # 24 codes
USE_FACE_TARGET = 12


class Phase(Enum):
    CONSTRUCTED = "constructed"
    BATTLE = "battle"
    FINISHED = "finished"


class Outcome(Enum):
    P1_WIN = "p1_win"
    P2_WIN = "p2_win"
    DRAW = "draw"


class EngineError(Exception):
    pass


class InvalidPoolError(EngineError):
    pass


class PhaseError(EngineError):
    pass


class NotYourTurnError(EngineError):
    pass


class DecodeError(EngineError):
    pass


class IllegalActionError(EngineError):
    def __init__(self, index: int, reason: str = ""):
        self.index = index
        super().__init__(f"illegal action {index}" + (f": {reason}" if reason else ""))


# ---------------------------------------------------------------------------
# Structured actions and the flat-code bijection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pass:
    pass


@dataclass(frozen=True)
class Pick:
    card_id: int


@dataclass(frozen=True)
class Summon:
    hand_slot: int
    lane: int


@dataclass(frozen=True)
class Use:
    hand_slot: int
    target: int


@dataclass(frozen=True)
class Attack:
    attacker_slot: int
    target: int


Action = Pass | Pick | Summon | Use | Attack


def decode_battle(index: int) -> Action:
    if not 0 <= index < BATTLE_ACTIONS:
        raise DecodeError(f"battle action index {index} out of range [0, {BATTLE_ACTIONS})")
    if index == PASS:
        return Pass()
    if index < USE_BASE:
        i = index - SUMMON_BASE
        return Summon(i // LANE_COUNT, i % LANE_COUNT)
    if index < ATTACK_BASE:
        i = index - USE_BASE
        return Use(i // 13, i % 13)
    i = index - ATTACK_BASE
    return Attack(i // 4, i % 4)


def encode_battle_action(action: Action) -> int:
    if isinstance(action, Pass):
        return PASS
    if isinstance(action, Summon):
        return SUMMON_BASE + action.hand_slot * LANE_COUNT + action.lane
    if isinstance(action, Use):
        return USE_BASE + action.hand_slot * 13 + action.target
    if isinstance(action, Attack):
        return ATTACK_BASE + action.attacker_slot * 4 + action.target
    raise DecodeError(f"{action!r} is not a battle action")


def decode_constructed(index: int) -> Pick:
    if not 0 <= index < CONSTRUCTED_ACTIONS:
        raise DecodeError(f"constructed action index {index} out of range [0, {CONSTRUCTED_ACTIONS})")
    return Pick(index)


def encode_constructed_action(action: Pick) -> int:
    if not isinstance(action, Pick):
        raise DecodeError(f"{action!r} is not a constructed action")
    return action.card_id


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------


class CreatureInstance:
    __slots__ = ("instance_id", "card_id", "attack", "defense", "keywords", "can_attack", "has_attacked_this_turn")

    def __init__(self, instance_id: int, card_id: int, attack: int, defense: int, keywords: int, can_attack: bool):
        self.instance_id = instance_id
        self.card_id = card_id
        self.attack = attack
        self.defense = defense
        self.keywords = keywords
        self.can_attack = can_attack
        self.has_attacked_this_turn = False

    def clone(self) -> "CreatureInstance":
        c = CreatureInstance(self.instance_id, self.card_id, self.attack, self.defense, self.keywords, self.can_attack)
        c.has_attacked_this_turn = self.has_attacked_this_turn
        return c

    def ready(self) -> bool:
        return self.can_attack and not self.has_attacked_this_turn

    def __repr__(self) -> str:
        return (
            f"CreatureInstance(#{self.instance_id} card={self.card_id} {self.attack}/{self.defense}"
            f" kw={self.keywords} ready={self.ready()})"
        )


class PlayerState:
    __slots__ = (
        "health",
        "mana_max",
        "mana_current",
        "deck",
        "hand",
        "lanes",
        "picks",
        "missed_draws",
        "pending_draw",
    )

    def __init__(self):
        self.health = START_HEALTH
        self.mana_max = 0
        self.mana_current = 0
        self.deck: list[int] = []
        self.hand: list[int] = []
        self.lanes: tuple[list[CreatureInstance], list[CreatureInstance]] = ([], [])
        self.picks = [0] * POOL_SIZE
        self.missed_draws = 0
        self.pending_draw = 0

    def pick_total(self) -> int:
        return sum(self.picks)

    def clone(self) -> "PlayerState":
        p = PlayerState.__new__(PlayerState)
        p.health = self.health
        p.mana_max = self.mana_max
        p.mana_current = self.mana_current
        p.deck = list(self.deck)
        p.hand = list(self.hand)
        p.lanes = ([c.clone() for c in self.lanes[0]], [c.clone() for c in self.lanes[1]])
        p.picks = list(self.picks)
        p.missed_draws = self.missed_draws
        p.pending_draw = self.pending_draw
        return p


class GameState:
    __slots__ = (
        "phase",
        "pool",
        "players",
        "active_player",
        "constructed_turn",
        "battle_round",
        "rng",
        "outcome",
        "next_instance_id",
    )

    def __init__(self, pool: CardPool, rng: np.random.Generator):
        self.phase = Phase.CONSTRUCTED
        self.pool = pool
        self.players = (PlayerState(), PlayerState())
        self.active_player = 0
        self.constructed_turn = 0
        self.battle_round = 0
        self.rng = rng
        self.outcome: Outcome | None = None
        self.next_instance_id = 0

    def clone(self) -> "GameState":
        s = GameState.__new__(GameState)
        s.phase = self.phase
        s.pool = self.pool  # immutable, shared
        s.players = (self.players[0].clone(), self.players[1].clone())
        s.active_player = self.active_player
        s.constructed_turn = self.constructed_turn
        s.battle_round = self.battle_round
        gen = np.random.Generator(np.random.PCG64())
        gen.bit_generator.state = self.rng.bit_generator.state
        s.rng = gen
        s.outcome = self.outcome
        s.next_instance_id = self.next_instance_id
        return s

    def structural_repr(self) -> str:
        """Canonical text form of everything but the RNG internals."""
        parts = [f"phase={self.phase.value}", f"pool={self.pool.pool_seed}"]
        parts.append(f"active={self.active_player} cturn={self.constructed_turn} round={self.battle_round}")
        parts.append(f"outcome={self.outcome.value if self.outcome else '-'}")
        for i, p in enumerate(self.players):
            lanes = ";".join(
                ",".join(f"{c.card_id}:{c.attack}/{c.defense}/{c.keywords}/{int(c.ready())}" for c in lane)
                for lane in p.lanes
            )
            parts.append(
                f"p{i} hp={p.health} mana={p.mana_current}/{p.mana_max} deck={p.deck} hand={p.hand}"
                f" lanes=[{lanes}] picks={p.picks} missed={p.missed_draws} pending={p.pending_draw}"
            )
        return "\n".join(parts)

    def digest(self) -> str:
        return hashlib.sha256(self.structural_repr().encode()).hexdigest()


def new_game(pool: CardPool, seed: int) -> GameState:
    """Fresh constructed-stage state; fully deterministic in (pool, seed)."""
    if len(pool) != POOL_SIZE:
        raise InvalidPoolError(f"pool must contain {POOL_SIZE} cards, got {len(pool)}")
    return GameState(pool, np.random.Generator(np.random.PCG64(seed)))


def begin_battle(state: GameState) -> GameState:
    """Shuffle decks, deal 4/5 opening hands, hand the first turn to player 0."""
    if state.phase is not Phase.CONSTRUCTED:
        raise PhaseError("begin_battle requires the constructed phase")
    for i, p in enumerate(state.players):
        if p.pick_total() != DECK_SIZE:
            raise PhaseError(f"player {i} has {p.pick_total()} picks, need {DECK_SIZE}")
    for p in state.players:
        deck = []
        for card_id, count in enumerate(p.picks):
            deck.extend([card_id] * count)
        perm = state.rng.permutation(DECK_SIZE)
        p.deck = [deck[j] for j in perm]
    state.players[0].hand = [state.players[0].deck.pop() for _ in range(FIRST_HAND)]
    state.players[1].hand = [state.players[1].deck.pop() for _ in range(SECOND_HAND)]
    state.phase = Phase.BATTLE
    state.active_player = 0
    state.battle_round = 1
    p0 = state.players[0]
    p0.mana_max = 1
    p0.mana_current = 1
    return state


# ---------------------------------------------------------------------------
# Legality
# ---------------------------------------------------------------------------


def _lane_has_guard(lane: list[CreatureInstance]) -> bool:
    for c in lane:
        if c.keywords & KW_GUARD:
            return True
    return False


def _use_target_ok(state: GameState, player: int, kind: int, target: int) -> bool:
    me = state.players[player]
    opp = state.players[1 - player]
    if kind == GREEN_ITEM:
        if target > 5:
            return False
        lane, pos = divmod(target, LANE_CAP)
        return pos < len(me.lanes[lane])
    if kind == RED_ITEM:
        if not 6 <= target <= 11:
            return False
        lane, pos = divmod(target - 6, LANE_CAP)
        return pos < len(opp.lanes[lane])
    # blue: enemy creature or face
    if target == USE_FACE_TARGET:
        return True
    if not 6 <= target <= 11:
        return False
    lane, pos = divmod(target - 6, LANE_CAP)
    return pos < len(opp.lanes[lane])


def legal_mask(state: GameState, player: int) -> np.ndarray:
    """Boolean legality vector: 120 codes in constructed, 145 in battle.

    Bit i is true iff apply_action(state, i) would succeed for the active
    player.
    """
    if state.phase is Phase.FINISHED:
        raise PhaseError("no legal actions in a finished game")
    if player != state.active_player:
        raise NotYourTurnError(f"player {player} is not active")

    if state.phase is Phase.CONSTRUCTED:
        return np.asarray(state.players[player].picks) < MAX_COPIES

    mask = np.zeros(BATTLE_ACTIONS, dtype=bool)
    mask[PASS] = True
    me = state.players[player]
    opp = state.players[1 - player]
    pool = state.pool
    mana = me.mana_current
    lane_open = (len(me.lanes[0]) < LANE_CAP, len(me.lanes[1]) < LANE_CAP)

    for slot, card_id in enumerate(me.hand):
        card = pool[card_id]
        if card.cost > mana:
            continue
        if card.kind == CREATURE:
            base = SUMMON_BASE + slot * LANE_COUNT
            if lane_open[0]:
                mask[base] = True
            if lane_open[1]:
                mask[base + 1] = True
        else:
            base = USE_BASE + slot * 13
            if card.kind == GREEN_ITEM:
                for lane in range(LANE_COUNT):
                    for pos in range(len(me.lanes[lane])):
                        mask[base + lane * LANE_CAP + pos] = True
            else:
                for lane in range(LANE_COUNT):
                    for pos in range(len(opp.lanes[lane])):
                        mask[base + 6 + lane * LANE_CAP + pos] = True
                if card.kind == BLUE_ITEM:
                    mask[base + USE_FACE_TARGET] = True

    for lane in range(LANE_COUNT):
        enemy_lane = opp.lanes[lane]
        guard = _lane_has_guard(enemy_lane)
        for pos, creature in enumerate(me.lanes[lane]):
            if not creature.ready():
                continue
            base = ATTACK_BASE + (lane * LANE_CAP + pos) * 4
            if guard:
                for t, enemy in enumerate(enemy_lane):
                    if enemy.keywords & KW_GUARD:
                        mask[base + t] = True
            else:
                for t in range(len(enemy_lane)):
                    mask[base + t] = True
                mask[base + 3] = True
    return mask


def _battle_action_legal(state: GameState, player: int, index: int) -> bool:
    """Single-action legality; mirrors legal_mask exactly."""
    if index == PASS:
        return True
    if not 0 < index < BATTLE_ACTIONS:
        return False
    me = state.players[player]
    opp = state.players[1 - player]
    if index < USE_BASE:
        i = index - SUMMON_BASE
        slot, lane = divmod(i, LANE_COUNT)
        if slot >= len(me.hand):
            return False
        card = state.pool[me.hand[slot]]
        return card.kind == CREATURE and card.cost <= me.mana_current and len(me.lanes[lane]) < LANE_CAP
    if index < ATTACK_BASE:
        i = index - USE_BASE
        slot, target = divmod(i, 13)
        if slot >= len(me.hand):
            return False
        card = state.pool[me.hand[slot]]
        if card.kind == CREATURE or card.cost > me.mana_current:
            return False
        return _use_target_ok(state, player, card.kind, target)
    i = index - ATTACK_BASE
    attacker_slot, target = divmod(i, 4)
    lane, pos = divmod(attacker_slot, LANE_CAP)
    if pos >= len(me.lanes[lane]):
        return False
    if not me.lanes[lane][pos].ready():
        return False
    enemy_lane = opp.lanes[lane]
    if target == 3:
        return not _lane_has_guard(enemy_lane)
    if target >= len(enemy_lane):
        return False
    if _lane_has_guard(enemy_lane) and not (enemy_lane[target].keywords & KW_GUARD):
        return False
    return True


# ---------------------------------------------------------------------------
# Transitions
# ---------------------------------------------------------------------------


def _finish(state: GameState) -> tuple[int, int]:
    h0 = state.players[0].health
    h1 = state.players[1].health
    state.phase = Phase.FINISHED
    if h0 <= 0 and h1 <= 0:
        state.outcome = Outcome.DRAW
        return (0, 0)
    if h1 <= 0:
        state.outcome = Outcome.P1_WIN
        return (1, -1)
    state.outcome = Outcome.P2_WIN
    return (-1, 1)


def _check_terminal(state: GameState) -> tuple[int, int]:
    if state.players[0].health <= 0 or state.players[1].health <= 0:
        return _finish(state)
    return (0, 0)


def _finish_exhausted(state: GameState) -> tuple[int, int]:
    h0 = state.players[0].health
    h1 = state.players[1].health
    state.phase = Phase.FINISHED
    if h0 > h1:
        state.outcome = Outcome.P1_WIN
        return (1, -1)
    if h1 > h0:
        state.outcome = Outcome.P2_WIN
        return (-1, 1)
    state.outcome = Outcome.DRAW
    return (0, 0)


def _draw_cards(player: PlayerState, count: int) -> None:
    for _ in range(count):
        if not player.deck:
            player.missed_draws += 1
            player.health -= player.missed_draws
            continue
        card_id = player.deck.pop()
        if len(player.hand) < HAND_LIMIT:
            player.hand.append(card_id)
        # else: overdrawn card is discarded


def _start_turn(state: GameState, player: int) -> None:
    p = state.players[player]
    p.mana_max = min(MANA_CAP, p.mana_max + 1)
    p.mana_current = p.mana_max
    for lane in p.lanes:
        for c in lane:
            c.can_attack = True
            c.has_attacked_this_turn = False
    draws = 1 + p.pending_draw
    p.pending_draw = 0
    _draw_cards(p, draws)


def _apply_pass(state: GameState) -> tuple[int, int]:
    cur = state.active_player
    nxt = 1 - cur
    if cur == 1 and state.battle_round >= MAX_ROUNDS:
        return _finish_exhausted(state)
    state.active_player = nxt
    if nxt == 0:
        state.battle_round += 1
    _start_turn(state, nxt)
    return _check_terminal(state)


def _apply_charms(state: GameState, player: int, card) -> None:
    me = state.players[player]
    me.health += card.player_hp
    state.players[1 - player].health += card.opponent_hp
    me.pending_draw += card.card_draw


def _apply_summon(state: GameState, player: int, slot: int, lane: int) -> tuple[int, int]:
    me = state.players[player]
    card = state.pool[me.hand.pop(slot)]
    me.mana_current -= card.cost
    creature = CreatureInstance(
        state.next_instance_id,
        card.id,
        card.attack,
        card.defense,
        card.keywords,
        can_attack=bool(card.keywords & KW_CHARGE),
    )
    state.next_instance_id += 1
    me.lanes[lane].append(creature)
    _apply_charms(state, player, card)
    return _check_terminal(state)


def _item_damage(creature: CreatureInstance, amount: int) -> None:
    if amount <= 0:
        return
    if creature.keywords & KW_WARD:
        creature.keywords &= ~KW_WARD
        return
    creature.defense -= amount


def _remove_dead(player: PlayerState) -> None:
    for i in range(LANE_COUNT):
        lane = player.lanes[i]
        if any(c.defense <= 0 for c in lane):
            lane[:] = [c for c in lane if c.defense > 0]


def _apply_use(state: GameState, player: int, slot: int, target: int) -> tuple[int, int]:
    me = state.players[player]
    opp = state.players[1 - player]
    card = state.pool[me.hand.pop(slot)]
    me.mana_current -= card.cost

    if card.kind == GREEN_ITEM:
        lane, pos = divmod(target, LANE_CAP)
        creature = me.lanes[lane][pos]
        creature.attack += card.attack
        creature.defense += card.defense
        creature.keywords |= card.keywords
    elif target == USE_FACE_TARGET:
        opp.health += card.defense  # blue burst, defense delta <= 0
    else:
        lane, pos = divmod(target - 6, LANE_CAP)
        creature = opp.lanes[lane][pos]
        if card.kind == RED_ITEM:
            # keyword removal resolves before damage, so stripping Ward
            # lets the same item's damage land
            creature.keywords &= ~card.keywords
        creature.attack = max(0, creature.attack + card.attack)
        _item_damage(creature, -card.defense)
        if creature.defense <= 0:
            _remove_dead(opp)
    _apply_charms(state, player, card)
    return _check_terminal(state)


def _apply_attack(state: GameState, player: int, attacker_slot: int, target: int) -> tuple[int, int]:
    me = state.players[player]
    opp = state.players[1 - player]
    lane, pos = divmod(attacker_slot, LANE_CAP)
    attacker = me.lanes[lane][pos]
    attacker.has_attacked_this_turn = True

    if target == 3:
        dmg = attacker.attack
        opp.health -= dmg
        if dmg > 0 and attacker.keywords & KW_DRAIN:
            me.health += dmg
        return _check_terminal(state)

    defender = opp.lanes[lane][target]
    a_dmg = attacker.attack
    d_dmg = defender.attack
    def_before = defender.defense
    face_overflow = 0

    # attacker hits defender
    if a_dmg > 0:
        if defender.keywords & KW_WARD:
            defender.keywords &= ~KW_WARD
        else:
            defender.defense -= a_dmg
            if attacker.keywords & KW_LETHAL and defender.defense > 0:
                defender.defense = 0
            if attacker.keywords & KW_BREAKTHROUGH and a_dmg > def_before:
                face_overflow = a_dmg - def_before
            if attacker.keywords & KW_DRAIN:
                me.health += a_dmg

    # defender strikes back simultaneously
    if d_dmg > 0:
        if attacker.keywords & KW_WARD:
            attacker.keywords &= ~KW_WARD
        else:
            attacker.defense -= d_dmg
            if defender.keywords & KW_LETHAL and attacker.defense > 0:
                attacker.defense = 0
            if defender.keywords & KW_DRAIN:
                opp.health += d_dmg

    if face_overflow:
        opp.health -= face_overflow
    _remove_dead(me)
    _remove_dead(opp)
    return _check_terminal(state)


def apply_action(state: GameState, index: int) -> tuple[GameState, tuple[int, int]]:
    """Apply a flat action code in place; returns (state, (reward_p0, reward_p1)).

    Rewards are (0, 0) for every non-terminal transition, and +1/-1 (or
    (0, 0) on a draw) exactly once when the game finishes.
    """
    if state.phase is Phase.FINISHED:
        raise PhaseError("cannot act on a finished game")
    player = state.active_player

    if state.phase is Phase.CONSTRUCTED:
        if not 0 <= index < CONSTRUCTED_ACTIONS:
            raise IllegalActionError(index, "constructed index out of range")
        me = state.players[player]
        if me.picks[index] >= MAX_COPIES:
            raise IllegalActionError(index, "already picked twice")
        me.picks[index] += 1
        if player == 0:
            state.active_player = 1
        else:
            state.active_player = 0
            state.constructed_turn += 1
            if state.constructed_turn == DECK_SIZE:
                begin_battle(state)
        return state, (0, 0)

    if not 0 <= index < BATTLE_ACTIONS:
        raise IllegalActionError(index, "battle index out of range")
    if not _battle_action_legal(state, player, index):
        raise IllegalActionError(index)

    if index == PASS:
        return state, _apply_pass(state)
    if index < USE_BASE:
        i = index - SUMMON_BASE
        return state, _apply_summon(state, player, i // LANE_COUNT, i % LANE_COUNT)
    if index < ATTACK_BASE:
        i = index - USE_BASE
        return state, _apply_use(state, player, i // 13, i % 13)
    i = index - ATTACK_BASE
    return state, _apply_attack(state, player, i // 4, i % 4)
