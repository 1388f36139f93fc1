"""Fixed-width observation vectors for both stages.

Constructed observations are 2040 floats: 120 cards x 16 card features in
pool order, then 120 own pick counts scaled by 1/2. Battle observations
are 244 floats: 8 player scalars, 8 hand slots x 16 card features, then
12 board slots x 9 creature features. Both encoders are pure functions of
(state, player) and never read hidden information (opponent hand contents,
either deck's ordering).

Per-card features (16):
    [0..3]  kind one-hot: creature, green item, red item, blue item
    [4]     cost / 12
    [5]     attack / 12          (items: signed delta / 12)
    [6]     defense / 12         (items: signed delta / 12)
    [7..12] keyword flags, order "BCDGLW"
    [13]    player_hp / 3
    [14]    opponent_hp / 3
    [15]    card_draw / 2

Per-creature board features (9):
    [0] attack / 12, [1] defense / 12, [2..7] keyword flags "BCDGLW",
    [8] 1.0 if the creature may still attack this turn

Board slot order: own lane 0 (positions 0..2), own lane 1, enemy lane 0,
enemy lane 1. Empty slots stay zero.
"""

from __future__ import annotations

import numpy as np

from .cardgen import ALL_KEYWORDS, POOL_SIZE, CardPool
from .engine import GameState, Phase, PhaseError

CONSTRUCTED_OBS_LEN = 2040
BATTLE_OBS_LEN = 244

CARD_FEATURES = 16
CREATURE_FEATURES = 9
BOARD_SLOTS = 12

HEALTH_SCALE = 30.0
MANA_SCALE = 12.0
DECK_SCALE = 30.0
HAND_SCALE = 8.0
COST_SCALE = 12.0
STAT_SCALE = 12.0
HP_DELTA_SCALE = 3.0
CARD_DRAW_SCALE = 2.0
PICK_SCALE = 2.0

HAND_BLOCK_START = 8
BOARD_BLOCK_START = HAND_BLOCK_START + 8 * CARD_FEATURES  # 136


def card_feature_row(card) -> np.ndarray:
    row = np.zeros(CARD_FEATURES, dtype=np.float32)
    row[card.kind] = 1.0
    row[4] = card.cost / COST_SCALE
    row[5] = card.attack / STAT_SCALE
    row[6] = card.defense / STAT_SCALE
    for j, bit in enumerate(ALL_KEYWORDS):
        if card.keywords & bit:
            row[7 + j] = 1.0
    row[13] = card.player_hp / HP_DELTA_SCALE
    row[14] = card.opponent_hp / HP_DELTA_SCALE
    row[15] = card.card_draw / CARD_DRAW_SCALE
    return row


def card_feature_matrix(pool: CardPool) -> np.ndarray:
    return np.stack([card_feature_row(c) for c in pool])


def encode_constructed(state: GameState, player: int) -> np.ndarray:
    if state.phase is not Phase.CONSTRUCTED:
        raise PhaseError("constructed encoding requires the constructed phase")
    obs = np.empty(CONSTRUCTED_OBS_LEN, dtype=np.float32)
    obs[: POOL_SIZE * CARD_FEATURES] = state.pool.feature_matrix().reshape(-1)
    picks = np.asarray(state.players[player].picks, dtype=np.float32)
    obs[POOL_SIZE * CARD_FEATURES :] = picks / PICK_SCALE
    return obs


def encode_battle(state: GameState, player: int) -> np.ndarray:
    if state.phase is not Phase.BATTLE:
        raise PhaseError("battle encoding requires the battle phase")
    if player != state.active_player:
        raise PhaseError(f"player {player} is not active")
    me = state.players[player]
    opp = state.players[1 - player]

    obs = np.zeros(BATTLE_OBS_LEN, dtype=np.float32)
    obs[0] = me.health / HEALTH_SCALE
    obs[1] = me.mana_current / MANA_SCALE
    obs[2] = len(me.deck) / DECK_SCALE
    obs[3] = len(me.hand) / HAND_SCALE
    obs[4] = opp.health / HEALTH_SCALE
    obs[5] = opp.mana_current / MANA_SCALE
    obs[6] = len(opp.deck) / DECK_SCALE
    obs[7] = len(opp.hand) / HAND_SCALE

    feats = state.pool.feature_matrix()
    for slot, card_id in enumerate(me.hand):
        start = HAND_BLOCK_START + slot * CARD_FEATURES
        obs[start : start + CARD_FEATURES] = feats[card_id]

    slot = 0
    for lanes in (me.lanes, opp.lanes):
        for lane in lanes:
            for pos in range(3):
                if pos < len(lane):
                    c = lane[pos]
                    start = BOARD_BLOCK_START + slot * CREATURE_FEATURES
                    obs[start] = c.attack / STAT_SCALE
                    obs[start + 1] = c.defense / STAT_SCALE
                    kw = c.keywords
                    for j, bit in enumerate(ALL_KEYWORDS):
                        if kw & bit:
                            obs[start + 2 + j] = 1.0
                    if c.can_attack and not c.has_attacked_this_turn:
                        obs[start + 8] = 1.0
                slot += 1
    return obs


def encode(state: GameState, player: int) -> np.ndarray:
    """Stage-appropriate observation for the given player."""
    if state.phase is Phase.CONSTRUCTED:
        return encode_constructed(state, player)
    return encode_battle(state, player)


def layout_reference() -> str:
    """Human-readable layout description for external agent authors."""
    lines = [
        "observation layouts",
        "===================",
        "",
        f"constructed: {CONSTRUCTED_OBS_LEN} float32",
        f"  [0..{POOL_SIZE * CARD_FEATURES - 1}]    120 cards x 16 features, pool order by card id",
        f"  [{POOL_SIZE * CARD_FEATURES}..{CONSTRUCTED_OBS_LEN - 1}]  own pick count per card id, scaled by 1/{PICK_SCALE:g}",
        "",
        f"battle: {BATTLE_OBS_LEN} float32",
        "  [0..7]      own health/30, own mana/12, own deck size/30, own hand size/8,",
        "              opponent health/30, mana/12, deck size/30, hand size/8",
        f"  [8..135]    8 hand slots x 16 card features (empty slots zero)",
        f"  [136..243]  12 board slots x 9 creature features,",
        "              slot order: own lane 0 (pos 0..2), own lane 1, enemy lane 0, enemy lane 1",
        "",
        "card features (16): kind one-hot (creature, green, red, blue), cost/12,",
        '  attack/12, defense/12, keyword flags "BCDGLW", player_hp/3, opponent_hp/3,',
        "  card_draw/2",
        "creature features (9): attack/12, defense/12, keyword flags \"BCDGLW\",",
        "  can-attack-now flag",
        "",
        "action codes",
        "============",
        "constructed: 0..119 = pick that card id",
        "battle: 0 pass; 1..16 summon(hand slot 0..7, lane 0..1) slot-major;",
        "  17..120 use(hand slot 0..7, target 0..12) slot-major, targets:",
        "  0..5 own creatures lane-major, 6..11 enemy creatures lane-major, 12 face;",
        "  121..144 attack(attacker slot 0..5, target 0..3) attacker-major, targets:",
        "  0..2 enemy creatures in the attacker's lane, 3 face",
        "",
    ]
    return "\n".join(lines)


def write_layout_reference(path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(layout_reference())
