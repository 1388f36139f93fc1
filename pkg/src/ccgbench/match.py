"""Full-match driver shared by data collection, evaluation and replay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import encoding
from .agents import Agent, AgentError, checked_act
from .cardgen import CardPool
from .engine import GameState, Outcome, Phase, apply_action, legal_mask, new_game

# callback(player, stage, obs, mask, action) invoked for every decision
DecisionHook = Callable[[int, Phase, np.ndarray, np.ndarray, int], None]


@dataclass
class MatchResult:
    pool_seed: int
    game_seed: int
    actions: list[int] = field(default_factory=list)
    outcome: Outcome | None = None
    winner: int | None = None  # seat index, None on draw or unfinished
    forfeited_by: int | None = None
    half_moves: int = 0
    rounds: int = 0
    final_digest: str = ""

    def result_label(self) -> str:
        if self.forfeited_by is not None:
            return f"forfeit:{self.forfeited_by}"
        assert self.outcome is not None
        return self.outcome.value


def play_match(
    agents: tuple[Agent, Agent],
    pool: CardPool,
    game_seed: int,
    rngs: tuple[np.random.Generator, np.random.Generator],
    drafter: Agent | None = None,
    drafter_rng: np.random.Generator | None = None,
    on_decision: DecisionHook | None = None,
) -> MatchResult:
    """Run one match to the end. Agent faults forfeit the match, not the run.

    ``agents[i]`` plays seat i. When ``drafter`` is set it makes every
    constructed pick for both seats; seat agents then only play the battle.
    """
    state = new_game(pool, game_seed)
    result = MatchResult(pool_seed=pool.pool_seed, game_seed=game_seed)

    while state.phase is not Phase.FINISHED:
        player = state.active_player
        if state.phase is Phase.CONSTRUCTED and drafter is not None:
            actor, rng = drafter, (drafter_rng if drafter_rng is not None else rngs[player])
        else:
            actor, rng = agents[player], rngs[player]
        obs = encoding.encode(state, player)
        mask = legal_mask(state, player)
        try:
            action = checked_act(actor, obs, mask, rng)
        except AgentError:
            result.forfeited_by = player
            result.winner = 1 - player
            break
        if on_decision is not None and actor is not drafter:
            on_decision(player, state.phase, obs, mask, action)
        apply_action(state, action)
        result.actions.append(action)
        result.half_moves += 1

    if state.phase is Phase.FINISHED:
        result.outcome = state.outcome
        if state.outcome is Outcome.P1_WIN:
            result.winner = 0
        elif state.outcome is Outcome.P2_WIN:
            result.winner = 1
    result.rounds = state.battle_round
    result.final_digest = state.digest()
    return result


def replay_match(pool: CardPool, game_seed: int, actions: list[int]) -> GameState:
    """Re-apply a recorded action sequence; engine determinism makes this exact."""
    state = new_game(pool, game_seed)
    for action in actions:
        apply_action(state, action)
    return state
