"""Fixed-opponent single-agent view of the two-player game.

One protagonist decision is one timestep. Opponent turns (and, when a
drafter is configured, the entire constructed stage for both sides) run
internally, so the protagonist only ever sees states where it is about to
act. Rewards are reported from the protagonist's perspective and are
nonzero only on the terminal step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import encoding
from .agents import Agent, checked_act
from .cardgen import PoolRegistry
from .engine import GameState, Phase, apply_action, legal_mask, new_game


class EnvError(Exception):
    pass


class EnvFault(EnvError):
    """An internal (opponent or drafter) agent failed; the match is void.

    ``protagonist_reward`` carries the forfeit result: +1 because the
    failure was not the protagonist's.
    """

    def __init__(self, reason: str):
        self.protagonist_reward = 1
        super().__init__(reason)


@dataclass(frozen=True)
class TimeStep:
    obs: np.ndarray
    mask: np.ndarray
    reward: int
    terminal: bool


@dataclass
class Trajectory:
    match_id: int
    protagonist: int
    steps: list[tuple[TimeStep, int | None]] = field(default_factory=list)

    def validate(self) -> None:
        if not self.steps:
            raise EnvError("empty trajectory")
        for ts, action in self.steps[:-1]:
            if ts.terminal:
                raise EnvError("terminal step before the end")
            if ts.reward != 0:
                raise EnvError("nonzero reward on a non-terminal step")
            if action is None or not ts.mask[action]:
                raise EnvError("recorded action not legal under its mask")
        last_ts, last_action = self.steps[-1]
        if not last_ts.terminal:
            raise EnvError("trajectory does not end in a terminal step")
        if last_action is not None:
            raise EnvError("terminal step must not carry an action")

    def complete(self) -> bool:
        return bool(self.steps) and self.steps[-1][0].terminal


def episode_return(traj: Trajectory) -> int:
    """Sum of rewards; equals the terminal reward by the engine contract."""
    if not traj.complete():
        raise EnvError("incomplete trajectory")
    return sum(ts.reward for ts, _ in traj.steps)


_TERMINAL_OBS = None


def _terminal_step(reward: int) -> TimeStep:
    global _TERMINAL_OBS
    if _TERMINAL_OBS is None:
        _TERMINAL_OBS = np.zeros(encoding.BATTLE_OBS_LEN, dtype=np.float32)
        _TERMINAL_OBS.setflags(write=False)
    return TimeStep(_TERMINAL_OBS, np.zeros(0, dtype=bool), reward, True)


class SingleAgentEnv:
    """POMDP wrapper: protagonist vs a fixed opponent over a pool registry.

    With ``alternate_seats`` the protagonist seat flips every episode,
    removing first-move bias from aggregate returns. When ``drafter`` is
    set it plays the whole constructed stage for both sides and the first
    exposed observation is a battle one (length 244); otherwise the
    protagonist drafts for itself (first observation length 2040).
    """

    def __init__(
        self,
        opponent: Agent,
        registry: PoolRegistry,
        drafter: Agent | None = None,
        seed: int = 0,
        alternate_seats: bool = True,
        protagonist_seat: int = 0,
    ):
        if len(registry) < 1:
            raise EnvError("registry must be nonempty")
        self.opponent = opponent
        self.registry = registry
        self.drafter = drafter
        self.seed = seed
        self.alternate_seats = alternate_seats
        self._fixed_seat = protagonist_seat
        self.episode_index = 0
        self.protagonist = protagonist_seat
        self.match_id = -1
        self._state: GameState | None = None
        self._done = True
        self._rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        self._opp_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0x0FF))))

    def _internal_act(self, agent: Agent, state: GameState, player: int) -> int:
        obs = encoding.encode(state, player)
        mask = legal_mask(state, player)
        try:
            return checked_act(agent, obs, mask, self._opp_rng)
        except Exception as e:
            raise EnvFault(f"internal agent {agent.name!r} failed: {e}") from e

    def _advance_internal(self) -> tuple[int, int]:
        """Run drafter/opponent decisions until the protagonist must act."""
        state = self._state
        rewards = (0, 0)
        while state.phase is not Phase.FINISHED:
            player = state.active_player
            if state.phase is Phase.CONSTRUCTED and self.drafter is not None:
                actor = self.drafter
            elif player == self.protagonist:
                break
            else:
                actor = self.opponent
            action = self._internal_act(actor, state, player)
            _, r = apply_action(state, action)
            rewards = (rewards[0] + r[0], rewards[1] + r[1])
        return rewards

    def reset(self) -> TimeStep:
        episode = self.episode_index
        self.episode_index += 1
        self.protagonist = (episode % 2) if self.alternate_seats else self._fixed_seat
        self.match_id = episode
        pool = self.registry.sample(self._rng)
        game_seed = int(self._rng.integers(0, 2**63))
        self._state = new_game(pool, game_seed)
        self.opponent.reset(self.match_id)
        if self.drafter is not None:
            self.drafter.reset(self.match_id)
        rewards = self._advance_internal()
        self._done = self._state.phase is Phase.FINISHED
        if self._done:
            # possible only through drafter/opponent play (e.g. fatigue)
            return _terminal_step(rewards[self.protagonist])
        obs = encoding.encode(self._state, self.protagonist)
        mask = legal_mask(self._state, self.protagonist)
        return TimeStep(obs, mask, 0, False)

    def step(self, action: int) -> TimeStep:
        if self._done or self._state is None:
            raise EnvError("step() called on a finished episode; call reset()")
        state = self._state
        _, r = apply_action(state, action)
        rewards = r
        if state.phase is not Phase.FINISHED:
            extra = self._advance_internal()
            rewards = (rewards[0] + extra[0], rewards[1] + extra[1])
        if state.phase is Phase.FINISHED:
            self._done = True
            return _terminal_step(rewards[self.protagonist])
        obs = encoding.encode(state, self.protagonist)
        mask = legal_mask(state, self.protagonist)
        return TimeStep(obs, mask, 0, False)


def play_episode(env: SingleAgentEnv, agent: Agent, rng: np.random.Generator) -> Trajectory:
    """Run one full episode and return the recorded trajectory."""
    ts = env.reset()
    agent.reset(env.match_id)
    traj = Trajectory(match_id=env.match_id, protagonist=env.protagonist)
    while not ts.terminal:
        action = checked_act(agent, ts.obs, ts.mask, rng)
        traj.steps.append((ts, action))
        ts = env.step(action)
    traj.steps.append((ts, None))
    return traj
