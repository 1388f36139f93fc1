"""Agent interface, built-in baselines and the external-process adapter.

Every agent sees exactly what an external agent would see: the observation
vector, the legality mask, and a caller-owned RNG. Agents never touch the
engine state directly.
"""

from __future__ import annotations

import json
import select
import shlex
import subprocess
import time

import numpy as np

from . import encoding
from .engine import ATTACK_BASE, BATTLE_ACTIONS, PASS, SUMMON_BASE, USE_BASE, USE_FACE_TARGET

SAMPLE = "sample"
ARGMAX = "argmax"


class AgentError(Exception):
    pass


class IllegalAgentActionError(AgentError):
    """An agent returned an index that is masked out; the match is forfeited."""

    def __init__(self, name: str, index: int):
        self.agent_name = name
        self.index = index
        super().__init__(f"agent {name!r} returned masked-out action {index}")


class ExternalAgentError(AgentError):
    """The external process died, timed out or spoke garbage."""


class Agent:
    name = "agent"

    def reset(self, match_id: int) -> None:
        """Clear per-match state. Built-in baselines are stateless."""

    def act(self, obs: np.ndarray, mask: np.ndarray, rng: np.random.Generator) -> int:
        raise NotImplementedError

    def close(self) -> None:
        pass


class RandomAgent(Agent):
    name = "random"

    def act(self, obs, mask, rng):
        legal = np.flatnonzero(mask)
        return int(legal[rng.integers(0, len(legal))])


class FirstLegalAgent(Agent):
    """Plays the lowest legal index. Useful as a trivially-conformant baseline."""

    name = "first-legal"

    def act(self, obs, mask, rng):
        return int(np.argmax(mask))


def _unscale(x: float, scale: float) -> float:
    return x * scale


class GreedyAgent(Agent):
    """Deterministic scripted baseline; the stand-in teacher for cloning runs.

    Battle priorities: summon the highest-cost affordable creature into the
    emptier lane, then use items on the highest-attack valid target, then
    attack (guards first, otherwise the face), then pass. Constructed picks
    maximize (attack + defense + 2*|bonus effects|) / (cost + 1). All ties
    break toward the lowest action code, so identical inputs always produce
    identical actions.
    """

    name = "greedy"

    def act(self, obs, mask, rng):
        if len(obs) == encoding.CONSTRUCTED_OBS_LEN:
            return self._constructed(obs, mask)
        return self._battle(obs, mask)

    def _constructed(self, obs, mask):
        best_code = -1
        best_score = -np.inf
        for c in np.flatnonzero(mask):
            base = c * encoding.CARD_FEATURES
            cost = _unscale(float(obs[base + 4]), encoding.COST_SCALE)
            attack = _unscale(float(obs[base + 5]), encoding.STAT_SCALE)
            defense = _unscale(float(obs[base + 6]), encoding.STAT_SCALE)
            php = _unscale(float(obs[base + 13]), encoding.HP_DELTA_SCALE)
            ohp = _unscale(float(obs[base + 14]), encoding.HP_DELTA_SCALE)
            draw = _unscale(float(obs[base + 15]), encoding.CARD_DRAW_SCALE)
            bonus = abs(php) + abs(ohp) + abs(draw)
            score = (attack + defense + 2.0 * bonus) / (cost + 1.0)
            if score > best_score:
                best_score = score
                best_code = int(c)
        return best_code

    def _battle(self, obs, mask):
        legal = np.flatnonzero(mask)

        # summon the priciest affordable creature into the emptier lane
        best = -1
        best_cost = -1.0
        lane_fill = [0, 0]
        for lane in range(2):
            for pos in range(3):
                start = encoding.BOARD_BLOCK_START + (lane * 3 + pos) * encoding.CREATURE_FEATURES
                if obs[start + 1] > 0.0:  # defense > 0 means occupied
                    lane_fill[lane] += 1
        for code in legal:
            if not SUMMON_BASE <= code < USE_BASE:
                continue
            slot, lane = divmod(int(code) - SUMMON_BASE, 2)
            cost = float(obs[encoding.HAND_BLOCK_START + slot * encoding.CARD_FEATURES + 4])
            other = 1 - lane
            other_code = SUMMON_BASE + slot * 2 + other
            if mask[other_code] and lane_fill[other] < lane_fill[lane]:
                continue  # the emptier lane's code will handle this slot
            if cost > best_cost:
                best_cost = cost
                best = int(code)
        if best >= 0:
            return best

        # items onto the highest-attack valid target (face ranks below any creature)
        best = -1
        best_attack = -np.inf
        for code in legal:
            if not USE_BASE <= code < ATTACK_BASE:
                continue
            target = (int(code) - USE_BASE) % 13
            if target == USE_FACE_TARGET:
                attack = -1.0
            else:
                # use-targets 0..11 line up with board slots 0..11
                start = encoding.BOARD_BLOCK_START + target * encoding.CREATURE_FEATURES
                attack = float(obs[start])
            if attack > best_attack:
                best_attack = attack
                best = int(code)
        if best >= 0:
            return best

        # attack: guards first, otherwise go face
        face_code = -1
        for code in legal:
            if code < ATTACK_BASE:
                continue
            attacker, target = divmod(int(code) - ATTACK_BASE, 4)
            if target == 3:
                if face_code < 0:
                    face_code = int(code)
                continue
            lane = attacker // 3
            enemy_slot = 6 + lane * 3 + target
            start = encoding.BOARD_BLOCK_START + enemy_slot * encoding.CREATURE_FEATURES
            if obs[start + 2 + 3] > 0.0:  # guard flag
                return int(code)
        if face_code >= 0:
            return face_code
        for code in legal:
            if code >= ATTACK_BASE:
                return int(code)
        return PASS


class PolicyAgent(Agent):
    """Acts through a trained policy network loaded from a checkpoint.

    Battle-stage only; pair it with a drafter for full matches. The
    preprocessing statistics recorded at training time travel inside the
    checkpoint and are re-applied here, so evaluation inputs always match
    training inputs.
    """

    def __init__(self, net, preproc=None, mode: str = ARGMAX, name: str = "policy"):
        from .nn import masked_policy

        if mode not in (SAMPLE, ARGMAX):
            raise ValueError(f"unknown mode {mode!r}")
        self._masked_policy = masked_policy
        self.net = net
        self.preproc = preproc
        self.mode = mode
        self.name = name

    @staticmethod
    def from_checkpoint(path, mode: str = ARGMAX, name: str | None = None) -> "PolicyAgent":
        from .checkpoint import load
        from .dataset import PreprocStats
        from .nn import net_from_checkpoint

        ckpt = load(path)
        net = net_from_checkpoint(ckpt)
        stats = None
        if "preproc" in ckpt.metadata:
            stats = PreprocStats.from_dict(ckpt.metadata["preproc"])
        return PolicyAgent(net, stats, mode=mode, name=name or ckpt.metadata.get("experiment", "policy"))

    def act(self, obs, mask, rng):
        if len(obs) != encoding.BATTLE_OBS_LEN:
            raise AgentError("policy agents only play the battle stage; use a drafter")
        x = obs if self.preproc is None else self.preproc.apply(obs)
        probs = self._masked_policy(self.net, x[None, :], mask[None, :])[0]
        if self.mode == ARGMAX:
            return int(np.argmax(probs))
        p = probs.astype(np.float64)
        p /= p.sum()
        return int(rng.choice(BATTLE_ACTIONS, p=p))


# ---------------------------------------------------------------------------
# External agents over the line protocol
# ---------------------------------------------------------------------------

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_MS = 2000


class ExternalAgent(Agent):
    """Adapter that drives a black-box agent process over stdin/stdout.

    One JSON record per line. Handshake: we send
    ``{"type":"hello","protocol":1}`` and expect ``{"type":"ready","name":...}``.
    Each decision sends ``{"type":"act","stage":...,"obs":[...],"mask":[...]}``
    and expects ``{"action": <int>}`` within the per-decision timeout. Match
    boundaries send ``{"type":"reset","match_id":...}`` (no reply). Any
    violation raises ExternalAgentError; match runners record a forfeit.

    The child process starts lazily, so handles can be shipped to worker
    processes before the subprocess exists (one child per worker).
    """

    def __init__(self, command: str | list[str], timeout_ms: int = DEFAULT_TIMEOUT_MS, name: str | None = None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout_ms = timeout_ms
        self.name = name or "external"
        self._proc: subprocess.Popen | None = None
        self._buf = b""

    def __getstate__(self):
        return {"command": self.command, "timeout_ms": self.timeout_ms, "name": self.name}

    def __setstate__(self, state):
        self.__init__(state["command"], state["timeout_ms"], state["name"])

    def _ensure_started(self) -> None:
        if self._proc is not None:
            return
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
            )
        except OSError as e:
            raise ExternalAgentError(f"could not start {self.command!r}: {e}") from e
        self._send({"type": "hello", "protocol": PROTOCOL_VERSION})
        reply = self._recv()
        if reply.get("type") != "ready":
            raise ExternalAgentError(f"bad handshake reply: {reply!r}")
        self.name = str(reply.get("name", self.name))

    def _send(self, record: dict) -> None:
        assert self._proc is not None
        try:
            self._proc.stdin.write((json.dumps(record) + "\n").encode())
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise ExternalAgentError(f"agent process closed its stdin: {e}") from e

    def _recv(self) -> dict:
        assert self._proc is not None
        deadline = time.monotonic() + self.timeout_ms / 1000.0
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ExternalAgentError(f"agent timed out after {self.timeout_ms} ms")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise ExternalAgentError(f"agent timed out after {self.timeout_ms} ms")
            chunk = self._proc.stdout.read1(65536)
            if not chunk:
                raise ExternalAgentError("agent process exited mid-conversation")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ExternalAgentError(f"malformed line from agent: {line[:200]!r}") from e
        if not isinstance(record, dict):
            raise ExternalAgentError(f"expected a JSON object, got {record!r}")
        return record

    def reset(self, match_id: int) -> None:
        self._ensure_started()
        self._send({"type": "reset", "match_id": int(match_id)})

    def act(self, obs, mask, rng):
        self._ensure_started()
        stage = "constructed" if len(obs) == encoding.CONSTRUCTED_OBS_LEN else "battle"
        self._send(
            {
                "type": "act",
                "stage": stage,
                "obs": [float(x) for x in obs],
                "mask": [int(b) for b in mask],
            }
        )
        reply = self._recv()
        if "action" not in reply:
            raise ExternalAgentError(f"reply missing 'action': {reply!r}")
        try:
            return int(reply["action"])
        except (TypeError, ValueError) as e:
            raise ExternalAgentError(f"non-integer action: {reply['action']!r}") from e

    def close(self) -> None:
        if self._proc is None:
            return
        proc, self._proc = self._proc, None
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=1.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()


def checked_act(agent: Agent, obs: np.ndarray, mask: np.ndarray, rng: np.random.Generator) -> int:
    """Run agent.act and verify the returned index against the mask."""
    index = agent.act(obs, mask, rng)
    if not 0 <= index < len(mask) or not mask[index]:
        raise IllegalAgentActionError(agent.name, index)
    return index
