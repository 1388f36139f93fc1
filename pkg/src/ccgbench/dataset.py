"""Self-play pair collection, filtering, splits, preprocessing and file IO.

Only battle-stage decisions are stored: drafting is delegated during
evaluation, so cloning targets the battle policy.

Binary pair file layout (little-endian throughout):

    magic   5 bytes  b"LCTJ1"
    version u32      1
    count   u64      number of records
    obs_len u16      244
    mask_len u16     145
    record:
        match_id u64, player u8, action u16,
        mask     19 bytes (145 bits packed, little bit order),
        obs      244 x float32

A human-readable JSONL mirror of the same records can be written next to
the binary file for debugging small runs.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agents import Agent
from .cardgen import GeneratorParams, PoolRegistry
from .engine import BATTLE_ACTIONS, Phase
from .match import play_match

OBS_LEN = 244
MASK_LEN = 145
MASK_BYTES = (MASK_LEN + 7) // 8  # 19

MAGIC = b"LCTJ1"
VERSION = 1
_HEADER = struct.Struct("<5sIQHH")
_RECORD_DTYPE = np.dtype(
    [
        ("match_id", "<u8"),
        ("player", "u1"),
        ("action", "<u2"),
        ("mask", "u1", (MASK_BYTES,)),
        ("obs", "<f4", (OBS_LEN,)),
    ]
)
RECORD_SIZE = _RECORD_DTYPE.itemsize


class DatasetError(Exception):
    pass


class DatasetFormatError(DatasetError):
    pass


def pack_mask(mask: np.ndarray) -> bytes:
    return np.packbits(mask.astype(np.uint8), bitorder="little").tobytes()


def unpack_mask(buf: np.ndarray) -> np.ndarray:
    return np.unpackbits(buf, axis=-1, bitorder="little")[..., :MASK_LEN].astype(bool)


class PairDataset:
    """Column-oriented in-memory store of (obs, mask, action) decision pairs.

    Masks are kept bit-packed (N x 19 uint8) to fit multi-million-pair runs
    in memory; unpack per minibatch with ``masks_for``.
    """

    def __init__(self, obs, packed_mask, action, match_id, player):
        self.obs = np.asarray(obs, dtype=np.float32).reshape(-1, OBS_LEN)
        self.packed_mask = np.asarray(packed_mask, dtype=np.uint8).reshape(-1, MASK_BYTES)
        self.action = np.asarray(action, dtype=np.uint16).reshape(-1)
        self.match_id = np.asarray(match_id, dtype=np.uint64).reshape(-1)
        self.player = np.asarray(player, dtype=np.uint8).reshape(-1)
        n = len(self.action)
        if not (len(self.obs) == len(self.packed_mask) == len(self.match_id) == len(self.player) == n):
            raise DatasetError("column lengths disagree")

    def __len__(self) -> int:
        return len(self.action)

    @staticmethod
    def empty() -> "PairDataset":
        return PairDataset(
            np.empty((0, OBS_LEN), np.float32),
            np.empty((0, MASK_BYTES), np.uint8),
            np.empty(0, np.uint16),
            np.empty(0, np.uint64),
            np.empty(0, np.uint8),
        )

    def masks_for(self, idx) -> np.ndarray:
        return unpack_mask(self.packed_mask[idx])

    def subset(self, idx) -> "PairDataset":
        return PairDataset(self.obs[idx], self.packed_mask[idx], self.action[idx], self.match_id[idx], self.player[idx])

    def validate(self) -> None:
        masks = self.masks_for(slice(None))
        ok = masks[np.arange(len(self)), self.action]
        if not ok.all():
            bad = int(np.flatnonzero(~ok)[0])
            raise DatasetError(f"pair {bad}: stored action {self.action[bad]} is masked out")

    def save(self, path) -> None:
        records = np.empty(len(self), dtype=_RECORD_DTYPE)
        records["match_id"] = self.match_id
        records["player"] = self.player
        records["action"] = self.action
        records["mask"] = self.packed_mask
        records["obs"] = self.obs
        with open(path, "wb") as f:
            f.write(_HEADER.pack(MAGIC, VERSION, len(self), OBS_LEN, MASK_LEN))
            f.write(records.tobytes())

    @staticmethod
    def load(path) -> "PairDataset":
        with open(path, "rb") as f:
            raw = f.read()
        if len(raw) < _HEADER.size:
            raise DatasetFormatError("file too short for header")
        magic, version, count, obs_len, mask_len = _HEADER.unpack_from(raw, 0)
        if magic != MAGIC:
            raise DatasetFormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise DatasetFormatError(f"unsupported version {version}")
        if obs_len != OBS_LEN or mask_len != MASK_LEN:
            raise DatasetFormatError(f"unexpected dimensions obs={obs_len} mask={mask_len}")
        expected = _HEADER.size + count * RECORD_SIZE
        if len(raw) != expected:
            raise DatasetFormatError(f"expected {expected} bytes for {count} records, file has {len(raw)}")
        records = np.frombuffer(raw, dtype=_RECORD_DTYPE, count=count, offset=_HEADER.size)
        return PairDataset(
            records["obs"].copy(),
            records["mask"].copy(),
            records["action"].copy(),
            records["match_id"].copy(),
            records["player"].copy(),
        )

    def write_debug_mirror(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            masks = self.masks_for(slice(None))
            for i in range(len(self)):
                rec = {
                    "match_id": int(self.match_id[i]),
                    "player": int(self.player[i]),
                    "action": int(self.action[i]),
                    "mask": "".join("1" if b else "0" for b in masks[i]),
                    "obs": [round(float(x), 7) for x in self.obs[i]],
                }
                f.write(json.dumps(rec) + "\n")


def filter_pass(ds: PairDataset) -> PairDataset:
    """Drop every pair whose action is the pass code (0). Order preserved."""
    return ds.subset(ds.action != 0)


def split_by_match(ds: PairDataset, train_fraction: float, seed: int = 0) -> tuple[PairDataset, PairDataset]:
    """Match-granular split: no match contributes pairs to both sides."""
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError("train_fraction must be in (0, 1)")
    ids = np.unique(ds.match_id)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0x5711))))
    perm = rng.permutation(len(ids))
    n_train = int(round(train_fraction * len(ids)))
    n_train = min(max(n_train, 1), len(ids) - 1)
    train_ids = set(int(x) for x in ids[perm[:n_train]])
    in_train = np.fromiter((int(m) in train_ids for m in ds.match_id), dtype=bool, count=len(ds))
    return ds.subset(in_train), ds.subset(~in_train)


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

PREPROC_NONE = "none"
PREPROC_MINMAX = "minmax"
PREPROC_STANDARDIZE = "standardize"


@dataclass
class PreprocStats:
    """Feature-wise transform fitted on the training split only."""

    mode: str
    a: np.ndarray | None = None  # min or mean
    b: np.ndarray | None = None  # max or std

    def apply(self, obs: np.ndarray) -> np.ndarray:
        if self.mode == PREPROC_NONE:
            return obs
        x = np.asarray(obs, dtype=np.float32)
        if self.mode == PREPROC_MINMAX:
            span = self.b - self.a
            out = np.divide(x - self.a, span, out=np.zeros_like(x), where=span > 0)
            return out
        out = np.divide(x - self.a, self.b, out=np.zeros_like(x), where=self.b > 0)
        return out

    def to_dict(self) -> dict:
        d = {"mode": self.mode}
        if self.a is not None:
            d["a"] = [float(v) for v in self.a]
            d["b"] = [float(v) for v in self.b]
        return d

    @staticmethod
    def from_dict(d: dict) -> "PreprocStats":
        a = np.asarray(d["a"], dtype=np.float32) if "a" in d else None
        b = np.asarray(d["b"], dtype=np.float32) if "b" in d else None
        return PreprocStats(d["mode"], a, b)


def fit_preproc(train: PairDataset, mode: str) -> PreprocStats:
    if mode == PREPROC_NONE:
        return PreprocStats(PREPROC_NONE)
    if len(train) == 0:
        raise DatasetError("cannot fit preprocessing on an empty split")
    x = train.obs.astype(np.float64)
    if mode == PREPROC_MINMAX:
        return PreprocStats(PREPROC_MINMAX, x.min(axis=0).astype(np.float32), x.max(axis=0).astype(np.float32))
    if mode == PREPROC_STANDARDIZE:
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        return PreprocStats(PREPROC_STANDARDIZE, mean.astype(np.float32), std.astype(np.float32))
    raise DatasetError(f"unknown preprocessing mode {mode!r}")


def apply_preproc(stats: PreprocStats, obs: np.ndarray) -> np.ndarray:
    return stats.apply(obs)


# ---------------------------------------------------------------------------
# Collection
# ---------------------------------------------------------------------------


def _match_seeds(base_seed: int, match_index: int) -> tuple[int, int, int]:
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(match_index,))
    a, b, c = ss.generate_state(3, dtype=np.uint64)
    return int(a), int(b), int(c)


def collect(
    target: Agent,
    n_matches: int,
    seed: int,
    registry: PoolRegistry,
    out_dir,
    debug_mirror: bool = False,
) -> dict:
    """Record battle decisions of ``target`` playing both seats of n matches.

    Writes pairs.bin (binary pairs), matches.jsonl (replayable match log)
    and manifest.json into out_dir; returns the manifest. Fully
    deterministic in (target, seed, registry): identical inputs give
    byte-identical files.
    """
    if n_matches < 1:
        raise DatasetError("n_matches must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    obs_rows: list[np.ndarray] = []
    mask_rows: list[bytes] = []
    actions: list[int] = []
    match_ids: list[int] = []
    players: list[int] = []
    skipped = 0

    log_path = out_dir / "matches.jsonl"
    with open(log_path, "w", encoding="utf-8") as log:
        log.write(
            json.dumps(
                {
                    "type": "matchlog",
                    "version": 1,
                    "generator_params": registry.params.to_dict(),
                    "teacher": target.name,
                    "seed": seed,
                }
            )
            + "\n"
        )
        for m in range(n_matches):
            pool_pick, game_seed, agent_seed = _match_seeds(seed, m)
            pool = registry.get(pool_pick % len(registry))
            rng0 = np.random.Generator(np.random.PCG64(np.random.SeedSequence((agent_seed, 0))))
            rng1 = np.random.Generator(np.random.PCG64(np.random.SeedSequence((agent_seed, 1))))
            target.reset(m)

            def on_decision(player, phase, obs, mask, action, _m=m):
                if phase is Phase.BATTLE:
                    obs_rows.append(obs)
                    mask_rows.append(pack_mask(mask))
                    actions.append(action)
                    match_ids.append(_m)
                    players.append(player)

            result = play_match((target, target), pool, game_seed, (rng0, rng1), on_decision=on_decision)
            if result.forfeited_by is not None:
                # drop this match's pairs; a broken teacher should not pollute the data
                while match_ids and match_ids[-1] == m:
                    match_ids.pop()
                    obs_rows.pop()
                    mask_rows.pop()
                    actions.pop()
                    players.pop()
                skipped += 1
            log.write(
                json.dumps(
                    {
                        "match_id": m,
                        "pool_seed": pool.pool_seed,
                        "game_seed": result.game_seed,
                        "seat0": target.name,
                        "seat1": target.name,
                        "actions": result.actions,
                        "result": result.result_label(),
                        "digest": result.final_digest,
                    }
                )
                + "\n"
            )

    ds = PairDataset(
        np.stack(obs_rows) if obs_rows else np.empty((0, OBS_LEN), np.float32),
        np.frombuffer(b"".join(mask_rows), np.uint8).reshape(-1, MASK_BYTES).copy()
        if mask_rows
        else np.empty((0, MASK_BYTES), np.uint8),
        np.asarray(actions, np.uint16),
        np.asarray(match_ids, np.uint64),
        np.asarray(players, np.uint8),
    )
    pairs_path = out_dir / "pairs.bin"
    ds.save(pairs_path)
    files = {"pairs.bin": _sha256(pairs_path), "matches.jsonl": _sha256(log_path)}
    if debug_mirror:
        mirror = out_dir / "pairs.debug.jsonl"
        ds.write_debug_mirror(mirror)
        files["pairs.debug.jsonl"] = _sha256(mirror)

    manifest = {
        "n_matches": n_matches,
        "n_pairs": len(ds),
        "skipped_matches": skipped,
        "seed": seed,
        "teacher": target.name,
        "registry_size": len(registry),
        "generator_params": registry.params.to_dict(),
        "both_seats_recorded": True,
        "files": files,
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
        f.flush()
        os.fsync(f.fileno())
    return manifest


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
