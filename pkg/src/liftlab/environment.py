"""Gaussian environments (G, u4, u2, h) drawn from a reproducible seed tree.

Levels are numbered ``k = r+1`` (outermost, carries ``G``) down to ``k = 1``.
A leaf address is ``(j_{r+1}, j_r, ..., j_1)``. The key of a node is derived
from its parent's key and its own index, so draws never depend on how many
siblings exist.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .errors import DimensionMismatch, LevelOutOfRange
from .schedule import EstimatorConfig, LiftingSchedule

STREAM_G, STREAM_U4, STREAM_U2, STREAM_H = 0, 1, 2, 3
RESAMPLE_TAG = 0xFFFF


@dataclass(frozen=True)
class SeedPath:
    """Address of one leaf of the sample tree.

    ``tags`` (same length as ``address``) selects sibling sub-trees; 0 is the
    primary tree. ``resampled`` records ``(level, sub_seed)`` overrides applied
    by :func:`resample_level`.
    """

    seed: int
    address: tuple[int, ...]
    tags: tuple[int, ...] | None = None
    salts: tuple[tuple[str, int], ...] = ()
    resampled: tuple[tuple[int, int], ...] = ()

    def tag(self, pos: int) -> int:
        return 0 if self.tags is None else self.tags[pos]


@dataclass(frozen=True, eq=False)
class Environment:
    G: np.ndarray  # (m_dim, n)
    u4: np.ndarray  # (r+1,), entry k-1 is level k
    u2: np.ndarray  # (r+1, m_dim)
    h: np.ndarray  # (r+1, n)
    seed_path: SeedPath

    @property
    def r(self) -> int:
        return self.u4.shape[0] - 1

    @property
    def n(self) -> int:
        return self.G.shape[1]

    @property
    def m_dim(self) -> int:
        return self.G.shape[0]

    def field_sums(self) -> tuple[float, np.ndarray, np.ndarray]:
        """Level sums (sum u4, sum u2, sum h) entering the interpolated process."""
        return float(self.u4.sum()), self.u2.sum(axis=0), self.h.sum(axis=0)

    def same_as(self, other: "Environment") -> bool:
        return all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in ("G", "u4", "u2", "h")
        )


def _scaled_normals(key, count: int, var: float, stream: int, salt: int) -> np.ndarray:
    shape = np.shape(key[0]) + (count,)
    if var == 0.0:
        return np.zeros(shape)
    return np.sqrt(var) * rng.normals(key, count, stream, salt)


def draw_level(schedule: LiftingSchedule, k: int, key, n: int, m_dim: int, salts=()) -> dict:
    """Level-``k`` components for every node key in ``key`` (arrays of shape S).

    Returns a dict with ``u4`` (S), ``u2`` (S + (m_dim,)), ``h`` (S + (n,)) and,
    for ``k = r+1``, ``G`` (S + (m_dim, n)).
    """
    salts = dict(salts)
    v4, v2, vh = schedule.level_variances(k)
    out = {
        "u4": _scaled_normals(key, 1, v4, STREAM_U4, salts.get("u4", 0))[..., 0],
        "u2": _scaled_normals(key, m_dim, v2, STREAM_U2, salts.get("u2", 0)),
        "h": _scaled_normals(key, n, vh, STREAM_H, salts.get("h", 0)),
    }
    if k == schedule.r + 1:
        g = rng.normals(key, m_dim * n, STREAM_G, salts.get("G", 0))
        out["G"] = g.reshape(np.shape(key[0]) + (m_dim, n))
    return out


def _leaf_keys(seed_path: SeedPath, r: int) -> list:
    """Keys of the nodes on the path root -> leaf, index 0 = level r+1."""
    if len(seed_path.address) != r + 1:
        raise DimensionMismatch(f"address must have r+1={r + 1} entries, got {len(seed_path.address)}")
    key = rng.split_seed(seed_path.seed)
    keys = []
    for pos, j in enumerate(seed_path.address):
        key = rng.child_key(key, np.uint64(j), seed_path.tag(pos))
        keys.append(key)
    return keys


def sample_environment(schedule: LiftingSchedule, n: int, m_dim: int, seed_path: SeedPath) -> Environment:
    """Draw the full environment at one leaf of the sample tree."""
    if n < 1 or m_dim < 1:
        raise DimensionMismatch(f"n and m_dim must be >= 1, got {n}, {m_dim}")
    r = schedule.r
    keys = _leaf_keys(seed_path, r)
    u4 = np.zeros(r + 1)
    u2 = np.zeros((r + 1, m_dim))
    h = np.zeros((r + 1, n))
    G = None
    for pos, key in enumerate(keys):
        k = r + 1 - pos
        d = draw_level(schedule, k, key, n, m_dim, seed_path.salts)
        u4[k - 1], u2[k - 1], h[k - 1] = d["u4"], d["u2"], d["h"]
        if k == r + 1:
            G = d["G"]
    env = Environment(G=G, u4=u4, u2=u2, h=h, seed_path=seed_path)
    for level, sub_seed in seed_path.resampled:
        env = _redraw(env, schedule, level, sub_seed, keys)
    return env


def _redraw(env: Environment, schedule: LiftingSchedule, k: int, sub_seed: int, keys) -> Environment:
    r = schedule.r
    parent = rng.split_seed(env.seed_path.seed) if k == r + 1 else keys[r - k]
    key = rng.child_key(parent, np.uint64(sub_seed), RESAMPLE_TAG)
    d = draw_level(schedule, k, key, env.n, env.m_dim, env.seed_path.salts)
    u4, u2, h = env.u4.copy(), env.u2.copy(), env.h.copy()
    u4[k - 1], u2[k - 1], h[k - 1] = d["u4"], d["u2"], d["h"]
    G = d["G"] if k == r + 1 else env.G
    return replace(env, G=G, u4=u4, u2=u2, h=h)


def resample_level(env: Environment, k: int, new_sub_seed: int, schedule: LiftingSchedule) -> Environment:
    """Copy of ``env`` with the level-``k`` components (and ``G`` if k = r+1) redrawn."""
    r = env.r
    if not 1 <= k <= r + 1:
        raise LevelOutOfRange(f"level {k} outside 1..{r + 1}", index=k)
    keys = _leaf_keys(env.seed_path, r)
    new = _redraw(env, schedule, k, int(new_sub_seed), keys)
    sp = replace(env.seed_path, resampled=env.seed_path.resampled + ((k, int(new_sub_seed)),))
    return replace(new, seed_path=sp)


# ---------------------------------------------------------------------------
# Vectorized tree draws
# ---------------------------------------------------------------------------


@dataclass
class TreeDraw:
    """Draws for a block of outer nodes and every node beneath them.

    ``levels[k]`` holds the level-k components with leading shape
    ``(C, N_r, ..., N_k)``; ``levels[r+1]`` also holds ``G``.
    """

    schedule: LiftingSchedule
    outer_index: np.ndarray
    counts: tuple[int, ...]  # (N_r, ..., N_1)
    levels: dict = field(default_factory=dict)
    keys: dict = field(default_factory=dict)

    @property
    def r(self) -> int:
        return self.schedule.r

    def leaf_shape(self) -> tuple[int, ...]:
        return (len(self.outer_index),) + self.counts

    def field_sums(self, skip=()) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Sum over levels of u4, u2, h broadcast to the leaf shape.

        Families named in ``skip`` come back as ``None``.
        """
        r = self.r
        out = []
        for name in ("u4", "u2", "h"):
            if name in skip:
                out.append(None)
                continue
            total = None
            for k in range(r + 1, 0, -1):
                a = self.levels[k][name]
                trail = () if name == "u4" else a.shape[-1:]
                lead = a.shape[: a.ndim - len(trail)]
                a = a.reshape(lead + (1,) * (k - 1) + trail)
                total = a if total is None else total + a
            out.append(total)
        return tuple(out)


def draw_tree(
    schedule: LiftingSchedule,
    n: int,
    m_dim: int,
    config: EstimatorConfig,
    outer_index: np.ndarray,
    skip=(),
) -> TreeDraw:
    """Draw the primary tree below the given outer nodes.

    ``skip`` lists component families (``"u2"``, ``"h"``, ``"G"``, ``"u4"``)
    that are not needed and are left as zeros without consuming draws.
    """
    outer_index = np.asarray(outer_index, dtype=np.uint64)
    counts = tuple(config.samples_per_level[1:])
    tree = TreeDraw(schedule=schedule, outer_index=outer_index, counts=counts)
    root = rng.split_seed(config.seed)
    key = rng.child_key(root, outer_index)
    tree.keys[schedule.r + 1] = key
    tree.levels[schedule.r + 1] = _draw_skipping(schedule, schedule.r + 1, key, n, m_dim, config, skip)
    _descend(tree, key, schedule.r, 0, n, m_dim, config, skip, tree.levels, tree.keys)
    return tree


def draw_replica(tree: TreeDraw, k1: int, tag: int, n: int, m_dim: int, config: EstimatorConfig, skip=()) -> TreeDraw:
    """Independent copy of levels ``k1-1 .. 1`` hung under the level-``k1`` nodes of ``tree``.

    Levels ``>= k1`` are shared with ``tree`` (same arrays).
    """
    rep = TreeDraw(schedule=tree.schedule, outer_index=tree.outer_index, counts=tree.counts)
    for k in range(tree.r + 1, k1 - 1, -1):
        rep.levels[k] = tree.levels[k]
        rep.keys[k] = tree.keys[k]
    if k1 > 1:
        _descend(rep, tree.keys[k1], k1 - 1, tag, n, m_dim, config, skip, rep.levels, rep.keys)
    return rep


def _descend(tree, key, top: int, tag: int, n, m_dim, config, skip, levels, keys) -> None:
    schedule = tree.schedule
    r = schedule.r
    for k in range(top, 0, -1):
        nk = tree.counts[r - k]
        idx = np.arange(nk, dtype=np.uint64)
        key = rng.child_key((key[0][..., None], key[1][..., None]), idx, tag if k == top else 0)
        keys[k] = key
        levels[k] = _draw_skipping(schedule, k, key, n, m_dim, config, skip)


def _draw_skipping(schedule, k, key, n, m_dim, config, skip) -> dict:
    if not skip:
        return draw_level(schedule, k, key, n, m_dim, config.stream_salts)
    # zero the variance of skipped families so no draws are spent on them
    v4, v2, vh = schedule.level_variances(k)
    salts = dict(config.stream_salts)
    shape = np.shape(key[0])
    out = {
        "u4": np.zeros(shape) if "u4" in skip else _scaled_normals(key, 1, v4, STREAM_U4, salts.get("u4", 0))[..., 0],
        "u2": np.zeros(shape + (m_dim,)) if "u2" in skip else _scaled_normals(key, m_dim, v2, STREAM_U2, salts.get("u2", 0)),
        "h": np.zeros(shape + (n,)) if "h" in skip else _scaled_normals(key, n, vh, STREAM_H, salts.get("h", 0)),
    }
    if k == schedule.r + 1:
        if "G" in skip:
            out["G"] = np.zeros(shape + (m_dim, n))
        else:
            out["G"] = rng.normals(key, m_dim * n, STREAM_G, salts.get("G", 0)).reshape(shape + (m_dim, n))
    return out


def draw_subtree(schedule: LiftingSchedule, n: int, m_dim: int, config: EstimatorConfig, address) -> TreeDraw:
    """Tree below a single node ``address = (j_{r+1}, ..., j_{k+1})``.

    Fixed levels get singleton axes, so the result plugs into the same
    ladder code as a block of outer nodes; the draws match :func:`draw_tree`.
    """
    r = schedule.r
    depth = len(address)
    if not 1 <= depth <= r + 1:
        raise LevelOutOfRange(f"address length {depth} outside 1..{r + 1}")
    full = tuple(config.samples_per_level[1:])
    counts = (1,) * (depth - 1) + full[depth - 1 :]
    tree = TreeDraw(schedule=schedule, outer_index=np.asarray(address[:1], dtype=np.uint64), counts=counts)
    key = rng.child_key(rng.split_seed(config.seed), tree.outer_index)
    tree.keys[r + 1] = key
    tree.levels[r + 1] = draw_level(schedule, r + 1, key, n, m_dim, config.stream_salts)
    for pos in range(1, depth):
        k = r + 1 - pos
        key = rng.child_key((key[0][..., None], key[1][..., None]), np.asarray([address[pos]], dtype=np.uint64))
        tree.keys[k] = key
        tree.levels[k] = draw_level(schedule, k, key, n, m_dim, config.stream_salts)
    _descend(tree, key, r + 1 - depth, 0, n, m_dim, config, (), tree.levels, tree.keys)
    return tree
