"""Nested partition ladder and the interpolating free energy psi(t).

The estimator is a tree: each outer node draws (G, U_{r+1}); below it sit N_r
level-r draws, each with N_{r-1} children and so on down to N_1 leaves. At a
level-k node

    log zeta_k = logmeanexp_j( (m_k / m_{k-1}) * log zeta_{k-1}^{(j)} ),

with log zeta_0 = log Z at the leaves. psi averages
log zeta_r / (beta |s| sqrt(n) m_r) over outer nodes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .environment import TreeDraw, draw_replica, draw_subtree, draw_tree
from .errors import InvalidParams
from .process import IndexedSets, LogPartition, bilinear_term, d0_from_fields, log_partition, logsumexp
from .schedule import EstimatorConfig, LiftingSchedule


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    n_outer: int

    @classmethod
    def from_samples(cls, samples) -> "Estimate":
        x = np.asarray(samples, dtype=np.float64).ravel()
        n = x.size
        se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(np.mean(x)), se, n)

    def to_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "n_outer": self.n_outer}


@dataclass(frozen=True)
class SampleTree:
    """Shape and addressing of the nested sample tree.

    A node is addressed by (master seed, (j_{r+1}, ..., j_k)); outer nodes are
    processed in fixed blocks so results do not depend on the worker count.
    """

    counts: tuple[int, ...]  # N_{r+1}, N_r, ..., N_1
    seed: int
    chunk_leaves: int = 1 << 17

    @classmethod
    def from_config(cls, config: EstimatorConfig) -> "SampleTree":
        return cls(config.samples_per_level, int(config.seed), config.chunk_leaves)

    @property
    def n_outer(self) -> int:
        return self.counts[0]

    @property
    def leaves_per_outer(self) -> int:
        return math.prod(self.counts[1:])

    @property
    def total_nodes(self) -> int:
        return math.prod(self.counts)

    def outer_blocks(self) -> list[np.ndarray]:
        size = max(1, self.chunk_leaves // self.leaves_per_outer)
        return [np.arange(a, min(a + size, self.n_outer)) for a in range(0, self.n_outer, size)]


@dataclass
class Ladder:
    """log zeta at every level plus the self-normalized Phi weights.

    ``log_zeta[0]`` is log Z at the leaves (shape C, N_r, ..., N_1);
    ``log_zeta[k]`` has the level-(k+1) node shape. ``weights[k]`` (k >= 1)
    has the level-k node shape and sums to one along its last axis.
    """

    part: LogPartition
    log_zeta: list
    weights: list


def _check_params(beta: float, s: float, t: float, *, allow_zero_beta: bool = False) -> None:
    ok = beta >= 0 if allow_zero_beta else beta > 0
    if not ok or not np.isfinite(beta):
        raise InvalidParams(f"beta must be {'nonnegative' if allow_zero_beta else 'positive'} and finite, got {beta}")
    if s == 0 or not np.isfinite(s):
        raise InvalidParams(f"s must be finite and nonzero, got {s}")
    if not 0.0 <= t <= 1.0:
        raise InvalidParams(f"t must lie in [0, 1], got {t}")


def build_ladder(tree: TreeDraw, sets: IndexedSets, beta: float, s: float, t: float, gxy=None) -> Ladder:
    schedule = tree.schedule
    r = schedule.r
    top = tree.levels[r + 1]
    skip = []
    if t == 1.0:
        skip = ["u2", "h"]
    elif t == 0.0:
        skip = ["u4"]
    u4, u2, h = tree.field_sums(skip)
    if t > 0.0 and gxy is None:
        gxy = bilinear_term(top["G"], sets)
    if gxy is not None:
        gxy = gxy.reshape(gxy.shape[:1] + (1,) * r + gxy.shape[1:])
    d0 = d0_from_fields(gxy, u4, u2, h, sets, t)
    part = log_partition(d0, sets, beta, s)
    log_zeta = [part.log_Z]
    weights = [None]
    for k in range(1, r + 1):
        a = schedule.exponent(k) * log_zeta[-1]
        lse = logsumexp(a, axis=-1)
        weights.append(np.exp(a - lse[..., None]))
        log_zeta.append(lse - math.log(a.shape[-1]))
    return Ladder(part=part, log_zeta=log_zeta, weights=weights)


def weighted_up(values: np.ndarray, ladder: Ladder, from_level: int, to_level: int) -> np.ndarray:
    """Apply Phi weights of levels ``from_level..to_level`` to node values.

    ``values`` has the level-``from_level`` node shape (with optional
    trailing axes beyond it given by ``values.ndim``).
    """
    out = values
    for k in range(from_level, to_level + 1):
        w = ladder.weights[k]
        extra = out.ndim - w.ndim
        out = np.sum(w.reshape(w.shape + (1,) * extra) * out, axis=w.ndim - 1)
    return out


class ChunkEvaluator:
    """Draws and caches everything needed on one block of outer nodes."""

    def __init__(self, schedule, sets, beta, s, config: EstimatorConfig, outer_index=None, tree=None, skip=()):
        self.schedule = schedule
        self.sets = sets
        self.beta = float(beta)
        self.s = float(s)
        self.config = config
        self.skip = tuple(skip)
        self.tree = tree if tree is not None else draw_tree(
            schedule, sets.n, sets.m_dim, config, outer_index, skip=self.skip
        )
        self._gxy = None
        self._ladders: dict = {}
        self._replicas: dict = {}

    @property
    def r(self) -> int:
        return self.schedule.r

    def gxy(self):
        if self._gxy is None:
            self._gxy = bilinear_term(self.tree.levels[self.r + 1]["G"], self.sets)
        return self._gxy

    def replica(self, k1: int, which: int) -> TreeDraw:
        """Replica sub-tree ``which`` (0 or 1) below the level-k1 nodes."""
        if not self.config.replica_streams_independent or k1 == 1:
            return self.tree
        key = (k1, which)
        if key not in self._replicas:
            tag = self.config.replica_tags[which]
            self._replicas[key] = draw_replica(
                self.tree, k1, tag, self.sets.n, self.sets.m_dim, self.config, skip=self.skip
            )
        return self._replicas[key]

    def ladder(self, t: float, tree: TreeDraw | None = None) -> Ladder:
        tree = self.tree if tree is None else tree
        key = (float(t), id(tree))
        if key not in self._ladders:
            gxy = self.gxy() if t > 0.0 else None
            self._ladders[key] = build_ladder(tree, self.sets, self.beta, self.s, t, gxy=gxy)
        return self._ladders[key]

    def psi_nodes(self, t: float) -> np.ndarray:
        lad = self.ladder(t)
        scale = self.beta * abs(self.s) * math.sqrt(self.sets.n) * self.schedule.m_vec[self.r]
        return lad.log_zeta[self.r] / scale


def run_outer(schedule, sets, beta, s, config: EstimatorConfig, fn, skip=()) -> dict:
    """Evaluate ``fn(ChunkEvaluator) -> dict of per-outer-node arrays`` over all blocks.

    Blocks are concatenated in outer-index order, independent of ``config.threads``.
    """
    config.check_levels(schedule)
    tree = SampleTree.from_config(config)
    blocks = tree.outer_blocks()

    def work(idx):
        return fn(ChunkEvaluator(schedule, sets, beta, s, config, outer_index=idx, skip=skip))

    if config.threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as ex:
            parts = list(ex.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def psi(schedule: LiftingSchedule, sets: IndexedSets, beta: float, s: float, t: float, config: EstimatorConfig) -> Estimate:
    """Monte Carlo estimate of psi(t) with the outer standard error."""
    _check_params(beta, s, t)
    out = run_outer(schedule, sets, beta, s, config, lambda ch: {"psi": ch.psi_nodes(t)})
    return Estimate.from_samples(out["psi"])


def psi_many(schedule, sets, beta, s, ts, config) -> list[Estimate]:
    """psi on several t values from one shared sample tree."""
    for t in ts:
        _check_params(beta, s, t)
    out = run_outer(
        schedule, sets, beta, s, config, lambda ch: {str(i): ch.psi_nodes(t) for i, t in enumerate(ts)}
    )
    return [Estimate.from_samples(out[str(i)]) for i in range(len(ts))]


def xi_endpoint(schedule, sets, beta, s, config) -> Estimate:
    """psi at t = 1 without drawing the u2 / h families at all."""
    _check_params(beta, s, 1.0)
    out = run_outer(schedule, sets, beta, s, config, lambda ch: {"psi": ch.psi_nodes(1.0)}, skip=("u2", "h"))
    return Estimate.from_samples(out["psi"])


def node_evaluator(schedule, sets, beta, s, t, config, address) -> ChunkEvaluator:
    """Evaluator for the sub-tree below one node.

    ``address`` is ``(j_{r+1}, ..., j_{k+1})``; the returned evaluator's tree
    has singleton axes for the fixed levels and full counts below.
    """
    _check_params(beta, s, t, allow_zero_beta=True)
    config.check_levels(schedule)
    tree = draw_subtree(schedule, sets.n, sets.m_dim, config, tuple(address))
    return ChunkEvaluator(schedule, sets, beta, s, config, tree=tree)


def log_zeta(address, k: int, schedule, sets, beta, s, t, config) -> float:
    """log zeta_k at the node whose levels above k are fixed by ``address``."""
    r = schedule.r
    if not 1 <= k <= r:
        raise InvalidParams(f"level {k} outside 1..{r}")
    if len(address) != r + 1 - k:
        raise InvalidParams(f"address for level {k} needs {r + 1 - k} indices, got {len(address)}")
    ev = node_evaluator(schedule, sets, beta, s, t, config, address)
    return float(ev.ladder(t).log_zeta[k].reshape(-1)[0])


def cascade_psi(schedule: LiftingSchedule, x_norm: float, y_norm: float, beta: float, s: float, t: float, n: int) -> float:
    """Exact psi for a single index pair (l_x = l_y = 1).

    log Z = s beta D0 is Gaussian, so every level integrates in closed form:
    psi = |s| beta a^2 b^2 / (2 sqrt n) * sum_{k<=r} m_k v_k(t).
    """
    p, q, m = schedule.p_vec, schedule.q_vec, schedule.m_vec
    total = 0.0
    for k in range(1, schedule.r + 1):
        v = t * (p[k - 1] * q[k - 1] - p[k] * q[k]) + (1 - t) * ((p[k - 1] - p[k]) + (q[k - 1] - q[k]))
        total += m[k] * v
    return abs(s) * beta * x_norm**2 * y_norm**2 / (2 * math.sqrt(n)) * total


def cascade_slope(schedule: LiftingSchedule, x_norm: float, y_norm: float, beta: float, s: float, n: int) -> float:
    """t-derivative of :func:`cascade_psi` (psi is affine in t)."""
    return cascade_psi(schedule, x_norm, y_norm, beta, s, 1.0, n) - cascade_psi(schedule, x_norm, y_norm, beta, s, 0.0, n)
