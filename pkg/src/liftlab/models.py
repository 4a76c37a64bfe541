"""Example index sets and exact desk-scale ground-state oracles.

The hypercube oracles enumerate all 2^n sign patterns; inner maxima over a
continuous Y are taken analytically:

    max_{y in {+-1/sqrt m}^m} y^T v = |v|_1 / sqrt(m)
    max_{y in S^m}             y^T v = |v|_2
    max_{y in S_+^m}           y^T v = |max(v, 0)|_2
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .environment import STREAM_G, STREAM_U4
from .errors import DimensionMismatch, InvalidParams, SetTooLarge
from .process import IndexedSets, logsumexp
from .rng import child_key, normals, split_seed
from .schedule import EstimatorConfig

MAX_ENUM_N = 20
_ENUM_CHUNK = 1 << 14

HOPFIELD_POS = "HOPFIELD_POS"
HOPFIELD_NEG = "HOPFIELD_NEG"
LITTLE_POS = "LITTLE_POS"
LITTLE_NEG = "LITTLE_NEG"
PERC_SPHERICAL = "PERC_SPHERICAL"
PERC_BINARY = "PERC_BINARY"
MODEL_KINDS = (HOPFIELD_POS, HOPFIELD_NEG, LITTLE_POS, LITTLE_NEG, PERC_SPHERICAL, PERC_BINARY)

SPHERE_ANALYTIC = "SPHERE_ANALYTIC"
BINARY = "BINARY"


@dataclass
class ModelInstance:
    kind: str
    n: int
    m_dim: int
    G: np.ndarray

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise InvalidParams(f"unknown model kind {self.kind!r}")
        self.G = np.asarray(self.G, dtype=np.float64)
        if self.G.shape != (self.m_dim, self.n):
            raise DimensionMismatch(f"G is {self.G.shape}, expected {(self.m_dim, self.n)}")
        if self.n < 1 or self.m_dim < 1:
            raise InvalidParams("n and m_dim must be positive")

    @property
    def alpha(self) -> float:
        return self.m_dim / self.n

    @classmethod
    def random(cls, kind: str, n: int, m_dim: int, seed: int = 0) -> "ModelInstance":
        G = normals(split_seed(seed), m_dim * n, STREAM_G).reshape(m_dim, n)
        return cls(kind, n, m_dim, G)

    def ground_state(self) -> float:
        if self.kind in (HOPFIELD_POS, HOPFIELD_NEG):
            return hopfield_ground_state(self.G, "pos" if self.kind == HOPFIELD_POS else "neg")
        if self.kind in (LITTLE_POS, LITTLE_NEG):
            return little_ground_state(self.G, "pos" if self.kind == LITTLE_POS else "neg")
        domain = BINARY if self.kind == PERC_BINARY else SPHERE_ANALYTIC
        return perceptron_minmax(self.G, domain).value


def _check_enum(n: int) -> None:
    if n < 1:
        raise InvalidParams(f"n must be positive, got {n}")
    if n > MAX_ENUM_N:
        raise SetTooLarge(f"2^{n} hypercube points exceed the enumeration cap n <= {MAX_ENUM_N}")


def hypercube_set(n: int) -> np.ndarray:
    """All 2^n points of {-1/sqrt n, 1/sqrt n}^n as rows."""
    _check_enum(n)
    pts = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
    return pts / math.sqrt(n)


def _hypercube_chunks(n: int):
    """Yield the hypercube in chunks of rows without materializing 2^20 x 20 at once."""
    _check_enum(n)
    total = 1 << n
    bits = np.arange(n, dtype=np.int64)
    for start in range(0, total, _ENUM_CHUNK):
        idx = np.arange(start, min(start + _ENUM_CHUNK, total), dtype=np.int64)
        signs = ((idx[:, None] >> bits) & 1) * 2.0 - 1.0
        yield signs / math.sqrt(n)


def sphere_set(dim: int, count: int, positive_orthant: bool = False, seed: int = 0) -> np.ndarray:
    """``count`` uniform points on the unit sphere of R^dim (normalized Gaussians)."""
    if count < 1 or dim < 1:
        raise InvalidParams("dim and count must be positive")
    z = np.random.default_rng(seed).standard_normal((count, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return np.abs(z) if positive_orthant else z


def half_normal_coordinate_mean(dim: int) -> float:
    """E|z_1| for z uniform on the unit sphere of R^dim."""
    return math.exp(math.lgamma(dim / 2) - math.lgamma((dim + 1) / 2)) / math.sqrt(math.pi)


def _extremum_over_cube(G: np.ndarray, sign: str, fn) -> float:
    G = np.asarray(G, dtype=np.float64)
    if G.ndim != 2:
        raise DimensionMismatch("G must be a matrix")
    if sign not in ("pos", "neg"):
        raise InvalidParams(f"sign must be 'pos' or 'neg', got {sign!r}")
    best = -np.inf if sign == "pos" else np.inf
    for X in _hypercube_chunks(G.shape[1]):
        vals = fn(X @ G.T)
        best = max(best, vals.max()) if sign == "pos" else min(best, vals.min())
    return float(best)


def hopfield_ground_state(G, sign: str = "pos") -> float:
    """max (pos) or min (neg) over the hypercube of |Gx|_2 / sqrt(n)."""
    n = np.shape(G)[1]
    return _extremum_over_cube(G, sign, lambda V: np.linalg.norm(V, axis=1)) / math.sqrt(n)


def little_ground_state(G, sign: str = "pos") -> float:
    """max/min over the hypercube of |Gx|_1 / sqrt(n m_dim)."""
    m_dim, n = np.shape(G)
    return _extremum_over_cube(G, sign, lambda V: np.abs(V).sum(axis=1)) / math.sqrt(n * m_dim)


@dataclass
class MinMaxResult:
    value: float
    x: np.ndarray
    heuristic: bool

    def __float__(self) -> float:
        return self.value


def _positive_norm(V: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.maximum(V, 0.0), axis=-1)


def perceptron_minmax(G, x_domain: str = BINARY, *, seed: int = 0, restarts: int = 64, iters: int = 400) -> MinMaxResult:
    """min over x of max over y in S_+^m of y^T G x / sqrt(n) = min_x |(Gx)_+|_2 / sqrt(n).

    BINARY enumerates the hypercube exactly. SPHERE_ANALYTIC minimizes over
    the unit sphere by multi-start projected gradient descent; the problem is
    non-convex, so the result is a best-found value and flagged heuristic.
    """
    G = np.asarray(G, dtype=np.float64)
    m_dim, n = G.shape
    if x_domain == BINARY:
        best_val, best_x = np.inf, None
        for X in _hypercube_chunks(n):
            vals = _positive_norm(X @ G.T)
            i = int(np.argmin(vals))
            if vals[i] < best_val:
                best_val, best_x = vals[i], X[i].copy()
        return MinMaxResult(float(best_val) / math.sqrt(n), best_x, heuristic=False)
    if x_domain != SPHERE_ANALYTIC:
        raise InvalidParams(f"unknown x_domain {x_domain!r}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((restarts, n))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    step = 0.5 / max(np.linalg.norm(G, 2) ** 2, 1e-12)
    for _ in range(iters):
        V = np.maximum(X @ G.T, 0.0)
        # gradient of |(Gx)_+|^2 / 2, projected onto the tangent space
        grad = V @ G
        grad -= np.sum(grad * X, axis=1, keepdims=True) * X
        X = X - step * grad
        X /= np.linalg.norm(X, axis=1, keepdims=True)
    vals = _positive_norm(X @ G.T)
    i = int(np.argmin(vals))
    return MinMaxResult(float(vals[i]) / math.sqrt(n), X[i], heuristic=True)


def inner_max_positive_sphere(v) -> float:
    """max over y in S_+^m of y^T v."""
    return float(_positive_norm(np.asarray(v, dtype=np.float64)))


# ---------------------------------------------------------------------------
# beta sweep at t = 1
# ---------------------------------------------------------------------------


@dataclass
class SweepRow:
    beta: float
    estimate: float
    std_error: float
    target: float
    gap: float
    envelope: float
    sandwich_ok: bool


@dataclass
class SweepTable:
    model: str
    n: int
    m_dim: int
    s: float
    seed: int
    n_samples: int
    zero_external_field: bool
    rows: list = field(default_factory=list)
    continuous_target: float | None = None

    @property
    def alpha(self) -> float:
        return self.m_dim / self.n

    def gap_non_increasing(self) -> bool:
        """Gap is non-increasing in beta (rows sorted by beta), up to float rounding."""
        rows = sorted(self.rows, key=lambda r: r.beta)
        return all(b.gap <= a.gap + 1e-12 for a, b in zip(rows, rows[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "n", "m_dim", "alpha", "beta", "estimate", "target", "gap", "seed"])
        for r in self.rows:
            w.writerow([self.model, self.n, self.m_dim, repr(self.alpha), repr(r.beta), repr(r.estimate),
                        repr(r.target), repr(r.gap), self.seed])
        return buf.getvalue()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha"] = self.alpha
        return d


def _sweep_keys(config: EstimatorConfig):
    return child_key(split_seed(config.seed), np.arange(config.samples_per_level[0], dtype=np.uint64))


def sweep_gaussians(n: int, m_dim: int, config: EstimatorConfig) -> np.ndarray:
    """The (N, m_dim, n) coupling matrices used by :func:`beta_sweep_ground_state`."""
    keys = _sweep_keys(config)
    return normals(keys, m_dim * n, STREAM_G, config.salt("G")).reshape(-1, m_dim, n)


def oracle_mean(kind: str, Gs: np.ndarray) -> float:
    """Average of the exact (or best-found) ground-state value of ``kind`` over the matrices ``Gs``."""
    n, m_dim = Gs.shape[2], Gs.shape[1]
    return float(np.mean([ModelInstance(kind, n, m_dim, G).ground_state() for G in Gs]))


def random_unit_sets(n: int, m_dim: int, l_x: int, l_y: int, seed: int = 0) -> IndexedSets:
    """Random unit-norm members: X rows first, then Y rows, from one generator stream."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((l_x, n))
    Y = rng.standard_normal((l_y, m_dim))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    Y /= np.linalg.norm(Y, axis=1, keepdims=True)
    return IndexedSets.from_arrays(X, Y)


def _sweep_d0(sets: IndexedSets, config: EstimatorConfig, zero_external_field: bool, field_var: float):
    """D0 at t = 1 for N independent (G, u4) draws, shape (N, l_x, l_y)."""
    keys = _sweep_keys(config)
    G = sweep_gaussians(sets.n, sets.m_dim, config)
    d0 = np.matmul(np.matmul(sets.X, np.swapaxes(G, -1, -2)), sets.Y.T)
    if not zero_external_field and field_var > 0:
        u4 = math.sqrt(field_var) * normals(keys, 1, STREAM_U4, config.salt("u4"))[:, 0]
        d0 = d0 + u4[:, None, None] * np.multiply.outer(sets.x_norms, sets.y_norms)
    return d0


def beta_sweep_ground_state(
    sets: IndexedSets,
    betas,
    s: float,
    config: EstimatorConfig,
    *,
    zero_external_field: bool = False,
    field_var: float = 1.0,
    model: str = "custom",
    continuous_target: float | None = None,
) -> SweepTable:
    """Plain soft-max free energy E (1/(beta |s| sqrt n)) log sum_i1 (sum_i2 e^{beta D0})^s at t = 1.

    The per-draw target is sign(s) ext_{i1} max_{i2} D0 / sqrt(n) (max over i1
    for s > 0, min for s < 0). Every draw obeys the log-sum-exp sandwich

        target - [s<0] log l_y / (beta sqrt n)  <=  value
        value  <=  target + (log l_x / |s| + [s>0] log l_y) / (beta sqrt n),

    which for s = 1 is max <= value <= max + log(l_x l_y) / (beta sqrt n).
    ``sandwich_ok`` records that it held for every draw.
    """
    if s == 0 or not np.isfinite(s):
        raise InvalidParams(f"s must be finite and nonzero, got {s}")
    betas = [float(b) for b in betas]
    if any(not b > 0 for b in betas):
        raise InvalidParams("every beta must be positive")
    d0 = _sweep_d0(sets, config, zero_external_field, field_var)
    rootn = math.sqrt(sets.n)
    row_max = d0.max(axis=-1)
    target_draw = (row_max.max(axis=-1) if s > 0 else -row_max.min(axis=-1)) / rootn
    target = float(np.mean(target_draw))
    log_lx, log_ly = math.log(sets.l_x), math.log(sets.l_y)
    rows = []
    for beta in betas:
        log_c = logsumexp(beta * d0, axis=-1)
        vals = logsumexp(s * log_c, axis=-1) / (beta * abs(s) * rootn)
        lower = target_draw - (log_ly if s < 0 else 0.0) / (beta * rootn)
        upper = target_draw + (log_lx / abs(s) + (log_ly if s > 0 else 0.0)) / (beta * rootn)
        ok = bool(np.all(vals >= lower) and np.all(vals <= upper))
        est = float(np.mean(vals))
        se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        rows.append(
            SweepRow(
                beta=beta,
                estimate=est,
                std_error=se,
                target=target,
                gap=float(np.mean(vals - target_draw)),
                envelope=float(np.mean(upper - target_draw)),
                sandwich_ok=ok,
            )
        )
    return SweepTable(
        model=model,
        n=sets.n,
        m_dim=sets.m_dim,
        s=float(s),
        seed=int(config.seed),
        n_samples=int(d0.shape[0]),
        zero_external_field=zero_external_field,
        rows=rows,
        continuous_target=continuous_target,
    )
