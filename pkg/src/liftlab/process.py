"""Bilinear process D0, log-domain partition objects and base Gibbs weights.

All functions broadcast over leading batch axes, so the same code evaluates a
single environment or a whole block of sample-tree leaves.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .environment import Environment
from .errors import DimensionMismatch, InvalidParams, NonfiniteInput

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class IndexedSets:
    """Finite index sets X (rows in R^n) and Y (rows in R^m_dim)."""

    X: np.ndarray
    Y: np.ndarray
    x_norms: np.ndarray
    y_norms: np.ndarray
    x_gram: np.ndarray
    y_gram: np.ndarray

    @classmethod
    def from_arrays(cls, X, Y) -> "IndexedSets":
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        if X.shape[0] < 1 or Y.shape[0] < 1:
            raise DimensionMismatch("X and Y need at least one member each")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise NonfiniteInput("set members must be finite")
        xn = np.linalg.norm(X, axis=1)
        yn = np.linalg.norm(Y, axis=1)
        if np.any(xn == 0) or np.any(yn == 0):
            warnings.warn("zero-norm set member: its field terms vanish", RuntimeWarning, stacklevel=2)
        arrays = [X, Y, xn, yn, X @ X.T, Y @ Y.T]
        for a in arrays:
            a.setflags(write=False)
        return cls(*arrays)

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def m_dim(self) -> int:
        return self.Y.shape[1]

    @property
    def l_x(self) -> int:
        return self.X.shape[0]

    @property
    def l_y(self) -> int:
        return self.Y.shape[0]


def load_sets(path) -> IndexedSets:
    """Read sets from a whitespace or comma separated numeric file.

    Layout: header ``n m_dim l_x l_y``, then ``l_x`` rows of ``n`` values,
    then ``l_y`` rows of ``m_dim`` values.
    """
    path = Path(path)
    rows = []
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].replace(",", " ").strip()
        if line:
            rows.append(line.split())
    if not rows or len(rows[0]) != 4:
        raise DimensionMismatch(f"{path}: header must be 'n m_dim l_x l_y'")
    n, m_dim, l_x, l_y = (int(v) for v in rows[0])
    body = rows[1:]
    if len(body) != l_x + l_y:
        raise DimensionMismatch(f"{path}: expected {l_x + l_y} data rows, found {len(body)}")
    X = np.array([[float(v) for v in r] for r in body[:l_x]])
    Y = np.array([[float(v) for v in r] for r in body[l_x:]])
    if X.shape != (l_x, n) or Y.shape != (l_y, m_dim):
        raise DimensionMismatch(f"{path}: row lengths do not match n={n}, m_dim={m_dim}")
    return IndexedSets.from_arrays(X, Y)


def save_sets(path, sets: IndexedSets) -> None:
    lines = [f"{sets.n} {sets.m_dim} {sets.l_x} {sets.l_y}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in sets.X]
    lines += [" ".join(repr(float(v)) for v in row) for row in sets.Y]
    Path(path).write_text("\n".join(lines) + "\n")


def bilinear_term(G: np.ndarray, sets: IndexedSets) -> np.ndarray:
    """y^T G x for every pair; G is (..., m_dim, n), result (..., l_x, l_y)."""
    return np.matmul(np.matmul(sets.X, np.swapaxes(G, -1, -2)), sets.Y.T)


def d0_from_fields(gxy, u4_sum, u2_sum, h_sum, sets: IndexedSets, t: float) -> np.ndarray:
    """Interpolated process from precomputed pieces.

    ``gxy`` is (..., l_x, l_y); ``u4_sum`` (...); ``u2_sum`` (..., m_dim);
    ``h_sum`` (..., n). Pieces whose interpolation coefficient vanishes are
    not touched, so at t = 1 (t = 0) the result is exactly independent of the
    u2/h (G/u4) pieces, which may then be ``None``.
    """
    if not 0.0 <= t <= 1.0:
        raise InvalidParams(f"t must lie in [0, 1], got {t}")
    a = sets.x_norms
    b = sets.y_norms
    st = np.sqrt(t)
    sc = np.sqrt(1.0 - t)
    d0 = None
    if t > 0.0:
        coupled = gxy + np.asarray(u4_sum)[..., None, None] * np.multiply.outer(a, b)
        d0 = st * coupled
    if t < 1.0:
        field = a[:, None] * np.matmul(u2_sum, sets.Y.T)[..., None, :]
        field = field + np.matmul(h_sum, sets.X.T)[..., :, None] * b[None, :]
        d0 = sc * field if d0 is None else d0 + sc * field
    return d0


def d0_matrix(env: Environment, sets: IndexedSets, t: float) -> np.ndarray:
    """D0 for a single environment, shape (l_x, l_y)."""
    if env.n != sets.n or env.m_dim != sets.m_dim:
        raise DimensionMismatch(
            f"environment is {env.m_dim}x{env.n} but sets live in R^{sets.n} and R^{sets.m_dim}"
        )
    u4, u2, h = env.field_sums()
    return d0_from_fields(bilinear_term(env.G, sets), u4, u2, h, sets, t)


def logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    mx = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - mx), axis=axis)) + np.squeeze(mx, axis=axis)
    return out


@dataclass(frozen=True, eq=False)
class LogPartition:
    """Log-domain Z, C and beta*D0 (possibly batched over leading axes)."""

    beta_d0: np.ndarray
    log_C: np.ndarray
    log_Z: np.ndarray
    s: float
    beta: float


def log_partition(d0: np.ndarray, sets: IndexedSets | None, beta: float, s: float) -> LogPartition:
    """log C_i1 = lse_i2(beta D0), log Z = lse_i1(s log C_i1)."""
    if s == 0 or not np.isfinite(s):
        raise InvalidParams(f"s must be finite and nonzero, got {s}")
    if not (np.isfinite(beta) and beta >= 0):
        raise InvalidParams(f"beta must be finite and >= 0, got {beta}")
    d0 = np.asarray(d0, dtype=np.float64)
    if sets is not None and d0.shape[-2:] != (sets.l_x, sets.l_y):
        raise DimensionMismatch(f"D0 has trailing shape {d0.shape[-2:]}, sets need {(sets.l_x, sets.l_y)}")
    if not np.all(np.isfinite(d0)):
        raise NonfiniteInput("D0 contains non-finite entries")
    bd = beta * d0
    log_c = logsumexp(bd, axis=-1)
    log_z = logsumexp(s * log_c, axis=-1)
    return LogPartition(beta_d0=bd, log_C=log_c, log_Z=log_z, s=float(s), beta=float(beta))


def gamma0(part: LogPartition) -> np.ndarray:
    """Base measure (C_i1^s / Z) (A_i1i2 / C_i1) over index pairs."""
    row = np.exp(part.s * part.log_C - part.log_Z[..., None])
    cond = np.exp(part.beta_d0 - part.log_C[..., None])
    return row[..., None] * cond


def gamma0_factors(part: LogPartition) -> tuple[np.ndarray, np.ndarray]:
    """(row weights over i1, conditional weights of i2 given i1)."""
    row = np.exp(part.s * part.log_C - part.log_Z[..., None])
    cond = np.exp(part.beta_d0 - part.log_C[..., None])
    return row, cond
