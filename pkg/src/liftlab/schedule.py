"""Lifting schedules (p, q, m) and estimator configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams, ScheduleError


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LiftingSchedule:
    """Validated schedule for ``r`` lifting levels.

    All vectors are indexed ``0..r+1``. Per-level variances are indexed by
    ``k - 1`` for levels ``k = 1..r+1``.
    """

    r: int
    p_vec: np.ndarray
    q_vec: np.ndarray
    m_vec: np.ndarray
    var_u4: np.ndarray = field(repr=False)
    var_u2: np.ndarray = field(repr=False)
    var_h: np.ndarray = field(repr=False)

    def exponent(self, k: int) -> float:
        """Nesting exponent m_k / m_{k-1} applied when averaging level ``k``."""
        return float(self.m_vec[k] / self.m_vec[k - 1])

    def level_variances(self, k: int) -> tuple[float, float, float]:
        """(Var u4, Var u2, Var h) for level ``k`` in 1..r+1."""
        return float(self.var_u4[k - 1]), float(self.var_u2[k - 1]), float(self.var_h[k - 1])

    def __eq__(self, other):
        if not isinstance(other, LiftingSchedule):
            return NotImplemented
        return self.r == other.r and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in ("p_vec", "q_vec", "m_vec")
        )

    def to_dict(self) -> dict:
        return {"p": self.p_vec.tolist(), "q": self.q_vec.tolist(), "m": self.m_vec.tolist()}


def validate_schedule(p, q, m, *, force: bool = False) -> LiftingSchedule:
    """Check a (p, q, m) triple and return a :class:`LiftingSchedule`.

    ``force`` skips the ordering/range checks on the interior entries of ``m``;
    the boundary values m_0 = 1 and m_{r+1} = 0 are always enforced.
    """
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    m = np.asarray(m, dtype=np.float64).ravel()
    if not (len(p) == len(q) == len(m)):
        raise ScheduleError(
            f"p, q, m must have equal length, got {len(p)}, {len(q)}, {len(m)}",
            code="SCHEDULE_LENGTH_MISMATCH",
        )
    if len(p) < 3:
        raise ScheduleError(f"schedule needs length r+2 >= 3, got {len(p)}", code="SCHEDULE_LENGTH_MISMATCH")
    for name, v in (("p", p), ("q", q), ("m", m)):
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v))[0])
            raise ScheduleError(f"{name}[{bad}] is not finite", code="SCHEDULE_BOUNDARY", index=bad)
    r = len(p) - 2

    if m[0] != 1.0:
        raise ScheduleError(f"m[0] must be 1, got {m[0]}", code="SCHEDULE_BOUNDARY", index=0)
    for name, v in (("m", m), ("p", p), ("q", q)):
        if v[r + 1] != 0.0:
            raise ScheduleError(f"{name}[{r + 1}] must be 0, got {v[r + 1]}", code="SCHEDULE_BOUNDARY", index=r + 1)

    for name, v in (("p", p), ("q", q)):
        if v[0] > 1.0:
            raise ScheduleError(f"{name}[0] must be <= 1, got {v[0]}", code="SCHEDULE_MONOTONICITY", index=0)
        for k in range(1, r + 2):
            if v[k] > v[k - 1]:
                raise ScheduleError(
                    f"{name} must be non-increasing: {name}[{k}]={v[k]} > {name}[{k - 1}]={v[k - 1]}",
                    code="SCHEDULE_MONOTONICITY",
                    index=k,
                )
    if not force:
        for k in range(1, r + 1):
            if not 0.0 < m[k] <= 1.0:
                raise ScheduleError(f"m[{k}]={m[k]} outside (0, 1]", code="SCHEDULE_MONOTONICITY", index=k)
            if m[k] > m[k - 1]:
                raise ScheduleError(
                    f"m must be non-increasing: m[{k}]={m[k]} > m[{k - 1}]={m[k - 1]}",
                    code="SCHEDULE_MONOTONICITY",
                    index=k,
                )
    elif np.any(m[1 : r + 1] == 0.0):
        # exponents m_k/m_{k-1} would divide by zero
        k = int(np.flatnonzero(m[1 : r + 1] == 0.0)[0]) + 1
        raise ScheduleError(f"m[{k}] must be nonzero", code="SCHEDULE_BOUNDARY", index=k)

    pq = p * q
    var_u4 = pq[:-1] - pq[1:]
    var_u2 = p[:-1] - p[1:]
    var_h = q[:-1] - q[1:]
    for name, v in (("p*q", var_u4), ("p", var_u2), ("q", var_h)):
        if np.any(v < 0):
            k = int(np.flatnonzero(v < 0)[0]) + 1
            raise ScheduleError(f"negative {name} variance at level {k}", code="SCHEDULE_MONOTONICITY", index=k)

    return LiftingSchedule(
        r=r,
        p_vec=_frozen(p),
        q_vec=_frozen(q),
        m_vec=_frozen(m),
        var_u4=_frozen(var_u4),
        var_u2=_frozen(var_u2),
        var_h=_frozen(var_h),
    )


@dataclass(frozen=True)
class EstimatorConfig:
    """Sample-tree sizes and seeding for the nested estimators.

    ``samples_per_level`` lists N_{r+1}, N_r, ..., N_1 (outermost first).
    ``stream_salts`` re-keys individual Gaussian families (``G``, ``u4``,
    ``u2``, ``h``) without touching the others; ``replica_tags`` name the two
    independent replica sub-trees used by two-replica measures.
    """

    samples_per_level: tuple[int, ...]
    fd_step: float = 0.02
    seed: int = 0
    replica_streams_independent: bool = True
    stream_salts: tuple[tuple[str, int], ...] = ()
    replica_tags: tuple[int, int] = (1, 2)
    threads: int = 1
    chunk_leaves: int = 1 << 17

    def __post_init__(self):
        spl = tuple(int(x) for x in self.samples_per_level)
        object.__setattr__(self, "samples_per_level", spl)
        if not spl or any(x < 1 for x in spl):
            raise InvalidParams(f"samples_per_level must be positive, got {spl}")
        if not self.fd_step > 0:
            raise InvalidParams(f"fd_step must be positive, got {self.fd_step}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidParams(f"seed must fit in 64 unsigned bits, got {self.seed}")
        salts = dict(self.stream_salts)
        unknown = set(salts) - {"G", "u4", "u2", "h"}
        if unknown:
            raise InvalidParams(f"unknown stream names {sorted(unknown)}")
        object.__setattr__(self, "stream_salts", tuple(sorted(salts.items())))
        if self.replica_tags[0] == self.replica_tags[1] or 0 in self.replica_tags:
            raise InvalidParams("replica_tags must be two distinct nonzero tags")

    def salt(self, name: str) -> int:
        return dict(self.stream_salts).get(name, 0)

    def check_levels(self, schedule: LiftingSchedule) -> None:
        if len(self.samples_per_level) != schedule.r + 1:
            raise InvalidParams(
                f"samples_per_level needs r+1={schedule.r + 1} entries, got {len(self.samples_per_level)}"
            )

    def replace(self, **changes) -> "EstimatorConfig":
        return dataclasses.replace(self, **changes)
