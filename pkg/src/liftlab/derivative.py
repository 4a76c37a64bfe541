"""Closed-form dpsi/dt through reweighted Gibbs averages, plus a finite-difference check.

    dpsi/dt = sign(s) beta / (2 sqrt n) * ( sum_{k1=1}^{r+1} phi_k1 + phi01 + phi02 )

    phi_k1 = -s (m_{k1-1} - m_k1) E < (p_{k1-1}|x||x'| - x.x')(q_{k1-1}|y||y'| - y.y') >_{gamma_k1}
    phi01  = (1 - p0)(1 - q0) E < |x|^2 |y|^2 >_{gamma01}
    phi02  = (1 - s)(1 - p0) E < |x|^2 (q0 |y||y'| - y.y') >_{gamma02}

The cross term carries (1 - s): that is the sign the term-by-term assembly
produces, and the one that makes a single index pair reproduce the exact
Gaussian slope whenever p0 < 1 and q0 < 1.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import FDStepOutOfRange, RankMismatch
from .gibbs import BRACKET, XY2, XY2_CROSS, ObservableKind, average_nodes, bracket_kernels
from .ladder import ChunkEvaluator, Estimate, _check_params, run_outer
from .process import gamma0, gamma0_factors, logsumexp

# Test hook: flips the sign of every phi coefficient (harness mutation testing).
_FLIP_PHI_SIGN = False


@dataclass
class PhiBreakdown:
    phi: list  # phi[k1 - 1] for k1 = 1..r+1
    phi01: float
    phi02: float
    dpsi_dt: float
    phi_se: list
    phi01_se: float
    phi02_se: float
    dpsi_dt_se: float
    prefactor: float
    n_outer: int

    def recomputed_dpsi_dt(self) -> float:
        return self.prefactor * (sum(self.phi) + self.phi01 + self.phi02)

    def to_dict(self) -> dict:
        return asdict(self)


def phi_coefficients(schedule, s: float) -> dict:
    """Coefficients multiplying each Gibbs average; keys 'k1' ints, '01', '02'."""
    p, q, m = schedule.p_vec, schedule.q_vec, schedule.m_vec
    coef = {k1: -s * (m[k1 - 1] - m[k1]) for k1 in range(1, schedule.r + 2)}
    coef["01"] = (1 - p[0]) * (1 - q[0])
    coef["02"] = (1 - s) * (1 - p[0])
    if _FLIP_PHI_SIGN:
        coef = {k: -v for k, v in coef.items()}
    return coef


def _prefactor(beta: float, s: float, n: int) -> float:
    return math.copysign(1.0, s) * beta / (2 * math.sqrt(n))


def _phi_nodes_general(ch: ChunkEvaluator, t: float) -> dict:
    """Per-outer-node phi terms (coefficients applied) from the general r-level code."""
    sch = ch.schedule
    coef = phi_coefficients(sch, ch.s)
    out = {}
    C = len(ch.tree.outer_index)
    for k1 in range(1, sch.r + 2):
        if coef[k1] == 0.0:
            out[f"phi{k1}"] = np.zeros(C)
            continue
        kind = ObservableKind(BRACKET, float(sch.p_vec[k1 - 1]), float(sch.q_vec[k1 - 1]))
        out[f"phi{k1}"] = coef[k1] * average_nodes(ch, kind, k1, t)
    out["phi01"] = coef["01"] * average_nodes(ch, ObservableKind(XY2), None, t) if coef["01"] else np.zeros(C)
    if coef["02"]:
        kind = ObservableKind(XY2_CROSS, 1.0, float(sch.q_vec[0]))
        out["phi02"] = coef["02"] * average_nodes(ch, kind, None, t)
    else:
        out["phi02"] = np.zeros(C)
    return out


def _breakdown(nodes: dict, r: int, beta: float, s: float, n: int) -> PhiBreakdown:
    pre = _prefactor(beta, s, n)
    ests = {k: Estimate.from_samples(v) for k, v in nodes.items()}
    phi = [ests[f"phi{k1}"] for k1 in range(1, r + 2)]
    total_nodes = sum(nodes[f"phi{k1}"] for k1 in range(1, r + 2)) + nodes["phi01"] + nodes["phi02"]
    total = Estimate.from_samples(pre * total_nodes)
    bd = PhiBreakdown(
        phi=[e.value for e in phi],
        phi01=ests["phi01"].value,
        phi02=ests["phi02"].value,
        dpsi_dt=0.0,
        phi_se=[e.std_error for e in phi],
        phi01_se=ests["phi01"].std_error,
        phi02_se=ests["phi02"].std_error,
        dpsi_dt_se=total.std_error,
        prefactor=pre,
        n_outer=total.n_outer,
    )
    bd.dpsi_dt = bd.recomputed_dpsi_dt()
    return bd


def phi_terms(schedule, sets, beta, s, t, config) -> PhiBreakdown:
    """All phi terms and the resulting dpsi/dt at ``t``."""
    _check_params(beta, s, t, allow_zero_beta=True)
    nodes = run_outer(schedule, sets, beta, s, config, lambda ch: _phi_nodes_general(ch, t))
    return _breakdown(nodes, schedule.r, beta, s, sets.n)


# ---------------------------------------------------------------------------
# Explicit low-level evaluators, written out level by level
# ---------------------------------------------------------------------------


def _softmax_last(a: np.ndarray) -> np.ndarray:
    return np.exp(a - logsumexp(a, axis=-1)[..., None])


def _boundary_terms(g0_rows, g0_cond, g0, sets, coef, w_chain):
    """phi01 and phi02 integrands at the leaves, pushed through ``w_chain``."""
    a2 = sets.x_norms**2
    xy2 = np.einsum("...ij,i,j->...", g0, a2, sets.y_norms**2)
    cb = np.einsum("...ij,j->...i", g0_cond, sets.y_norms)
    cyc = np.einsum("...ij,jk,...ik->...i", g0_cond, sets.y_gram, g0_cond)
    q0 = coef["q0"]
    cross = np.einsum("...i,i,...i->...", g0_rows, a2, q0 * cb**2 - cyc)
    return w_chain(xy2), w_chain(cross)


def _r1_nodes(ch: ChunkEvaluator, t: float) -> dict:
    sch, sets = ch.schedule, ch.sets
    p, q, m = sch.p_vec, sch.q_vec, sch.m_vec
    coef = phi_coefficients(sch, ch.s)
    coef["q0"] = q[0]
    C = len(ch.tree.outer_index)

    def level1(tree):
        part = ch.ladder(t, tree).part
        w1 = _softmax_last(m[1] * part.log_Z)  # Phi_{U_1}: Z^{m_1} / E_{U_1} Z^{m_1}
        return part, w1

    part, w1 = level1(ch.tree)
    g0 = gamma0(part)
    out = {}
    # phi_1: both replicas share U_1
    if coef[1]:
        kx, ky = bracket_kernels(sets, p[0], q[0])
        leaf = np.einsum("cjab,ax,by,cjxy->cj", g0, kx, ky, g0)
        out["phi1"] = coef[1] * np.einsum("cj,cj->c", w1, leaf)
    else:
        out["phi1"] = np.zeros(C)
    # phi_2: Phi_{U_1} gamma0 x Phi_{U_1} gamma0, independent U_1 sub-trees
    if coef[2]:
        kx, ky = bracket_kernels(sets, p[1], q[1])
        mus = []
        for which in (0, 1):
            part_r, w_r = level1(ch.replica(2, which))
            mus.append(np.einsum("cj,cjab->cab", w_r, gamma0(part_r)))
        out["phi2"] = coef[2] * np.einsum("cab,ax,by,cxy->c", mus[0], kx, ky, mus[1])
    else:
        out["phi2"] = np.zeros(C)
    rows, cond = gamma0_factors(part)
    xy2, cross = _boundary_terms(rows, cond, g0, sets, coef, lambda v: np.einsum("cj,cj->c", w1, v))
    out["phi01"] = coef["01"] * xy2 if coef["01"] else np.zeros(C)
    out["phi02"] = coef["02"] * cross if coef["02"] else np.zeros(C)
    return out


def _r2_nodes(ch: ChunkEvaluator, t: float) -> dict:
    sch, sets = ch.schedule, ch.sets
    p, q, m = sch.p_vec, sch.q_vec, sch.m_vec
    coef = phi_coefficients(sch, ch.s)
    coef["q0"] = q[0]
    C = len(ch.tree.outer_index)

    def levels(tree):
        part = ch.ladder(t, tree).part
        a1 = m[1] * part.log_Z  # (c, j2, j1)
        w1 = _softmax_last(a1)
        log_zeta1 = logsumexp(a1, axis=-1) - math.log(a1.shape[-1])
        w2 = _softmax_last((m[2] / m[1]) * log_zeta1)  # (c, j2)
        return part, w1, w2

    part, w1, w2 = levels(ch.tree)
    g0 = gamma0(part)
    both = lambda v: np.einsum("ck,ck->c", w2, np.einsum("ckj,ckj->ck", w1, v))  # noqa: E731
    out = {}
    if coef[1]:
        kx, ky = bracket_kernels(sets, p[0], q[0])
        out["phi1"] = coef[1] * both(np.einsum("ckjab,ax,by,ckjxy->ckj", g0, kx, ky, g0))
    else:
        out["phi1"] = np.zeros(C)
    if coef[2]:
        # replicas share U_2 (and G, U_3); independent U_1 below each level-2 draw
        kx, ky = bracket_kernels(sets, p[1], q[1])
        mus = []
        for which in (0, 1):
            part_r, w1_r, _ = levels(ch.replica(2, which))
            mus.append(np.einsum("ckj,ckjab->ckab", w1_r, gamma0(part_r)))
        pair = np.einsum("ckab,ax,by,ckxy->ck", mus[0], kx, ky, mus[1])
        out["phi2"] = coef[2] * np.einsum("ck,ck->c", w2, pair)
    else:
        out["phi2"] = np.zeros(C)
    if coef[3]:
        # replicas share only G, U_3
        kx, ky = bracket_kernels(sets, p[2], q[2])
        mus = []
        for which in (0, 1):
            part_r, w1_r, w2_r = levels(ch.replica(3, which))
            mu = np.einsum("ckj,ckjab->ckab", w1_r, gamma0(part_r))
            mus.append(np.einsum("ck,ckab->cab", w2_r, mu))
        out["phi3"] = coef[3] * np.einsum("cab,ax,by,cxy->c", mus[0], kx, ky, mus[1])
    else:
        out["phi3"] = np.zeros(C)
    rows, cond = gamma0_factors(part)
    xy2, cross = _boundary_terms(rows, cond, g0, sets, coef, both)
    out["phi01"] = coef["01"] * xy2 if coef["01"] else np.zeros(C)
    out["phi02"] = coef["02"] * cross if coef["02"] else np.zeros(C)
    return out


def dpsi_dt_r1_explicit(schedule, sets, beta, s, t, config) -> PhiBreakdown:
    """dpsi/dt for one lifting level, evaluated directly from the four r = 1 terms."""
    if schedule.r != 1:
        raise RankMismatch(f"schedule has r={schedule.r}, expected 1")
    _check_params(beta, s, t, allow_zero_beta=True)
    nodes = run_outer(schedule, sets, beta, s, config, lambda ch: _r1_nodes(ch, t))
    return _breakdown(nodes, 1, beta, s, sets.n)


def dpsi_dt_r2_explicit(schedule, sets, beta, s, t, config) -> PhiBreakdown:
    """dpsi/dt for two lifting levels, evaluated directly from the five r = 2 terms."""
    if schedule.r != 2:
        raise RankMismatch(f"schedule has r={schedule.r}, expected 2")
    _check_params(beta, s, t, allow_zero_beta=True)
    nodes = run_outer(schedule, sets, beta, s, config, lambda ch: _r2_nodes(ch, t))
    return _breakdown(nodes, 2, beta, s, sets.n)


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------


def _fd_nodes(ch: ChunkEvaluator, t: float, h: float) -> np.ndarray:
    return (ch.psi_nodes(t + h) - ch.psi_nodes(t - h)) / (2 * h)


def fd_derivative(schedule, sets, beta, s, t, config, h: float | None = None) -> Estimate:
    """Central difference of psi with common random numbers; std error from paired node differences."""
    h = config.fd_step if h is None else h
    if not 0.0 < h < min(t, 1.0 - t):
        raise FDStepOutOfRange(f"fd step {h} must satisfy 0 < h < min(t, 1-t) at t={t}")
    _check_params(beta, s, t)
    out = run_outer(schedule, sets, beta, s, config, lambda ch: {"fd": _fd_nodes(ch, t, h)})
    return Estimate.from_samples(out["fd"])


@dataclass
class VerificationReport:
    t: float
    beta: float
    s: float
    r: int
    dpsi_dt: float
    dpsi_dt_se: float
    fd: float
    fd_se: float
    fd_2h: float
    difference: float
    combined_se: float
    truncation: float
    tolerance: float
    passed: bool
    phi: list
    phi_se: list
    phi01: float
    phi02: float
    sign_check: list
    sign_ok: bool
    seed: int
    fd_step: float
    n_outer: int
    wall_ms: float = 0.0
    schedule: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def sign_check(schedule, s: float, bd: PhiBreakdown, nsigma: float = 3.0) -> list[bool]:
    """For p0 = q0 = 1: each phi_k1 has sign -sign(s (m_{k1-1} - m_k1)) or sits within nsigma of 0."""
    m = schedule.m_vec
    res = []
    for k1 in range(1, schedule.r + 2):
        val, se = bd.phi[k1 - 1], bd.phi_se[k1 - 1]
        expected = -np.sign(s * (m[k1 - 1] - m[k1]))
        res.append(bool(abs(val) <= nsigma * se or np.sign(val) == expected or expected == 0))
    return res


def verify_derivative(schedule, sets, beta, s, t, config) -> VerificationReport:
    """Compare the closed-form derivative with central differences at steps h and 2h.

    PASS iff |closed - FD(h)| <= 3 * sqrt(se_closed^2 + se_fd^2) + |FD(2h) - FD(h)| / 3,
    the last term being the Richardson estimate of the O(h^2) truncation error.
    """
    h = config.fd_step
    if not 2 * h <= t <= 1 - 2 * h:
        raise FDStepOutOfRange(f"t={t} must lie in [2h, 1-2h] with h={h}")
    _check_params(beta, s, t)
    start = time.perf_counter()

    def fn(ch):
        nodes = _phi_nodes_general(ch, t)
        nodes["fd"] = _fd_nodes(ch, t, h)
        nodes["fd2"] = _fd_nodes(ch, t, 2 * h)
        return nodes

    nodes = run_outer(schedule, sets, beta, s, config, fn)
    fd = Estimate.from_samples(nodes.pop("fd"))
    fd2 = Estimate.from_samples(nodes.pop("fd2"))
    bd = _breakdown(nodes, schedule.r, beta, s, sets.n)
    diff = bd.dpsi_dt - fd.value
    comb = math.hypot(bd.dpsi_dt_se, fd.std_error)
    trunc = abs(fd2.value - fd.value) / 3.0
    tol = 3.0 * comb + trunc
    signs = sign_check(schedule, s, bd)
    return VerificationReport(
        t=t,
        beta=beta,
        s=s,
        r=schedule.r,
        dpsi_dt=bd.dpsi_dt,
        dpsi_dt_se=bd.dpsi_dt_se,
        fd=fd.value,
        fd_se=fd.std_error,
        fd_2h=fd2.value,
        difference=diff,
        combined_se=comb,
        truncation=trunc,
        tolerance=tol,
        passed=bool(abs(diff) <= tol),
        phi=bd.phi,
        phi_se=bd.phi_se,
        phi01=bd.phi01,
        phi02=bd.phi02,
        sign_check=signs,
        sign_ok=all(signs),
        seed=int(config.seed),
        fd_step=h,
        n_outer=bd.n_outer,
        wall_ms=(time.perf_counter() - start) * 1e3,
        schedule=schedule.to_dict(),
    )
