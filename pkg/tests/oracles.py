"""Independent reference computations used by several test modules."""

from __future__ import annotations

import math

import numpy as np


def pair_covariance(sets, t: float, p0: float, q0: float) -> np.ndarray:
    """Exact Cov(D0[i,j], D0[i',j']) as an (l_x, l_y, l_x, l_y) tensor."""
    xg, yg = sets.X @ sets.X.T, sets.Y @ sets.Y.T
    a, b = sets.x_norms, sets.y_norms
    aa, bb = np.outer(a, a), np.outer(b, b)
    K = t * np.einsum("ik,jl->ijkl", xg, yg)
    K += t * p0 * q0 * np.einsum("ik,jl->ijkl", aa, bb)
    K += (1 - t) * p0 * np.einsum("ik,jl->ijkl", aa, yg)
    K += (1 - t) * q0 * np.einsum("ik,jl->ijkl", xg, bb)
    return K


def small_beta_psi(schedule, sets, beta: float, s: float, t: float) -> float:
    """psi through second order in the log-partition cumulant expansion.

    log Z = L + s beta c1 + beta^2 c2 + O(beta^3) with c1 the mean of D0 over
    all pairs and c2 = (s/2) mean_i var_j D0 + (s^2/2) var_i mean_j D0. The
    nested levels add (s^2 beta^2 / 2) m_k Var_k(c1) each.
    """
    lx, ly = sets.l_x, sets.l_y
    p, q, m = schedule.p_vec, schedule.q_vec, schedule.m_vec
    K = pair_covariance(sets, t, p[0], q[0])
    diag_ij = np.einsum("ijij->ij", K)
    within_row = np.einsum("ijil->i", K) / ly**2
    e_var_rows = np.mean(diag_ij.mean(axis=1) - within_row)
    Kbar = np.einsum("ijkl->ik", K) / ly**2
    e_var_means = np.mean(np.diag(Kbar)) - Kbar.mean()
    e_c2 = 0.5 * s * e_var_rows + 0.5 * s**2 * e_var_means
    xbar, ybar = sets.X.mean(axis=0), sets.Y.mean(axis=0)
    abar, bbar = sets.x_norms.mean(), sets.y_norms.mean()
    nested = 0.0
    for k in range(1, schedule.r + 1):
        v4, v2, vh = schedule.level_variances(k)
        Vk = t * abar**2 * bbar**2 * v4 + (1 - t) * (abar**2 * ybar @ ybar * v2 + bbar**2 * xbar @ xbar * vh)
        nested += m[k] * Vk
    L = math.log(lx) + s * math.log(ly)
    return (L + beta**2 * (e_c2 + 0.5 * s**2 * nested)) / (beta * abs(s) * math.sqrt(sets.n))


def gauss_hermite_log_zeta1(x, y, fixed, var, beta, s, m1, t, nodes: int = 32) -> float:
    """log E_{u4,u2,h} exp(m1 s beta D0) for n = m_dim = l = 1 by tensor quadrature.

    ``fixed`` = (g, u4_top, u2_top, h_top) are the outer-level values and
    ``var`` = (v4, v2, vh) the level-1 variances.
    """
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / w.sum()
    g, u4t, u2t, ht = fixed
    v4, v2, vh = var
    A, B, C = np.meshgrid(z * math.sqrt(v4), z * math.sqrt(v2), z * math.sqrt(vh), indexing="ij")
    W = np.einsum("i,j,k->ijk", w, w, w)
    a, b = abs(x), abs(y)
    d0 = (
        math.sqrt(t) * y * g * x
        + math.sqrt(1 - t) * a * y * (u2t + B)
        + math.sqrt(t) * a * b * (u4t + A)
        + math.sqrt(1 - t) * b * (ht + C) * x
    )
    e = m1 * s * beta * d0
    mx = e.max()
    return float(mx + math.log(np.sum(W * np.exp(e - mx))))


def beta_zero_oracle(sets, kind):
    """Uniform-measure enumeration of every observable."""
    X, Y = sets.X, sets.Y
    a, b = sets.x_norms, sets.y_norms
    lx, ly = sets.l_x, sets.l_y
    if kind.tag in ("ONE", "ONE_CROSS", "ONE_PAIR"):
        return 1.0
    if kind.tag == "XY2":
        return sum(a[i] ** 2 * b[j] ** 2 for i in range(lx) for j in range(ly)) / (lx * ly)
    if kind.tag == "XY2_CROSS":
        tot = 0.0
        for i in range(lx):
            for j in range(ly):
                for jj in range(ly):
                    tot += a[i] ** 2 * (kind.q_ref * b[j] * b[jj] - Y[j] @ Y[jj])
        return tot / (lx * ly * ly)
    tot = 0.0
    for i in range(lx):
        for ii in range(lx):
            for j in range(ly):
                for jj in range(ly):
                    tot += (kind.p_ref * a[i] * a[ii] - X[i] @ X[ii]) * (kind.q_ref * b[j] * b[jj] - Y[j] @ Y[jj])
    return tot / (lx * ly) ** 2
