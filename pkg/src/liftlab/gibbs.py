"""Reweighted Gibbs measures and their averages.

The single-replica measures push the base weights gamma0 up through every
Phi_{U_k} operator. The two-replica measure of coupling level k1 shares the
draws of levels k1..r+1 between the replicas; below k1 each replica runs its
own sub-tree and the two nested measures meet in a bilinear form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams
from .ladder import ChunkEvaluator, Estimate, _check_params, node_evaluator, run_outer, weighted_up
from .process import IndexedSets, gamma0, gamma0_factors

XY2 = "XY2"
XY2_CROSS = "XY2_CROSS"
BRACKET = "BRACKET"
# constant observable 1 under gamma01 / gamma02 / the two-replica measure
ONE = "ONE"
ONE_CROSS = "ONE_CROSS"
ONE_PAIR = "ONE_PAIR"

_SINGLE = (XY2, ONE)
_CROSS = (XY2_CROSS, ONE_CROSS)
_PAIR = (BRACKET, ONE_PAIR)


@dataclass(frozen=True)
class ObservableKind:
    """What to average and under which measure.

    ``p_ref``/``q_ref`` are the schedule entries inside the bracket (for
    ``XY2_CROSS`` only ``q_ref`` is used).
    """

    tag: str
    p_ref: float = 1.0
    q_ref: float = 1.0

    def __post_init__(self):
        if self.tag not in _SINGLE + _CROSS + _PAIR:
            raise InvalidParams(f"unknown observable tag {self.tag!r}")

    @property
    def two_replica(self) -> bool:
        return self.tag in _PAIR


def bracket_kernels(sets: IndexedSets, p_ref: float, q_ref: float) -> tuple[np.ndarray, np.ndarray]:
    """(p a a^T - X X^T, q b b^T - Y Y^T); the bracket is their Kronecker product.

    For p_ref, q_ref >= 1 both kernels are entrywise nonnegative by
    Cauchy-Schwarz; rounding residue below a few ulps is set to zero there.
    """
    kx = p_ref * np.multiply.outer(sets.x_norms, sets.x_norms) - sets.x_gram
    ky = q_ref * np.multiply.outer(sets.y_norms, sets.y_norms) - sets.y_gram
    for ref, k, norms in ((p_ref, kx, sets.x_norms), (q_ref, ky, sets.y_norms)):
        if ref >= 1.0:
            tol = 64 * np.finfo(float).eps * np.multiply.outer(norms, norms)
            k[(k < 0) & (k > -tol)] = 0.0
    return kx, ky


def pair_form(mu_a: np.ndarray, mu_b: np.ndarray, kx: np.ndarray, ky: np.ndarray) -> np.ndarray:
    """sum mu_a[i1,i2] kx[i1,p1] ky[i2,p2] mu_b[p1,p2] over trailing (l_x, l_y) axes."""
    return np.sum(mu_a * np.matmul(np.matmul(kx, mu_b), ky), axis=(-2, -1))


def single_leaf_values(ch: ChunkEvaluator, t: float, kind: ObservableKind) -> np.ndarray:
    """Per-leaf average of a single-replica observable under gamma0 (or its cross variant)."""
    sets = ch.sets
    part = ch.ladder(t).part
    a2 = sets.x_norms**2
    if kind.tag in _SINGLE:
        g0 = gamma0(part)
        if kind.tag == ONE:
            return np.sum(g0, axis=(-2, -1))
        return np.sum(g0 * np.multiply.outer(a2, sets.y_norms**2), axis=(-2, -1))
    row, cond = gamma0_factors(part)
    if kind.tag == ONE_CROSS:
        inner = np.sum(cond, axis=-1) ** 2
        return np.sum(row * inner, axis=-1)
    # sum_{i2,p2} cond(i2) cond(p2) (q b_i2 b_p2 - y_i2.y_p2)
    cb = cond @ sets.y_norms
    cyc = np.sum((cond @ sets.y_gram) * cond, axis=-1)
    return np.sum(row * a2 * (kind.q_ref * cb**2 - cyc), axis=-1)


def nested_measure(ch: ChunkEvaluator, t: float, tree, upto: int) -> np.ndarray:
    """gamma0 averaged through Phi_{U_1}..Phi_{U_upto} of ``tree``'s own ladder."""
    lad = ch.ladder(t, tree)
    return weighted_up(gamma0(lad.part), lad, 1, upto)


def pair_node_values(ch: ChunkEvaluator, t: float, k1: int, kx, ky, *, constant: bool = False) -> np.ndarray:
    """Bilinear form of the two replica measures at the level-k1 nodes.

    Shape is the level-k1 node shape (outer-node shape when k1 = r+1).
    """
    if k1 == 1:
        g0 = gamma0(ch.ladder(t).part)
        if constant:
            return np.sum(g0, axis=(-2, -1)) ** 2
        return pair_form(g0, g0, kx, ky)
    mu_a = nested_measure(ch, t, ch.replica(k1, 0), k1 - 1)
    mu_b = nested_measure(ch, t, ch.replica(k1, 1), k1 - 1)
    if constant:
        return np.sum(mu_a, axis=(-2, -1)) * np.sum(mu_b, axis=(-2, -1))
    return pair_form(mu_a, mu_b, kx, ky)


def average_nodes(ch: ChunkEvaluator, kind: ObservableKind, k1: int | None, t: float) -> np.ndarray:
    """Per-outer-node average of ``kind`` under its reweighted measure."""
    r = ch.r
    lad = ch.ladder(t)
    if not kind.two_replica:
        return weighted_up(single_leaf_values(ch, t, kind), lad, 1, r)
    if k1 is None or not 1 <= k1 <= r + 1:
        raise InvalidParams(f"two-replica measure needs 1 <= k1 <= {r + 1}, got {k1}")
    if kind.tag == ONE_PAIR:
        vals = pair_node_values(ch, t, k1, None, None, constant=True)
    else:
        kx, ky = bracket_kernels(ch.sets, kind.p_ref, kind.q_ref)
        vals = pair_node_values(ch, t, k1, kx, ky)
    return weighted_up(vals, lad, k1, r)


def gibbs_average(kind: ObservableKind, k1, schedule, sets, beta, s, t, config) -> Estimate:
    """E_{G,U_{r+1}} of the reweighted average of ``kind``.

    Single-replica kinds ignore ``k1``; two-replica kinds use the measure
    whose replicas share levels >= k1.
    """
    _check_params(beta, s, t, allow_zero_beta=True)
    if kind.two_replica and (k1 is None or not 1 <= k1 <= schedule.r + 1):
        raise InvalidParams(f"k1 must lie in 1..{schedule.r + 1}, got {k1}")
    out = run_outer(schedule, sets, beta, s, config, lambda ch: {"v": average_nodes(ch, kind, k1, t)})
    return Estimate.from_samples(out["v"])


def phi_weight(address, k: int, schedule, sets, beta, s, t, config) -> np.ndarray:
    """Normalized Phi_{U_k} weights of the N_k draws below one node.

    ``address`` fixes levels r+1..k+1 as ``(j_{r+1}, ..., j_{k+1})``.
    """
    r = schedule.r
    if not 1 <= k <= r:
        raise InvalidParams(f"level {k} outside 1..{r}")
    if len(address) != r + 1 - k:
        raise InvalidParams(f"address for level {k} needs {r + 1 - k} indices, got {len(address)}")
    ev = node_evaluator(schedule, sets, beta, s, t, config, address)
    return ev.ladder(t).weights[k].reshape(-1)


def weights_from_log_terms(log_terms) -> np.ndarray:
    """Self-normalized weights exp(a_j - logsumexp(a)); a_j = (m_k/m_{k-1}) log zeta_{k-1}^{(j)}."""
    a = np.asarray(log_terms, dtype=np.float64)
    mx = a.max()
    w = np.exp(a - mx)
    return w / w.sum()
