import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liftlab import IndexedSets, ObservableKind, gibbs_average, phi_weight, validate_schedule
from liftlab.errors import InvalidParams
from liftlab.gibbs import (
    BRACKET,
    ONE,
    ONE_CROSS,
    ONE_PAIR,
    XY2,
    XY2_CROSS,
    average_nodes,
    bracket_kernels,
    pair_node_values,
    weights_from_log_terms,
)
from liftlab.ladder import ChunkEvaluator

from conftest import cfg, single_pair
from oracles import beta_zero_oracle


def _kinds(schedule):
    out = [(ObservableKind(XY2), None), (ObservableKind(ONE), None), (ObservableKind(ONE_CROSS), None)]
    out.append((ObservableKind(XY2_CROSS, 1.0, float(schedule.q_vec[0])), None))
    out.append((ObservableKind(XY2_CROSS, 1.0, 1.0), None))
    for k1 in range(1, schedule.r + 2):
        out.append((ObservableKind(BRACKET, float(schedule.p_vec[k1 - 1]), float(schedule.q_vec[k1 - 1])), k1))
        out.append((ObservableKind(BRACKET, 1.0, 1.0), k1))
        out.append((ObservableKind(ONE_PAIR), k1))
    return out


@pytest.mark.parametrize("r", [1, 2])
def test_beta_zero_enumeration(r, sets_3, sched_r1, sched_r2_open):
    sch = sched_r1 if r == 1 else sched_r2_open
    c = cfg(*((3,) + (2,) * r), seed=1)
    for kind, k1 in _kinds(sch):
        e = gibbs_average(kind, k1, sch, sets_3, 0.0, -1.0, 0.5, c)
        assert e.value == pytest.approx(beta_zero_oracle(sets_3, kind), abs=1e-10), (kind, k1)


def test_phi_weight_examples():
    np.testing.assert_allclose(weights_from_log_terms([0.0, np.log(3.0)]), [0.25, 0.75], rtol=1e-15)
    np.testing.assert_allclose(weights_from_log_terms([2.0, 2.0, 2.0, 2.0]), 0.25, rtol=1e-15)


def test_phi_weight_uniform_at_beta_zero(sched_r2, sets_3):
    c = cfg(2, 5, 7)
    np.testing.assert_allclose(phi_weight((1,), 2, sched_r2, sets_3, 0.0, 1.0, 0.5, c), 1 / 5, rtol=1e-14)
    np.testing.assert_allclose(phi_weight((0, 3), 1, sched_r2, sets_3, 0.0, 1.0, 0.5, c), 1 / 7, rtol=1e-14)


def test_phi_weight_uniform_when_zeta_constant(sets_3):
    """Zero-variance level: every child sees the same zeta, so its weights are uniform."""
    sch = validate_schedule([1, 1, 0.5, 0], [1, 1, 0.5, 0], [1, 0.7, 0.7, 0])
    c = cfg(2, 6, 4)
    w = phi_weight((0, 2), 1, sch, sets_3, 1.3, -1.0, 0.5, c)
    np.testing.assert_allclose(w, 1 / 4, rtol=1e-12)


def test_phi_weight_normalized_and_matches_ladder(sched_r2, sets_3):
    c = cfg(3, 5, 6, seed=4)
    w = phi_weight((2, 1), 1, sched_r2, sets_3, 2.0, 2.0, 0.3, c)
    assert abs(w.sum() - 1) < 1e-12 and np.all(w >= 0)
    ch = ChunkEvaluator(sched_r2, sets_3, 2.0, 2.0, c, outer_index=np.arange(3))
    np.testing.assert_allclose(w, ch.ladder(0.3).weights[1][2, 1], rtol=1e-12)
    with pytest.raises(InvalidParams):
        phi_weight((2,), 1, sched_r2, sets_3, 2.0, 2.0, 0.3, c)
    with pytest.raises(InvalidParams):
        phi_weight((2,), 3, sched_r2, sets_3, 2.0, 2.0, 0.3, c)


def test_single_pair_bracket_exact(sched_r2):
    sets = single_pair(1.3, 0.4)
    c = cfg(4, 3, 3, seed=2)
    for k1 in (1, 2, 3):
        for p_ref, q_ref in ((1.0, 1.0), (0.7, 0.3), (1.5, 2.0)):
            e = gibbs_average(ObservableKind(BRACKET, p_ref, q_ref), k1, sched_r2, sets, 1.7, -1.0, 0.4, c)
            exact = (p_ref - 1) * 1.3**2 * (q_ref - 1) * 0.4**2
            assert e.value == pytest.approx(exact, abs=1e-14)
            assert e.std_error < 1e-14


def test_xy2_constant_for_equal_norms(sched_r1):
    rng = np.random.default_rng(3)
    X = rng.standard_normal((4, 3))
    Y = rng.standard_normal((5, 2))
    X = 1.5 * X / np.linalg.norm(X, axis=1, keepdims=True)
    Y = 0.8 * Y / np.linalg.norm(Y, axis=1, keepdims=True)
    sets = IndexedSets.from_arrays(X, Y)
    e = gibbs_average(ObservableKind(XY2), None, sched_r1, sets, 3.0, -2.0, 0.6, cfg(10, 6, seed=1))
    assert e.value == pytest.approx(1.5**2 * 0.8**2, rel=1e-13)


@pytest.mark.parametrize("beta,s,t", [(0.5, -1.0, 0.3), (3.0, 2.0, 0.8), (1.0, 0.5, 0.0), (2.0, -3.0, 1.0)])
def test_constant_observables_have_total_mass_one(sched_r2_open, sets_3, beta, s, t):
    c = cfg(6, 4, 5, seed=3)
    ch = ChunkEvaluator(sched_r2_open, sets_3, beta, s, c, outer_index=np.arange(6))
    for kind, k1 in ((ObservableKind(ONE), None), (ObservableKind(ONE_CROSS), None)):
        np.testing.assert_allclose(average_nodes(ch, kind, k1, t), 1.0, atol=1e-10)
    for k1 in (1, 2, 3):
        np.testing.assert_allclose(average_nodes(ch, ObservableKind(ONE_PAIR), k1, t), 1.0, atol=1e-10)


def test_weights_normalized_every_node(sched_r2, unit_sets_4):
    c = cfg(8, 6, 7, seed=5)
    ch = ChunkEvaluator(sched_r2, unit_sets_4, 4.0, -2.0, c, outer_index=np.arange(8))
    lad = ch.ladder(0.5)
    for k in (1, 2):
        assert np.all(lad.weights[k] >= 0)
        assert np.max(np.abs(lad.weights[k].sum(axis=-1) - 1)) < 1e-12


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 5), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_bracket_kernels_nonnegative_at_unit_refs(lx, ly, dim, seed):
    rng = np.random.default_rng(seed)
    scale = 10.0 ** rng.uniform(-3, 3)
    sets = IndexedSets.from_arrays(scale * rng.standard_normal((lx, dim)), rng.standard_normal((ly, dim)))
    kx, ky = bracket_kernels(sets, 1.0, 1.0)
    assert np.all(kx >= 0) and np.all(ky >= 0)


def test_bracket_pair_values_nonnegative_many_samples(sched_r2, unit_sets_4):
    c = cfg(16, 256, 256, seed=8)
    kx, ky = bracket_kernels(unit_sets_4, 1.0, 1.0)
    count = 0
    for block in (np.arange(0, 8), np.arange(8, 16)):
        ch = ChunkEvaluator(sched_r2, unit_sets_4, 2.0, -1.0, c, outer_index=block)
        v = pair_node_values(ch, 0.5, 1, kx, ky)
        assert np.all(v >= 0)
        count += v.size
    assert count >= 10**6


def test_replica_swap_symmetry(sched_r2, unit_sets_4):
    c = cfg(20, 6, 6, seed=2)
    for k1 in (2, 3):
        kind = ObservableKind(BRACKET, float(sched_r2.p_vec[k1 - 1]), float(sched_r2.q_vec[k1 - 1]))
        a = gibbs_average(kind, k1, sched_r2, unit_sets_4, 1.5, -1.0, 0.5, c)
        b = gibbs_average(kind, k1, sched_r2, unit_sets_4, 1.5, -1.0, 0.5, c.replace(replica_tags=(2, 1)))
        assert abs(a.value - b.value) <= 1e-12 * max(1.0, abs(a.value))


def test_shared_replica_streams_use_primary_tree(sched_r2, unit_sets_4):
    c = cfg(4, 3, 3, seed=2, replica_streams_independent=False)
    ch = ChunkEvaluator(sched_r2, unit_sets_4, 1.0, 1.0, c, outer_index=np.arange(4))
    assert ch.replica(2, 0) is ch.tree and ch.replica(3, 1) is ch.tree
    e = gibbs_average(ObservableKind(BRACKET), 2, sched_r2, unit_sets_4, 1.0, 1.0, 0.5, c)
    assert np.isfinite(e.value)


def test_invalid_observables(sched_r1, sets_3):
    with pytest.raises(InvalidParams):
        ObservableKind("NOPE")
    for k1 in (None, 0, 3):
        with pytest.raises(InvalidParams):
            gibbs_average(ObservableKind(BRACKET), k1, sched_r1, sets_3, 1.0, 1.0, 0.5, cfg(2, 2))
    assert ObservableKind(BRACKET).two_replica and not ObservableKind(XY2_CROSS).two_replica
