import csv
import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liftlab import IndexedSets
from liftlab.errors import InvalidParams, SetTooLarge
from liftlab.models import (
    BINARY,
    HOPFIELD_POS,
    PERC_BINARY,
    SPHERE_ANALYTIC,
    ModelInstance,
    beta_sweep_ground_state,
    half_normal_coordinate_mean,
    hopfield_ground_state,
    hypercube_set,
    inner_max_positive_sphere,
    little_ground_state,
    perceptron_minmax,
    sphere_set,
    sweep_gaussians,
)

from conftest import cfg


def test_hypercube_examples():
    np.testing.assert_array_equal(np.sort(hypercube_set(1).ravel()), [-1.0, 1.0])
    h3 = hypercube_set(3)
    assert h3.shape == (8, 3) and len({tuple(r) for r in h3}) == 8
    np.testing.assert_allclose(np.linalg.norm(h3, axis=1), 1.0, atol=1e-15)
    with pytest.raises(SetTooLarge):
        hypercube_set(21)
    with pytest.raises(InvalidParams):
        hypercube_set(0)


def test_sphere_set_norms_and_orthant():
    y = sphere_set(5, 1000, seed=1)
    np.testing.assert_allclose(np.linalg.norm(y, axis=1), 1.0, atol=1e-12)
    yp = sphere_set(5, 1000, positive_orthant=True, seed=1)
    assert np.all(yp >= 0)
    np.testing.assert_allclose(np.linalg.norm(yp, axis=1), 1.0, atol=1e-12)


def test_half_normal_constant():
    assert half_normal_coordinate_mean(2) == pytest.approx(2 / math.pi, rel=1e-14)
    assert half_normal_coordinate_mean(3) == pytest.approx(0.5, rel=1e-14)


def test_sphere_first_coordinate_moments():
    N = 10**5
    plain = sphere_set(2, N, seed=3)[:, 0]
    # Var(z1) = 1/dim on the sphere
    assert abs(plain.mean()) <= 6 * math.sqrt(0.5 / N)
    pos = sphere_set(2, N, positive_orthant=True, seed=4)[:, 0]
    mu = half_normal_coordinate_mean(2)
    sd = math.sqrt(0.5 - mu**2)
    assert abs(pos.mean() - mu) <= 6 * sd / math.sqrt(N)


def test_hopfield_identity_example():
    for sign in ("pos", "neg"):
        assert hopfield_ground_state(np.eye(2), sign) == pytest.approx(1 / math.sqrt(2), rel=1e-15)
    assert hopfield_ground_state(np.zeros((3, 4))) == 0.0


def test_little_examples():
    assert little_ground_state(np.array([[-2.5]]), "pos") == 2.5
    assert little_ground_state(np.zeros((2, 3)), "neg") == 0.0


@pytest.mark.parametrize("seed", range(4))
def test_little_double_enumeration(seed):
    G = np.random.default_rng(seed).integers(-3, 4, size=(2, 2)).astype(float)
    X, Y = hypercube_set(2), hypercube_set(2)
    vals = np.array([[y @ G @ x for y in Y] for x in X])
    inner = vals.max(axis=1)
    assert little_ground_state(G, "pos") == pytest.approx(inner.max() / math.sqrt(2), rel=1e-14)
    assert little_ground_state(G, "neg") == pytest.approx(inner.min() / math.sqrt(2), rel=1e-14)


def test_hopfield_against_sphere_inner_max():
    G = np.random.default_rng(0).standard_normal((3, 4))
    X = hypercube_set(4)
    ref = max(np.linalg.norm(G @ x) for x in X) / 2.0
    assert hopfield_ground_state(G, "pos") == pytest.approx(ref, rel=1e-14)


@given(st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_homogeneity(c, seed):
    G = np.random.default_rng(seed).standard_normal((3, 4))
    for fn in (hopfield_ground_state, little_ground_state):
        for sign in ("pos", "neg"):
            assert fn(c * G, sign) == pytest.approx(abs(c) * fn(G, sign), rel=1e-12, abs=1e-14)
    if c > 0:
        assert perceptron_minmax(c * G).value == pytest.approx(c * perceptron_minmax(G).value, rel=1e-12, abs=1e-14)


def test_inner_max_identity_dense_sampling():
    v = np.array([1.0, -2.0, 3.0])
    Y = sphere_set(3, 10**5, positive_orthant=True, seed=5)
    sampled = (Y @ v).max()
    exact = inner_max_positive_sphere(v)
    assert exact == pytest.approx(math.sqrt(10), rel=1e-15)
    assert sampled <= exact
    assert sampled >= 0.99 * exact


def test_perceptron_examples():
    assert perceptron_minmax(np.zeros((1, 3)), BINARY).value == 0.0
    G = np.array([[1.0, 1.0], [1.0, -1.0]])
    ref = min(np.linalg.norm(np.maximum(G @ x, 0)) for x in hypercube_set(2)) / math.sqrt(2)
    res = perceptron_minmax(G, BINARY)
    assert res.value == pytest.approx(ref, abs=1e-15) and not res.heuristic
    with pytest.raises(SetTooLarge):
        perceptron_minmax(np.ones((1, 21)), BINARY)
    with pytest.raises(InvalidParams):
        perceptron_minmax(G, "GRID")


def test_perceptron_row_permutation_invariance():
    G = np.random.default_rng(2).standard_normal((5, 6))
    perm = np.random.default_rng(3).permutation(5)
    assert perceptron_minmax(G[perm]).value == perceptron_minmax(G).value


def test_spherical_perceptron_is_flagged_and_bounded():
    G = np.random.default_rng(4).standard_normal((8, 4))
    res = perceptron_minmax(G, SPHERE_ANALYTIC, seed=1)
    assert res.heuristic
    assert abs(np.linalg.norm(res.x) - 1) < 1e-12
    # best-found value is an upper bound certified by its own point
    assert res.value == pytest.approx(np.linalg.norm(np.maximum(G @ res.x, 0)) / 2.0, rel=1e-12)
    # dense random search cannot beat it by much
    X = sphere_set(4, 20000, seed=9)
    assert res.value <= np.min(np.linalg.norm(np.maximum(X @ G.T, 0), axis=1)) / 2.0 + 1e-9


def test_model_instance():
    inst = ModelInstance.random(HOPFIELD_POS, 4, 6, seed=1)
    assert inst.alpha == 1.5 and inst.G.shape == (6, 4)
    assert inst.ground_state() == hopfield_ground_state(inst.G, "pos")
    assert ModelInstance(PERC_BINARY, 2, 2, np.eye(2)).ground_state() == 0.0
    with pytest.raises(InvalidParams):
        ModelInstance("ISING", 2, 2, np.eye(2))


@pytest.fixture(scope="module")
def sweep_sets():
    return IndexedSets.from_arrays(hypercube_set(4), sphere_set(3, 64, positive_orthant=True, seed=2))


def test_sweep_sandwich_and_monotone(sweep_sets):
    table = beta_sweep_ground_state(sweep_sets, [0.5, 2, 8, 32, 128], 1.0, cfg(100, seed=1), zero_external_field=True)
    assert all(r.sandwich_ok for r in table.rows)
    assert table.gap_non_increasing()
    for r in table.rows:
        assert 0 <= r.gap <= math.log(4 * 16 * 64) / (r.beta * 2) + 1e-12


def test_sweep_target_is_enumeration(sweep_sets):
    c = cfg(20, seed=5)
    table = beta_sweep_ground_state(sweep_sets, [10.0], 1.0, c, zero_external_field=True)
    Gs = sweep_gaussians(sweep_sets.n, sweep_sets.m_dim, c)
    ref = np.mean([max(y @ G @ x for x in sweep_sets.X for y in sweep_sets.Y) for G in Gs]) / 2.0
    assert table.rows[0].target == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("s", [1.0, -1.0, 2.0, -0.5])
def test_sweep_sandwich_general_s(sweep_sets, s):
    table = beta_sweep_ground_state(sweep_sets, [0.3, 3, 30], s, cfg(50, seed=2))
    assert all(r.sandwich_ok for r in table.rows)


def test_sweep_small_beta_leading_term(sweep_sets):
    beta = 0.01
    table = beta_sweep_ground_state(sweep_sets, [beta], 1.0, cfg(200, seed=3))
    lead = (math.log(sweep_sets.l_x) + math.log(sweep_sets.l_y)) / (beta * math.sqrt(sweep_sets.n))
    assert table.rows[0].estimate == pytest.approx(lead, rel=1e-3)


def test_sweep_external_field_flag(sweep_sets):
    c = cfg(30, seed=1)
    a = beta_sweep_ground_state(sweep_sets, [5.0], 1.0, c, zero_external_field=True)
    b = beta_sweep_ground_state(sweep_sets, [5.0], 1.0, c)
    assert a.rows[0].estimate != b.rows[0].estimate
    with pytest.raises(InvalidParams):
        beta_sweep_ground_state(sweep_sets, [0.0], 1.0, c)


def test_sweep_csv_columns(sweep_sets):
    table = beta_sweep_ground_state(sweep_sets, [1.0, 2.0], 1.0, cfg(5, seed=9), model="HOPFIELD_POS")
    rows = list(csv.reader(io.StringIO(table.to_csv())))
    assert rows[0] == ["model", "n", "m_dim", "alpha", "beta", "estimate", "target", "gap", "seed"]
    assert len(rows) == 3 and rows[1][0] == "HOPFIELD_POS" and rows[1][-1] == "9"


def test_enumeration_scales_to_cap():
    G = np.random.default_rng(0).standard_normal((2, 16))
    v = hopfield_ground_state(G, "pos")
    best = 0.0
    for signs in itertools.islice(itertools.product((-1, 1), repeat=16), 4096):
        best = max(best, np.linalg.norm(G @ np.array(signs)) / 16)
    assert v >= best - 1e-12
