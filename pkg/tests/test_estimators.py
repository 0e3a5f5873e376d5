import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randjacobi.estimators import (TridiagonalOperator, delta_ids_empirical, delta_ids_empirical_grid,
                                   empirical_ids, jackknife, lyapunov_estimate, rotation_ids, sturm_count)
from randjacobi.model import ModelEnsemble, PeriodicBlock
from randjacobi.normal_form import BandEdgeNormalForm, calibrated_normal_form
from randjacobi.spectral import delta_ids_periodic, make_edge, select_edge

from conftest import B0

LAPLACE = ModelEnsemble((B0,), (1.0,))


def test_sturm_small_examples():
    op = TridiagonalOperator(np.zeros(2), np.ones(1))  # eigenvalues -1, 1
    assert [sturm_count(op, E) for E in (-2.0, 0.0, 2.0)] == [0, 1, 2]
    op = TridiagonalOperator(np.array([1.0, 2.0, 3.0]), np.zeros(2))
    assert [sturm_count(op, E) for E in (0.5, 1.5, 2.5, 3.5)] == [0, 1, 2, 3]
    # energy exactly at an eigenvalue counts it once, not twice
    assert sturm_count(op, 2.0) in (1, 2)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 60))
def test_sturm_matches_dense_eigenvalues(seed, n):
    rng = np.random.default_rng(seed)
    op = TridiagonalOperator(rng.uniform(-2, 2, n), rng.uniform(0.3, 1.5, n - 1))
    ev = np.linalg.eigvalsh(op.dense())
    for E in rng.uniform(-4, 4, 10):
        if np.min(np.abs(ev - E)) > 1e-9:
            assert sturm_count(op, E) == int(np.sum(ev < E))


def test_empirical_laplacian_ids():
    est = empirical_ids(LAPLACE, 0.0, 10**5, replicas=8)
    assert est.value == pytest.approx(0.5, abs=1e-3)
    assert empirical_ids(LAPLACE, -3.0, 10**4).value == 0.0


def test_gap_label_constant():
    D = PeriodicBlock("D", (1.0, 1.0), (0.5, -0.5))
    ens = ModelEnsemble((D,), (1.0,))
    for E in (-0.4, 0.0, 0.4):
        # open chains hold at most one or two surface states in the gap
        assert empirical_ids(ens, E, 10**4).value == pytest.approx(0.5, abs=2e-4)


def test_paired_difference_zero_offset(ref_ensemble):
    edge = select_edge(ref_ensemble, "B0:lower")
    est = delta_ids_empirical(ref_ensemble, edge, 0.0, 10**4)
    assert est.value == 0.0 and est.std_error == 0.0


def test_grid_matches_single_offsets(ref_ensemble):
    edge = select_edge(ref_ensemble, "B0:lower")
    grid = delta_ids_empirical_grid(ref_ensemble, edge, [0.05, 0.1], 10**4, replicas=4, seed=5)
    for est in grid:
        one = delta_ids_empirical(ref_ensemble, edge, est.epsilon, 10**4, replicas=4, seed=5)
        assert one.value == est.value and one.samples == est.samples


@pytest.mark.parametrize("side", ["lower", "upper"])
def test_rotation_trivial_ensemble(side):
    nf = BandEdgeNormalForm.build(make_edge(B0, 0, 1, side))
    m = 10**5
    for eps in (0.001, 0.02, 0.2):
        est = rotation_ids(LAPLACE, nf, eps, m, replicas=2)
        target = delta_ids_periodic(nf.edge, eps)
        assert all(abs(x - target) <= 2 / m for x in est.samples)


def test_sturm_trivial_ensemble():
    edge = make_edge(B0, 0, 1, "lower")
    est = delta_ids_empirical(LAPLACE, edge, 0.1, 10**5, replicas=4)
    assert est.value == pytest.approx(delta_ids_periodic(edge, 0.1), abs=2e-5)


def test_rotation_independent_of_start(ref_ensemble, ref_form):
    a = rotation_ids(ref_ensemble, ref_form, 0.1, 10**5, replicas=4, theta0=0.0)
    b = rotation_ids(ref_ensemble, ref_form, 0.1, 10**5, replicas=4, theta0=1.0)
    # monotone degree-one maps keep orbits within one half-turn of each other
    for x, y in zip(a.samples, b.samples):
        assert abs(x - y) <= 2 / 10**5


def test_rotation_monotone_in_eps(ref_ensemble, ref_form):
    vals = [rotation_ids(ref_ensemble, ref_form, e, 2 * 10**5, replicas=4).value for e in (0.05, 0.1, 0.15, 0.2)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_determinism_and_worker_independence(ref_ensemble, ref_form):
    a = rotation_ids(ref_ensemble, ref_form, 0.1, 5 * 10**4, replicas=4, seed=9)
    b = rotation_ids(ref_ensemble, ref_form, 0.1, 5 * 10**4, replicas=4, seed=9, workers=2)
    assert a.samples == b.samples and a.value == b.value
    c = rotation_ids(ref_ensemble, ref_form, 0.1, 5 * 10**4, replicas=4, seed=10)
    assert c.samples != a.samples


def test_budget_warning(ref_ensemble, ref_form):
    est = rotation_ids(ref_ensemble, ref_form, 0.02, 10**3, replicas=2)
    assert any("BudgetTooSmall" in w for w in est.warnings)


@pytest.mark.parametrize("eps", [0.1, 0.15])
def test_methods_agree_reference(ref_ensemble, ref_form, eps):
    r = rotation_ids(ref_ensemble, ref_form, eps, 10**6)
    s = delta_ids_empirical(ref_ensemble, ref_form.edge, eps, 2 * 10**5)
    assert abs(r.value - s.value) <= 3 * math.hypot(r.std_error, s.std_error)


@pytest.mark.parametrize("which, eps", [("D:1:lower", 0.06), ("D:2:upper", 0.1)])
def test_methods_agree_dimer(dimer_ensemble, which, eps):
    nf = calibrated_normal_form(select_edge(dimer_ensemble, which), dimer_ensemble)
    assert eps <= nf.epsilon0
    r = rotation_ids(dimer_ensemble, nf, eps, 10**6)
    s = delta_ids_empirical(dimer_ensemble, nf.edge, eps, 2 * 10**5)
    assert r.value > 0
    assert abs(r.value - s.value) <= 3 * math.hypot(r.std_error, s.std_error)


def test_lyapunov_laplacian():
    assert lyapunov_estimate(LAPLACE, 0.0, 10**5).value == pytest.approx(0.0, abs=1e-3)
    assert lyapunov_estimate(LAPLACE, -3.0, 10**5).value == pytest.approx(math.acosh(1.5), abs=1e-3)


def test_jackknife_mean_standard_error():
    x = np.array([1.0, 2.0, 3.0, 4.0, 6.0])
    mean, se = jackknife(x)
    assert mean == pytest.approx(3.2)
    assert se == pytest.approx(np.std(x, ddof=1) / math.sqrt(len(x)))
    assert math.isnan(jackknife([1.0])[1])
