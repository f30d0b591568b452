import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from levyfront.discretize import TorusGrid, assemble_torus_operator
from levyfront.exceptions import ConvergenceError
from levyfront.model import KernelSpec
from levyfront.spectral import (PrincipalEigensolver, eigen_residual, principal_eigenpair,
                                spectral_gap_probe)


def periodic_mu(grid, mean=1.0, amp=0.5):
    return mean + amp * np.cos(2 * np.pi * grid.nodes)


@pytest.fixture(scope="module")
def torus_256():
    g = TorusGrid(256)
    return g, assemble_torus_operator(KernelSpec(alpha=1.0), g)


@pytest.fixture(scope="module")
def torus_2048():
    g = TorusGrid(2048)
    return g, assemble_torus_operator(KernelSpec(alpha=1.0), g)


def test_constant_mu(torus_256):
    g, op = torus_256
    pair = principal_eigenpair(op, np.full(g.N, 1.7))
    assert pair.lambda1 == pytest.approx(-1.7, abs=1e-8)
    np.testing.assert_allclose(pair.eigenfunction, 1.0, atol=1e-8)
    assert eigen_residual(op, np.full(g.N, 1.7), pair) <= 1e-10


def test_periodic_mu_against_dense_oracle(torus_2048):
    g, op = torus_2048
    mu = periodic_mu(g)
    pair = principal_eigenpair(op, mu, tol=1e-10)
    assert -1.5 <= pair.lambda1 <= -1.0
    B = op.matrix - np.diag(mu)
    oracle = sla.eigvalsh(0.5 * (B + B.T), subset_by_index=[0, 0])[0]
    assert pair.lambda1 == pytest.approx(oracle, abs=1e-6)
    assert np.all(pair.eigenfunction > 0)
    assert pair.eigenfunction.max() == pytest.approx(1.0, abs=1e-15)
    assert eigen_residual(op, mu, pair) <= 1e-10


@settings(max_examples=10, deadline=None)
@given(c=st.floats(-3.0, 3.0))
def test_shift_identity(c, torus_256):
    g, op = torus_256
    mu = periodic_mu(g)
    base = principal_eigenpair(op, mu, tol=1e-10).lambda1
    shifted = principal_eigenpair(op, mu + c, tol=1e-10).lambda1
    assert shifted == pytest.approx(base - c, abs=1e-9)


def test_gap_probe(torus_256):
    g, op = torus_256
    lam1, lam2 = spectral_gap_probe(op, np.zeros(g.N))
    assert lam1 == pytest.approx(0.0, abs=1e-9)
    # first Fourier mode, 2 pi^2 up to the discretisation error at N = 256
    assert lam2 - lam1 == pytest.approx(2 * np.pi**2, rel=1e-4)
    mu = periodic_mu(g)
    a1, a2 = spectral_gap_probe(op, mu)
    b1, b2 = spectral_gap_probe(op, mu + 0.8)
    assert a2 - a1 > 0
    assert b2 - b1 == pytest.approx(a2 - a1, abs=1e-9)
    assert a1 == pytest.approx(principal_eigenpair(op, mu, tol=1e-10).lambda1, abs=1e-9)


def test_gap_probe_size_limit():
    g = TorusGrid(4096)
    op = assemble_torus_operator(KernelSpec(alpha=1.0), g)
    with pytest.raises(ValueError):
        spectral_gap_probe(op, np.zeros(g.N))


def test_monotone_in_mu(torus_256):
    g, op = torus_256
    rng = np.random.default_rng(3)
    mu = periodic_mu(g)
    lams = [principal_eigenpair(op, mu).lambda1]
    for _ in range(5):
        bump = np.zeros(g.N)
        i = rng.integers(g.N)
        bump[max(0, i - 10):i + 10] = rng.uniform(0.1, 1.0)
        mu = mu + bump
        lams.append(principal_eigenpair(op, mu).lambda1)
    assert np.all(np.diff(lams) < 0)


@settings(max_examples=8, deadline=None)
@given(amps=st.lists(st.floats(-1, 1), min_size=3, max_size=3), mean=st.floats(-1, 2))
def test_bracket_for_symmetric_kernel(amps, mean, torus_256):
    g, op = torus_256
    x = g.nodes
    mu = mean + sum(a * np.cos(2 * np.pi * (k + 1) * x) for k, a in enumerate(amps))
    lam = principal_eigenpair(op, mu).lambda1
    assert -mu.max() - 1e-9 <= lam <= -mu.mean() + 1e-9


def test_grid_stability():
    spec = KernelSpec(alpha=1.0)
    lams = []
    for n in (128, 256, 512):
        g = TorusGrid(n)
        lams.append(principal_eigenpair(assemble_torus_operator(spec, g), periodic_mu(g), tol=1e-10).lambda1)
    assert abs(lams[0] - lams[1]) <= 10 * abs(lams[1] - lams[2])


def test_residual_sensitivity(torus_256):
    g, op = torus_256
    mu = periodic_mu(g)
    pair = principal_eigenpair(op, mu, tol=1e-10)
    noisy = type(pair)(pair.lambda1, type(pair.g)(g, pair.g.values + 1e-3 * np.random.default_rng(0)
                                                        .standard_normal(g.N)), 0.0, 0)
    assert eigen_residual(op, mu, noisy) >= eigen_residual(op, mu, pair) + 1e-4


def test_solver_estimator_api(torus_256):
    g, op = torus_256
    est = PrincipalEigensolver(tol=1e-10)
    assert est.get_params()["tol"] == 1e-10
    est.fit(op, periodic_mu(g))
    assert est.lambda1_ < 0
    with pytest.raises(ConvergenceError):
        PrincipalEigensolver(tol=1e-14, max_iter=1).fit(op, periodic_mu(g))
    with pytest.raises(ValueError):
        PrincipalEigensolver(tol=0.0).fit(op, periodic_mu(g))


def test_export(tmp_path, torus_256):
    g, op = torus_256
    pair = principal_eigenpair(op, periodic_mu(g))
    js, csv = pair.write(tmp_path / "eigen")
    assert js.exists()
    data = np.loadtxt(csv, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 2], pair.eigenfunction)
