import json

import numpy as np
import pytest

from levyfront.discretize import Field, LineGrid, TorusGrid, assemble_torus_operator
from levyfront.evolve import SnapshotWriter, Stepper, default_dt, solve_cauchy, step
from levyfront.exceptions import DiscretizationError, StepSizeError, TruncationError
from levyfront.model import ProblemSpec, ReactionSpec
from levyfront.spectral import principal_eigenpair
from levyfront.steady import positive_steady_state


@pytest.fixture(scope="module")
def periodic():
    from conftest import build_spec
    spec = build_spec(alpha=1.0, mu_mean=1.0, mu_amp=0.5)
    g = TorusGrid(128)
    return spec, g, assemble_torus_operator(spec.kernel, g)


def test_default_dt(make_spec):
    assert default_dt(make_spec()) == 0.01
    assert default_dt(make_spec(mu_mean=100.0)) == pytest.approx(0.005)


def test_constant_unchanged_without_reaction(periodic):
    spec, g, op = periodic
    u = Field(g, np.full(g.N, 0.3))
    for scheme in ("imex", "explicit"):
        out = Stepper(spec, op, 1e-3, scheme, reaction=False)(u.values)
        np.testing.assert_allclose(out, 0.3, rtol=0, atol=1e-14)


def test_step_function(periodic):
    spec, g, op = periodic
    u = Field(g, np.full(g.N, 0.1), t=0.5)
    out = step(u, 1e-3, spec, op=op)
    assert out.t == pytest.approx(0.501)
    assert np.all(out.values > 0.1)


def test_logistic_closed_form(make_spec):
    g = TorusGrid(16)
    traj = solve_cauchy(make_spec(), g, 5.0, dt=1e-3, initial=np.full(g.N, 0.1), diffusion=False)
    exact = 1.0 / (1.0 + 9.0 * np.exp(-5.0))
    assert exact == pytest.approx(0.94283, abs=1e-5)
    np.testing.assert_allclose(traj.snapshots[-1].values, exact, atol=1e-4)


def test_mass_conserved_without_reaction(periodic):
    spec, g, op = periodic
    u0 = 0.5 + 0.4 * np.sin(2 * np.pi * g.nodes) ** 3
    traj = solve_cauchy(spec, g, 2.0, dt=0.01, op=op, initial=u0, reaction=False)
    m0 = traj.diagnostics["initial_mass"]
    drift = np.abs(np.array(traj.diagnostics["mass_per_step"]) - m0).max()
    assert drift <= 1e-10 * 2.0


def test_explicit_step_size_bound(periodic):
    spec, g, op = periodic
    bound = 0.9 / np.diag(op.matrix).max()
    with pytest.raises(StepSizeError):
        Stepper(spec, op, 2 * bound, "explicit")
    Stepper(spec, op, 0.99 * bound, "explicit")
    with pytest.raises(ValueError):
        Stepper(spec, op, 0.01, "rk4")


def test_zero_horizon(periodic):
    spec, g, op = periodic
    u0 = np.full(g.N, 0.2)
    traj = solve_cauchy(spec, g, 0.0, op=op, initial=u0)
    assert len(traj.snapshots) == 1
    np.testing.assert_array_equal(traj.snapshots[0].values, u0)
    with pytest.raises(ValueError):
        solve_cauchy(spec, g, -1.0, op=op)


def test_comparison_principle(make_spec, small_line, small_line_op):
    spec = make_spec()
    x = small_line.nodes
    ua = 0.5 / (1.0 + x**2)
    ub = ua + 0.2 * np.exp(-x**2)
    times = [0.5, 1.0, 2.0]
    ta = solve_cauchy(spec, small_line, 2.0, snapshot_times=times, op=small_line_op, initial=ua)
    tb = solve_cauchy(spec, small_line, 2.0, snapshot_times=times, op=small_line_op, initial=ub)
    for a, b in zip(ta.snapshots, tb.snapshots):
        assert np.all(a.values <= b.values + 1e-10)
    assert ta.T == 2.0
    assert np.max(ta.diagnostics["max_per_step"]) <= ta.diagnostics["cap"]


def test_cap_violation_detected(periodic):
    spec, g, op = periodic
    # pure growth with a wrongly declared cap M = 1
    r = ReactionSpec(mu=lambda x: np.full(np.shape(x), 5.0), error=lambda x, u: 0.0 * u, M=1.0,
                     m_bar=1.0, M_bar=1.0)
    bad = ProblemSpec(spec.kernel, r, spec.initial)
    with pytest.raises(DiscretizationError):
        solve_cauchy(bad, g, 1.0, dt=0.01, op=op, initial=np.full(g.N, 0.9))


def test_first_order_in_time(periodic):
    spec, g, op = periodic
    u0 = 0.2 + 0.1 * np.cos(2 * np.pi * g.nodes)
    ends = [solve_cauchy(spec, g, 1.0, dt=dt, op=op, initial=u0).snapshots[-1].values
            for dt in (0.02, 0.01, 0.005)]
    ratio = np.abs(ends[0] - ends[1]).max() / np.abs(ends[1] - ends[2]).max()
    assert 1.8 <= ratio <= 2.2


def test_steady_state_is_stationary(periodic):
    spec, g, op = periodic
    pair = principal_eigenpair(op, spec.reaction.mu(g.nodes))
    u_plus = positive_steady_state(spec, op, pair, tol=1e-12).u_plus.values
    traj = solve_cauchy(spec, g, 10.0, dt=0.01, op=op, initial=u_plus,
                        snapshot_times=np.arange(1, 11))
    for snap in traj.snapshots:
        assert np.abs(snap.values - u_plus).max() <= 1e-6


def test_truncation_monitor(make_spec):
    g = LineGrid.build(core_halfwidth=4.0, core_spacing=1.0 / 8, R_max=50.0, n_outer=40)
    with pytest.raises(TruncationError) as info:
        solve_cauchy(make_spec(), g, 5.0, dt=0.01)
    assert 0 < info.value.time <= 5.0


def test_snapshot_export(tmp_path, periodic):
    spec, g, op = periodic
    u0 = np.full(g.N, 0.2)
    with SnapshotWriter(tmp_path / "stream") as writer:
        traj = solve_cauchy(spec, g, 0.5, dt=0.01, op=op, initial=u0, snapshot_times=[0.25],
                            writer=writer)
    np.testing.assert_allclose(traj.times, [0.0, 0.25, 0.5])
    files = sorted((tmp_path / "stream").glob("snapshot_*.csv"))
    assert len(files) == 3
    head = files[0].read_text().splitlines()[0]
    assert head == "x,u"
    data = np.loadtxt(files[1], delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 1], traj.snapshots[1].values)
    traj.write(tmp_path / "copy")
    manifest = json.loads((tmp_path / "copy" / "manifest.json").read_text())
    assert manifest["scheme"] == "imex" and manifest["dt"] == 0.01
    assert manifest["times"] == [0.0, 0.25, 0.5]
