import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levyfront.exceptions import DomainError
from levyfront.model import (InitialData, KernelSpec, ProblemSpec, ReactionSpec, eval_kernel,
                             eval_reaction, validate_assumptions)


def test_kernel_values():
    k = KernelSpec(alpha=1.0)
    assert eval_kernel(k, 0.3, 2.0) == pytest.approx(0.25, rel=1e-15)
    modulated = KernelSpec(alpha=1.0, amplitude=0.5)
    assert eval_kernel(modulated, 0.0, 1.0) == pytest.approx(1.5, rel=1e-15)


@given(x=st.floats(-5, 5), y=st.floats(1e-3, 1e3), amp=st.floats(0, 0.95),
       alpha=st.floats(0.05, 1.95))
def test_kernel_symmetric_and_periodic(x, y, amp, alpha):
    k = KernelSpec(alpha=alpha, amplitude=amp)
    assert eval_kernel(k, x, y) == eval_kernel(k, x, -y)
    assert eval_kernel(k, x + 3.0, y) == pytest.approx(eval_kernel(k, x, y), rel=1e-12)


def test_kernel_rejects_origin_and_bad_order():
    with pytest.raises(DomainError):
        eval_kernel(KernelSpec(), 0.1, 0.0)
    for bad in (0.0, 2.0, 2.5, -1.0):
        with pytest.raises(DomainError, match=r"must lie in \(0,2\)"):
            KernelSpec(alpha=bad)
    with pytest.raises(DomainError):
        KernelSpec(amplitude=1.0)


def test_reaction_values():
    r = ReactionSpec.logistic(1.0)
    assert eval_reaction(r, 0.2, 0.0) == 0.0
    assert eval_reaction(r, 0.2, 1.0) == 0.0
    assert eval_reaction(r, 0.2, 0.5) == pytest.approx(0.25, rel=1e-15)
    with pytest.raises(DomainError):
        eval_reaction(r, 0.2, -1e-3)
    with pytest.raises(DomainError):
        ReactionSpec.logistic(1.0, 1.2)


def test_logistic_constants():
    r = ReactionSpec.logistic(1.0, 0.5)
    assert r.mu_plus == pytest.approx(1.5)
    assert r.mu_minus == pytest.approx(0.5)
    assert (r.m_bar, r.M_bar, r.M) == (1.0, 1.0, 1.5)


def test_validation_logistic_passes(make_spec):
    report = validate_assumptions(make_spec(), sample_budget=500)
    assert report.all_passed, report.failed()
    assert report["kernel_bounds"].passed


def test_validation_amplitude_half_uses_ck_two(make_spec):
    spec = make_spec(amplitude=0.5)
    assert spec.kernel.C_K == 2.0
    report = validate_assumptions(spec)
    assert report["kernel_bounds"].passed
    assert report["initial_envelope"].passed


def test_validation_flags_bad_envelope():
    r = ReactionSpec(mu=lambda x: np.ones_like(np.asarray(x, dtype=float)),
                     error=lambda x, u: 0.5 * np.asarray(u) ** 2, M=2.0, m_bar=1.0, M_bar=1.0)
    spec = ProblemSpec(KernelSpec(), r, InitialData.algebraic())
    report = validate_assumptions(spec)
    assert not report["error_envelope"].passed
    assert "error_envelope" in report.failed()
    assert not report.all_passed


def test_validation_flags_non_kpp():
    # f = u + u^2: f/u increases and f stays positive above M
    r = ReactionSpec(mu=lambda x: np.ones_like(np.asarray(x, dtype=float)),
                     error=lambda x, u: -np.asarray(u) ** 2, M=1.0, m_bar=1.0, M_bar=1.0)
    report = validate_assumptions(ProblemSpec(KernelSpec(), r, InitialData.algebraic()))
    assert not report["f_over_u_nonincreasing"].passed
    assert not report["f_nonpositive_above_M"].passed


def test_validation_flags_initial_envelope():
    init = InitialData(profile=lambda x: 2.0 / (1.0 + np.abs(x) ** 2), c1=1.0, c2=1.0)
    report = validate_assumptions(ProblemSpec(KernelSpec(), ReactionSpec.logistic(), init))
    assert not report["initial_envelope"].passed
    assert report["initial_envelope"].witness


def test_validation_budget_floor(make_spec):
    with pytest.raises(ValueError):
        validate_assumptions(make_spec(), sample_budget=99)


def test_validation_report_json(make_spec):
    doc = json.loads(validate_assumptions(make_spec()).to_json())
    names = {c["name"] for c in doc["checks"]}
    assert {"kernel_positive", "f_zero_at_zero", "initial_envelope"} <= names


@settings(max_examples=8, deadline=None)
@given(alpha=st.floats(0.1, 1.9), amp=st.floats(0.0, 0.9), mu_mean=st.floats(0.5, 3.0),
       frac=st.floats(0.0, 0.9), seed=st.integers(1, 10_000))
def test_accepted_specs_survive_resampling(alpha, amp, mu_mean, frac, seed, make_spec):
    spec = make_spec(alpha=alpha, amplitude=amp, mu_mean=mu_mean, mu_amp=frac * mu_mean)
    assert validate_assumptions(spec, sample_budget=200, seed=0).all_passed
    assert validate_assumptions(spec, sample_budget=2000, seed=seed).all_passed


@given(x=st.floats(0, 1), u=st.floats(0, 10), mu_mean=st.floats(0.5, 3.0), frac=st.floats(0, 0.9))
def test_kpp_envelope(x, u, mu_mean, frac):
    r = ReactionSpec.logistic(mu_mean, frac * mu_mean)
    f = float(eval_reaction(r, x, u))
    tol = 1e-12 * max(1.0, u * u)
    assert f <= r.mu_plus * u - r.m_bar * u * u + tol
    assert f >= r.mu_minus * u - r.M_bar * u * u - tol


def test_problem_spec_roundtrip():
    doc = {"d": 1, "alpha": 0.75, "kernel": {"amplitude": 0.25},
           "reaction": {"mu_mean": 1.0, "mu_amp": 0.5}, "initial": {"c": 0.5}}
    spec = ProblemSpec.from_dict(doc)
    again = ProblemSpec.from_dict(spec.to_dict())
    assert again.kernel == spec.kernel
    assert again.reaction.to_dict() == spec.reaction.to_dict()
    assert again.initial.c1 == 0.5
    with pytest.raises(DomainError):
        ProblemSpec.from_dict(dict(doc, alpha=2.5))


def test_dimension_mismatch():
    with pytest.raises(DomainError):
        ProblemSpec(KernelSpec(d=2), ReactionSpec.logistic(d=1), InitialData.algebraic(d=2))


def test_two_dimensional_model():
    k = KernelSpec(d=2, alpha=1.0, amplitude=0.5)
    val = eval_kernel(k, np.array([0.0, 0.0]), np.array([0.0, 2.0]))
    assert val == pytest.approx(1.5 / 8.0)
    spec = ProblemSpec(k, ReactionSpec.logistic(d=2), InitialData.algebraic(d=2, alpha=1.0))
    assert validate_assumptions(spec, sample_budget=200).all_passed
