"""Problem definitions: jump kernel, KPP reaction, initial data.

A problem is the triple (kernel, reaction, initial data) of the nonlocal
Fisher-KPP equation

    u_t + L[u] = f(x, u),   L[u](x) = int (u(x) - u(x+y)) K(x, y) dy,

with a separable kernel ``K(x, y) = (1 + a(x)) |y|^(-d-alpha)``.  All spec
objects are frozen dataclasses; :func:`validate_assumptions` samples every
standing structural assumption and reports the worst witness for each.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._validation import check_dimension, check_order, check_positive_scalar
from .exceptions import DomainError

TWO_PI = 2.0 * np.pi


def _points(x, d):
    """Coerce ``x`` to an array of points with trailing axis of length d."""
    x = np.asarray(x, dtype=float)
    if d == 1:
        return x if (x.ndim >= 2 and x.shape[-1] == 1) else x[..., None]
    if x.shape[-1] != d:
        raise ValueError(f"points must have trailing dimension {d}, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class KernelSpec:
    """Separable jump kernel ``(1 + a(x)) |y|^(-d-alpha)``.

    The modulation is ``a(x) = amplitude * mean_i cos(2 pi x_i)``, smooth and
    1-periodic in every coordinate.  ``C_K`` defaults to the tightest constant
    compatible with the amplitude, ``max(1 + A, 1 / (1 - A))``.
    """

    d: int = 1
    alpha: float = 1.0
    amplitude: float = 0.0
    C_K: float | None = None

    def __post_init__(self):
        check_dimension(self.d)
        check_order(self.alpha)
        if not (0.0 <= self.amplitude < 1.0):
            raise DomainError(f"modulation amplitude must lie in [0,1), got {self.amplitude}")
        if self.C_K is None:
            object.__setattr__(self, "C_K", max(1.0 + self.amplitude, 1.0 / (1.0 - self.amplitude)))
        check_positive_scalar(self.C_K, "C_K")

    @property
    def exponent(self):
        """Tail exponent d + alpha."""
        return self.d + self.alpha

    @property
    def x_independent(self):
        return self.amplitude == 0.0

    def modulation(self, x):
        """a(x), evaluated pointwise (d=1 accepts plain arrays of coordinates)."""
        pts = _points(x, self.d)
        return self.amplitude * np.mean(np.cos(TWO_PI * pts), axis=-1)

    def modulation_second_derivative_bound(self):
        """sup |D^2 a| for the cosine modulation."""
        return self.amplitude * TWO_PI**2 / self.d

    def radial(self, y):
        """Base law |y|^(-d-alpha); y = 0 is rejected."""
        pts = _points(y, self.d)
        r = np.linalg.norm(pts, axis=-1)
        if np.any(r == 0.0):
            raise DomainError("kernel is singular at y = 0")
        return r ** (-self.exponent)

    def to_dict(self):
        return {"d": self.d, "alpha": self.alpha, "amplitude": self.amplitude, "C_K": self.C_K}


def eval_kernel(spec: KernelSpec, x, y):
    """K(x, y) = (1 + a(x)) |y|^(-d-alpha); vectorised over broadcastable x, y."""
    return (1.0 + spec.modulation(x)) * spec.radial(y)


def _sample_lattice(d, n=2049):
    grid = np.linspace(0.0, 1.0, n)
    if d == 1:
        return grid
    gx, gy = np.meshgrid(grid[::8], grid[::8], indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=-1)


@dataclass(frozen=True)
class ReactionSpec:
    """KPP reaction ``f(x, u) = mu(x) u - E(x, u)``.

    ``mu`` and ``error`` are vectorised callables.  ``M`` is the saturation
    level beyond which f <= 0 and ``m_bar``/``M_bar`` the quadratic envelope
    of the error term.  Use :meth:`logistic` for the standard family.
    """

    mu: Callable
    error: Callable
    M: float
    m_bar: float
    M_bar: float
    d: int = 1
    params: dict = field(default_factory=dict, compare=False)
    mu_plus: float = field(init=False)
    mu_minus: float = field(init=False)

    def __post_init__(self):
        check_dimension(self.d)
        for name in ("M", "m_bar", "M_bar"):
            check_positive_scalar(getattr(self, name), name)
        if self.m_bar > self.M_bar:
            raise DomainError("m_bar must not exceed M_bar")
        mu_vals = np.asarray(self.mu(_sample_lattice(self.d)), dtype=float)
        object.__setattr__(self, "mu_plus", float(mu_vals.max()))
        object.__setattr__(self, "mu_minus", float(mu_vals.min()))

    @classmethod
    def logistic(cls, mu_mean=1.0, mu_amp=0.0, quadratic=1.0, saturation=None, d=1):
        """f = (mu_mean + mu_amp cos 2 pi x) u - quadratic u^2."""
        if abs(mu_amp) >= mu_mean:
            raise DomainError("need |mu_amp| < mu_mean so that mu stays positive")
        check_positive_scalar(quadratic, "quadratic")

        def mu(x):
            pts = _points(x, d)
            return mu_mean + mu_amp * np.mean(np.cos(TWO_PI * pts), axis=-1)

        def error(x, u):
            return quadratic * np.asarray(u, dtype=float) ** 2

        M = (mu_mean + abs(mu_amp)) / quadratic if saturation is None else float(saturation)
        params = {"mu_mean": mu_mean, "mu_amp": mu_amp, "quadratic": quadratic, "saturation": M}
        return cls(mu=mu, error=error, M=M, m_bar=quadratic, M_bar=quadratic, d=d, params=params)

    def __call__(self, x, u):
        return eval_reaction(self, x, u)

    def derivative(self, x, u, step=1e-7):
        """Central finite-difference estimate of d f / d u."""
        u = np.asarray(u, dtype=float)
        hs = step * np.maximum(1.0, np.abs(u))
        lo = np.maximum(u - hs, 0.0)
        hi = u + hs
        return (self._f(x, hi) - self._f(x, lo)) / (hi - lo)

    def _f(self, x, u):
        return self.mu(x) * u - self.error(x, u)

    def to_dict(self):
        return dict(self.params)


def eval_reaction(spec: ReactionSpec, x, u):
    """f(x, u) = mu(x) u - E(x, u) for nonnegative densities."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise DomainError("reaction is defined for nonnegative densities only")
    return spec._f(x, u)


@dataclass(frozen=True)
class InitialData:
    """Initial profile enveloped by ``c1, c2 / (1 + |x|^(d+alpha))``."""

    profile: Callable
    c1: float
    c2: float
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        check_positive_scalar(self.c1, "c1")
        check_positive_scalar(self.c2, "c2")
        if self.c1 > self.c2:
            raise DomainError("c1 must not exceed c2")

    @classmethod
    def algebraic(cls, c=1.0, d=1, alpha=1.0):
        """u0(x) = c / (1 + |x|^(d+alpha)); the envelope is tight, c1 = c2 = c."""
        p = d + alpha

        def profile(x):
            r = np.linalg.norm(_points(x, d), axis=-1)
            return c / (1.0 + r**p)

        return cls(profile=profile, c1=c, c2=c, params={"c": c})

    def __call__(self, x):
        return self.profile(x)


@dataclass(frozen=True)
class ProblemSpec:
    """Kernel, reaction and initial data plus a record of derived constants."""

    kernel: KernelSpec
    reaction: ReactionSpec
    initial: InitialData
    derived: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kernel.d != self.reaction.d:
            raise DomainError("kernel and reaction dimensions differ")

    @property
    def d(self):
        return self.kernel.d

    @property
    def alpha(self):
        return self.kernel.alpha

    def with_derived(self, **values):
        merged = {**self.derived, **values}
        return dataclasses.replace(self, derived=merged)

    @classmethod
    def from_dict(cls, doc):
        """Build from the JSON layout ``{d, alpha, kernel, reaction, initial}``."""
        d = int(doc.get("d", 1))
        alpha = doc["alpha"]
        check_order(alpha)
        kdoc = doc.get("kernel", {})
        rdoc = doc.get("reaction", {})
        idoc = doc.get("initial", {})
        kernel = KernelSpec(d=d, alpha=float(alpha), amplitude=float(kdoc.get("amplitude", 0.0)),
                            C_K=kdoc.get("C_K"))
        reaction = ReactionSpec.logistic(
            mu_mean=float(rdoc.get("mu_mean", 1.0)),
            mu_amp=float(rdoc.get("mu_amp", 0.0)),
            quadratic=float(rdoc.get("quadratic", 1.0)),
            saturation=rdoc.get("saturation"),
            d=d,
        )
        initial = InitialData.algebraic(c=float(idoc.get("c", 1.0)), d=d, alpha=float(alpha))
        return cls(kernel=kernel, reaction=reaction, initial=initial)

    def to_dict(self):
        return {
            "d": self.d,
            "alpha": self.alpha,
            "kernel": {"amplitude": self.kernel.amplitude, "C_K": self.kernel.C_K},
            "reaction": self.reaction.to_dict(),
            "initial": dict(self.initial.params),
        }


# ---------------------------------------------------------------------------
# assumption checks


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    worst: float
    witness: dict
    advisory: bool = False
    detail: str = ""

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class ValidationReport:
    checks: list
    samples: int
    seed: int

    @property
    def all_passed(self):
        return all(c.passed for c in self.checks if not c.advisory)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed(self):
        return [c.name for c in self.checks if not c.passed and not c.advisory]

    def to_dict(self):
        return {
            "all_passed": self.all_passed,
            "samples": self.samples,
            "seed": self.seed,
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def _jsonable(v):
    v = np.asarray(v)
    return v.tolist()


def _check(name, excess, witness_arrays, advisory=False, detail=""):
    """``excess`` > 0 marks a violation; the worst entry becomes the witness."""
    excess = np.asarray(excess, dtype=float)
    k = int(np.argmax(excess))
    witness = {key: _jsonable(np.asarray(arr)[k]) for key, arr in witness_arrays.items()}
    worst = float(excess[k])
    return AssumptionCheck(name, bool(worst <= 0.0), worst, witness, advisory, detail)


def _random_directions(rng, n, d):
    if d == 1:
        return rng.choice([-1.0, 1.0], size=(n, 1))
    v = rng.normal(size=(n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def validate_assumptions(spec: ProblemSpec, sample_budget: int = 1000, seed: int = 0,
                         rtol: float = 1e-12) -> ValidationReport:
    """Sample every standing assumption of the model and report pass/fail.

    ``excess`` values are relative violations; exact identities are checked
    to ``rtol``.  Derivative bounds on the kernel are reported as advisory.
    """
    if sample_budget < 100:
        raise ValueError("sample_budget must be at least 100")
    rng = np.random.default_rng(seed)
    n = int(sample_budget)
    k, r, u0 = spec.kernel, spec.reaction, spec.initial
    d, p = spec.d, spec.kernel.exponent
    checks = []

    checks.append(AssumptionCheck(
        "dimension_consistent", bool(k.d == r.d), 0.0 if k.d == r.d else 1.0,
        {"kernel_d": k.d, "reaction_d": r.d}))

    x = rng.random((n, d))
    shifts = rng.integers(-5, 6, size=(n, d)).astype(float)
    y = _random_directions(rng, n, d) * 10.0 ** rng.uniform(-3, 3, size=(n, 1))
    kv = eval_kernel(k, x, y)
    ratio = kv * np.linalg.norm(y, axis=-1) ** p
    wit = {"x": x, "y": y}

    checks.append(_check("kernel_positive", -kv, wit))
    checks.append(_check("kernel_symmetric_in_y",
                         np.abs(kv - eval_kernel(k, x, -y)) / kv - rtol, wit))
    checks.append(_check("kernel_periodic_in_x",
                         np.abs(kv - eval_kernel(k, x + shifts, y)) / kv - 1e-10, wit,
                         detail="tolerance 1e-10 absorbs cos(2 pi (x+k)) rounding"))
    checks.append(_check("kernel_bounds",
                         np.maximum(ratio - k.C_K, 1.0 / k.C_K - ratio) / k.C_K - rtol, wit,
                         detail=f"C_K = {k.C_K}"))

    # D_x K and D_x^2 K by central differences; upper bound only.
    step = 1e-4
    e = np.eye(d)
    d1 = np.zeros(n)
    d2 = np.zeros(n)
    for i in range(d):
        kp = eval_kernel(k, x + step * e[i], y)
        km = eval_kernel(k, x - step * e[i], y)
        d1 = np.maximum(d1, np.abs(kp - km) / (2 * step))
        d2 = np.maximum(d2, np.abs(kp - 2 * kv + km) / step**2)
    norm_p = np.linalg.norm(y, axis=-1) ** p
    needed = max(float(np.max(d1 * norm_p)), float(np.max(d2 * norm_p)))
    checks.append(_check("kernel_derivative_bounds",
                         np.maximum(d1, d2) * norm_p / k.C_K - 1.0 - 1e-6, wit, advisory=True,
                         detail=f"finite differences; smallest admissible constant ~ {needed:.6g}"))

    # reaction
    xs = rng.random((n, d))
    xq = xs[:, 0] if d == 1 else xs
    f0 = r._f(xq, np.zeros(n))
    checks.append(_check("f_zero_at_zero", np.abs(f0) - rtol, {"x": xs}))
    us = r.M * 10.0 ** rng.uniform(-6, 1, size=n)
    fu = r._f(xq, us)
    xs_shift = xs + rng.integers(-5, 6, size=(n, d))
    fu_shift = r._f(xs_shift[:, 0] if d == 1 else xs_shift, us)
    scale = np.maximum(np.abs(fu), 1e-300)
    checks.append(_check("f_periodic_in_x", np.abs(fu - fu_shift) / scale - 1e-9,
                         {"x": xs, "u": us}))

    ladder = np.geomspace(1e-6, 10.0, 64) * r.M
    ratios = r._f(np.repeat(xq[:, None] if d == 1 else xq[:, None, :], 64, axis=1),
                  np.broadcast_to(ladder, (n, 64))) / ladder
    incr = np.diff(ratios, axis=1)
    k_idx = np.argmax(incr, axis=1)
    worst_incr = incr[np.arange(n), k_idx] / np.maximum(np.abs(ratios[:, 0]), 1.0)
    checks.append(_check("f_over_u_nonincreasing", worst_incr - rtol,
                         {"x": xs, "u": ladder[k_idx]}))

    above = r.M * (1.0 + 9.0 * rng.random(n))
    f_above = r._f(xq, above)
    checks.append(_check("f_nonpositive_above_M", f_above / np.maximum(above, 1.0),
                         {"x": xs, "u": above}, detail=f"M = {r.M}"))

    E = r.error(xq, us)
    u2 = us**2
    checks.append(_check("error_envelope",
                         np.maximum(r.m_bar * u2 - E, E - r.M_bar * u2) / u2 - rtol,
                         {"x": xs, "u": us}, detail=f"m_bar = {r.m_bar}, M_bar = {r.M_bar}"))
    env_hi = fu - (r.mu_plus * us - r.m_bar * u2)
    env_lo = r.mu_minus * us - r.M_bar * u2 - fu
    checks.append(_check("kpp_envelope", np.maximum(env_hi, env_lo) / np.maximum(us, u2) - rtol,
                         {"x": xs, "u": us}))

    # initial data
    xr = _random_directions(rng, n, d) * 10.0 ** rng.uniform(-3, 6, size=(n, 1))
    xr_q = xr[:, 0] if d == 1 else xr
    rad = np.linalg.norm(xr, axis=-1)
    env = 1.0 / (1.0 + rad**p)
    vals = np.asarray(u0(xr_q), dtype=float)
    checks.append(_check("initial_positive", -vals, {"x": xr}))
    checks.append(_check("initial_envelope",
                         np.maximum(u0.c1 * env - vals, vals - u0.c2 * env) / env - 1e-12,
                         {"x": xr}, detail=f"c1 = {u0.c1}, c2 = {u0.c2}"))

    return ValidationReport(checks=checks, samples=n, seed=seed)
