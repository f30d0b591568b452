"""Algebraic barriers w <= u <= W and the decay constant behind them.

With h(x, t) = 1 / (1 + e^{-lam t} |x|^{d+alpha}) the nonlocal operator obeys

    |L[h]| (1 + e^{-lam t} |x|^{d+alpha}) <= D e^{-alpha lam t / (d+alpha)},

and D is estimated here by applying the discrete line operator.  Barrier
constants follow from D with a fixed margin of 0.1 on every strict
inequality:

    B0 = D + mu_+ + 0.1,   A0 = |lambda1| + D - mu_- + 0.1,
    C0 = max(1, B0 / m_bar) * kappa,   c0 = min(|lambda1| / (2 M_bar), dyadic fit under u0).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import linregress

from .discretize import LineGrid, OperatorMatrix, assemble_line_operator
from .exceptions import InitialDataError
from .model import KernelSpec, ProblemSpec

MARGIN = 0.1
SANDWICH_TOL = 1e-8
RESIDUAL_TOL = 1e-6
C0_FLOOR = 1e-8
NOISE_FACTOR = 1e3


def profile_h(x, t, lam, p):
    return 1.0 / (1.0 + np.exp(-lam * t) * np.abs(x) ** p)


@dataclass(frozen=True)
class AccEstimate:
    """D-hat and the per-time maxima it was taken from."""

    D_hat: float
    lam: float
    times: tuple
    scaled_maxima: tuple
    raw_maxima: tuple
    argmax_x: tuple
    flagged: bool

    def decay_slope(self):
        """Slope of log(raw per-time maxima) against t."""
        if len(self.times) < 2:
            raise ValueError("need at least two times")
        return float(linregress(self.times, np.log(self.raw_maxima)).slope)

    def to_dict(self):
        return {"D_hat": self.D_hat, "lambda": self.lam, "times": list(self.times),
                "scaled_maxima": list(self.scaled_maxima), "raw_maxima": list(self.raw_maxima),
                "argmax_x": list(self.argmax_x), "flagged": self.flagged}


def acc_constant(spec: KernelSpec, lam: float, grid: LineGrid, times, op: OperatorMatrix | None = None,
                 tail: str = "algebraic") -> AccEstimate:
    """Estimate D = max |L[h]| (1 + e^{-lam t}|x|^{d+alpha}) e^{alpha lam t/(d+alpha)} over grid x and times."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    times = tuple(float(t) for t in times)
    if not times or min(times) < 0:
        raise ValueError("times must be a nonempty list of nonnegative values")
    if op is None:
        op = assemble_line_operator(spec, grid, tail)
    x = grid.nodes
    p = spec.d + spec.alpha
    absL = np.abs(op.matrix)
    scaled, raw, where = [], [], []
    for t in times:
        h = profile_h(x, t, lam, p)
        Lh = op.matrix @ h
        # nodes where L[h] is indistinguishable from matvec roundoff carry no information
        noise = NOISE_FACTOR * np.finfo(float).eps * (absL @ h)
        q = np.where(np.abs(Lh) > noise, np.abs(Lh) / h, 0.0)
        k = int(np.argmax(q))
        raw.append(float(q[k]))
        scaled.append(float(q[k] * np.exp(spec.alpha * lam * t / p)))
        where.append(float(x[k]))
    flagged = max(scaled) > 2.0 * scaled[int(np.argmin(times))]
    if flagged:
        warnings.warn("per-time ACC maxima grow by more than 2x: likely a truncation artifact; "
                      "increase R_max", RuntimeWarning, stacklevel=2)
    return AccEstimate(max(scaled), float(lam), times, tuple(scaled), tuple(raw), tuple(where), flagged)


@dataclass(frozen=True)
class BarrierSet:
    D: float
    A0: float
    B0: float
    c0: float
    C0: float
    lambda1: float
    d: int = 1
    alpha: float = 1.0
    notes: dict = field(default_factory=dict, compare=False)

    @property
    def p(self):
        return self.d + self.alpha

    def w(self, x, t):
        lam = abs(self.lambda1)
        return self.c0 * np.exp(-self.A0 * t) * profile_h(x, t, lam, self.p)

    def W(self, x, t):
        return self.C0 * profile_h(x, t, self.B0, self.p)

    def w_t(self, x, t):
        lam = abs(self.lambda1)
        h = profile_h(x, t, lam, self.p)
        return self.c0 * np.exp(-self.A0 * t) * h * (lam * (1.0 - h) - self.A0)

    def W_t(self, x, t):
        h = profile_h(x, t, self.B0, self.p)
        return self.C0 * self.B0 * h * (1.0 - h)

    def invariants(self):
        return {"B0_exceeds_rate": self.B0 > abs(self.lambda1), "c0_below_C0": self.c0 < self.C0}

    def with_constants(self, **kw):
        vals = {k: getattr(self, k) for k in ("D", "A0", "B0", "c0", "C0", "lambda1", "d", "alpha")}
        vals.update(kw)
        return BarrierSet(**vals, notes=dict(self.notes, modified=sorted(kw)))

    def to_dict(self):
        return {"D_hat": self.D, "A0": self.A0, "B0": self.B0, "c0": self.c0, "C0": self.C0,
                "lambda1": self.lambda1, "d": self.d, "alpha": self.alpha, "notes": self.notes}


def _largest_dyadic_below(value):
    k = np.floor(np.log2(value))
    c = 2.0 ** k
    return c / 2 if c >= value else c


def barrier_constants(spec: ProblemSpec, D: float, lambda1: float, grid=None) -> BarrierSet:
    """Recipe constants for the barrier pair from D and lambda1.

    u0 is compared nodewise on ``grid`` when given, otherwise through its
    envelope constants c1, c2.
    """
    if lambda1 >= 0:
        raise ValueError("barriers need lambda1 < 0")
    if D <= 0:
        raise ValueError("D must be positive")
    r = spec.reaction
    p = spec.d + spec.alpha
    lam = abs(lambda1)
    B0 = D + r.mu_plus + MARGIN
    A0 = lam + D - r.mu_minus + MARGIN
    if grid is not None:
        x = grid.nodes
        u0 = spec.initial(x)
        scaled = u0 * (1.0 + np.abs(x) ** p)
        lo, hi = float(scaled.min()), float(scaled.max())
    else:
        lo, hi = spec.initial.c1, spec.initial.c2
    base = max(1.0, B0 / r.m_bar)
    kappa = 1.0
    while base * kappa <= hi:
        kappa *= 2.0
    C0 = base * kappa
    if lo <= 0:
        raise InitialDataError("initial data vanish on the grid; no positive lower barrier")
    c0 = min(lam / (2.0 * r.M_bar), _largest_dyadic_below(lo))
    if c0 < C0_FLOOR:
        raise InitialDataError(f"lower barrier amplitude c0 = {c0:.3e} below {C0_FLOOR:g}; "
                               "the initial envelope constant is too small for this grid")
    return BarrierSet(float(D), float(A0), float(B0), float(c0), float(C0), float(lambda1), spec.d,
                      spec.alpha, {"kappa": kappa})


def calibrate_barriers(spec: ProblemSpec, lambda1: float, grid: LineGrid, times, op=None,
                       max_rounds: int = 10):
    """Barrier constants with D-hat taken over both rates |lambda1| and B0.

    B0 depends on D, so D-hat is recomputed at the new B0 until it stops growing.
    ``times`` refer to the rate |lambda1|; for the rate B0 they are rescaled
    so that the same range of lam * t is sampled.
    """
    if op is None:
        op = assemble_line_operator(spec.kernel, grid)
    lam = abs(lambda1)
    times = np.asarray(times, dtype=float)
    est = acc_constant(spec.kernel, lam, grid, times, op)
    D = est.D_hat
    history = [est]
    for _ in range(max_rounds):
        B0 = D + spec.reaction.mu_plus + MARGIN
        e2 = acc_constant(spec.kernel, B0, grid, times * lam / B0, op)
        history.append(e2)
        if e2.D_hat <= D * (1 + 1e-12):
            break
        D = e2.D_hat
    b = barrier_constants(spec, D, lambda1, grid)
    return b, history


@dataclass(frozen=True)
class SandwichReport:
    times: tuple
    lower_violations: tuple
    upper_violations: tuple
    witnesses: tuple
    tol: float = SANDWICH_TOL

    @property
    def total(self):
        return int(sum(self.lower_violations) + sum(self.upper_violations))

    def to_dict(self):
        return {"times": list(self.times), "lower_violations": list(self.lower_violations),
                "upper_violations": list(self.upper_violations), "total": self.total,
                "tol": self.tol, "witnesses": [list(w) for w in self.witnesses]}


def sandwich_check(traj, b: BarrierSet, tol: float = SANDWICH_TOL, max_witnesses: int = 20):
    """Count nodes with u < w - tol or u > W + tol at every snapshot."""
    x = traj.grid.nodes
    lower, upper, wit = [], [], []
    for snap in traj.snapshots:
        t = snap.t
        u = snap.values
        w = b.w(x, t)
        W = b.W(x, t)
        lo = u < w - tol
        hi = u > W + tol
        lower.append(int(lo.sum()))
        upper.append(int(hi.sum()))
        for k in np.nonzero(lo | hi)[0]:
            gap = float(w[k] - u[k]) if lo[k] else float(u[k] - W[k])
            wit.append((float(t), float(x[k]), float(u[k]), float(w[k]), float(W[k]), gap))
    wit.sort(key=lambda r: -r[-1])
    return SandwichReport(tuple(float(s.t) for s in traj.snapshots), tuple(lower), tuple(upper),
                          tuple(wit[:max_witnesses]), tol)


def sample_indices(grid, n_x=64):
    """Center node plus log-spaced nodes on the positive half-line (symmetric problems)."""
    x = grid.nodes
    center = int(np.argmin(np.abs(x)))
    n_pos = len(x) - 1 - center
    offs = np.unique(np.round(np.geomspace(1, n_pos, 4 * n_x)).astype(int))
    pick = offs[np.round(np.linspace(0, len(offs) - 1, n_x - 1)).astype(int)]
    return np.concatenate([[center], center + np.unique(pick)])


@dataclass(frozen=True)
class ResidualReport:
    super_min: float
    sub_max: float
    super_violations: int
    sub_violations: int
    n_samples: int
    witnesses: tuple
    hint: str = ""

    @property
    def ok(self):
        return self.super_violations == 0 and self.sub_violations == 0

    def to_dict(self):
        return {"super_min_scaled": self.super_min, "sub_max_scaled": self.sub_max,
                "super_violations": self.super_violations, "sub_violations": self.sub_violations,
                "n_samples": self.n_samples, "ok": self.ok, "hint": self.hint,
                "witnesses": [list(w) for w in self.witnesses]}


def barrier_residuals(b: BarrierSet, spec: ProblemSpec, grid: LineGrid, times, op=None,
                      n_x: int = 64, tol: float = RESIDUAL_TOL, max_witnesses: int = 20):
    """Signs of W_t + L W - f(W) (>= 0) and w_t + L w - f(w) (<= 0) on an (x, t) sample.

    Each residual is divided by |phi_t| + |L phi| + |f(phi)| at the same point.
    """
    if op is None:
        op = assemble_line_operator(spec.kernel, grid)
    x = grid.nodes
    idx = sample_indices(grid, n_x)
    f = spec.reaction
    sup_min, sub_max = np.inf, -np.inf
    n_sup = n_sub = 0
    wit = []
    for t in times:
        for kind, phi, phi_t in (("super", b.W(x, t), b.W_t(x, t)), ("sub", b.w(x, t), b.w_t(x, t))):
            Lphi = (op.matrix @ phi)[idx]
            fv = f(x[idx], phi[idx])
            res = phi_t[idx] + Lphi - fv
            scale = np.abs(phi_t[idx]) + np.abs(Lphi) + np.abs(fv)
            scale = np.where(scale > 0, scale, 1.0)
            rel = res / scale
            if kind == "super":
                sup_min = min(sup_min, float(rel.min()))
                bad = rel < -tol
                n_sup += int(bad.sum())
            else:
                sub_max = max(sub_max, float(rel.max()))
                bad = rel > tol
                n_sub += int(bad.sum())
            for k in np.nonzero(bad)[0]:
                wit.append((kind, float(t), float(x[idx][k]), float(res[k]), float(rel[k])))
    wit.sort(key=lambda r: -abs(r[-1]))
    hint = ""
    if n_sup or n_sub:
        hint = ("barrier inequality fails on the sample: D-hat may be underestimated; "
                "re-run acc_constant on a finer grid or larger R_max")
    return ResidualReport(sup_min, sub_max, n_sup, n_sub, len(idx) * len(times),
                          tuple(wit[:max_witnesses]), hint)


def write_bounds_report(outdir, b: BarrierSet, sandwich: SandwichReport | None = None,
                        residuals: ResidualReport | None = None, acc: AccEstimate | None = None,
                        controls: dict | None = None):
    """bounds.json plus bounds_witnesses.csv."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    doc = b.to_dict()
    doc["violations"] = sandwich.to_dict() if sandwich is not None else None
    doc["residual_extremes"] = residuals.to_dict() if residuals is not None else None
    doc["acc"] = acc.to_dict() if acc is not None else None
    doc["controls"] = controls or {}
    (outdir / "bounds.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    rows = list(sandwich.witnesses) if sandwich is not None else []
    with open(outdir / "bounds_witnesses.csv", "w") as fh:
        fh.write("t,x,u,w,W,gap\n")
        for r in rows:
            fh.write(",".join(f"{v:.17g}" for v in r) + "\n")
    return outdir / "bounds.json", outdir / "bounds_witnesses.csv"
