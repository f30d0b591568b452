"""Post-processing of trajectories: Hopf-Cole rescaling, fronts, rates, inner region.

Every routine here reads immutable snapshots; nothing is re-solved.  The
rescaled field is

    v^eps(x, t) = eps * log u(sign(x) |x|^{1/eps}, t / eps),

with u interpolated monotonically (PCHIP of log u in x, linear in t).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.stats import linregress
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_values
from .discretize import Field
from .exceptions import FitQualityError, RangeError

TINY = 1e-300
MIN_FIT_POINTS = 10
MIN_R2 = 0.99


class HopfColeTransformer(TransformerMixin, BaseEstimator):
    """u -> eps log u and back."""

    def __init__(self, eps=1.0):
        self.eps = eps

    def fit(self, X=None, y=None):
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        self.n_features_in_ = None if X is None else np.shape(X)[-1]
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        if np.any(X < 0):
            raise ValueError("Hopf-Cole transform needs nonnegative input")
        return self.eps * np.log(np.maximum(X, TINY))

    def inverse_transform(self, V):
        return np.exp(np.asarray(V, dtype=float) / self.eps)


class _LogInterpolant:
    """log u(x, t) from a trajectory: PCHIP in x per snapshot, linear in t."""

    def __init__(self, traj):
        self.traj = traj
        self.times = traj.times
        self.x = traj.grid.nodes
        self._cache = {}

    def _snap(self, k):
        if k not in self._cache:
            vals = np.log(np.maximum(self.traj.snapshots[k].values, TINY))
            self._cache[k] = PchipInterpolator(self.x, vals, extrapolate=False)
        return self._cache[k]

    def __call__(self, X, t):
        times = self.times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise RangeError(f"time {t:g} outside the simulated range [{times[0]:g}, {times[-1]:g}]; "
                             f"need T >= {t:g}")
        k = int(np.searchsorted(times, t - 1e-12 * max(1.0, t)))
        k = min(max(k, 0), len(times) - 1)
        if abs(times[k] - t) <= 1e-9 * max(1.0, t) or k == 0:
            return self._snap(k)(X)
        t0, t1 = times[k - 1], times[k]
        s = (t - t0) / (t1 - t0)
        return (1.0 - s) * self._snap(k - 1)(X) + s * self._snap(k)(X)


def interpolate_u(traj, X, t):
    """u at physical points X and time t, by the same interpolation as :func:`hopf_cole_rescale`."""
    return np.exp(_LogInterpolant(traj)(np.asarray(X, dtype=float), t))


@dataclass(frozen=True, eq=False)
class RescaledProfile:
    eps: float
    xs: np.ndarray
    ts: np.ndarray
    v: np.ndarray
    d: int = 1
    alpha: float = 1.0
    source: dict = field(default_factory=dict)

    def u(self):
        return HopfColeTransformer(self.eps).inverse_transform(self.v)

    def within_envelope(self, C0, margin=1e-8):
        """v^eps <= eps log C0 + margin everywhere on the window."""
        return bool(np.all(self.v <= self.eps * np.log(C0) + margin))

    def to_dict(self):
        return {"eps": self.eps, "xs": self.xs.tolist(), "ts": self.ts.tolist(),
                "v": self.v.tolist(), "d": self.d, "alpha": self.alpha, "source": self.source}


def window_grid(x_lo, x_hi, t_lo, t_hi, nx=33, nt=11, symmetric=True):
    xs = np.linspace(x_lo, x_hi, nx)
    if symmetric:
        xs = np.concatenate([-xs[::-1], xs])
    return xs, np.linspace(t_lo, t_hi, nt)


def hopf_cole_rescale(traj, eps: float, window) -> RescaledProfile:
    """v^eps on the window ``(xs, ts)`` from one unscaled trajectory."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    xs, ts = (np.asarray(w, dtype=float) for w in window)
    X = np.sign(xs) * np.abs(xs) ** (1.0 / eps)
    R = traj.grid.R_max
    need = float(np.abs(X).max()) if len(X) else 0.0
    if need > R:
        raise RangeError(f"window needs R_max >= {need:.6g} (grid has {R:.6g})")
    need_T = float(ts.max()) / eps
    if need_T > traj.T * (1 + 1e-12):
        raise RangeError(f"window needs T >= {need_T:.6g} (trajectory ends at {traj.T:.6g})")
    interp = _LogInterpolant(traj)
    hc = HopfColeTransformer(eps).fit()
    v = np.vstack([hc.transform(np.exp(interp(X, t / eps))) for t in ts])
    spec = traj.spec
    d = spec.d if spec is not None else 1
    alpha = spec.alpha if spec is not None else np.nan
    return RescaledProfile(eps, xs, ts, v, d, alpha, {"T": traj.T, "R_max": R})


def limit_profile(x, t, lambda1, d, alpha):
    """min(0, |lambda1| t - (d + alpha) log|x|); zero for |x| <= 1."""
    r = np.abs(np.asarray(x, dtype=float))
    with np.errstate(divide="ignore"):
        val = abs(lambda1) * np.asarray(t, dtype=float) - (d + alpha) * np.log(r)
    return np.minimum(0.0, val)


def profile_deviation(p: RescaledProfile, lambda1: float) -> float:
    """sup over the window of |v^eps - limit profile|."""
    lim = limit_profile(p.xs[None, :], p.ts[:, None], lambda1, p.d, p.alpha)
    return float(np.max(np.abs(p.v - lim)))


def level_set_radius(snapshot: Field, h: float):
    """Outermost |x| where u - h changes sign, or None if there is no crossing."""
    x = snapshot.grid.nodes
    u = snapshot.values
    if not 0 < h:
        raise ValueError("level must be positive")
    s = u - h
    idx = np.nonzero((s[:-1] >= 0) != (s[1:] >= 0))[0]
    if len(idx) == 0:
        return None
    x0, x1 = x[idx], x[idx + 1]
    u0, u1 = u[idx], u[idx + 1]
    out = np.empty(len(idx))
    logscale = (x0 * x1 > 0) & (u0 > 0) & (u1 > 0)
    # log u linear in log|x| between bracketing nodes
    with np.errstate(divide="ignore", invalid="ignore"):
        lx0, lx1 = np.log(np.abs(x0)), np.log(np.abs(x1))
        lu0, lu1 = np.log(u0), np.log(u1)
        s_log = (np.log(h) - lu0) / (lu1 - lu0)
        r_log = np.exp(lx0 + s_log * (lx1 - lx0))
    s_lin = (h - u0) / (u1 - u0)
    r_lin = np.abs(x0 + s_lin * (x1 - x0))
    out = np.where(logscale, r_log, r_lin)
    return float(out.max())


@dataclass(frozen=True)
class FrontTrace:
    level: float
    times: tuple
    radii: tuple
    interpolation: str = "log-log between bracketing nodes, outermost crossing"

    def monotone_after(self, t0, rtol=1e-9):
        t = np.asarray(self.times)
        r = np.asarray(self.radii)[t >= t0]
        return bool(np.all(np.diff(r) >= -rtol * r[:-1]))

    def to_csv(self, path):
        data = np.column_stack([self.times, self.radii, np.log(self.radii)])
        np.savetxt(path, data, delimiter=",", header="t,r,log_r", comments="", fmt="%.17g")
        return Path(path)

    def to_dict(self):
        return {"level": self.level, "times": list(self.times), "radii": list(self.radii),
                "interpolation": self.interpolation}


def front_trace(traj, h: float, t_min: float = 0.0) -> FrontTrace:
    """r_h(t) at every snapshot with t >= t_min where a crossing exists."""
    times, radii = [], []
    limit = 0.5 * getattr(traj.grid, "R_max", np.inf)
    for snap in traj.snapshots:
        if snap.t < t_min:
            continue
        r = level_set_radius(snap, h)
        if r is None:
            continue
        if r >= limit:
            raise RangeError(f"front at level {h:g} reached 0.5 R_max at t={snap.t:g}")
        times.append(float(snap.t))
        radii.append(r)
    return FrontTrace(float(h), tuple(times), tuple(radii))


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    window: tuple
    r2: float
    stderr: float
    n_points: int

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "window": list(self.window),
                "r2": self.r2, "stderr": self.stderr, "n_points": self.n_points}

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return Path(path)


class FrontRateRegressor(RegressorMixin, BaseEstimator):
    """Least-squares line through (t, log r); predicts r."""

    def fit(self, t, r):
        t = np.asarray(t, dtype=float).ravel()
        r = np.asarray(r, dtype=float).ravel()
        if t.shape != r.shape:
            raise ValueError("t and r must have the same length")
        if np.any(r <= 0):
            raise ValueError("radii must be positive")
        res = linregress(t, np.log(r))
        self.slope_ = float(res.slope)
        self.intercept_ = float(res.intercept)
        self.r2_ = float(res.rvalue ** 2)
        self.stderr_ = float(res.stderr)
        self.n_points_ = len(t)
        return self

    def predict(self, t):
        check_is_fitted(self, "slope_")
        return np.exp(self.intercept_ + self.slope_ * np.asarray(t, dtype=float))


def fit_front_rate(trace: FrontTrace, window=None, enforce_window=True) -> RateFit:
    """Fit d log r_h / dt over ``window`` (default [0.5 T, 0.9 T])."""
    t = np.asarray(trace.times)
    r = np.asarray(trace.radii)
    if len(t) == 0:
        raise ValueError("empty front trace")
    T = float(t.max())
    t1, t2 = (0.5 * T, 0.9 * T) if window is None else map(float, window)
    if enforce_window and t1 < 0.5 * T - 1e-12:
        raise ValueError(f"fit window must start after the transient (t1 >= {0.5 * T:g})")
    sel = (t >= t1 - 1e-12) & (t <= t2 + 1e-12)
    if sel.sum() < MIN_FIT_POINTS:
        raise ValueError(f"need >= {MIN_FIT_POINTS} trace points in the window, got {int(sel.sum())}")
    reg = FrontRateRegressor().fit(t[sel], r[sel])
    fit = RateFit(reg.slope_, reg.intercept_, (t1, t2), reg.r2_, reg.stderr_, reg.n_points_)
    if fit.r2 < MIN_R2:
        raise FitQualityError(f"front fit r^2 = {fit.r2:.4f} < {MIN_R2}", fit=fit)
    return fit


def _snapshot_at(traj, t):
    snap = traj.at(t)
    if abs(snap.t - t) > 0.5 * traj.dt + 1e-9:
        raise RangeError(f"no snapshot near t={t:g} (closest {snap.t:g})")
    return snap


def _exponents(traj, lambda1, d=None, alpha=None):
    spec = traj.spec
    d = spec.d if d is None else d
    alpha = spec.alpha if alpha is None else alpha
    return abs(lambda1), d + alpha


def periodic_values(u_plus, x):
    """Evaluate a periodic torus field at arbitrary points (periodic cubic spline)."""
    xp = np.append(u_plus.grid.nodes, 1.0)
    vals = as_values(u_plus)
    spline = CubicSpline(xp, np.append(vals, vals[0]), bc_type="periodic")
    return spline(np.mod(np.asarray(x, dtype=float), 1.0))


def _region(traj, t, factor, lambda1, inner):
    lam, p = _exponents(traj, lambda1)
    x = traj.grid.nodes
    with np.errstate(divide="ignore"):
        logr = p * np.log(np.abs(x))
    bound = factor * lam * t
    return logr <= bound if inner else logr >= bound


def inner_ratio(traj, u_plus, t: float, shrink: float, lambda1: float) -> float:
    """sup |u / u^+ - 1| over {|x|^{d+alpha} <= e^{(1 - shrink)|lambda1| t}}."""
    if not 0 < shrink < 1:
        raise ValueError("shrink must lie in (0, 1)")
    snap = _snapshot_at(traj, t)
    sel = _region(traj, snap.t, 1.0 - shrink, lambda1, inner=True)
    if sel.sum() < 10:
        raise RangeError(f"inner region at t={t:g} holds {int(sel.sum())} nodes (< 10)")
    up = periodic_values(u_plus, traj.grid.nodes[sel])
    return float(np.max(np.abs(snap.values[sel] / up - 1.0)))


def outer_sup(traj, t: float, shrink: float, lambda1: float) -> float:
    """sup u over {|x|^{d+alpha} >= e^{(1 + shrink)|lambda1| t}}."""
    snap = _snapshot_at(traj, t)
    sel = _region(traj, snap.t, 1.0 + shrink, lambda1, inner=False)
    if not np.any(sel):
        raise RangeError(f"outer region at t={t:g} lies beyond R_max")
    return float(snap.values[sel].max())


def inner_average(traj, t: float, shrink: float, lambda1: float) -> float:
    """Cell-weighted average of u over the shrunken inner region."""
    snap = _snapshot_at(traj, t)
    sel = _region(traj, snap.t, 1.0 - shrink, lambda1, inner=True)
    if sel.sum() < 10:
        raise RangeError(f"inner region at t={t:g} holds {int(sel.sum())} nodes (< 10)")
    w = traj.grid.cell_weights[sel]
    return float(np.dot(w, snap.values[sel]) / w.sum())


def dichotomy(traj, u_plus, t: float, lambda1: float, shrink: float = 0.1):
    """Outer smallness and inner convergence at time t, as one record."""
    from .steady import weak_mean

    mean = weak_mean(u_plus)
    avg = inner_average(traj, t, shrink, lambda1)
    return {"t": float(t), "shrink": shrink, "outer_sup": outer_sup(traj, t, shrink, lambda1),
            "inner_ratio": inner_ratio(traj, u_plus, t, shrink, lambda1), "inner_average": avg,
            "weak_mean": mean, "average_gap": abs(avg - mean) / mean}
