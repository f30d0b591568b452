"""Positive periodic steady state by monotone iteration.

Starting from the subsolution ``delta e^g`` the sequence

    (L + N0) u_{k+1} = f(x, u_k) + N0 u_k

is nondecreasing and capped by the supersolution ``M`` as long as
``L + N0`` is an M-matrix and ``N0 >= max(-d f / d u)``; seeding from
``M`` instead gives a nonincreasing sequence with the same limit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_values
from .discretize import Field, OperatorMatrix
from .exceptions import ConvergenceError, DiscretizationError, RegimeError
from .model import ProblemSpec
from .spectral import EigenPair

MONOTONE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SteadyState:
    u_plus: Field
    iterations: int
    residual: float
    monotonicity_log: list = field(default_factory=list)
    delta: float | None = None
    N0: float | None = None
    seed: str = "sub"

    def summary(self):
        return {"iterations": self.iterations, "residual": self.residual,
                "weak_mean": weak_mean(self.u_plus), "delta": self.delta, "N0": self.N0,
                "seed": self.seed}

    def write(self, stem):
        stem = Path(stem)
        np.savetxt(stem.with_suffix(".csv"), np.column_stack([self.u_plus.x, self.u_plus.values]),
                   delimiter=",", header="x,u_plus", comments="", fmt="%.17g")
        stem.with_suffix(".json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True))
        return stem.with_suffix(".csv"), stem.with_suffix(".json")


def estimate_n0(spec: ProblemSpec, x, margin=1.1, n_levels=129):
    """margin * max over the grid and u in [0, M] of -d f/d u (finite differences)."""
    r = spec.reaction
    levels = np.linspace(0.0, r.M, n_levels)
    xx = np.repeat(np.asarray(x)[:, None], n_levels, axis=1)
    uu = np.broadcast_to(levels, xx.shape)
    worst = float(np.max(-r.derivative(xx, uu)))
    return margin * worst if worst > 0 else margin


def subsolution_delta(spec: ProblemSpec, x, lambda1, eigenfunction, max_halvings=200):
    """Largest dyadic delta <= |lambda1| / (2 M_bar max e^g) with delta e^g a discrete subsolution.

    The check is ``(mu + lambda1) delta e^g <= f(x, delta e^g)`` nodewise,
    i.e. the eigen-relation L[e^g] = (mu + lambda1) e^g inserted into L u <= f(u).
    """
    r = spec.reaction
    e = np.asarray(eigenfunction)
    bound = abs(lambda1) / (2.0 * r.M_bar * e.max())
    delta = 2.0 ** np.floor(np.log2(bound))
    mu = r.mu(x)
    for _ in range(max_halvings):
        u = delta * e
        lhs = (mu + lambda1) * u
        if np.all(lhs <= r._f(x, u)):
            return float(delta)
        delta *= 0.5
    raise ConvergenceError("no dyadic subsolution amplitude found")


class MonotoneSteadyState(BaseEstimator):
    """Monotone sub/supersolution iteration for L u = f(x, u) on the torus.

    Parameters
    ----------
    tol : float
        Stop when ``||u_{k+1} - u_k||_inf < tol`` and the residual
        ``||L u - f(., u)||_inf`` is at most ``tol (1 + ||f||_inf)`` (or at
        the roundoff floor of the matrix-vector product).
    seed : {"sub", "super"}
        Start from ``delta e^g`` (increasing sequence) or from ``M``
        (decreasing sequence).
    n0_margin : float
        Safety factor on the sampled ``max(-d f/d u)``.
    max_iter : int

    Attributes
    ----------
    u_plus_, n_iter_, residual_, delta_, N0_, monotonicity_log_
    """

    def __init__(self, tol=1e-10, seed="sub", n0_margin=1.1, max_iter=20000):
        self.tol = tol
        self.seed = seed
        self.n0_margin = n0_margin
        self.max_iter = max_iter

    def fit(self, op: OperatorMatrix, spec: ProblemSpec, pair: EigenPair):
        if pair.lambda1 >= 0:
            raise RegimeError(
                f"lambda1 = {pair.lambda1:.6g} >= 0: extinction regime, no positive steady state")
        if self.seed not in ("sub", "super"):
            raise ValueError("seed must be 'sub' or 'super'")
        x = op.grid.nodes
        n = len(x)
        r = spec.reaction
        L = op.matrix
        e = np.exp(as_values(pair.g, n))
        delta = subsolution_delta(spec, x, pair.lambda1, e)
        floor = delta * e
        N0 = estimate_n0(spec, x, self.n0_margin)
        lu = sla.lu_factor(L + N0 * np.eye(n))
        norm_L = float(np.abs(L).sum(axis=1).max())
        u = floor.copy() if self.seed == "sub" else np.full(n, r.M)
        sign = 1.0 if self.seed == "sub" else -1.0
        log = []
        step = np.inf
        for it in range(1, self.max_iter + 1):
            new = sla.lu_solve(lu, r._f(x, u) + N0 * u)
            incr = sign * (new - u)
            worst = float(incr.min())
            log.append(worst)
            if worst < -MONOTONE_TOL * max(1.0, float(np.abs(u).max())):
                raise DiscretizationError(
                    f"monotone iteration violated at iteration {it} (increment {sign * worst:.3e})")
            if new.max() > r.M * (1.0 + 1e-12) or np.any(new < floor * (1.0 - 1e-12)):
                raise DiscretizationError(f"iterate left the sandwich [delta e^g, M] at iteration {it}")
            step = float(np.max(np.abs(new - u)))
            u = new
            if step < self.tol:
                fu = r._f(x, u)
                # below ~eps ||L|| ||u|| the residual is matvec roundoff
                floor = 10 * np.finfo(float).eps * norm_L * np.abs(u).max()
                if np.max(np.abs(L @ u - fu)) <= max(self.tol * (1.0 + np.abs(fu).max()), floor):
                    break
        else:
            raise ConvergenceError(f"steady iteration did not converge (last step {step:.3e})",
                                   residual=step)
        self.u_plus_ = u
        self.n_iter_ = it
        self.residual_ = float(np.max(np.abs(L @ u - r._f(x, u))))
        self.delta_ = delta
        self.N0_ = N0
        self.monotonicity_log_ = log
        return self

    def to_state(self, grid):
        check_is_fitted(self, "u_plus_")
        return SteadyState(Field(grid, self.u_plus_), self.n_iter_, self.residual_,
                           list(self.monotonicity_log_), self.delta_, self.N0_, self.seed)


def positive_steady_state(spec: ProblemSpec, op: OperatorMatrix, pair: EigenPair,
                          tol: float = 1e-10, seed: str = "sub") -> SteadyState:
    """Positive periodic solution of L u = f(x, u) (requires lambda1 < 0)."""
    est = MonotoneSteadyState(tol=tol, seed=seed).fit(op, spec, pair)
    return est.to_state(op.grid)


def steady_residual(op: OperatorMatrix, spec: ProblemSpec, u) -> float:
    """||L u - f(., u)||_inf."""
    vals = as_values(u, op.grid.size)
    if np.any(vals <= 0):
        raise ValueError("steady residual expects a positive field")
    return float(np.max(np.abs(op.matrix @ vals - spec.reaction(op.grid.nodes, vals))))


def weak_mean(u_plus) -> float:
    """Average of a periodic field over the unit cell."""
    grid = getattr(u_plus, "grid", None)
    vals = as_values(u_plus)
    if grid is None:
        return float(np.mean(vals))
    w = grid.cell_weights
    return float(np.dot(w, vals) / w.sum())
