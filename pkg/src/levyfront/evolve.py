"""Time integration of u_t + L[u] = f(x, u).

Two first-order schemes:

* ``imex``     (I + dt L) u^{n+1} = u^n + dt f(x, u^n)  -- one LU, reused;
* ``explicit`` u^{n+1} = u^n - dt L u^n + dt f(x, u^n) with
  dt <= 0.9 / max diag(L).

Both preserve positivity and the order of initial data whenever L has
nonpositive off-diagonal entries and 1 + dt d f/d u >= 0.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from ._validation import as_values
from .discretize import Field, LineGrid, OperatorMatrix, TorusGrid, assemble_line_operator, \
    assemble_torus_operator
from .exceptions import DiscretizationError, SchemeError, StepSizeError, TruncationError
from .model import ProblemSpec

log = logging.getLogger(__name__)

CLIP_TOL = 1e-14
CAP_TOL = 1e-8
SCHEMES = ("imex", "explicit")


def default_dt(spec: ProblemSpec):
    return min(0.01, 0.5 / spec.reaction.mu_plus)


def _operator_for(spec, grid, tail="algebraic"):
    if isinstance(grid, TorusGrid):
        return assemble_torus_operator(spec.kernel, grid)
    return assemble_line_operator(spec.kernel, grid, tail)


class Stepper:
    """Reusable one-step map for a fixed (operator, dt, scheme)."""

    def __init__(self, spec: ProblemSpec, op: OperatorMatrix | None, dt: float, scheme="imex",
                 grid=None, diffusion=True, reaction=True):
        if scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.spec = spec
        self.grid = op.grid if op is not None else grid
        if self.grid is None:
            raise ValueError("need an operator or a grid")
        self.x = self.grid.nodes
        self.dt = float(dt)
        self.scheme = scheme
        self.reaction = reaction
        n = self.grid.size
        self.L = op.matrix if (diffusion and op is not None) else None
        if diffusion and op is None:
            raise ValueError("diffusion requires an operator")
        self._lu = None
        if self.L is not None:
            if scheme == "explicit":
                bound = 0.9 / float(np.max(np.diag(self.L)))
                if self.dt > bound:
                    raise StepSizeError(
                        f"explicit step dt={self.dt:.3e} exceeds the positivity bound {bound:.3e}",
                        admissible=bound)
            else:
                self._lu = sla.lu_factor(np.eye(n) + self.dt * self.L)
        self.clipped = 0

    def rhs(self, u):
        if not self.reaction:
            return np.zeros_like(u)
        return self.spec.reaction._f(self.x, u)

    def __call__(self, u):
        dt = self.dt
        if self.L is None:
            new = u + dt * self.rhs(u)
        elif self.scheme == "imex":
            new = sla.lu_solve(self._lu, u + dt * self.rhs(u), check_finite=False)
        else:
            new = u - dt * (self.L @ u) + dt * self.rhs(u)
        neg = new < 0.0
        if np.any(neg):
            worst = float(new.min())
            if worst < -CLIP_TOL:
                raise SchemeError(f"negative excursion {worst:.3e} beyond clip tolerance")
            self.clipped += int(neg.sum())
            new = np.where(neg, 0.0, new)
        return new


def step(state: Field, dt: float, spec: ProblemSpec, scheme: str = "imex",
         op: OperatorMatrix | None = None, diffusion: bool = True) -> Field:
    """Advance ``state`` by one step of size dt."""
    if diffusion and op is None:
        op = _operator_for(spec, state.grid)
    stepper = Stepper(spec, op if diffusion else None, dt, scheme, grid=state.grid,
                      diffusion=diffusion)
    return Field(state.grid, stepper(state.values), state.t + dt)


@dataclass(eq=False)
class Trajectory:
    grid: object
    snapshots: list
    scheme: str
    dt: float
    diagnostics: dict = field(default_factory=dict)
    spec: ProblemSpec | None = None

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])

    @property
    def T(self):
        return self.snapshots[-1].t

    def values(self):
        return np.vstack([s.values for s in self.snapshots])

    def at(self, t):
        """Snapshot whose time is closest to t."""
        k = int(np.argmin(np.abs(self.times - t)))
        return self.snapshots[k]

    def manifest(self):
        return {"times": [s.t for s in self.snapshots], "scheme": self.scheme, "dt": self.dt,
                "grid": self.grid.to_dict(), "diagnostics": self.diagnostics,
                "files": [f"snapshot_{k:05d}.csv" for k in range(len(self.snapshots))]}

    def write(self, outdir):
        outdir = Path(outdir)
        with SnapshotWriter(outdir) as w:
            for k, s in enumerate(self.snapshots):
                w.submit(k, s)
        (outdir / "manifest.json").write_text(json.dumps(self.manifest(), indent=2, sort_keys=True))
        return outdir / "manifest.json"


class SnapshotWriter:
    """Writes snapshot CSVs on a single background thread, in submission order."""

    def __init__(self, outdir):
        self.outdir = Path(outdir)
        self.outdir.mkdir(parents=True, exist_ok=True)
        self._pool = ThreadPoolExecutor(max_workers=1)
        self._futures = []

    def submit(self, index, snapshot: Field):
        path = self.outdir / f"snapshot_{index:05d}.csv"
        data = np.column_stack([snapshot.x, snapshot.values])
        self._futures.append(self._pool.submit(_write_xu, path, data))

    def close(self):
        for f in self._futures:
            f.result()
        self._pool.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _write_xu(path, data):
    np.savetxt(path, data, delimiter=",", header="x,u", comments="", fmt="%.17g")


def outermost_index(u, level):
    """Index of the outermost node (largest |x| on a symmetric grid) with u >= level."""
    above = np.nonzero(u >= level)[0]
    if len(above) == 0:
        return None
    return above[0], above[-1]


def solve_cauchy(spec: ProblemSpec, grid, T: float, dt: float | None = None, snapshot_times=None,
                 scheme: str = "imex", op: OperatorMatrix | None = None, initial=None,
                 monitor_level: float = 1e-3, monitor_fraction: float = 0.5, writer=None,
                 diffusion: bool = True, reaction: bool = True, tail: str = "algebraic") -> Trajectory:
    """Integrate from t = 0 to T, recording snapshots at the requested times.

    Snapshot times are rounded to the nearest multiple of dt.  On a line grid
    the run stops with :class:`TruncationError` once the ``monitor_level``
    set reaches ``monitor_fraction * R_max``.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    dt = default_dt(spec) if dt is None else float(dt)
    if diffusion and op is None:
        op = _operator_for(spec, grid, tail)
    x = grid.nodes
    u = as_values(spec.initial(x) if initial is None else initial, grid.size, "initial data")
    if np.any(u < 0):
        raise ValueError("initial data must be nonnegative")
    cap = max(float(u.max()), spec.reaction.M) + CAP_TOL
    n_steps = int(round(T / dt))
    if snapshot_times is None:
        snap_steps = {0, n_steps}
    else:
        snap_steps = {int(round(t / dt)) for t in snapshot_times if 0 <= t <= T + 0.5 * dt}
        snap_steps |= {0, n_steps}
    stepper = Stepper(spec, op if diffusion else None, dt, scheme, grid=grid, diffusion=diffusion,
                      reaction=reaction)
    line = isinstance(grid, LineGrid)
    limit = monitor_fraction * grid.R_max if line else None

    snaps = []
    mins, maxs, mass = [], [], []
    w = grid.cell_weights

    def record(k, vals):
        snap = Field(grid, vals.copy(), k * dt)
        snaps.append(snap)
        if writer is not None:
            writer.submit(len(snaps) - 1, snap)

    record(0, u)
    for k in range(1, n_steps + 1):
        u = stepper(u)
        mins.append(float(u.min()))
        maxs.append(float(u.max()))
        mass.append(float(np.dot(w, u)))
        if maxs[-1] > cap:
            raise DiscretizationError(
                f"sup-norm {maxs[-1]:.6g} exceeds comparison cap {cap:.6g} at t={k * dt:.4g}")
        if line:
            idx = outermost_index(u, monitor_level)
            if idx is not None and max(abs(x[idx[0]]), abs(x[idx[1]])) >= limit:
                raise TruncationError(
                    f"level-{monitor_level:g} set reached {monitor_fraction} R_max at t={k * dt:.4g}; "
                    "increase R_max", time=k * dt)
        if k in snap_steps:
            record(k, u)
    diagnostics = {"min_per_step": mins, "max_per_step": maxs, "mass_per_step": mass,
                   "dt_per_step": [dt] * n_steps, "clipped": stepper.clipped, "cap": cap,
                   "initial_mass": float(np.dot(w, snaps[0].values)), "n_steps": n_steps}
    log.info("integrated %d steps (dt=%g, scheme=%s)", n_steps, dt, scheme)
    return Trajectory(grid, snaps, scheme, dt, diagnostics, spec)
