"""Grids, fields and quadrature of the singular nonlocal operator.

Two discretisations share one idea: the integrand ``u(x) - u(x+y)`` is
replaced by a piecewise-cubic Lagrange interpolant of ``u`` and the kernel is
integrated exactly against each interpolation basis function (product
integration, 8-point Gauss-Legendre per cell).  The cell(s) touching the
singularity are handled with the symmetrised second difference,

    (1/2) int_{|y|<rho} (2u(x) - u(x+y) - u(x-y)) K dy ~ -u''(x) int_0^rho y^2 K dy,

so the O(|y|) term cancels exactly.  Diagonal entries are minus the sum of
the off-diagonal weights, hence constants are annihilated by construction.
On both grids all off-diagonal entries are nonpositive (checked in tests),
which gives the discrete maximum principle used by the solvers.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import hyp2f1

from ._validation import as_values, check_finite_array, check_square
from .exceptions import DomainError, ResolutionError
from .model import KernelSpec

GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(8)
TAIL_MODELS = ("zero", "algebraic", "constant")


# ---------------------------------------------------------------------------
# grids and fields


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on [0, 1) with N nodes (d = 1)."""

    N: int
    d: int = 1

    def __post_init__(self):
        if self.d != 1:
            raise NotImplementedError("torus discretisation is implemented for d = 1")
        if int(self.N) != self.N or self.N < 16:
            raise ValueError(f"TorusGrid needs N >= 16, got {self.N}")

    @property
    def h(self):
        return 1.0 / self.N

    @property
    def nodes(self):
        return np.arange(self.N) / self.N

    @property
    def size(self):
        return self.N

    @property
    def cell_weights(self):
        return np.full(self.N, self.h)

    def to_dict(self):
        return {"kind": "torus", "d": self.d, "N": self.N}


@dataclass(frozen=True, eq=False)
class LineGrid:
    """Symmetric grid on [-R_max, R_max]: uniform core, log-spaced outer zone.

    Between the core and the logarithmic zone the spacing grows geometrically
    by at most ``growth`` per cell, so neighbouring cells never differ by more
    than that factor.
    """

    nodes: np.ndarray
    core_halfwidth: float
    core_spacing: float
    R_max: float
    n_core: int
    n_outer: int
    log_ratio: float
    growth: float = 1.1
    d: int = 1

    def __post_init__(self):
        x = check_finite_array(self.nodes, "nodes")
        if np.any(np.diff(x) <= 0):
            raise ValueError("line grid nodes must be strictly increasing")
        if not np.allclose(x, -x[::-1], rtol=0, atol=1e-12 * max(1.0, self.R_max)):
            raise ValueError("line grid nodes must be symmetric about 0")

    @classmethod
    def build(cls, core_halfwidth=8.0, core_spacing=1.0 / 32, R_max=1e12, n_outer=1000, growth=1.1):
        """Build a grid with ``n_outer`` nodes per side beyond the core.

        The logarithmic ratio is found by bisection so that the outer zone
        ends exactly at ``R_max`` with the requested node count.
        """
        if R_max <= 2 * core_halfwidth:
            raise ValueError("R_max must exceed twice the core half-width")
        n_half = int(round(core_halfwidth / core_spacing))
        if n_half < 4 or abs(n_half * core_spacing - core_halfwidth) > 1e-9 * core_halfwidth:
            raise ValueError("core_halfwidth must be a multiple (>= 4) of core_spacing")

        def outer(q):
            pts = []
            x, step = core_halfwidth, core_spacing
            while True:
                target = x * (q - 1.0)
                step = min(step * growth, target) if step < target else target
                if x + step >= R_max * (1.0 - 1e-12):
                    break
                x = x + step
                pts.append(x)
            if pts and (R_max - pts[-1]) < 0.5 * step:
                pts.pop()
            pts.append(R_max)
            return np.asarray(pts)

        lo, hi = 1.0 + 1e-9, 4.0
        if len(outer(hi)) > n_outer:
            raise ValueError("n_outer too small to reach R_max")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if len(outer(mid)) > n_outer:
                lo = mid
            else:
                hi = mid
        out = outer(hi)
        core = np.arange(-n_half, n_half + 1) * core_spacing
        nodes = np.concatenate([-out[::-1], core, out])
        return cls(nodes=nodes, core_halfwidth=float(core_halfwidth), core_spacing=float(core_spacing),
                   R_max=float(R_max), n_core=2 * n_half + 1, n_outer=len(out), log_ratio=float(hi),
                   growth=float(growth))

    @property
    def size(self):
        return len(self.nodes)

    @property
    def cell_weights(self):
        """Trapezoidal quadrature weights."""
        dx = np.diff(self.nodes)
        w = np.zeros(self.size)
        w[:-1] += 0.5 * dx
        w[1:] += 0.5 * dx
        return w

    def to_dict(self):
        return {"kind": "line", "d": self.d, "core_halfwidth": self.core_halfwidth,
                "core_spacing": self.core_spacing, "R_max": self.R_max, "n_core": self.n_core,
                "n_outer": self.n_outer, "log_ratio": self.log_ratio, "growth": self.growth,
                "size": self.size}


def required_rmax(lambda1, T, d, alpha, margin=1e3):
    """Smallest admissible R_max for a horizon T: e^{|lambda1| T/(d+alpha)} * margin."""
    return float(np.exp(abs(lambda1) * T / (d + alpha)) * margin)


def grid_from_dict(doc, nodes=None):
    if doc["kind"] == "torus":
        return TorusGrid(N=int(doc["N"]))
    if nodes is not None:
        return LineGrid(nodes=np.asarray(nodes, dtype=float), core_halfwidth=doc["core_halfwidth"],
                        core_spacing=doc["core_spacing"], R_max=doc["R_max"], n_core=doc["n_core"],
                        n_outer=doc["n_outer"], log_ratio=doc["log_ratio"], growth=doc["growth"])
    return LineGrid.build(doc["core_halfwidth"], doc["core_spacing"], doc["R_max"], doc["n_outer"],
                          doc["growth"])


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal values of a function on a grid, with an optional time stamp."""

    grid: object
    values: np.ndarray
    t: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = as_values(self.values, self.grid.size, "field values")
        object.__setattr__(self, "values", vals)

    @property
    def x(self):
        return self.grid.nodes

    def with_values(self, values, t=None):
        return Field(self.grid, values, self.t if t is None else t, dict(self.meta))

    def header(self):
        return {"grid": self.grid.to_dict(), "t": self.t, "n": self.grid.size, "meta": self.meta}

    def to_csv(self, path=None):
        """CSV with columns index, x, value at 17 significant digits."""
        buf = io.StringIO()
        buf.write("index,x,value\n")
        idx = np.arange(self.grid.size)
        np.savetxt(buf, np.column_stack([idx, self.x, self.values]), delimiter=",",
                   fmt=["%d", "%.17g", "%.17g"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def write(self, stem):
        """Write ``stem.csv`` and ``stem.json`` (grid metadata header)."""
        stem = Path(stem)
        self.to_csv(stem.with_suffix(".csv"))
        stem.with_suffix(".json").write_text(json.dumps(self.header(), indent=2, sort_keys=True))
        return stem.with_suffix(".csv"), stem.with_suffix(".json")

    @classmethod
    def read(cls, stem):
        stem = Path(stem)
        header = json.loads(stem.with_suffix(".json").read_text())
        data = np.loadtxt(stem.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
        grid = grid_from_dict(header["grid"], nodes=data[:, 1])
        return cls(grid, data[:, 2], header.get("t", 0.0), header.get("meta", {}))


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense quadrature matrix: ``(matrix @ u)[i]`` approximates L[u](x_i)."""

    matrix: np.ndarray
    grid: object
    kernel: KernelSpec
    tail: str | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        check_square(self.matrix, "operator matrix")
        if self.matrix.shape[0] != self.grid.size:
            raise ValueError("operator size does not match grid")

    @property
    def conservative(self):
        """Rows sum to zero by construction (torus, or line with constant tail)."""
        return self.tail in (None, "constant")

    @cached_property
    def _row_sums(self):
        return self.matrix @ np.ones(self.grid.size)

    def apply(self, u):
        vals = as_values(u, self.grid.size)
        out = self.matrix @ vals
        if self.conservative:
            # difference form sum_j a_ij (u_j - u_i): the roundoff left in the
            # row sums is removed, so constants map to exactly 0
            out = out - self._row_sums * vals
        return out

    def __matmul__(self, u):
        return self.apply(u)

    @property
    def diagonal(self):
        return np.diag(self.matrix)


# ---------------------------------------------------------------------------
# periodised kernel


def _em_tail(c, s, K):
    """Euler-Maclaurin tail sum_{k>K} (k + c)^(-s) and a bound on its error."""
    a = K + 1.0 + c
    integral = a ** (1.0 - s) / (s - 1.0)
    g = a ** (-s)
    g1 = -s * a ** (-s - 1.0)
    g3 = -s * (s + 1.0) * (s + 2.0) * a ** (-s - 3.0)
    value = integral + 0.5 * g - g1 / 12.0
    bound = 2.0 * np.abs(g3) / 720.0
    return value, bound


def periodized_kernel(spec: KernelSpec, x, y, k_max: int = 64, return_bound: bool = False):
    """sum_k K(x, y + k) over the integer lattice.

    Terms with ``|k|_inf <= k_max`` are summed directly; the remainder is
    replaced by an Euler-Maclaurin integral correction (d = 1) or an
    equal-area disc integral (d = 2).  With ``return_bound`` the function also
    returns an estimate of the truncation error.
    """
    if k_max < 4:
        raise ValueError("k_max must be >= 4")
    s = spec.exponent
    scale = 1.0 + spec.modulation(x)
    if spec.d == 1:
        y = np.mod(np.asarray(y, dtype=float), 1.0)
        if np.any((y == 0.0) | (y == 1.0)):
            raise DomainError("periodised kernel is singular at y = 0 mod 1")
        ks = np.arange(-k_max, k_max + 1, dtype=float)
        direct = np.sum(np.abs(y[..., None] + ks) ** (-s), axis=-1)
        t1, b1 = _em_tail(y, s, k_max)
        t2, b2 = _em_tail(-y, s, k_max)
        value = scale * (direct + t1 + t2)
        bound = scale * (b1 + b2)
    else:
        y = np.mod(np.asarray(y, dtype=float), 1.0)
        if np.any(np.all((y == 0.0) | (y == 1.0), axis=-1)):
            raise DomainError("periodised kernel is singular at y = 0 mod 1")
        ks = np.arange(-k_max, k_max + 1, dtype=float)
        kx, ky = np.meshgrid(ks, ks, indexing="ij")
        lattice = np.stack([kx.ravel(), ky.ravel()], axis=-1)
        diff = y[..., None, :] + lattice
        direct = np.sum(np.linalg.norm(diff, axis=-1) ** (-s), axis=-1)
        rho = (2 * k_max + 1) / np.sqrt(np.pi)
        tail = 2.0 * np.pi * rho ** (2.0 - s) / (s - 2.0)
        value = scale * (direct + tail)
        bound = scale * 0.1 * tail
    if return_bound:
        return value, bound
    return value


# ---------------------------------------------------------------------------
# torus operator


def _lagrange_cubic(s, nodes):
    """Cubic Lagrange basis on ``nodes`` (4 abscissae) evaluated at ``s``."""
    out = []
    for n in range(4):
        b = np.ones_like(s)
        for m in range(4):
            if m != n:
                b = b * (s - nodes[m]) / (nodes[n] - nodes[m])
        out.append(b)
    return np.stack(out, axis=-1)


def torus_offset_weights(alpha, N, k_max=64):
    """Weights W[j], j = 0..N-1, of the translation-invariant torus operator.

    ``(L0 u)_i = sum_j W[j] (u_i - u_{i+j})`` for the periodised kernel
    ``sum_k |y + k|^(-1-alpha)``; ``W[0]`` is 0.
    """
    h = 1.0 / N
    base = KernelSpec(d=1, alpha=alpha)
    W = np.zeros(N)
    t = 0.5 * (GAUSS_NODES + 1.0) * h
    regular = periodized_kernel(base, 0.0, t, k_max) - t ** (-1.0 - alpha)
    local = h ** (2.0 - alpha) / (2.0 - alpha) + np.sum(0.5 * h * GAUSS_WEIGHTS * t**2 * regular)
    # -u'' * local with u'' = (u_{i+1} - 2u_i + u_{i-1}) / h^2
    W[1] += local / h**2
    W[N - 1] += local / h**2
    half = N // 2
    j = np.arange(1, half)
    s = 0.5 * (GAUSS_NODES + 1.0)
    y = (j[:, None] + s[None, :]) * h
    kw = periodized_kernel(base, 0.0, y, k_max) * (0.5 * h * GAUSS_WEIGHTS)
    basis = _lagrange_cubic(s, (-1.0, 0.0, 1.0, 2.0))
    contrib = kw @ basis
    for n in range(4):
        off = j + n - 1
        np.add.at(W, off % N, contrib[:, n])
        np.add.at(W, (-off) % N, contrib[:, n])
    W[0] = 0.0
    return W


def torus_symbol(W, m):
    """Eigenvalue of the circulant operator with offset weights W on mode m."""
    N = len(W)
    j = np.arange(N)
    return float(np.sum(W * (1.0 - np.cos(2.0 * np.pi * m * j / N))))


def assemble_torus_operator(spec: KernelSpec, grid: TorusGrid, tol: float = 1e-4,
                            k_max: int = 64) -> OperatorMatrix:
    """Dense matrix of L on the torus.

    Raises :class:`ResolutionError` if the Richardson estimate of the
    relative error on the first Fourier mode exceeds ``tol``.
    """
    if spec.d != 1 or grid.d != 1:
        raise NotImplementedError("torus assembly is implemented for d = 1")
    N = grid.N
    W = torus_offset_weights(spec.alpha, N, k_max)
    order = 4.0 - spec.alpha
    lam_fine = torus_symbol(W, 1)
    lam_coarse = torus_symbol(torus_offset_weights(spec.alpha, N // 2, k_max), 1)
    err = abs(lam_fine - lam_coarse) / (2.0**order - 1.0) / lam_fine
    if err > tol:
        factor = (err / tol) ** (1.0 / order)
        suggested = int(2 ** np.ceil(np.log2(N * factor)))
        raise ResolutionError(
            f"estimated relative quadrature error {err:.2e} exceeds {tol:.1e} at N={N}; "
            f"try N={suggested}", suggested_n=suggested)
    idx = (np.arange(N)[None, :] - np.arange(N)[:, None]) % N
    A = -W[idx]
    A[np.diag_indices(N)] = W.sum()
    if not spec.x_independent:
        A *= (1.0 + spec.modulation(grid.nodes))[:, None]
    return OperatorMatrix(A, grid, spec, tail=None,
                          info={"symbol_error_estimate": err, "offset_weights": W})


def quadratic_form(op: OperatorMatrix, u) -> float:
    """Grid inner product <L u, u> on the torus."""
    vals = as_values(u, op.grid.size)
    return float(op.grid.h * np.dot(op.matrix @ vals, vals))


def garding_constant(spec: KernelSpec, k_max: int = 64) -> float:
    """Lower-order constant C in <L u, u> >= -C ||u||^2.

    For separable kernels the remainder term is bounded by
    ``(1/2) sup|a''| int y^2 K~(y) dy`` over the torus.
    """
    base = KernelSpec(d=1, alpha=spec.alpha)
    n = 4096
    y = (np.arange(n) + 0.5) / n * 0.5
    second_moment = 2.0 * np.sum(y**2 * periodized_kernel(base, 0.0, y, k_max)) * (0.5 / n)
    return 0.5 * spec.modulation_second_derivative_bound() * second_moment


# ---------------------------------------------------------------------------
# line operator


def _tail_integral(a, lower, p):
    """int_lower^inf z^-p (z - a)^-p dz for lower > a (closed form via 2F1)."""
    c = a / lower
    return lower ** (1.0 - 2.0 * p) / (2.0 * p - 1.0) * hyp2f1(p, 2.0 * p - 1.0, 2.0 * p, c)


def assemble_line_operator(spec: KernelSpec, grid: LineGrid, tail: str = "algebraic",
                           block: int = 64) -> OperatorMatrix:
    """Dense matrix of L on the truncated line.

    Beyond ``R_max`` the field is extended by 0 (``zero``), by
    ``u(+-R) (R/|x|)^(d+alpha)`` (``algebraic``) or by the boundary value
    (``constant``, a diagnostic mode in which constants are annihilated);
    the exterior contribution is integrated in closed form.
    """
    if tail not in TAIL_MODELS:
        raise ValueError(f"tail model must be one of {TAIL_MODELS}")
    if spec.d != 1:
        raise NotImplementedError("line assembly is implemented for d = 1")
    x = grid.nodes
    N = len(x)
    alpha = spec.alpha
    p = 1.0 + alpha
    R = grid.R_max
    ncell = N - 1
    a, b = x[:-1], x[1:]
    st = np.clip(np.arange(ncell) - 1, 0, N - 4)
    stencil = st[:, None] + np.arange(4)
    sx = x[stencil]

    # full-cell Gauss points and basis values (fixed per cell)
    zq = 0.5 * (b - a)[:, None] * (GAUSS_NODES + 1.0) + a[:, None]
    wq = 0.5 * (b - a)[:, None] * GAUSS_WEIGHTS
    phi = np.stack([_lagrange_at(zq, sx, n) for n in range(4)], axis=-1)
    phiw = phi * wq[..., None]
    scatter = sp.csr_matrix(
        (np.ones(ncell * 4), (np.arange(ncell * 4), stencil.ravel())), shape=(ncell * 4, N))

    dx = np.diff(x)
    left = np.concatenate([[np.inf], dx])
    right = np.concatenate([dx, [np.inf]])
    rho = np.minimum(left, right)

    A = np.zeros((N, N))
    for start in range(0, N, block):
        rows = np.arange(start, min(start + block, N))
        dist = np.abs(zq[None, :, :] - x[rows, None, None])
        kern = dist ** (-p)
        # drop the two cells adjacent to each row; they are added back below
        for k, i in enumerate(rows):
            if i > 0:
                kern[k, i - 1] = 0.0
            if i < ncell:
                kern[k, i] = 0.0
        contrib = np.einsum("jqn,bjq->bjn", phiw, kern)
        diag = contrib.sum(axis=(1, 2))
        block_rows = -(scatter.T @ contrib.reshape(len(rows), -1).T).T
        A[rows] = block_rows
        A[rows, rows] += diag
    _adjacent_and_local(A, x, rho, stencil, sx, alpha, tail, R)
    _exterior(A, x, rho, alpha, tail, R)

    if not spec.x_independent:
        A *= (1.0 + spec.modulation(x))[:, None]
    return OperatorMatrix(A, grid, spec, tail=tail)


def _lagrange_at(z, sx, n):
    b = np.ones_like(z)
    for m in range(4):
        if m != n:
            b = b * (z - sx[:, m, None]) / (sx[:, n, None] - sx[:, m, None])
    return b


def _adjacent_and_local(A, x, rho, stencil, sx, alpha, tail, R):
    """Partial adjacent cells outside (x_i - rho, x_i + rho) plus the local term."""
    N = len(x)
    p = 1.0 + alpha
    for i in range(N):
        r = rho[i]
        for j, lo, hi in ((i - 1, None, x[i] - r), (i, x[i] + r, None)):
            if j < 0 or j >= N - 1:
                continue
            L = x[j] if lo is None else lo
            U = x[j + 1] if hi is None else hi
            if U - L <= 1e-14 * max(1.0, abs(x[i])):
                continue
            z = 0.5 * (U - L) * (GAUSS_NODES + 1.0) + L
            w = 0.5 * (U - L) * GAUSS_WEIGHTS * np.abs(z - x[i]) ** (-p)
            nodes = sx[j]
            for n in range(4):
                bn = np.ones_like(z)
                for m in range(4):
                    if m != n:
                        bn = bn * (z - nodes[m]) / (nodes[n] - nodes[m])
                c = float(np.sum(bn * w))
                A[i, stencil[j, n]] -= c
                A[i, i] += c
        local = r ** (2.0 - alpha) / (2.0 - alpha)
        if 0 < i < N - 1:
            hm, hp = x[i] - x[i - 1], x[i + 1] - x[i]
            cm = 2.0 / (hm * (hm + hp))
            cp = 2.0 / (hp * (hm + hp))
            A[i, i - 1] -= local * cm
            A[i, i + 1] -= local * cp
            A[i, i] += local * (cm + cp)
        else:
            inner = 1 if i == 0 else N - 2
            ghost = _ghost_factor(tail, R, r, p)
            A[i, inner] -= local / r**2
            A[i, i] += local / r**2 * (2.0 - ghost)


def _ghost_factor(tail, R, r, p):
    if tail == "algebraic":
        return (R / (R + r)) ** p
    if tail == "constant":
        return 1.0
    return 0.0


def _exterior(A, x, rho, alpha, tail, R):
    N = len(x)
    p = 1.0 + alpha
    for sign, bidx in ((1.0, N - 1), (-1.0, 0)):
        a_ = sign * x
        lower = np.maximum(R, a_ + rho)
        mass = (lower - a_) ** (-alpha) / alpha
        A[np.arange(N), np.arange(N)] += mass
        if tail == "algebraic":
            A[:, bidx] -= R**p * _tail_integral(a_, lower, p)
        elif tail == "constant":
            A[:, bidx] -= mass


def apply_line_operator(spec: KernelSpec, grid: LineGrid, u, tail: str = "algebraic",
                        op: OperatorMatrix | None = None) -> Field:
    """Evaluate L[u] at every node of a line grid.

    ``op`` may carry a previously assembled matrix for the same
    (spec, grid, tail); otherwise one is assembled.
    """
    vals = as_values(u, grid.size)
    if op is None:
        op = assemble_line_operator(spec, grid, tail)
    elif op.tail != tail or op.grid is not grid:
        raise ValueError("operator does not match grid/tail")
    t = getattr(u, "t", 0.0)
    return Field(grid, op.apply(vals), t)

