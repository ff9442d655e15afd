"""Frequency-cascade reconstruction of ``c`` from boundary data of the total field.

With ``v = log u`` and ``q = dv/dk`` the Helmholtz equation becomes
``Delta v + (grad v)^2 = -k^2 c``. Marching from the highest wavenumber
downwards, each stage solves a linear Dirichlet problem for ``q_n``, rebuilds
``v`` from the accumulated ``Q`` and the tail gradient ``grad V``, reads off
``c``, and refreshes the tail by a forward solve at the top wavenumber.

Only ``grad V`` and its divergence are ever stored; ``V`` itself is not formed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, gmres, splu

from .forward import ForwardSolveError, solve_lippmann_schwinger
from .grid import Grid3D
from .medium import Medium
from .propagation import BoundaryData

log = logging.getLogger(__name__)


class InversionError(RuntimeError):
    """A cascade stage failed; ``stage`` is ``(n, i)`` or a label."""

    def __init__(self, message: str, stage=None, residual: float | None = None):
        where = f" at stage {stage}" if stage is not None else ""
        super().__init__(message + where)
        self.stage = stage
        self.residual = residual


# ---------------------------------------------------------------- stencils

def _spacing_zyx(grid: Grid3D) -> tuple[float, float, float]:
    hx, hy, hz = grid.spacing
    return float(hz), float(hy), float(hx)


def gradient(f: np.ndarray, grid: Grid3D) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centered differences inside, one-sided on the faces; returns ``(dx, dy, dz)``."""
    dz, dy, dx = np.gradient(f, *_spacing_zyx(grid))
    return dx, dy, dz


def divergence(gx, gy, gz, grid: Grid3D) -> np.ndarray:
    hz, hy, hx = _spacing_zyx(grid)
    return np.gradient(gx, hx, axis=2) + np.gradient(gy, hy, axis=1) + np.gradient(gz, hz, axis=0)


def laplacian(f: np.ndarray, grid: Grid3D) -> np.ndarray:
    """7-point Laplacian on interior nodes; zero on the boundary layer."""
    hz, hy, hx = _spacing_zyx(grid)
    out = np.zeros_like(f)
    c = f[1:-1, 1:-1, 1:-1]
    out[1:-1, 1:-1, 1:-1] = (
        (f[1:-1, 1:-1, 2:] - 2 * c + f[1:-1, 1:-1, :-2]) / hx ** 2
        + (f[1:-1, 2:, 1:-1] - 2 * c + f[1:-1, :-2, 1:-1]) / hy ** 2
        + (f[2:, 1:-1, 1:-1] - 2 * c + f[:-2, 1:-1, 1:-1]) / hz ** 2)
    return out


def log_gradient(u: np.ndarray, grid: Grid3D) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``grad u / u`` from principal logarithms of neighbour ratios.

    Each ratio ``u_{j+1} / u_j`` gives the derivative of ``log u`` at a half
    node without phase unwrapping; nodes average their two half-node values.
    This is exact for ``exp(i k x)`` whenever ``k h < pi``, unlike plain
    differences of ``u``.
    """
    hz, hy, hx = _spacing_zyx(grid)
    out = []
    for axis, h in ((2, hx), (1, hy), (0, hz)):
        a = np.moveaxis(u, axis, 0)
        half = np.log(a[1:] / a[:-1]) / h
        node = np.empty_like(a, dtype=complex)
        node[1:-1] = 0.5 * (half[1:] + half[:-1])
        node[0], node[-1] = half[0], half[-1]
        out.append(np.moveaxis(node, 0, axis))
    return tuple(out)


# ---------------------------------------------------------------- fast solvers

def _dst_eigs(m: int, h: float) -> np.ndarray:
    p = np.arange(1, m + 1)
    return -(4.0 / h ** 2) * np.sin(p * np.pi / (2 * (m + 1))) ** 2


def _dst(a: np.ndarray, axes) -> np.ndarray:
    return sfft.dstn(a, type=1, axes=axes, norm="ortho")


def solve_laplace_dirichlet(boundary: np.ndarray, grid: Grid3D, tol: float = 1e-8) -> np.ndarray:
    """Discrete harmonic extension of the boundary layer of ``boundary``.

    Uses the sine transform in all three directions; the interior residual
    is checked against ``tol`` relative to the boundary-induced source.
    """
    hz, hy, hx = _spacing_zyx(grid)
    f = np.zeros(grid.shape, dtype=complex)
    mask = grid.boundary_mask()
    f[mask] = boundary[mask]
    rhs = -laplacian(f, grid)[1:-1, 1:-1, 1:-1]
    m3, m2, m1 = rhs.shape
    lam = (_dst_eigs(m3, hz)[:, None, None] + _dst_eigs(m2, hy)[None, :, None]
           + _dst_eigs(m1, hx)[None, None, :])
    f[1:-1, 1:-1, 1:-1] = _dst(_dst(rhs, (0, 1, 2)) / lam, (0, 1, 2))
    res = np.linalg.norm(laplacian(f, grid)[1:-1, 1:-1, 1:-1])
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    if res > tol * scale:
        raise InversionError(f"Laplace residual {res / scale:.2e} exceeds {tol:g}", "tail")
    return f


SCHEMES = ("centered", "upwind")


def _advection_weights(bc, h: float, scheme: str):
    """Weights ``(w_minus, w_centre, w_plus)`` of ``2 b D`` along one axis."""
    if scheme == "centered":
        br, bi = 0.0 * bc, bc
    elif scheme == "upwind":
        br, bi = bc, 0.0 * bc
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    fwd = np.real(br) >= 0
    wm = -bi / h + np.where(fwd, 0.0, -2.0 * br / h)
    wp = bi / h + np.where(fwd, 2.0 * br / h, 0.0)
    wc = np.where(fwd, -2.0 * br / h, 2.0 * br / h)
    return wm, wc, wp


class AdvectionPreconditioner:
    """Exact inverse of ``k (Delta_h + 2 b D_z)`` for a constant ``b = (0, 0, bz)``.

    Sine transforms diagonalize the lateral part; the remaining tridiagonal
    systems along x3 are factored once as a block-diagonal sparse matrix.
    """

    def __init__(self, interior_shape, spacing_zyx, k: float, bz: complex,
                 scheme: str = "centered"):
        m3, m2, m1 = interior_shape
        hz, hy, hx = spacing_zyx
        self.shape = interior_shape
        self.k = k
        lam = (_dst_eigs(m2, hy)[:, None] + _dst_eigs(m1, hx)[None, :]).ravel()
        wm, wc, wp = (complex(w) for w in _advection_weights(complex(bz), hz, scheme))
        lower = np.full(m3 - 1, 1.0 / hz ** 2 + wm)
        upper = np.full(m3 - 1, 1.0 / hz ** 2 + wp)
        T = sp.diags([lower, np.full(m3, -2.0 / hz ** 2 + wc, dtype=complex), upper], [-1, 0, 1])
        A = sp.kron(sp.identity(lam.size), T) + sp.diags(np.repeat(lam, m3).astype(complex))
        self._lu = splu(A.tocsc(), permc_spec="NATURAL")

    def __call__(self, r: np.ndarray) -> np.ndarray:
        m3, m2, m1 = self.shape
        w = _dst(r.reshape(self.shape), (1, 2))
        w = w.transpose(1, 2, 0).reshape(-1)
        w = self._lu.solve(w).reshape(m2, m1, m3).transpose(2, 0, 1)
        return (_dst(w, (1, 2)) / self.k).ravel()


def apply_q_operator(q: np.ndarray, b, k: float, grid: Grid3D, scheme: str = "centered") -> np.ndarray:
    """``k (Delta q + 2 b . grad q)`` on interior nodes (full-shape output, zero boundary)."""
    hz, hy, hx = _spacing_zyx(grid)
    out = laplacian(q, grid)
    I = (slice(1, -1),) * 3
    for axis, h, comp in ((2, hx, b[0]), (1, hy, b[1]), (0, hz, b[2])):
        plus = [slice(1, -1)] * 3
        minus = [slice(1, -1)] * 3
        plus[axis], minus[axis] = slice(2, None), slice(None, -2)
        bc = comp[I] if np.ndim(comp) else comp
        wm, wc, wp = _advection_weights(bc, h, scheme)
        out[I] += wm * q[tuple(minus)] + wc * q[I] + wp * q[tuple(plus)]
    out[I] *= k
    return out


@dataclass
class QSolveInfo:
    iterations: int
    residual: float


def solve_q_bvp(k: float, b, rhs: np.ndarray, q_boundary: np.ndarray, grid: Grid3D,
                tol: float = 1e-8, max_iter: int = 500, restart: int = 60,
                scheme: str = "centered", stage=None,
                strict: bool = True) -> tuple[np.ndarray, QSolveInfo]:
    """Solve ``k (Delta q + 2 b . grad q) = rhs`` with ``q = q_boundary`` on the faces.

    ``b`` is a 3-tuple of grid arrays (or scalars). GMRES is preconditioned by
    the constant-coefficient problem with the mean of ``b_z``; the relative
    residual is verified afterwards. ``max_iter`` bounds the total number of
    inner iterations.
    """
    mask = grid.boundary_mask()
    lift = np.zeros(grid.shape, dtype=complex)
    lift[mask] = q_boundary[mask]
    I = (slice(1, -1),) * 3
    f = (rhs[I] - apply_q_operator(lift, b, k, grid, scheme)[I]).ravel()
    ishape = tuple(s - 2 for s in grid.shape)
    if min(ishape) < 1:
        return lift, QSolveInfo(0, 0.0)

    def matvec(x):
        w = np.zeros(grid.shape, dtype=complex)
        w[I] = x.reshape(ishape)
        return apply_q_operator(w, b, k, grid, scheme)[I].ravel()

    n = f.size
    A = LinearOperator((n, n), matvec=matvec, dtype=complex)
    bz = complex(np.mean(b[2][I])) if np.ndim(b[2]) else complex(b[2])
    M = LinearOperator((n, n), matvec=AdvectionPreconditioner(ishape, _spacing_zyx(grid), k, bz, scheme),
                       dtype=complex)
    fn = np.linalg.norm(f)
    if fn == 0:
        return lift, QSolveInfo(0, 0.0)
    count = [0]

    def cb(_):
        count[0] += 1

    cycles = max(1, -(-int(max_iter) // restart))
    x, _ = gmres(A, f, M=M, rtol=0.1 * tol, atol=0.0, restart=restart, maxiter=cycles,
                 callback=cb, callback_type="pr_norm")
    res = float(np.linalg.norm(matvec(x) - f) / fn)
    if not np.isfinite(res) or (strict and res > tol):
        raise InversionError(f"q solver missed tolerance ({res:.2e} > {tol:g})", stage, res)
    q = lift
    q[I] = x.reshape(ishape)
    return q, QSolveInfo(count[0], res)


# ---------------------------------------------------------------- cascade pieces

@dataclass(frozen=True, eq=False)
class TailGradient:
    """Components of ``grad V`` on the grid and ``Delta V = div grad V``."""

    grid: Grid3D
    gx: np.ndarray = field(repr=False)
    gy: np.ndarray = field(repr=False)
    gz: np.ndarray = field(repr=False)
    div: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("gx", "gy", "gz"):
            a = np.asarray(getattr(self, name), dtype=complex)
            if a.shape != self.grid.shape:
                raise ValueError(f"{name} has shape {a.shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, a)
        if self.div is None:
            object.__setattr__(self, "div", divergence(self.gx, self.gy, self.gz, self.grid))

    @property
    def components(self):
        return self.gx, self.gy, self.gz


def plane_wave_tail(grid: Grid3D, k: float) -> TailGradient:
    """Tail gradient of ``exp(i k x3)``."""
    z = np.zeros(grid.shape, dtype=complex)
    return TailGradient(grid, z, z.copy(), np.full(grid.shape, 1j * k))


def init_tail(bdata: BoundaryData, tol: float = 1e-8) -> TailGradient:
    """Harmonic extension of approximate boundary values of ``grad V`` at the top wavenumber.

    On the top face the tangential components are log-derivatives of the data
    along the face and the normal one is ``i k``; the other faces get
    ``(0, 0, i k)``.
    """
    grid = bdata.grid
    k = float(bdata.kgrid.nodes[0])
    g = bdata.volume(0)
    mask = grid.boundary_mask()
    if np.min(np.abs(g[mask])) < 1e-12:
        raise InversionError("boundary data vanish; log undefined", "tail")
    top = g[-1]
    hx, hy = grid.spacing[0], grid.spacing[1]
    tx = np.empty_like(top)
    ty = np.empty_like(top)
    for arr, axis, h in ((tx, 1, hx), (ty, 0, hy)):
        a = np.moveaxis(top, axis, 0)
        half = np.log(a[1:] / a[:-1]) / h
        node = np.moveaxis(arr, axis, 0)
        node[1:-1] = 0.5 * (half[1:] + half[:-1])
        node[0], node[-1] = half[0], half[-1]
    R = [np.zeros(grid.shape, dtype=complex) for _ in range(3)]
    R[2][:] = 1j * k
    R[0][-1], R[1][-1] = tx, ty
    comps = [solve_laplace_dirichlet(r, grid, tol) for r in R]
    return TailGradient(grid, *comps)


def boundary_q(g_n: np.ndarray, g_next: np.ndarray, h: float) -> np.ndarray:
    """``(g_n - g_next) / (h g_n)``: a one-sided ``d/dk log g`` on the boundary."""
    g_n = np.asarray(g_n)
    if np.any(np.abs(g_n) < 1e-14):
        raise InversionError("boundary data vanish in the q boundary condition")
    return (g_n - np.asarray(g_next)) / (h * g_n)


def boundary_q_log(g_n: np.ndarray, g_next: np.ndarray, h: float) -> np.ndarray:
    """``log(g_n / g_next) / h`` with the principal branch.

    Agrees with :func:`boundary_q` to first order in ``h`` and is exact for
    ``exp(i k tau)`` whenever ``h |tau| < pi``.
    """
    g_n = np.asarray(g_n)
    g_next = np.asarray(g_next)
    if np.any(np.abs(g_n) < 1e-14) or np.any(np.abs(g_next) < 1e-14):
        raise InversionError("boundary data vanish in the q boundary condition")
    return np.log(g_n / g_next) / h


def coefficient_from_v(grad_v, lap_v: np.ndarray, k: float, grid: Grid3D,
                       c_max: float = 10.0, buffer: int = 2) -> np.ndarray:
    """``Re(-(Delta v + grad v . grad v) / k^2)`` clamped to ``[1, c_max]``, 1 near the faces."""
    gx, gy, gz = grad_v
    c = np.real(-(lap_v + gx * gx + gy * gy + gz * gz)) / (k * k)
    c = np.clip(np.nan_to_num(c, nan=1.0), 1.0, c_max)
    c[grid.boundary_mask(max(int(buffer), 1))] = 1.0
    return c


def update_coefficient(q_n: np.ndarray, Q_prev: np.ndarray, tail: TailGradient, h: float,
                       k: float, c_max: float = 10.0, buffer: int = 2) -> np.ndarray:
    """``c`` from ``v = -(h q_n + Q_prev) + V`` at wavenumber ``k``."""
    grid = tail.grid
    w = h * q_n + Q_prev
    dw = gradient(w, grid)
    grad_v = tuple(t - d for t, d in zip(tail.components, dw))
    lap_v = tail.div - laplacian(w, grid)
    return coefficient_from_v(grad_v, lap_v, k, grid, c_max, buffer)


def update_tail(medium: Medium, k_bar: float, tol: float = 1e-8, max_iter: int = 2000) -> TailGradient:
    """``grad u / u`` of the forward field at ``k_bar`` for the current coefficient."""
    grid = medium.grid
    try:
        u = solve_lippmann_schwinger(medium, k_bar, tol=tol, max_iter=max_iter).values
    except ForwardSolveError as exc:
        raise InversionError(f"tail forward solve failed: {exc}", "tail", exc.residual) from exc
    small = np.abs(u) < 1e-10
    if np.any(small):
        idx = np.argwhere(small)[0]
        node = grid.node(idx[::-1])
        raise InversionError(f"total field vanishes at node {tuple(idx[::-1])} (x={node})", "tail")
    return TailGradient(grid, *log_gradient(u, grid))


@dataclass
class CascadeState:
    """Running quantities of the cascade after stage ``n``."""

    n: int
    h: float
    q_history: list = field(default_factory=list, repr=False)
    Q: np.ndarray = field(default=None, repr=False)
    tail: TailGradient = field(default=None, repr=False)
    c_current: np.ndarray = field(default=None, repr=False)

    def recomputed_Q(self) -> np.ndarray:
        return self.h * np.sum(self.q_history, axis=0) if self.q_history else np.zeros_like(self.Q)


@dataclass(frozen=True)
class InversionConfig:
    inner_iterations: int = 3
    c_max: float = 10.0
    buffer: int = 2
    tol_stop: float = 1e-3
    q_tol: float = 1e-8
    q_max_iter: int = 500
    scheme: str = "centered"
    q_boundary: str = "log"
    forward_tol: float = 1e-8
    forward_max_iter: int = 2000


@dataclass
class IterationRecord:
    n: int
    i: int
    k: float
    c: np.ndarray = field(repr=False)
    q_iterations: int = 0
    q_residual: float = 0.0
    forward_iterations: int = 0
    change: float = float("nan")


def relative_changes(snapshots) -> np.ndarray:
    """``||c_j - c_{j-1}|| / ||c_{j-1}||`` for ``j >= 1`` (uniform grid, so plain norms)."""
    out = []
    for prev, cur in zip(snapshots[:-1], snapshots[1:]):
        out.append(np.linalg.norm(cur - prev) / np.linalg.norm(prev))
    return np.asarray(out)


def criterion_of_choice(snapshots, tol: float = 1e-3) -> int:
    """First index whose relative change from its predecessor drops below ``tol``, else the last."""
    if len(snapshots) == 0:
        raise ValueError("empty history")
    ch = relative_changes(snapshots)
    hit = np.flatnonzero(ch < tol)
    return int(hit[0] + 1) if hit.size else len(snapshots) - 1


def stage_rhs(Q_prev: np.ndarray, tail: TailGradient):
    """Advection field ``b = grad V - grad Q`` and the source of the ``q`` problem."""
    grid = tail.grid
    dQ = gradient(Q_prev, grid)
    b = tuple(t - d for t, d in zip(tail.components, dQ))
    rhs = 2.0 * (tail.div - laplacian(Q_prev, grid)) + 2.0 * (b[0] ** 2 + b[1] ** 2 + b[2] ** 2)
    return b, rhs


def run_inversion(bdata: BoundaryData, cfg: InversionConfig = InversionConfig(),
                  tail: TailGradient | None = None):
    """Full cascade over ``bdata.kgrid``; returns ``(Medium, records, chosen_index)``.

    The tail starts from :func:`init_tail` unless supplied.
    """
    grid = bdata.grid
    kg = bdata.kgrid
    nodes = kg.nodes
    h = kg.step
    k_bar = float(nodes[0])
    tail = init_tail(bdata) if tail is None else tail
    state = CascadeState(0, h, [], np.zeros(grid.shape, dtype=complex), tail,
                         np.ones(grid.shape))
    records: list[IterationRecord] = []
    q_prev = np.zeros(grid.shape, dtype=complex)
    mask = grid.boundary_mask()
    bq = {"log": boundary_q_log, "ratio": boundary_q}[cfg.q_boundary]
    for n in range(1, kg.N + 1):
        k_n = float(nodes[n])
        g_n = bdata.volume(n)[mask]
        qb = np.zeros(grid.shape, dtype=complex)
        if n < kg.N:
            qb[mask] = bq(g_n, bdata.volume(n + 1)[mask], h)
        else:
            # no node below the interval: difference towards k_{n-1} instead
            qb[mask] = bq(g_n, bdata.volume(n - 1)[mask], -h)
        tail_i = state.tail
        q = q_prev
        for i in range(1, cfg.inner_iterations + 1):
            b, rhs = stage_rhs(state.Q, tail_i)
            q, info = solve_q_bvp(k_n, b, rhs, qb, grid, tol=cfg.q_tol, max_iter=cfg.q_max_iter,
                                  scheme=cfg.scheme, stage=(n, i))
            c = update_coefficient(q, state.Q, tail_i, h, k_n, cfg.c_max, cfg.buffer)
            med = Medium(grid, c)
            if np.any(med.beta):
                try:
                    fwd = solve_lippmann_schwinger(med, k_bar, tol=cfg.forward_tol,
                                                   max_iter=cfg.forward_max_iter)
                except ForwardSolveError as exc:
                    raise InversionError(f"forward solve failed: {exc}", (n, i), exc.residual) from exc
                u = fwd.values
                if np.any(np.abs(u) < 1e-10):
                    raise InversionError("total field vanishes on the grid", (n, i))
                tail_i = TailGradient(grid, *log_gradient(u, grid))
                fit = fwd.iterations
            else:
                tail_i = plane_wave_tail(grid, k_bar)
                fit = 0
            prev = records[-1].c if records else np.ones(grid.shape)
            rec = IterationRecord(n, i, k_n, c, info.iterations, info.residual, fit,
                                  float(np.linalg.norm(c - prev) / np.linalg.norm(prev)))
            records.append(rec)
            log.info("stage %d.%d k=%.3f max c=%.4f q-its=%d fwd-its=%d change=%.2e",
                     n, i, k_n, c.max(), info.iterations, fit, rec.change)
        state.q_history.append(q)
        state.Q = state.Q + h * q
        state.tail = tail_i
        state.c_current = records[-1].c
        state.n = n
        q_prev = q
    chosen = criterion_of_choice([r.c for r in records], cfg.tol_stop)
    return Medium(grid, records[chosen].c), records, chosen
