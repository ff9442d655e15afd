"""Lippmann-Schwinger forward solver for the scalar Helmholtz equation.

The volume potential ``K[w](x) = k^2 * sum_j G(x - x_j) w_j dV`` is applied by
FFT convolution on a zero-padded grid. Off-diagonal entries use the node
value of ``G(r) = exp(ikr) / (4 pi r)``; the self cell is replaced by the ball
of equal volume, for which the integral is closed-form.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from .grid import Box3, Grid3D, PlaneSpec
from .medium import Medium

log = logging.getLogger(__name__)


class ForwardSolveError(RuntimeError):
    """Raised when the Krylov iteration misses the requested residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class ComplexField3D:
    grid: Grid3D
    values: np.ndarray = field(repr=False)
    residual: float = 0.0
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class PlaneField:
    plane: PlaneSpec
    k: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.plane.shape:
            raise ValueError(f"plane field shape {v.shape} != {self.plane.shape}")
        object.__setattr__(self, "values", v)


def incident_field(points, k: float) -> np.ndarray:
    """Plane wave ``exp(i k x3)`` at an ``(..., 3)`` array of points."""
    if not k > 0:
        raise ValueError("k must be positive")
    pts = np.asarray(points, dtype=float)
    return np.exp(1j * k * pts[..., 2])


def incident_on_grid(grid: Grid3D, k: float) -> np.ndarray:
    x3 = grid.axis(2)
    return np.broadcast_to(np.exp(1j * k * x3)[:, None, None], grid.shape).copy()


def self_cell_weight(k: float, cell_volume: float) -> complex:
    """``k^2`` times the integral of G over the ball with the cell's volume."""
    a = (3.0 * cell_volume / (4.0 * np.pi)) ** (1.0 / 3.0)
    return np.exp(1j * k * a) * (1.0 - 1j * k * a) - 1.0


def _padded_shape(shape) -> tuple[int, ...]:
    return tuple(sfft.next_fast_len(2 * s - 1) for s in shape)


@lru_cache(maxsize=8)
def _kernel_hat(shape: tuple, spacing: tuple, k: float) -> np.ndarray:
    """FFT of the sampled kernel on the padded grid (offsets wrap around)."""
    pshape = _padded_shape(shape)
    axes = []
    for n, p, h in zip(shape, pshape, spacing):
        m = np.arange(p)
        off = np.where(m < n, m, m - p).astype(float)
        off[(m >= n) & (m <= p - n)] = np.nan
        axes.append(off * h)
    z, y, x = np.meshgrid(*axes, indexing="ij", sparse=True)
    r = np.sqrt(x * x + y * y + z * z)
    dv = float(np.prod(spacing))
    with np.errstate(invalid="ignore", divide="ignore"):
        ker = k * k * dv * np.exp(1j * k * r) / (4.0 * np.pi * r)
    ker[np.isnan(ker)] = 0.0
    ker[0, 0, 0] = self_cell_weight(k, dv)
    out = sfft.fftn(ker)
    out.setflags(write=False)
    return out


class VolumePotential:
    """Discrete operator ``w -> K[w]`` on a fixed grid shape and wavenumber."""

    def __init__(self, shape, spacing, k: float):
        self.shape = tuple(int(s) for s in shape)
        self.spacing = tuple(float(h) for h in spacing)
        self.k = float(k)
        self.pshape = _padded_shape(self.shape)
        self.khat = _kernel_hat(self.shape, self.spacing, self.k)
        self._crop = tuple(slice(0, s) for s in self.shape)

    def __call__(self, w: np.ndarray) -> np.ndarray:
        w_hat = sfft.fftn(w, s=self.pshape)
        return sfft.ifftn(w_hat * self.khat, overwrite_x=True)[self._crop]


def apply_potential(grid: Grid3D, k: float, density: np.ndarray) -> np.ndarray:
    """``K[density]`` at every node of ``grid``."""
    return VolumePotential(grid.shape, grid.spacing[::-1], k)(density)


def _support_slices(beta: np.ndarray):
    nz = np.nonzero(beta)
    if nz[0].size == 0:
        return None
    return tuple(slice(int(a.min()), int(a.max()) + 1) for a in nz)


def residual_norm(medium: Medium, k: float, u: np.ndarray) -> float:
    """``||u - u_inc - K[beta u]|| / ||u||`` over the grid."""
    r = u - incident_on_grid(medium.grid, k) - apply_potential(medium.grid, k, medium.beta * u)
    return float(np.linalg.norm(r) / np.linalg.norm(u))


def solve_lippmann_schwinger(
    medium: Medium,
    k: float,
    tol: float = 1e-8,
    max_iter: int = 2000,
    restart: int = 50,
) -> ComplexField3D:
    """Total field ``u`` on the medium grid.

    The unknowns are restricted to the bounding box of ``supp(beta)``; the
    field on the remaining nodes follows from one extra convolution.

    Raises
    ------
    ForwardSolveError
        If the relative residual on the support box exceeds ``tol`` after
        ``max_iter`` Krylov iterations.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    grid = medium.grid
    beta = medium.beta
    u_inc = incident_on_grid(grid, k)
    sl = _support_slices(beta)
    if sl is None:
        return ComplexField3D(grid, u_inc, 0.0, 0)

    spacing = tuple(grid.spacing[::-1])
    b_sub = beta[sl]
    rhs = u_inc[sl].ravel()
    op = VolumePotential(b_sub.shape, spacing, k)

    def matvec(x):
        x = x.reshape(b_sub.shape)
        return (x - op(b_sub * x)).ravel()

    A = LinearOperator((rhs.size, rhs.size), matvec=matvec, dtype=complex)
    count = [0]

    def cb(_):
        count[0] += 1

    x = rhs.copy()
    rnorm = np.inf
    while True:
        remaining = max_iter - count[0]
        if remaining <= 0:
            break
        m = min(restart, remaining)
        cycles = max(1, -(-remaining // m))
        x, _ = gmres(A, rhs, x0=x, rtol=0.5 * tol, atol=0.0, restart=m,
                     maxiter=cycles, callback=cb, callback_type="pr_norm")
        rnorm = np.linalg.norm(rhs - A.matvec(x)) / np.linalg.norm(x)
        if rnorm <= tol:
            break
    if rnorm > tol:
        raise ForwardSolveError(f"GMRES did not converge at k={k:g} in {count[0]} iterations", rnorm)
    log.debug("LS solve k=%g: %d iterations, residual %.2e", k, count[0], rnorm)

    u_sub = x.reshape(b_sub.shape)
    if b_sub.shape == grid.shape:
        u = u_sub
    else:
        dens = np.zeros(grid.shape, dtype=complex)
        dens[sl] = b_sub * u_sub
        u = u_inc + apply_potential(grid, k, dens)
        u[sl] = u_sub
    return ComplexField3D(grid, u, float(rnorm), count[0])


def born_approximation(medium: Medium, k: float) -> ComplexField3D:
    """First Born field ``u_inc + K[beta u_inc]``."""
    grid = medium.grid
    u_inc = incident_on_grid(grid, k)
    return ComplexField3D(grid, u_inc + apply_potential(grid, k, medium.beta * u_inc))


def _outside(plane: PlaneSpec, box: Box3) -> bool:
    w = plane.half_width
    overlaps_xy = not (w < box.lo[0] or -w > box.hi[0] or w < box.lo[1] or -w > box.hi[1])
    return not (overlaps_xy and box.lo[2] <= plane.x3 <= box.hi[2])


def _lattice_ratio(grid: Grid3D, plane: PlaneSpec, rtol: float = 1e-9):
    """Integer ``m`` with ``plane.spacing == m * h`` when the grid's lateral
    nodes sit on the refined plane lattice, else ``None``."""
    h1, h2, _ = grid.spacing
    if abs(h1 - h2) > rtol * h1:
        return None
    m = plane.spacing / h1
    if abs(m - round(m)) > 1e-6 or round(m) < 1:
        return None
    for lo in grid.box.lo[:2]:
        j = (lo + plane.half_width) / h1
        if abs(j - round(j)) > 1e-6:
            return None
    return int(round(m))


def _plane_sum_direct(k, obs, src, dens, chunk=2048):
    out = np.zeros(obs.shape[0], dtype=complex)
    for s in range(0, src.shape[0], chunk):
        d = obs[:, None, :] - src[None, s:s + chunk, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
        out += (np.exp(1j * k * r) / r) @ dens[s:s + chunk]
    return out


def _plane_sum_fft(k, grid, plane, dens3d, m):
    """Slice-by-slice 2D FFT convolution on the refined plane lattice."""
    h = grid.spacing[0]
    n_out = (plane.n - 1) * m + 1
    j0 = [int(round((grid.box.lo[i] + plane.half_width) / h)) for i in (0, 1)]
    nj = [grid.n[0], grid.n[1]]
    size = [sfft.next_fast_len(n_out + nj[i] - 1) for i in (0, 1)]
    # kernel offsets t = P - j for P in [0, n_out), j in [j0, j0 + nj)
    t1 = (-(j0[0] + nj[0] - 1) + np.arange(size[0])) * h
    t2 = (-(j0[1] + nj[1] - 1) + np.arange(size[1])) * h
    rho2 = t2[:, None] ** 2 + t1[None, :] ** 2
    acc = np.zeros((size[1], size[0]), dtype=complex)
    x3 = grid.axis(2)
    for i3 in range(grid.n[2]):
        sl = dens3d[i3]
        if not np.any(sl):
            continue
        r = np.sqrt(rho2 + (plane.x3 - x3[i3]) ** 2)
        ker = np.exp(1j * k * r) / r
        acc += sfft.fft2(ker) * sfft.fft2(sl, s=(size[1], size[0]))
    full = sfft.ifft2(acc)
    return full[nj[1] - 1:nj[1] - 1 + n_out:m, nj[0] - 1:nj[0] - 1 + n_out:m]


def scattered_on_plane(medium: Medium, u: ComplexField3D, plane: PlaneSpec, k: float,
                       method: str = "auto") -> PlaneField:
    """``u_sc = k^2 sum_j G(x - x_j) beta_j u_j dV`` at every plane node.

    ``method="fft"`` requires the grid's lateral nodes to lie on a uniform
    refinement of the plane lattice (see :func:`lattice_grid`); ``"auto"``
    uses it when available and falls back to the direct sum.
    """
    grid = medium.grid
    if not _outside(plane, grid.box):
        raise ValueError("measurement plane intersects the medium box")
    beta = medium.beta
    scale = k * k * grid.cell_volume / (4.0 * np.pi)
    if not np.any(beta):
        return PlaneField(plane, k, np.zeros(plane.shape, dtype=complex))
    m = _lattice_ratio(grid, plane) if method in ("auto", "fft") else None
    if method == "fft" and m is None:
        raise ValueError("grid is not commensurate with the plane lattice")
    if m is not None:
        out = _plane_sum_fft(k, grid, plane, beta * u.values * scale, m)
    else:
        mask = beta != 0
        x1, x2, x3 = grid.mesh()
        src = np.column_stack([x1[mask], x2[mask], x3[mask]])
        out = _plane_sum_direct(k, plane.points(), src, beta[mask] * u.values[mask] * scale)
    return PlaneField(plane, k, out.reshape(plane.shape))


def lattice_grid(plane: PlaneSpec, box: Box3, max_spacing: float) -> Grid3D:
    """Smallest grid covering ``box`` whose spacing divides the plane spacing.

    The lateral nodes are aligned with the plane lattice so that
    :func:`scattered_on_plane` can use the FFT route.
    """
    m = int(np.ceil(plane.spacing / max_spacing - 1e-12))
    h = plane.spacing / m
    lo, hi, n = [], [], []
    for i in range(3):
        origin = -plane.half_width if i < 2 else box.lo[2]
        a = origin + np.floor((box.lo[i] - origin) / h + 1e-9) * h
        b = origin + np.ceil((box.hi[i] - origin) / h - 1e-9) * h
        lo.append(a)
        n.append(int(round((b - a) / h)) + 1)
        hi.append(a + (n[-1] - 1) * h)
    return Grid3D(Box3(tuple(lo), tuple(hi)), tuple(n))
