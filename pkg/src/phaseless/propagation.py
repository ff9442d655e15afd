"""Free-space plane-to-plane transfer and completion of boundary data on a box.

The scattered field is expanded in transverse plane waves. Only propagating
modes (``|kappa| < k``) are kept, and each is advanced by
``exp(i kz dz)`` with ``kz = sqrt(k^2 - |kappa|^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.interpolate import RegularGridInterpolator

from .forward import PlaneField
from .grid import Grid3D, PlaneSpec, WavenumberGrid

FACES = ("x1-", "x1+", "x2-", "x2+", "x3-", "x3+")


def transfer_function(n: int, spacing: float, k: float, dz: float) -> np.ndarray:
    """Multiplier on the ``n x n`` FFT lattice; zero on and outside ``|kappa| = k``."""
    kap = 2.0 * np.pi * sfft.fftfreq(n, d=spacing)
    kap2 = kap[:, None] ** 2 + kap[None, :] ** 2
    out = np.zeros((n, n), dtype=complex)
    prop = kap2 < k * k
    out[prop] = np.exp(1j * np.sqrt(k * k - kap2[prop]) * dz)
    return out


def _dft_matrix(x_out: np.ndarray, x0: float, n: int, spacing: float) -> np.ndarray:
    """Rows evaluate the trigonometric interpolant of an ``n``-periodic lattice signal."""
    kap = 2.0 * np.pi * sfft.fftfreq(n, d=spacing)
    return np.exp(1j * np.outer(x_out - x0, kap)) / n


def propagate_values(values: np.ndarray, spacing: float, k: float, dz: float,
                     pad: int = 2, x_out: np.ndarray | None = None, x0: float = 0.0) -> np.ndarray:
    """Shift a square plane sample by ``dz`` along x3 (either direction).

    Without ``x_out`` the result is returned on the input lattice. Otherwise
    the band-limited interpolant is evaluated on the tensor grid ``x_out``
    (coordinates relative to the same frame as ``x0``, the first input node).
    """
    n = values.shape[0]
    if values.shape != (n, n):
        raise ValueError("expected a square sample")
    if int(pad) < 1:
        raise ValueError("pad must be >= 1")
    m = int(pad) * n
    spec = sfft.fft2(values, s=(m, m))
    spec *= transfer_function(m, spacing, k, dz)
    if x_out is None:
        return sfft.ifft2(spec)[:n, :n]
    E = _dft_matrix(np.asarray(x_out, dtype=float), x0, m, spacing)
    return E @ spec @ E.T


def angular_spectrum_propagate(fld: PlaneField, x3_new: float, pad: int = 2,
                               out_plane: PlaneSpec | None = None) -> PlaneField:
    """Move ``fld`` from its plane to the parallel plane ``x3 = x3_new < fld.plane.x3``.

    The field is zero-extended to ``pad * n`` samples per axis before the
    transform. By default the result is sampled on the same square; a
    different ``out_plane`` (same height ``x3_new``) is filled by evaluating
    the band-limited trigonometric interpolant at its nodes.
    """
    plane = fld.plane
    if not 0 < x3_new < plane.x3:
        raise ValueError(f"target height must satisfy 0 < {x3_new} < {plane.x3}")
    if out_plane is None:
        out_plane = PlaneSpec(plane.half_width, x3_new, plane.n)
    elif not np.isclose(out_plane.x3, x3_new):
        raise ValueError("out_plane height does not match x3_new")
    same = out_plane.n == plane.n and np.isclose(out_plane.half_width, plane.half_width)
    x_out = None if same else out_plane.axis()
    out = propagate_values(fld.values, plane.spacing, fld.k, x3_new - plane.x3, pad,
                           x_out, -plane.half_width)
    return PlaneField(out_plane, fld.k, out)


def _on_face(fld: PlaneField, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Values of ``fld`` at the tensor nodes ``xs x ys`` (result indexed ``[iy, ix]``)."""
    a = fld.plane.axis()
    tol = 1e-9 * fld.plane.spacing
    ix = np.rint((xs - a[0]) / fld.plane.spacing).astype(int)
    iy = np.rint((ys - a[0]) / fld.plane.spacing).astype(int)
    if (ix.min() >= 0 and iy.min() >= 0 and ix.max() < a.size and iy.max() < a.size
            and np.all(np.abs(a[ix] - xs) <= tol) and np.all(np.abs(a[iy] - ys) <= tol)):
        return fld.values[np.ix_(iy, ix)]
    Y, X = np.meshgrid(ys, xs, indexing="ij")
    pts = np.column_stack([Y.ravel(), X.ravel()])
    re = RegularGridInterpolator((a, a), fld.values.real, method="cubic")(pts)
    im = RegularGridInterpolator((a, a), fld.values.imag, method="cubic")(pts)
    return (re + 1j * im).reshape(Y.shape)


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Total field ``g`` on the six faces of ``grid`` for every node of ``kgrid``.

    ``faces[f]`` has shape ``(kgrid.count, a, b)``, with the face's own two
    axes in grid order. Face order is :data:`FACES`. Nodes shared by several
    faces carry the same value.
    """

    grid: Grid3D
    kgrid: WavenumberGrid
    faces: tuple = field(repr=False)

    def __post_init__(self):
        if len(self.faces) != 6:
            raise ValueError("need six faces")
        n3, n2, n1 = self.grid.shape
        shapes = [(n3, n2), (n3, n2), (n3, n1), (n3, n1), (n2, n1), (n2, n1)]
        faces = []
        for f, s in zip(self.faces, shapes):
            f = np.asarray(f, dtype=complex)
            if f.shape != (self.kgrid.count,) + s:
                raise ValueError(f"face shape {f.shape} != {(self.kgrid.count,) + s}")
            faces.append(f)
        object.__setattr__(self, "faces", tuple(faces))

    def volume(self, j: int) -> np.ndarray:
        """Grid-shaped array holding ``g(., k_j)`` on boundary nodes and 0 inside."""
        out = np.zeros(self.grid.shape, dtype=complex)
        f = [face[j] for face in self.faces]
        out[:, :, 0], out[:, :, -1] = f[0], f[1]
        out[:, 0, :], out[:, -1, :] = f[2], f[3]
        out[0], out[-1] = f[4], f[5]
        return out

    @classmethod
    def from_volumes(cls, grid: Grid3D, kgrid: WavenumberGrid, vols) -> "BoundaryData":
        v = np.asarray(vols)
        return cls(grid, kgrid, (v[:, :, :, 0], v[:, :, :, -1], v[:, :, 0, :],
                                 v[:, :, -1, :], v[:, 0], v[:, -1]))


def assemble_boundary_data(propagated: list[PlaneField], grid: Grid3D,
                           kgrid: WavenumberGrid) -> BoundaryData:
    """``g = u_sc + exp(i k x3)`` on the top face, ``exp(i k x3)`` on the rest.

    The propagated plane must lie at the height of the top face and cover it.
    Top-face nodes are read directly when they sit on the plane lattice and
    interpolated otherwise.
    """
    if len(propagated) != kgrid.count:
        raise ValueError(f"expected {kgrid.count} fields, got {len(propagated)}")
    box = grid.box
    plane = propagated[0].plane
    if not np.isclose(plane.x3, box.hi[2]):
        raise ValueError(f"plane x3={plane.x3} is not the top face x3={box.hi[2]}")
    b = plane.half_width * (1 + 1e-12)
    if min(box.lo[0], box.lo[1]) < -b or max(box.hi[0], box.hi[1]) > b:
        raise ValueError("top face is not contained in the propagated square")
    x1, x2, x3 = grid.axis(0), grid.axis(1), grid.axis(2)
    vols = np.empty((kgrid.count,) + grid.shape, dtype=complex)
    for j, (fld, k) in enumerate(zip(propagated, kgrid.nodes)):
        if fld.plane != plane or not np.isclose(fld.k, k, rtol=1e-12, atol=0):
            raise ValueError(f"field {j} does not match plane/k node {k}")
        vols[j] = np.exp(1j * k * x3)[:, None, None]
        vols[j, -1] += _on_face(fld, x1, x2)
    return BoundaryData.from_volumes(grid, kgrid, vols)


def vacuum_boundary_data(grid: Grid3D, kgrid: WavenumberGrid) -> BoundaryData:
    """``g = exp(i k x3)`` on every face."""
    x3 = grid.axis(2)
    vols = np.broadcast_to(np.exp(1j * np.outer(kgrid.nodes, x3))[:, :, None, None],
                           (kgrid.count,) + grid.shape)
    return BoundaryData.from_volumes(grid, kgrid, vols)
