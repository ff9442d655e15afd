"""Binary container for grids, plane data, phase maps and boundary data.

Layout (all little-endian)::

    8 bytes   magic  b"PHLSFLD\\0"
    u32       format version
    u32       payload kind
    i64 n_i,  then n_i int64 header values (dimensions, counts)
    i64 n_f,  then n_f float64 header values (box corners, heights, k range)
    i64 n_c,  then n_c complex values as interleaved (re, im) float64

Arrays are flattened in C order, which puts x1 fastest for grid volumes.
Real quantities are stored with a zero imaginary part so every payload has
one data layout.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .forward import PlaneField
from .grid import Box3, Grid3D, PlaneSpec, WavenumberGrid
from .medium import Medium
from .propagation import BoundaryData
from .retrieval import PhaseMap
from .sensing import IntensityData

MAGIC = b"PHLSFLD\x00"
VERSION = 1
KIND = {"medium": 1, "intensity": 2, "phasemap": 3, "boundary": 4, "planefields": 5}
_KIND_NAME = {v: k for k, v in KIND.items()}


class FormatError(ValueError):
    pass


def _write(path, kind: str, ints, floats, data: np.ndarray) -> None:
    ints = np.asarray(ints, dtype="<i8")
    floats = np.asarray(floats, dtype="<f8")
    flat = np.ascontiguousarray(np.asarray(data, dtype=complex).ravel())
    inter = np.empty(2 * flat.size, dtype="<f8")
    inter[0::2], inter[1::2] = flat.real, flat.imag
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.array([VERSION, KIND[kind]], dtype="<u4").tobytes())
        for arr in (ints, floats):
            fh.write(np.array([arr.size], dtype="<i8").tobytes())
            fh.write(arr.tobytes())
        fh.write(np.array([flat.size], dtype="<i8").tobytes())
        fh.write(inter.tobytes())


def _read(path):
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise FormatError(f"{path}: not a field file")
    version, kind = np.frombuffer(raw, dtype="<u4", count=2, offset=8)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if kind not in _KIND_NAME:
        raise FormatError(f"{path}: unknown payload kind {kind}")
    pos = 16
    out = []
    for dt in ("<i8", "<f8"):
        (n,) = np.frombuffer(raw, dtype="<i8", count=1, offset=pos)
        pos += 8
        out.append(np.frombuffer(raw, dtype=dt, count=int(n), offset=pos).copy())
        pos += 8 * int(n)
    (n,) = np.frombuffer(raw, dtype="<i8", count=1, offset=pos)
    pos += 8
    if len(raw) != pos + 16 * int(n):
        raise FormatError(f"{path}: truncated or oversized data block")
    inter = np.frombuffer(raw, dtype="<f8", count=2 * int(n), offset=pos)
    data = inter[0::2] + 1j * inter[1::2]
    return _KIND_NAME[int(kind)], out[0], out[1], data


def file_kind(path) -> str:
    return _read(path)[0]


def _expect(path, kind):
    k, ints, floats, data = _read(path)
    if k != kind:
        raise FormatError(f"{path}: holds {k}, expected {kind}")
    return ints, floats, data


def _grid_header(grid: Grid3D):
    return list(grid.n), list(grid.box.lo) + list(grid.box.hi)


def _grid_from(ints, floats) -> Grid3D:
    return Grid3D(Box3(tuple(floats[:3]), tuple(floats[3:6])), tuple(int(v) for v in ints[:3]))


def _plane_kgrid_header(plane: PlaneSpec, kgrid: WavenumberGrid):
    return [plane.n, kgrid.N], [plane.half_width, plane.x3, kgrid.k_lo, kgrid.k_hi]


def _plane_kgrid_from(ints, floats):
    return PlaneSpec(floats[0], floats[1], int(ints[0])), WavenumberGrid(floats[2], floats[3], int(ints[1]))


def write_medium(path, med: Medium) -> None:
    ints, floats = _grid_header(med.grid)
    _write(path, "medium", ints, floats, med.c)


def read_medium(path) -> Medium:
    ints, floats, data = _expect(path, "medium")
    grid = _grid_from(ints, floats)
    if np.any(data.imag != 0):
        raise FormatError(f"{path}: coefficient has an imaginary part")
    return Medium(grid, data.real.reshape(grid.shape))


def write_intensity(path, d: IntensityData) -> None:
    ints, floats = _plane_kgrid_header(d.plane, d.kgrid)
    _write(path, "intensity", ints, floats, d.values)


def read_intensity(path) -> IntensityData:
    ints, floats, data = _expect(path, "intensity")
    plane, kgrid = _plane_kgrid_from(ints, floats)
    return IntensityData(plane, kgrid, data.real.reshape((kgrid.count,) + plane.shape))


def write_phasemap(path, pm: PhaseMap) -> None:
    _write(path, "phasemap", [pm.plane.n], [pm.plane.half_width, pm.plane.x3],
           np.stack([pm.A, pm.tau, pm.alpha]))


def read_phasemap(path) -> PhaseMap:
    ints, floats, data = _expect(path, "phasemap")
    plane = PlaneSpec(floats[0], floats[1], int(ints[0]))
    A, tau, alpha = data.real.reshape((3,) + plane.shape)
    return PhaseMap(plane, A, tau, alpha)


def write_plane_fields(path, fields: list[PlaneField], kgrid: WavenumberGrid) -> None:
    ints, floats = _plane_kgrid_header(fields[0].plane, kgrid)
    _write(path, "planefields", ints, floats, np.stack([f.values for f in fields]))


def read_plane_fields(path) -> tuple[list[PlaneField], WavenumberGrid]:
    ints, floats, data = _expect(path, "planefields")
    plane, kgrid = _plane_kgrid_from(ints, floats)
    vals = data.reshape((kgrid.count,) + plane.shape)
    return [PlaneField(plane, float(k), v) for k, v in zip(kgrid.nodes, vals)], kgrid


def write_boundary(path, bd: BoundaryData) -> None:
    ints, floats = _grid_header(bd.grid)
    data = np.concatenate([f.ravel() for f in bd.faces])
    _write(path, "boundary", ints + [bd.kgrid.N], floats + [bd.kgrid.k_lo, bd.kgrid.k_hi], data)


def read_boundary(path) -> BoundaryData:
    ints, floats, data = _expect(path, "boundary")
    grid = _grid_from(ints, floats)
    kgrid = WavenumberGrid(floats[6], floats[7], int(ints[3]))
    n3, n2, n1 = grid.shape
    shapes = [(n3, n2), (n3, n2), (n3, n1), (n3, n1), (n2, n1), (n2, n1)]
    faces, pos = [], 0
    for s in shapes:
        size = kgrid.count * s[0] * s[1]
        faces.append(data[pos:pos + size].reshape((kgrid.count,) + s))
        pos += size
    if pos != data.size:
        raise FormatError(f"{path}: face sizes do not add up")
    return BoundaryData(grid, kgrid, tuple(faces))
