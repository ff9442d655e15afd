"""Phaseless data on the measurement square and the additive noise model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forward import PlaneField
from .grid import PlaneSpec, WavenumberGrid


@dataclass(frozen=True, eq=False)
class IntensityData:
    """``f(x, k) = |u_sc|^2``; ``values[j]`` belongs to ``kgrid.nodes[j]``."""

    plane: PlaneSpec
    kgrid: WavenumberGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        expected = (self.kgrid.count,) + self.plane.shape
        if v.shape != expected:
            raise ValueError(f"intensity shape {v.shape} != {expected}")
        if np.any(v < 0):
            raise ValueError("intensity must be non-negative")
        object.__setattr__(self, "values", v)


def intensity(fields: list[PlaneField], kgrid: WavenumberGrid) -> IntensityData:
    """Stack ``|u_sc|^2`` of one plane field per wavenumber node."""
    if len(fields) != kgrid.count:
        raise ValueError(f"expected {kgrid.count} fields, got {len(fields)}")
    plane = fields[0].plane
    for fld, k in zip(fields, kgrid.nodes):
        if fld.plane != plane:
            raise ValueError("fields live on different planes")
        if not np.isclose(fld.k, k, rtol=1e-12, atol=0):
            raise ValueError(f"field at k={fld.k} does not match node {k}")
    return IntensityData(plane, kgrid, np.stack([np.abs(f.values) ** 2 for f in fields]))


def l2_weights(plane: PlaneSpec, kgrid: WavenumberGrid) -> np.ndarray:
    """Quadrature weights on P_meas x [k_lo, k_hi]: trapezoid in k, cells on the plane."""
    wk = np.full(kgrid.count, kgrid.step)
    wk[0] = wk[-1] = 0.5 * kgrid.step
    return wk[:, None, None] * plane.spacing ** 2 * np.ones((1,) + plane.shape)


def l2_norm(values: np.ndarray, weights: np.ndarray) -> float:
    return float(np.sqrt(np.sum(weights * np.abs(values) ** 2)))


def add_noise(data: IntensityData, level: float, seed: int) -> IntensityData:
    """``f + level * ||f|| * rand / ||rand||`` with ``rand ~ U(0, 1)`` i.i.d. per (x, k).

    The stream comes from a Philox counter-based generator keyed by ``seed``.
    """
    if level < 0:
        raise ValueError("noise level must be non-negative")
    if level == 0:
        return IntensityData(data.plane, data.kgrid, data.values.copy())
    rng = np.random.Generator(np.random.Philox(seed))
    rand = rng.random(data.values.shape)
    w = l2_weights(data.plane, data.kgrid)
    nf = l2_norm(data.values, w)
    noisy = data.values + level * nf * rand / l2_norm(rand, w)
    return IntensityData(data.plane, data.kgrid, noisy)
