"""Dielectric coefficients built from smooth spherical inclusions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Box3, Grid3D


@dataclass(frozen=True)
class Inclusion:
    center: tuple[float, float, float]
    radius: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    def inside(self, box: Box3) -> bool:
        c = np.asarray(self.center)
        return bool(np.all(c - self.radius >= box.lo) and np.all(c + self.radius <= box.hi))


def bump(x, center, r: float) -> np.ndarray:
    """Smooth bump ``exp(1 - r^2/(r^2 - |x-center|^2))`` supported in the ball.

    ``x`` may be a single point or an array whose last axis has length 3.
    """
    x = np.asarray(x, dtype=float)
    d2 = np.sum((x - np.asarray(center, dtype=float)) ** 2, axis=-1)
    r2 = float(r) ** 2
    out = np.zeros_like(d2)
    inside = d2 < r2
    out[inside] = np.exp(1.0 - r2 / (r2 - d2[inside]))
    return out if out.ndim else float(out)


def bump_on_axes(x1, x2, x3, center, r: float) -> np.ndarray:
    d2 = (x1 - center[0]) ** 2 + (x2 - center[1]) ** 2 + (x3 - center[2]) ** 2
    r2 = float(r) ** 2
    out = np.zeros(np.broadcast(d2).shape)
    inside = d2 < r2
    out[inside] = np.exp(1.0 - r2 / (r2 - d2[inside]))
    return out


@dataclass(frozen=True, eq=False)
class Medium:
    """Coefficient ``c`` sampled on the nodes of ``grid`` (shape ``grid.shape``)."""

    grid: Grid3D
    c: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.shape != self.grid.shape:
            raise ValueError(f"coefficient shape {c.shape} != grid shape {self.grid.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @property
    def beta(self) -> np.ndarray:
        """Contrast ``c - 1``."""
        return self.c - 1.0

    def check(self, atol: float = 0.0) -> None:
        """Raise if ``c < 1`` somewhere or ``c != 1`` on the boundary."""
        if np.min(self.c) < 1.0 - atol:
            raise ValueError(f"c < 1 somewhere (min {self.c.min():.6g})")
        edge = self.grid.boundary_mask()
        if np.max(np.abs(self.c[edge] - 1.0)) > atol:
            raise ValueError("c != 1 on the boundary")

    def scaled(self, max_beta: float) -> "Medium":
        """Same shape with the contrast rescaled to a given maximum."""
        b = self.beta
        peak = np.max(np.abs(b))
        if peak == 0:
            raise ValueError("cannot rescale a vacuum medium")
        return Medium(self.grid, 1.0 + b * (max_beta / peak))


def vacuum(grid: Grid3D) -> Medium:
    return Medium(grid, np.ones(grid.shape))


def build_medium(grid: Grid3D, inclusions) -> Medium:
    """``c = 1 + sum(amplitude * bump)`` over the inclusions."""
    c = np.ones(grid.shape)
    x1, x2, x3 = grid.axis(0), grid.axis(1), grid.axis(2)
    X3, X2, X1 = x3[:, None, None], x2[None, :, None], x1[None, None, :]
    for inc in inclusions:
        if not inc.inside(grid.box):
            raise ValueError(f"inclusion {inc} leaves the domain {grid.box}")
        c += inc.amplitude * bump_on_axes(X1, X2, X3, inc.center, inc.radius)
    return Medium(grid, c)


def support_box(inclusions, pad: float = 0.0) -> Box3:
    """Bounding box of the union of inclusion balls."""
    if not inclusions:
        raise ValueError("no inclusions")
    lo = np.min([np.subtract(i.center, i.radius) for i in inclusions], axis=0) - pad
    hi = np.max([np.add(i.center, i.radius) for i in inclusions], axis=0) + pad
    return Box3(tuple(lo), tuple(hi))


CASES = {
    1: (Inclusion((0.0, 0.0, 0.25), 0.25),),
    2: (Inclusion((-0.5, 0.0, 0.25), 0.25), Inclusion((0.5, 0.0, 0.25), 0.25)),
    3: (Inclusion((0.5, 0.5, 0.25), 0.25), Inclusion((-0.5, -0.25, 0.25), 0.25)),
}
