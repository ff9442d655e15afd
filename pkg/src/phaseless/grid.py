"""Dimensionless geometry and uniform discretizations.

Arrays sampled on a :class:`Grid3D` have shape ``(n3, n2, n1)``: x3 is the
slowest axis and x1 the fastest, so a C-ordered dump is x1-fastest.
Arrays sampled on a :class:`PlaneSpec` have shape ``(n, n)`` indexed
``[i2, i1]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box3:
    """Axis-aligned box ``lo < x < hi``."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("Box3 needs 3-vectors")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def size(self) -> np.ndarray:
        return np.subtract(self.hi, self.lo)

    def contains(self, point, tol: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= np.subtract(self.lo, tol)) and np.all(p <= np.add(self.hi, tol)))


@dataclass(frozen=True)
class Grid3D:
    """Vertex-centred uniform grid on a :class:`Box3`, endpoints included."""

    box: Box3
    n: tuple[int, int, int]

    def __post_init__(self):
        n = tuple(int(v) for v in self.n)
        if len(n) != 3 or any(v < 2 for v in n):
            raise ValueError(f"need at least 2 points per axis, got {self.n}")
        object.__setattr__(self, "n", n)

    @property
    def spacing(self) -> np.ndarray:
        return self.box.size / (np.asarray(self.n) - 1)

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape ``(n3, n2, n1)``."""
        return (self.n[2], self.n[1], self.n[0])

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, i: int) -> np.ndarray:
        """Node coordinates along axis ``i`` (0 -> x1, 2 -> x3)."""
        j = np.arange(self.n[i])
        return self.box.lo[i] + j * self.spacing[i]

    def node(self, index) -> np.ndarray:
        """Coordinates of the node with integer index ``(j1, j2, j3)``."""
        j = np.asarray(index)
        return np.asarray(self.box.lo) + j * self.spacing

    def index_of(self, point) -> tuple[int, int, int]:
        """Nearest node index ``(j1, j2, j3)`` of a point."""
        j = np.rint((np.asarray(point, dtype=float) - self.box.lo) / self.spacing).astype(int)
        if np.any(j < 0) or np.any(j >= np.asarray(self.n)):
            raise ValueError(f"point {point} outside grid")
        return tuple(int(v) for v in j)

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coordinate arrays ``(x1, x2, x3)``, each of shape :attr:`shape`."""
        x3, x2, x1 = np.meshgrid(self.axis(2), self.axis(1), self.axis(0), indexing="ij")
        return x1, x2, x3

    def boundary_mask(self, width: int = 1) -> np.ndarray:
        """Boolean mask of nodes within ``width`` layers of the box faces."""
        mask = np.zeros(self.shape, dtype=bool)
        w = int(width)
        mask[:w] = mask[-w:] = True
        mask[:, :w] = mask[:, -w:] = True
        mask[:, :, :w] = mask[:, :, -w:] = True
        return mask


def make_grid(box: Box3, n) -> Grid3D:
    return Grid3D(box, tuple(n))


@dataclass(frozen=True)
class PlaneSpec:
    """Square ``|x1|, |x2| <= half_width`` at height ``x3``, sampled ``n x n``."""

    half_width: float
    x3: float
    n: int

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if int(self.n) < 2:
            raise ValueError("plane needs n >= 2")
        object.__setattr__(self, "half_width", float(self.half_width))
        object.__setattr__(self, "x3", float(self.x3))
        object.__setattr__(self, "n", int(self.n))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def axis(self) -> np.ndarray:
        return -self.half_width + np.arange(self.n) * self.spacing

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """``(x1, x2)`` arrays of shape ``(n, n)`` indexed ``[i2, i1]``."""
        a = self.axis()
        x2, x1 = np.meshgrid(a, a, indexing="ij")
        return x1, x2

    def points(self) -> np.ndarray:
        """Node coordinates as an ``(n*n, 3)`` array, x1 fastest."""
        x1, x2 = self.mesh()
        return np.column_stack([x1.ravel(), x2.ravel(), np.full(x1.size, self.x3)])


@dataclass(frozen=True)
class WavenumberGrid:
    """Uniform wavenumber partition with the descending index convention.

    ``nodes[0] == k_hi`` and ``nodes[N] == k_lo``; consecutive nodes differ by
    ``step``.
    """

    k_lo: float
    k_hi: float
    N: int

    def __post_init__(self):
        if not (self.k_lo > 0 and self.k_hi > self.k_lo):
            raise ValueError(f"need 0 < k_lo < k_hi, got ({self.k_lo}, {self.k_hi})")
        if int(self.N) < 1:
            raise ValueError("need N >= 1")
        object.__setattr__(self, "k_lo", float(self.k_lo))
        object.__setattr__(self, "k_hi", float(self.k_hi))
        object.__setattr__(self, "N", int(self.N))

    @property
    def count(self) -> int:
        return self.N + 1

    @property
    def step(self) -> float:
        return (self.k_hi - self.k_lo) / self.N

    @property
    def nodes(self) -> np.ndarray:
        j = np.arange(self.N + 1)
        k = self.k_hi - j * self.step
        k[-1] = self.k_lo
        return k

    def ascending(self) -> np.ndarray:
        return self.nodes[::-1].copy()


def make_wavenumber_grid(k_lo: float, k_hi: float, N: int) -> WavenumberGrid:
    return WavenumberGrid(k_lo, k_hi, N)
