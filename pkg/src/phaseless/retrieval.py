"""Per-pixel recovery of amplitude and travel time from intensity-only data.

At every pixel the data are modelled as ``f(k) = A^2 + 1 - 2 A cos(k alpha)``.
Integrating twice in ``k`` turns the model into a relation that is linear in
four coefficients ``xi``; those are found by a ridge-regularized least-squares
fit, and ``alpha = Re sqrt(xi_1)``.

All series are indexed like :attr:`WavenumberGrid.nodes` (descending ``k``)
and may carry trailing pixel axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .forward import PlaneField
from .grid import PlaneSpec, WavenumberGrid
from .sensing import IntensityData


@dataclass(frozen=True, eq=False)
class PhaseMap:
    plane: PlaneSpec
    A: np.ndarray = field(repr=False)
    tau: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("A", "tau", "alpha"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != self.plane.shape:
                raise ValueError(f"{name} has shape {arr.shape}, plane is {self.plane.shape}")
            object.__setattr__(self, name, arr)


def model_intensity(A, alpha, k) -> np.ndarray:
    """``A^2 + 1 - 2 A cos(k alpha)``, broadcast over the inputs."""
    return A * A + 1.0 - 2.0 * A * np.cos(k * alpha)


def cumulative_integrals(fk: np.ndarray, kgrid: WavenumberGrid):
    """``F1(k) = int_{k_lo}^k f`` and ``F2(k) = int_{k_lo}^k F1`` (trapezoid rule)."""
    fk = np.asarray(fk, dtype=float)
    if fk.shape[0] < 2 or fk.shape[0] != kgrid.count:
        raise ValueError("series must cover the wavenumber grid with at least 2 nodes")
    up = fk[::-1]
    k = kgrid.ascending()
    F1 = cumulative_trapezoid(up, k, axis=0, initial=0.0)
    F2 = cumulative_trapezoid(F1, k, axis=0, initial=0.0)
    return F1[::-1], F2[::-1]


def design_matrix(F2: np.ndarray, kgrid: WavenumberGrid) -> np.ndarray:
    """Rows ``(-F2(k_j), (k_j - k_lo)^2, k_j - k_lo, 1)``; shape ``(..., N+1, 4)``.

    With this sign the exact model gives ``xi = (alpha^2, alpha^2 (A^2+1)/2,
    2 alpha A sin(k_lo alpha), A^2 - 2 A cos(k_lo alpha) + 1)``.
    """
    F2 = np.moveaxis(np.asarray(F2, dtype=float), 0, -1)
    d = kgrid.nodes - kgrid.k_lo
    cols = np.broadcast_arrays(-F2, d * d, d, np.ones_like(d))
    return np.stack(cols, axis=-1)


def fit_xi(F2: np.ndarray, fk: np.ndarray, kgrid: WavenumberGrid, eps: float) -> np.ndarray:
    """Solve ``(F^T F + eps I) xi = F^T f``; returns ``xi`` with shape ``(..., 4)``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    fk = np.asarray(fk, dtype=float)
    if fk.shape != np.shape(F2):
        raise ValueError("F2 and f must share a shape")
    F = design_matrix(F2, kgrid)
    f = np.moveaxis(fk, 0, -1)[..., None]
    Ft = np.swapaxes(F, -1, -2)
    M = Ft @ F + eps * np.eye(4)
    return np.linalg.solve(M, Ft @ f)[..., 0]


def _consensus_amplitude(c: np.ndarray, fk: np.ndarray) -> np.ndarray:
    """Minimizer over ``A >= 0`` of ``sum_k (A^2 - 2 A c_k + 1 - f_k)^2``.

    ``c`` and ``fk`` have the wavenumber on the last axis.
    """
    d = 1.0 - fk
    n = c.shape[-1]
    # stationarity: n A^3 - 3 Sc A^2 + (2 Scc + Sd) A - Scd = 0
    a2 = -3.0 * c.sum(-1) / n
    a1 = (2.0 * (c * c).sum(-1) + d.sum(-1)) / n
    a0 = -(c * d).sum(-1) / n
    comp = np.zeros(c.shape[:-1] + (3, 3))
    comp[..., 0, :] = np.stack([-a2, -a1, -a0], axis=-1)
    comp[..., 1, 0] = comp[..., 2, 1] = 1.0
    roots = np.linalg.eigvals(comp)
    cand = np.concatenate([np.where(np.abs(roots.imag) < 1e-7 * (1 + np.abs(roots)),
                                    np.maximum(roots.real, 0.0), 0.0),
                           np.zeros(c.shape[:-1] + (1,))], axis=-1)
    cost = (((cand[..., :, None] ** 2 - 2 * cand[..., :, None] * c[..., None, :]
              + d[..., None, :]) ** 2).sum(-1))
    return np.take_along_axis(cand, np.argmin(cost, axis=-1)[..., None], -1)[..., 0]


def extract_alpha_A(xi: np.ndarray, fk: np.ndarray, kgrid: WavenumberGrid, x3: float,
                    quadrature_correction: bool = True):
    """``(alpha, tau, A)`` from fitted coefficients.

    ``alpha = Re sqrt(xi_1)`` (zero for negative ``xi_1``) and ``tau = alpha + x3``.
    The trapezoid rule with step ``h`` scales every ``exp(i alpha k)`` term of
    ``F2`` by ``s^2`` with ``s = (h alpha / 2) cot(h alpha / 2)``, so the fit
    returns ``sqrt(xi_1) = (2/h) tan(h alpha / 2)``. With
    ``quadrature_correction`` this map is inverted exactly; without it the
    bias is ``alpha^3 h^2 / 12``.
    ``A`` averages ``|cos(k alpha) +- sqrt(cos^2(k alpha) + f - 1)|`` over all
    nodes. The ``+`` root is the textbook choice and is exact when ``A >= 1``;
    for ``A < 1`` the two roots swap roles wherever ``cos(k alpha) > A``, so at
    each node the root closer to the least-squares amplitude is kept.
    """
    xi = np.asarray(xi, dtype=float)
    alpha = np.sqrt(xi[..., 0].astype(complex)).real
    if quadrature_correction:
        h = kgrid.step
        alpha = (2.0 / h) * np.arctan(0.5 * h * alpha)
    tau = alpha + x3
    f = np.moveaxis(np.asarray(fk, dtype=float), 0, -1)
    c = np.cos(kgrid.nodes * alpha[..., None])
    root = np.sqrt(c * c + f - 1.0 + 0j)
    r_plus, r_minus = np.abs(c + root), np.abs(c - root)
    ref = _consensus_amplitude(c, f)[..., None]
    pick = np.where(np.abs(r_plus - ref) <= np.abs(r_minus - ref), r_plus, r_minus)
    A = pick.mean(axis=-1)
    return alpha, tau, A


def _extrema(f: np.ndarray, k: np.ndarray, kind: str) -> list[float]:
    s = 1.0 if kind == "min" else -1.0
    g = s * f
    out = []
    h = k[1] - k[0]
    for i in range(1, len(g) - 1):
        if g[i] < g[i - 1] and g[i] <= g[i + 1]:
            denom = g[i - 1] - 2.0 * g[i] + g[i + 1]
            shift = 0.5 * (g[i - 1] - g[i + 1]) / denom if denom > 0 else 0.0
            out.append(k[i] + shift * h)
    return out


def estimate_alpha_extrema(fk: np.ndarray, kgrid: WavenumberGrid) -> float | None:
    """Period-based estimate of ``alpha`` for one pixel.

    Uses two consecutive interior minimizers (``2 pi / dk``), else two
    maximizers, else an adjacent minimizer/maximizer pair (``pi / dk``).
    Returns ``None`` when the interval holds too few extrema.
    """
    f = np.asarray(fk, dtype=float)[::-1]
    k = kgrid.ascending()
    mins, maxs = _extrema(f, k, "min"), _extrema(f, k, "max")
    if len(mins) >= 2:
        return 2.0 * np.pi / abs(mins[1] - mins[0])
    if len(maxs) >= 2:
        return 2.0 * np.pi / abs(maxs[1] - maxs[0])
    if mins and maxs:
        return np.pi / abs(mins[0] - maxs[0])
    return None


def retrieve_plane(data: IntensityData, eps: float = 0.03) -> PhaseMap:
    _, F2 = cumulative_integrals(data.values, data.kgrid)
    xi = fit_xi(F2, data.values, data.kgrid, eps)
    alpha, tau, A = extract_alpha_A(xi, data.values, data.kgrid, data.plane.x3)
    return PhaseMap(data.plane, A, tau, alpha)


def synthesize_usc(pmap: PhaseMap, kgrid_out: WavenumberGrid) -> list[PlaneField]:
    """``u_sc = A exp(i k tau) - exp(i k x3)`` at every node of ``kgrid_out``."""
    x3 = pmap.plane.x3
    return [PlaneField(pmap.plane, float(k), pmap.A * np.exp(1j * k * pmap.tau) - np.exp(1j * k * x3))
            for k in kgrid_out.nodes]


def synthesize_total(pmap: PhaseMap, k: float) -> np.ndarray:
    """Companion total field ``A exp(i k tau)``."""
    return pmap.A * np.exp(1j * k * pmap.tau)
