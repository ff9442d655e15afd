"""Reconstruction quality: peak values, contrast errors and inclusion centroids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .medium import Medium


@dataclass
class ComponentMetrics:
    centroid: tuple
    max_c_est: float
    max_c_true: float
    contrast_rel_error: float
    max_rel_error: float
    centroid_error: float


@dataclass
class Metrics:
    """Both contrast conventions are kept.

    ``contrast_rel_error = |max_est - max_true| / |max_true - 1|`` measures the
    error against the contrast above background; ``max_rel_error`` divides by
    ``max_true`` instead.
    """

    max_c_true: float
    max_c_est: float
    contrast_rel_error: float
    max_rel_error: float
    components: list = field(default_factory=list)

    @property
    def n_components(self) -> int:
        return len(self.components)

    def report(self) -> str:
        lines = [f"max_c_true = {self.max_c_true:.6g}",
                 f"max_c_est = {self.max_c_est:.6g}",
                 f"contrast_rel_error = {self.contrast_rel_error:.6g}",
                 f"max_rel_error = {self.max_rel_error:.6g}",
                 f"components = {self.n_components}"]
        for j, c in enumerate(self.components):
            lines.append(f"component {j}: centroid = ({', '.join(f'{v:.4f}' for v in c.centroid)}), "
                         f"max_c_est = {c.max_c_est:.6g}, max_c_true = {c.max_c_true:.6g}, "
                         f"contrast_rel_error = {c.contrast_rel_error:.6g}, "
                         f"max_rel_error = {c.max_rel_error:.6g}, centroid_error = {c.centroid_error:.4f}")
        return "\n".join(lines) + "\n"


def components(c: np.ndarray, threshold: float):
    """Labelled connected components (26-connectivity) of ``{c > threshold}``."""
    labels, n = ndimage.label(c > threshold, structure=np.ones((3, 3, 3)))
    return labels, n


def _centroids(med: Medium, labels: np.ndarray, n: int) -> list[np.ndarray]:
    x1, x2, x3 = med.grid.mesh()
    w = med.c - 1.0
    out = []
    for j in range(1, n + 1):
        m = labels == j
        ww = w[m]
        s = ww.sum()
        out.append(np.array([(x[m] * ww).sum() / s for x in (x1, x2, x3)]))
    return out


def contrast_errors(est: float, true: float) -> tuple[float, float]:
    """``(|est - true| / |true - 1|, |est - true| / |true|)``."""
    d = abs(est - true)
    return d / abs(true - 1.0) if true != 1.0 else float("inf"), d / abs(true)


def compute_metrics(truth: Medium, est: Medium, threshold: float = 1.2) -> Metrics:
    """Compare ``est`` against ``truth`` on a common grid.

    Estimated components are matched to the true component with the nearest
    centroid.
    """
    if truth.grid != est.grid:
        raise ValueError("truth and estimate live on different grids")
    mt, me = float(truth.c.max()), float(est.c.max())
    cre, mre = contrast_errors(me, mt) if mt != 1.0 else (abs(me - 1.0), abs(me - 1.0))
    out = Metrics(mt, me, cre, mre)
    lt, nt = components(truth.c, threshold)
    le, ne = components(est.c, threshold)
    tc = _centroids(truth, lt, nt)
    ec = _centroids(est, le, ne)
    for j, cen in enumerate(ec):
        pk = float(est.c[le == j + 1].max())
        if tc:
            d = [np.linalg.norm(cen - t) for t in tc]
            i = int(np.argmin(d))
            tmax = float(truth.c[lt == i + 1].max())
            dist = float(d[i])
        else:
            tmax, dist = 1.0, float("nan")
        a, b = contrast_errors(pk, tmax) if tmax != 1.0 else (float("nan"), float("nan"))
        out.components.append(ComponentMetrics(tuple(float(v) for v in cen), pk, tmax, a, b, dist))
    return out


def mirror_asymmetry(c: np.ndarray, axis: int = 2) -> float:
    """``||c - 1 - flip(c - 1)|| / ||c - 1||`` for a mirror about the centre of ``axis``.

    For grid arrays axis 2 is x1.
    """
    b = c - 1.0
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(b - np.flip(b, axis=axis)) / nb) if nb else 0.0
