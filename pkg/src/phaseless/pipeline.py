"""Stage functions shared by the command line and the test-suite.

Each stage takes in-memory objects and a :class:`PipelineConfig`; file
handling lives in :mod:`phaseless.cli`.
"""

from __future__ import annotations

import logging

import numpy as np

from .config import PipelineConfig
from .forward import PlaneField, lattice_grid, scattered_on_plane, solve_lippmann_schwinger
from .grid import Grid3D, PlaneSpec, WavenumberGrid
from .inversion import run_inversion
from .medium import Medium, build_medium, support_box
from .propagation import BoundaryData, angular_spectrum_propagate, assemble_boundary_data
from .retrieval import PhaseMap, retrieve_plane, synthesize_usc
from .sensing import IntensityData, add_noise, intensity

log = logging.getLogger(__name__)


def simulation_grid(inclusions, plane: PlaneSpec, k_max: float, points_per_wavelength: float) -> Grid3D:
    """Fine grid around the inclusions, aligned with the measurement lattice."""
    h = 2.0 * np.pi / k_max / points_per_wavelength
    return lattice_grid(plane, support_box(inclusions, pad=h), h)


def simulate_fields(inclusions, plane: PlaneSpec, kgrid: WavenumberGrid,
                    points_per_wavelength: float = 6.0, tol: float = 1e-8,
                    max_iter: int = 2000) -> list[PlaneField]:
    """Scattered field on ``plane`` for every node of ``kgrid``."""
    grid = simulation_grid(inclusions, plane, kgrid.k_hi, points_per_wavelength)
    med = build_medium(grid, inclusions)
    out = []
    for k in kgrid.nodes:
        u = solve_lippmann_schwinger(med, float(k), tol=tol, max_iter=max_iter)
        out.append(scattered_on_plane(med, u, plane, float(k)))
        log.info("simulated k=%.3f (%d iterations)", k, u.iterations)
    return out


def simulate(cfg: PipelineConfig) -> tuple[IntensityData, IntensityData]:
    """``(clean, noisy)`` intensity data on the measurement plane."""
    kg = cfg.acquisition_kgrid()
    fields = simulate_fields(cfg.inclusions(), cfg.meas_plane(), kg,
                             cfg.sim_points_per_wavelength, cfg.forward_tol, cfg.forward_max_iter)
    clean = intensity(fields, kg)
    return clean, add_noise(clean, cfg.noise_level, cfg.seed)


def retrieve(data: IntensityData, cfg: PipelineConfig) -> PhaseMap:
    return retrieve_plane(data, cfg.eps)


def propagate(fields: list[PlaneField], cfg: PipelineConfig, kgrid: WavenumberGrid) -> BoundaryData:
    """Propagated plane fields, completed into boundary data on the domain."""
    out_plane = cfg.prop_plane()
    prop = [angular_spectrum_propagate(f, cfg.prop_x3, pad=cfg.propagation_pad, out_plane=out_plane)
            for f in fields]
    return assemble_boundary_data(prop, cfg.domain_grid(), kgrid)


def boundary_from_phasemap(pmap: PhaseMap, cfg: PipelineConfig) -> BoundaryData:
    kg = cfg.shifted_kgrid()
    return propagate(synthesize_usc(pmap, kg), cfg, kg)


def invert(bd: BoundaryData, cfg: PipelineConfig):
    return run_inversion(bd, cfg.inversion())


def true_medium(cfg: PipelineConfig) -> Medium:
    return build_medium(cfg.domain_grid(), cfg.inclusions())


def run_pipeline(cfg: PipelineConfig):
    """All stages in memory; returns a dict of the intermediate products."""
    clean, noisy = simulate(cfg)
    pmap = retrieve(noisy, cfg)
    bd = boundary_from_phasemap(pmap, cfg)
    est, records, chosen = invert(bd, cfg)
    return {"clean": clean, "intensity": noisy, "phasemap": pmap, "boundary": bd,
            "medium": est, "records": records, "chosen": chosen}
