import numpy as np
import pytest

from phaseless import fileio
from phaseless.config import ConfigError, PipelineConfig, dump_config, load_config, parse_config
from phaseless.forward import PlaneField
from phaseless.grid import Box3, PlaneSpec, make_grid, make_wavenumber_grid
from phaseless.medium import CASES, Medium, build_medium
from phaseless.metrics import compute_metrics, contrast_errors, mirror_asymmetry
from phaseless.propagation import vacuum_boundary_data
from phaseless.retrieval import PhaseMap
from phaseless.sensing import IntensityData

G = make_grid(Box3((-2.5, -2.5, -4.0), (2.5, 2.5, 1.0)), (11, 11, 11))


def test_medium_round_trip(tmp_path):
    med = build_medium(G, CASES[2])
    fileio.write_medium(tmp_path / "m.bin", med)
    back = fileio.read_medium(tmp_path / "m.bin")
    assert back.grid == med.grid
    np.testing.assert_array_equal(back.c, med.c)
    assert fileio.file_kind(tmp_path / "m.bin") == "medium"


def test_intensity_and_phasemap_round_trip(tmp_path):
    plane, kg = PlaneSpec(5.0, 2.5, 4), make_wavenumber_grid(80, 85, 3)
    vals = np.random.default_rng(2).random((4, 4, 4))
    fileio.write_intensity(tmp_path / "i.bin", IntensityData(plane, kg, vals))
    d = fileio.read_intensity(tmp_path / "i.bin")
    assert d.plane == plane
    np.testing.assert_array_equal(d.kgrid.nodes, kg.nodes)
    np.testing.assert_array_equal(d.values, vals)
    pm = PhaseMap(plane, vals[0], vals[1] + 2.5, vals[2])
    fileio.write_phasemap(tmp_path / "p.bin", pm)
    back = fileio.read_phasemap(tmp_path / "p.bin")
    for name in ("A", "tau", "alpha"):
        np.testing.assert_array_equal(getattr(back, name), getattr(pm, name))


def test_plane_fields_and_boundary_round_trip(tmp_path):
    plane, kg = PlaneSpec(1.0, 1.0, 3), make_wavenumber_grid(20.4, 21, 2)
    rng = np.random.default_rng(3)
    flds = [PlaneField(plane, k, rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
            for k in kg.nodes]
    fileio.write_plane_fields(tmp_path / "f.bin", flds, kg)
    back, kg2 = fileio.read_plane_fields(tmp_path / "f.bin")
    for a, b in zip(flds, back):
        assert a.k == b.k
        np.testing.assert_array_equal(a.values, b.values)
    bd = vacuum_boundary_data(G, kg)
    fileio.write_boundary(tmp_path / "b.bin", bd)
    bd2 = fileio.read_boundary(tmp_path / "b.bin")
    for a, b in zip(bd.faces, bd2.faces):
        np.testing.assert_array_equal(a, b)


def test_corrupt_files_rejected(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"not a field file at all")
    with pytest.raises(fileio.FormatError):
        fileio.read_medium(p)
    fileio.write_medium(p, build_medium(G, CASES[1]))
    with pytest.raises(fileio.FormatError):
        fileio.read_intensity(p)
    raw = p.read_bytes()
    p.write_bytes(raw[:-8])
    with pytest.raises(fileio.FormatError):
        fileio.read_medium(p)


def test_config_defaults_and_round_trip():
    cfg = PipelineConfig()
    assert cfg.domain_grid().shape == (51, 51, 51)
    assert cfg.acquisition_kgrid().count == 51
    assert cfg.prop_plane().spacing == pytest.approx(0.1)
    assert parse_config(dump_config(cfg)) == cfg


def test_config_parsing(tmp_path):
    text = "# comment\ncase = 2\nseed = 7\nnoise_level = 0.0\nomega_n = 21, 21, 21\n"
    cfg = parse_config(text)
    assert (cfg.case, cfg.seed, cfg.noise_level, cfg.omega_n) == (2, 7, 0.0, (21, 21, 21))
    p = tmp_path / "run.cfg"
    p.write_text(text)
    assert load_config(p) == cfg


@pytest.mark.parametrize("text", [
    "bogus = 1", "case = 9", "noise_level = -1", "eps = 0", "prop_x3 = 3.0",
    "shift_k_hi = 90", "q_boundary = other", "seed = abc", "case 1",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_contrast_conventions():
    a, b = contrast_errors(2.16, 2.0)
    assert a == pytest.approx(0.16)
    assert b == pytest.approx(0.08)


def test_metrics_on_truth():
    truth = build_medium(make_grid(Box3((-1, -1, -0.5), (1, 1, 1.0)), (41, 41, 31)), CASES[3])
    m = compute_metrics(truth, truth)
    assert m.n_components == 2
    assert m.contrast_rel_error == 0.0
    for comp in m.components:
        assert comp.centroid_error < 1e-12
        assert comp.centroid[2] == pytest.approx(0.25, abs=1e-9)
    assert "components = 2" in m.report()


def test_metrics_scaled_estimate():
    g = make_grid(Box3((-1, -1, -0.5), (1, 1, 1.0)), (41, 41, 31))
    truth = build_medium(g, CASES[1])
    est = Medium(g, 1 + 1.16 * (truth.c - 1))
    m = compute_metrics(truth, est)
    assert m.contrast_rel_error == pytest.approx(0.16, rel=1e-9)
    t = truth.c.max()
    assert m.max_rel_error == pytest.approx(0.16 * (t - 1) / t, rel=1e-9)


def test_mirror_asymmetry():
    g = make_grid(Box3((-1, -1, -0.5), (1, 1, 1.0)), (41, 41, 31))
    assert mirror_asymmetry(build_medium(g, CASES[2]).c) < 1e-12
    assert mirror_asymmetry(build_medium(g, CASES[3]).c) > 0.5
    assert mirror_asymmetry(np.ones(g.shape)) == 0.0
