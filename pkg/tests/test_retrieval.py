import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phaseless.grid import PlaneSpec, make_wavenumber_grid
from phaseless.retrieval import (
    PhaseMap, cumulative_integrals, design_matrix, estimate_alpha_extrema, extract_alpha_A,
    fit_xi, model_intensity, retrieve_plane, synthesize_usc,
)
from phaseless.sensing import IntensityData

KG = make_wavenumber_grid(80, 85, 50)


def closed_form_F2(A, a, k, k0):
    # double integral of A^2+1-2A cos(a s) from k0
    d = k - k0
    return ((A * A + 1) * d * d / 2 + 2 * A / (a * a) * (np.cos(a * k) - np.cos(a * k0))
            + 2 * A / a * np.sin(a * k0) * d)


def test_integrals_of_constants():
    F1, F2 = cumulative_integrals(np.ones(KG.count), KG)
    d = KG.nodes - KG.k_lo
    np.testing.assert_allclose(F1, d, atol=1e-12)
    np.testing.assert_allclose(F2, d * d / 2, atol=1e-12)
    F1, F2 = cumulative_integrals(np.zeros(KG.count), KG)
    assert not np.any(F1) and not np.any(F2)


def test_F2_matches_closed_form():
    f = model_intensity(1.5, 0.3, KG.nodes)
    _, F2 = cumulative_integrals(f, KG)
    ref = closed_form_F2(1.5, 0.3, KG.k_hi, KG.k_lo)
    assert F2[0] == pytest.approx(ref, rel=1e-4)


def test_integrals_need_two_nodes():
    with pytest.raises(ValueError):
        cumulative_integrals(np.ones(KG.count - 1), KG)


def test_design_rows():
    F2 = np.arange(KG.count, dtype=float)
    M = design_matrix(F2, KG)
    assert M.shape == (KG.count, 4)
    np.testing.assert_allclose(M[-1], [-F2[-1], 0, 0, 1])
    np.testing.assert_allclose(M[0, 1:], [25.0, 5.0, 1.0])


def _xi(A, a, eps):
    f = model_intensity(A, a, KG.nodes)
    _, F2 = cumulative_integrals(f, KG)
    return fit_xi(F2, f, KG, eps), f


def test_xi1_is_alpha_squared():
    xi, _ = _xi(1.5, 0.3, 1e-8)
    assert xi[0] == pytest.approx(0.09, abs=1e-3)


def test_zero_alpha_coefficients_vanish():
    f = np.full(KG.count, 0.25)
    _, F2 = cumulative_integrals(f, KG)
    xi = fit_xi(F2, f, KG, 1e-8)
    np.testing.assert_allclose(xi[:3], 0, atol=1e-6)
    assert xi[3] == pytest.approx(0.25, abs=1e-6)


def test_operating_eps_is_well_posed():
    xi, _ = _xi(1.5, 0.3, 0.03)
    assert np.all(np.isfinite(xi))
    # the ridge term shrinks the fit, so only the sign of xi1 is stable here
    assert xi[0] > 0


def test_eps_must_be_positive():
    with pytest.raises(ValueError):
        fit_xi(np.zeros(KG.count), np.zeros(KG.count), KG, 0.0)


def test_alpha_tau_arithmetic():
    xi = np.array([0.09, 0.0, 0.0, 0.0])
    f = model_intensity(1.5, 0.3, KG.nodes)
    alpha, tau, _ = extract_alpha_A(xi, f, KG, 2.5, quadrature_correction=False)
    assert alpha == pytest.approx(0.3)
    assert tau == pytest.approx(2.8)


def test_negative_xi1_gives_zero_alpha():
    xi = np.array([-0.04, 0.0, 0.0, 1.0])
    alpha, tau, _ = extract_alpha_A(xi, np.ones(KG.count), KG, 2.5)
    assert alpha == 0.0 and tau == 2.5


def test_quadrature_correction_inverts_tangent_bias():
    a = 1.2
    biased = (2 / KG.step) * np.tan(KG.step * a / 2)
    alpha, _, _ = extract_alpha_A(np.array([biased ** 2, 0, 0, 0]), np.ones(KG.count), KG, 0.0)
    assert alpha == pytest.approx(a, rel=1e-12)


@pytest.mark.parametrize("A", [0.5, 1.0, 1.5, 2.0])
@pytest.mark.parametrize("a", [0.3, 0.9, 1.5])
def test_exact_model_round_trip(A, a):
    xi, f = _xi(A, a, 1e-8)
    alpha, _, Ahat = extract_alpha_A(xi, f, KG, 0.0)
    assert Ahat == pytest.approx(A, rel=1e-2)
    assert alpha == pytest.approx(a, rel=1e-2)


def test_extrema_short_period():
    assert estimate_alpha_extrema(model_intensity(1.5, 2.0, KG.nodes), KG) == pytest.approx(2.0, rel=0.02)


def test_extrema_insufficient():
    assert estimate_alpha_extrema(model_intensity(1.5, 0.3, KG.nodes), KG) is None
    assert estimate_alpha_extrema(np.ones(KG.count), KG) is None


def test_uniform_plane():
    plane = PlaneSpec(5.0, 2.5, 6)
    f = model_intensity(1.5, 0.3, KG.nodes)
    data = IntensityData(plane, KG, np.broadcast_to(f[:, None, None], (KG.count, 6, 6)).copy())
    pm = retrieve_plane(data, eps=1e-8)
    np.testing.assert_allclose(pm.alpha, 0.3, rtol=1e-3)
    np.testing.assert_allclose(pm.tau, 2.8, rtol=1e-3)
    np.testing.assert_allclose(pm.A, 1.5, rtol=1e-2)
    assert np.ptp(pm.A) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.floats(1.05, 2.5), st.floats(0.2, 2.0))
def test_round_trip_property(A, a):
    xi, f = _xi(A, a, 1e-8)
    alpha, _, Ahat = extract_alpha_A(xi, f, KG, 0.0)
    assert abs(alpha - a) < 0.02 * a
    assert abs(Ahat - A) < 0.02 * A


def test_synthesize_at_companion_wavenumber():
    plane = PlaneSpec(5.0, 2.5, 2)
    pm = PhaseMap(plane, np.full((2, 2), 1.5), np.full((2, 2), 2.8), np.full((2, 2), 0.3))
    kout = make_wavenumber_grid(82.25, 83.25, 1)
    u = synthesize_usc(pm, kout)[-1]
    assert u.k == 82.25
    ref = 1.5 * np.exp(1j * 82.25 * 2.8) - np.exp(1j * 82.25 * 2.5)
    np.testing.assert_allclose(u.values, ref, rtol=1e-13)


def test_synthesize_on_shifted_grid():
    plane = PlaneSpec(5.0, 2.5, 2)
    pm = PhaseMap(plane, np.ones((2, 2)), np.full((2, 2), 2.5), np.zeros((2, 2)))
    out = synthesize_usc(pm, make_wavenumber_grid(20.4, 21, 6))
    assert [f.k for f in out] == pytest.approx(list(np.linspace(21, 20.4, 7)))
    # A=1 and zero delay means no scattering
    assert max(np.abs(f.values).max() for f in out) < 1e-13


def test_phasemap_shape_checked():
    with pytest.raises(ValueError):
        PhaseMap(PlaneSpec(1.0, 1.0, 3), np.ones((2, 2)), np.ones((3, 3)), np.ones((3, 3)))
