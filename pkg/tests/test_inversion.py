import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phaseless.forward import solve_lippmann_schwinger
from phaseless.grid import Box3, make_grid, make_wavenumber_grid
from phaseless.inversion import (
    AdvectionPreconditioner, InversionConfig, InversionError, TailGradient, apply_q_operator, boundary_q, boundary_q_log,
    coefficient_from_v, criterion_of_choice, divergence, gradient, init_tail, laplacian,
    log_gradient, plane_wave_tail, relative_changes, run_inversion, solve_laplace_dirichlet,
    solve_q_bvp, stage_rhs, update_coefficient, update_tail,
)
from phaseless.medium import CASES, build_medium, vacuum
from phaseless.propagation import vacuum_boundary_data

G = make_grid(Box3((-1.0, -1.0, -1.5), (1.0, 1.0, 0.5)), (17, 15, 21))


def test_boundary_q_vacuum_consistency():
    h, x3 = 0.1, np.linspace(-4, 1, 11)
    k_n, k_next = 21.0, 20.9
    q = boundary_q(np.exp(1j * k_n * x3), np.exp(1j * k_next * x3), h)
    np.testing.assert_allclose(q, (1 - np.exp(-1j * h * x3)) / h, atol=1e-12)
    assert np.abs(q - 1j * x3).max() <= h * 16 / 2 + 1e-12


def test_boundary_q_static_data():
    g = np.array([1 + 1j, 2.0, -0.5j])
    assert not np.any(boundary_q(g, g, 0.1))
    assert not np.any(boundary_q_log(g, g, 0.1))


def test_boundary_q_first_order_bound():
    k, h, tau = 20.0, 0.1, 2.0
    q = boundary_q(np.exp(1j * k * tau), np.exp(1j * (k - h) * tau), h)
    assert abs(q - 2j) <= h * tau ** 2 / 2


def test_boundary_q_log_is_exact_for_phase():
    k, h, tau = 20.0, 0.1, 2.0
    q = boundary_q_log(np.exp(1j * k * tau), np.exp(1j * (k - h) * tau), h)
    assert q == pytest.approx(2j, abs=1e-12)


def test_boundary_q_vanishing_data():
    with pytest.raises(InversionError):
        boundary_q(np.array([0.0, 1.0]), np.ones(2), 0.1)
    with pytest.raises(InversionError):
        boundary_q_log(np.ones(2), np.array([1.0, 0.0]), 0.1)


def _quadratic():
    x, y, z = G.mesh()
    return x, y, z, 1.5 * x * x - y * y + 0.25 * z * z + x * y - 2 * z


def test_stencils_exact_on_quadratics():
    x, y, z, f = _quadratic()
    dx, dy, dz = gradient(f, G)
    inner = (slice(1, -1),) * 3
    np.testing.assert_allclose(dx[inner], (3 * x + y)[inner], atol=1e-12)
    np.testing.assert_allclose(dz[inner], (0.5 * z - 2)[inner], atol=1e-12)
    lap = laplacian(f, G)
    np.testing.assert_allclose(lap[inner], 3 - 2 + 0.5, atol=1e-10)
    assert not np.any(lap[G.boundary_mask()])
    div = divergence(x, y, z, G)
    np.testing.assert_allclose(div, 3.0, atol=1e-12)


def test_log_gradient_exact_for_plane_waves():
    x, y, z = G.mesh()
    kv = np.array([3.0, -4.0, 21.0])
    u = 0.7 * np.exp(1j * (kv[0] * x + kv[1] * y + kv[2] * z))
    for comp, kj in zip(log_gradient(u, G), kv):
        np.testing.assert_allclose(comp, 1j * kj, atol=1e-10)


def test_laplace_solver_reproduces_harmonic_quadratic():
    x, y, z = G.mesh()
    f = x * x - y * y + 3 * x * z - z + 0.5
    b = np.where(G.boundary_mask(), f, 0.0)
    u = solve_laplace_dirichlet(b, G, tol=1e-8)
    np.testing.assert_allclose(u, f, atol=1e-10)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_laplace_residual_any_boundary(seed):
    rng = np.random.default_rng(seed)
    b = np.where(G.boundary_mask(), rng.normal(size=G.shape) + 1j * rng.normal(size=G.shape), 0)
    u = solve_laplace_dirichlet(b, G, tol=1e-8)
    m = G.boundary_mask()
    np.testing.assert_array_equal(u[m], b[m])
    res = laplacian(u, G)[~m]
    scale = np.abs(b).max() / min(G.spacing) ** 2
    assert np.abs(res).max() <= 1e-8 * scale


def test_q_bvp_trivial():
    z = np.zeros(G.shape, dtype=complex)
    b = (z, z, np.full(G.shape, 20j))
    q, info = solve_q_bvp(20.0, b, z, z, G)
    assert not np.any(q)
    assert info.residual <= 1e-8


@pytest.mark.parametrize("scheme", ["centered", "upwind"])
def test_q_bvp_vacuum_linear_solution(scheme):
    # q = i x3 is reproduced exactly by both difference schemes
    k, kb = 20.0, 21.0
    x3 = G.mesh()[2]
    tail = plane_wave_tail(G, kb)
    b, rhs = stage_rhs(np.zeros(G.shape, dtype=complex), tail)
    exact = 1j * x3 + 0j
    src = apply_q_operator(exact, b, k, G, scheme)
    q, _ = solve_q_bvp(k, b, src, np.where(G.boundary_mask(), exact, 0), G, scheme=scheme)
    np.testing.assert_allclose(q, exact, atol=1e-7)


def test_q_bvp_manufactured_converges():
    errs = []
    for n in (9, 17, 33):
        g = make_grid(Box3((0, 0, 0), (1, 1, 1)), (n, n, n))
        x, y, z = g.mesh()
        exact = np.sin(np.pi * x) * np.sin(2 * y) * np.exp(1j * z)
        b = (np.full(g.shape, 0.5 + 0j), np.zeros(g.shape, complex), np.full(g.shape, 3j))
        lap = (-np.pi ** 2 - 4 - 1) * exact
        grad = (np.pi * np.cos(np.pi * x) * np.sin(2 * y) * np.exp(1j * z),
                2 * np.sin(np.pi * x) * np.cos(2 * y) * np.exp(1j * z), 1j * exact)
        k = 4.0
        rhs = k * (lap + 2 * sum(bc * gc for bc, gc in zip(b, grad)))
        q, _ = solve_q_bvp(k, b, rhs, np.where(g.boundary_mask(), exact, 0), g)
        errs.append(np.sqrt(np.mean(np.abs(q - exact) ** 2)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.0)


def test_vacuum_coefficient_identity():
    k = 20.4
    z = np.zeros(G.shape, dtype=complex)
    c = coefficient_from_v((z, z, np.full(G.shape, 1j * k)), z, k, G)
    np.testing.assert_allclose(c, 1.0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1.0, 50.0))
def test_coefficient_clamped(seed, k):
    rng = np.random.default_rng(seed)
    v = [50 * (rng.normal(size=G.shape) + 1j * rng.normal(size=G.shape)) for _ in range(4)]
    c = coefficient_from_v(v[:3], v[3], k, G, c_max=10.0)
    assert c.min() >= 1.0 and c.max() <= 10.0
    assert np.all(c[G.boundary_mask(2)] == 1.0)


def test_injected_exact_field_recovers_medium():
    g = make_grid(Box3((-0.5, -0.5, -0.25), (0.5, 0.5, 0.75)), (61, 61, 61))
    med = build_medium(g, CASES[1])
    k = 8.0
    u = solve_lippmann_schwinger(med, k).values
    tail = TailGradient(g, *log_gradient(u, g))
    z = np.zeros(g.shape, dtype=complex)
    c = update_coefficient(z, z, tail, 0.1, k)
    inner = ~g.boundary_mask(3)
    assert np.abs(c - med.c)[inner].max() <= 0.05


def test_tail_of_vacuum_is_plane_wave():
    tail = update_tail(vacuum(G), 21.0)
    np.testing.assert_allclose(tail.gz, 21j, atol=1e-10)
    np.testing.assert_allclose(tail.gx, 0, atol=1e-10)
    np.testing.assert_allclose(tail.div, 0, atol=1e-8)


def test_tail_weak_contrast_deviation_scales():
    dev = []
    for s in (1e-3, 2e-3):
        g = make_grid(Box3((-0.5, -0.5, -0.25), (0.5, 0.5, 0.75)), (21, 21, 21))
        t = update_tail(build_medium(g, CASES[1]).scaled(s), 8.0)
        dev.append(np.abs(t.gz - 8j).max())
    assert dev[1] / dev[0] == pytest.approx(2.0, rel=0.05)


def test_tail_divergence_consistent():
    g = make_grid(Box3((-0.5, -0.5, -0.25), (0.5, 0.5, 0.75)), (21, 21, 21))
    t = update_tail(build_medium(g, CASES[1]), 8.0)
    np.testing.assert_allclose(t.div, divergence(t.gx, t.gy, t.gz, g))


def test_tail_init_on_vacuum_data():
    kg = make_wavenumber_grid(20.4, 21, 6)
    tail = init_tail(vacuum_boundary_data(G, kg))
    np.testing.assert_allclose(tail.gz, 21j, atol=1e-9)
    np.testing.assert_allclose(tail.gx, 0, atol=1e-9)


def test_criterion_of_choice_examples():
    snaps = [np.ones(4)]
    for d in (0.1, 0.01, 0.0005):
        snaps.append(snaps[-1] * (1 + d))
    np.testing.assert_allclose(relative_changes(snaps), [0.1, 0.01, 0.0005])
    assert criterion_of_choice(snaps, 1e-3) == 3
    diverging = [np.full(3, 2.0 ** j) for j in range(5)]
    assert criterion_of_choice(diverging, 1e-3) == 4
    assert criterion_of_choice([np.ones(2)], 1e-3) == 0
    with pytest.raises(ValueError):
        criterion_of_choice([], 1e-3)


def test_vacuum_cascade_small():
    kg = make_wavenumber_grid(20.4, 21, 6)
    est, records, chosen = run_inversion(vacuum_boundary_data(G, kg), InversionConfig())
    assert len(records) == 6 * 3
    assert np.abs(est.c - 1).max() <= 1e-2
    assert records[chosen].c is est.c or np.array_equal(records[chosen].c, est.c)



@pytest.mark.parametrize("scheme", ["centered", "upwind"])
@pytest.mark.parametrize("bz", [20j, 3.0 + 20j, -3.0 + 20j])
def test_preconditioner_inverts_constant_operator(scheme, bz):
    ishape = tuple(s - 2 for s in G.shape)
    P = AdvectionPreconditioner(ishape, tuple(G.spacing[::-1]), 20.0, bz, scheme)
    rng = np.random.default_rng(0)
    x = np.zeros(G.shape, dtype=complex)
    I = (slice(1, -1),) * 3
    x[I] = rng.normal(size=ishape) + 1j * rng.normal(size=ishape)
    Ax = apply_q_operator(x, (0.0, 0.0, bz), 20.0, G, scheme)[I]
    np.testing.assert_allclose(P(Ax.ravel()), x[I].ravel(), atol=1e-9)
