import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beamforge.beam import (BeamTrajectory, amp_degrees, beam_field, cutoff_profile,
                            eikonal_residual, make_state, pack, pde_residual_norm, propagate,
                            skip_radius, unpack)
from beamforge.errors import (DomainError, IntegrityError, ResolutionError, SamplingError,
                              ShapeError)
from beamforge.fields import SampledField, grid_for_box
from beamforge.hamiltonians import cosine_potential, schrodinger, wave_constant_c
from beamforge.initdata import single_beam_state
from beamforge.initdata import build_initial_beam, cusp_data


def wave_M(t):
    return np.diag([1j, (2 + 1j) / (1 - (2 + 1j) * t)])


@pytest.mark.parametrize("k", [1, 2, 3])
def test_riccati_closed_form_wave(k):
    traj = propagate(wave_constant_c(), single_beam_state(k), [0.0, 0.5, 1.0])
    for t in (0.5, 1.0):
        s = traj.state_at(t)
        assert np.max(np.abs(s.M - wave_M(t))) < 1e-8
        assert np.allclose(s.x, [t, 0.0], atol=1e-12)
        # leading amplitude solves a' = M22 a / 2
        assert abs(s.amps[0].coeffs[0] - (1 - (2 + 1j) * t) ** -0.5) < 1e-8


@pytest.mark.parametrize("k", [1, 2, 3])
def test_riccati_closed_form_free_schrodinger(k):
    model = schrodinger(None, 1)
    s0 = make_state([0.0], [0.7], [[1j]], [1.0], k)
    traj = propagate(model, s0, [0.0, 1.0])
    s = traj.state_at(1.0)
    assert abs(s.M[0, 0] - 1j / (1 + 1j)) < 1e-8
    assert abs(s.amps[0].coeffs[0] - (1 + 1j) ** -0.5) < 1e-8
    assert np.isclose(s.x[0], 0.7)
    # phi0' = p.xdot - H = |p|^2 / 2
    assert np.isclose(s.phi0, 0.5 * 0.49)


def test_invariants_over_cusp_beams():
    data = cusp_data()
    z = np.stack(np.meshgrid(np.linspace(-1.2, 1.2, 7), np.linspace(-1.2, 1.2, 7)), -1).reshape(-1, 2)
    traj = propagate(wave_constant_c(), build_initial_beam(data, wave_constant_c(), z, 3),
                     (0, 0.5, 1.0))
    assert np.all(traj.stats["min_imag_eig"] > 0)
    p0 = np.linalg.norm(traj.states[0].p, axis=-1)
    for s in traj.states:
        M = s.M
        assert np.max(np.abs(M - np.swapaxes(M, -1, -2))) < 1e-10
        assert np.max(np.abs(np.linalg.norm(s.p, axis=-1) - p0)) < 1e-12
        res = eikonal_residual(wave_constant_c(), s)
        assert np.max(np.abs(res.coeffs)) < 1e-8


def test_eikonal_residual_schrodinger_with_potential():
    model = schrodinger(cosine_potential, 1)
    s0 = make_state([0.3], [0.5], [[0.5 + 1j]], [1.0], 3)
    traj = propagate(model, s0, [0.0, 0.7])
    assert np.max(np.abs(eikonal_residual(model, traj.state_at(0.7)).coeffs)) < 1e-8


def test_integrity_error_for_bad_initial_hessian():
    s0 = make_state([0.0, 0.0], [-1.0, 0.0], np.diag([1j, -1j]), [1.0], 1)
    with pytest.raises(IntegrityError):
        propagate(wave_constant_c(), s0, [0.0, 1.0])


def test_pack_round_trip():
    s = single_beam_state(3)
    back = unpack(pack(s), 2, 3)
    assert np.array_equal(back.phase.coeffs, s.phase.coeffs)
    assert all(np.array_equal(a.coeffs, b.coeffs) for a, b in zip(back.amps, s.amps))
    assert amp_degrees(3) == [2, 0]


def test_sampling_error_for_unstored_time():
    traj = propagate(wave_constant_c(), single_beam_state(1), [0.0, 0.5])
    with pytest.raises(SamplingError):
        traj.state_at(0.25)


def reference_cutoff(r, eta):
    r = np.asarray(r, dtype=float)
    u = np.clip((2 * eta - r) / eta, 0, 1)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f = np.where(u > 0, np.exp(-1 / u), 0.0)
        g = np.where(u < 1, np.exp(-1 / (1 - u)), 0.0)
        out = f / (f + g)
    return np.where(r <= eta, 1.0, np.where(r >= 2 * eta, 0.0, out))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 0.5), st.floats(0.05, 0.2))
def test_cutoff_profile(r, eta):
    R, R1, _ = cutoff_profile(np.array([r]), eta)
    assert np.isclose(R[0], reference_cutoff(r, eta), atol=1e-12)
    assert 0 <= R[0] <= 1
    h = 1e-6
    if h < r < 2 * eta - h and abs(r - eta) > h:
        fd = (reference_cutoff(r + h, eta) - reference_cutoff(r - h, eta)) / (2 * h)
        assert np.isclose(R1[0], fd, rtol=1e-4, atol=1e-6)


def direct_field(s, Y, eps, eta):
    """rho(|y|) sum_j eps^j a_j(y) exp(i phi(y)/eps) by explicit monomial sums."""
    y = Y - s.x

    def poly(jet):
        acc = np.zeros(y.shape[:-1], dtype=complex)
        for c, e in zip(jet.coeffs, jet.space.exponents):
            acc += c * np.prod(y ** e, axis=-1)
        return acc

    rho = reference_cutoff(np.linalg.norm(y, axis=-1), eta)
    out = np.zeros(y.shape[:-1], dtype=complex)
    live = rho > 0
    y = y[live]
    env = sum(eps**j * poly(a) for j, a in enumerate(s.amps))
    out[live] = rho[live] * env * np.exp(1j * poly(s.phase) / eps)
    return out


@pytest.mark.parametrize("k", [1, 2, 3])
def test_beam_field_matches_direct_sum(k):
    eps = 2**-5
    dt = 1e-4
    traj = propagate(wave_constant_c(), single_beam_state(k), [0.0, 0.5 - dt, 0.5, 0.5 + dt])
    grid = grid_for_box([-0.5, -1.0], [1.5, 1.0], np.sqrt(eps) / 4)
    Y = grid.points()
    u, ut, (g0, g1) = beam_field(traj, 0.5, eps, grid, "all")
    want = direct_field(traj.state_at(0.5), Y, eps, traj.eta)
    scale = np.max(np.abs(want))
    assert np.max(np.abs(u.values - want)) < 1e-12 * scale
    fd_t = (direct_field(traj.state_at(0.5 + dt), Y, eps, traj.eta)
            - direct_field(traj.state_at(0.5 - dt), Y, eps, traj.eta)) / (2 * dt)
    assert np.max(np.abs(ut.values - fd_t)) < 1e-5 * np.max(np.abs(fd_t))
    h = 1e-6
    s = traj.state_at(0.5)
    fd_0 = (direct_field(s, Y + [h, 0], eps, traj.eta) - direct_field(s, Y - [h, 0], eps, traj.eta)) / (2 * h)
    fd_1 = (direct_field(s, Y + [0, h], eps, traj.eta) - direct_field(s, Y - [0, h], eps, traj.eta)) / (2 * h)
    gscale = max(np.max(np.abs(fd_0)), np.max(np.abs(fd_1)))
    assert np.max(np.abs(g0.values - fd_0)) < 1e-5 * gscale
    assert np.max(np.abs(g1.values - fd_1)) < 1e-5 * gscale


def test_skip_radius_changes_nothing_visible():
    eps = 2**-6
    traj = propagate(wave_constant_c(), single_beam_state(1), [0.0, 1.0])
    grid = grid_for_box([-1.0, -2.0], [3.0, 2.0], np.sqrt(eps) / 4)
    a = beam_field(traj, 1.0, eps, grid, skip=True)
    b = beam_field(traj, 1.0, eps, grid, skip=False)
    assert np.max(np.abs(a.values - b.values)) < 1e-14 * np.max(np.abs(b.values))
    assert skip_radius(np.array([1.0]), eps, 0.1)[0] == pytest.approx(0.2)


def test_field_errors():
    traj = propagate(wave_constant_c(), single_beam_state(1), [0.0])
    coarse = grid_for_box([-1, -1], [1, 1], 0.5)
    with pytest.raises(ResolutionError):
        beam_field(traj, 0.0, 2**-4, coarse)
    with pytest.raises(DomainError):
        beam_field(traj, 0.0, 0.0, coarse)
    line = grid_for_box([-1], [1], 0.01)
    with pytest.raises(ShapeError):
        beam_field(traj, 0.0, 2**-4, line)


def test_free_schrodinger_first_order_beam_is_exact():
    # quadratic phase and constant amplitude solve the free equation exactly
    model = schrodinger(None, 1)
    traj = propagate(model, make_state([0.0], [1.0], [[1j]], [1.0], 1), [0.0, 0.5])
    eps = 2**-6
    grid = grid_for_box([-2.0], [3.0], 2 * np.pi * eps / 8)
    res = pde_residual_norm(traj, model, 0.5, eps, grid)
    norm = np.sqrt(np.sum(np.abs(beam_field(traj, 0.5, eps, grid).values) ** 2) * grid.cell_volume)
    assert res < 1e-9 * norm
