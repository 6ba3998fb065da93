import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beamforge.beam import beam_rhs
from beamforge.errors import ConditioningError, DomainError
from beamforge.fields import grid_for_box
from beamforge.hamiltonians import wave_constant_c
from beamforge.initdata import (WkbData, build_initial_beam, cusp_data, sample_initial_fields,
                                single_beam_state, vandermonde_split)
from beamforge.jets import Jet, jet_variables


def test_vandermonde_examples():
    assert np.allclose(vandermonde_split([1.0, -1.0], [1.0, 1j]), [1.0, 0.0])
    assert np.allclose(vandermonde_split([1.0, -1.0], [1.0, 0.0]), [0.5, 0.5])
    assert np.allclose(vandermonde_split([2.0], [3.0 + 1j]), [3.0 + 1j])


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.1, 5), st.complex_numbers(max_magnitude=10),
       st.complex_numbers(max_magnitude=10))
def test_vandermonde_inverts_forward_map(t1, t2, a, b):
    taus = np.array([t1, -t2])
    rhs = np.array([a + b, 1j * t1 * a - 1j * t2 * b])
    assert np.allclose(vandermonde_split(taus, rhs), [a, b], atol=1e-12 * (1 + abs(a) + abs(b)))


def test_vandermonde_coincident_roots():
    with pytest.raises(ConditioningError):
        vandermonde_split([1.0, 1.0 + 1e-12], [1.0, 0.0])


def test_cusp_initial_beams():
    model = wave_constant_c()
    s = build_initial_beam(cusp_data(), model, np.zeros(2), 3)
    assert np.allclose(s.p, [-1, 0])
    assert np.allclose(s.M, np.diag([1j, 2 + 1j]))
    assert s.phi0 == 0 and np.isclose(s.amps[0].coeffs[0], 1)
    s = build_initial_beam(cusp_data(), model, np.array([0.0, 0.5]), 2)
    assert np.allclose(s.p, [-1, 1])
    assert np.isclose(s.phi0, 0.25)
    assert np.isclose(s.amps[0].coeffs[0], np.exp(-2.5))
    assert np.allclose(s.M, np.diag([1j, 2 + 1j]))
    # the backward mode carries nothing for one-way data
    other = build_initial_beam(cusp_data(), model, np.array([0.0, 0.5]), 2, mode=1)
    assert all(np.all(a.coeffs == 0) for a in other.amps)


def test_single_beam_state():
    s = single_beam_state(3)
    assert np.allclose(s.M, np.diag([1j, 2 + 1j]))
    assert np.allclose(s.amps[0].coeffs, [1] + [0] * 5)
    assert np.allclose(s.phase.coeffs[6:], 0)


def test_domain_errors():
    model = wave_constant_c()
    with pytest.raises(DomainError):
        build_initial_beam(cusp_data(), model, np.array([2.0, 0.0]), 1)
    flat = WkbData((-1, -1), (1, 1), lambda z, d: Jet.zeros(2, d, np.shape(z)[:-1]),
                   (lambda z, d: Jet.constant(np.ones(np.shape(z)[:-1]), 2, d),), one_way=1)
    with pytest.raises(DomainError):
        build_initial_beam(flat, model, np.zeros(2), 1)


def _explicit_data():
    def phase(z, d):
        y1, y2 = jet_variables(z, d)
        return y1 * 0.8 + y2 * y2 * 0.5 + y1 * y2 * 0.2

    def a0(z, d):
        y1, y2 = jet_variables(z, d)
        return (y1 * y1 * -1.0 - y2 * y2).exp()

    def a1(z, d):
        y1, _ = jet_variables(z, d)
        return (y1 * 0.5).sin() + 0.3j

    def r0(z, d):
        y1, y2 = jet_variables(z, d)
        return (y2 * 0.7).cos() * 0.4j

    def r1(z, d):
        _, y2 = jet_variables(z, d)
        return y2 * 0.25 + 0.1

    return WkbData((-1, -1), (1, 1), phase, (a0, a1), (r0, r1))


def test_mode_split_recovers_data_at_the_node():
    data = _explicit_data()
    model = wave_constant_c(1.3)
    z = np.array([[0.2, -0.3], [-0.5, 0.6]])
    states = [build_initial_beam(data, model, z, 3, ell) for ell in range(2)]
    u0 = sum(s.amps[0].coeffs[..., 0] for s in states)
    assert np.allclose(u0, data.amp_jet(0, z, 0).coeffs[..., 0], atol=1e-12)
    u1 = sum(s.amps[1].coeffs[..., 0] for s in states)
    assert np.allclose(u1, data.amp_jet(1, z, 0).coeffs[..., 0], atol=1e-12)
    # eps^-1 and eps^0 parts of u_t at y = z
    lead = 0
    nxt = 0
    for ell, s in enumerate(states):
        r = beam_rhs(model.branch(ell), s)
        phi_t = r.phase.coeffs[..., 0] - np.sum(r.x * s.p, axis=-1)
        a0_t = r.amps[0].coeffs[..., 0] - sum(
            r.x[..., i] * s.amps[0].partial(i).coeffs[..., 0] for i in range(2))
        lead = lead + 1j * phi_t * s.amps[0].coeffs[..., 0]
        nxt = nxt + 1j * phi_t * s.amps[1].coeffs[..., 0] + a0_t
    assert np.allclose(lead, data.rate_jet(0, z, 0).coeffs[..., 0], atol=1e-12)
    assert np.allclose(nxt, data.rate_jet(1, z, 0).coeffs[..., 0], atol=1e-12)


def test_one_way_time_derivative_against_transport():
    # leading part of u_t for Phi = -y1 + y2^2, Phi_t = |grad Phi|:
    # A_t = (2 grad Phi . grad A + (Lap Phi - Phi_tt) A) / (2 Phi_t), exact in eps^0
    data = cusp_data()
    model = wave_constant_c()
    diffs = []
    for eps in (2**-5, 2**-6):
        grid = grid_for_box([-0.75, -0.75], [0.75, 0.75], 2 * np.pi * eps / 8)
        u0, u1 = sample_initial_fields(data, model, eps, grid)
        y1, y2 = np.moveaxis(grid.points(), -1, 0)
        A = np.exp(-10 * (y1**2 + y2**2))
        s = np.sqrt(1 + 4 * y2**2)
        grad_dot = (-1) * (-20 * y1 * A) + 2 * y2 * (-20 * y2 * A)
        phi_tt = 8 * y2**2 / s**2
        A_t = (2 * grad_dot + (2 - phi_tt) * A) / (2 * s)
        lead = (1j / eps * s * A + A_t) * np.exp(1j * (-y1 + y2**2) / eps)
        assert np.allclose(u0.values, A * np.exp(1j * (-y1 + y2**2) / eps))
        diffs.append(np.max(np.abs(u1.values - lead)))
    # the remainder is the eps A_{1,t} term
    assert 1.6 < diffs[0] / diffs[1] < 2.4
    assert diffs[0] < 2**-5 * 20
