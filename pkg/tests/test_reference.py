import numpy as np
import pytest

from beamforge.errors import ResolutionError
from beamforge.fields import SampledField, grid_for_box
from beamforge.norms import grid_l2
from beamforge.reference import (reference_grid, schrodinger_split_step, spectral_gradient,
                                 split_step_count, wave_energy, wave_exact_constant_c)


def box(n=64, L=2 * np.pi):
    return SampledField((n, n), (0, 0), (L, L))


def smooth_field(g, seed=0):
    rng = np.random.default_rng(seed)
    y1, y2 = g.mesh()
    v = np.zeros(g.dims, dtype=complex)
    for _ in range(6):
        k = rng.integers(-5, 6, 2)
        v += (rng.normal() + 1j * rng.normal()) * np.exp(1j * (k[0] * y1 + k[1] * y2))
    return g.like(v)


@pytest.mark.parametrize("kvec,c,t", [((3, 0), 1.0, 0.7), ((2, -5), 2.5, 1.3), ((0, 1), 0.5, 3.0)])
def test_plane_waves_follow_the_symbol(kvec, c, t):
    g = box()
    y1, y2 = g.mesh()
    e = np.exp(1j * (kvec[0] * y1 + kvec[1] * y2))
    w = c * np.hypot(*kvec)
    u, ut = wave_exact_constant_c(g.like(e), g.like(0.3j * e), c, t)
    assert np.max(np.abs(u.values - (np.cos(w * t) + 0.3j * np.sin(w * t) / w) * e)) < 1e-10
    assert np.max(np.abs(ut.values - (-w * np.sin(w * t) + 0.3j * np.cos(w * t)) * e)) < 1e-10


def test_constant_mode_grows_linearly():
    g = box(16)
    u, ut = wave_exact_constant_c(g.like(np.ones(g.dims)), g.like(2 * np.ones(g.dims)), 1.0, 0.5)
    assert np.allclose(u.values, 2.0) and np.allclose(ut.values, 2.0)


def test_energy_conservation_and_reversibility():
    g = box()
    u0, u1 = smooth_field(g, 1), smooth_field(g, 2)
    e0 = wave_energy(u0, u1, 1.7)
    u, ut = wave_exact_constant_c(u0, u1, 1.7, 2.3)
    assert abs(wave_energy(u, ut, 1.7) - e0) < 1e-10 * e0
    back, back_t = wave_exact_constant_c(u, ut, 1.7, -2.3)
    assert np.max(np.abs(back.values - u0.values)) < 1e-12 * np.max(np.abs(u0.values))
    assert np.max(np.abs(back_t.values - u1.values)) < 1e-12 * np.max(np.abs(u1.values))


def test_spectral_gradient_of_a_plane_wave():
    g = box(32)
    y1, y2 = g.mesh()
    f = g.like(np.exp(1j * (2 * y1 - 3 * y2)))
    d1, d2 = spectral_gradient(f)
    assert np.allclose(d1.values, 2j * f.values) and np.allclose(d2.values, -3j * f.values)


def test_reference_grid_resolution():
    g = reference_grid([-2, -2.5], [3, 2.5], 2**-6)
    assert all(d & (d - 1) == 0 for d in g.dims)
    assert np.all(g.spacing <= 2 * np.pi * 2**-6 / 8)


def free_packet(y, t, eps, p=0.7):
    # exact Gaussian wave packet of -i eps u_t - eps^2/2 u'' = 0
    x = p * t
    M = 1j / (1 + 1j * t)
    phase = p * (y - x) + 0.5 * p * p * t + 0.5 * M * (y - x) ** 2
    return (1 + 1j * t) ** -0.5 * np.exp(1j * phase / eps)


def test_split_step_free_gaussian_and_mass():
    eps = 2**-6
    g = reference_grid([-4 * np.pi], [4 * np.pi], eps)
    y = g.axes()[0]
    u0 = g.like(free_packet(y, 0.0, eps))
    n = split_step_count(eps, g, 1.0)
    u = schrodinger_split_step(u0, None, eps, 1.0, n)
    assert np.max(np.abs(u.values - free_packet(y, 1.0, eps))) < 1e-6
    V = g.like(np.cos(y).astype(complex))
    v = schrodinger_split_step(u0, V, eps, 1.0, n)
    assert abs(grid_l2(v) - grid_l2(u0)) < 1e-12 * grid_l2(u0)


def test_split_step_rule():
    eps = 2**-4
    g = reference_grid([-np.pi], [np.pi], eps)
    u0 = g.like(np.ones(g.dims))
    V = g.like(np.zeros(g.dims, dtype=complex))
    with pytest.raises(ResolutionError):
        schrodinger_split_step(u0, V, eps, 1.0, 2)
