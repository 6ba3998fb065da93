"""Spectral reference solutions on periodic boxes.

The wave equation u_tt = c^2 Lap u is advanced exactly in Fourier space.
The semiclassical Schroedinger equation -i eps u_t - eps^2/2 Lap u + V u = 0
is advanced by Strang splitting with an exact kinetic step.
"""
import numpy as np

from .errors import ResolutionError, ShapeError
from .fields import SampledField, grid_for_box


def resolution_spacing(eps, points_per_wavelength=8):
    """Largest grid spacing allowed for wavelength 2 pi eps."""
    return 2 * np.pi * eps / points_per_wavelength


def reference_grid(lower, upper, eps, points_per_wavelength=8):
    return grid_for_box(lower, upper, resolution_spacing(eps, points_per_wavelength))


def _abs_wavenumber(f):
    ks = np.meshgrid(*f.wavenumbers(), indexing="ij")
    return np.sqrt(sum(k * k for k in ks)), ks


def wave_exact_constant_c(u0, u1, c, t):
    """(u, u_t) at time t from u(0) = u0, u_t(0) = u1."""
    u0.check_geometry(u1)
    if not c > 0:
        raise ValueError("wave speed must be positive")
    kabs, _ = _abs_wavenumber(u0)
    w = c * kabs
    a = np.fft.fftn(u0.values)
    b = np.fft.fftn(u1.values)
    cos = np.cos(w * t)
    sin = np.sin(w * t)
    zero = w == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        sinc = np.where(zero, t, sin / np.where(zero, 1.0, w))
    uh = cos * a + sinc * b
    uth = -w * sin * a + cos * b
    meta = {k: v for k, v in u0.meta.items() if k not in ("time", "role")}
    u = u0.like(np.fft.ifftn(uh), role="u", time=t, **{k: v for k, v in meta.items()})
    ut = u0.like(np.fft.ifftn(uth), role="u_t", time=t, **meta)
    return u, ut


def spectral_gradient(f):
    """Gradient fields of a periodic sampled field."""
    fh = np.fft.fftn(f.values)
    _, ks = _abs_wavenumber(f)
    return [f.like(np.fft.ifftn(1j * k * fh), role=f"grad_{i}") for i, k in enumerate(ks)]


def wave_energy(u, ut, c=1.0):
    """Continuous energy integral of |u_t|^2/c^2 + |grad u|^2, computed spectrally."""
    kabs, _ = _abs_wavenumber(u)
    N = np.prod(u.dims)
    uh = np.fft.fftn(u.values)
    uth = np.fft.fftn(ut.values)
    # Parseval: sum |f|^2 h^n = vol / N^2 * sum |f_hat|^2
    scale = u.volume / N**2
    return float(scale * (np.sum(np.abs(uth) ** 2) / c**2 + np.sum((kabs * np.abs(uh)) ** 2)))


def schrodinger_split_step(u0, V, eps, t, n_steps):
    """Strang splitting: half potential, exact kinetic, half potential."""
    if V is not None:
        u0.check_geometry(V)
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    dt = t / n_steps
    h = float(np.min(u0.spacing))
    if abs(dt) > eps * h * (1 + 1e-12):
        raise ResolutionError(f"time step {dt:.3g} exceeds eps * h = {eps * h:.3g}")
    kabs, _ = _abs_wavenumber(u0)
    kinetic = np.exp(-0.5j * eps * kabs**2 * dt)
    if V is None:
        half = None
    else:
        half = np.exp(-0.5j * np.real(V.values) * dt / eps)
    psi = u0.values.astype(complex)
    for _ in range(n_steps):
        if half is not None:
            psi = psi * half
        psi = np.fft.ifftn(kinetic * np.fft.fftn(psi))
        if half is not None:
            psi = psi * half
    return u0.like(psi, role="u", time=t)


def split_step_count(eps, grid, t):
    """Smallest step count meeting dt <= eps * h."""
    h = float(np.min(grid.spacing))
    return max(1, int(np.ceil(abs(t) / (eps * h) - 1e-9)))
