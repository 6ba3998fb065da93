"""WKB initial data and initial beam states.

Data are given by jet providers ``provider(z, order) -> Jet`` for the real
phase Phi and the amplitudes A_{l,j}. For the wave equation the data are

    u(0)   = sum_j eps^j A_{0,j} exp(i Phi / eps)
    u_t(0) = eps^{-1} sum_j eps^j A_{1,j} exp(i Phi / eps)

either with explicit A_{1,j} or synthesized from a one-way flag, in which case
u_t is the exact time derivative of the one-way solution with phase rate
Phi_t = +|grad Phi| (flag +1) or -|grad Phi| (flag -1).
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .beam import BeamState, _spacetime_tower, amp_degrees, beam_rhs
from .errors import ConditioningError, DomainError, ShapeError
from .fields import SampledField
from .hamiltonians import mode_roots
from .jets import Jet, jet_variables


@dataclass(frozen=True)
class WkbData:
    lower: tuple
    upper: tuple
    phase: Callable
    amps: tuple
    rates: tuple = ()
    one_way: Optional[int] = None
    min_grad: float = 1e-3
    name: str = "custom"

    @property
    def n(self):
        return len(self.lower)

    @property
    def n_terms(self):
        return len(self.amps)

    @property
    def volume(self):
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def contains(self, z):
        z = np.asarray(z, dtype=float)
        return np.all((z >= np.asarray(self.lower)) & (z <= np.asarray(self.upper)), axis=-1)

    def amp_jet(self, j, z, degree):
        n = self.n
        z = np.asarray(z, dtype=float)
        if j >= len(self.amps) or self.amps[j] is None or degree < 0:
            return Jet.zeros(n, max(degree, 0), z.shape[:-1])
        return self.amps[j](z, degree)

    def rate_jet(self, j, z, degree):
        z = np.asarray(z, dtype=float)
        if j >= len(self.rates) or self.rates[j] is None:
            return Jet.zeros(self.n, max(degree, 0), z.shape[:-1])
        return self.rates[j](z, degree)


def vandermonde_split(taus, rhs):
    """Solve sum_l (i tau_l)^r a_l = rhs_r, r = 0..m-1 (rhs may be batched)."""
    taus = np.asarray(taus, dtype=float)
    rhs = np.asarray(rhs, dtype=complex)
    m = taus.shape[-1]
    if rhs.shape[-1] != m:
        raise ShapeError("rhs length must equal the number of roots")
    if m == 1:
        return rhs.copy()
    scale = np.max(np.abs(taus), axis=-1)
    gaps = np.where(np.eye(m, dtype=bool), np.inf, np.abs(taus[..., :, None] - taus[..., None, :]))
    if np.any(np.min(gaps, axis=(-2, -1)) < 1e-8 * scale):
        raise ConditioningError("mode roots are nearly coincident")
    V = (1j * taus[..., None, :]) ** np.arange(m)[:, None]
    return np.linalg.solve(V, rhs[..., None])[..., 0]


def _beam_phase(data, z, order):
    phase = data.phase(z, order + 1)
    # phi(0) = Phi-Taylor(z) + i |y|^2 / 2
    n = data.n
    for i in range(n):
        e = [0] * n
        e[i] = 2
        phase.coeffs[..., phase.space.index[tuple(e)]] += 0.5j
    return phase


def _check_data(data, model, z):
    if z.shape[-1] != data.n:
        raise ShapeError("z must have the data's dimension")
    if not np.all(data.contains(z)):
        raise DomainError("initial point outside K0")
    if model.is_wave:
        grad = data.phase(z, 1).coeffs[..., 1:].real
        if np.any(np.linalg.norm(grad, axis=-1) < data.min_grad):
            raise DomainError("|grad Phi| below the lower bound")


def build_initial_beam(data, model, z, k, mode=0):
    """Beam state at t = 0 for node(s) z and the given mode."""
    z = np.asarray(z, dtype=float)
    _check_data(data, model, z)
    n = data.n
    degs = amp_degrees(k)
    phase = _beam_phase(data, z, k)
    batch = phase.batch_shape
    zeros = [Jet.zeros(n, d, batch) for d in degs]

    if not model.is_wave:
        amps = tuple(data.amp_jet(j, z, d).with_degree(d) for j, d in enumerate(degs))
        return BeamState(0.0, z.copy(), phase, amps, k, 0)

    if data.one_way is not None:
        active = 0 if data.one_way > 0 else 1
        if mode != active:
            return BeamState(0.0, z.copy(), phase, tuple(zeros), k, mode)
        amps = tuple(data.amp_jet(j, z, d).with_degree(d) for j, d in enumerate(degs))
        return BeamState(0.0, z.copy(), phase, amps, k, mode)

    return _explicit_split(data, model, z, k, phase)[mode]


def _explicit_split(data, model, z, k, phase):
    """Per-degree Vandermonde matching for explicit (A_0, A_1) data."""
    n = data.n
    degs = amp_degrees(k)
    d0 = degs[0]
    p = phase.coeffs[..., 1:n + 1].real
    taus = mode_roots(model, z, p)
    m = taus.shape[-1]
    batch = phase.batch_shape
    # phase rates Psi_s(0, y) of each mode at t = 0
    rates = []
    for ell in range(m):
        probe = BeamState(0.0, z, phase, tuple(Jet.zeros(n, d, batch) for d in degs), k, ell)
        psi, _ = _spacetime_tower(model.branch(ell), z, phase, probe.amps)
        rates.append(psi.slice(0, 1, k + 1).truncate(d0) - taus[..., ell])
    A0 = data.amp_jet(0, z, d0).with_degree(d0)
    A1 = data.rate_jet(0, z, d0).with_degree(d0)
    a = [Jet.zeros(n, d0, batch) for _ in range(m)]
    sp = A0.space
    for d in range(d0 + 1):
        lo, hi = sp.offsets[d], sp.offsets[d + 1]
        corr = sum((1j * (rates[ell] * a[ell])).coeffs[..., lo:hi] for ell in range(m))
        rhs = np.stack([A0.coeffs[..., lo:hi], A1.coeffs[..., lo:hi] - corr], axis=-1)
        sol = vandermonde_split(taus[..., None, :], rhs)
        for ell in range(m):
            a[ell].coeffs[..., lo:hi] = sol[..., ell]
    states = []
    for ell in range(m):
        amps = [a[ell]] + [Jet.zeros(n, d, batch) for d in degs[1:]]
        states.append(BeamState(0.0, z.copy(), phase, tuple(amps), k, ell))
    if len(degs) > 1:
        # sequential j = 1: match eps^0 of u and u_t at y = z
        lower_t = 0.0
        for ell in range(m):
            r = beam_rhs(model, states[ell])
            xdot = r.x
            grad0 = np.stack([states[ell].amps[0].partial(i).coeffs[..., 0] for i in range(n)], -1)
            lower_t = lower_t + r.amps[0].coeffs[..., 0] - np.sum(xdot * grad0, axis=-1)
        rhs = np.stack([data.amp_jet(1, z, 0).coeffs[..., 0],
                        data.rate_jet(1, z, 0).coeffs[..., 0] - lower_t], axis=-1)
        sol = vandermonde_split(taus, rhs)
        for ell in range(m):
            amps = list(states[ell].amps)
            amps[1] = Jet.constant(sol[..., ell], n, degs[1])
            states[ell] = BeamState(0.0, z.copy(), phase, tuple(amps), k, ell)
    return states


# sampled data


def sample_initial_fields(data, model, eps, grid, chunk=32768, threshold=1e-17):
    """u(0) and u_t(0) (None for Schroedinger) of the WKB data on a grid."""
    if not eps > 0:
        raise DomainError("epsilon must be positive")
    Y = grid.points().reshape(-1, data.n)
    n_terms = max(data.n_terms, 1)
    phi = data.phase(Y, 0).coeffs[..., 0].real
    env = np.zeros(len(Y), dtype=complex)
    for j in range(n_terms):
        env += eps**j * data.amp_jet(j, Y, 0).coeffs[..., 0]
    carrier = np.exp(1j * phi / eps)
    u0 = grid.like((env * carrier).reshape(grid.dims), role="u", time=0.0, epsilon=eps)
    if not model.is_wave:
        return u0, None
    rate = np.zeros(len(Y), dtype=complex)
    if data.one_way is None:
        for j in range(max(len(data.rates), 1)):
            rate += eps ** (j - 1) * data.rate_jet(j, Y, 0).coeffs[..., 0]
    else:
        branch = model.branch(0 if data.one_way > 0 else 1)
        scale = np.max(np.abs(env)) if env.size else 0.0
        live = np.nonzero(np.abs(env) > threshold * scale)[0]
        for start in range(0, len(live), chunk):
            sel = live[start:start + chunk]
            rate[sel] = _one_way_rate(data, branch, Y[sel], eps)
    u1 = grid.like((rate * carrier).reshape(grid.dims), role="u_t", time=0.0, epsilon=eps)
    return u0, u1


def _one_way_rate(data, branch, Y, eps):
    """exp(-i Phi/eps) d_t u at t = 0 for the one-way solution, at points Y."""
    # smallest tower giving A_{1,t} at y = 0: Psi to total degree 3,
    # A_0 to total degree 2 (two s-slices), A_1 to total degree 1
    phase = data.phase(Y, 3)
    amps = (data.amp_jet(0, Y, 1).with_degree(1), data.amp_jet(1, Y, 0).with_degree(0))
    psi, A = _spacetime_tower(branch, Y, phase, amps, d_psi=3)
    phi_t = psi.slice(0, 1, 0).coeffs[..., 0]
    out = np.zeros(len(Y), dtype=complex)
    for j, (a, Aj) in enumerate(zip(amps, A)):
        out += eps**j * (1j / eps * phi_t * a.coeffs[..., 0] + Aj.slice(0, 1, 0).coeffs[..., 0])
    return out


# built-in data sets


def _cusp_phase(z, order):
    y1, y2 = jet_variables(z, order)
    return -y1 + y2 * y2


def _gaussian_amp(z, order):
    ys = jet_variables(z, order)
    r2 = ys[0] * ys[0]
    for y in ys[1:]:
        r2 = r2 + y * y
    return (r2 * -10.0).exp()


def _unit_amp(z, order):
    z = np.asarray(z, dtype=float)
    return Jet.constant(np.ones(z.shape[:-1]), z.shape[-1], order)


def _half_square_phase(z, order):
    (y,) = jet_variables(z, order)
    return y * y * 0.5


def cusp_data(half_width=1.25):
    """Phi = -y1 + y2^2, A = exp(-10|y|^2), one-way data with Phi_t = +|grad Phi|.

    The Gaussian is below 2e-7 on the boundary of the default K0 and its
    L2 mass outside is below 1e-15 of the total.
    """
    h = float(half_width)
    return WkbData((-h, -h), (h, h), _cusp_phase, (_gaussian_amp,), one_way=+1, name="cusp")


def single_beam_data():
    """Data whose beam at z = 0 has p = (-1, 0), M = diag(i, 2+i), a = 1."""
    return WkbData((-0.5, -0.5), (0.5, 0.5), _cusp_phase, (_unit_amp,), one_way=+1,
                   name="single_beam")


def schrodinger_data(half_width=1.5):
    """Phi = y^2/2, A = exp(-10 y^2) in one dimension."""
    h = float(half_width)
    return WkbData((-h,), (h,), _half_square_phase, (_gaussian_amp,), name="schrodinger")


def single_beam_state(k, model=None):
    """Initial beam of the single-beam study: z = 0, H = -|p|."""
    from .hamiltonians import wave_constant_c
    model = model or wave_constant_c(1.0, 2, -1)
    return build_initial_beam(single_beam_data(), model, np.zeros(2), k, 0)
