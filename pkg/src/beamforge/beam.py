"""Gaussian beams of order k = 1, 2, 3.

A beam is carried by a ray x(t) and jets in the offset y = Y - x(t):

* the phase jet phi (degree k+1) with phi(0) = phi0, grad phi(0) = p and
  Hessian M;
* amplitude jets a_j, j < ceil(k/2), of degree k - 2j - 1.

The right-hand side of the ODE hierarchy is generated mechanically. The
phase and amplitudes are lifted to space-time jets Psi(s, y), A_j(s, y)
around (t, x(t)). Their s-slices follow from the eikonal and transport
equations one power of s at a time, and the moving-frame derivative is

    d/dt phi(t, y) = Psi_s(0, y) + xdot . grad phi(y),

truncated to the degree that is kept. For the wave equation

    2 Psi_t A_t + Psi_tt A - c^2 (2 grad Psi . grad A + Lap Psi A) = i Box A_{j-1},

and for the Schroedinger equation

    A_t + grad Psi . grad A + Lap Psi A / 2 = (i/2) Lap A_{j-1}.

All quantities may carry batch axes; families of beams are advanced as one
batch.
"""
from dataclasses import dataclass, field, replace
from math import ceil, log

import numpy as np
from scipy.integrate import RK45
from scipy.special import expit

from . import _kernels
from .errors import (CapabilityError, DomainError, IntegrityError, ResolutionError,
                     SamplingError, ShapeError, StiffnessError)
from .hamiltonians import hamilton_vector_field
from .jets import Jet, jet_space

SKIP_LEVEL = 1e-15


def amp_degrees(k):
    return [k - 2 * j - 1 for j in range(ceil(k / 2))]


def default_eta(k):
    return np.inf if k == 1 else 0.1


# cutoff


def cutoff_profile(r, eta):
    """Radial cutoff R(r) = rho_eta and its first two r-derivatives.

    R = 1 for r <= eta and 0 for r >= 2 eta. In between it is the logistic
    blend f(u) / (f(u) + f(1-u)), f(u) = exp(-1/u), u = (2 eta - r) / eta.
    """
    r = np.asarray(r, dtype=float)
    R = np.ones_like(r)
    dR = np.zeros_like(r)
    d2R = np.zeros_like(r)
    if not np.isfinite(eta):
        return R, dR, d2R
    R[r >= 2 * eta] = 0.0
    m = (r > eta) & (r < 2 * eta)
    if np.any(m):
        u = (2 * eta - r[m]) / eta
        with np.errstate(over="ignore", invalid="ignore"):
            w = 1.0 / (1.0 - u) - 1.0 / u
            sig = expit(w)
            s1 = sig * (1.0 - sig)
            w1 = 1.0 / u**2 + 1.0 / (1.0 - u) ** 2
            w2 = 2.0 / (1.0 - u) ** 3 - 2.0 / u**3
            dS = np.where(s1 > 0, s1 * w1, 0.0)
            d2S = np.where(s1 > 0, s1 * ((1.0 - 2.0 * sig) * w1**2 + w2), 0.0)
        R[m] = sig
        dR[m] = -dS / eta
        d2R[m] = d2S / eta**2
    return R, dR, d2R


def cutoff_derivatives(y, eta):
    """rho, grad rho (..., n) and Laplacian of rho at offsets y (..., n)."""
    y = np.asarray(y, dtype=float)
    n = y.shape[-1]
    r = np.linalg.norm(y, axis=-1)
    R, dR, d2R = cutoff_profile(r, eta)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(r > 0, dR / r, 0.0)
    grad = g[..., None] * y
    lap = d2R + (n - 1) * g
    return R, grad, lap


# states


def _hessian_index(n, degree):
    sp = jet_space(n, degree)
    idx = np.zeros((n, n), dtype=np.int64)
    fac = np.ones((n, n))
    for i in range(n):
        for j in range(n):
            e = [0] * n
            e[i] += 1
            e[j] += 1
            idx[i, j] = sp.index[tuple(e)]
            if i == j:
                fac[i, j] = 2.0
    return idx, fac


def hessian(jet):
    """Symmetric matrix of second derivatives at the expansion point."""
    idx, fac = _hessian_index(jet.n_vars, jet.max_degree)
    return jet.coeffs[..., idx] * fac


def quadratic_jet(phi0, p, M, degree):
    """Jet phi0 + p.y + y.M.y/2 at the given degree (batched)."""
    p = np.asarray(p, dtype=float)
    M = np.asarray(M, dtype=complex)
    n = p.shape[-1]
    batch = np.broadcast_shapes(np.shape(phi0), p.shape[:-1], M.shape[:-2])
    out = Jet.zeros(n, degree, batch)
    out.coeffs[..., 0] = phi0
    out.coeffs[..., 1:n + 1] = p
    idx, fac = _hessian_index(n, degree)
    for i in range(n):
        for j in range(i, n):
            out.coeffs[..., idx[i, j]] = M[..., i, j] * (0.5 if i == j else 1.0)
    return out


@dataclass(frozen=True)
class BeamState:
    """Beam data at one time. Also used for time-derivative records."""

    t: float
    x: np.ndarray
    phase: Jet
    amps: tuple
    order: int
    mode: int = 0

    def __post_init__(self):
        if self.order not in (1, 2, 3):
            raise CapabilityError(f"beam order must be 1, 2 or 3, got {self.order}")
        if self.phase.max_degree != self.order + 1:
            raise ShapeError("phase jet must have degree k + 1")
        degs = amp_degrees(self.order)
        if len(self.amps) != len(degs) or any(
                a.max_degree != d for a, d in zip(self.amps, degs)):
            raise ShapeError(f"amplitude jets must have degrees {degs}")

    @property
    def n(self):
        return self.phase.n_vars

    @property
    def p(self):
        n = self.n
        return self.phase.coeffs[..., 1:n + 1].real

    @property
    def M(self):
        return hessian(self.phase)

    @property
    def phi0(self):
        return self.phase.coeffs[..., 0]

    @property
    def batch_shape(self):
        return self.phase.batch_shape

    def __getitem__(self, idx):
        return BeamState(self.t, self.x[idx], self.phase[idx],
                         tuple(a[idx] for a in self.amps), self.order, self.mode)


def make_state(x, p, M, amps, order, phi0=0.0, t=0.0, mode=0, phase_extra=None):
    """Beam state from ray data. ``amps`` is a list of jets or scalars a_{j,0}."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    phase = quadratic_jet(phi0, p, M, order + 1)
    if phase_extra is not None:
        phase = phase + phase_extra
    jets = []
    for a, d in zip(amps, amp_degrees(order)):
        if isinstance(a, Jet):
            jets.append(a.with_degree(d))
        else:
            jets.append(Jet.constant(a, n, d))
    while len(jets) < len(amp_degrees(order)):
        jets.append(Jet.zeros(n, amp_degrees(order)[len(jets)], phase.batch_shape))
    return BeamState(float(t), x, phase, tuple(jets), order, mode)


def pack(state):
    parts = [state.x.astype(complex), state.phase.coeffs]
    parts += [a.coeffs for a in state.amps]
    batch = state.batch_shape
    return np.concatenate([np.broadcast_to(q, batch + q.shape[-1:]) for q in parts], axis=-1)


def unpack(vec, n, order, t=0.0, mode=0):
    vec = np.asarray(vec)
    sizes = [n, jet_space(n, order + 1).size] + [jet_space(n, d).size for d in amp_degrees(order)]
    cuts = np.cumsum(sizes)[:-1]
    parts = np.split(vec, cuts, axis=-1)
    phase = Jet(n, order + 1, parts[1])
    amps = tuple(Jet(n, d, q) for d, q in zip(amp_degrees(order), parts[2:]))
    return BeamState(t, parts[0].real, phase, amps, order, mode)


def state_size(n, order):
    return n + jet_space(n, order + 1).size + sum(jet_space(n, d).size for d in amp_degrees(order))


# the ODE hierarchy


def _spacetime_tower(model, x, phase, amplitudes, d_psi=None):
    """Lift phase and amplitudes to (s, y) jets solving the local equations.

    Psi has total degree ``d_psi`` (default: phase degree + 1) and A_j has
    total degree deg(a_j) + 1, so the s-slice read off for the moving-frame
    derivative has the degree of the input jet.
    """
    n = phase.n_vars
    nv = n + 1
    yv = tuple(range(1, nv))
    wave = model.is_wave
    J = len(amplitudes)
    if d_psi is None:
        d_psi = phase.max_degree + 1
    q_psi = (3 if J > 1 else 2) if wave else 1
    psi = phase.embed(nv, d_psi, yv)
    for q in range(q_psi):
        Q = [psi.partial(i + 1) for i in range(n)]
        R = model.evaluate(x, Q, yv)
        piece = R.slice(0, q, d_psi - q - 1) * (-1.0 / (q + 1))
        psi = psi + piece.embed(nv, d_psi, yv, shift=(0, q + 1))

    # psi-derived coefficients, truncated per amplitude space on demand
    d_top = amplitudes[0].max_degree + 1
    psi_s = psi.partial(0).truncate(d_top)
    grad_psi = [psi.partial(i + 1).truncate(d_top) for i in range(n)]
    lap_psi = sum((g.partial(i + 1) for i, g in enumerate(grad_psi)), Jet.zeros(nv, d_top))
    psi_ss = psi_s.partial(0) if wave else None
    c2 = inv_rate = None
    if wave:
        c = model.coefficient_jet(x, nv, d_top, yv)
        c2 = c * c
        # 1 / Psi_s(0, y), needed to solve 2 Psi_s A_s = -(rest) slice by slice
        inv_rate = psi.slice(0, 1, d_psi - 1).truncate(d_top - 1).reciprocal()

    amps = []
    source = None
    for j, a in enumerate(amplitudes):
        dA = a.max_degree + 1
        A = a.embed(nv, dA, yv)
        tr = lambda jt: jt.truncate(dA)
        needs_second = wave and j + 1 < J
        n_slices = 2 if needs_second else 1
        for q in range(n_slices):
            gA = [A.partial(i + 1) for i in range(n)]
            dot = sum((tr(gp) * ga for gp, ga in zip(grad_psi, gA)), Jet.zeros(nv, dA))
            if wave:
                res = (tr(psi_s) * A.partial(0)) * 2.0 + tr(psi_ss) * A \
                    - tr(c2) * (dot * 2.0 + tr(lap_psi) * A)
            else:
                res = A.partial(0) + dot + tr(lap_psi) * A * 0.5
            if source is not None:
                res = res - source.with_degree(dA)
            d_new = dA - q - 1
            rq = res.slice(0, q, d_new)
            if wave:
                step = rq * inv_rate.with_degree(d_new) * (-0.5 / (q + 1))
            else:
                step = rq * (-1.0 / (q + 1))
            A = A + step.embed(nv, dA, yv, shift=(0, q + 1))
        amps.append(A)
        if j + 1 < J:
            gA = [A.partial(i + 1) for i in range(n)]
            lapA = sum((g.partial(i + 1) for i, g in enumerate(gA)), Jet.zeros(nv, dA))
            if wave:
                box = A.partial(0).partial(0) - tr(c2) * lapA
                source = box * 1j
            else:
                source = lapA * 0.5j
    return psi, amps


def beam_rhs(model, s):
    """Time derivative of a (batched) beam state."""
    model = model.branch(s.mode)
    k, n = s.order, s.n
    x = np.asarray(s.x, dtype=float)
    p = s.p
    xdot, dHdy = hamilton_vector_field(model, x, p)
    psi, amps = _spacetime_tower(model, x, s.phase, s.amps)
    transport = lambda jt: sum((jt.partial(i) * xdot[..., i] for i in range(n)),
                               Jet.zeros(n, jt.max_degree))
    phase_dot = psi.slice(0, 1, k + 1) + transport(s.phase)
    # the ray equation, kept exact so p stays real
    phase_dot.coeffs[..., 1:n + 1] = -dHdy
    amp_dots = []
    for a, A in zip(s.amps, amps):
        d = a.max_degree
        amp_dots.append(A.slice(0, 1, d) + transport(a))
    return BeamState(s.t, xdot, phase_dot, tuple(amp_dots), k, s.mode)


# integration


def _min_imag_eig(M):
    Mi = np.imag(M)
    if Mi.shape[-1] == 1:
        return Mi[..., 0, 0]
    a, b, d = Mi[..., 0, 0], 0.5 * (Mi[..., 0, 1] + Mi[..., 1, 0]), Mi[..., 1, 1]
    return 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + b * b)


@dataclass
class BeamTrajectory:
    model: object
    times: np.ndarray
    states: list
    rhs: list
    eta: float = np.inf
    stats: dict = field(default_factory=dict)

    @property
    def order(self):
        return self.states[0].order

    @property
    def mode(self):
        return self.states[0].mode

    @property
    def batch_shape(self):
        return self.states[0].batch_shape

    def sample_index(self, t):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-12 * max(1.0, abs(t)):
            raise SamplingError(f"time {t} is not a stored sample")
        return i

    def state_at(self, t):
        return self.states[self.sample_index(t)]

    def rhs_at(self, t):
        return self.rhs[self.sample_index(t)]

    def select(self, idx):
        """Restrict a batched trajectory to a subset of beams."""
        stats = dict(self.stats)
        if "min_imag_eig" in stats:
            stats["min_imag_eig"] = np.asarray(stats["min_imag_eig"])[idx]
        return BeamTrajectory(self.model, self.times, [s[idx] for s in self.states],
                              [r[idx] for r in self.rhs], self.eta, stats)


def _initial_step(fun, t0, y0, f0, rtol, atol, span):
    scale = atol + np.abs(y0) * rtol
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = fun(t0 + h0, y0 + h0 * f0)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def _dopri_segment(fun, t, y, f, t_end, h, rtol, atol, check):
    """Advance with the Dormand-Prince 5(4) pair, max-norm error control."""
    C, A, B, E = RK45.C, RK45.A, RK45.B, RK45.E
    K = np.empty((7,) + y.shape, dtype=y.dtype)
    steps = rejects = 0
    while t < t_end:
        h = min(h, t_end - t)
        if h <= 16 * np.spacing(max(abs(t), 1.0)):
            raise StiffnessError("step size underflow", t)
        K[0] = f
        for i in range(1, 6):
            dy = np.tensordot(A[i, :i], K[:i], axes=1) * h
            K[i] = fun(t + C[i] * h, y + dy)
        y_new = y + h * np.tensordot(B, K[:6], axes=1)
        t_new = t + h if t + h < t_end - 1e-14 * max(1.0, abs(t_end)) else t_end
        f_new = fun(t_new, y_new)
        K[6] = f_new
        err = h * np.tensordot(E, K, axes=1)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.max(np.abs(err) / scale))
        if not np.isfinite(err_norm):
            raise StiffnessError("non-finite error estimate", t)
        if err_norm <= 1.0:
            check(t_new, y_new)
            t, y, f = t_new, y_new, f_new
            steps += 1
            fac = 10.0 if err_norm == 0 else min(10.0, 0.9 * err_norm ** -0.2)
            h *= fac
        else:
            rejects += 1
            h *= max(0.2, 0.9 * err_norm ** -0.2)
    return y, f, h, steps, rejects


def propagate(model, s0, sample_times, tol=1e-9, atol=1e-12, eta=None):
    """Integrate the beam ODEs and store states at ``sample_times``.

    ``s0`` may be batched; all beams share the adaptive step, which is
    controlled by the largest scaled local error over the whole batch.
    """
    times = np.asarray(sample_times, dtype=float)
    if times.ndim != 1 or len(times) < 1:
        raise ValueError("sample_times must be a non-empty list")
    if abs(times[0] - s0.t) > 1e-14:
        raise ValueError("sample_times[0] must equal the initial time")
    if np.any(np.diff(times) <= 0):
        raise ValueError("sample_times must be strictly increasing")
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    model = model.branch(s0.mode)
    if eta is None:
        eta = default_eta(s0.order)
    n, k, mode = s0.n, s0.order, s0.mode
    batch = s0.batch_shape
    y = pack(s0).reshape(-1, state_size(n, k))
    n_beams = y.shape[0]
    shape = y.shape
    idx, fac = _hessian_index(n, k + 1)
    off = n
    min_eig = np.full(n_beams, np.inf)

    def as_state(t, vec):
        return unpack(vec.reshape(shape), n, k, t, mode)

    def fun(t, vec):
        return pack(beam_rhs(model, as_state(t, vec))).reshape(-1)

    def check(t, vec):
        v = vec.reshape(shape)
        M = v[:, off + idx] * fac
        lam = _min_imag_eig(M)
        if not np.all(lam > 0):
            bad = int(np.argmin(lam))
            raise IntegrityError(
                f"Im M lost positive definiteness for beam {bad} (min eigenvalue {lam[bad]:.3e})", t)
        np.minimum(min_eig, lam, out=min_eig)

    yv = y.reshape(-1)
    check(times[0], yv)
    f = fun(times[0], yv)
    states = [as_state(times[0], yv)]
    rhs = [as_state(times[0], f)]
    total_steps = total_rejects = 0
    h = None
    for t0, t1 in zip(times[:-1], times[1:]):
        if h is None:
            h = _initial_step(fun, t0, yv, f, tol, atol, t1 - t0)
        yv, f, h, st, rj = _dopri_segment(fun, t0, yv, f, t1, h, tol, atol, check)
        total_steps += st
        total_rejects += rj
        states.append(as_state(t1, yv))
        rhs.append(as_state(t1, f))
    reshape = lambda s: s if not batch else BeamState(
        s.t, s.x.reshape(batch + (n,)), Jet(n, s.phase.max_degree, s.phase.coeffs.reshape(batch + (-1,))),
        tuple(Jet(n, a.max_degree, a.coeffs.reshape(batch + (-1,))) for a in s.amps), k, mode)
    if batch == ():
        states = [s[0] for s in states]
        rhs = [r[0] for r in rhs]
        min_eig_out = min_eig[0]
    else:
        states = [reshape(s) for s in states]
        rhs = [reshape(r) for r in rhs]
        min_eig_out = min_eig.reshape(batch)
    stats = {"steps": total_steps, "rejected": total_rejects, "tol": tol, "atol": atol,
             "symmetrization_correction": 0.0, "min_imag_eig": min_eig_out}
    return BeamTrajectory(model, times, states, rhs, float(eta), stats)


def eikonal_residual(model, s):
    """Coefficients of d_t phi + H(x + y, grad phi), using the beam's own rhs.

    The phase jet is treated as an exact polynomial, so the residual is
    meaningful through degree k+1, where it vanishes for an exact hierarchy.
    """
    model = model.branch(s.mode)
    r = beam_rhs(model, s)
    n = s.n
    k = s.order
    xdot = r.x
    # partial_t phi at fixed Y = moving-frame derivative minus transport
    phi_t = r.phase - sum((s.phase.partial(i) * xdot[..., i] for i in range(n)),
                          Jet.zeros(n, k + 1))
    Q = [s.phase.partial(i) for i in range(n)]
    H = model.evaluate(s.x, Q, tuple(range(n)))
    return phi_t + H


# field evaluation


def check_resolution(grid, eps):
    if not eps > 0:
        raise DomainError("epsilon must be positive")
    h = float(np.max(grid.spacing))
    if h > np.sqrt(eps) / 4 * (1 + 1e-12):
        raise ResolutionError(
            f"grid spacing {h:.3g} does not resolve sqrt(eps)/4 = {np.sqrt(eps) / 4:.3g}")


def field_polynomials(traj, t, eps):
    """Per-beam polynomial stack used by the compiled evaluation kernel."""
    i = traj.sample_index(t)
    s, r = traj.states[i], traj.rhs[i]
    k, n = s.order, s.n
    deg = k + 1
    sp = jet_space(n, deg)
    B = int(np.prod(s.batch_shape)) if s.batch_shape else 1
    xdot = np.asarray(r.x, dtype=float).reshape(B, n)

    def flat(jet):
        return jet.with_degree(deg).coeffs.reshape(B, sp.size)

    def env(jets):
        out = np.zeros((B, sp.size), dtype=complex)
        for j, a in enumerate(jets):
            out += eps**j * flat(a)
        return out

    def moving(jet):
        return sum((jet.partial(a) * r.x[..., a] for a in range(n)), Jet.zeros(n, jet.max_degree))

    polys = np.zeros((B, 8, sp.size), dtype=complex)
    polys[:, 0] = flat(s.phase)
    polys[:, 1] = env(s.amps)
    polys[:, 2] = flat(r.phase - moving(s.phase))
    polys[:, 3] = env([ra - moving(a) for ra, a in zip(r.amps, s.amps)])
    for a in range(n):
        polys[:, 4 + a] = flat(s.phase.partial(a))
        polys[:, 6 + a] = env([aj.partial(a) for aj in s.amps])
    d0 = k - 1
    lengths = [deg, d0, deg, d0, deg - 1, deg - 1, d0 - 1, d0 - 1]
    plen = np.array([sp.count(d) for d in lengths], dtype=np.int64)
    x = np.asarray(s.x, dtype=float).reshape(B, n)
    lam = _min_imag_eig(hessian(s.phase)).reshape(B)
    return polys, plen, x, xdot, lam


def skip_radius(lam, eps, eta, level=SKIP_LEVEL):
    """Distance beyond which exp(-Im phi / eps) falls below ``level``."""
    r = np.sqrt(2.0 * log(1.0 / level) * eps / np.maximum(lam, 1e-300))
    if np.isfinite(eta):
        r = np.minimum(r, 2.0 * eta)
    return r


def evaluate_beams(polys, plen, x, xdot, lam, weights, eps, eta, grid, want_t, want_g,
                   skip=True):
    """Weighted sum of beam fields on a grid; returns (u, u_t, g0, g1) arrays."""
    n = grid.ndim
    if n == 1:
        ax0 = grid.axes()[0]
        ax1 = np.zeros(1)
        shape = (grid.dims[0], 1)
    else:
        ax0, ax1 = grid.axes()
        shape = grid.dims
    B = x.shape[0]
    centers = np.zeros((B, 2))
    centers[:, :n] = x
    xd = np.zeros((B, 2))
    xd[:, :n] = xdot
    sp = jet_space(n, _degree_of(n, polys.shape[-1]))
    exps = np.zeros((sp.size, 2), dtype=np.int64)
    exps[:, :n] = sp.exponents
    if skip:
        radius = skip_radius(lam, eps, eta)
    else:
        radius = np.full(B, 2.0 * eta if np.isfinite(eta) else np.inf)
    # no beam reaches farther than the box corner furthest from its center
    mid = 0.5 * (grid.lower + grid.upper)
    reach = np.linalg.norm(x - mid, axis=-1) + 0.5 * np.linalg.norm(grid.upper - grid.lower)
    radius = np.minimum(radius, reach * (1 + 1e-12) + float(np.max(grid.spacing)))
    out_u = np.zeros(shape, dtype=complex)
    out_t = np.zeros(shape if want_t else (1, 1), dtype=complex)
    out_g0 = np.zeros(shape if want_g else (1, 1), dtype=complex)
    out_g1 = np.zeros(shape if want_g else (1, 1), dtype=complex)
    _kernels.accumulate(ax0, ax1, centers, np.asarray(radius, dtype=float),
                        np.ascontiguousarray(polys), plen, exps,
                        np.asarray(weights, dtype=complex), float(eta), 1.0 / eps, xd,
                        bool(want_t), bool(want_g), out_u, out_t, out_g0, out_g1)
    dims = grid.dims
    u = out_u.reshape(dims)
    ut = out_t.reshape(dims) if want_t else None
    grads = None
    if want_g:
        grads = [out_g0.reshape(dims)] + ([out_g1.reshape(dims)] if n == 2 else [])
    return u, ut, grads


def _degree_of(n, size):
    d = 0
    while jet_space(n, d).size < size:
        d += 1
    return d


def package_fields(grid, t, eps, u, ut, grads, want):
    meta = {"time": t, "epsilon": eps}
    fu = grid.like(u, role="u", **meta)
    if want == "value":
        return fu
    fut = grid.like(ut, role="u_t", **meta) if ut is not None else None
    fg = [grid.like(g, role=f"grad_{i}", **meta) for i, g in enumerate(grads)] \
        if grads is not None else None
    if want == "value+time_derivative":
        return fu, fut
    if want == "value+gradient":
        return fu, fg
    return fu, fut, fg


WANTS = ("value", "value+time_derivative", "value+gradient", "all")


def beam_field(traj, t, eps, grid, want="value", skip=True):
    """Field of a single (unbatched) beam, optionally with d_t and gradient."""
    if want not in WANTS:
        raise ValueError(f"want must be one of {WANTS}")
    check_resolution(grid, eps)
    if grid.ndim != traj.states[0].n:
        raise ShapeError("grid dimension does not match the beam")
    polys, plen, x, xdot, lam = field_polynomials(traj, t, eps)
    weights = np.ones(x.shape[0], dtype=complex)
    want_t = want in ("value+time_derivative", "all")
    want_g = want in ("value+gradient", "all")
    u, ut, grads = evaluate_beams(polys, plen, x, xdot, lam, weights, eps, traj.eta, grid,
                                  want_t, want_g, skip)
    return package_fields(grid, t, eps, u, ut, grads, want)


# PDE residual


def _rk4_step(model, s, dt):
    def f(st):
        return pack(beam_rhs(model, st))
    n, k = s.n, s.order
    y0 = pack(s)
    k1 = f(s)
    k2 = f(unpack(y0 + 0.5 * dt * k1, n, k, s.t + 0.5 * dt, s.mode))
    k3 = f(unpack(y0 + 0.5 * dt * k2, n, k, s.t + 0.5 * dt, s.mode))
    k4 = f(unpack(y0 + dt * k3, n, k, s.t + dt, s.mode))
    return unpack(y0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), n, k, s.t + dt, s.mode)


def _local_parts(s, r, Y, eps, eta):
    """Envelope W, phase Psi and their first derivatives at absolute points Y."""
    n = s.n
    y = Y - s.x
    rho, grho, lrho = cutoff_derivatives(y, eta)
    xdot = np.asarray(r.x, dtype=float)
    psi = s.phase.eval(y)
    gpsi = [s.phase.partial(i).eval(y) for i in range(n)]
    lpsi = sum(s.phase.partial(i).partial(i).eval(y) for i in range(n))
    psi_t = r.phase.eval(y) - sum(xdot[i] * gpsi[i] for i in range(n))
    W = np.zeros(y.shape[:-1], dtype=complex)
    Wt = np.zeros_like(W)
    gW = [np.zeros_like(W) for _ in range(n)]
    lW = np.zeros_like(W)
    for j, (a, ra) in enumerate(zip(s.amps, r.amps)):
        e = eps**j
        av = a.eval(y)
        ga = [a.partial(i).eval(y) for i in range(n)]
        la = sum(a.partial(i).partial(i).eval(y) for i in range(n))
        at = ra.eval(y) - sum(xdot[i] * ga[i] for i in range(n))
        rho_t = -sum(xdot[i] * grho[..., i] for i in range(n))
        W += e * rho * av
        Wt += e * (rho_t * av + rho * at)
        for i in range(n):
            gW[i] += e * (grho[..., i] * av + rho * ga[i])
        lW += e * (lrho * av + 2 * sum(grho[..., i] * ga[i] for i in range(n)) + rho * la)
    return dict(W=W, Wt=Wt, gW=gW, lW=lW, psi=psi, psi_t=psi_t, gpsi=gpsi, lpsi=lpsi)


def _second_time_derivatives(model, s, Y, eps, eta):
    """(Psi_tt, W_tt) by Richardson-extrapolated centered differences."""
    dt = 1e-4 * min(1.0, np.sqrt(eps))

    def centered(h):
        sp = _rk4_step(model, s, h)
        sm = _rk4_step(model, s, -h)
        pp = _local_parts(sp, beam_rhs(model, sp), Y, eps, eta)
        pm = _local_parts(sm, beam_rhs(model, sm), Y, eps, eta)
        return ((pp["psi_t"] - pm["psi_t"]) / (2 * h), (pp["Wt"] - pm["Wt"]) / (2 * h))

    p1, w1 = centered(dt)
    p2, w2 = centered(dt / 2)
    psi_tt = (4 * p2 - p1) / 3
    W_tt = (4 * w2 - w1) / 3
    richardson_gap = max(float(np.max(np.abs(p2 - p1), initial=0)),
                         float(np.max(np.abs(w2 - w1), initial=0)))
    return psi_tt, W_tt, richardson_gap


def residual_field(traj, model, t, eps, Y, weight=1.0):
    """P[v] at points Y (..., n) for one unbatched beam (wave: c constant)."""
    model = model.branch(traj.mode)
    i = traj.sample_index(t)
    s, r = traj.states[i], traj.rhs[i]
    parts = _local_parts(s, r, Y, eps, traj.eta)
    n = s.n
    ie = 1j / eps
    W, Wt, gW, lW = parts["W"], parts["Wt"], parts["gW"], parts["lW"]
    psi_t, gpsi, lpsi = parts["psi_t"], parts["gpsi"], parts["lpsi"]
    dot_pw = sum(gpsi[a] * gW[a] for a in range(n))
    dot_pp = sum(gpsi[a] * gpsi[a] for a in range(n))
    lap_bracket = lW + 2 * ie * dot_pw + (ie * lpsi + ie**2 * dot_pp) * W
    carrier = np.exp(ie * parts["psi"])
    if model.is_wave:
        if model.kind != "wave_constant_c":
            raise CapabilityError("residuals need a constant-coefficient operator")
        psi_tt, W_tt, _ = _second_time_derivatives(model, s, Y, eps, traj.eta)
        tt_bracket = W_tt + 2 * ie * psi_t * Wt + (ie * psi_tt + ie**2 * psi_t**2) * W
        bracket = tt_bracket - model.c**2 * lap_bracket
    else:
        V = model.coefficient_value(Y)
        bracket = -1j * eps * (Wt + ie * psi_t * W) - 0.5 * eps**2 * lap_bracket + V * W
    return weight * carrier * bracket


def pde_residual_norm(traj, model, t, eps, grid, skip=True):
    """Discrete L2 norm of the PDE applied to a beam or a beam family.

    Each beam is evaluated only on nodes inside its skip radius.
    """
    check_resolution(grid, eps)
    if hasattr(traj, "members"):
        members = traj.members()
    else:
        if traj.batch_shape:
            raise ShapeError("pass a single beam or a family")
        members = [(traj, 1.0)]
    Y = grid.points().reshape(-1, grid.ndim)
    total = np.zeros(len(Y), dtype=complex)
    for tr, w in members:
        s = tr.state_at(t)
        if skip:
            rad = float(skip_radius(_min_imag_eig(s.M), eps, tr.eta))
            idx = np.nonzero(np.sum((Y - s.x) ** 2, axis=-1) <= rad * rad)[0]
        else:
            idx = np.arange(len(Y))
        total[idx] += residual_field(tr, model, t, eps, Y[idx], w)
    return float(np.sqrt(np.sum(np.abs(total) ** 2) * grid.cell_volume))
