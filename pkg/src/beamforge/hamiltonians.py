"""Hamiltonian models and their local jet expansions.

Three kinds are supported:

* ``wave_constant_c``: H = sigma * c * |p|
* ``wave_variable_c``: H = sigma * c(y) * |p|, with c given by a jet provider
* ``schrodinger``: H = |p|^2 / 2 + V(y), with V given by a jet provider

A jet provider is a pure function ``provider(point, order) -> Jet`` returning
the Taylor jet (n variables, degree ``order``) of the coefficient about
``point``. ``point`` may carry batch axes, shape (..., n).

Wave operators have two modes. They are ordered so that mode 0 has
tau = +c|p| (the branch H = -c|p|) and mode 1 has tau = -c|p|.
"""
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import CapabilityError, DegenerateMomentumError, ShapeError
from .jets import Jet, jet_variables

MAX_ORDER = 5
KINDS = ("wave_constant_c", "wave_variable_c", "schrodinger")


@dataclass(frozen=True)
class HamiltonianModel:
    kind: str
    n: int
    c: float = 1.0
    sigma: int = -1
    speed: Optional[Callable] = None
    potential: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CapabilityError(f"unknown Hamiltonian kind {self.kind!r}")
        if self.n not in (1, 2):
            raise CapabilityError("only n = 1 or n = 2 is supported")
        if self.kind == "wave_constant_c" and not self.c > 0:
            raise ValueError("wave speed must be positive")
        if self.sigma not in (-1, 1):
            raise ValueError("branch sign must be +1 or -1")

    @property
    def is_wave(self):
        return self.kind != "schrodinger"

    @property
    def n_modes(self):
        return 2 if self.is_wave else 1

    @property
    def mode(self):
        """Index of this model's branch in the mode ordering."""
        if not self.is_wave:
            return 0
        return 0 if self.sigma < 0 else 1

    def branch(self, mode):
        """The single-mode Hamiltonian H_mode of this operator."""
        if not 0 <= mode < self.n_modes:
            raise CapabilityError(f"mode {mode} out of range for {self.kind}")
        if not self.is_wave:
            return self
        return replace(self, sigma=-1 if mode == 0 else 1)

    # coefficient jets

    def coefficient_jet(self, x, n_vars, degree, y_vars):
        """Jet of c(x + y) (wave) or V(x + y) (Schroedinger) in a larger space.

        ``y_vars`` names the variables of the target space that carry the
        spatial offset y. Returns None when the coefficient is constant and
        zero (V = 0) so callers can skip work.
        """
        x = np.asarray(x, dtype=float)
        if self.kind == "wave_constant_c":
            return Jet.constant(np.full(x.shape[:-1], self.c), n_vars, degree)
        provider = self.speed if self.kind == "wave_variable_c" else self.potential
        if provider is None:
            return None
        local = provider(x, degree)
        return local.embed(n_vars, degree, y_vars)

    def coefficient_value(self, x):
        """c(x) or V(x) at (batched) points."""
        x = np.asarray(x, dtype=float)
        jet = self.coefficient_jet(x, self.n, 0, tuple(range(self.n)))
        if jet is None:
            return np.zeros(x.shape[:-1])
        return jet.coeffs[..., 0].real

    def check_momentum(self, p):
        if self.is_wave:
            norm = np.linalg.norm(np.asarray(p, dtype=float), axis=-1)
            if not np.all(norm > 0):
                raise DegenerateMomentumError("wave Hamiltonian needs |p| > 0")

    def evaluate(self, x, Q, y_vars):
        """H(x + y, Q) as a jet, where Q is a list of n momentum jets."""
        if len(Q) != self.n:
            raise ShapeError(f"expected {self.n} momentum jets, got {len(Q)}")
        nv, deg = Q[0].n_vars, Q[0].max_degree
        sq = Q[0] * Q[0]
        for q in Q[1:]:
            sq = sq + q * q
        coef = self.coefficient_jet(x, nv, deg, y_vars)
        if self.is_wave:
            norm = sq.sqrt()
            if self.kind == "wave_constant_c":
                return norm * (self.sigma * self.c)
            return (coef * norm) * self.sigma
        h = sq * 0.5
        return h if coef is None else h + coef


def wave_constant_c(c=1.0, n=2, sigma=-1):
    return HamiltonianModel("wave_constant_c", n, c=float(c), sigma=sigma)


def wave_variable_c(speed, n=2, sigma=-1):
    return HamiltonianModel("wave_variable_c", n, sigma=sigma, speed=speed)


def schrodinger(potential=None, n=1):
    return HamiltonianModel("schrodinger", n, potential=potential)


def zero_potential(point, order):
    point = np.asarray(point, dtype=float)
    return Jet.zeros(point.shape[-1], order, point.shape[:-1])


def cosine_potential(point, order):
    """V(y) = sum_i cos(y_i)."""
    ys = jet_variables(point, order)
    out = ys[0].cos()
    for y in ys[1:]:
        out = out + y.cos()
    return out


def phase_space_jet(model, x, p, order):
    """Taylor jet of H(x + dy, p + dp) in 2n variables (dy first, then dp)."""
    if order > MAX_ORDER:
        raise CapabilityError(f"order {order} exceeds supported maximum {MAX_ORDER}")
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    n = model.n
    if x.shape[-1] != n or p.shape[-1] != n:
        raise ShapeError("x and p must have length n")
    model.check_momentum(p)
    Q = [Jet.variable(n + i, 2 * n, order, p[..., i]) for i in range(n)]
    return model.evaluate(x, Q, tuple(range(n)))


def hamilton_vector_field(model, x, p):
    """(dH/dp, dH/dy) at (batched) phase-space points, both real."""
    h = phase_space_jet(model, x, p, 1)
    n = model.n
    grad = h.coeffs[..., 1:].real
    return grad[..., n:], grad[..., :n]


def mode_roots(model, x, p):
    """tau_l = -H_l(x, p) for every mode, in the documented order."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    model.check_momentum(p)
    if model.is_wave:
        cp = model.coefficient_value(x) * np.linalg.norm(p, axis=-1)
        return np.stack([cp, -cp], axis=-1)
    v = model.coefficient_value(x)
    return (-(0.5 * np.sum(p * p, axis=-1) + v))[..., None]
