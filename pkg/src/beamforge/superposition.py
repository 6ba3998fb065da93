"""Beam families over a midpoint quadrature of K0 and their superposition

    u_k(t, y) = (2 pi eps)^{-n/2} sum_nodes w * v_k(t, y; z).
"""
from dataclasses import dataclass, field

import numpy as np

from .beam import (WANTS, check_resolution, default_eta, evaluate_beams, field_polynomials,
                   package_fields, propagate)
from .errors import ResolutionError, ShapeError
from .initdata import build_initial_beam

PRUNE_LEVEL = 1e-14


def default_spacing(eps, factor=0.5, eta=np.inf):
    """h_z = factor * sqrt(eps), capped at eta / 2 for finite cutoffs."""
    h = factor * np.sqrt(eps)
    return min(h, eta / 2) if np.isfinite(eta) else h


def midpoint_nodes(lower, upper, h):
    """Midpoint-rule nodes with spacing <= h on a box; returns (nodes, weights, steps)."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    counts = np.ceil((upper - lower) / h - 1e-9).astype(int)
    steps = (upper - lower) / counts
    axes = [lo + (np.arange(c) + 0.5) * s for lo, c, s in zip(lower, counts, steps)]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lower))
    weights = np.full(len(nodes), float(np.prod(steps)))
    return nodes, weights, steps


@dataclass
class BeamFamily:
    nodes: np.ndarray
    weights: np.ndarray
    trajectories: list
    node_index: list
    k: int
    eps: float
    eta: float
    modes: list
    h_z: float
    stats: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.nodes.shape[-1]

    @property
    def times(self):
        return self.trajectories[0].times if self.trajectories else np.array([])

    @property
    def prefactor(self):
        return (2 * np.pi * self.eps) ** (-self.n / 2)

    def members(self):
        """(single-beam trajectory, total weight) pairs, in fixed order."""
        out = []
        for traj, idx in zip(self.trajectories, self.node_index):
            for b, node in enumerate(idx):
                out.append((traj.select(b), self.weights[node] * self.prefactor))
        return out


def build_family(data, model, k, eps, eta=None, spacing=0.5, times=(0.0,), tol=1e-9,
                 atol=1e-12, h_z=None):
    """Initialize and propagate the beams of all modes on a midpoint z-grid.

    ``spacing`` is the factor in h_z = spacing * sqrt(eps); an explicit
    ``h_z`` overrides it. Beams whose amplitude jets vanish are dropped.
    """
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    if eta is None:
        eta = default_eta(k)
    if h_z is None:
        h_z = default_spacing(eps, spacing, eta)
    limit = min(np.sqrt(eps) / 2, eta / 2 if np.isfinite(eta) else np.inf)
    if h_z > limit * (1 + 1e-12):
        raise ResolutionError(f"h_z = {h_z:.3g} exceeds the limit {limit:.3g}")
    nodes, weights, _ = midpoint_nodes(data.lower, data.upper, h_z)
    trajectories, node_index, modes = [], [], []
    pruned = 0
    for mode in range(model.n_modes):
        s0 = build_initial_beam(data, model, nodes, k, mode)
        size = np.max(np.abs(np.concatenate([a.coeffs for a in s0.amps], axis=-1)), axis=-1)
        keep = np.nonzero(size >= PRUNE_LEVEL)[0]
        pruned += len(nodes) - len(keep)
        if len(keep) == 0:
            continue
        traj = propagate(model, s0[keep], times, tol, atol, eta)
        trajectories.append(traj)
        node_index.append(keep)
        modes.append(mode)
    stats = {"pruned": pruned, "beams": int(sum(len(i) for i in node_index)),
             "steps": [t.stats["steps"] for t in trajectories]}
    return BeamFamily(nodes, weights, trajectories, node_index, k, float(eps), float(eta),
                      modes, float(h_z), stats)


def superpose(family, t, grid, want="value", skip=True):
    """Superposed field (and optional d_t, gradient) at a stored time."""
    if want not in WANTS:
        raise ValueError(f"want must be one of {WANTS}")
    eps = family.eps
    check_resolution(grid, eps)
    if grid.ndim != family.n:
        raise ShapeError("grid dimension does not match the family")
    parts = [field_polynomials(tr, t, eps) for tr in family.trajectories]
    want_t = want in ("value+time_derivative", "all")
    want_g = want in ("value+gradient", "all")
    if not parts:
        zero = np.zeros(grid.dims, dtype=complex)
        return package_fields(grid, t, eps, zero, zero if want_t else None,
                              [zero] * grid.ndim if want_g else None, want)
    size = max(p[0].shape[-1] for p in parts)
    polys = np.concatenate([np.pad(p[0], ((0, 0), (0, 0), (0, size - p[0].shape[-1])))
                            for p in parts])
    plen = parts[0][1]
    x = np.concatenate([p[2] for p in parts])
    xdot = np.concatenate([p[3] for p in parts])
    lam = np.concatenate([p[4] for p in parts])
    w = np.concatenate([family.weights[idx] for idx in family.node_index]) * family.prefactor
    u, ut, grads = evaluate_beams(polys, plen, x, xdot, lam, w.astype(complex), eps, family.eta,
                                  grid, want_t, want_g, skip)
    return package_fields(grid, t, eps, u, ut, grads, want)
