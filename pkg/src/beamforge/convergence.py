"""Epsilon sweeps, rate fits and flow checks."""
import logging
import time as _time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .beam import (_dopri_segment, _initial_step, beam_field, default_eta,
                   pde_residual_norm, propagate)
from .errors import (ConfigError, DomainError, InsufficientDataError)
from .hamiltonians import cosine_potential, hamilton_vector_field, schrodinger, wave_constant_c
from .initdata import (cusp_data, sample_initial_fields, schrodinger_data, single_beam_state)
from .norms import error_between, write_records
from .reference import (reference_grid, schrodinger_split_step, spectral_gradient,
                        split_step_count, wave_exact_constant_c)
from .superposition import build_family, default_spacing, superpose

log = logging.getLogger(__name__)

PROBLEMS = ("single_beam", "cusp", "schrodinger_free", "schrodinger_potential", "init_data")
WAVE_PROBLEMS = ("single_beam", "cusp", "init_data")
DEFAULT_EPSILONS = tuple(2.0**-e for e in range(4, 9))
DEFAULT_TIMES = (0.0, 0.25, 0.5, 0.75, 1.0)

# periodic boxes; the fields stay below 1e-10 on their boundaries for t <= 1
SINGLE_BEAM_BOX = ((-2.0, -2.5), (2.5, 2.5))
CUSP_BOX = ((-2.0, -2.5), (3.0, 2.5))
SCHRODINGER_BOX = ((-4 * np.pi,), (4 * np.pi,))


@dataclass
class SweepConfig:
    problem: str = "cusp"
    orders: tuple = (1, 2, 3)
    epsilons: tuple = DEFAULT_EPSILONS
    times: tuple = DEFAULT_TIMES
    t_max: float = 1.0
    eta: Optional[dict] = None
    points_per_wavelength: float = 8.0
    spacing: float = 0.5
    tol: float = 1e-9
    atol: float = 1e-12
    norm: Optional[str] = None
    fit_tail: Optional[int] = None
    dump_fields: bool = False

    def eta_for(self, k):
        if self.eta and k in self.eta:
            return float(self.eta[k])
        return float(default_eta(k))

    def resolved(self):
        """Copy with every default filled in and values normalized."""
        c = replace(self)
        c.orders = tuple(int(k) for k in c.orders)
        c.epsilons = tuple(float(e) for e in c.epsilons)
        c.times = tuple(float(t) for t in c.times)
        if c.problem == "init_data":
            c.times = (0.0,)
        if c.norm is None:
            c.norm = "energy" if c.problem in ("single_beam", "cusp") else "l2"
        eta = {int(k): float(v) for k, v in (c.eta or {}).items()}
        c.eta = {k: eta.get(k, float(default_eta(k))) for k in c.orders}
        if c.fit_tail is None and c.problem == "cusp":
            c.fit_tail = 4
        return c

    def validate(self):
        problems = []
        if self.problem not in PROBLEMS:
            problems.append(f"problem: must be one of {PROBLEMS}, got {self.problem!r}")
        if not self.orders:
            problems.append("orders: must not be empty")
        for k in self.orders:
            if k not in (1, 2, 3):
                problems.append(f"orders: beam order must be 1, 2 or 3, got {k}")
        if not self.epsilons:
            problems.append("epsilons: must not be empty")
        if any(not e > 0 for e in self.epsilons):
            problems.append("epsilons: must all be positive")
        if any(b >= a for a, b in zip(self.epsilons, self.epsilons[1:])):
            problems.append("epsilons: must be strictly decreasing")
        if not self.times:
            problems.append("times: must not be empty")
        if any(t < 0 or t > self.t_max for t in self.times):
            problems.append(f"times: must lie in [0, {self.t_max}]")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            problems.append("times: must be strictly increasing")
        if self.eta:
            for k, v in self.eta.items():
                if not v > 0:
                    problems.append(f"eta.{k}: cutoff radius must be positive")
        if self.norm not in (None, "l2", "energy"):
            problems.append(f"norm: must be l2 or energy, got {self.norm!r}")
        if self.norm == "energy" and self.problem in ("schrodinger_free", "schrodinger_potential"):
            problems.append("norm: the energy norm applies to wave problems only")
        if not self.points_per_wavelength >= 4:
            problems.append("points_per_wavelength: must be at least 4")
        if not 0 < self.spacing <= 0.5:
            problems.append("spacing: must lie in (0, 0.5]")
        if not self.tol > 0 or not self.atol > 0:
            problems.append("tol/atol: must be positive")
        if self.fit_tail is not None and self.fit_tail < 3:
            problems.append("fit_tail: needs at least 3 points")
        if problems:
            raise ConfigError(problems)
        return self


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    epsilons: tuple = ()
    dropped: int = 0


@dataclass
class ConvergenceReport:
    config: SweepConfig
    records: list
    fits: dict
    environment: dict = field(default_factory=dict)

    def errors(self, k, t, relative=False):
        """(epsilons, errors) for one (k, t), coarsest first; absolute by default."""
        rows = [r for r in self.records if r.order == k and abs(r.time - t) < 1e-12]
        rows.sort(key=lambda r: -r.epsilon)
        return ([r.epsilon for r in rows],
                [r.relative_error if relative else r.absolute_error for r in rows])

    def summary_lines(self):
        out = []
        for (k, t), f in sorted(self.fits.items()):
            out.append(f"k={k} t={t:g} slope={f.slope:.4f} intercept={f.intercept:.4f} "
                       f"r2={f.r_squared:.4f} n_points={f.n_points}")
        return out


def fit_rate(epsilons, errors):
    """Least-squares line through (log eps, log error): (slope, intercept, r^2)."""
    e = np.asarray(epsilons, dtype=float)
    y = np.asarray(errors, dtype=float)
    if e.shape != y.shape:
        raise ValueError("epsilons and errors must have equal length")
    if len(e) < 3:
        raise InsufficientDataError("a rate fit needs at least 3 points")
    if np.any(e <= 0) or np.any(y <= 0):
        raise DomainError("rate fits need strictly positive values")
    lx, ly = np.log(e), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot <= 1e-30 * max(1.0, float(np.sum(ly**2))) else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), float(r2)


def fit_with_policy(epsilons, errors, k, tail=None, steep=3.0):
    """Rate fit with the coarse-point policy for cutoff beams.

    For k >= 2 the coarsest point is dropped while the error falls faster than
    ``steep`` between the two coarsest points. ``tail`` keeps only the finest
    points for k = 2, whose errors dip at midrange eps.
    """
    order = np.argsort(epsilons)[::-1]
    e = list(np.asarray(epsilons, dtype=float)[order])
    y = list(np.asarray(errors, dtype=float)[order])
    dropped = 0
    if k == 2 and tail is not None and len(e) > tail:
        dropped += len(e) - tail
        e, y = e[-tail:], y[-tail:]
    if k >= 2:
        while len(e) > 3:
            s = np.log(y[0] / y[1]) / np.log(e[0] / e[1])
            if s <= steep:
                break
            e, y = e[1:], y[1:]
            dropped += 1
    slope, intercept, r2 = fit_rate(e, y)
    return RateFit(slope, intercept, r2, len(e), tuple(e), dropped)


# problems


def _wave_model():
    return wave_constant_c(1.0, 2, -1)


class _FamilyCache:
    """Beam families keyed by (k, h_z).

    Trajectories do not depend on eps, so sweeps reuse a family whenever the
    node spacing repeats (h_z is capped at eta/2 for cutoff beams).
    """

    def __init__(self, cfg):
        self.cfg = cfg
        self.store = {}

    def get(self, data, model, k, eps):
        cfg = self.cfg
        eta = cfg.eta_for(k)
        h_z = default_spacing(eps, cfg.spacing, eta)
        fam = self.store.get((k, h_z))
        if fam is None:
            self.store = {key: f for key, f in self.store.items() if key[0] != k}
            fam = build_family(data, model, k, eps, eta, cfg.spacing, _with_start(cfg.times),
                               cfg.tol, cfg.atol)
            self.store[(k, h_z)] = fam
        return replace(fam, eps=float(eps))


def _with_start(times):
    return tuple(sorted({0.0, *times}))


def _reference_fields(u0, u1, dt, t):
    if dt == 0:
        u, ut = u0.like(u0.values), u1.like(u1.values)
    else:
        u, ut = wave_exact_constant_c(u0, u1, 1.0, dt)
    u.meta["time"] = ut.meta["time"] = t
    return u, ut, spectral_gradient(u)


def _run_single_beam(cfg, record, env):
    model = _wave_model()
    lo, hi = SINGLE_BEAM_BOX
    samples = _with_start(cfg.times)
    trajs = {}
    for k in cfg.orders:
        trajs[k] = propagate(model, single_beam_state(k, model), samples, cfg.tol, cfg.atol,
                             cfg.eta_for(k))
    for eps in cfg.epsilons:
        grid = reference_grid(lo, hi, eps, cfg.points_per_wavelength)
        env.setdefault("grids", {})[repr(eps)] = list(grid.dims)
        for k in cfg.orders:
            traj = trajs[k]
            uncut = replace(traj, eta=np.inf)
            u0, u1 = beam_field(uncut, 0.0, eps, grid, "value+time_derivative")
            for t in cfg.times:
                ref = _reference_fields(u0, u1, t, t)
                if cfg.norm == "l2":
                    beam = (beam_field(traj, t, eps, grid, "value"), None, None)
                else:
                    beam = beam_field(traj, t, eps, grid, "all")
                record(k, eps, t, error_between(beam, ref, cfg.norm, 1.0, eps), beam[0])


def _run_cusp(cfg, record, env):
    model = _wave_model()
    data = cusp_data()
    lo, hi = CUSP_BOX
    cache = _FamilyCache(cfg)
    for eps in cfg.epsilons:
        grid = reference_grid(lo, hi, eps, cfg.points_per_wavelength)
        env.setdefault("grids", {})[repr(eps)] = list(grid.dims)
        u0, u1 = sample_initial_fields(data, model, eps, grid)
        u0.meta["time"] = u1.meta["time"] = 0.0
        fams = {}
        for k in cfg.orders:
            t0 = _time.perf_counter()
            fams[k] = cache.get(data, model, k, eps)
            env.setdefault("h_z", {})[f"{k}/{eps!r}"] = fams[k].h_z
            log.info("k=%d eps=%g: %d beams ready in %.1fs", k, eps,
                     fams[k].stats["beams"], _time.perf_counter() - t0)
        for t in cfg.times:
            ref = _reference_fields(u0, u1, t, t)
            for k in cfg.orders:
                beam = superpose(fams[k], t, grid, "value" if cfg.norm == "l2" else "all")
                if cfg.norm == "l2":
                    beam = (beam, None, None)
                record(k, eps, t, error_between(beam, ref, cfg.norm, 1.0, eps), beam[0])
        del fams


def _run_schrodinger(cfg, record, env, potential):
    model = schrodinger(cosine_potential if potential else None, 1)
    data = schrodinger_data()
    lo, hi = SCHRODINGER_BOX
    cache = _FamilyCache(cfg)
    for eps in cfg.epsilons:
        grid = reference_grid(lo, hi, eps, cfg.points_per_wavelength)
        env.setdefault("grids", {})[repr(eps)] = list(grid.dims)
        u0, _ = sample_initial_fields(data, model, eps, grid)
        V = grid.like(model.coefficient_value(grid.points()).astype(complex)) if potential else None
        fams = {k: cache.get(data, model, k, eps) for k in cfg.orders}
        ref = u0
        t_prev = 0.0
        for t in cfg.times:
            if t > t_prev:
                n_steps = split_step_count(eps, grid, t - t_prev)
                ref = schrodinger_split_step(ref, V, eps, t - t_prev, n_steps)
                t_prev = t
            ref.meta["time"] = t
            for k in cfg.orders:
                u = superpose(fams[k], t, grid, "value")
                rec = error_between((u, None, None), (ref, None, None), "l2", 1.0, eps)
                record(k, eps, t, rec, u)


def run_sweep(cfg, progress=None, dump=None):
    """Run every (k, eps, t) cell of a sweep and fit rates per (k, t).

    ``progress(record)`` is called after each cell; with ``dump_fields`` set,
    ``dump(k, eps, t, field)`` receives each approximate field.
    """
    cfg = cfg.resolved()
    cfg.validate()
    records = []
    env = {"tol": cfg.tol, "atol": cfg.atol, "spacing": cfg.spacing,
           "points_per_wavelength": cfg.points_per_wavelength}

    def record(k, eps, t, rec, fld=None):
        rec = replace(rec, order=k, epsilon=float(eps), time=float(t))
        records.append(rec)
        if cfg.dump_fields and dump is not None and fld is not None:
            dump(k, eps, t, fld)
        if progress:
            progress(rec)

    if cfg.problem == "single_beam":
        _run_single_beam(cfg, record, env)
    elif cfg.problem in ("cusp", "init_data"):
        _run_cusp(cfg, record, env)
    else:
        _run_schrodinger(cfg, record, env, cfg.problem == "schrodinger_potential")
    records.sort(key=lambda r: (r.order, -r.epsilon, r.time))
    report = ConvergenceReport(cfg, records, {}, env)
    for k in cfg.orders:
        for t in cfg.times:
            eps, errs = report.errors(k, t)
            if k == 2 and has_dip(errs):
                log.info("k=2 t=%g: midrange error dip present", t)
            if len(eps) >= 3 and all(e > 0 for e in errs):
                report.fits[(k, t)] = fit_with_policy(eps, errs, k, cfg.fit_tail)
    return report


def has_dip(errors):
    """True if the error sequence (coarse to fine) has an interior local minimum."""
    return any(b < a and b < c for a, b, c in zip(errors, errors[1:], errors[2:]))


def write_report(report, out_dir):
    """records.csv plus summary.txt in ``out_dir``."""
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_records(out / "records.csv", report.records)
    lines = report.summary_lines()
    (out / "summary.txt").write_text("\n".join(lines) + ("\n" if lines else ""))
    return out


def residual_study(orders=(1, 2, 3), epsilons=DEFAULT_EPSILONS, t=0.5, tol=1e-9, atol=1e-12,
                   points_per_wavelength=8.0):
    """PDE residual norms of the single beam; returns {k: (eps list, norms, RateFit)}."""
    model = _wave_model()
    lo, hi = SINGLE_BEAM_BOX
    out = {}
    for k in orders:
        traj = propagate(model, single_beam_state(k, model), [0.0, t], tol, atol)
        norms = []
        for eps in epsilons:
            grid = reference_grid(lo, hi, eps, points_per_wavelength)
            norms.append(pde_residual_norm(traj, model, t, eps, grid))
        out[k] = (list(epsilons), norms, fit_rate(epsilons, norms))
    return out


# non-squeezing


def propagate_rays(model, x0, p0, t, tol=1e-12, atol=1e-14):
    """Hamiltonian flow of a batch of phase-space points to time t."""
    x0 = np.asarray(x0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    n = x0.shape[-1]
    y = np.concatenate([x0, p0], axis=-1).reshape(-1)
    if t == 0:
        return x0.copy(), p0.copy()

    def fun(_, v):
        v = v.reshape(-1, 2 * n)
        dHdp, dHdy = hamilton_vector_field(model, v[:, :n], v[:, n:])
        return np.concatenate([dHdp, -dHdy], axis=-1).reshape(-1)

    f = fun(0.0, y)
    h = _initial_step(fun, 0.0, y, f, tol, atol, t)
    y, *_ = _dopri_segment(fun, 0.0, y, f, t, h, tol, atol, lambda *_: None)
    y = y.reshape(-1, 2 * n)
    return y[:, :n], y[:, n:]


def _sample_pairs(data, n_pairs, rng):
    lower = np.asarray(data.lower)
    upper = np.asarray(data.upper)
    n = len(lower)
    diam = float(np.linalg.norm(upper - lower))
    n_struct = n_pairs // 4
    n_rand = n_pairs - n_struct
    z = lower + (upper - lower) * rng.random((n_rand, n))
    direction = rng.normal(size=(n_rand, n))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    dist = np.exp(rng.uniform(np.log(1e-6), np.log(diam / 2), n_rand))
    zp = z + direction * dist[:, None]
    # pairs separated along the last axis, which is the caustic-forming direction
    zs = lower + (upper - lower) * rng.random((n_struct, n))
    ds = np.exp(rng.uniform(np.log(1e-6), np.log((upper[-1] - lower[-1]) / 2), n_struct))
    zsp = zs.copy()
    zsp[:, -1] += ds * rng.choice([-1.0, 1.0], n_struct)
    z = np.concatenate([z, zs])
    zp = np.concatenate([zp, zsp])
    # reflect partners back into K0
    zp = np.where(zp > upper, 2 * upper - zp, zp)
    zp = np.where(zp < lower, 2 * lower - zp, zp)
    keep = np.linalg.norm(z - zp, axis=1) >= 1e-6
    return z[keep], zp[keep]


def nonsqueeze_check(model, data, t, n_pairs=10000, seed=0):
    """Extremal (|dp| + |dx|) / |dz| over sampled pairs of the data's flow."""
    rng = np.random.default_rng(seed)
    z, zp = _sample_pairs(data, int(n_pairs * 1.05) + 8, rng)
    z, zp = z[:n_pairs], zp[:n_pairs]
    if model.is_wave and data.one_way is not None:
        model = model.branch(0 if data.one_way > 0 else 1)
    pts = np.concatenate([z, zp])
    p0 = data.phase(pts, 1).coeffs[..., 1:].real
    x, p = propagate_rays(model, pts, p0, t)
    m = len(z)
    dx = np.linalg.norm(x[:m] - x[m:], axis=1)
    dp = np.linalg.norm(p[:m] - p[m:], axis=1)
    ratio = (dx + dp) / np.linalg.norm(z - zp, axis=1)
    return float(np.min(ratio)), float(np.max(ratio))
