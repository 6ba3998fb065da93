"""Command line entry point: ``beamforge <subcommand> [options]``."""
import argparse
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import _kernels
from .convergence import PROBLEMS, SweepConfig, nonsqueeze_check, run_sweep, write_report
from .errors import BeamforgeError, ConfigError
from .fields import write_gbf1

log = logging.getLogger("beamforge")

THREADS_ENV = "BEAMFORGE_THREADS"
SUBCOMMANDS = {
    "single-beam": "single_beam",
    "cusp": "cusp",
    "schrodinger": "schrodinger_free",
    "init-data": "init_data",
}
CONFIG_KEYS = tuple(f.name for f in fields(SweepConfig))


# config documents


def _as_float(v, path, problems):
    if isinstance(v, bool):
        problems.append(f"{path}: expected a number, got {v!r}")
        return None
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity", ".inf"):
        return math.inf
    try:
        return float(v)
    except (TypeError, ValueError):
        problems.append(f"{path}: expected a number, got {v!r}")
        return None


def _as_int(v, path, problems):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        problems.append(f"{path}: expected an integer, got {v!r}")
        return None
    return int(v)


def _as_list(v, path, problems, conv):
    if not isinstance(v, (list, tuple)):
        v = [v]
    out = [conv(x, f"{path}[{i}]", problems) for i, x in enumerate(v)]
    return tuple(out) if all(x is not None for x in out) else None


def config_from_mapping(doc):
    """SweepConfig from a plain mapping; strict about keys and types."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(["<root>: config must be a mapping"])
    problems = [f"{k}: unknown key" for k in doc if k not in CONFIG_KEYS]
    kw = {}
    for key, value in doc.items():
        if key not in CONFIG_KEYS or value is None:
            continue
        if key == "problem":
            if not isinstance(value, str):
                problems.append(f"problem: expected a string, got {value!r}")
            kw[key] = value
        elif key == "orders":
            kw[key] = _as_list(value, key, problems, _as_int)
        elif key in ("epsilons", "times"):
            kw[key] = _as_list(value, key, problems, _as_float)
        elif key == "eta":
            if isinstance(value, dict):
                eta = {}
                for k, v in value.items():
                    kk = _as_int(k, f"eta.{k}", problems)
                    vv = _as_float(v, f"eta.{k}", problems)
                    if kk is not None and vv is not None:
                        eta[kk] = vv
                kw[key] = eta
            else:
                kw[key] = _as_float(value, key, problems)
        elif key in ("t_max", "points_per_wavelength", "spacing", "tol", "atol"):
            kw[key] = _as_float(value, key, problems)
        elif key == "norm":
            kw[key] = value
        elif key == "fit_tail":
            kw[key] = _as_int(value, key, problems)
        elif key == "dump_fields":
            if not isinstance(value, bool):
                problems.append(f"dump_fields: expected true or false, got {value!r}")
            kw[key] = bool(value)
    if problems:
        raise ConfigError(problems)
    return SweepConfig(**{k: v for k, v in kw.items() if v is not None})


def _expand_eta(cfg):
    if cfg.eta is not None and not isinstance(cfg.eta, dict):
        cfg.eta = {k: float(cfg.eta) for k in cfg.orders}
    return cfg


def resolve(cfg):
    """Validate, then fill defaults; raises ConfigError listing every problem."""
    _expand_eta(cfg)
    cfg.validate()
    return cfg.resolved().validate()


def parse_config(text):
    """Parse a YAML (or JSON) config document into a resolved SweepConfig."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"<document>: not well-formed: {exc}"]) from None
    return resolve(config_from_mapping(doc))


def config_to_mapping(cfg):
    return {
        "problem": cfg.problem,
        "orders": list(cfg.orders),
        "epsilons": list(cfg.epsilons),
        "times": list(cfg.times),
        "t_max": cfg.t_max,
        "eta": None if cfg.eta is None else {int(k): float(v) for k, v in cfg.eta.items()},
        "points_per_wavelength": cfg.points_per_wavelength,
        "spacing": cfg.spacing,
        "tol": cfg.tol,
        "atol": cfg.atol,
        "norm": cfg.norm,
        "fit_tail": cfg.fit_tail,
        "dump_fields": cfg.dump_fields,
    }


def serialize_config(cfg):
    return yaml.safe_dump(config_to_mapping(cfg), sort_keys=False)


# runs


@dataclass
class RunManifest:
    subcommand: str
    config: SweepConfig
    out_dir: Path
    config_path: Optional[str] = None
    threads: int = 1
    extra: dict = field(default_factory=dict)
    stamp: dict = field(default_factory=dict)

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        if not os.access(self.out_dir, os.W_OK):
            raise ConfigError([f"out: directory {self.out_dir} is not writable"])
        if not self.stamp:
            import numba
            import scipy
            self.stamp = {"started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                          "python": platform.python_version(), "numpy": np.__version__,
                          "scipy": scipy.__version__, "numba": numba.__version__}

    def write(self):
        (self.out_dir / "config.yaml").write_text(serialize_config(self.config))
        doc = {"subcommand": self.subcommand, "config_path": self.config_path,
               "out_dir": str(self.out_dir), "threads": self.threads, "extra": self.extra,
               "stamp": self.stamp}
        (self.out_dir / "manifest.json").write_text(json.dumps(doc, indent=2) + "\n")


def _failure(out_dir, exc, cell=None):
    doc = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        doc["problems"] = list(exc.problems)
    if getattr(exc, "t", None) is not None:
        doc["time"] = exc.t
    if cell:
        doc["cell"] = cell
    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / "failure.json").write_text(json.dumps(doc, indent=2) + "\n")
        except OSError:
            pass
    print(json.dumps(doc), file=sys.stderr)


def dispatch(manifest):
    """Run the manifest's study and write its outputs; returns an exit status."""
    manifest.write()
    cfg = manifest.config
    out = manifest.out_dir
    if manifest.subcommand == "nonsqueeze":
        from .hamiltonians import wave_constant_c
        from .initdata import cusp_data
        ex = manifest.extra
        lo, hi = nonsqueeze_check(wave_constant_c(), cusp_data(), ex["t"], ex["pairs"],
                                  ex["seed"])
        line = f"{lo!r} {hi!r}"
        (out / "nonsqueeze.txt").write_text(line + "\n")
        print(line)
        return 0
    cell = {}

    def progress(rec):
        cell.update(k=rec.order, epsilon=rec.epsilon, time=rec.time)
        log.info("k=%d eps=%g t=%g %s error %.4e (relative %.4e)", rec.order, rec.epsilon,
                 rec.time, rec.norm_kind, rec.absolute_error, rec.relative_error)

    def dump(k, eps, t, fld):
        fdir = out / "fields"
        fdir.mkdir(exist_ok=True)
        write_gbf1(fdir / f"k{k}_eps{eps:.6g}_t{t:g}.gbf", fld)

    try:
        report = run_sweep(cfg, progress, dump)
    except Exception as exc:
        _failure(out, exc, {"last_completed": dict(cell), "problem": cfg.problem})
        return 1
    write_report(report, out)
    print((out / "summary.txt").read_text(), end="")
    return 0


def _build_parser():
    p = argparse.ArgumentParser(prog="beamforge",
                                description="Gaussian beam convergence studies.")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--out", default="beamforge-out", help="output directory")
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (default: ${THREADS_ENV} or all cores)")
    common.add_argument("-v", "--verbose", action="store_true")
    sweep = argparse.ArgumentParser(add_help=False)
    sweep.add_argument("--epsilon-max", type=float)
    sweep.add_argument("--epsilon-min", type=float)
    sweep.add_argument("--orders", help="comma separated beam orders, e.g. 1,2,3")
    sweep.add_argument("--eta", help="cutoff radius for all orders (inf for none)")
    sweep.add_argument("--norm", choices=("l2", "energy"))
    sweep.add_argument("--times", help="comma separated sample times")
    for name in ("single-beam", "cusp", "init-data"):
        sp = sub.add_parser(name, parents=[common, sweep])
        if name == "init-data":
            sp.add_argument("--k", type=int, help="single beam order")
    sp = sub.add_parser("schrodinger", parents=[common, sweep])
    sp.add_argument("--potential", choices=("free", "cos"), default=None)
    sp = sub.add_parser("nonsqueeze", parents=[common])
    sp.add_argument("--t", type=float, default=0.5)
    sp.add_argument("--pairs", type=int, default=10000)
    sp.add_argument("--seed", type=int, default=0)
    return p


def _dyadic_range(hi, lo):
    a, b = math.log2(hi), math.log2(lo)
    if abs(a - round(a)) > 1e-12 or abs(b - round(b)) > 1e-12:
        raise ConfigError(["--epsilon-max/--epsilon-min: must be powers of two"])
    return tuple(2.0 ** e for e in range(int(round(a)), int(round(b)) - 1, -1))


def _config_for(args):
    doc = {}
    if args.config:
        try:
            doc = yaml.safe_load(Path(args.config).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError([f"--config: {exc}"]) from None
        if not isinstance(doc, dict):
            raise ConfigError(["<root>: config must be a mapping"])
    problem = SUBCOMMANDS.get(args.command)
    if args.command == "schrodinger":
        if args.potential:
            problem = "schrodinger_potential" if args.potential == "cos" else "schrodinger_free"
        elif doc.get("problem") in ("schrodinger_free", "schrodinger_potential"):
            problem = doc["problem"]
    if problem is not None:
        given = doc.get("problem")
        if given is not None and given != problem:
            raise ConfigError([f"problem: config says {given!r} but the subcommand runs "
                               f"{problem!r}"])
        doc["problem"] = problem
    if args.command == "nonsqueeze":
        doc.pop("problem", None)
        doc["problem"] = "cusp"
        doc["times"] = [args.t]
        doc["t_max"] = max(float(doc.get("t_max", 1.0)), args.t)
        return resolve(config_from_mapping(doc))
    cfg = config_from_mapping(doc)
    if args.epsilon_max is not None or args.epsilon_min is not None:
        hi = args.epsilon_max if args.epsilon_max is not None else cfg.epsilons[0]
        lo = args.epsilon_min if args.epsilon_min is not None else cfg.epsilons[-1]
        cfg.epsilons = _dyadic_range(hi, lo)
    if args.orders:
        try:
            cfg.orders = tuple(int(s) for s in args.orders.split(","))
        except ValueError:
            raise ConfigError([f"--orders: cannot parse {args.orders!r}"]) from None
    if getattr(args, "k", None) is not None:
        cfg.orders = (args.k,)
    if args.eta is not None:
        cfg.eta = math.inf if args.eta.lower() in ("inf", "infinity") else float(args.eta)
    if args.norm:
        cfg.norm = args.norm
    if args.times:
        cfg.times = tuple(float(s) for s in args.times.split(","))
    return resolve(cfg)


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    threads = args.threads
    if threads is None and os.environ.get(THREADS_ENV):
        threads = int(os.environ[THREADS_ENV])
    try:
        cfg = _config_for(args)
        extra = {}
        if args.command == "nonsqueeze":
            if not 0 <= args.t <= cfg.t_max:
                raise ConfigError([f"--t: must lie in [0, {cfg.t_max}]"])
            extra = {"t": args.t, "pairs": args.pairs, "seed": args.seed}
        manifest = RunManifest(args.command, cfg, args.out, args.config,
                               _kernels.set_threads(threads) if threads else
                               _kernels.set_threads(os.cpu_count() or 1), extra)
    except ConfigError as exc:
        _failure(args.out, exc)
        return 2
    try:
        return dispatch(manifest)
    except BeamforgeError as exc:
        _failure(args.out, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
