"""Command line runner: ``cutocp <experiment> --config file.toml``.

Every experiment writes CSV or JSON data into the output directory; exit
status is nonzero when a computation the experiment depends on failed.
"""

from __future__ import annotations

import argparse
import csv
import enum
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import experiments as ex
from . import qmc
from .fem import Penalties
from .geometry import gasket, unit_circle
from .problems import DISK_BOX, GASKET_BOX, example1, gasket_problem

log = logging.getLogger("cutocp")


class ExperimentKind(enum.Enum):
    CONVERGE = "converge"
    PRECOND = "precond"
    QMC_DETERMINISTIC = "qmc-deterministic"
    QMC_RANDOMIZED = "qmc-randomized"
    GEOMETRY_DUMP = "geometry-dump"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: ExperimentKind
    geometry: str = "circle"
    omega: tuple = (9.0, 2.0)
    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    box: tuple | None = None
    n0: object = 17
    levels: list = field(default_factory=lambda: [0, 1, 2, 3])
    penalties: Penalties = Penalties()
    alpha: float = 0.1
    inner_tol: float = 1e-8
    eps: float = 1e-6
    gtol: float | None = 1e-8
    lanczos_steps: int = 300
    integrand: str = "control"
    N: list = field(default_factory=lambda: [2**m for m in range(1, 11)])
    z: tuple = qmc.EMBEDDED_Z
    q: int = qmc.DEFAULT_Q
    seed: int = qmc.DEFAULT_SEED
    mc_seeds: int = 10
    param_box: list = field(default_factory=lambda: [[9.0, 12.0], [2.0, 3.0]])
    qmc_mesh: tuple = (57, 47)
    fields: bool = False
    output: str = "results"

    def validate(self) -> "ExperimentConfig":
        for name in ("alpha", "inner_tol", "eps", "radius"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.gtol is not None and not self.gtol > 0:
            raise ConfigError("gtol must be positive")
        p = self.penalties
        if p.gamma_D <= 0 or p.gamma_N < 0 or p.gamma_1 < 0:
            raise ConfigError("penalties: gamma_D > 0, gamma_N >= 0, gamma_1 >= 0 required")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])) or min(self.levels) < 0:
            raise ConfigError(f"levels must be strictly increasing and nonnegative: {self.levels}")
        if any(int(n) < 1 for n in self.N):
            raise ConfigError("sample counts must be positive")
        if self.q < 1 or self.lanczos_steps < 1:
            raise ConfigError("q and lanczos_steps must be positive")
        if self.geometry not in ("circle", "gasket"):
            raise ConfigError(f"unknown geometry {self.geometry!r}")
        return self

    def level_set(self):
        if self.geometry == "gasket":
            return gasket(*self.omega)
        return unit_circle(self.center, self.radius)

    def bbox(self):
        if self.box is not None:
            return tuple(self.box)
        return GASKET_BOX if self.geometry == "gasket" else DISK_BOX


def load_config(path, kind: ExperimentKind | None = None) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return config_from_dict(raw, kind)


def config_from_dict(raw: dict, kind: ExperimentKind | None = None) -> ExperimentConfig:
    try:
        return _parse(dict(raw), kind)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def _parse(raw: dict, kind: ExperimentKind | None) -> ExperimentConfig:
    k = kind or raw.get("experiment")
    if k is None:
        raise ConfigError("no experiment kind given")
    cfg = ExperimentConfig(ExperimentKind(k))
    geo = raw.get("geometry", {})
    cfg.geometry = geo.get("kind", cfg.geometry)
    cfg.omega = tuple(geo.get("omega", cfg.omega))
    cfg.center = tuple(geo.get("center", cfg.center))
    cfg.radius = float(geo.get("radius", cfg.radius))
    mesh = raw.get("mesh", {})
    cfg.box = tuple(mesh["box"]) if "box" in mesh else None
    cfg.n0 = mesh.get("n0", cfg.n0)
    cfg.levels = list(mesh.get("levels", cfg.levels))
    pen = raw.get("penalties", {})
    cfg.penalties = Penalties(float(pen.get("gamma_D", 10.0)), float(pen.get("gamma_N", 0.0)),
                              float(pen.get("gamma_1", 0.1)))
    ctl = raw.get("control", {})
    cfg.alpha = float(ctl.get("alpha", cfg.alpha))
    cfg.inner_tol = float(ctl.get("inner_tol", cfg.inner_tol))
    cfg.eps = float(ctl.get("eps", cfg.eps))
    g = ctl.get("gtol", cfg.gtol)
    cfg.gtol = None if g in (None, 0, "none") else float(g)
    pre = raw.get("precond", {})
    cfg.lanczos_steps = int(pre.get("lanczos_steps", cfg.lanczos_steps))
    smp = raw.get("sampler", {})
    cfg.integrand = smp.get("integrand", cfg.integrand)
    if "N" in smp:
        cfg.N = [int(n) for n in smp["N"]]
    elif "m_max" in smp:
        cfg.N = [2**m for m in range(int(smp.get("m_min", 1)), int(smp["m_max"]) + 1)]
    cfg.z = tuple(int(v) for v in smp.get("z", cfg.z))
    cfg.q = int(smp.get("q", cfg.q))
    cfg.seed = int(smp.get("seed", cfg.seed))
    cfg.mc_seeds = int(smp.get("mc_seeds", cfg.mc_seeds))
    cfg.param_box = smp.get("box", cfg.param_box)
    cfg.qmc_mesh = tuple(smp.get("mesh", cfg.qmc_mesh))
    cfg.fields = bool(raw.get("dump", {}).get("fields", cfg.fields))
    cfg.output = raw.get("output", {}).get("dir", cfg.output)
    return cfg.validate()


# ----------------------------------------------------------------- runners

def _converge(cfg: ExperimentConfig, out: Path) -> int:
    if cfg.geometry != "circle":
        raise ConfigError("the convergence study needs the circle geometry (exact solution registered)")
    res = ex.run_converge(int(cfg.n0), max(cfg.levels) + 1, cfg.alpha, cfg.penalties, cfg.eps,
                          cfg.gtol, cfg.bbox())
    ex.write_converge_csv(res, out / "converge.csv")
    ex.dump_json(res.records, out / "converge_runs.json")
    for name, v in res.mean_eoc().items():
        log.info("mean EOC %-8s %s", name, "n/a" if math.isnan(v) else f"{v:.3f}")
    return 0 if all(r["converged"] for r in res.records) else 1


def _precond(cfg: ExperimentConfig, out: Path) -> int:
    if cfg.geometry == "gasket":
        ls, data = gasket_problem(*cfg.omega)
    else:
        ls, data = cfg.level_set(), example1()[1]
    rows = ex.run_precond(ls, data, cfg.bbox(), cfg.n0, tuple(cfg.levels), cfg.penalties,
                          cfg.inner_tol, cfg.lanczos_steps, cfg.seed)
    ex.write_precond_csv(rows, out / "precond.csv")
    for r in rows:
        log.info("level %d %-9s kappa %.4g iterations %d", r.level, r.preconditioner, r.kappa,
                 r.iterations)
    return 0 if all(r.converged for r in rows) else 1


def _qmc_deterministic(cfg: ExperimentConfig, out: Path, jobs: int) -> int:
    if cfg.integrand == "analytic":
        res = ex.run_qmc_analytic(cfg.N, cfg.z, range(cfg.seed, cfg.seed + cfg.mc_seeds))
        with open(out / "qmc_analytic.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "lattice_abs_error", "mc_abs_error"])
            for N, a, b in zip(res["N"], res["lattice"], res["mc"]):
                w.writerow([N, repr(a), repr(b)])
        log.info("slopes: lattice %.3f, mc %.3f", qmc.loglog_slope(res["N"], res["lattice"]),
                 qmc.loglog_slope(res["N"], res["mc"]))
        return 0
    qoi = ex.ControlQoI(*cfg.qmc_mesh, alpha=cfg.alpha, eps=cfg.eps, gamma_D=cfg.penalties.gamma_D,
                        gamma_1=cfg.penalties.gamma_1)
    rows, lat, mc = ex.run_qmc_control(cfg.N, cfg.param_box, cfg.z, cfg.seed, qoi, jobs)
    qmc.write_rows(rows, out / "qmc_deterministic.csv")
    failed = sum(e.n_failed for e in lat + mc)
    if failed:
        log.warning("%d sample solves failed", failed)
    return 0 if failed == 0 else 1


def _qmc_randomized(cfg: ExperimentConfig, out: Path, jobs: int) -> int:
    if cfg.integrand == "analytic":
        fn, names, box = qmc.product_integrand, ["t1t2"], [[0.0, 1.0], [0.0, 1.0]]
    else:
        fn = ex.ControlQoI(*cfg.qmc_mesh, alpha=cfg.alpha, eps=cfg.eps,
                           gamma_D=cfg.penalties.gamma_D, gamma_1=cfg.penalties.gamma_1)
        names, box = ex.QOI_NAMES, cfg.param_box
    ests = ex.run_qmc_randomized(cfg.N, fn, box, cfg.z, cfg.q, cfg.seed, names, jobs)
    ref = ests[-1]
    rows = []
    for e in ests:
        for i, n in enumerate(e.names):
            ae = abs(e.mean[i] - ref.mean[i])
            ve = abs(e.variance[i] - ref.variance[i])
            rows.append(qmc.StudyRow("shifted_lattice", e.N, e.q, n, float(e.mean[i]),
                                     float(e.variance[i]), float(ae), float(ae / abs(ref.mean[i])) if ref.mean[i] else float("nan"),
                                     float(ve), float(ve / abs(ref.variance[i])) if ref.variance[i] else float("nan"),
                                     float(e.rms[i]), e.n_failed))
    qmc.write_rows(rows, out / "qmc_randomized.csv")
    failed = sum(e.n_failed for e in ests)
    return 0 if failed == 0 else 1


def _geometry_dump(cfg: ExperimentConfig, out: Path) -> int:
    ls = cfg.level_set()
    data = None
    if cfg.fields:
        data = gasket_problem(*cfg.omega)[1] if cfg.geometry == "gasket" else example1()[1]
    n = cfg.n0 if isinstance(cfg.n0, int) else tuple(cfg.n0)
    files = ex.run_geometry_dump(ls, cfg.bbox(), n, out, data, cfg.alpha, cfg.penalties)
    for f in files:
        log.info("wrote %s", f)
    return 0


def run(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> int:
    out.mkdir(parents=True, exist_ok=True)
    k = cfg.kind
    if k is ExperimentKind.CONVERGE:
        return _converge(cfg, out)
    if k is ExperimentKind.PRECOND:
        return _precond(cfg, out)
    if k is ExperimentKind.QMC_DETERMINISTIC:
        return _qmc_deterministic(cfg, out, jobs)
    if k is ExperimentKind.QMC_RANDOMIZED:
        return _qmc_randomized(cfg, out, jobs)
    return _geometry_dump(cfg, out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cutocp", description=__doc__.splitlines()[0])
    p.add_argument("experiment", choices=[k.value for k in ExperimentKind])
    p.add_argument("-c", "--config", type=Path, help="TOML configuration file")
    p.add_argument("-o", "--output", type=Path, help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="seed override for random shifts and MC draws")
    p.add_argument("-j", "--jobs", type=int, default=1, help="worker processes for sample solves")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    kind = ExperimentKind(args.experiment)
    try:
        cfg = load_config(args.config, kind) if args.config else ExperimentConfig(kind).validate()
        if args.seed is not None:
            cfg.seed = args.seed
        out = args.output or Path(cfg.output)
        return run(cfg, out, args.jobs)
    except (ConfigError, OSError, tomllib.TOMLDecodeError) as exc:
        print(f"cutocp: error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"cutocp: computation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
