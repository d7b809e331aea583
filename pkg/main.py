# main.py - Command-line front end: steady, hopf, floq, plotdata, timestep, selftest

import os
import sys
import json
import math
import logging
import argparse
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from dotenv import load_dotenv
from pydantic import ValidationError

from errors import ConfigurationError, DegenerateHopfError, NotAHopfError, PdeContError
from models import HopfPoint, PeriodicOrbit, RunConfig, StationaryPoint
from problems.base import PdeProblem
from problems.cgl import cgl_oracle
from problems.ocpollution import OcPollutionModel
from problems.registry import MODEL_BUILDERS, build_model
from problems.timestep import time_step
from solvers.floquet import classify_candidate, floquet_hook, floquet_spectrum, oc_defects
from solvers.hopfswitch import branch_direction, build_predictor, hopf_eigenpair, hopf_point
from solvers.po import branch_norm, check_po_jacobian, continue_orbits
from solvers.spatial import check_jacobian, l2_norm
from solvers.steady import continue_stationary, switch_at_bp
from utils.file_handlers import FileHandler
from utils.report_generator import ReportGenerator

# Configuration
load_dotenv()

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2
JACOBIAN_TOL = 1e-5

# Flags that map one-to-one onto RunConfig fields
RUN_FLAGS = {
    "model": str, "active": str, "steps": int, "ds": float, "ds_min": float, "ds_max": float,
    "lam_min": float, "lam_max": float, "m": int, "xi": float, "w_T": float,
    "parametrization": str, "mu1": float, "mu2": float, "omega_max": float, "refresh": int,
    "max_bisect": int, "floquet": str,
    "n_plus": int, "tol_fl": float, "amplitude": float, "seed": int, "output": str,
}


def output_root() -> Path:
    return Path(os.getenv("PDECONT_OUTPUT_ROOT", "output"))


def configure_logging(level: Optional[str] = None):
    level = (level or os.getenv("PDECONT_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


# ─── Configuration ──────────────────────────────────────────────────────────

def _int_list(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def resolve_config(args: argparse.Namespace, base: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Merge a point-file echo, a config file and command-line flags (in that order) and validate"""
    data: Dict[str, Any] = {}
    params: Dict[str, Any] = {}
    for layer in (base or {}, FileHandler().load_config(args.config) if getattr(args, "config", None) else {}):
        layer = dict(layer)
        params.update(layer.pop("params", {}) or {})
        data.update({k: v for k, v in layer.items() if v is not None})

    for key in RUN_FLAGS:
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    for item in getattr(args, "param", None) or []:
        if "=" not in item:
            raise ConfigurationError(f"--param expects name=value, got {item!r}")
        name, value = item.split("=", 1)
        try:
            params[name.strip()] = float(value)
        except ValueError:
            raise ConfigurationError(f"--param {name.strip()} needs a number, got {value!r}")
    if getattr(args, "counts", None):
        data["counts"] = _int_list(args.counts)
    if getattr(args, "shifts", None):
        data["shifts"] = _float_list(args.shifts)
    if getattr(args, "n_eig", None):
        data["n_eig"] = _int_list(args.n_eig)
    if getattr(args, "detector", None):
        data["detector_auto"] = args.detector == "auto"
    if params:
        data["params"] = params
    if "model" not in data:
        raise ConfigurationError("No model given; use --model or a config file")
    if not data.get("output"):
        data["output"] = str(output_root() / str(data["model"]).lower())
    try:
        return RunConfig(**data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {str(e)}") from e


def make_problem(cfg: RunConfig) -> PdeProblem:
    return build_model(cfg.model, cfg.params, cfg.active, cfg.counts)


def config_echo(cfg: RunConfig, problem: PdeProblem) -> Dict[str, Any]:
    echo = cfg.model_dump()
    echo["params"] = dict(problem.params)
    echo["active"] = problem.active
    return echo


# ─── steady ─────────────────────────────────────────────────────────────────

def _steady_rows(problem: PdeProblem, points: List[StationaryPoint], messages: Dict[int, str]) -> List[Dict]:
    report = ReportGenerator()
    rows = []
    for p in points:
        row = report.branch_row(p.step, p.lam, None, l2_norm(problem.disc, p.u), msg=messages.get(p.step, ""))
        row["ind"] = sum(p.counts) if p.counts else np.nan
        rows.append(row)
    return rows


def cmd_steady(cfg: RunConfig, switch_bp: bool = False) -> int:
    """Stationary continuation with detection; writes branch.csv, shifts.json and bifurcation point files"""
    problem = make_problem(cfg)
    fh = FileHandler()
    out = Path(cfg.output) / "steady"
    settings, detector = cfg.steady_settings(), cfg.detector()
    branch = continue_stationary(problem, settings, detector, cfg.steps, lam_bounds=(cfg.lam_min, cfg.lam_max))
    echo = config_echo(cfg, problem)

    fh.save_branch(out / "branch.csv", _steady_rows(problem, branch.points, branch.messages))
    out.mkdir(parents=True, exist_ok=True)
    (out / "shifts.json").write_text(json.dumps({"shifts": branch.shifts}, indent=1))

    xi = settings.xi or 1.0 / problem.n_u
    for i, ev in enumerate(branch.events, start=1):
        if ev.kind == "HBP":
            try:
                hp = hopf_point(problem, ev, detector.mu2)
                fh.save_point(out / f"hbp{i}.json", "hopf-point", hp, echo)
                continue
            except NotAHopfError as e:
                logger.warning(f"Event {i} kept as a stationary point: {str(e)}")
        fh.save_point(out / f"{ev.kind.lower()}{i}.json", "steady", ev.point, echo)
        if ev.kind == "BP" and switch_bp:
            start = switch_at_bp(problem, ev, settings.ds, settings, xi)
            sub = continue_stationary(problem, settings, detector, cfg.steps, start=start,
                                      lam_bounds=(cfg.lam_min, cfg.lam_max))
            fh.save_branch(out / f"branch_bp{i}.csv", _steady_rows(problem, sub.points, sub.messages))

    hbps = [f"{e.lam:.6g}" for e in branch.events if e.kind == "HBP"]
    logger.info(f"Steady run finished: {len(branch.points)} points, HBPs at {hbps}")
    return EXIT_OK


# ─── hopf ───────────────────────────────────────────────────────────────────

def _load_hopf(problem: PdeProblem, path: Path, mu2: float) -> HopfPoint:
    kind, obj, _, _ = FileHandler().load_point(path)
    if kind == "hopf-point":
        return obj
    if kind == "steady" and obj.crit:
        guess = max(abs(c.imag) for c in obj.crit)
        omega, psi = hopf_eigenpair(problem, obj.u, obj.lam, guess, mu2)
        return HopfPoint(u0=obj.u, lam=obj.lam, omega=omega, psi=psi)
    raise ConfigurationError(f"{path} is a {kind} point, not a Hopf point")


def run_hopf(cfg: RunConfig, point_path: Path, out_dir: Path) -> int:
    """Switch at one Hopf point and continue its orbit branch"""
    problem = make_problem(cfg)
    fh = FileHandler()
    report = ReportGenerator()
    hp = _load_hopf(problem, point_path, cfg.mu2)
    try:
        hp = branch_direction(problem, hp)
    except DegenerateHopfError as e:
        if cfg.amplitude is None:
            raise
        logger.warning(f"{str(e)}; falling back to amplitude {cfg.amplitude}")
    echo = config_echo(cfg, problem)
    fh.save_point(out_dir / "hopf.json", "hopf-point", hp, echo)

    settings = cfg.orbit_settings()
    predictor = build_predictor(problem, hp, settings)
    hook = floquet_hook(cfg.floquet, cfg.n_plus, cfg.tol_fl)

    def on_step(orbit: PeriodicOrbit, spectrum):
        fh.save_point(out_dir / f"pt{orbit.step}.json", "orbit", orbit, echo, spectrum)

    branch = continue_orbits(problem, predictor, settings, cfg.steps, hook, (cfg.lam_min, cfg.lam_max), on_step)

    rows = []
    prev_ind = None
    for orbit, spectrum, norm in zip(branch.orbits, branch.spectra, branch.norms):
        notes = [branch.messages[orbit.step]] if orbit.step in branch.messages else []
        if spectrum is not None:
            if prev_ind is not None and spectrum.ind != prev_ind:
                notes.append(f"ind {prev_ind}->{spectrum.ind} ({classify_candidate(spectrum.gamma_cand) or 'n/a'})")
            prev_ind = spectrum.ind
        rows.append(report.branch_row(orbit.step, orbit.lam, orbit.T, norm, spectrum, " ".join(notes), n_gamma=3))
    fh.save_branch(out_dir / "branch.csv", rows)
    logger.info(f"Orbit branch from lambda={hp.lam:.6g}: {len(branch.orbits)} points in {out_dir}")
    return EXIT_OK if branch.orbits else EXIT_SOLVER


def _hopf_job(cfg_data: Dict[str, Any], point_path: str, out_dir: str, level: str) -> Tuple[str, int, str]:
    configure_logging(level)
    try:
        return point_path, run_hopf(RunConfig(**cfg_data), Path(point_path), Path(out_dir)), ""
    except ConfigurationError as e:
        return point_path, EXIT_USAGE, str(e)
    except PdeContError as e:
        return point_path, EXIT_SOLVER, str(e)


def cmd_hopf(args: argparse.Namespace) -> int:
    """Orbit branches from one or more Hopf point files, optionally in parallel"""
    fh = FileHandler()
    _, _, echo, _ = fh.load_point(args.points[0])
    cfg = resolve_config(args, base=echo)
    jobs = [(Path(p), Path(cfg.output) / f"hopf_{Path(p).stem}") for p in args.points]

    if args.jobs <= 1 or len(jobs) == 1:
        codes = [run_hopf(cfg, p, d) for p, d in jobs]
    else:
        level = logging.getLevelName(logging.getLogger().level)
        codes = []
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_hopf_job, cfg.model_dump(), str(p), str(d), level) for p, d in jobs]
            for fut in futures:
                path, code, message = fut.result()
                if code != EXIT_OK:
                    logger.error(f"Error on Hopf point {path}: {message}")
                codes.append(code)
    return max(codes) if codes else EXIT_OK


# ─── floq ───────────────────────────────────────────────────────────────────

def cmd_floq(args: argparse.Namespace) -> int:
    """Floquet spectrum of a saved orbit with optional cross-check and Excel export"""
    fh = FileHandler()
    report = ReportGenerator()
    kind, orbit, echo, _ = fh.load_point(args.point)
    if kind != "orbit":
        raise ConfigurationError(f"{args.point} is a {kind} point; floq needs an orbit")
    cfg = resolve_config(args, base=echo)
    problem = make_problem(cfg)
    algorithm = args.algorithm or (cfg.floquet if cfg.floquet != "off" else "fa1")
    spectrum = floquet_spectrum(problem, orbit, algorithm=algorithm, n_plus=cfg.n_plus, tol_fl=cfg.tol_fl)
    other = None
    if args.compare:
        other = floquet_spectrum(problem, orbit, algorithm="fa2" if algorithm == "fa1" else "fa1",
                                 n_plus=cfg.n_plus, tol_fl=cfg.tol_fl)
    defect = None
    if isinstance(problem, OcPollutionModel):
        defect = oc_defects(problem, spectrum=spectrum)

    info = {"point": str(args.point), "lambda": orbit.lam, "T": orbit.T, "m": orbit.m,
            "norm": branch_norm(problem, orbit), "residual": orbit.residual}
    out = Path(args.output or cfg.output) / "floq"
    stem = f"{Path(args.point).stem}_{algorithm}"
    report.write_json_report(out / f"{stem}.json", report.generate_json_report(spectrum, info, defect, other))
    if args.excel:
        branch_csv = Path(args.point).parent / "branch.csv"
        branch = fh.load_branch(branch_csv) if branch_csv.exists() else None
        report.generate_excel_report(out / f"{stem}.xlsx", spectrum, branch, info)
    logger.info(f"{spectrum.algorithm}: ind={spectrum.ind} err_mu={spectrum.err_mu:.3e} "
                f"max log|gamma|={np.nanmax(spectrum.log_moduli):.4g}")
    return EXIT_OK


# ─── plotdata ───────────────────────────────────────────────────────────────

def cgl_norm_oracle(k: float, params: Optional[Dict[str, float]] = None):
    """Plane-wave amplitude |a| of the root closest to the computed norm"""
    p = {"c3": -1.0, "c5": 1.0, "nu": 1.0, "mu": 0.1}
    p.update(params or {})

    def oracle(branch: str, lam: float, norm: float) -> Optional[float]:
        try:
            roots = cgl_oracle(k, lam, p["c3"], p["c5"], p["nu"], p["mu"]).roots
        except ConfigurationError:
            return None
        if not roots:
            return None
        return min((math.sqrt(r.amp2) for r in roots), key=lambda a: abs(a - norm))

    return oracle


def cmd_plotdata(args: argparse.Namespace) -> int:
    """Tidy CSV and figure of (lambda, norm) for one or more branch files"""
    fh = FileHandler()
    report = ReportGenerator()
    branches = {}
    for path in args.branches:
        p = Path(path)
        branches[p.parent.name + "/" + p.stem] = fh.load_branch(p)
    oracle = cgl_norm_oracle(args.oracle_k) if args.oracle_k is not None else None
    tidy = report.plot_frame(branches, oracle)
    out = Path(args.output or output_root() / "plots")
    paths = report.write_plot(tidy, out, args.stem)
    logger.info(f"Plot data with {len(tidy)} rows written to {[str(p) for p in paths]}")
    return EXIT_OK


# ─── timestep ───────────────────────────────────────────────────────────────

def cmd_timestep(args: argparse.Namespace) -> int:
    """Integrate from a saved point, optionally perturbed, and write the norm history"""
    fh = FileHandler()
    kind, obj, echo, _ = fh.load_point(args.point)
    cfg = resolve_config(args, base=echo)
    problem = make_problem(cfg)
    if kind == "orbit":
        u0, lam = obj.slices[0].copy(), obj.lam
    elif kind == "hopf-point":
        u0, lam = obj.u0.copy(), obj.lam
    else:
        u0, lam = obj.u.copy(), obj.lam
    if args.perturb > 0:
        rng = np.random.default_rng(cfg.seed)
        v = rng.standard_normal(len(u0))
        v /= math.sqrt(v @ (problem.disc.M_block @ v))
        u0 = u0 + args.perturb * v
    states = time_step(problem, u0, args.dt, args.n_steps, lam=lam, force=args.force)
    history = pd.DataFrame({
        "t": np.arange(len(states)) * args.dt,
        "norm": [l2_norm(problem.disc, u) for u in states],
    })
    out = Path(args.output or cfg.output) / "timestep"
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{Path(args.point).stem}_history.csv"
    history.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote {len(history)} time steps to {path}; final norm {history['norm'].iloc[-1]:.6g}")
    return EXIT_OK


# ─── selftest ───────────────────────────────────────────────────────────────

def selftest_results(models: Optional[List[str]] = None, seed: int = 0) -> pd.DataFrame:
    """Stationary and collocation Jacobian checks for each registered model"""
    rows = []
    rng = np.random.default_rng(seed)
    for name in models or sorted(MODEL_BUILDERS):
        problem = build_model(name)
        u = problem.initial_state() + 0.1 * rng.standard_normal(problem.n_u)
        err_s = check_jacobian(problem, u, problem.lam, seed=seed)
        m = 5
        slices = np.tile(u, (m, 1)) + 0.05 * rng.standard_normal((m, problem.n_u))
        slices[-1] = slices[0]
        orbit = PeriodicOrbit(slices=slices, tmesh=np.linspace(0, 1, m), T=2.0, lam=problem.lam, xi=0.1)
        err_c = check_po_jacobian(problem, orbit, seed=seed)
        rows.append({"model": name, "stationary": err_s, "collocation": err_c,
                     "passed": bool(err_s < JACOBIAN_TOL and err_c < JACOBIAN_TOL)})
    return pd.DataFrame(rows)


def cmd_selftest(args: argparse.Namespace) -> int:
    table = selftest_results(args.models or None, args.seed or 0)
    for row in table.itertuples():
        mark = "✅" if row.passed else "❌"
        print(f"{mark} {row.model:8s} stationary={row.stationary:.2e} collocation={row.collocation:.2e}")
    return EXIT_OK if table["passed"].all() else EXIT_SOLVER


# ─── Argument Parsing ───────────────────────────────────────────────────────

def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value or JSON config file")
    p.add_argument("--model", help=f"one of {sorted(MODEL_BUILDERS)}")
    p.add_argument("--param", action="append", help="parameter override name=value (repeatable)")
    p.add_argument("--active", help="continuation parameter")
    p.add_argument("--counts", help="grid points per axis, comma separated")
    p.add_argument("--steps", type=int)
    p.add_argument("--ds", type=float)
    p.add_argument("--ds-min", dest="ds_min", type=float)
    p.add_argument("--ds-max", dest="ds_max", type=float)
    p.add_argument("--lam-min", dest="lam_min", type=float)
    p.add_argument("--lam-max", dest="lam_max", type=float)
    p.add_argument("--m", type=int, help="time slices per orbit")
    p.add_argument("--xi", type=float)
    p.add_argument("--w-T", dest="w_T", type=float)
    p.add_argument("--parametrization", choices=["arclength", "natural"])
    p.add_argument("--shifts", help="detector shifts, comma separated")
    p.add_argument("--detector", choices=["auto", "manual"])
    p.add_argument("--n-eig", dest="n_eig", help="eigenvalues per shift, comma separated")
    p.add_argument("--mu1", type=float)
    p.add_argument("--mu2", type=float)
    p.add_argument("--omega-max", dest="omega_max", type=float)
    p.add_argument("--refresh", type=int, help="steps between shift re-estimation (auto detector)")
    p.add_argument("--max-bisect", dest="max_bisect", type=int)
    p.add_argument("--floquet", choices=["fa1", "fa2", "off"])
    p.add_argument("--n-plus", dest="n_plus", type=int)
    p.add_argument("--tol-fl", dest="tol_fl", type=float)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdecont", description="Continuation and Hopf bifurcation toolkit")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING (default from PDECONT_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("steady", help="stationary continuation with bifurcation detection")
    _add_run_flags(p)
    p.add_argument("--switch-bp", action="store_true", help="continue the branches bifurcating at BPs")

    p = sub.add_parser("hopf", help="orbit branches from Hopf point files")
    p.add_argument("points", nargs="+")
    p.add_argument("--jobs", type=int, default=1)
    _add_run_flags(p)

    p = sub.add_parser("floq", help="Floquet spectrum of an orbit point file")
    p.add_argument("point")
    p.add_argument("--algorithm", choices=["fa1", "fa2"])
    p.add_argument("--compare", action="store_true", help="also run the other algorithm and flag disagreement")
    p.add_argument("--excel", action="store_true", help="write an Excel workbook as well")
    _add_run_flags(p)

    p = sub.add_parser("plotdata", help="bifurcation diagram data from branch files")
    p.add_argument("branches", nargs="*")
    p.add_argument("--output")
    p.add_argument("--stem", default="diagram")
    p.add_argument("--oracle-k", dest="oracle_k", type=float, help="overlay the cGL plane-wave oracle for wave number k")

    p = sub.add_parser("timestep", help="integrate from a point file")
    p.add_argument("point")
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--n-steps", dest="n_steps", type=int, default=200)
    p.add_argument("--perturb", type=float, default=0.0, help="size of a random M-normalized perturbation")
    p.add_argument("--force", action="store_true", help="integrate even with backward diffusion")
    _add_run_flags(p)

    p = sub.add_parser("selftest", help="Jacobian consistency checks for all models")
    p.add_argument("--models", nargs="*")
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        if args.command == "steady":
            return cmd_steady(resolve_config(args), args.switch_bp)
        if args.command == "hopf":
            return cmd_hopf(args)
        if args.command == "floq":
            return cmd_floq(args)
        if args.command == "plotdata":
            return cmd_plotdata(args)
        if args.command == "timestep":
            return cmd_timestep(args)
        return cmd_selftest(args)
    except ConfigurationError as e:
        logger.error(f"Configuration error: {str(e)}")
        return EXIT_USAGE
    except PdeContError as e:
        logger.error(f"Solver failure: {str(e)}")
        return EXIT_SOLVER
    except Exception as e:
        logger.exception(f"Unexpected error: {str(e)}")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
