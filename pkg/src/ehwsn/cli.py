"""Command-line front end.

Every CSV starts with ``#`` comment lines holding the schema version, the
command arguments, the full configuration and (when used) the design, so
``ehwsn replay FILE`` regenerates the file byte for byte.

Exit codes: 0 success, 2 configuration error, 3 infeasible, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .battery import ChainError
from .config import ConfigError, config_to_dict, config_from_dict, dump_config, load_config
from .detection import QuadratureError
from .model import SWEEPABLE, apply_parameter, validate
from .optimize import (
    DesignPoint,
    design_from_dict,
    design_to_dict,
    evaluate_design,
    fixed_design,
    solve_p1,
    solve_p2,
)
from .simulate import approx_pe, default_workers, run_trials, trial_batch, write_trace

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4
SCHEMA_VERSION = 1
APPROX_DRAWS = 20000

SWEEP_COLUMNS = ["axis", "value", "status", "objective", "pe_mc", "ci95", "pe_low_snr", "pe_clt",
                 "p_tot", "j_tot", "mean_battery"]
SIMULATE_COLUMNS = ["trials", "seed", "evolve", "pe_mc", "ci95", "errors", "pe_low_snr", "pe_clt",
                    "j_tot", "divergence_bound"]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _header(command: list[str], config, design: DesignPoint | None) -> str:
    lines = [f"# ehwsn csv v{SCHEMA_VERSION}",
             "# command: " + json.dumps(command),
             "# config: " + json.dumps(config_to_dict(config), sort_keys=True)]
    if design is not None:
        lines.append("# design: " + json.dumps(design_to_dict(design), sort_keys=True))
    return "\n".join(lines) + "\n"


def _write_csv(path, header: str, columns, rows) -> None:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    Path(path).write_text(buf.getvalue())


def _csv_target(out, name: str) -> Path:
    path = Path(out)
    return path / name if path.is_dir() else path


def _design(args, config) -> DesignPoint:
    if getattr(args, "design", None):
        path = Path(args.design)
        if not path.is_file():
            raise ConfigError(f"design not found: {path}")
        try:
            return design_from_dict(config, yaml.safe_load(path.read_text()))
        except (ValueError, yaml.YAMLError) as exc:
            raise ConfigError(str(exc)) from exc
    mu = args.mu
    if mu is None:
        if config.policy.intervals != 2:
            raise ConfigError("--mu is required unless the policy has two gain intervals")
        mu = [1.0]
    try:
        return fixed_design(config, args.theta, mu)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _network_summary(config, design: DesignPoint):
    """Total averaged divergence, total average power and mean battery level over sensors."""
    j_tot = p_tot = b_sum = 0.0
    for n, sd in enumerate(design.sensors):
        j, p, chain = evaluate_design(config, n, sd)
        j_tot += j
        p_tot += p
        b_sum += chain.mean_energy
    return j_tot, p_tot, b_sum / len(design.sensors)


# -- commands -------------------------------------------------------------------

def cmd_steady_state(args, config, command):
    design = _design(args, config)
    if not 0 <= args.sensor < len(config.sensors):
        raise ConfigError(f"--sensor must lie in 0..{len(config.sensors) - 1}")
    _, _, chain = evaluate_design(config, args.sensor, design.sensors[args.sensor])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = _header(command, config, design)
    k = config.policy.capacity
    _write_csv(out / "psi.csv", header, [f"to_{j}" for j in range(k + 1)], chain.transition.tolist())
    _write_csv(out / "phi.csv", header, ["level", "probability"],
               [(i, float(p)) for i, p in enumerate(chain.steady)])
    _write_csv(out / "battery.csv", header, ["mean_battery", "p_empty", "p_full"],
               [(chain.mean_energy, float(chain.steady[0]), float(chain.steady[-1]))])
    return EXIT_OK


def _solve(config, problem, bound):
    return solve_p1(config, bound) if problem == "p1" else solve_p2(config, bound)


def cmd_optimize(args, config, command):
    bound = args.budget if args.problem == "p1" else args.floor
    if bound is None:
        raise ConfigError("--budget is required for p1" if args.problem == "p1" else "--floor is required for p2")
    report = _solve(config, args.problem, bound)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "design.yaml").write_text(yaml.safe_dump(design_to_dict(report.design), sort_keys=False))
    rows = [(n, sd.theta, sd.pd, sd.pf, " ".join(_fmt(m) for m in sd.thresholds[1:-1]),
             " ".join(_fmt(p) for p in sd.probs), report.constraint_values[n])
            for n, sd in enumerate(report.design.sensors)]
    _write_csv(out / "report.csv",
               _header(command, config, None) + f"# status: {report.status}\n"
               f"# objective: {_fmt(report.objective)}\n# evaluations: {report.evaluations}\n",
               ["sensor", "theta", "pd", "pf", "thresholds", "probs", "constraint"], rows)
    if report.status == "infeasible":
        print(f"infeasible: no design meets the {'budget' if args.problem == 'p1' else 'floor'} {bound}",
              file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _simulate_row(config, design, trials, seed, evolve, draws):
    est = run_trials(config, design, trials, seed, evolve=evolve)
    low, clt = approx_pe(config, design, draws, seed)
    j_tot, _, _ = _network_summary(config, design)
    bound = config.priors.pi0 * config.priors.pi1 * math.exp(-j_tot / 2.0)
    return [trials, seed, int(evolve), est.pe, est.ci95, est.errors, low, clt, j_tot, bound]


def cmd_simulate(args, config, command):
    design = _design(args, config)
    trials = args.trials if args.trials is not None else config.trials
    seed = args.seed if args.seed is not None else config.seed
    row = _simulate_row(config, design, trials, seed, args.evolve, args.approx_draws)
    _write_csv(_csv_target(args.out, "simulate.csv"), _header(command, config, design), SIMULATE_COLUMNS, [row])
    if args.trace:
        write_trace(args.trace, trial_batch(config, design, trials, seed, evolve=args.evolve))
    return EXIT_OK


def _sweep_point(job):
    config, axis, value, mode, trials, seed, draws = job
    point = apply_parameter(config, axis, value)
    problems = validate(point)
    if problems:
        raise ConfigError([f"{axis}={value}: {p}" for p in problems])
    if mode[0] == "fixed":
        design = fixed_design(point, mode[1], mode[2])
        status, objective = "fixed", None
    elif mode[0] == "design":
        design = design_from_dict(point, mode[1])
        status, objective = "fixed", None
    else:
        report = _solve(point, mode[0], mode[1])
        design, status, objective = report.design, report.status, report.objective
    est = run_trials(point, design, trials, seed)
    low, clt = approx_pe(point, design, draws, seed)
    j_tot, p_tot, b_mean = _network_summary(point, design)
    if objective is None:
        objective = j_tot
    return [axis, value, status, objective, est.pe, est.ci95, low, clt, p_tot, j_tot, b_mean]


def cmd_sweep(args, config, command):
    if args.axis is None:
        if not config.sweep:
            raise ConfigError("no sweep axis: pass --axis/--grid or add a sweep section")
        axis, grid = config.sweep[0]
    else:
        axis, grid = args.axis, args.grid or []
    if axis not in SWEEPABLE:
        raise ConfigError(f"unknown sweep parameter {axis!r}; choose from {', '.join(SWEEPABLE)}")
    if not grid:
        raise ConfigError(f"empty grid for sweep parameter {axis!r}")
    if args.problem:
        bound = args.budget if args.problem == "p1" else args.floor
        if bound is None:
            raise ConfigError("--budget is required for p1" if args.problem == "p1" else "--floor is required for p2")
        mode = (args.problem, bound)
        design = None
    elif args.design:
        raw = yaml.safe_load(Path(args.design).read_text()) if Path(args.design).is_file() else None
        if raw is None:
            raise ConfigError(f"design not found: {args.design}")
        mode = ("design", raw)
        design = design_from_dict(config, raw)
    else:
        mu = args.mu if args.mu is not None else [1.0]
        mode = ("fixed", args.theta, mu)
        design = None
    trials = args.trials if args.trials is not None else config.trials
    seed = args.seed if args.seed is not None else config.seed
    jobs = [(config, axis, float(v), mode, trials, seed, args.approx_draws) for v in grid]
    workers = default_workers()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    _write_csv(_csv_target(args.out, "sweep.csv"), _header(command, config, design), SWEEP_COLUMNS, rows)
    return EXIT_OK


def cmd_replay(args, _config, _command):
    lines = Path(args.file).read_text().splitlines()
    meta = {}
    for line in lines:
        if not line.startswith("# "):
            break
        key, _, val = line[2:].partition(": ")
        meta[key] = val
    if "command" not in meta or "config" not in meta:
        raise ConfigError(f"{args.file}: no replay header")
    command = json.loads(meta["command"])
    with tempfile.TemporaryDirectory() as tmp:
        cfg_path = Path(tmp) / "config.yaml"
        cfg_path.write_text(dump_config(config_from_dict(json.loads(meta["config"]))))
        argv = [str(cfg_path) if a == "<config>" else a for a in command]
        if "<design>" in argv:
            design_path = Path(tmp) / "design.yaml"
            design_path.write_text(yaml.safe_dump(json.loads(meta["design"])))
            argv = [str(design_path) if a == "<design>" else a for a in argv]
        return main(argv + ["--out", args.out])


# -- parser -----------------------------------------------------------------------

def _add_design_args(p):
    p.add_argument("--design", help="design file (YAML) from 'optimize'")
    p.add_argument("--theta", type=float, default=3.0, help="local threshold of the fixed design (default 3)")
    p.add_argument("--mu", type=float, nargs="+", help="inner quantizer thresholds of the fixed design (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ehwsn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("steady-state", help="battery transition matrix, steady state and mean level")
    p.add_argument("config")
    _add_design_args(p)
    p.add_argument("--sensor", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_steady_state)

    p = sub.add_parser("optimize", help="solve the power-budget (p1) or divergence-floor (p2) design problem")
    p.add_argument("config")
    p.add_argument("--problem", choices=("p1", "p2"), required=True)
    p.add_argument("--budget", type=float, help="per-sensor average power budget (p1)")
    p.add_argument("--floor", type=float, help="per-sensor averaged divergence floor (p2)")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", help="Monte Carlo error probability of a design")
    p.add_argument("config")
    _add_design_args(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--evolve", action="store_true", help="carry batteries across trials after a burn-in")
    p.add_argument("--approx-draws", type=int, default=APPROX_DRAWS)
    p.add_argument("--trace", help="also write one CSV row per trial here")
    p.add_argument("--out", default="simulate.csv", help="CSV file, or a directory to hold simulate.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="vary one parameter and tabulate P_e, power and battery")
    p.add_argument("config")
    p.add_argument("--axis", help="one of: " + ", ".join(SWEEPABLE))
    p.add_argument("--grid", type=float, nargs="*")
    p.add_argument("--problem", choices=("p1", "p2"), help="re-optimize at every grid point")
    p.add_argument("--budget", type=float)
    p.add_argument("--floor", type=float)
    _add_design_args(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--approx-draws", type=int, default=APPROX_DRAWS)
    p.add_argument("--out", default="sweep.csv", help="CSV file, or a directory to hold sweep.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("replay", help="regenerate a CSV from its header")
    p.add_argument("file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_replay)
    return parser


def _recorded_command(argv: list[str], args) -> list[str]:
    """Arguments with paths replaced by placeholders and ``--out`` dropped."""
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        if a == getattr(args, "config", None):
            a = "<config>"
        elif a == getattr(args, "design", None):
            a = "<design>"
        out.append(a)
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    np.seterr(all="ignore")
    try:
        config = None
        if args.cmd != "replay":
            config = load_config(args.config)
        return args.func(args, config, _recorded_command(argv, args))
    except ConfigError as exc:
        for m in exc.messages:
            print(f"error: {m}", file=sys.stderr)
        return EXIT_CONFIG
    except (ChainError, QuadratureError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
