"""Command-line entry point: ``drbqo run <config>`` and ``drbqo solve-weights``.

Config files are flat ``key = value`` text, one pair per line, ``#`` starts a
comment and lists are comma-separated.  See ``CONFIG_KEYS`` for the accepted
keys; anything else is rejected with the offending line number.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from .acquisition import CandidatePolicy, RunConfig
from .baselines import AlgorithmId
from .bench import ExperimentConfig, run_experiment
from .errors import ConfigurationError, DRBQOError
from .robust_weights import ChiSquareBall, solve

OUTPUT_ENV = "DRBQO_OUTPUT_DIR"
KERNELS = {
    "se": ("se", 2.5),
    "matern12": ("matern", 0.5),
    "matern32": ("matern", 1.5),
    "matern52": ("matern", 2.5),
}


class ConfigError(ConfigurationError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _bool(s):
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _list(conv):
    return lambda s: tuple(conv(v.strip()) for v in s.split(",") if v.strip())


def _algorithms(s):
    names = _list(str)(s)
    for name in names:
        AlgorithmId.parse(name)
    return names


def _kernel(s):
    if s not in KERNELS:
        raise ValueError(f"unknown kernel {s!r}; choose from {sorted(KERNELS)}")
    return s


def _choice(*options):
    def conv(s):
        if s not in options:
            raise ValueError(f"expected one of {options}, got {s!r}")
        return s
    return conv


CONFIG_KEYS = {
    "problem": _choice("logistic", "branin", "levy", "hartmann3"),
    "d": int,
    "n": int,
    "noise_sd": float,
    "domain": _list(float),
    "context_sd": float,
    "problem_seed": int,
    "algorithms": _algorithms,
    "rho": _list(float),
    "T": int,
    "repetitions": int,
    "master_seed": int,
    "kernel": _kernel,
    "theta": float,
    "psi": float,
    "learn": _bool,
    "gp_noise_var": float,
    "candidate_mode": _choice("fresh", "fixed"),
    "candidates": int,
    "grid_cap": int,
    "init_size": int,
    "w_selection": _choice("variance", "random"),
    "regret_grid": int,
    "output_dir": str,
}


def parse_config_text(text):
    """Parse config text into a dict of converted values."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        try:
            values[key] = CONFIG_KEYS[key](value)
        except (ValueError, ConfigurationError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno) from None
    return values


def build_config(values):
    """Turn parsed values into an :class:`ExperimentConfig` and an output directory."""
    domain = values.get("domain", (-3.0, 3.0))
    if len(domain) != 2 or domain[0] >= domain[1]:
        raise ConfigError("domain must be 'low, high' with low < high")
    family, nu = KERNELS[values.get("kernel", "se")]
    rhos = values.get("rho", (1.0,))
    if not rhos or any(r < 0 for r in rhos):
        raise ConfigError("rho must be a nonempty list of nonnegative values")
    for key in ("T", "repetitions", "n", "d", "candidates"):
        if key in values and values[key] < (0 if key == "T" else 1):
            raise ConfigError(f"{key} is out of range")
    policy = CandidatePolicy(values.get("candidate_mode", "fresh"),
                             values.get("candidates", 200),
                             values.get("grid_cap", 2048))
    n = values.get("n", 10)
    if policy.count * n > policy.cap:
        raise ConfigError(f"candidates x n = {policy.count * n} exceeds grid_cap {policy.cap}")
    run = RunConfig(
        T=values.get("T", 60),
        init_size=values.get("init_size"),
        kernel=family,
        nu=nu,
        theta=values.get("theta", 0.2),
        psi=values.get("psi", values.get("theta", 0.2)),
        learn=values.get("learn", True),
        noise_var=values.get("gp_noise_var", 1e-3),
        candidates=policy,
        w_selection=values.get("w_selection", "variance"),
    )
    cfg = ExperimentConfig(
        problem=values.get("problem", "logistic"),
        d=values.get("d", 2),
        n=n,
        noise_sd=values.get("noise_sd", 0.01),
        domain=tuple(domain),
        context_sd=values.get("context_sd", 0.1),
        problem_seed=values.get("problem_seed"),
        algorithms=values.get("algorithms", ("DRBQO", "BQO_TS", "BQO_EI")),
        rhos=rhos,
        repetitions=values.get("repetitions", 10),
        master_seed=values.get("master_seed", 0),
        run=run,
        regret_grid=values.get("regret_grid"),
    )
    return cfg, values.get("output_dir", "results")


def fmt(v):
    return format(float(v), ".12g")


def raw_header(d):
    return (["algorithm", "rho", "repetition", "iteration"]
            + [f"x{j + 1}" for j in range(d)]
            + ["w_index", "y"]
            + [f"report_x{j + 1}" for j in range(d)]
            + ["rho_regret", "empirical_value"])


SUMMARY_HEADER = ["algorithm", "rho", "iteration", "mean_regret", "ci96_regret",
                  "mean_empirical", "ci96_empirical", "log10_mean_regret"]


def write_raw(path, results, d):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(raw_header(d))
        for res in results:
            if not res.ok:
                continue
            for i, rec in enumerate(res.trace.records):
                w.writerow([res.algorithm, fmt(res.rho), res.repetition, rec.t]
                           + [fmt(v) for v in rec.x]
                           + [rec.w_index, fmt(rec.y)]
                           + [fmt(v) for v in rec.report_x]
                           + [fmt(res.regret[i]), fmt(res.empirical[i])])


def write_summary(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for row in rows:
            w.writerow([row["algorithm"], fmt(row["rho"]), row["iteration"]]
                       + [fmt(row[k]) for k in SUMMARY_HEADER[3:]])


def read_raw(path):
    """Load ``raw.csv`` back as a list of dicts with numeric fields converted."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for k, v in row.items():
            if k != "algorithm":
                row[k] = float(v)
    return rows


def cmd_run(config_path, jobs=None, seed=None, out=None, err=None):
    out, err = out or sys.stdout, err or sys.stderr
    try:
        text = Path(config_path).read_text()
        values = parse_config_text(text)
        if seed is not None:
            values["master_seed"] = seed
        cfg, out_dir = build_config(values)
    except (OSError, ConfigurationError) as exc:
        print(f"config error: {config_path}: {exc}", file=err)
        return 1
    out_dir = Path(os.environ.get(OUTPUT_ENV) or out_dir)
    results, summary, _ = run_experiment(cfg, jobs=jobs if jobs is not None else 1)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem, _ = cfg.problem_and_contexts()
    write_raw(out_dir / "raw.csv", results, problem.d)
    write_summary(out_dir / "summary.csv", summary)
    resolved = dict(values, master_seed=cfg.master_seed, output_dir=str(out_dir))
    (out_dir / "config.resolved.txt").write_text(
        "".join(f"{k} = {_render(v)}\n" for k, v in sorted(resolved.items())))
    failed = [r for r in results if not r.ok]
    if failed:
        with open(out_dir / "failed.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["algorithm", "rho", "repetition", "error"])
            for r in failed:
                w.writerow([r.algorithm, fmt(r.rho), r.repetition, r.error])
        print(f"{len(failed)} of {len(results)} runs failed; see failed.csv", file=err)
        return 2
    print(f"wrote {out_dir / 'raw.csv'} and {out_dir / 'summary.csv'}", file=out)
    return 0


def _render(v):
    if isinstance(v, (tuple, list)):
        return ", ".join(str(x) for x in v)
    return str(v)


def cmd_solve_weights(l, rho, eps=None, out=None, err=None):
    out, err = out or sys.stdout, err or sys.stderr
    try:
        losses = np.array([float(v) for v in l.split(",")])
        rho = float(rho)
        eps = None if eps is None else float(eps)
        if len(losses) < 2:
            raise ValueError("need at least two loss values")
        sol = solve(losses, ChiSquareBall(len(losses), rho), eps=eps)
    except (ValueError, DRBQOError) as exc:
        print(f"error: {exc}", file=err)
        return 1
    row = [str(len(losses)), fmt(rho), fmt(sol.lam), fmt(sol.eta), fmt(sol.value)]
    row += [fmt(v) for v in sol.p]
    print(",".join(row), file=out)
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="drbqo",
                                     description="Distributionally robust quadrature optimisation")
    parser.add_argument("--jobs", type=int, default=None,
                        help="parallel repetitions (default: number of processors)")
    parser.add_argument("--seed", type=int, default=None, help="override master_seed")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--jobs", type=int, default=argparse.SUPPRESS)
    p_run.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p_solve = sub.add_parser("solve-weights", help="solve one worst-case weight problem")
    p_solve.add_argument("--l", required=True, help="comma-separated loss values")
    p_solve.add_argument("--rho", required=True)
    p_solve.add_argument("--eps", default=None)
    args = parser.parse_args(argv)
    if args.command == "run":
        jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
        return cmd_run(args.config, jobs=jobs, seed=args.seed)
    return cmd_solve_weights(args.l, args.rho, args.eps)


if __name__ == "__main__":
    sys.exit(main())
