"""Command-line entry point.

    ammlab axioms --config pool.json
    ammlab experiment NAME --config exp.json [--seed N] [--paths N] [--threads N]

Exit codes: 0 when every check passes, 1 when one fails, 2 on a config error.
Output files carry the resolved config hash in their names and are written
next to a ``*.manifest.json`` describing the run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from ammlab import __version__
from ammlab.errors import AmmLabError, ConfigError
from ammlab.mev_estimator import (
    COUNTEREXAMPLE_COLUMNS,
    CheckResult,
    ExperimentConfig,
    counterexample_deviation,
    counterexample_replay,
    martingale_equality_experiment,
    mev_estimate_experiment,
    ordering_invariance_experiment,
    report_rows,
    subdivision_experiment,
    write_csv,
)
from ammlab.pool_core import ActionSampler, check_axioms
from ammlab.pools import pool_from_config

EXPERIMENTS = ("ordering-invariance", "subdivision", "martingale-equality", "counterexample", "mev-estimate")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

# half a unit in the last printed digit of the published table
PRINTED_TOLERANCE = 0.005


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    config_hash: str
    seed: int | None
    outputs: list[str] = field(default_factory=list)
    version: str = __version__
    duration_s: float = 0.0
    checks: list[dict] = field(default_factory=list)
    passed: bool = True

    def write(self, out_dir: Path) -> Path:
        path = out_dir / f"{self.command}-{self.config_hash}.manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2))
        return path


def config_hash(cfg: Any) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def load_json(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def _out_dir(arg: str | None) -> Path:
    out = Path(arg or os.environ.get("AMMLAB_OUT", "ammlab_out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------- axioms

_AXIOM_KEYS = {"pool", "n_trials", "seed", "sampler"}


def cmd_axioms(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    doc = load_json(args.config)
    if "pool" not in doc:
        doc = {"pool": doc}
    unknown = set(doc) - _AXIOM_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if args.seed is not None:
        doc["seed"] = args.seed
    pool = pool_from_config(doc["pool"])
    sampler_cfg = doc.get("sampler", {})
    if set(sampler_cfg) - {"price_lo", "price_hi", "max_chain"}:
        raise ConfigError("sampler takes price_lo, price_hi, max_chain")
    sampler = ActionSampler(**sampler_cfg)
    seed = int(doc.get("seed", 0))
    report = check_axioms(pool, sampler, int(doc.get("n_trials", 1000)), seed)

    h = config_hash(doc)
    out = _out_dir(args.out)
    report_path = out / f"axioms-{h}.json"
    report_path.write_text(report.to_json())
    manifest = RunManifest("axioms", args.config, h, seed, [str(report_path)])
    manifest.checks = [{"name": r.axiom, "passed": r.status == "pass", "detail": f"worst={r.worst_violation:.3g}"}
                       for r in report.results]
    manifest.passed = report.passed
    manifest.duration_s = time.perf_counter() - start
    manifest.write(out)
    for r in report.results:
        print(f"{r.axiom:28s} {r.status:5s} worst={r.worst_violation:.3g}")
    print(f"{report.pool}: {'PASS' if report.passed else 'FAIL'} -> {report_path}")
    return EXIT_PASS if report.passed else EXIT_FAIL


# --------------------------------------------------------------------------- experiments


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    doc = load_json(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.paths is not None:
        doc["n_paths"] = args.paths
    try:
        return ExperimentConfig.from_dict(doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _run_counterexample(args, out: Path) -> tuple[list[CheckResult], list[str], str, int | None]:
    if args.config:
        doc = load_json(args.config)
        if set(doc) - {"checks"} or set(doc.get("checks", {})) - {"tolerance"}:
            raise ConfigError("counterexample config takes only checks.tolerance")
        tol = float(doc.get("checks", {}).get("tolerance", PRINTED_TOLERANCE))
    else:
        doc, tol = {}, PRINTED_TOLERANCE
    rows = counterexample_replay()
    h = config_hash({"experiment": "counterexample", **doc})
    path = out / f"counterexample-{h}.csv"
    write_csv(path, rows, COUNTEREXAMPLE_COLUMNS)
    final = {r["strategy"]: r["cumulative"] for r in rows if r["block"] == 2}
    dev = counterexample_deviation(rows)
    checks = [
        CheckResult("matches_printed_table", dev <= tol, f"max deviation {dev:.3g} (tolerance {tol:g})"),
        CheckResult("target_strategy_beats_s0", final["S1"] > final["S0"], f"S1 - S0 = {final['S1'] - final['S0']:.6g}"),
    ]
    for r in rows:
        print(f"{r['strategy']} block {r['block']}: dx={r['dx']:.6g} dy={r['dy']:.10g} profit={r['profit']:.10g}")
    return checks, [str(path)], h, None


def _run_configured(name: str, args, out: Path) -> tuple[list[CheckResult], list[str], str, int | None]:
    cfg = _experiment_config(args)
    h = cfg.fingerprint()
    rows: list[dict] = []
    checks: list[CheckResult] = []
    base = {"experiment": name, "config_id": h, "n_paths": cfg.n_paths, "seed": cfg.seed}
    T = cfg.times()[-1]

    if name == "ordering-invariance":
        res = ordering_invariance_experiment(cfg, threads=args.threads)
        for r in res["rows"]:
            mech = f"{r['mechanism']}:m={r['m']}"
            rows.append({**base, "mechanism": mech, "t": T, "metric": "max_abs_diff_total_pnl",
                         "estimate": r["max_abs_diff"], "stderr": 0.0})
            rows.append({**base, "mechanism": mech, "t": T, "metric": "max_rel_diff_total_pnl",
                         "estimate": r["max_rel_diff"], "stderr": 0.0})
            checks.append(CheckResult(f"invariant[{mech}]", r["max_rel_diff"] <= 1e-9,
                                      f"max relative difference {r['max_rel_diff']:.3g}"))

    elif name == "subdivision":
        for k in cfg.subdivision:
            res = subdivision_experiment(cfg, int(k))
            mech = f"k={k}"
            for r in res["rows"]:
                for metric, est, se in (
                    ("expected_competitive_coarse", r["mev_coarse"], None),
                    ("expected_competitive_fine", r["mev_fine"], None),
                    ("expected_competitive_diff", r["mev_diff"], r["mev_diff_stderr"]),
                    ("noncompetitive_coarse", r["mev_star_coarse"], None),
                    ("noncompetitive_fine", r["mev_star_fine"], None),
                    ("noncompetitive_diff", r["mev_star_diff"], r["mev_star_diff_stderr"]),
                ):
                    rows.append({**base, "mechanism": mech, "t": r["t"], "metric": metric, "estimate": est,
                                 "stderr": "" if se is None else se})
            checks.append(CheckResult(f"competitive_{res['direction']}[k={k}]", res["mev_ok"]))
            checks.append(CheckResult(f"noncompetitive_equal[k={k}]", res["mev_star_ok"]))

    elif name == "martingale-equality":
        res = martingale_equality_experiment(cfg)
        for metric in ("s0", "deferred", "diff"):
            rows.append({**base, "mechanism": "any", "t": res["t"], "metric": metric,
                         "estimate": res[metric], "stderr": res[f"{metric}_stderr"]})
        checks.append(CheckResult(res["check"], res["passed"],
                                  f"diff {res['diff']:.6g} +- {res['diff_stderr']:.3g}"))

    elif name == "mev-estimate":
        res = mev_estimate_experiment(cfg)
        rows += [{**base, **r} for r in report_rows(name, res["competitive"])]
        rows += [{**base, **r} for r in report_rows(name, res["noncompetitive"])]
        for r in res["rows"]:
            rows.append({**base, "mechanism": "any", "t": r["t"], "metric": "competitive_minus_noncompetitive",
                         "estimate": r["diff"], "stderr": r["diff_stderr"]})
        checks.append(CheckResult("competitive_vs_noncompetitive", res["passed"]))

    path = out / f"{name}-{h}.csv"
    write_csv(path, rows)
    return checks, [str(path)], h, cfg.seed


def cmd_experiment(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    out = _out_dir(args.out)
    if args.name == "counterexample":
        checks, outputs, h, seed = _run_counterexample(args, out)
    else:
        if not args.config:
            raise ConfigError(f"experiment {args.name} needs --config")
        checks, outputs, h, seed = _run_configured(args.name, args, out)
    passed = all(c.passed for c in checks)
    manifest = RunManifest(f"experiment-{args.name}", args.config, h, seed, outputs,
                           checks=[asdict(c) for c in checks], passed=passed)
    manifest.duration_s = time.perf_counter() - start
    manifest.write(out)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name} {c.detail}".rstrip())
    return EXIT_PASS if passed else EXIT_FAIL


# --------------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ammlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ammlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help="output directory (default $AMMLAB_OUT or ./ammlab_out)")
        sp.add_argument("--seed", type=int, help="override the config's master seed")

    ax = sub.add_parser("axioms", help="run the pool axiom conformance suite")
    common(ax)

    ex = sub.add_parser("experiment", help="run a named experiment")
    ex.add_argument("name", choices=EXPERIMENTS)
    common(ex)
    ex.add_argument("--paths", type=int, help="override n_paths")
    ex.add_argument("--threads", type=int, default=1, help="worker processes (0 = one per CPU)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "axioms":
            if not args.config:
                raise ConfigError("axioms needs --config")
            return cmd_axioms(args)
        return cmd_experiment(args)
    except (ConfigError, AmmLabError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
