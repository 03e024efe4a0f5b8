"""MEV estimators and the invariance experiments.

MEV quantities are never searched for directly.  Competitive MEV is the
uncontested PNL of the simple arbitrageur, and noncompetitive MEV at time ``t``
is the uncontested PNL of the strategy that defers a single optimal trade to
the last block at or before ``t``.  Randomised competitive sets are run only
as a check that nothing beats those values.

Monte Carlo runs use a vectorised kernel for curve pools (optionally fee
wrapped).  The block engine is the reference; tests pin the two together.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from ammlab.errors import ConfigError, PoolNotFrictionless, UnsupportedPool
from ammlab.market import OrderingMechanism, run_market, step_block, block_rng
from ammlab.pool_core import NULL, Pool
from ammlab.pools import (
    ConstantProductPool,
    CurvePool,
    FeeWrappedPool,
    LinearBookPool,
    pool_from_config,
)
from ammlab.price_process import PricePath, ProcessSpec, block_index_at, sample_paths, SplitMix64, substream_seed
from ammlab.strategies import (
    SimpleArbitrage,
    TargetPriceArbitrage,
    block_values,
    clone_set,
    random_competitive_set,
)

SIGMAS = 3.0


# --------------------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    pool: dict
    process: dict = field(default_factory=lambda: {"kind": "gbm", "sigma": 0.3})
    schedule: dict = field(default_factory=lambda: {"n_blocks": 20, "dt": 0.01})
    P0: float | None = None
    mechanisms: list = field(default_factory=lambda: ["fifo", "reverse", "uniform_random", "priority"])
    clones: list = field(default_factory=lambda: [1, 4])
    n_paths: int = 1000
    seed: int = 0
    eval_times: list | None = None
    subdivision: list = field(default_factory=lambda: [2])
    placement: str = "even"
    n_sets: int = 10
    checks: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "pool" not in d:
            raise ConfigError("config needs a 'pool'")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def validate(self) -> None:
        self.build_pool()
        self.process_spec()
        times = self.times()
        if self.eval_times is not None:
            ts = set(times)
            if any(t not in ts for t in self.eval_times):
                raise ConfigError("evaluation times must be block times")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        if any(int(k) < 2 for k in self.subdivision):
            raise ConfigError("subdivision factors must be >= 2")
        if self.placement not in ("even", "random"):
            raise ConfigError("placement must be 'even' or 'random'")
        for m in self.mechanisms:
            OrderingMechanism.from_config(m) if isinstance(m, dict) else OrderingMechanism(m)
        unknown = set(self.checks) - {"mev_direction", "sigmas"}
        if unknown:
            raise ConfigError(f"unknown check keys: {sorted(unknown)}")

    def build_pool(self) -> Pool:
        return pool_from_config(self.pool)

    def process_spec(self) -> ProcessSpec:
        return ProcessSpec.from_config(self.process)

    def times(self) -> list[float]:
        sch = self.schedule
        if "times" in sch:
            if set(sch) != {"times"}:
                raise ConfigError("schedule takes either 'times' or 'n_blocks'/'dt'")
            times = [float(t) for t in sch["times"]]
        else:
            unknown = set(sch) - {"n_blocks", "dt"}
            if unknown:
                raise ConfigError(f"unknown schedule keys: {sorted(unknown)}")
            n, dt = int(sch.get("n_blocks", 20)), float(sch.get("dt", 0.01))
            times = [dt * (i + 1) for i in range(n)]
        if not times or times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("block times must be positive and strictly increasing")
        return times

    def initial_price(self, pool: Pool | None = None) -> float:
        if self.P0 is not None:
            return float(self.P0)
        pool = pool or self.build_pool()
        price_of = getattr(pool, "price_of", None)
        if price_of is None:
            raise ConfigError("P0 must be given for this pool kind")
        return float(price_of(pool.initial_state()))

    @property
    def sigmas(self) -> float:
        return float(self.checks.get("sigmas", SIGMAS))


# --------------------------------------------------------------------------- reports


@dataclass
class MevRow:
    t: float
    estimate: float
    stderr: float
    n_paths: int


@dataclass
class MevReport:
    config_id: str
    metric: str
    rows: list[MevRow]
    seed: int = 0
    mechanism: str = "any"

    def at(self, t: float) -> MevRow:
        for r in self.rows:
            if r.t == t:
                return r
        raise KeyError(t)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


CSV_COLUMNS = ["experiment", "config_id", "mechanism", "t", "metric", "estimate", "stderr", "n_paths", "seed"]


def write_csv(path, rows: Sequence[dict], columns: Sequence[str] = CSV_COLUMNS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns))
        w.writeheader()
        for r in rows:
            w.writerow({c: r.get(c, "") for c in columns})


def report_rows(experiment: str, report: MevReport) -> list[dict]:
    return [
        {"experiment": experiment, "config_id": report.config_id, "mechanism": report.mechanism, "t": r.t,
         "metric": report.metric, "estimate": r.estimate, "stderr": r.stderr, "n_paths": r.n_paths,
         "seed": report.seed}
        for r in report.rows
    ]


def mean_stderr(x: np.ndarray) -> tuple[float, float]:
    n = len(x)
    if n < 2:
        return float(np.mean(x)), 0.0
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(n))


# --------------------------------------------------------------------------- vectorised kernel


def _curve_parts(pool: Pool) -> tuple[CurvePool, float]:
    if isinstance(pool, FeeWrappedPool):
        return pool.inner, pool.fee
    if isinstance(pool, CurvePool):
        return pool, 0.0
    raise UnsupportedPool(f"vectorised estimator supports curve pools only, not {pool.kind}")


def _targets(curve: CurvePool, fee: float, p: np.ndarray, price: np.ndarray, approx: bool = False) -> np.ndarray:
    if fee == 0:
        return curve.clamp(price)
    up = price > p * (1 + fee)
    down = price < p * (1 - fee)
    buy_to = price * (1 - fee) if approx else price / (1 + fee)
    sell_to = price * (1 + fee) if approx else price / (1 - fee)
    return curve.clamp(np.where(up, buy_to, np.where(down, sell_to, p)))


def _trade_values(curve: CurvePool, fee: float, p_from, p_to, price):
    x1, y1 = curve.reserves(p_from)
    x2, y2 = curve.reserves(p_to)
    dx = x1 - x2
    dy = y1 - y2
    return dx * price + dy - fee * np.abs(dy), np.abs(dy)


def s0_block_values(pool: Pool, prices: np.ndarray, approx: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Per-block value and underlying volume of the simple arbitrageur, shape
    ``prices.shape``; each row is one price path starting from the pool's
    initial state."""
    curve, fee = _curve_parts(pool)
    prices = np.atleast_2d(np.asarray(prices, dtype=float))
    p = np.full(prices.shape[0], curve.price_of(pool.initial_state()))
    values = np.empty_like(prices)
    vols = np.empty_like(prices)
    for j in range(prices.shape[1]):
        target = _targets(curve, fee, p, prices[:, j], approx)
        values[:, j], vols[:, j] = _trade_values(curve, fee, p, target, prices[:, j])
        p = target
    return values, vols


def deferred_values(pool: Pool, prices: np.ndarray) -> np.ndarray:
    """``[:, n-1]`` is the uncontested PNL of the strategy trading only on block ``n``."""
    curve, fee = _curve_parts(pool)
    prices = np.atleast_2d(np.asarray(prices, dtype=float))
    p0 = np.full(prices.shape, curve.price_of(pool.initial_state()))
    target = _targets(curve, fee, p0, prices)
    return _trade_values(curve, fee, p0, target, prices)[0]


# --------------------------------------------------------------------------- estimators


def pathwise_competitive_mev(pool: Pool, schedule: Sequence[float], path: PricePath) -> np.ndarray:
    """Cumulative uncontested PNL of the simple arbitrageur at each block time."""
    if not pool.frictionless:
        raise PoolNotFrictionless(f"{pool.kind} is not frictionless; the pathwise identity does not hold")
    traces = run_market(pool, schedule, [SimpleArbitrage()], OrderingMechanism("fifo"), path)
    return np.cumsum(block_values(traces))


def _paths(cfg: ExperimentConfig, times: Sequence[float] | None = None, n_paths: int | None = None) -> np.ndarray:
    spec = cfg.process_spec()
    return sample_paths(spec, times or cfg.times(), cfg.initial_price(), cfg.seed, n_paths or cfg.n_paths)


def _eval_indices(cfg: ExperimentConfig) -> list[tuple[float, int]]:
    times = cfg.times()
    ev = cfg.eval_times if cfg.eval_times is not None else times
    return [(float(t), block_index_at(times, t)) for t in ev]


def expected_mev(cfg: ExperimentConfig, prices: np.ndarray | None = None) -> MevReport:
    """Mean and standard error of the simple arbitrageur's cumulative PNL."""
    if not cfg.process_spec().is_martingale:
        raise ConfigError("expected MEV needs a martingale price process")
    pool = cfg.build_pool()
    prices = _paths(cfg) if prices is None else prices
    cum = np.cumsum(s0_block_values(pool, prices)[0], axis=1)
    rows = []
    for t, n in _eval_indices(cfg):
        est, se = mean_stderr(cum[:, n - 1]) if n else (0.0, 0.0)
        rows.append(MevRow(t, est, se, prices.shape[0]))
    return MevReport(cfg.fingerprint(), "expected_competitive", rows, cfg.seed)


def noncompetitive_mev(cfg: ExperimentConfig, t: float, prices: np.ndarray | None = None) -> MevRow:
    """Expected uncontested PNL of the strategy deferring one optimal trade to
    the last block at or before ``t``."""
    if not cfg.process_spec().is_martingale:
        raise ConfigError("noncompetitive MEV needs a martingale price process")
    n = block_index_at(cfg.times(), t)
    if n == 0:
        return MevRow(t, 0.0, 0.0, cfg.n_paths)
    pool = cfg.build_pool()
    prices = _paths(cfg) if prices is None else prices
    est, se = mean_stderr(deferred_values(pool, prices[:, n - 1 : n])[:, 0])
    return MevRow(t, est, se, prices.shape[0])


def noncompetitive_report(cfg: ExperimentConfig, prices: np.ndarray | None = None) -> MevReport:
    prices = _paths(cfg) if prices is None else prices
    rows = [noncompetitive_mev(cfg, t, prices) for t, _ in _eval_indices(cfg)]
    return MevReport(cfg.fingerprint(), "noncompetitive", rows, cfg.seed)


# --------------------------------------------------------------------------- engine experiments


def _map_paths(fn: Callable, n_paths: int, threads: int, args: tuple) -> list:
    """Apply ``fn(chunk_indices, *args)`` over path chunks; results in path order."""
    if threads == 0:
        import os

        threads = os.cpu_count() or 1
    idx = np.arange(n_paths)
    if threads <= 1 or n_paths < 2 * threads:
        return fn(idx, *args)
    chunks = np.array_split(idx, threads * 4)
    with ProcessPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(fn, chunks, *[[a] * len(chunks) for a in args]))
    return [r for part in parts for r in part]


def _mechanism(spec: Any, ids: Sequence[str]) -> OrderingMechanism:
    mech = OrderingMechanism.from_config(spec) if isinstance(spec, dict) else OrderingMechanism(spec)
    if mech.kind == "priority" and not mech.priority:
        # default priority: reverse of the submission order
        mech = OrderingMechanism("priority", tuple(reversed(ids)))
    return mech


def _ordering_chunk(indices, cfg_dict: dict) -> list[dict]:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    pool = cfg.build_pool()
    times = cfg.times()
    P0 = cfg.initial_price(pool)
    spec = cfg.process_spec()
    out = []
    for i in indices:
        prices = sample_paths(spec, times, P0, cfg.seed, 1, first_index=int(i))[0]
        path = PricePath(tuple(times), tuple(prices), P0)
        totals = {}
        executed_non_null = {}
        for mech_spec in cfg.mechanisms:
            for m in cfg.clones:
                strategies = clone_set(SimpleArbitrage(), int(m))
                mech = _mechanism(mech_spec, [s.id for s in strategies])
                traces = run_market(pool, times, strategies, mech, path, seed=substream_seed(cfg.seed, int(i)))
                totals[(mech.label if mech.kind != "priority" else "priority", int(m))] = float(
                    np.sum(block_values(traces))
                )
                executed_non_null[(mech.kind, int(m))] = max(
                    sum(1 for e in tr.executed if e.action is not NULL) for tr in traces
                )
        out.append({"path": int(i), "totals": totals, "max_non_null": executed_non_null})
    return out


def ordering_invariance_experiment(cfg: ExperimentConfig, threads: int = 1) -> dict:
    """Run clone sets of the simple arbitrageur under every mechanism.

    Returns per-(mechanism, m) maximum absolute and relative deviation of the
    per-path total PNL from the fifo, single-copy baseline.
    """
    if len(cfg.mechanisms) < 2:
        raise ConfigError("ordering invariance needs at least two mechanisms")
    results = _map_paths(_ordering_chunk, cfg.n_paths, threads, (cfg.to_dict(),))
    baseline_key = ("fifo", 1)
    table = {}
    for res in results:
        base = res["totals"].get(baseline_key)
        if base is None:
            base = next(iter(res["totals"].values()))
        for key, total in res["totals"].items():
            diff = abs(total - base)
            rel = diff / max(1.0, abs(base))
            row = table.setdefault(key, {"mechanism": key[0], "m": key[1], "max_abs_diff": 0.0, "max_rel_diff": 0.0,
                                         "max_non_null_per_block": 0})
            row["max_abs_diff"] = max(row["max_abs_diff"], diff)
            row["max_rel_diff"] = max(row["max_rel_diff"], rel)
        for key, cnt in res["max_non_null"].items():
            row = table.get(key)
            if row is not None:
                row["max_non_null_per_block"] = max(row["max_non_null_per_block"], cnt)
    rows = list(table.values())
    return {"rows": rows, "n_paths": cfg.n_paths, "passed": all(r["max_rel_diff"] <= 1e-9 for r in rows)}


def mutex_experiment(
    m_values: Sequence[int] = (2, 4, 8),
    mechanisms: Sequence[str] = ("fifo", "reverse", "uniform_random", "priority"),
    n_prices: int = 1000,
    seed: int = 0,
    pool: Pool | None = None,
    price_range: tuple[float, float] = (10.0, 1000.0),
) -> dict:
    """Single blocks with ``m`` copies of the optimal trade: count executions."""
    pool = pool or ConstantProductPool(1e6, 100.0)
    s = pool.initial_state()
    rng = SplitMix64(substream_seed(seed, 0))
    lo, hi = math.log(price_range[0]), math.log(price_range[1])
    violations = 0
    checked = 0
    for k in range(n_prices):
        price = math.exp(lo + (hi - lo) * rng.uniform())
        a = pool.optimal_action(s, price)
        positive = pool.payoff(a).value(price) > 0
        for m in m_values:
            from ammlab.market import Submission

            subs = [Submission(f"s0#{i}", a) for i in range(m)]
            for kind in mechanisms:
                mech = _mechanism(kind, [x.strategy_id for x in subs])
                trace = step_block(pool, s, subs, mech, block_rng(seed, k + 1), price, k + 1)
                non_null = sum(1 for e in trace.executed if e.action is not NULL)
                checked += 1
                if positive and non_null != 1:
                    violations += 1
                if not positive and non_null != 0:
                    violations += 1
    return {"checked": checked, "violations": violations, "passed": violations == 0}


def _dominance_chunk(indices, cfg_dict: dict) -> list[dict]:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    pool = cfg.build_pool()
    times = cfg.times()
    P0 = cfg.initial_price(pool)
    spec = cfg.process_spec()
    out = []
    for i in indices:
        prices = sample_paths(spec, times, P0, cfg.seed, 1, first_index=int(i))[0]
        path = PricePath(tuple(times), tuple(prices), P0)
        s0 = np.cumsum(block_values(run_market(pool, times, [SimpleArbitrage()], OrderingMechanism(), path)))
        rng = SplitMix64(substream_seed(cfg.seed ^ 0x5EED, int(i)))
        worst = -math.inf
        competitive = True
        for j in range(cfg.n_sets):
            m = 1 + rng.below(4)
            members = random_competitive_set(m, seed=rng.next_u64() & 0xFFFFFFFF)
            if rng.uniform() < 0.5:
                mech = OrderingMechanism("fifo")
                order = list(members)
            else:
                mech = OrderingMechanism("priority", tuple(s.id for s in members))
                order = list(members)
                for a in range(len(order) - 1, 0, -1):
                    b = rng.below(a + 1)
                    order[a], order[b] = order[b], order[a]
            traces = run_market(pool, times, order, mech, path)
            total = np.cumsum(block_values(traces))
            for tr in traces:
                if not pool.no_arb_check(tr.state_after, tr.price):
                    competitive = False
            scale = np.maximum(1.0, np.maximum(np.abs(s0), np.abs(prices)))
            worst = max(worst, float(np.max((total - s0) / scale)))
        out.append({"path": int(i), "worst_excess": worst, "competitive": competitive})
    return out


def dominance_experiment(cfg: ExperimentConfig, threads: int = 1) -> dict:
    """Randomised competitive sets never beat the simple arbitrageur pathwise."""
    pool = cfg.build_pool()
    if not pool.frictionless:
        raise PoolNotFrictionless("pathwise dominance holds only for frictionless pools")
    results = _map_paths(_dominance_chunk, cfg.n_paths, threads, (cfg.to_dict(),))
    worst = max(r["worst_excess"] for r in results)
    competitive = all(r["competitive"] for r in results)
    return {"worst_relative_excess": worst, "all_competitive": competitive, "n_paths": cfg.n_paths,
            "n_sets": cfg.n_sets, "passed": competitive and worst <= 1e-9}


# --------------------------------------------------------------------------- paired experiments


def martingale_equality_experiment(cfg: ExperimentConfig, prices: np.ndarray | None = None) -> dict:
    """Simple arbitrageur vs. deferral to the final block, on common paths."""
    pool = cfg.build_pool()
    prices = _paths(cfg) if prices is None else prices
    s0 = np.sum(s0_block_values(pool, prices)[0], axis=1)
    deferred = deferred_values(pool, prices[:, -1:])[:, 0]
    diff = s0 - deferred
    d_mean, d_se = mean_stderr(diff)
    s0_mean, s0_se = mean_stderr(s0)
    def_mean, def_se = mean_stderr(deferred)
    k = cfg.sigmas
    out = {
        "t": cfg.times()[-1],
        "s0": s0_mean, "s0_stderr": s0_se,
        "deferred": def_mean, "deferred_stderr": def_se,
        "diff": d_mean, "diff_stderr": d_se, "n_paths": prices.shape[0],
    }
    if pool.fee > 0:
        out["check"] = "s0 <= deferred + k*se"
        out["passed"] = d_mean <= k * d_se
    else:
        out["check"] = "|s0 - deferred| <= k*se"
        out["passed"] = abs(d_mean) <= k * d_se
    return out


def subdivide(times: Sequence[float], k: int, placement: str = "even", seed: int = 0) -> list[float]:
    """Insert ``k-1`` times inside each block interval (evenly or uniformly at random)."""
    out = []
    prev = 0.0
    rng = SplitMix64(substream_seed(seed, 0xB10C))
    for t in times:
        if placement == "even":
            inner = [prev + (t - prev) * j / k for j in range(1, k)]
        else:
            inner = sorted(prev + (t - prev) * rng.uniform() for _ in range(k - 1))
        out.extend(inner)
        out.append(float(t))
        prev = t
    return out


def subdivision_experiment(cfg: ExperimentConfig, k: int) -> dict:
    """Compare the coarse schedule with each block split into ``k`` blocks.

    Coarse prices are the fine path read at the coarse times, so both schedules
    see the same Brownian increments.
    """
    if k < 2:
        raise ConfigError("k must be >= 2")
    if not cfg.process_spec().is_martingale:
        raise ConfigError("subdivision experiment needs a martingale process")
    pool = cfg.build_pool()
    times = cfg.times()
    fine_times = subdivide(times, k, cfg.placement, cfg.seed)
    fine = _paths(cfg, fine_times)
    coarse_idx = np.array([fine_times.index(float(t)) for t in times])
    coarse = fine[:, coarse_idx]

    mev_c = np.cumsum(s0_block_values(pool, coarse)[0], axis=1)
    mev_f = np.cumsum(s0_block_values(pool, fine)[0], axis=1)[:, coarse_idx]
    star_c = deferred_values(pool, coarse)
    star_f = deferred_values(pool, fine[:, coarse_idx])

    direction = cfg.checks.get("mev_direction", "auto")
    if direction == "auto":
        direction = "nonincreasing" if pool.fee > 0 else "equal"
    if direction not in ("equal", "nonincreasing", "nondecreasing"):
        raise ConfigError(f"unknown mev_direction {direction!r}")
    sig = cfg.sigmas
    rows = []
    mev_ok = star_ok = True
    for t, n in _eval_indices(cfg):
        j = n - 1
        d_mean, d_se = mean_stderr(mev_f[:, j] - mev_c[:, j])
        s_mean, s_se = mean_stderr(star_f[:, j] - star_c[:, j])
        if direction == "equal":
            ok = abs(d_mean) <= sig * d_se
        elif direction == "nonincreasing":
            ok = d_mean <= sig * d_se
        else:
            ok = d_mean >= -sig * d_se
        s_ok = abs(s_mean) <= sig * s_se
        mev_ok &= ok
        star_ok &= s_ok
        rows.append({
            "t": t,
            "mev_coarse": float(mev_c[:, j].mean()), "mev_fine": float(mev_f[:, j].mean()),
            "mev_diff": d_mean, "mev_diff_stderr": d_se, "mev_ok": ok,
            "mev_star_coarse": float(star_c[:, j].mean()), "mev_star_fine": float(star_f[:, j].mean()),
            "mev_star_diff": s_mean, "mev_star_diff_stderr": s_se, "mev_star_ok": s_ok,
        })
    return {"k": k, "direction": direction, "rows": rows, "n_paths": fine.shape[0],
            "mev_ok": mev_ok, "mev_star_ok": star_ok, "passed": mev_ok and star_ok}


# --------------------------------------------------------------------------- counterexample


COUNTEREXAMPLE_COLUMNS = ["strategy", "block", "dx", "dy", "profit", "cumulative"]


def counterexample_replay() -> list[dict]:
    """Linear book with a 1% fee, external price 1 -> 100 -> 1.

    The simple arbitrageur (with the rounded fee targets) against a strategy
    that pushes the pool price to 101 and then 1.01; each runs uncontested.
    """
    pool = FeeWrappedPool(LinearBookPool(1.0), 0.01)
    times = (1.0, 2.0)
    path = PricePath(times, (100.0, 1.0), 1.0)
    rows = []
    for strategy in (SimpleArbitrage("S0", approx=True), TargetPriceArbitrage([101.0, 1.01], "S1")):
        traces = run_market(pool, times, [strategy], OrderingMechanism(), path)
        cumulative = 0.0
        for tr in traces:
            pay = tr.payoff_of(strategy.id)
            profit = pay.value(tr.price)
            cumulative += profit
            rows.append({"strategy": strategy.id, "block": tr.index, "dx": pay.dx, "dy": pay.dy,
                         "profit": profit, "cumulative": cumulative})
    return rows


def mev_estimate_experiment(cfg: ExperimentConfig) -> dict:
    """Competitive and noncompetitive MEV on common paths, with the paired
    comparison at every evaluation time (equal without fees, ordered with)."""
    pool = cfg.build_pool()
    prices = _paths(cfg)
    competitive = expected_mev(cfg, prices)
    noncompetitive = noncompetitive_report(cfg, prices)
    cum = np.cumsum(s0_block_values(pool, prices)[0], axis=1)
    star = deferred_values(pool, prices)
    sig = cfg.sigmas
    rows = []
    ok = True
    for t, n in _eval_indices(cfg):
        if n == 0:
            rows.append({"t": t, "diff": 0.0, "diff_stderr": 0.0, "ok": True})
            continue
        d_mean, d_se = mean_stderr(cum[:, n - 1] - star[:, n - 1])
        row_ok = d_mean <= sig * d_se if pool.fee > 0 else abs(d_mean) <= sig * d_se
        ok &= row_ok
        rows.append({"t": t, "diff": d_mean, "diff_stderr": d_se, "ok": row_ok})
    return {"competitive": competitive, "noncompetitive": noncompetitive, "rows": rows, "passed": ok}


# printed values: (strategy, block) -> (dx, dy, profit)
PRINTED_COUNTEREXAMPLE = {
    ("S0", 1): (98.0, -4949.0, 4851.0),
    ("S1", 1): (100.0, -5151.0, 4849.0),
    ("S0", 2): (-97.99, 4850.99, 4753.0),
    ("S1", 2): (-99.99, 5048.99, 4949.0),
}


def counterexample_deviation(rows: Sequence[dict]) -> float:
    """Largest absolute gap between the replay and the printed table."""
    worst = 0.0
    for r in rows:
        dx, dy, profit = PRINTED_COUNTEREXAMPLE[(r["strategy"], r["block"])]
        worst = max(worst, abs(r["dx"] - dx), abs(r["dy"] - dy), abs(r["profit"] - profit))
    return worst
