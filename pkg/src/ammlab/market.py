"""Block-based market: order submissions, drop inadmissible ones, execute."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

from ammlab.errors import ConfigError
from ammlab.pool_core import NULL, Action, Payoff, Pool
from ammlab.price_process import MASK64, PricePath, SplitMix64, splitmix64

MECHANISMS = ("fifo", "reverse", "uniform_random", "priority")


@dataclass(frozen=True)
class Submission:
    strategy_id: str
    action: Action


@dataclass(frozen=True)
class OrderingMechanism:
    kind: str = "fifo"
    priority: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in MECHANISMS:
            raise ConfigError(f"unknown ordering mechanism {self.kind!r}")

    @classmethod
    def from_config(cls, cfg: str | dict) -> "OrderingMechanism":
        if isinstance(cfg, str):
            return cls(cfg)
        unknown = set(cfg) - {"kind", "priority"}
        if unknown:
            raise ConfigError(f"unknown mechanism keys {sorted(unknown)}")
        return cls(cfg["kind"], tuple(cfg.get("priority", ())))

    @property
    def label(self) -> str:
        return self.kind if self.kind != "priority" else "priority(" + ",".join(self.priority) + ")"


def order_submissions(
    subs: Sequence[Submission], mech: OrderingMechanism, rng: SplitMix64 | None = None
) -> list[Submission]:
    """Permute ``subs`` according to ``mech``.

    ``priority`` is a stable bucket sort by position in ``mech.priority``;
    strategies not listed go last in input order.
    """
    out = list(subs)
    if mech.kind == "fifo":
        return out
    if mech.kind == "reverse":
        return out[::-1]
    if mech.kind == "priority":
        rank = {sid: i for i, sid in enumerate(mech.priority)}
        return sorted(out, key=lambda s: rank.get(s.strategy_id, len(rank)))
    if rng is None:
        raise ValueError("uniform_random ordering needs an rng")
    for i in range(len(out) - 1, 0, -1):
        j = rng.below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def filter_admissible(pool: Pool, s: Any, ordered: Sequence[Submission]) -> tuple[list[bool], Any]:
    """Greedy filter: keep each action iff admissible after the kept ones.

    Returns per-submission keep flags and the resulting state.
    """
    kept = []
    for sub in ordered:
        if pool.admissible(s, sub.action):
            s = pool.transition(s, sub.action)
            kept.append(True)
        else:
            kept.append(False)
    return kept, s


@dataclass
class ExecutedTrade:
    strategy_id: str
    action: Action
    payoff: Payoff
    underlying: Payoff
    volume: float


@dataclass
class BlockTrace:
    index: int
    time: float
    price: float
    state_before: Any
    state_after: Any
    ordered: list[Submission]
    dropped: list[bool]
    executed: list[ExecutedTrade]

    def payoff_of(self, strategy_id: str) -> Payoff:
        total = Payoff()
        for e in self.executed:
            if e.strategy_id == strategy_id:
                total = total + e.payoff
        return total

    def to_dict(self) -> dict:
        return {
            "block": self.index,
            "time": self.time,
            "price": self.price,
            "state_before": _jsonable(self.state_before),
            "state_after": _jsonable(self.state_after),
            "ordered": [s.strategy_id for s in self.ordered],
            "null": [s.action is NULL for s in self.ordered],
            "dropped": self.dropped,
            "executed": [
                {"strategy": e.strategy_id, "dx": e.payoff.dx, "dy": e.payoff.dy, "volume": e.volume}
                for e in self.executed
            ],
        }


def _jsonable(state: Any) -> Any:
    if hasattr(state, "_asdict"):
        return {k: _jsonable(v) for k, v in state._asdict().items()}
    return float(state)


def write_jsonl(traces: Sequence[BlockTrace], path) -> None:
    with open(path, "w") as fh:
        for tr in traces:
            fh.write(json.dumps(tr.to_dict()) + "\n")


@dataclass
class BlockContext:
    """What a strategy sees when deciding its block submissions."""

    pool: Pool
    index: int
    time: float
    price: float
    state: Any
    past_prices: tuple[float, ...]
    own_history: list[ExecutedTrade] = field(default_factory=list)


def block_rng(run_seed: int, block_index: int) -> SplitMix64:
    return SplitMix64(splitmix64((run_seed ^ block_index) & MASK64))


def step_block(
    pool: Pool,
    state: Any,
    submissions: Sequence[Submission],
    mech: OrderingMechanism,
    rng: SplitMix64 | None,
    price: float,
    index: int = 1,
    time: float = 0.0,
) -> BlockTrace:
    ordered = order_submissions(submissions, mech, rng)
    executed = []
    dropped = []
    s = state
    for sub in ordered:
        a = sub.action
        if pool.admissible(s, a):
            s = pool.transition(s, a)
            dropped.append(False)
            executed.append(
                ExecutedTrade(sub.strategy_id, a, pool.payoff(a), pool.underlying_payoff(a), pool.volume(a))
            )
        else:
            dropped.append(True)
    return BlockTrace(index, time, price, state, s, ordered, dropped, executed)


def run_market(
    pool: Pool,
    schedule: Sequence[float],
    strategies: Sequence[Any],
    mech: OrderingMechanism,
    path: PricePath,
    seed: int = 0,
    state: Any = None,
) -> list[BlockTrace]:
    """Drive ``strategies`` through every block of ``path``.

    Strategies are asked in list order; submission order into the ordering
    mechanism follows that order.
    """
    if len(schedule) != len(path.prices) or any(
        abs(a - b) > 1e-12 * max(1.0, abs(a)) for a, b in zip(schedule, path.times)
    ):
        raise ConfigError("price path is not aligned with the block schedule")
    ids = [st.id for st in strategies]
    if len(set(ids)) != len(ids):
        raise ConfigError("strategy ids must be unique")
    s = pool.initial_state() if state is None else state
    history: dict[str, list[ExecutedTrade]] = {sid: [] for sid in ids}
    traces = []
    for n, (t, price) in enumerate(zip(schedule, path.prices), start=1):
        past = (path.P0, *path.prices[: n - 1])
        subs = []
        for st in strategies:
            ctx = BlockContext(pool, n, t, price, s, past, history[st.id])
            subs.extend(Submission(st.id, a) for a in st.on_block(ctx))
        rng = block_rng(seed, n) if mech.kind == "uniform_random" else None
        trace = step_block(pool, s, subs, mech, rng, price, n, t)
        for e in trace.executed:
            history[e.strategy_id].append(e)
        for st in strategies:
            st.after_block(n, [e for e in trace.executed if e.strategy_id == st.id])
        traces.append(trace)
        s = trace.state_after
    return traces
