"""Trading strategies and self-financing PNL accounting."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from ammlab.errors import CompetitivenessViolation, ConfigError, UnsupportedPool
from ammlab.market import BlockContext, BlockTrace, ExecutedTrade
from ammlab.pool_core import NULL, Action, Pool, compose, isclose
from ammlab.pools import CurvePool, FeeWrappedPool
from ammlab.price_process import PricePath, SplitMix64, block_index_at, splitmix64


class Strategy:
    """Base strategy: submits nothing and never holds the risky asset externally."""

    def __init__(self, id: str) -> None:
        self.id = id

    def on_block(self, ctx: BlockContext) -> list[Action]:
        return []

    def after_block(self, n: int, executed: list[ExecutedTrade]) -> None:
        pass

    def holdings(self) -> dict[int, float]:
        """External x position held after each block (missing blocks hold 0)."""
        return {}

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.id!r})"


def best_action(pool: Pool, s: Any, price: float, approx: bool = False) -> Action:
    if approx and isinstance(pool, FeeWrappedPool):
        return pool.optimal_action(s, price, approx=True)
    return pool.optimal_action(s, price)


class SimpleArbitrage(Strategy):
    """Submits the value-maximising trade every block.

    ``approx`` reproduces the rounded fee targets ``P(1-fee)`` / ``P(1+fee)``.
    """

    def __init__(self, id: str = "s0", approx: bool = False) -> None:
        super().__init__(id)
        self.approx = approx

    def on_block(self, ctx: BlockContext) -> list[Action]:
        return [best_action(ctx.pool, ctx.state, ctx.price, self.approx)]


def simple_arb_on_block(ctx: BlockContext, approx: bool = False) -> list[Action]:
    return [best_action(ctx.pool, ctx.state, ctx.price, approx)]


class DeferredArbitrage(Strategy):
    """Idle until block ``n_star``, then one optimal trade, then idle again."""

    def __init__(self, n_star: int, id: str | None = None) -> None:
        if n_star < 1:
            raise ConfigError("n_star must be >= 1")
        super().__init__(id or f"deferred{n_star}")
        self.n_star = n_star

    def on_block(self, ctx: BlockContext) -> list[Action]:
        if ctx.index == self.n_star:
            return [ctx.pool.optimal_action(ctx.state, ctx.price)]
        return [NULL]


def deferred_arb(n_star: int) -> DeferredArbitrage:
    return DeferredArbitrage(n_star)


def competitive_band(pool: Pool, price: float) -> tuple[float, float]:
    if isinstance(pool, FeeWrappedPool):
        return pool.band(price)
    if isinstance(pool, CurvePool):
        p = pool.clamp(price)
        return p, p
    raise UnsupportedPool(f"no pool-price band for {pool.kind}")


class TargetPriceArbitrage(Strategy):
    """Moves the pool price to ``targets[n-1]`` on block ``n``.

    Each target must leave the pool in a no-arbitrage state for that block's
    price; otherwise CompetitivenessViolation is raised when the block runs.
    """

    def __init__(self, targets: Sequence[float], id: str = "target") -> None:
        super().__init__(id)
        self.targets = tuple(float(t) for t in targets)

    def on_block(self, ctx: BlockContext) -> list[Action]:
        if ctx.index > len(self.targets):
            return [NULL]
        target = self.targets[ctx.index - 1]
        check_competitive_target(ctx.pool, ctx.price, target)
        return [ctx.pool.move_to_price(ctx.state, target)]  # type: ignore[attr-defined]


def check_competitive_target(pool: Pool, price: float, target: float) -> None:
    lo, hi = competitive_band(pool, price)
    if not ((target >= lo or isclose(target, lo)) and (target <= hi or isclose(target, hi))):
        raise CompetitivenessViolation(f"target {target} outside no-arbitrage band [{lo}, {hi}] at price {price}")


def target_price_arb(targets: Sequence[float]) -> TargetPriceArbitrage:
    return TargetPriceArbitrage(targets)


class ReconciledArbitrage(Strategy):
    """Trades like the simple arbitrageur, and on ``final_block`` appends a
    trade taking the pool to pool price ``end_price``."""

    def __init__(self, final_block: int, end_price: float, id: str = "s0_reconciled") -> None:
        super().__init__(id)
        self.final_block = final_block
        self.end_price = end_price

    def on_block(self, ctx: BlockContext) -> list[Action]:
        a = ctx.pool.optimal_action(ctx.state, ctx.price)
        if ctx.index != self.final_block:
            return [a]
        mid = ctx.pool.transition(ctx.state, a)
        return [compose(a, ctx.pool.move_to_price(mid, self.end_price))]  # type: ignore[attr-defined]


class HedgedArbitrage(Strategy):
    """Wraps a strategy and keeps its on-chain inventory instead of selling it
    in the external market: external position after block ``j`` is the
    cumulative executed ``dx``."""

    def __init__(self, base: Strategy, id: str | None = None) -> None:
        super().__init__(id or f"hedged_{base.id}")
        self.base = base
        self._position = 0.0
        self._holdings: dict[int, float] = {}

    def on_block(self, ctx: BlockContext) -> list[Action]:
        return self.base.on_block(ctx)

    def after_block(self, n: int, executed: list[ExecutedTrade]) -> None:
        self._position += sum(e.payoff.dx for e in executed)
        self._holdings[n] = self._position

    def holdings(self) -> dict[int, float]:
        return dict(self._holdings)


def clone_set(base: Strategy, m: int) -> list[Strategy]:
    """``m`` independent copies of ``base`` with distinct ids."""
    if m < 1:
        raise ConfigError("m must be >= 1")
    if m == 1:
        return [base]
    out = []
    for i in range(m):
        c = copy.deepcopy(base)
        c.id = f"{base.id}#{i}"
        out.append(c)
    return out


# --------------------------------------------------------------------------- competitive sets


class _ChainPlan:
    """Per-block plan shared by the members of a randomised competitive set.

    The block's trades form a chain of atomic moves from the current state
    through random waypoints to a final pool price inside the no-arbitrage
    band.  Pieces are split contiguously over the members in emission order;
    every member also appends a direct move to the final state, which only
    executes if nothing before it did.
    """

    def __init__(self, m: int, seed: int, max_pieces: int, spread: float) -> None:
        self.m = m
        self.seed = seed
        self.max_pieces = max_pieces
        self.spread = spread
        self._block = -1
        self._assignment: list[list[Action]] = []

    def plan(self, ctx: BlockContext) -> list[list[Action]]:
        if ctx.index == self._block:
            return self._assignment
        pool = ctx.pool
        rng = SplitMix64(splitmix64(self.seed * 1_000_003 + ctx.index))
        lo, hi = competitive_band(pool, ctx.price)
        end = lo if lo == hi else math.exp(math.log(lo) + rng.uniform() * (math.log(hi) - math.log(lo)))
        n_pieces = 1 + rng.below(self.max_pieces)
        here = pool.price_of(ctx.state)  # type: ignore[attr-defined]
        prices = []
        for _ in range(n_pieces - 1):
            z = math.sqrt(-2 * math.log(rng.uniform())) * math.cos(2 * math.pi * rng.uniform())
            anchor = here if rng.uniform() < 0.5 else end
            prices.append(anchor * math.exp(self.spread * z))
        prices.append(end)
        pieces = []
        s = ctx.state
        for p in prices:
            a = pool.move_to_price(s, p)  # type: ignore[attr-defined]
            if a is not NULL:
                pieces.append(a)
                s = pool.transition(s, a)
        final_state = s
        cuts = sorted(rng.below(len(pieces) + 1) for _ in range(self.m - 1))
        bounds = [0, *cuts, len(pieces)]
        direct = pool.move_to_price(ctx.state, pool.price_of(final_state))  # type: ignore[attr-defined]
        self._assignment = [pieces[bounds[i]:bounds[i + 1]] + [direct] for i in range(self.m)]
        self._block = ctx.index
        return self._assignment


class ChainMember(Strategy):
    def __init__(self, id: str, slot: int, plan: _ChainPlan) -> None:
        super().__init__(id)
        self.slot = slot
        self.plan = plan

    def on_block(self, ctx: BlockContext) -> list[Action]:
        return list(self.plan.plan(ctx)[self.slot])


def random_competitive_set(m: int, seed: int, max_pieces: int = 4, spread: float = 0.2,
                           prefix: str = "c") -> list[Strategy]:
    """``m`` concurrent arbitrage strategies that jointly end every block in a
    no-arbitrage state, provided their submissions are emitted in list order
    (fifo, or priority with the list order)."""
    plan = _ChainPlan(m, seed, max_pieces, spread)
    return [ChainMember(f"{prefix}{i}", i, plan) for i in range(m)]


# --------------------------------------------------------------------------- PNL


@dataclass(frozen=True)
class PnlRecord:
    t: float
    pnl: float
    onchain: float
    external: float

    def __add__(self, other: "PnlRecord") -> "PnlRecord":
        return PnlRecord(self.t, self.pnl + other.pnl, self.onchain + other.onchain, self.external + other.external)


def pnl(
    traces: Sequence[BlockTrace],
    strategy_id: str,
    path: PricePath,
    t: float,
    holdings: dict[int, float] | None = None,
) -> PnlRecord:
    """Self-financing PNL at time ``t``.

    On-chain part: executed payoffs marked at their block price.  External
    part: piecewise-constant x holdings times price increments between block
    times up to the last block at or before ``t``.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    n = block_index_at(path.times, t)
    onchain = 0.0
    for tr in traces[:n]:
        for e in tr.executed:
            if e.strategy_id == strategy_id:
                onchain += e.payoff.value(tr.price)
    external = 0.0
    if holdings:
        prices = (path.P0, *path.prices)
        for j in range(1, n):
            external += holdings.get(j, 0.0) * (prices[j + 1] - prices[j])
    return PnlRecord(t, onchain + external, onchain, external)


def sum_strategies(
    traces: Sequence[BlockTrace],
    ids: Iterable[str],
    path: PricePath,
    t: float,
    holdings: dict[str, dict[int, float]] | None = None,
) -> PnlRecord:
    holdings = holdings or {}
    total = PnlRecord(t, 0.0, 0.0, 0.0)
    for sid in ids:
        total = total + pnl(traces, sid, path, t, holdings.get(sid))
    return total


def block_values(traces: Sequence[BlockTrace], ids: Iterable[str] | None = None) -> np.ndarray:
    """Per-block on-chain value of executed trades (optionally restricted to ``ids``)."""
    wanted = None if ids is None else set(ids)
    out = np.zeros(len(traces))
    for k, tr in enumerate(traces):
        out[k] = sum(e.payoff.value(tr.price) for e in tr.executed if wanted is None or e.strategy_id in wanted)
    return out


def executed_volume(traces: Sequence[BlockTrace], ids: Iterable[str] | None = None) -> float:
    wanted = None if ids is None else set(ids)
    return sum(e.volume for tr in traces for e in tr.executed if wanted is None or e.strategy_id in wanted)


# --------------------------------------------------------------------------- config


_STRATEGY_KEYS = {
    "s0": {"kind", "id", "approx"},
    "deferred": {"kind", "id", "n_star"},
    "target_price": {"kind", "id", "targets"},
    "clone_set": {"kind", "base", "m"},
    "hedged_s0": {"kind", "id", "approx"},
}


def strategy_from_config(cfg: dict) -> list[Strategy]:
    """``{kind: s0|deferred|target_price|clone_set|hedged_s0, ...}`` -> strategies."""
    kind = cfg.get("kind")
    if kind not in _STRATEGY_KEYS:
        raise ConfigError(f"unknown strategy kind {kind!r}")
    unknown = set(cfg) - _STRATEGY_KEYS[kind]
    if unknown:
        raise ConfigError(f"unknown keys for {kind} strategy: {sorted(unknown)}")
    try:
        if kind == "s0":
            return [SimpleArbitrage(cfg.get("id", "s0"), bool(cfg.get("approx", False)))]
        if kind == "deferred":
            return [DeferredArbitrage(int(cfg["n_star"]), cfg.get("id"))]
        if kind == "target_price":
            return [TargetPriceArbitrage(cfg["targets"], cfg.get("id", "target"))]
        if kind == "hedged_s0":
            return [HedgedArbitrage(SimpleArbitrage("s0", bool(cfg.get("approx", False))), cfg.get("id"))]
        (base,) = strategy_from_config(cfg["base"])
        return clone_set(base, int(cfg["m"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad {kind} strategy config: {exc}") from exc
