from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ammlab.errors import CompetitivenessViolation, ConfigError
from ammlab.market import OrderingMechanism, run_market
from ammlab.pool_core import NULL, Payoff
from ammlab.pools import ConstantProductPool, FeeWrappedPool, LinearBookPool
from ammlab.price_process import PricePath, ProcessSpec, SplitMix64, sample_path
from ammlab.strategies import (
    DeferredArbitrage,
    HedgedArbitrage,
    ReconciledArbitrage,
    SimpleArbitrage,
    Strategy,
    TargetPriceArbitrage,
    block_values,
    clone_set,
    competitive_band,
    executed_volume,
    pnl,
    random_competitive_set,
    strategy_from_config,
    sum_strategies,
)

SCHED = tuple(0.01 * (i + 1) for i in range(20))
FIFO = OrderingMechanism("fifo")


def gbm_path(seed, P0=100.0, sigma=0.3, sched=SCHED):
    return sample_path(ProcessSpec("gbm", sigma=sigma), sched, P0, seed)


def counterexample():
    pool = FeeWrappedPool(LinearBookPool(1.0), 0.01)
    return pool, PricePath((1.0, 2.0), (100.0, 1.0), 1.0)


# --------------------------------------------------------------------------- single strategies


def test_s0_examples():
    pool = ConstantProductPool.from_reserves(100.0, 10000.0)
    traces = run_market(pool, (1.0, 2.0), [SimpleArbitrage()], FIFO, PricePath((1.0, 2.0), (100.0, 121.0), 100.0))
    assert traces[0].executed[0].action is NULL
    assert traces[1].payoff_of("s0") == pytest.approx((100 - 1000 / 11, -1000.0))

    pool, path = counterexample()
    traces = run_market(pool, path.times, [SimpleArbitrage(approx=True)], FIFO, path)
    assert traces[0].payoff_of("s0") == pytest.approx((98.0, -4949.0))


def test_deferred_first_block_equals_s0():
    pool = ConstantProductPool(1e6, 100.0)
    path = gbm_path(1)
    a = run_market(pool, SCHED, [SimpleArbitrage()], FIFO, path)[0]
    b = run_market(pool, SCHED, [DeferredArbitrage(1)], FIFO, path)[0]
    assert a.state_after == b.state_after
    with pytest.raises(ConfigError):
        DeferredArbitrage(0)


def test_target_price_counterexample_and_violation():
    pool, path = counterexample()
    traces = run_market(pool, path.times, [TargetPriceArbitrage([101.0, 1.01])], FIFO, path)
    assert traces[0].payoff_of("target") == pytest.approx((100.0, -5151.0))
    p2 = traces[1].payoff_of("target")
    assert p2.dx == pytest.approx(-99.99)
    assert round(p2.dy, 2) == 5048.99
    with pytest.raises(CompetitivenessViolation):
        run_market(pool, (1.0,), [TargetPriceArbitrage([120.0])], FIFO, PricePath((1.0,), (100.0,), 1.0))


def test_target_price_replicates_s0():
    pool = FeeWrappedPool(ConstantProductPool(1e6, 100.0), 0.003)
    path = gbm_path(4)
    s0 = run_market(pool, SCHED, [SimpleArbitrage()], FIFO, path)
    targets = [pool.price_of(tr.state_after) for tr in s0]
    rep = run_market(pool, SCHED, [TargetPriceArbitrage(targets)], FIFO, path)
    assert np.allclose(block_values(s0), block_values(rep), rtol=1e-9, atol=1e-9)


def test_clone_set():
    base = SimpleArbitrage()
    assert clone_set(base, 1) == [base]
    clones = clone_set(base, 3)
    assert [c.id for c in clones] == ["s0#0", "s0#1", "s0#2"]
    with pytest.raises(ConfigError):
        clone_set(base, 0)


def test_clones_on_null_block():
    pool = ConstantProductPool(1e6, 100.0)
    path = PricePath((1.0,), (100.0,), 100.0)
    tr = run_market(pool, (1.0,), clone_set(SimpleArbitrage(), 2), FIFO, path)[0]
    assert len(tr.executed) == 2 and all(e.action is NULL for e in tr.executed)
    assert block_values([tr])[0] == 0.0


@pytest.mark.parametrize("kind", ["fifo", "reverse", "uniform_random", "priority"])
def test_three_clones_match_s0(kind):
    pool = ConstantProductPool(1e6, 100.0)
    path = gbm_path(2)
    alone = block_values(run_market(pool, SCHED, [SimpleArbitrage()], FIFO, path))
    clones = clone_set(SimpleArbitrage(), 3)
    traces = run_market(pool, SCHED, clones, OrderingMechanism(kind, ("s0#2",)), path, seed=5)
    assert np.array_equal(block_values(traces), alone)
    total = sum_strategies(traces, [c.id for c in clones], path, SCHED[-1])
    assert total.pnl == pytest.approx(alone.sum(), rel=1e-12)


# --------------------------------------------------------------------------- pnl


def test_pnl_examples():
    pool = ConstantProductPool(1e6, 100.0)
    path = PricePath((1.0,), (121.0,), 100.0)
    traces = run_market(pool, (1.0,), [SimpleArbitrage(), Strategy("idle")], FIFO, path)
    assert pnl(traces, "idle", path, 1.0).pnl == 0.0
    rec = pnl(traces, "s0", path, 1.0)
    assert rec.pnl == pytest.approx(100.0) and rec.external == 0.0
    assert pnl(traces, "s0", path, 0.5).pnl == 0.0
    assert sum_strategies(traces, ["s0"], path, 1.0) == rec

    pool, path = counterexample()
    tr0 = run_market(pool, path.times, [SimpleArbitrage(approx=True)], FIFO, path)
    tr1 = run_market(pool, path.times, [TargetPriceArbitrage([101.0, 1.01])], FIFO, path)
    assert round(pnl(tr0, "s0", path, 2.0).pnl, 2) == 9604.0
    assert round(pnl(tr1, "target", path, 2.0).pnl, 2) == 9798.0


def test_s0_plus_deferred_union():
    pool = ConstantProductPool(1e6, 100.0)
    path = gbm_path(8)
    strategies = [SimpleArbitrage(), DeferredArbitrage(5)]
    traces = run_market(pool, SCHED, strategies, FIFO, path)
    # the deferred trade comes second and is dropped: its source state is stale
    assert all(e.strategy_id != "deferred5" or e.action is NULL for tr in traces for e in tr.executed)
    union = block_values(traces).sum()
    total = sum_strategies(traces, ["s0", "deferred5"], path, SCHED[-1]).pnl
    assert total == pytest.approx(union, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_pnl_additivity(seed, m):
    pool = ConstantProductPool(1e6, 100.0)
    path = gbm_path(seed)
    members = random_competitive_set(m, seed)
    traces = run_market(pool, SCHED, members, FIFO, path)
    ids = [s.id for s in members]
    for t in (SCHED[4], SCHED[-1]):
        parts = sum(pnl(traces, i, path, t).pnl for i in ids)
        n = SCHED.index(t) + 1
        assert parts == pytest.approx(block_values(traces[:n]).sum(), rel=1e-9, abs=1e-9)


def test_hedged_s0_equals_deferred_pathwise():
    # holding the on-chain x externally marks every trade at the final price,
    # which for a path-independent frictionless pool is the single deferred trade
    pool = ConstantProductPool(1e6, 100.0)
    for seed in range(20):
        path = gbm_path(seed)
        hedged = HedgedArbitrage(SimpleArbitrage())
        traces = run_market(pool, SCHED, [hedged], FIFO, path)
        h = pnl(traces, hedged.id, path, SCHED[-1], hedged.holdings())
        d_tr = run_market(pool, SCHED, [DeferredArbitrage(20)], FIFO, path)
        d = pnl(d_tr, "deferred20", path, SCHED[-1]).pnl
        assert h.pnl == pytest.approx(d, rel=1e-9, abs=1e-9)
        assert h.pnl == pytest.approx(h.onchain + h.external)


def test_hedged_decomposition_in_expectation():
    pool = ConstantProductPool(1e6, 100.0)
    diffs = []
    for seed in range(400):
        path = gbm_path(seed)
        hedged = HedgedArbitrage(SimpleArbitrage())
        traces = run_market(pool, SCHED, [hedged], FIFO, path)
        rec = pnl(traces, hedged.id, path, SCHED[-1], hedged.holdings())
        diffs.append(rec.external)
    # external trading against a martingale has zero mean
    d = np.array(diffs)
    assert abs(d.mean()) <= 3 * d.std(ddof=1) / math.sqrt(len(d))


# --------------------------------------------------------------------------- dominance and greedy optimality


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.booleans())
def test_competitive_sets_never_beat_s0(seed, m, use_priority):
    pool = ConstantProductPool(1e6, 100.0)
    path = gbm_path(seed)
    s0 = np.cumsum(block_values(run_market(pool, SCHED, [SimpleArbitrage()], FIFO, path)))
    members = random_competitive_set(m, seed + 1)
    mech = OrderingMechanism("priority", tuple(s.id for s in members)) if use_priority else FIFO
    order = members[::-1] if use_priority else members
    traces = run_market(pool, SCHED, order, mech, path)
    for tr in traces:
        assert pool.no_arb_check(tr.state_after, tr.price)
    total = np.cumsum(block_values(traces))
    scale = np.maximum(1.0, np.abs(s0))
    assert np.all(total <= s0 + 1e-9 * scale)


@settings(max_examples=100, deadline=None)
@given(st.floats(10.0, 1000.0), st.floats(10.0, 1000.0), st.integers(0, 2**32))
def test_greedy_block_optimality(p_state, price, seed):
    pool = ConstantProductPool(1e6, 100.0)
    s = pool.state_at(p_state)
    best = pool.payoff(pool.optimal_action(s, price)).value(price)
    rng = SplitMix64(seed)
    t = s
    total = Payoff()
    for _ in range(4):
        a = pool.move_to_price(t, math.exp(math.log(10) + rng.uniform() * math.log(100)))
        total = total + pool.payoff(a)
        t = pool.transition(t, a)
    assert total.value(price) <= best + 1e-9 * max(1.0, abs(best))


@pytest.mark.parametrize("seed", range(15))
def test_fee_volume_dominance(seed):
    pool = FeeWrappedPool(ConstantProductPool(1e6, 100.0), 0.003)
    path = gbm_path(seed)
    rng = SplitMix64(seed)
    targets = []
    for P in path.prices:
        lo, hi = competitive_band(pool, P)
        targets.append(lo + (hi - lo) * rng.uniform())
    s = TargetPriceArbitrage(targets)
    vol_s = executed_volume(run_market(pool, SCHED, [s], FIFO, path))
    s0r = ReconciledArbitrage(len(SCHED), targets[-1])
    tr = run_market(pool, SCHED, [s0r], FIFO, path)
    assert pool.price_of(tr[-1].state_after) == pytest.approx(targets[-1], rel=1e-12)
    assert vol_s >= executed_volume(tr) - 1e-9 * vol_s


def test_strategy_from_config():
    assert [s.id for s in strategy_from_config({"kind": "clone_set", "base": {"kind": "s0"}, "m": 2})] == ["s0#0", "s0#1"]
    assert isinstance(strategy_from_config({"kind": "deferred", "n_star": 3})[0], DeferredArbitrage)
    assert strategy_from_config({"kind": "hedged_s0"})[0].id == "hedged_s0"
    for bad in ({"kind": "magic"}, {"kind": "s0", "colour": 1}, {"kind": "deferred"}):
        with pytest.raises(ConfigError):
            strategy_from_config(bad)
