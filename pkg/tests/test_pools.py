from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ammlab.errors import ConfigError
from ammlab.pool_core import NULL, is_no_arbitrage_state
from ammlab.pools import (
    ConcentratedLiquidityPool,
    ConstantProductPool,
    ConstantSumPool,
    FeeWrappedPool,
    LinearBookPool,
    PoolPrice,
    ProductPool,
    Reserves,
    clmm_optimal_action,
    cp_no_arb_state,
    fee_optimal_action,
    linear_trade_to_price,
    pool_from_config,
    product_optimal_action,
)

from oracles import cp_reserves, grid_then_golden, integrate

prices = st.floats(min_value=0.05, max_value=500.0, allow_nan=False)


def clmm_grid_payoff(bounds, liquidity, p1, p2, n=400_001):
    """Trader payoff for moving p1 -> p2 by summing dX = -L/(2 p^1.5) dp and
    dY = L/(2 sqrt p) dp over a fine price grid."""
    def density(p, power):
        out = np.zeros_like(p)
        for lo, hi, L in zip(bounds, bounds[1:], liquidity):
            inside = (p >= lo) & (p < hi)
            out[inside] = L * 0.5 * p[inside] ** power
        return out

    lo, hi = sorted((p1, p2))
    d_x = integrate(lambda p: density(p, -1.5), lo, hi, n)
    d_y = integrate(lambda p: density(p, -0.5), lo, hi, n)
    sign = 1.0 if p2 > p1 else -1.0
    # moving up: trader receives x, pays y
    return sign * d_x, -sign * d_y


# --------------------------------------------------------------------------- constant product


def test_cp_no_arb_state():
    pool = ConstantProductPool(1e6, 100.0)
    assert cp_no_arb_state(pool, 100.0) == pytest.approx(Reserves(100.0, 10000.0))
    s = cp_no_arb_state(pool, 121.0)
    assert s.x == pytest.approx(1000 / 11, rel=1e-12)
    assert s.y == pytest.approx(11000.0, rel=1e-12)
    assert s.y / s.x == pytest.approx(121.0, rel=1e-12)
    assert s.x * s.y == pytest.approx(1e6, rel=1e-12)
    assert cp_no_arb_state(pool, 1.0) == pytest.approx(Reserves(1000.0, 1000.0))


@settings(max_examples=200, deadline=None)
@given(st.lists(prices, min_size=1, max_size=6))
def test_cp_invariant_and_conservation(targets):
    pool = ConstantProductPool(1e4, 1.0)
    s = pool.initial_state()
    paid_x = paid_y = 0.0
    for p in targets:
        a = pool.move_to_price(s, p)
        t = pool.transition(s, a)
        assert t.x * t.y == pytest.approx(1e4, rel=1e-9)
        pay = pool.payoff(a)
        paid_x += pay.dx
        paid_y += pay.dy
        s = t
    x0, y0 = pool.initial_state()
    # trader gains what the pool loses
    assert paid_x == pytest.approx(x0 - s.x, rel=1e-9, abs=1e-9)
    assert paid_y == pytest.approx(y0 - s.y, rel=1e-9, abs=1e-9)


def test_cp_from_reserves():
    pool = ConstantProductPool.from_reserves(100.0, 10000.0)
    assert pool.L == pytest.approx(1e6)
    assert pool.initial_state() == pytest.approx(Reserves(100.0, 10000.0))


# --------------------------------------------------------------------------- linear book


def test_linear_trade_to_price():
    pool = LinearBookPool(1.0)
    a = linear_trade_to_price(pool, PoolPrice(1.0), 99.0)
    assert pool.payoff(a) == pytest.approx((98.0, -4900.0))
    fee = FeeWrappedPool(pool, 0.01)
    assert fee.payoff(a) == pytest.approx((98.0, -4949.0))
    b = linear_trade_to_price(pool, PoolPrice(101.0), 1.01)
    assert fee.payoff(b).dx == pytest.approx(-99.99, abs=1e-12)
    assert round(fee.payoff(b).dy, 2) == 5048.99
    assert linear_trade_to_price(pool, PoolPrice(5.0), 5.0) is NULL


def test_linear_cost_is_integral():
    pool = LinearBookPool(1.0)
    for p1, p2 in ((1.0, 99.0), (7.0, 2.5), (0.2, 0.3)):
        pay = pool.payoff(linear_trade_to_price(pool, PoolPrice(p1), p2))
        assert -pay.dy == pytest.approx(integrate(lambda p: p, p1, p2), rel=1e-9)
        assert pay.dx == pytest.approx(p2 - p1, rel=1e-12)


# --------------------------------------------------------------------------- fee wrapper


def test_fee_optimal_linear():
    fee = FeeWrappedPool(LinearBookPool(1.0), 0.01)
    a = fee_optimal_action(fee, fee.initial_state(), 100.0)
    assert a.target.p == pytest.approx(100 / 1.01, rel=1e-12)
    assert fee_optimal_action(fee, fee.initial_state(), 1.005) is NULL


def test_fee_optimal_constant_product_against_grid():
    fee = FeeWrappedPool(ConstantProductPool.from_reserves(100.0, 10000.0), 0.003)
    s = fee.initial_state()
    a = fee_optimal_action(fee, s, 121.0)
    t = fee.transition(s, a)
    assert t.y / t.x == pytest.approx(121 / 1.003, rel=1e-12)
    assert t == pytest.approx(cp_reserves(1e6, 121 / 1.003))
    best = fee.payoff(a).value(121.0)
    oracle = grid_then_golden(lambda p: fee.payoff(fee.move_to_price(s, p)).value(121.0), 50.0, 300.0)
    assert oracle == pytest.approx(121 / 1.003, rel=1e-6)
    for k in np.linspace(0.9, 1.1, 41):
        assert best >= fee.payoff(fee.move_to_price(s, 121 / 1.003 * k)).value(121.0) - 1e-9


@settings(max_examples=200, deadline=None)
@given(prices, prices, st.sampled_from([0.001, 0.003, 0.01, 0.05]))
def test_fee_payoff_is_inner_minus_fee_volume(p1, p2, phi):
    inner = ConstantProductPool(1e4, 1.0)
    fee = FeeWrappedPool(inner, phi)
    a = fee.move_to_price(inner.state_at(p1), p2)
    inner_pay = inner.payoff(a)
    assert fee.payoff(a).dx == inner_pay.dx
    assert fee.payoff(a).dy == pytest.approx(inner_pay.dy - phi * inner.volume(a), rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(prices, prices)
def test_fee_optimal_end_state_in_band(p_state, price):
    fee = FeeWrappedPool(ConstantProductPool(1e4, 1.0), 0.01)
    s = fee.inner.state_at(p_state)
    t = fee.transition(s, fee.optimal_action(s, price))
    assert fee.no_arb_check(t, price)


# --------------------------------------------------------------------------- concentrated liquidity


def test_clmm_single_band_to_edge():
    pool = ConcentratedLiquidityPool([1.0, 4.0], [1.0], 1.0)
    for eps in (1e-3, 1e-6, 1e-9):
        pay = pool.payoff(clmm_optimal_action(pool, pool.initial_state(), 4.0 - eps))
        assert pay.dx == pytest.approx(0.5, abs=2 * eps)
        assert pay.dy == pytest.approx(-1.0, abs=2 * eps)
    assert clmm_optimal_action(pool, PoolPrice(2.0), 2.0) is NULL


def test_clmm_two_bands_against_grid_sum():
    bounds, liq = [1.0, 4.0, 9.0], [1.0, 2.0]
    pool = ConcentratedLiquidityPool(bounds, liq, 1.0)
    pay = pool.payoff(clmm_optimal_action(pool, pool.initial_state(), 9.0 - 1e-9))
    assert pay.dx == pytest.approx(0.5 + 2 * (1 / 2 - 1 / 3), abs=1e-8)
    assert pay.dy == pytest.approx(-3.0, abs=1e-8)
    gx, gy = clmm_grid_payoff(bounds, liq, 1.0, 9.0 - 1e-9)
    assert pay.dx == pytest.approx(gx, rel=1e-6)
    assert pay.dy == pytest.approx(gy, rel=1e-6)


@pytest.mark.parametrize("p1,p2", [(1.5, 6.0), (8.5, 1.2), (2.0, 3.0), (3.9, 4.1)])
def test_clmm_cross_band_against_grid_sum(p1, p2):
    bounds, liq = [1.0, 4.0, 9.0], [1.0, 2.0]
    pool = ConcentratedLiquidityPool(bounds, liq, 1.0)
    pay = pool.payoff(pool.move_to_price(PoolPrice(p1), p2))
    gx, gy = clmm_grid_payoff(bounds, liq, p1, p2)
    assert pay.dx == pytest.approx(gx, rel=1e-6)
    assert pay.dy == pytest.approx(gy, rel=1e-6)


def test_clmm_clamps_outside_range():
    pool = ConcentratedLiquidityPool([1.0, 4.0], [1.0], 2.0)
    t = pool.transition(pool.initial_state(), pool.optimal_action(pool.initial_state(), 50.0))
    assert t.p == 4.0
    assert pool.no_arb_check(t, 50.0)
    with pytest.raises(ConfigError):
        ConcentratedLiquidityPool([1.0, 4.0], [1.0, 2.0], 2.0)


# --------------------------------------------------------------------------- products and mock


def test_product_identical_at_no_arb():
    pool = ProductPool(ConstantProductPool(1e4, 3.0), ConstantProductPool(1e4, 3.0))
    assert product_optimal_action(pool, pool.initial_state(), 3.0) is NULL


def test_product_componentwise():
    left = ConstantProductPool.from_reserves(100.0, 10000.0)
    right = LinearBookPool(100.0)
    pool = ProductPool(left, right)
    a = product_optimal_action(pool, pool.initial_state(), 121.0)
    total = pool.payoff(a).value(121.0)
    left_v = left.payoff(left.optimal_action(left.initial_state(), 121.0)).value(121.0)
    right_v = (121 - 100) * 121 - (121**2 - 100**2) / 2
    assert total == pytest.approx(left_v + right_v, rel=1e-12)
    t = pool.transition(pool.initial_state(), a)
    assert is_no_arbitrage_state(left, t.left, 121.0)
    assert is_no_arbitrage_state(right, t.right, 121.0)
    assert pool.volume(a) == pytest.approx(left.volume(a.left) + right.volume(a.right))


def test_constant_sum_mock_is_unbounded():
    pool = ConstantSumPool(1.0, max_trade=1.0)
    s = pool.initial_state()
    capped = pool.payoff(pool.optimal_action(s, 2.0)).value(2.0)
    bigger = pool.payoff(pool.trade(s, 1000.0)).value(2.0)
    assert bigger > capped > 0


# --------------------------------------------------------------------------- config


def test_pool_from_config_kinds():
    assert isinstance(pool_from_config({"kind": "constant_product", "L": 1e6, "price": 100.0}), ConstantProductPool)
    p = pool_from_config({"kind": "constant_product", "reserves": [100, 10000], "fee": 0.003})
    assert isinstance(p, FeeWrappedPool) and p.fee == 0.003
    assert p.inner.L == pytest.approx(1e6)
    assert isinstance(pool_from_config({"kind": "linear_book"}), LinearBookPool)
    assert isinstance(
        pool_from_config({"kind": "product", "left": {"kind": "linear_book"}, "right": {"kind": "linear_book"}}),
        ProductPool,
    )


@pytest.mark.parametrize(
    "cfg",
    [
        {"kind": "nope"},
        {"kind": "linear_book", "colour": 1},
        {"kind": "constant_product"},
        {"kind": "clmm", "bounds": [1, 2], "liquidity": [1]},
        {"kind": "constant_sum", "fee": 0.01},
        [1, 2],
    ],
)
def test_pool_from_config_errors(cfg):
    with pytest.raises(ConfigError):
        pool_from_config(cfg)


def test_state_price_consistency():
    for pool in (ConstantProductPool(1e4, 1.0), LinearBookPool(), ConcentratedLiquidityPool([0.5, 2, 8], [1, 2], 1.0)):
        for p in (0.6, 1.0, 3.3, 7.9):
            assert pool.price_of(pool.state_at(p)) == pytest.approx(p, rel=1e-12)
            assert math.isfinite(pool.reserves(p)[0])
