"""Concrete pools: constant product, linear book, concentrated liquidity,
fee wrapper, binary product, and a constant-sum mock that violates the axioms."""

from __future__ import annotations

import math
from abc import abstractmethod
from typing import Any, NamedTuple, Sequence

import numpy as np

from ammlab.errors import ConfigError, UnsupportedPool
from ammlab.pool_core import (
    NULL,
    ZERO,
    Action,
    PairTrade,
    Payoff,
    Pool,
    Trade,
    isclose,
)


class Reserves(NamedTuple):
    x: float
    y: float


class PoolPrice(NamedTuple):
    p: float


class PairState(NamedTuple):
    left: Any
    right: Any


class Inventory(NamedTuple):
    z: float


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


class CurvePool(Pool):
    """Frictionless, path-independent, efficient pool described by a reserve
    curve ``price -> (X(p), Y(p))``.

    Moving the pool price from ``p1`` to ``p2`` pays the trader
    ``(X(p1) - X(p2), Y(p1) - Y(p2))``.  ``reserves`` must accept numpy arrays.
    """

    frictionless = True
    path_independent = True
    efficient = True
    closed_form = True

    @abstractmethod
    def reserves(self, p): ...

    @abstractmethod
    def price_of(self, s: Any) -> float: ...

    @abstractmethod
    def state_at(self, price: float) -> Any: ...

    def clamp(self, price):
        return price

    def _valid(self, s: Any) -> bool:
        return self.price_of(s) > 0

    def quote(self, p1: float, p2: float) -> Payoff:
        x1, y1 = self.reserves(p1)
        x2, y2 = self.reserves(p2)
        return Payoff(float(x1 - x2), float(y1 - y2))

    def connect(self, s: Any, t: Any) -> Action:
        if self.same_state(s, t):
            return NULL
        pay = self.quote(self.price_of(s), self.price_of(t))
        return Trade(s, t, pay.dx, pay.dy)

    def move_to_price(self, s: Any, target: float) -> Action:
        return self.connect(s, self.state_at(self.clamp(target)))

    def optimal_action(self, s: Any, price: float) -> Action:
        return self.move_to_price(s, price)

    def no_arb_check(self, s: Any, price: float) -> bool:
        return isclose(self.price_of(s), self.clamp(price))

    def _admissible_atomic(self, s: Any, a: Action) -> bool:
        if a is NULL:
            return True
        if not isinstance(a, Trade) or not self.same_state(s, a.source) or not self._valid(a.target):
            return False
        pay = self.quote(self.price_of(s), self.price_of(a.target))
        return isclose(pay.dx, a.dx) and isclose(pay.dy, a.dy)

    def _transition_atomic(self, s: Any, a: Action) -> Any:
        return s if a is NULL else a.target

    def _underlying_atomic(self, a: Action) -> Payoff:
        return ZERO if a is NULL else a.underlying

    def sample_state(self, rng: np.random.Generator, lo: float, hi: float) -> Any:
        return self.state_at(self.clamp(_log_uniform(rng, lo, hi)))


class ConstantProductPool(CurvePool):
    """``x * y = L``; state is the reserve pair."""

    kind = "constant_product"

    def __init__(self, L: float, price: float = 1.0) -> None:
        if L <= 0 or price <= 0:
            raise ConfigError("constant product pool needs L > 0 and price > 0")
        self.L = float(L)
        self.price = float(price)

    @classmethod
    def from_reserves(cls, x: float, y: float) -> "ConstantProductPool":
        return cls(x * y, y / x)

    def initial_state(self) -> Reserves:
        return self.state_at(self.price)

    def reserves(self, p):
        return np.sqrt(self.L / p), np.sqrt(self.L * p)

    def price_of(self, s: Reserves) -> float:
        return s.y / s.x

    def state_at(self, price: float) -> Reserves:
        return Reserves(math.sqrt(self.L / price), math.sqrt(self.L * price))

    def _valid(self, s: Any) -> bool:
        return isinstance(s, Reserves) and s.x > 0 and s.y > 0 and isclose(s.x * s.y, self.L)

    def quote(self, p1: float, p2: float) -> Payoff:
        # direct reserve differences keep round trips exact
        return Payoff(
            math.sqrt(self.L / p1) - math.sqrt(self.L / p2),
            math.sqrt(self.L * p1) - math.sqrt(self.L * p2),
        )

    def connect(self, s: Reserves, t: Reserves) -> Action:
        if self.same_state(s, t):
            return NULL
        return Trade(s, t, s.x - t.x, s.y - t.y)

    def _admissible_atomic(self, s: Any, a: Action) -> bool:
        if a is NULL:
            return True
        if not isinstance(a, Trade) or not self.same_state(s, a.source):
            return False
        x, y = s.x - a.dx, s.y - a.dy
        return x > 0 and y > 0 and isclose(x * y, self.L)

    def _transition_atomic(self, s: Any, a: Action) -> Any:
        if a is NULL:
            return s
        return Reserves(s.x - a.dx, s.y - a.dy)

    def no_arb_state(self, price: float) -> Reserves:
        if price <= 0:
            raise ValueError("price must be positive")
        return self.state_at(price)

    def describe(self) -> dict:
        return {"kind": self.kind, "L": self.L, "price": self.price}


def cp_no_arb_state(pool: ConstantProductPool, price: float) -> Reserves:
    return pool.no_arb_state(price)


class LinearBookPool(CurvePool):
    """One unit of x per unit of price, spread over all prices.

    Buying from ``p1`` up to ``p2`` delivers ``p2 - p1`` units for
    ``(p2**2 - p1**2) / 2`` numeraire.
    """

    kind = "linear_book"

    def __init__(self, price: float = 1.0) -> None:
        if price <= 0:
            raise ConfigError("linear book needs price > 0")
        self.price = float(price)

    def initial_state(self) -> PoolPrice:
        return PoolPrice(self.price)

    def reserves(self, p):
        return -p, p * p / 2.0

    def quote(self, p1: float, p2: float) -> Payoff:
        return Payoff(p2 - p1, -(p2 * p2 - p1 * p1) / 2.0)

    def price_of(self, s: PoolPrice) -> float:
        return s.p

    def state_at(self, price: float) -> PoolPrice:
        return PoolPrice(float(price))

    def describe(self) -> dict:
        return {"kind": self.kind, "price": self.price}


def linear_trade_to_price(pool: LinearBookPool, s: PoolPrice, target: float) -> Action:
    if target <= 0:
        raise ValueError("target price must be positive")
    return pool.move_to_price(s, target)


class ConcentratedLiquidityPool(CurvePool):
    """Constant-product segments stitched over price bands.

    Band ``i`` covers ``[bounds[i], bounds[i+1])`` with liquidity
    ``liquidity[i]``.  The pool price lives in ``[bounds[0], bounds[-1]]``;
    external prices outside that range are clamped to the nearest edge.
    """

    kind = "clmm"

    def __init__(self, bounds: Sequence[float], liquidity: Sequence[float], price: float) -> None:
        b = np.asarray(bounds, dtype=float)
        liq = np.asarray(liquidity, dtype=float)
        if b.ndim != 1 or len(b) < 2 or np.any(np.diff(b) <= 0) or b[0] <= 0:
            raise ConfigError("bounds must be a strictly increasing list of positive prices")
        if liq.shape != (len(b) - 1,) or np.any(liq <= 0):
            raise ConfigError("need one positive liquidity per band")
        self.bounds = b
        self.liquidity = liq
        self._sqrt_lo = np.sqrt(b[:-1])
        self._sqrt_hi = np.sqrt(b[1:])
        self.price = float(self.clamp(price))

    def initial_state(self) -> PoolPrice:
        return PoolPrice(self.price)

    def clamp(self, price):
        return np.clip(price, self.bounds[0], self.bounds[-1]) if isinstance(price, np.ndarray) else float(
            min(max(price, self.bounds[0]), self.bounds[-1])
        )

    def band_index(self, p: float) -> int:
        i = int(np.searchsorted(self.bounds, p, side="right")) - 1
        return min(max(i, 0), len(self.liquidity) - 1)

    def reserves(self, p):
        sp = np.sqrt(np.asarray(p, dtype=float))[..., None]
        sp = np.clip(sp, self._sqrt_lo, self._sqrt_hi)
        x = np.sum(self.liquidity * (1.0 / sp - 1.0 / self._sqrt_hi), axis=-1)
        y = np.sum(self.liquidity * (sp - self._sqrt_lo), axis=-1)
        return x, y

    def price_of(self, s: PoolPrice) -> float:
        return s.p

    def state_at(self, price: float) -> PoolPrice:
        return PoolPrice(float(self.clamp(price)))

    def _valid(self, s: Any) -> bool:
        return isinstance(s, PoolPrice) and self.bounds[0] <= s.p <= self.bounds[-1]

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "bounds": self.bounds.tolist(),
            "liquidity": self.liquidity.tolist(),
            "price": self.price,
        }


def clmm_optimal_action(pool: ConcentratedLiquidityPool, s: PoolPrice, price: float) -> Action:
    return pool.optimal_action(s, price)


class FeeWrappedPool(Pool):
    """Charges ``fee * volume`` in numeraire on top of an inner curve pool.

    States, admissibility and transitions are the inner pool's.
    """

    closed_form = True
    efficient = True

    def __init__(self, inner: CurvePool, fee: float) -> None:
        if not isinstance(inner, CurvePool):
            raise ConfigError("fees wrap only frictionless, path-independent, efficient curve pools")
        if not 0 < fee < 1:
            raise ConfigError("fee must lie in (0, 1)")
        self.inner = inner
        self.fee = float(fee)
        self.kind = f"fee({inner.kind})"

    def initial_state(self) -> Any:
        return self.inner.initial_state()

    def _admissible_atomic(self, s: Any, a: Action) -> bool:
        return self.inner._admissible_atomic(s, a)

    def _transition_atomic(self, s: Any, a: Action) -> Any:
        return self.inner._transition_atomic(s, a)

    def _underlying_atomic(self, a: Action) -> Payoff:
        return self.inner._underlying_atomic(a)

    def _payoff_atomic(self, a: Action) -> Payoff:
        u = self.inner._underlying_atomic(a)
        return Payoff(u.dx, u.dy - self.fee * abs(u.dy))

    def price_of(self, s: Any) -> float:
        return self.inner.price_of(s)

    def target_price(self, s: Any, price: float, approx: bool = False) -> float | None:
        """Pool price the fee-optimal trade moves to, or None when no trade pays.

        ``approx`` uses ``P(1-fee)`` / ``P(1+fee)`` instead of the exact
        ``P/(1+fee)`` / ``P/(1-fee)``.
        """
        p0 = self.inner.price_of(s)
        phi = self.fee
        if price > p0 * (1 + phi):
            return price * (1 - phi) if approx else price / (1 + phi)
        if price < p0 * (1 - phi):
            return price * (1 + phi) if approx else price / (1 - phi)
        return None

    def optimal_action(self, s: Any, price: float, approx: bool = False) -> Action:
        target = self.target_price(s, price, approx)
        if target is None:
            return NULL
        return self.inner.move_to_price(s, target)

    def move_to_price(self, s: Any, target: float) -> Action:
        return self.inner.move_to_price(s, target)

    def band(self, price: float) -> tuple[float, float]:
        """Pool prices that are no-arbitrage states for external ``price``."""
        c = self.inner.clamp
        return c(price / (1 + self.fee)), c(price / (1 - self.fee))

    def no_arb_check(self, s: Any, price: float) -> bool:
        lo, hi = self.band(price)
        p0 = self.inner.price_of(s)
        return (p0 >= lo or isclose(p0, lo)) and (p0 <= hi or isclose(p0, hi))

    def connect(self, s: Any, t: Any) -> Action:
        return self.inner.connect(s, t)

    def sample_state(self, rng: np.random.Generator, lo: float, hi: float) -> Any:
        return self.inner.sample_state(rng, lo, hi)

    def describe(self) -> dict:
        d = self.inner.describe()
        d["fee"] = self.fee
        return d


def fee_optimal_action(pool: FeeWrappedPool, s: Any, price: float) -> Action:
    return pool.optimal_action(s, price)


def _pair(left: Action, right: Action) -> Action:
    if left is NULL and right is NULL:
        return NULL
    return PairTrade(left, right)


class ProductPool(Pool):
    """Two pools side by side; actions are pairs applied componentwise."""

    kind = "product"

    def __init__(self, left: Pool, right: Pool) -> None:
        self.left = left
        self.right = right
        self.frictionless = left.frictionless and right.frictionless
        self.path_independent = left.path_independent and right.path_independent
        self.closed_form = left.closed_form and right.closed_form
        self.efficient = False
        self.fee = max(left.fee, right.fee)

    def initial_state(self) -> PairState:
        return PairState(self.left.initial_state(), self.right.initial_state())

    def _split(self, a: Action) -> tuple[Action, Action]:
        if a is NULL:
            return NULL, NULL
        if not isinstance(a, PairTrade):
            raise TypeError(f"product pool expects PairTrade, got {a!r}")
        return a.left, a.right

    def _admissible_atomic(self, s: PairState, a: Action) -> bool:
        if a is not NULL and not isinstance(a, PairTrade):
            return False
        l, r = self._split(a)
        return self.left.admissible(s.left, l) and self.right.admissible(s.right, r)

    def _transition_atomic(self, s: PairState, a: Action) -> PairState:
        l, r = self._split(a)
        return PairState(self.left.transition(s.left, l), self.right.transition(s.right, r))

    def _underlying_atomic(self, a: Action) -> Payoff:
        l, r = self._split(a)
        return self.left.underlying_payoff(l) + self.right.underlying_payoff(r)

    def _payoff_atomic(self, a: Action) -> Payoff:
        l, r = self._split(a)
        return self.left.payoff(l) + self.right.payoff(r)

    def _volume_atomic(self, a: Action) -> float:
        l, r = self._split(a)
        return self.left.volume(l) + self.right.volume(r)

    def optimal_action(self, s: PairState, price: float) -> Action:
        return _pair(self.left.optimal_action(s.left, price), self.right.optimal_action(s.right, price))

    def state_at(self, price: float) -> PairState:
        if not self.frictionless:
            raise UnsupportedPool("no unique no-arbitrage state for a product of non-frictionless pools")
        return PairState(self.left.state_at(price), self.right.state_at(price))  # type: ignore[attr-defined]

    def no_arb_check(self, s: PairState, price: float) -> bool:
        return self.left.no_arb_check(s.left, price) and self.right.no_arb_check(s.right, price)

    def connect(self, s: PairState, t: PairState) -> Action:
        return _pair(self.left.connect(s.left, t.left), self.right.connect(s.right, t.right))

    def sample_state(self, rng: np.random.Generator, lo: float, hi: float) -> PairState:
        return PairState(self.left.sample_state(rng, lo, hi), self.right.sample_state(rng, lo, hi))

    def describe(self) -> dict:
        return {"kind": self.kind, "left": self.left.describe(), "right": self.right.describe()}


def product_optimal_action(pool: ProductPool, s: PairState, price: float) -> Action:
    return pool.optimal_action(s, price)


class ConstantSumPool(Pool):
    """Unbounded fixed-price market ``x * price + y = const``.

    There is no value-maximising trade when the external price differs from
    ``price``; ``optimal_action`` returns a trade of ``max_trade`` units, which
    sampled larger trades beat.  Used to exercise axiom-failure reporting.
    """

    kind = "constant_sum"

    def __init__(self, price: float = 1.0, max_trade: float = 1.0) -> None:
        if price <= 0:
            raise ConfigError("constant sum pool needs price > 0")
        self.price = float(price)
        self.max_trade = float(max_trade)

    def initial_state(self) -> Inventory:
        return Inventory(0.0)

    def trade(self, s: Inventory, dx: float) -> Action:
        if dx == 0:
            return NULL
        return Trade(s, Inventory(s.z - dx), dx, -self.price * dx)

    def optimal_action(self, s: Inventory, price: float) -> Action:
        if isclose(price, self.price):
            return NULL
        return self.trade(s, self.max_trade if price > self.price else -self.max_trade)

    def _admissible_atomic(self, s: Inventory, a: Action) -> bool:
        if a is NULL:
            return True
        return (
            isinstance(a, Trade)
            and self.same_state(s, a.source)
            and isclose(a.dy, -self.price * a.dx)
            and isclose(a.target.z, s.z - a.dx)
        )

    def _transition_atomic(self, s: Inventory, a: Action) -> Inventory:
        return s if a is NULL else a.target

    def _underlying_atomic(self, a: Action) -> Payoff:
        return ZERO if a is NULL else a.underlying

    def connect(self, s: Inventory, t: Inventory) -> Action:
        return self.trade(s, s.z - t.z)

    def sample_state(self, rng: np.random.Generator, lo: float, hi: float) -> Inventory:
        return Inventory(float(rng.uniform(-100.0, 100.0)))

    def sample_action(self, s: Inventory, rng: np.random.Generator, lo: float, hi: float) -> Action:
        size = _log_uniform(rng, 1e-3, 1e6)
        return self.trade(s, size if rng.random() < 0.5 else -size)

    def describe(self) -> dict:
        return {"kind": self.kind, "price": self.price}


_POOL_KEYS = {
    "constant_product": {"kind", "L", "price", "reserves", "fee"},
    "linear_book": {"kind", "price", "fee"},
    "clmm": {"kind", "bounds", "liquidity", "price", "fee"},
    "product": {"kind", "left", "right", "fee"},
    "constant_sum": {"kind", "price", "max_trade", "fee"},
}


def pool_from_config(cfg: dict) -> Pool:
    """Build a pool from ``{kind: ..., params..., fee: phi}``; unknown keys are errors."""
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ConfigError("pool config must be an object with a 'kind'")
    kind = cfg["kind"]
    if kind not in _POOL_KEYS:
        raise ConfigError(f"unknown pool kind {kind!r}")
    unknown = set(cfg) - _POOL_KEYS[kind]
    if unknown:
        raise ConfigError(f"unknown keys for {kind} pool: {sorted(unknown)}")
    fee = float(cfg.get("fee", 0.0))
    try:
        if kind == "constant_product":
            if "reserves" in cfg:
                x, y = cfg["reserves"]
                pool: Pool = ConstantProductPool.from_reserves(float(x), float(y))
            else:
                pool = ConstantProductPool(float(cfg["L"]), float(cfg.get("price", 1.0)))
        elif kind == "linear_book":
            pool = LinearBookPool(float(cfg.get("price", 1.0)))
        elif kind == "clmm":
            pool = ConcentratedLiquidityPool(cfg["bounds"], cfg["liquidity"], float(cfg["price"]))
        elif kind == "product":
            if fee:
                raise ConfigError("set fees on product components, not on the product")
            return ProductPool(pool_from_config(cfg["left"]), pool_from_config(cfg["right"]))
        else:
            if fee:
                raise ConfigError("constant sum mock takes no fee")
            return ConstantSumPool(float(cfg.get("price", 1.0)), float(cfg.get("max_trade", 1.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad {kind} pool config: {exc}") from exc
    if fee:
        return FeeWrappedPool(pool, fee)  # type: ignore[arg-type]
    return pool
