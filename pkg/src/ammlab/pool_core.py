"""Abstract liquidity-pool state machine and the checks built on top of it.

A pool is a deterministic state machine over actions.  Actions form a free
monoid: ``NULL`` is the identity, :func:`compose` concatenates, and the payoff
map sends composition to addition of ``(dx, dy)`` pairs.  Atomic trades carry
the state they were built from, so a trade only stays admissible while the pool
is still in that state.
"""

from __future__ import annotations

import json
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, NamedTuple, Sequence

import numpy as np

from ammlab.errors import AdmissibilityError, UnsupportedPool

REL_TOL = 1e-9
ABS_TOL = 1e-12


def isclose(a: float, b: float) -> bool:
    return abs(a - b) <= max(ABS_TOL, REL_TOL * max(abs(a), abs(b)))


def _flatten(value: Any) -> Iterable[float]:
    if isinstance(value, tuple):
        for item in value:
            yield from _flatten(item)
    else:
        yield float(value)


def states_close(s1: Any, s2: Any) -> bool:
    if type(s1) is not type(s2):
        return False
    a, b = tuple(_flatten(s1)), tuple(_flatten(s2))
    return len(a) == len(b) and all(isclose(u, v) for u, v in zip(a, b))


class Payoff(NamedTuple):
    """Change in the trader's holdings: ``dx`` of the risky asset, ``dy`` of numeraire."""

    dx: float = 0.0
    dy: float = 0.0

    def __add__(self, other: "Payoff") -> "Payoff":  # type: ignore[override]
        return Payoff(self.dx + other.dx, self.dy + other.dy)

    def __neg__(self) -> "Payoff":
        return Payoff(-self.dx, -self.dy)

    def value(self, price: float) -> float:
        """Mark-to-market value at external price ``price``."""
        return self.dx * price + self.dy


ZERO = Payoff(0.0, 0.0)


# --------------------------------------------------------------------------- actions


class Action:
    """Base class for elements of the action monoid."""

    __slots__ = ()

    @property
    def parts(self) -> tuple["Action", ...]:
        return (self,)

    @property
    def is_null(self) -> bool:
        return False


class _Null(Action):
    __slots__ = ()

    _instance: "_Null | None" = None

    def __new__(cls) -> "_Null":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    @property
    def parts(self) -> tuple[Action, ...]:
        return ()

    @property
    def is_null(self) -> bool:
        return True

    def __repr__(self) -> str:
        return "NULL"

    def __reduce__(self):
        return (_Null, ())


NULL = _Null()


@dataclass(frozen=True)
class Trade(Action):
    """Atomic move of a pool from ``source`` to ``target``.

    ``dx``/``dy`` is the underlying (pre-fee) payoff to the trader.
    """

    source: Any
    target: Any
    dx: float
    dy: float

    @property
    def underlying(self) -> Payoff:
        return Payoff(self.dx, self.dy)


@dataclass(frozen=True)
class PairTrade(Action):
    """Atomic action of a product pool: one action on each component."""

    left: Action
    right: Action


@dataclass(frozen=True)
class Composite(Action):
    items: tuple[Action, ...]

    @property
    def parts(self) -> tuple[Action, ...]:
        return self.items


def compose(*actions: Action) -> Action:
    """Concatenate actions, flattening nested composites and dropping ``NULL``."""
    flat: list[Action] = []
    stack = list(reversed(actions))
    while stack:
        a = stack.pop()
        if isinstance(a, Composite):
            stack.extend(reversed(a.items))
        elif a is not NULL:
            flat.append(a)
    if not flat:
        return NULL
    if len(flat) == 1:
        return flat[0]
    return Composite(tuple(flat))


def is_atomic(a: Action) -> bool:
    return not isinstance(a, Composite)


# --------------------------------------------------------------------------- pools


class Pool(ABC):
    """A liquidity pool ``(states, actions, admissible sets, transition, payoff, s0)``.

    Subclasses implement the atomic hooks; composition, the null action and
    volume are handled here.
    """

    kind: str = "abstract"
    frictionless: bool = False
    path_independent: bool = False
    efficient: bool = False
    closed_form: bool = False
    fee: float = 0.0

    @abstractmethod
    def initial_state(self) -> Any: ...

    @abstractmethod
    def optimal_action(self, s: Any, price: float) -> Action: ...

    @abstractmethod
    def _admissible_atomic(self, s: Any, a: Action) -> bool: ...

    @abstractmethod
    def _transition_atomic(self, s: Any, a: Action) -> Any: ...

    @abstractmethod
    def _underlying_atomic(self, a: Action) -> Payoff: ...

    def _payoff_atomic(self, a: Action) -> Payoff:
        return self._underlying_atomic(a)

    def _volume_atomic(self, a: Action) -> float:
        return abs(self._underlying_atomic(a).dy)

    # -- monoid plumbing

    def admissible(self, s: Any, a: Action) -> bool:
        for part in a.parts:
            if not self._admissible_atomic(s, part):
                return False
            s = self._transition_atomic(s, part)
        return True

    def transition(self, s: Any, a: Action) -> Any:
        for part in a.parts:
            s = self._transition_atomic(s, part)
        return s

    def payoff(self, a: Action) -> Payoff:
        total = ZERO
        for part in a.parts:
            total = total + self._payoff_atomic(part)
        return total

    def underlying_payoff(self, a: Action) -> Payoff:
        total = ZERO
        for part in a.parts:
            total = total + self._underlying_atomic(part)
        return total

    def volume(self, a: Action) -> float:
        return sum(self._volume_atomic(part) for part in a.parts)

    def same_state(self, s1: Any, s2: Any) -> bool:
        return states_close(s1, s2)

    # -- optional capabilities

    def no_arb_check(self, s: Any, price: float) -> bool:
        raise UnsupportedPool(f"{self.kind} has no closed-form no-arbitrage condition")

    def connect(self, s: Any, t: Any) -> Action:
        raise UnsupportedPool(f"{self.kind} cannot build connecting actions")

    def sample_state(self, rng: np.random.Generator, lo: float, hi: float) -> Any:
        raise UnsupportedPool(f"{self.kind} has no state sampler")

    def sample_action(self, s: Any, rng: np.random.Generator, lo: float, hi: float) -> Action:
        return self.connect(s, self.sample_state(rng, lo, hi))

    def describe(self) -> dict:
        return {"kind": self.kind}


# --------------------------------------------------------------------------- operations


def apply_sequence(pool: Pool, s: Any, seq: Sequence[Action]) -> tuple[Any, Payoff]:
    """Run ``seq`` from ``s``; return the final state and summed payoff.

    Raises AdmissibilityError at the first element that is not admissible
    from the state reached by the preceding ones.
    """
    total = ZERO
    for i, a in enumerate(seq):
        if not pool.admissible(s, a):
            raise AdmissibilityError(f"element {i} ({a!r}) is not admissible", index=i)
        s = pool.transition(s, a)
        total = total + pool.payoff(a)
    return s, total


def volume(pool: Pool, a: Action) -> float:
    return pool.volume(a)


def optimal_action(pool: Pool, s: Any, price: float) -> Action:
    if price <= 0:
        raise ValueError("price must be positive")
    return pool.optimal_action(s, price)


def value_scale(price: float, *payoffs: Payoff) -> float:
    scale = max(1.0, abs(price))
    for p in payoffs:
        scale = max(scale, abs(p.dy), abs(p.dx * price))
    return scale


@dataclass
class ActionSampler:
    """Samples pool states log-uniformly in ``[price_lo, price_hi]`` and the
    atomic actions connecting them."""

    price_lo: float = 0.05
    price_hi: float = 500.0
    max_chain: int = 3

    def state(self, pool: Pool, rng: np.random.Generator) -> Any:
        return pool.sample_state(rng, self.price_lo, self.price_hi)

    def action(self, pool: Pool, s: Any, rng: np.random.Generator) -> Action:
        return pool.sample_action(s, rng, self.price_lo, self.price_hi)

    def chain(self, pool: Pool, s: Any, rng: np.random.Generator, n: int | None = None) -> list[Action]:
        """An admissible sequence of ``n`` atomic actions starting at ``s``."""
        n = self.max_chain if n is None else n
        out = []
        for _ in range(n):
            a = self.action(pool, s, rng)
            out.append(a)
            s = pool.transition(s, a)
        return out

    def price(self, rng: np.random.Generator) -> float:
        return float(math.exp(rng.uniform(math.log(self.price_lo), math.log(self.price_hi))))


class NoArbVerdict(NamedTuple):
    holds: bool
    statistical: bool
    worst_sampled_value: float

    def __bool__(self) -> bool:
        return self.holds


def is_no_arbitrage_state(
    pool: Pool,
    s: Any,
    price: float,
    *,
    sampler: ActionSampler | None = None,
    n_samples: int = 64,
    seed: int = 0,
    exact_only: bool = False,
) -> NoArbVerdict:
    """Decide whether ``s`` admits no positive-value action at ``price``.

    Closed-form pools answer exactly; the sampled worst action value is reported
    alongside as a cross-check.  Other pools get a sampled verdict, flagged as
    statistical, unless ``exact_only`` is set (then UnsupportedPool).
    """
    if price <= 0:
        raise ValueError("price must be positive")
    sampler = sampler or ActionSampler()
    rng = np.random.default_rng(seed)
    worst = 0.0
    scale = max(1.0, price)
    sampling_ok = True
    try:
        for _ in range(n_samples):
            a = sampler.action(pool, s, rng)
            pay = pool.payoff(a)
            v = pay.value(price)
            worst = max(worst, v)
            scale = max(scale, value_scale(price, pay))
    except UnsupportedPool:
        sampling_ok = False
    if pool.closed_form:
        return NoArbVerdict(pool.no_arb_check(s, price), False, worst)
    if exact_only or not sampling_ok:
        raise UnsupportedPool(f"{pool.kind} has no closed-form no-arbitrage condition")
    return NoArbVerdict(worst <= REL_TOL * scale, True, worst)


def potential(pool: Pool, price: float, ref_price: float = 1.0) -> float:
    """Numeraire potential ``q`` with ``q(ref_price) = 0``.

    Moving the pool between no-arbitrage states for ``P1`` and ``P2`` pays the
    trader ``dy = q(P1) - q(P2)``.
    """
    if pool.fee > 0 or not (pool.frictionless and pool.path_independent):
        raise UnsupportedPool("potential needs a frictionless, path-independent pool without fees")
    state_at = getattr(pool, "state_at", None)
    if state_at is None:
        raise UnsupportedPool(f"{pool.kind} exposes no no-arbitrage state map")
    if price <= 0 or ref_price <= 0:
        raise ValueError("prices must be positive")
    a = pool.connect(state_at(ref_price), state_at(price))
    return -pool.underlying_payoff(a).dy


# --------------------------------------------------------------------------- conformance


@dataclass
class AxiomResult:
    axiom: str
    status: str
    trials: int
    worst_violation: float
    seed: int


@dataclass
class ConformanceReport:
    pool: str
    results: list[AxiomResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.status == "pass" for r in self.results)

    def status(self, axiom: str) -> str:
        for r in self.results:
            if r.axiom == axiom:
                return r.status
        raise KeyError(axiom)

    def to_json(self) -> str:
        return json.dumps(
            {"pool": self.pool, "passed": self.passed, "results": [asdict(r) for r in self.results]},
            indent=2,
        )


class _Tracker:
    def __init__(self) -> None:
        self.worst = 0.0
        self.count = 0

    def record(self, violation: float) -> None:
        self.count += 1
        if violation > self.worst or math.isnan(violation):
            self.worst = violation


def _payoff_gap(p: Payoff, q: Payoff) -> float:
    """Relative distance between payoffs; 0 when equal within tolerance."""
    gap = 0.0
    for u, v in ((p.dx, q.dx), (p.dy, q.dy)):
        gap = max(gap, abs(u - v) / max(1.0, abs(u), abs(v)))
    return gap


def check_axioms(
    pool: Pool,
    sampler: ActionSampler | None = None,
    n_trials: int = 1000,
    seed: int = 0,
) -> ConformanceReport:
    """Empirically verify the pool axioms on ``n_trials`` sampled configurations.

    Each violation is measured relative to the trial's value scale; an axiom
    fails if any trial exceeds ``REL_TOL``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    sampler = sampler or ActionSampler()
    rng = np.random.default_rng(seed)
    names = [
        "null_action",
        "payoff_additivity",
        "admissibility_chaining",
        "associativity",
        "optimal_action",
        "post_optimal_no_arbitrage",
    ]
    if pool.path_independent:
        names.append("path_independence")
    track = {n: _Tracker() for n in names}

    for _ in range(n_trials):
        s = sampler.state(pool, rng)
        price = sampler.price(rng)
        a1, a2, a3 = sampler.chain(pool, s, rng, 3)

        # null action
        bad = not pool.admissible(s, NULL) or not pool.same_state(pool.transition(s, NULL), s)
        bad = bad or pool.payoff(NULL) != ZERO or pool.volume(NULL) != 0.0
        track["null_action"].record(1.0 if bad else 0.0)

        # composition: payoff homomorphism
        c12 = compose(a1, a2)
        track["payoff_additivity"].record(_payoff_gap(pool.payoff(c12), pool.payoff(a1) + pool.payoff(a2)))

        # a1 admissible at s, a2 admissible after a1 => a1 a2 admissible at s
        track["admissibility_chaining"].record(0.0 if pool.admissible(s, c12) else 1.0)

        left = compose(compose(a1, a2), a3)
        right = compose(a1, compose(a2, a3))
        same = left == right and pool.same_state(pool.transition(s, left), pool.transition(s, right))
        track["associativity"].record(0.0 if same else 1.0)

        # optimal action: atomic, admissible, dominates every sampled admissible action
        opt = pool.optimal_action(s, price)
        opt_pay = pool.payoff(opt)
        v_opt = opt_pay.value(price)
        viol = 0.0 if (is_atomic(opt) and pool.admissible(s, opt)) else 1.0
        candidates = [a1, c12, left]
        for cand in candidates:
            pay = pool.payoff(cand)
            scale = value_scale(price, pay, opt_pay)
            viol = max(viol, (pay.value(price) - v_opt) / scale)
        viol = max(viol, -v_opt / value_scale(price, opt_pay))
        track["optimal_action"].record(viol)

        # after the optimal action no sampled action has positive value
        s_after = pool.transition(s, opt)
        b = sampler.action(pool, s_after, rng)
        pay_b = pool.payoff(b)
        track["post_optimal_no_arbitrage"].record(pay_b.value(price) / value_scale(price, pay_b))

        if pool.path_independent:
            end = pool.transition(s, left)
            direct = pool.connect(s, end)
            track["path_independence"].record(_payoff_gap(pool.payoff(left), pool.payoff(direct)))

    report = ConformanceReport(pool=pool.kind)
    for name in names:
        t = track[name]
        status = "pass" if t.worst <= REL_TOL else "fail"
        report.results.append(AxiomResult(name, status, t.count, float(t.worst), seed))
    return report
