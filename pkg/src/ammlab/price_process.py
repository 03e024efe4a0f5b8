"""External price paths sampled at block times.

Randomness comes from SplitMix64.  Path ``i`` of a run with master seed ``m``
uses the stream seeded by ``splitmix64(m ^ i)``; draws are vectorised across
paths, so a batch of paths is bit-identical to generating them one at a time.
Standard normals use the inverse CDF (Acklam's rational approximation, relative
error below 1.15e-9).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ammlab.errors import ConfigError

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state ``x`` (state advanced by the golden gamma first)."""
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Scalar SplitMix64 stream."""

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _M1) & MASK64
        z = ((z ^ (z >> 27)) * _M2) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform on the open interval (0, 1)."""
        return ((self.next_u64() >> 11) + 0.5) * 2.0**-53

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n


def substream_seed(master: int, index: int) -> int:
    return splitmix64((master ^ index) & MASK64)


class VectorSplitMix64:
    """Independent SplitMix64 streams, one per path index, advanced in lockstep."""

    def __init__(self, master: int, indices: np.ndarray) -> None:
        seeds = [substream_seed(master, int(i)) for i in indices]
        self.state = np.array(seeds, dtype=np.uint64)

    def next_u64(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            self.state = self.state + np.uint64(_GOLDEN)
            z = self.state.copy()
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        return z ^ (z >> np.uint64(31))

    def uniform(self) -> np.ndarray:
        return ((self.next_u64() >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


# Acklam's coefficients
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def norm_ppf(u):
    """Inverse standard normal CDF for ``u`` in (0, 1); scalar or array."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    lo = u < _P_LOW
    hi = u > 1 - _P_LOW
    mid = ~(lo | hi)

    q = u[mid] - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1
    out[mid] = num / den

    for mask, sign, tail in ((lo, 1.0, u[lo]), (hi, -1.0, 1 - u[hi])):
        q = np.sqrt(-2 * np.log(tail))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1
        out[mask] = sign * num / den
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------- specs


@dataclass(frozen=True)
class ProcessSpec:
    """``kind`` is one of ``gbm``, ``binomial``, ``deterministic``.

    gbm: zero-drift geometric Brownian motion with volatility ``sigma`` per
    square-root time unit.  binomial: multiplicative ``up``/``down`` steps with
    the martingale up-probability.  deterministic: the given ``prices``, one
    per block.
    """

    kind: str
    sigma: float = 0.0
    up: float = 0.0
    down: float = 0.0
    prices: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind == "gbm":
            if not self.sigma > 0:
                raise ConfigError("gbm needs sigma > 0")
        elif self.kind == "binomial":
            if not (0 < self.down < 1 < self.up):
                raise ConfigError("binomial needs 0 < down < 1 < up")
        elif self.kind == "deterministic":
            if not self.prices or any(p <= 0 for p in self.prices):
                raise ConfigError("deterministic path needs positive prices")
        else:
            raise ConfigError(f"unknown process kind {self.kind!r}")

    @property
    def p_up(self) -> float:
        return (1 - self.down) / (self.up - self.down)

    @property
    def is_martingale(self) -> bool:
        return self.kind in ("gbm", "binomial")

    @classmethod
    def from_config(cls, cfg: dict) -> "ProcessSpec":
        allowed = {"gbm": {"kind", "sigma"}, "binomial": {"kind", "up", "down"},
                   "deterministic": {"kind", "prices"}}
        kind = cfg.get("kind")
        if kind not in allowed:
            raise ConfigError(f"unknown process kind {kind!r}")
        unknown = set(cfg) - allowed[kind]
        if unknown:
            raise ConfigError(f"unknown keys for {kind} process: {sorted(unknown)}")
        try:
            if kind == "gbm":
                return cls("gbm", sigma=float(cfg["sigma"]))
            if kind == "binomial":
                return cls("binomial", up=float(cfg["up"]), down=float(cfg["down"]))
            return cls("deterministic", prices=tuple(float(p) for p in cfg["prices"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad process config: {exc}") from exc


@dataclass(frozen=True)
class PricePath:
    times: tuple[float, ...]
    prices: tuple[float, ...]
    P0: float

    def __post_init__(self) -> None:
        if len(self.times) != len(self.prices):
            raise ConfigError("times and prices differ in length")
        if self.P0 <= 0 or any(p <= 0 for p in self.prices):
            raise ConfigError("prices must be positive")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ConfigError("times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.prices)

    def price_at(self, t: float) -> float:
        """Price at the last block time ``<= t`` (``P0`` before the first block)."""
        n = block_index_at(self.times, t)
        return self.P0 if n == 0 else self.prices[n - 1]


def block_index_at(times: Sequence[float], t: float) -> int:
    """Number of block times ``<= t``, i.e. ``n`` with ``t_n <= t < t_{n+1}``."""
    return int(np.searchsorted(np.asarray(times, dtype=float), t, side="right"))


def _check_schedule(schedule: Sequence[float]) -> np.ndarray:
    times = np.asarray(schedule, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ConfigError("schedule must be a nonempty list of times")
    if times[0] <= 0 or np.any(np.diff(times) <= 0):
        raise ConfigError("schedule times must be positive and strictly increasing")
    return times


def sample_paths(
    spec: ProcessSpec,
    schedule: Sequence[float],
    P0: float,
    seed: int,
    n_paths: int,
    first_index: int = 0,
) -> np.ndarray:
    """Matrix of shape ``(n_paths, len(schedule))``; row ``i`` is path ``first_index + i``."""
    if P0 <= 0:
        raise ConfigError("P0 must be positive")
    times = _check_schedule(schedule)
    n = len(times)
    if spec.kind == "deterministic":
        if len(spec.prices) != n:
            raise ConfigError("deterministic prices must align with the schedule")
        return np.tile(np.asarray(spec.prices, dtype=float), (n_paths, 1))
    rng = VectorSplitMix64(seed, np.arange(first_index, first_index + n_paths))
    out = np.empty((n_paths, n))
    level = np.full(n_paths, float(P0))
    dts = np.diff(np.concatenate(([0.0], times)))
    for j, dt in enumerate(dts):
        u = rng.uniform()
        if spec.kind == "gbm":
            z = norm_ppf(u)
            level = level * np.exp(spec.sigma * math.sqrt(dt) * z - 0.5 * spec.sigma**2 * dt)
        else:
            level = level * np.where(u < spec.p_up, spec.up, spec.down)
        out[:, j] = level
    return out


def sample_path(spec: ProcessSpec, schedule: Sequence[float], P0: float, seed: int, index: int = 0) -> PricePath:
    prices = sample_paths(spec, schedule, P0, seed, 1, first_index=index)[0]
    return PricePath(tuple(float(t) for t in schedule), tuple(float(p) for p in prices), float(P0))


def read_price_csv(path: str | Path, P0: float) -> PricePath:
    """Load a ``time,price`` CSV as a deterministic path."""
    times, prices = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"time", "price"} <= set(reader.fieldnames):
            raise ConfigError("price CSV needs 'time' and 'price' columns")
        for row in reader:
            times.append(float(row["time"]))
            prices.append(float(row["price"]))
    return PricePath(tuple(times), tuple(prices), float(P0))


# --------------------------------------------------------------------------- diagnostics


@dataclass
class MartingaleDiagnostic:
    mean_increment: np.ndarray
    stderr: np.ndarray
    flagged: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flagged


def martingale_diagnostic(paths: Sequence[PricePath] | np.ndarray, P0: float | None = None,
                          threshold: float = 4.0) -> MartingaleDiagnostic:
    """Per-block mean price increment with its standard error.

    A block is flagged when ``|mean| > threshold * stderr``.  With a single path
    the standard error is taken as zero, so any nonzero increment is flagged.
    """
    if isinstance(paths, np.ndarray):
        if P0 is None:
            raise ValueError("P0 required with a price matrix")
        mat = np.column_stack([np.full(len(paths), P0), paths])
    else:
        mat = np.array([[p.P0, *p.prices] for p in paths], dtype=float)
    inc = np.diff(mat, axis=1)
    n = inc.shape[0]
    mean = inc.mean(axis=0)
    se = inc.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    flagged = [int(j) for j in np.nonzero(np.abs(mean) > threshold * se)[0]]
    return MartingaleDiagnostic(mean, se, flagged)
