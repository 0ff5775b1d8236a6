"""Model constants, validation and the seeding contract shared by every module."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

# Above these values the small-tick / high-liquidity assumptions of the
# mean-field layer degrade noticeably.
REGIME_THRESHOLD = 0.1

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class NonPositiveParameter(ValueError):
    """Raised when a model constant violates its bound."""

    def __init__(self, name: str, value: float):
        super().__init__(f"parameter {name!r} out of range: {value!r}")
        self.name = name
        self.value = value


@dataclass(frozen=True)
class ModelParams:
    """The five constants of the zero-intelligence book.

    lam:    limit-order intensity per unit price per unit time
    v:      cancellation intensity per resting order
    mu:     market-order intensity per side
    delta:  tick size in price units
    cutoff: window width L in ticks
    """

    lam: float
    v: float
    mu: float
    delta: float
    cutoff: int

    @property
    def n_st(self) -> float:
        """Far-field mean occupancy per price level."""
        return self.lam * self.delta / self.v

    @property
    def epsilon(self) -> float:
        """Characteristic near-best length (v + mu) / lam."""
        return (self.v + self.mu) / self.lam

    @property
    def submission_rate(self) -> float:
        """Per-level limit-order rate lam * delta."""
        return self.lam * self.delta

    def with_mu(self, mu: float) -> "ModelParams":
        return ModelParams(self.lam, self.v, mu, self.delta, self.cutoff)

    def as_dict(self) -> dict:
        return {"lambda": self.lam, "v": self.v, "mu": self.mu,
                "delta": self.delta, "cutoff": self.cutoff}


@dataclass(frozen=True)
class RegimeReport:
    n_st: float
    epsilon: float
    small_tick: bool
    high_liquidity: bool

    @property
    def ok(self) -> bool:
        return self.small_tick and self.high_liquidity


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    run_index: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed <= _MASK64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if self.run_index < 0:
            raise ValueError("run_index must be non-negative")


def _finite_positive(name: str, value: float, allow_zero: bool = False) -> None:
    if not math.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        raise NonPositiveParameter(name, value)


def validate(params: ModelParams) -> ModelParams:
    """Check every bound and log the regime report; returns ``params`` unchanged."""
    _finite_positive("lambda", params.lam)
    _finite_positive("v", params.v)
    _finite_positive("mu", params.mu, allow_zero=True)
    _finite_positive("delta", params.delta)
    if int(params.cutoff) != params.cutoff or params.cutoff < 1:
        raise NonPositiveParameter("cutoff", params.cutoff)
    for name, value in (("n_st", params.n_st), ("epsilon", params.epsilon)):
        if not math.isfinite(value) or value <= 0:
            raise NonPositiveParameter(name, value)
    report = regime_report(params)
    if not report.ok:
        logger.warning("outside the small-tick/high-liquidity regime: n_st=%g epsilon=%g",
                       report.n_st, report.epsilon)
    return params


def regime_report(params: ModelParams) -> RegimeReport:
    n_st = params.n_st
    eps = params.epsilon
    return RegimeReport(n_st, eps, n_st <= REGIME_THRESHOLD, eps <= REGIME_THRESHOLD)


def epsilon(params: ModelParams) -> float:
    return params.epsilon


def n_st(params: ModelParams) -> float:
    return params.n_st


def _splitmix64(z: int) -> int:
    z = (z + _GOLDEN_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_stream_seed(spec: SeedSpec) -> int:
    """64-bit stream seed for one run.

    The seed is ``splitmix64(mix(master) + run_index * GOLDEN_GAMMA)`` (mod 2**64).
    The splitmix64 finaliser is a bijection and the golden-ratio increment is odd,
    so distinct run indices under one master seed can never collide.
    """
    base = _splitmix64(spec.master_seed)
    return _splitmix64((base + spec.run_index * _GOLDEN_GAMMA) & _MASK64)


def derive_stream_seeds(master_seed: int, run_indices) -> np.ndarray:
    """Vectorised :func:`derive_stream_seed` over many run indices."""
    idx = np.asarray(run_indices, dtype=np.uint64)
    base = np.uint64(_splitmix64(master_seed))
    gamma = np.uint64(_GOLDEN_GAMMA)
    with np.errstate(over="ignore"):
        z = base + idx * gamma + gamma
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def make_rng(spec: SeedSpec) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_stream_seed(spec)))


# Parameter presets: a large-book scale and a desk-scale shrink that
# keeps v and the mu/v ratios.
DESK = ModelParams(lam=1000.0, v=1.0, mu=1.0, delta=1e-4, cutoff=10_000)
PAPER = ModelParams(lam=10000.0, v=1.0, mu=1.0, delta=1e-6, cutoff=1_000_000)
PRESETS = {"desk": DESK, "paper": PAPER}
