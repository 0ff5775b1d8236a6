"""Closed mean-gap recursion and shooting for the spread in ticks.

With S_k = sum_{i<=k} (g_i - 1) the recursion reads

    (mu + (k+1) v) g_{k+1} = lam_delta * g_k * S_k,    k >= 0,

so ``g_{k+1} > g_k`` exactly when ``lam_delta * S_k > mu + (k+1) v``.  Deep in
the book the gaps approach ``1 + v / lam_delta``.  Once a gap exceeds
``1 + (mu + v) / lam_delta`` while still growing, every later gap grows too,
so an upward runaway is permanent; the shooting routine bisects on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .params import ModelParams

PERSISTENCE = 3
LIMIT_RTOL = 0.01
MAX_BISECTIONS = 60


class ChainClass(str, Enum):
    ConvergedToLimit = "ConvergedToLimit"
    DivergedUp = "DivergedUp"
    Collapsed = "Collapsed"
    # K ran out before any of the three patterns showed up
    Unresolved = "Unresolved"


class NoBracket(ValueError):
    def __init__(self, lo_chain, hi_chain):
        super().__init__(f"both ends classify alike: {lo_chain.classification.value} / "
                         f"{hi_chain.classification.value}")
        self.lo_chain = lo_chain
        self.hi_chain = hi_chain


@dataclass(frozen=True)
class GapChain:
    g: np.ndarray
    classification: ChainClass
    limit: float
    threshold: float

    @property
    def converged(self) -> bool:
        return self.classification is ChainClass.ConvergedToLimit

    @property
    def valid(self) -> bool:
        return bool(np.all(self.g >= 1.0))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("k,gap_mean_ticks\n")
            for k, g in enumerate(self.g.tolist()):
                fh.write(f"{k},{g:.17g}\n")


def gap_limit(params: ModelParams) -> float:
    """1 + v / (lam delta): deep-book mean gap."""
    return 1.0 + params.v / params.submission_rate


def gap_threshold(params: ModelParams) -> float:
    """1 + (mu + v) / (lam delta): largest spread (ticks) compatible with a bounded chain."""
    return 1.0 + (params.mu + params.v) / params.submission_rate


def gap_chain_iterate(params: ModelParams, g0: float, K: int) -> GapChain:
    """Iterate the recursion up to index K and classify the chain.

    Iteration stops early at a gap below one or a non-finite gap.  The
    runaway property (a growing gap above the threshold is followed by a
    larger one) is asserted at every step.
    """
    if not g0 > 1.0:
        raise ValueError("g0 must exceed 1")
    if K < 1:
        raise ValueError("K must be at least 1")
    # plain floats overflow to inf quietly; the non-finite check below handles it
    ld, v, mu = float(params.submission_rate), float(params.v), float(params.mu)
    thr = gap_threshold(params)
    lim = gap_limit(params)
    g = [float(g0)]
    s = 0.0
    run = 0
    cls = None
    for k in range(K):
        gk = g[-1]
        s += gk - 1.0
        nxt = ld * gk * s / (mu + (k + 1) * v)
        if k >= 1 and gk > g[-2] and gk > thr and math.isfinite(nxt):
            # lam_delta * S_k exceeds mu + (k+1) v by at least mu + (g_k - 1) lam_delta - v > 0
            assert nxt >= gk * (1.0 - 1e-12), "runaway monotonicity violated"
        g.append(nxt)
        if not math.isfinite(nxt):
            cls = cls or ChainClass.DivergedUp
            break
        if nxt < 1.0:
            cls = cls or ChainClass.Collapsed
            break
        if nxt > thr and nxt > gk:
            run += 1
            if run >= PERSISTENCE and cls is None:
                cls = ChainClass.DivergedUp
        else:
            run = 0
    if cls is None:
        cls = ChainClass.ConvergedToLimit if abs(g[-1] - lim) < LIMIT_RTOL * lim else ChainClass.Unresolved
    return GapChain(np.array(g), cls, lim, thr)


@dataclass(frozen=True)
class ShootResult:
    g0: float
    chain: GapChain
    bracket: tuple[float, float]
    iterations: int


def gap_chain_shoot(params: ModelParams, K: int = 200, bisection_tol: float = 1e-10) -> ShootResult:
    """Bisect g0 on (1, threshold] for the edge of the upward runaway.

    The returned g0 is the lower end of the final bracket, so it never
    exceeds the threshold.  Raises NoBracket when both ends classify alike.
    """
    if K < 20:
        raise ValueError("K must be at least 20")
    thr = gap_threshold(params)
    lo = 1.0 + 1e-12 * (thr - 1.0)
    hi = thr
    c_lo = gap_chain_iterate(params, lo, K)
    c_hi = gap_chain_iterate(params, hi, K)
    up_lo = c_lo.classification is ChainClass.DivergedUp
    up_hi = c_hi.classification is ChainClass.DivergedUp
    if up_lo == up_hi:
        raise NoBracket(c_lo, c_hi)
    it = 0
    while hi - lo > bisection_tol * max(1.0, abs(hi)) and it < MAX_BISECTIONS:
        mid = 0.5 * (lo + hi)
        c_mid = gap_chain_iterate(params, mid, K)
        if (c_mid.classification is ChainClass.DivergedUp) == up_hi:
            hi = mid
        else:
            lo = mid
        it += 1
    return ShootResult(lo, gap_chain_iterate(params, lo, K), (lo, hi), it)
