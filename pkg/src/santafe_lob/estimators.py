"""Streaming estimators for spread, impact, diffusion, density and gaps.

Each ``*Estimator`` class is a sink: ``update`` takes the raw arrays of one
run (:class:`santafe_lob.simulate.RunData`), ``merge`` combines states from
independent runs and ``report`` produces the numbers.  States keep raw
per-run segments or exact integer sums, so merging is exact and does not
depend on the order of runs.  Standard errors are batch means: each run is cut
into ``batches`` consecutive blocks and the block means of all runs are pooled.

The ``*_estimator`` functions are the same computations on plain inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .params import ModelParams

DEFAULT_BATCHES = 20
R2_MIN = 0.95


class InsufficientSamples(ValueError):
    pass


class NonlinearMSD(ValueError):
    def __init__(self, r2: float, slope: float):
        super().__init__(f"MSD not linear over the fit range (R^2={r2:.4f})")
        self.r2 = r2
        self.slope = slope


# --------------------------------------------------------------------------
# settings


@dataclass(frozen=True)
class EstimatorSettings:
    """Estimator knobs; ``None`` fields take parameter-dependent defaults.

    snapshot_dt:   book snapshot interval (default 1/(v+mu))
    msd_range:     (tau1, tau2) MSD fit range (default 10/(v+mu), 100/(v+mu))
    l_max:         largest impact lag, counted in market orders
    gap_k:         deepest gap index K
    density_step:  density grid step in price units (default delta)
    density_rmax:  density grid extent in price units (default L * delta)
    pool_sides:    average ask and bid densities instead of asks only
    batches:       blocks per run for batch-means standard errors
    """

    snapshot_dt: float | None = None
    msd_range: tuple[float, float] | None = None
    l_max: int = 20
    gap_k: int = 20
    density_step: float | None = None
    density_rmax: float | None = None
    pool_sides: bool = False
    batches: int = DEFAULT_BATCHES

    def resolve(self, params: ModelParams) -> "EstimatorSettings":
        rate = params.v + params.mu
        return replace(
            self,
            snapshot_dt=self.snapshot_dt or 1.0 / rate,
            msd_range=tuple(self.msd_range) if self.msd_range else (10.0 / rate, 100.0 / rate),
            density_step=self.density_step or params.delta,
            density_rmax=self.density_rmax or params.cutoff * params.delta,
        )

    def density_depth(self, params: ModelParams) -> int:
        """Number of tick levels the snapshot histogram must cover."""
        s = self.resolve(params)
        return max(1, min(int(params.cutoff), int(math.ceil(s.density_rmax / params.delta - 1e-9))))


# --------------------------------------------------------------------------
# batch means


def _batch_means(x: np.ndarray, batches: int) -> list[float]:
    n = x.shape[0]
    if n < batches:
        return []
    edges = (np.arange(batches + 1) * n) // batches
    return [math.fsum(x[edges[i]:edges[i + 1]].tolist()) / (edges[i + 1] - edges[i])
            for i in range(batches)]


def _se(block_means: list[float]) -> float:
    n = len(block_means)
    if n < 2:
        return math.nan
    m = math.fsum(block_means) / n
    var = math.fsum((b - m) ** 2 for b in block_means) / (n - 1)
    return math.sqrt(var / n)


def _mean(parts: list[np.ndarray]) -> tuple[float, int]:
    n = sum(int(p.shape[0]) for p in parts)
    if n == 0:
        return math.nan, 0
    return math.fsum(math.fsum(p.tolist()) for p in parts) / n, n


def _canonical(parts):
    # order-free storage so that merge is commutative as well as associative
    return sorted(parts, key=lambda p: (p.shape[0], p.tobytes()))


# --------------------------------------------------------------------------
# spread


@dataclass
class SpreadEstimator:
    delta: float
    batches: int = DEFAULT_BATCHES
    parts: list = field(default_factory=list)

    def update(self, data) -> None:
        self.add(np.asarray(data.snap_ask - data.snap_bid, dtype=np.int64))

    def add(self, ticks: np.ndarray) -> None:
        if ticks.shape[0]:
            self.parts = _canonical(self.parts + [ticks])

    def merge(self, other: "SpreadEstimator") -> "SpreadEstimator":
        return SpreadEstimator(self.delta, self.batches, _canonical(self.parts + other.parts))

    def report(self) -> dict:
        mean, n = _mean(self.parts)
        blocks = [b for p in self.parts for b in _batch_means(p, self.batches)]
        return {"spread_mean": mean * self.delta, "spread_se": _se(blocks) * self.delta,
                "n_snapshots": n, "n_batches": len(blocks)}


def spread_estimator(snapshots, delta: float, batches: int = DEFAULT_BATCHES) -> tuple[float, float]:
    """Time average of (A - B) * delta over uniformly spaced snapshots, with batch-means SE."""
    ticks = np.array([s.best_ask - s.best_bid for s in snapshots], dtype=np.int64)
    if ticks.shape[0] < batches:
        raise InsufficientSamples(f"need at least {batches} snapshots, got {ticks.shape[0]}")
    est = SpreadEstimator(delta, batches)
    est.add(ticks)
    r = est.report()
    return r["spread_mean"], r["spread_se"]


# --------------------------------------------------------------------------
# impact


def _lag_moves(sign, before, after, lag):
    """sign_i * (2m after the lag-th market order counted from i, minus 2m before i)."""
    n = sign.shape[0] - lag + 1
    if n <= 0:
        return np.zeros(0, dtype=np.int64)
    return sign[:n] * (after[lag - 1:lag - 1 + n] - before[:n])


@dataclass
class ImpactEstimator:
    """Lagged signed midprice response; lag 1 is the order's own move."""

    delta: float
    l_max: int = 20
    batches: int = DEFAULT_BATCHES
    runs: list = field(default_factory=list)

    def update(self, data) -> None:
        self.add(data.mk_sign, data.mk_before, data.mk_after)

    def add(self, sign, before, after) -> None:
        trip = np.stack([np.asarray(sign, dtype=np.int64), np.asarray(before, dtype=np.int64),
                         np.asarray(after, dtype=np.int64)])
        if trip.shape[1]:
            self.runs = _canonical(self.runs + [trip])

    def merge(self, other: "ImpactEstimator") -> "ImpactEstimator":
        return ImpactEstimator(self.delta, self.l_max, self.batches, _canonical(self.runs + other.runs))

    def _lag_parts(self, lag, side=0):
        parts = []
        for s, b, a in self.runs:
            x = _lag_moves(s, b, a, lag)
            if side:
                x = x[s[: x.shape[0]] == side]
            parts.append(x)
        return parts

    def report(self) -> dict:
        half = 0.5 * self.delta
        means, ses = [], []
        for lag in range(1, self.l_max + 1):
            parts = self._lag_parts(lag)
            m, _ = _mean(parts)
            means.append(m * half)
            ses.append(_se([b for p in parts for b in _batch_means(p, self.batches)]) * half)
        buy, _ = _mean(self._lag_parts(1, 1))
        sell, _ = _mean(self._lag_parts(1, -1))
        buy_parts, sell_parts = self._lag_parts(1, 1), self._lag_parts(1, -1)
        n = sum(int(r.shape[1]) for r in self.runs)
        return {
            "impact_lag": np.array(means), "impact_lag_se": np.array(ses),
            "impact_buy": buy * half, "impact_sell": sell * half,
            "impact_buy_se": _se([b for p in buy_parts for b in _batch_means(p, self.batches)]) * half,
            "impact_sell_se": _se([b for p in sell_parts for b in _batch_means(p, self.batches)]) * half,
            "n_market_orders": n,
        }


def impact_estimator(events, l_max: int, delta: float) -> np.ndarray:
    """Per-lag mean signed midprice change (price units) from an event sequence.

    Only market-order records are used; ``events`` may be EventRecords or any
    objects with ``kind``, ``doubled_mid_before`` and ``doubled_mid_after``.
    """
    from .book import EventKind

    mk = [e for e in events if EventKind(e.kind).is_market]
    if not mk:
        return np.zeros(0)
    sign = np.array([1 if EventKind(e.kind) == EventKind.BuyMarket else -1 for e in mk])
    before = np.array([e.doubled_mid_before for e in mk], dtype=np.int64)
    after = np.array([e.doubled_mid_after for e in mk], dtype=np.int64)
    out = []
    for lag in range(1, l_max + 1):
        x = _lag_moves(sign, before, after, lag)
        if x.shape[0] == 0:
            break
        out.append(math.fsum(x.tolist()) / x.shape[0] * 0.5 * delta)
    return np.array(out)


def impact_ratio(impact_lag: np.ndarray) -> np.ndarray:
    """R(l) = impact(l) / impact(1)."""
    impact_lag = np.asarray(impact_lag, dtype=float)
    if impact_lag.shape[0] == 0:
        return impact_lag
    return impact_lag / impact_lag[0]


# --------------------------------------------------------------------------
# diffusion


def _msd_fit(tau: np.ndarray, msd: np.ndarray) -> tuple[float, float, float]:
    """Least-squares line through (tau, msd); returns slope, intercept, R^2."""
    design = np.vstack([tau, np.ones_like(tau)]).T
    (slope, icept), *_ = np.linalg.lstsq(design, msd, rcond=None)
    fit = design @ np.array([slope, icept])
    ss_res = float(np.sum((msd - fit) ** 2))
    ss_tot = float(np.sum((msd - msd.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return float(slope), float(icept), r2


def _lag_range(tau0: float, fit_range) -> np.ndarray:
    k1 = max(1, int(math.ceil(fit_range[0] / tau0 - 1e-9)))
    k2 = int(math.floor(fit_range[1] / tau0 + 1e-9))
    if k2 <= k1:
        raise ValueError("fit range must span at least two sampling lags")
    return np.arange(k1, k2 + 1)


def _sq_disp_sums(x: np.ndarray, lags: np.ndarray):
    sums = np.zeros(lags.shape[0], dtype=x.dtype)
    counts = np.zeros(lags.shape[0], dtype=np.int64)
    for j, k in enumerate(lags):
        if x.shape[0] > k:
            d = x[k:] - x[:-k]
            sums[j] = np.sum(d * d)
            counts[j] = d.shape[0]
    return sums, counts


@dataclass
class DiffusionEstimator:
    """MSD slope of the midprice sampled at the snapshot interval.

    The doubled midprice is integral, so the squared-displacement sums stay
    exact integers until the final conversion to price units.
    """

    delta: float
    tau0: float
    fit_range: tuple[float, float]
    batches: int = DEFAULT_BATCHES
    sums: np.ndarray | None = None
    counts: np.ndarray | None = None
    block_slopes: list = field(default_factory=list)
    n_samples: int = 0

    @property
    def lags(self):
        return _lag_range(self.tau0, self.fit_range)

    def update(self, data) -> None:
        self.add(np.asarray(data.snap_ask + data.snap_bid, dtype=np.int64))

    def add(self, doubled_mid: np.ndarray) -> None:
        lags = self.lags
        s, c = _sq_disp_sums(doubled_mid, lags)
        if self.sums is None:
            self.sums, self.counts = s, c
        else:
            self.sums, self.counts = self.sums + s, self.counts + c
        self.n_samples += int(doubled_mid.shape[0])
        n = doubled_mid.shape[0]
        blen = n // self.batches
        if blen > 2 * lags[-1]:
            tau = lags * self.tau0
            for i in range(self.batches):
                bs, bc = _sq_disp_sums(doubled_mid[i * blen:(i + 1) * blen], lags)
                msd = bs / bc * (0.5 * self.delta) ** 2
                self.block_slopes.append(_msd_fit(tau, msd)[0])
        self.block_slopes.sort()

    def merge(self, other: "DiffusionEstimator") -> "DiffusionEstimator":
        if self.sums is None:
            return replace(other, block_slopes=list(other.block_slopes))
        if other.sums is None:
            return replace(self, block_slopes=list(self.block_slopes))
        return DiffusionEstimator(self.delta, self.tau0, self.fit_range, self.batches,
                                  self.sums + other.sums, self.counts + other.counts,
                                  sorted(self.block_slopes + other.block_slopes),
                                  self.n_samples + other.n_samples)

    def msd(self) -> tuple[np.ndarray, np.ndarray]:
        tau = self.lags * self.tau0
        if self.sums is None:
            return tau, np.full(tau.shape, math.nan)
        with np.errstate(invalid="ignore", divide="ignore"):
            msd = self.sums / self.counts * (0.5 * self.delta) ** 2
        return tau, msd

    def report(self) -> dict:
        tau, msd = self.msd()
        ok = np.isfinite(msd)
        if ok.sum() < 2:
            return {"diffusion_D": math.nan, "diffusion_se": math.nan, "diffusion_r2": math.nan,
                    "diffusion_nonlinear": False, "n_msd_samples": self.n_samples}
        slope, _, r2 = _msd_fit(tau[ok], msd[ok])
        return {"diffusion_D": slope, "diffusion_se": _se(self.block_slopes), "diffusion_r2": r2,
                "diffusion_nonlinear": bool(r2 < R2_MIN), "n_msd_samples": self.n_samples}


def msd_curve(samples, tau0: float, fit_range) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(samples, dtype=float)
    lags = _lag_range(tau0, fit_range)
    s, c = _sq_disp_sums(x, lags)
    return lags * tau0, s / c


def diffusion_estimator(samples, tau0: float, fit_range, min_samples: int = 10_000) -> float:
    """Slope of MSD(tau) against tau over ``fit_range`` (no factor 1/2).

    Raises NonlinearMSD when the straight line explains less than 95% of the
    MSD variation over the fit range.
    """
    x = np.asarray(samples, dtype=float)
    if x.shape[0] < min_samples:
        raise InsufficientSamples(f"need at least {min_samples} samples, got {x.shape[0]}")
    tau, msd = msd_curve(x, tau0, fit_range)
    slope, _, r2 = _msd_fit(tau, msd)
    if r2 < R2_MIN:
        raise NonlinearMSD(r2, slope)
    return slope


# --------------------------------------------------------------------------
# density


@dataclass(frozen=True)
class DensityProfile:
    """Order density (orders per unit price) against distance from the opposite best.

    ``values[k]`` is the average over bin ``k``, which holds relative levels
    ``i`` with ``floor((i - 1) * delta / grid_step) == k``; its reported
    position is the bin centre ``(k + 1/2) * grid_step``.
    """

    grid_step: float
    values: np.ndarray
    n_snapshots: int = 0

    @property
    def r(self) -> np.ndarray:
        return (np.arange(self.values.shape[0]) + 0.5) * self.grid_step

    def tail_mean(self, fraction: float = 0.1) -> float:
        n = self.values.shape[0]
        k = max(1, int(round(n * fraction)))
        return float(np.mean(self.values[n - k:]))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("r_price,rho_orders_per_price\n")
            for r, v in zip(self.r.tolist(), self.values.tolist()):
                fh.write(f"{r:.17g},{v:.17g}\n")

    @classmethod
    def from_csv(cls, path, n_snapshots: int = 0) -> "DensityProfile":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        step = float(data[0, 0]) * 2.0 if data.shape[0] else math.nan
        return cls(step, data[:, 1].copy(), n_snapshots)


def _bin_levels(hist: np.ndarray, n_snap: int, delta: float, grid_step: float, r_max: float):
    nbins = max(1, int(math.ceil(r_max / grid_step - 1e-9)))
    idx = np.floor(np.arange(hist.shape[0]) * delta / grid_step + 1e-9).astype(np.int64)
    keep = idx < nbins
    out = np.bincount(idx[keep], weights=hist[keep].astype(float), minlength=nbins)[:nbins]
    return out / (max(n_snap, 1) * grid_step)


@dataclass
class DensityEstimator:
    delta: float
    grid_step: float
    r_max: float
    pool_sides: bool = False
    hist_ask: np.ndarray | None = None
    hist_bid: np.ndarray | None = None
    n_snapshots: int = 0

    def update(self, data) -> None:
        self.add(data.hist_ask, data.hist_bid, data.n_snapshots)

    def add(self, hist_ask, hist_bid, n_snap) -> None:
        ha = np.asarray(hist_ask, dtype=np.int64)
        hb = np.asarray(hist_bid, dtype=np.int64)
        if self.hist_ask is None:
            self.hist_ask, self.hist_bid = ha.copy(), hb.copy()
        else:
            na = max(self.hist_ask.shape[0], ha.shape[0])
            nb = max(self.hist_bid.shape[0], hb.shape[0])
            self.hist_ask = _pad(self.hist_ask, na) + _pad(ha, na)
            self.hist_bid = _pad(self.hist_bid, nb) + _pad(hb, nb)
        self.n_snapshots += int(n_snap)

    def merge(self, other: "DensityEstimator") -> "DensityEstimator":
        out = DensityEstimator(self.delta, self.grid_step, self.r_max, self.pool_sides)
        for e in (self, other):
            if e.hist_ask is not None:
                out.add(e.hist_ask, e.hist_bid, e.n_snapshots)
        return out

    def profile(self) -> DensityProfile:
        if self.hist_ask is None or self.n_snapshots == 0:
            nb = max(1, int(math.ceil(self.r_max / self.grid_step - 1e-9)))
            return DensityProfile(self.grid_step, np.full(nb, math.nan), 0)
        hist = self.hist_ask
        n = self.n_snapshots
        if self.pool_sides:
            n_lv = max(self.hist_ask.shape[0], self.hist_bid.shape[0])
            hist = _pad(self.hist_ask, n_lv) + _pad(self.hist_bid, n_lv)
            n = 2 * n
        return DensityProfile(self.grid_step, _bin_levels(hist, n, self.delta, self.grid_step, self.r_max), self.n_snapshots)

    def report(self) -> dict:
        return {"density": self.profile()}


def _pad(x, n):
    if x.shape[0] == n:
        return x
    out = np.zeros(n, dtype=x.dtype)
    out[: x.shape[0]] = x
    return out


def density_estimator(snapshots, grid_step: float, r_max: float, delta: float,
                      pool_sides: bool = False) -> DensityProfile:
    """Average ask counts binned by distance above the best bid, per unit price.

    Snapshots carry ``ask_rel[j]`` = count at relative level ``j + 1``.
    """
    snapshots = list(snapshots)
    depth = max((len(s.ask_rel) for s in snapshots), default=1)
    est = DensityEstimator(delta, grid_step, r_max, pool_sides)
    ha = np.zeros(depth, dtype=np.int64)
    hb = np.zeros(depth, dtype=np.int64)
    for s in snapshots:
        ha[: len(s.ask_rel)] += np.asarray(s.ask_rel, dtype=np.int64)
        hb[: len(s.bid_rel)] += np.asarray(s.bid_rel, dtype=np.int64)
    est.add(ha, hb, len(snapshots))
    return est.profile()


# --------------------------------------------------------------------------
# gaps


@dataclass
class GapEstimator:
    """Mean distances between consecutive occupied ask levels, in ticks.

    ``g_0`` is the spread; ``g_k`` for k >= 1 is the distance from the k-th
    to the (k+1)-th occupied ask level.  Snapshots with fewer than K+1
    occupied ask levels inside the window are skipped and counted.
    """

    K: int
    sums: np.ndarray | None = None
    ok: int = 0
    skipped: int = 0

    def update(self, data) -> None:
        self.add(data.gap_sum, data.gap_ok, data.gap_skip)

    def add(self, sums, ok, skipped) -> None:
        sums = np.asarray(sums, dtype=np.int64)
        self.sums = sums.copy() if self.sums is None else self.sums + sums
        self.ok += int(ok)
        self.skipped += int(skipped)

    def merge(self, other: "GapEstimator") -> "GapEstimator":
        out = GapEstimator(self.K)
        for e in (self, other):
            if e.sums is not None:
                out.add(e.sums, e.ok, e.skipped)
        return out

    def report(self) -> dict:
        total = self.ok + self.skipped
        if self.sums is None or self.ok == 0:
            means = np.full(self.K + 1, math.nan)
        else:
            means = self.sums / self.ok
        return {"gap_means": means, "gap_samples": self.ok,
                "gap_skip_fraction": self.skipped / total if total else math.nan}


def gap_from_ask_rel(best_gap: int, ask_rel, K: int):
    """Gaps g_0..g_K of one snapshot or ``None`` when fewer than K+1 levels are occupied."""
    occ = np.flatnonzero(np.asarray(ask_rel)) + 1
    if occ.shape[0] < K + 1:
        return None
    g = np.empty(K + 1, dtype=np.int64)
    g[0] = best_gap
    g[1:] = np.diff(occ[: K + 1])
    return g


def gap_estimator(snapshots, K: int) -> tuple[np.ndarray, int]:
    """Time-averaged gaps g_0..g_K and the number of skipped snapshots."""
    est = GapEstimator(K)
    sums = np.zeros(K + 1, dtype=np.int64)
    ok = skipped = 0
    for s in snapshots:
        g = gap_from_ask_rel(s.best_ask - s.best_bid, s.ask_rel, K)
        if g is None:
            skipped += 1
        else:
            sums += g
            ok += 1
    est.add(sums, ok, skipped)
    return est.report()["gap_means"], skipped


# --------------------------------------------------------------------------
# report


def make_sinks(params: ModelParams, settings: EstimatorSettings | None = None):
    s = (settings or EstimatorSettings()).resolve(params)
    return [
        SpreadEstimator(params.delta, s.batches),
        ImpactEstimator(params.delta, s.l_max, s.batches),
        DiffusionEstimator(params.delta, s.snapshot_dt, tuple(s.msd_range), s.batches),
        DensityEstimator(params.delta, s.density_step, s.density_rmax, s.pool_sides),
        GapEstimator(s.gap_k),
    ]


def merge_sinks(a, b):
    return [x.merge(y) for x, y in zip(a, b)]


REPORT_COLUMNS = (
    "lambda", "v", "mu", "delta", "cutoff",
    "spread_mean", "spread_se", "impact_instant", "impact_instant_se",
    "impact_buy", "impact_sell", "diffusion_D", "diffusion_se", "diffusion_r2",
    "diffusion_nonlinear", "gap_skip_fraction",
    "n_snapshots", "n_market_orders", "n_msd_samples", "gap_samples",
)
REPORT_UNITS = {
    "lambda": "1/(price*time)", "v": "1/time", "mu": "1/time", "delta": "price", "cutoff": "ticks",
    "spread_mean": "price", "spread_se": "price", "impact_instant": "price",
    "impact_instant_se": "price", "impact_buy": "price", "impact_sell": "price",
    "diffusion_D": "price^2/time", "diffusion_se": "price^2/time", "diffusion_r2": "1",
    "diffusion_nonlinear": "bool", "gap_skip_fraction": "1", "n_snapshots": "count",
    "n_market_orders": "count", "n_msd_samples": "count", "gap_samples": "count",
}


def fmt(x) -> str:
    """C-locale text for one value; floats carry 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


@dataclass
class MetricsReport:
    params: ModelParams
    spread_mean: float = math.nan
    spread_se: float = math.nan
    impact_instant: float = math.nan
    impact_instant_se: float = math.nan
    impact_lag: np.ndarray = field(default_factory=lambda: np.zeros(0))
    impact_lag_se: np.ndarray = field(default_factory=lambda: np.zeros(0))
    impact_buy: float = math.nan
    impact_sell: float = math.nan
    diffusion_D: float = math.nan
    diffusion_se: float = math.nan
    diffusion_r2: float = math.nan
    diffusion_nonlinear: bool = False
    density: DensityProfile | None = None
    gap_means: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gap_skip_fraction: float = math.nan
    sample_counts: dict = field(default_factory=dict)

    @classmethod
    def from_sinks(cls, params: ModelParams, sinks) -> "MetricsReport":
        rep = cls(params)
        counts = {}
        for s in sinks:
            r = s.report()
            if isinstance(s, SpreadEstimator):
                rep.spread_mean, rep.spread_se = r["spread_mean"], r["spread_se"]
                counts["n_snapshots"] = r["n_snapshots"]
            elif isinstance(s, ImpactEstimator):
                rep.impact_lag, rep.impact_lag_se = r["impact_lag"], r["impact_lag_se"]
                if r["n_market_orders"]:
                    rep.impact_instant = float(r["impact_lag"][0])
                    rep.impact_instant_se = float(r["impact_lag_se"][0])
                else:
                    rep.impact_lag = np.zeros(0)
                    rep.impact_lag_se = np.zeros(0)
                rep.impact_buy, rep.impact_sell = r["impact_buy"], r["impact_sell"]
                counts["n_market_orders"] = r["n_market_orders"]
            elif isinstance(s, DiffusionEstimator):
                rep.diffusion_D, rep.diffusion_se = r["diffusion_D"], r["diffusion_se"]
                rep.diffusion_r2, rep.diffusion_nonlinear = r["diffusion_r2"], r["diffusion_nonlinear"]
                counts["n_msd_samples"] = r["n_msd_samples"]
            elif isinstance(s, DensityEstimator):
                rep.density = r["density"]
            elif isinstance(s, GapEstimator):
                rep.gap_means = r["gap_means"]
                rep.gap_skip_fraction = r["gap_skip_fraction"]
                counts["gap_samples"] = r["gap_samples"]
        rep.sample_counts = counts
        return rep

    @property
    def impact_ratio(self) -> np.ndarray:
        return impact_ratio(self.impact_lag)

    # -- flat row -----------------------------------------------------
    def row(self) -> dict:
        p = self.params
        base = {"lambda": p.lam, "v": p.v, "mu": p.mu, "delta": p.delta, "cutoff": int(p.cutoff)}
        vals = {k: getattr(self, k) for k in REPORT_COLUMNS[5:16]}
        counts = {k: int(self.sample_counts.get(k, 0)) for k in REPORT_COLUMNS[16:]}
        return {**base, **vals, **counts}

    def csv_header(self) -> str:
        return ",".join(f"{c}[{REPORT_UNITS[c]}]" for c in REPORT_COLUMNS)

    def csv_row(self) -> str:
        r = self.row()
        return ",".join(fmt(r[c]) for c in REPORT_COLUMNS)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.csv_header() + "\n" + self.csv_row() + "\n")

    @staticmethod
    def parse_csv(path) -> dict:
        """Read a metrics CSV back into ``{column: value}`` with native types."""
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            values = fh.readline().strip().split(",")
        out = {}
        for h, v in zip(header, values):
            name = h.split("[", 1)[0]
            if name == "cutoff" or name.startswith("n_") or name == "gap_samples":
                out[name] = int(v)
            elif name == "diffusion_nonlinear":
                out[name] = v == "1"
            else:
                out[name] = float(v)
        return out

    # -- structured document ------------------------------------------
    def to_json(self) -> str:
        doc = {
            "params": self.params.as_dict(),
            "metrics": {k: getattr(self, k) for k in REPORT_COLUMNS[5:16]},
            "impact_lag_price": list(self.impact_lag),
            "impact_lag_se_price": list(self.impact_lag_se),
            "impact_lag_unit": "market orders",
            "gap_means_ticks": list(self.gap_means),
            "sample_counts": dict(self.sample_counts),
        }
        if self.density is not None:
            doc["density"] = {"grid_step_price": self.density.grid_step,
                              "rho_orders_per_price": list(self.density.values)}
        return _json(doc) + "\n"

    def write_lag_csv(self, path) -> None:
        ratio = self.impact_ratio
        with open(path, "w") as fh:
            fh.write("lag_market_orders,impact_price,impact_se_price,ratio_R\n")
            for i, (m, s) in enumerate(zip(self.impact_lag, self.impact_lag_se)):
                fh.write(f"{i + 1},{fmt(m)},{fmt(s)},{fmt(ratio[i])}\n")

    def write_gap_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("k,gap_mean_ticks\n")
            for k, g in enumerate(self.gap_means):
                fh.write(f"{k},{fmt(g)}\n")


def _json(x, indent=0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(x, dict):
        if not x:
            return "{}"
        items = [f'{pad}"{k}": {_json(v, indent + 1)}' for k, v in x.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_json(v, indent + 1) for v in x) + "]"
    if isinstance(x, str):
        return '"' + x.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")
