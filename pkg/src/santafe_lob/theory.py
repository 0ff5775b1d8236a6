"""Mean-field layer: closed forms, the jump kernel, Kramers-Moyal moments and a
steady-state solver for the kinetic equation of the ask density profile.

Profiles live on the node grid ``r_j = j * h`` for ``j = 0 .. N`` with
``N * h = R``.  Every integral is a trapezoid sum on that grid.  Outside the
grid the density is closed by ``rho = 0`` for ``r < 0`` (no ask below the
opposite best) and ``rho = lam / v`` for ``r > R`` (far field).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .params import ModelParams

TAIL_TOL = 1e-8


class DomainTooSmall(ValueError):
    """The grid does not reach far enough for the neglected tail to be tiny."""


class NoConvergence(RuntimeError):
    def __init__(self, max_iter: int, residual: float, profile=None, history=None):
        super().__init__(f"no convergence after {max_iter} iterations (residual {residual:.3e})")
        self.max_iter = max_iter
        self.residual = residual
        self.profile = profile
        self.history = history if history is not None else []


# --------------------------------------------------------------------------
# closed forms


def diffusion_theory(params: ModelParams) -> float:
    """2 (v + mu)^3 / lam^2."""
    return 2.0 * (params.v + params.mu) ** 3 / params.lam ** 2


@dataclass(frozen=True)
class TheoryProfile:
    params: ModelParams
    rho0: float
    rho_inf: float
    decay_rate: float
    D_theory: float

    @classmethod
    def of(cls, params: ModelParams) -> "TheoryProfile":
        D = diffusion_theory(params)
        return cls(params, params.lam / (params.v + params.mu), params.lam / params.v,
                   math.sqrt(params.v / D), D)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return (self.rho0 - self.rho_inf) * np.exp(-self.decay_rate * r) + self.rho_inf

    def image(self, r):
        r = np.asarray(r, dtype=float)
        return self.rho_inf * -np.expm1(-self.decay_rate * r)


def stationary_profile(params: ModelParams, r):
    """Exponential relaxation from lam/(v+mu) at the best to lam/v far away."""
    if np.any(np.asarray(r) < 0):
        raise ValueError("r must be non-negative")
    return TheoryProfile.of(params)(r)


def image_profile(params: ModelParams, r):
    """Absorbing-boundary form (lam/v)(1 - exp(-sqrt(v/D) r))."""
    if np.any(np.asarray(r) < 0):
        raise ValueError("r must be non-negative")
    return TheoryProfile.of(params).image(r)


@dataclass(frozen=True)
class TheoryMetrics:
    spread: float
    impact: float
    D: float


def theory_metrics(params: ModelParams) -> TheoryMetrics:
    eps = (params.mu + params.v) / params.lam
    return TheoryMetrics(eps, 0.5 * eps, diffusion_theory(params))


# --------------------------------------------------------------------------
# grid profiles


def _trap_prefix(values: np.ndarray, h: float) -> np.ndarray:
    c = np.zeros_like(values, dtype=float)
    c[1:] = np.cumsum(0.5 * h * (values[1:] + values[:-1]))
    return c


def _trap(values: np.ndarray, h: float) -> float:
    if values.shape[0] < 2:
        return 0.0
    return float(h * (values.sum() - 0.5 * (values[0] + values[-1])))


@dataclass(frozen=True)
class GridProfile:
    """Density on nodes ``r_j = j h``; ``cumulative[j]`` is the trapezoid integral up to ``r_j``."""

    grid_step: float
    values: np.ndarray
    cumulative: np.ndarray = field(default=None)
    rho_far: float = math.nan
    iterations: int = 0
    residual_history: tuple = ()

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if self.cumulative is None:
            object.__setattr__(self, "cumulative", _trap_prefix(vals, self.grid_step))

    @classmethod
    def from_function(cls, f, grid_step: float, domain_max: float, rho_far: float, **kw) -> "GridProfile":
        n = int(round(domain_max / grid_step))
        r = np.arange(n + 1) * grid_step
        return cls(grid_step, np.asarray(f(r), dtype=float) * np.ones_like(r), rho_far=rho_far, **kw)

    @classmethod
    def constant(cls, rho0: float, grid_step: float, domain_max: float, rho_far: float | None = None):
        return cls.from_function(lambda r: np.full_like(r, rho0), grid_step, domain_max,
                                 rho0 if rho_far is None else rho_far)

    @property
    def r(self) -> np.ndarray:
        return np.arange(self.values.shape[0]) * self.grid_step

    @property
    def domain_max(self) -> float:
        return (self.values.shape[0] - 1) * self.grid_step

    @property
    def tail_mass(self) -> float:
        """exp(-int_0^R rho): probability that no order sits inside the grid."""
        return math.exp(-self.cumulative[-1])

    def check_domain(self) -> None:
        if self.tail_mass > TAIL_TOL:
            raise DomainTooSmall(f"exp(-int rho) = {self.tail_mass:.3e} > {TAIL_TOL:g}; widen the grid")

    def extended(self, n_extra: int):
        """(values, cumulative) continued past R with the far-field closure."""
        if n_extra <= 0:
            return self.values, self.cumulative
        far = self.rho_far
        vals = np.concatenate([self.values, np.full(n_extra, far)])
        ext = self.cumulative[-1] + far * self.grid_step * np.arange(1, n_extra + 1)
        return vals, np.concatenate([self.cumulative, ext])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("r_price,rho_orders_per_price\n")
            for r, v in zip(self.r.tolist(), self.values.tolist()):
                fh.write(f"{r:.17g},{v:.17g}\n")


def profile_from_params(params: ModelParams, grid_step: float, domain_max: float, kind: str = "stationary"):
    tp = TheoryProfile.of(params)
    f = tp if kind == "stationary" else tp.image
    return GridProfile.from_function(f, grid_step, domain_max, tp.rho_inf)


# --------------------------------------------------------------------------
# jump kernel and moments


@dataclass(frozen=True)
class KernelGrid:
    """W on the lattice ``y = m h``: ``minus[m]`` at ``y = -m h`` and ``plus[m]`` at ``y = +m h``.

    Index 0 holds the one-sided limits at ``y -> 0-`` and ``y -> 0+``.
    """

    grid_step: float
    minus: np.ndarray
    plus: np.ndarray

    @property
    def y_minus(self):
        return -np.arange(self.minus.shape[0]) * self.grid_step

    @property
    def y_plus(self):
        return np.arange(self.plus.shape[0]) * self.grid_step

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.where(y < 0, np.interp(-y, self.y_plus, self.minus, right=0.0),
                       np.interp(y, self.y_plus, self.plus, right=0.0))
        return out

    def total(self) -> float:
        return _trap(self.minus, self.grid_step) + _trap(self.plus, self.grid_step)


def kernel_grid(profile: GridProfile, params: ModelParams, y_max: float | None = None) -> KernelGrid:
    """Trapezoid evaluation of the jump intensity density on the grid lattice.

    y < 0:  lam * int_0^inf rho(z - y) exp(-C(z - y)) dz
    y > 0:  (mu + v) * int_0^inf rho(z) rho(z + y) exp(-C(z + y)) dz
    with C the running integral of rho; the grid is closed by rho = lam/v.
    """
    profile.check_domain()
    h = profile.grid_step
    if y_max is None:
        y_max = 20.0 * params.epsilon
    M = int(math.ceil(y_max / h - 1e-9))
    n = profile.values.shape[0]
    vals, cum = profile.extended(M)
    P = vals * np.exp(-cum)
    # reverse trapezoid tail of P: T[j] = int_{r_j}^{end} P
    seg = 0.5 * h * (P[1:] + P[:-1])
    T = np.zeros_like(P)
    T[:-1] = np.cumsum(seg[::-1])[::-1]
    minus = params.lam * T[: M + 1]
    # plus[m] = sum_j w_j rho_j P_{j+m} over z on [0, R]; correlation via FFT
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    corr = fftconvolve(P, (w * profile.values)[::-1], mode="full")[n - 1:n + M]
    plus = (params.mu + params.v) * np.maximum(corr, 0.0)
    return KernelGrid(h, minus, plus)


def jump_kernel(profile: GridProfile, params: ModelParams, y, y_max: float | None = None):
    """W(y) for y != 0; lattice values, linearly interpolated off the lattice."""
    y = np.asarray(y, dtype=float)
    if np.any(y == 0):
        raise ValueError("the kernel is defined for y != 0")
    ymax = max(float(np.max(np.abs(y))), y_max or 0.0, 20.0 * params.epsilon)
    return kernel_grid(profile, params, ymax)(y)


def km_coefficient(profile: GridProfile, params: ModelParams, order: int, y_max: float | None = None) -> float:
    """Order 1: int y W(y) dy.  Order 2: (1/2) int y^2 W(y) dy.  Trapezoid over [-Y, Y]."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    k = kernel_grid(profile, params, y_max)
    y = k.y_plus
    if order == 1:
        return _trap(y * k.plus, k.grid_step) - _trap(y * k.minus, k.grid_step)
    return 0.5 * (_trap(y * y * k.plus, k.grid_step) + _trap(y * y * k.minus, k.grid_step))


# --------------------------------------------------------------------------
# kinetic equation


def boltzmann_rhs(profile: GridProfile, params: ModelParams, kernel: KernelGrid | None = None,
                  y_max: float | None = None) -> np.ndarray:
    """Time derivative of rho at every grid node.

    lam - rho (v + mu exp(-C)) + int W(y) (rho(r - y) - rho(r)) dy
    """
    if kernel is None:
        kernel = kernel_grid(profile, params, y_max)
    h = profile.grid_step
    rho = profile.values
    n = rho.shape[0]
    M = kernel.minus.shape[0] - 1
    # full kernel on y = -M h .. M h; the two one-sided limits at y = 0 are averaged
    wk = np.concatenate([kernel.minus[::-1], kernel.plus[1:]])
    wk[M] = 0.5 * (kernel.minus[0] + kernel.plus[0])
    q = np.full(2 * M + 1, h)
    q[0] = q[-1] = 0.5 * h
    wq = wk * q
    # rho_ext covers r in [-M h, R + M h] with rho = 0 below zero, lam/v above R
    ext = np.concatenate([np.zeros(M), rho, np.full(M, profile.rho_far)])
    # sum_m wq[m] rho(r_j - y_m), y_m = (m - M) h  ->  convolution
    gain = fftconvolve(ext, wq, mode="valid")
    loss = wq.sum() * rho
    local = params.lam - rho * (params.v + params.mu * np.exp(-profile.cumulative))
    return local + gain[:n] - loss


def best_price_pdf(profile: GridProfile) -> np.ndarray:
    """P(x) = rho(x) exp(-int_0^x rho) on the grid nodes."""
    return profile.values * np.exp(-profile.cumulative)


def spread_from_profile(profile: GridProfile) -> float:
    """int x P(x) dx."""
    profile.check_domain()
    P = best_price_pdf(profile)
    return _trap(profile.r * P, profile.grid_step)


def impact_from_profile(profile: GridProfile) -> float:
    """(1/2) int rho(z) int_{y>z} (y - z) P(y) dy dz with reverse cumulative sums."""
    profile.check_domain()
    h = profile.grid_step
    r = profile.r
    P = best_price_pdf(profile)

    def tail(f):
        seg = 0.5 * h * (f[1:] + f[:-1])
        out = np.zeros_like(f)
        out[:-1] = np.cumsum(seg[::-1])[::-1]
        return out

    inner = tail(r * P) - r * tail(P)
    return 0.5 * _trap(profile.values * inner, h)


def solve_boltzmann_steady(params: ModelParams, grid_step: float, domain_max: float,
                           tol: float = 1e-6, max_iter: int = 200_000, eta: float | None = None,
                           initial: GridProfile | None = None, y_max: float | None = None,
                           check_pre: bool = True) -> GridProfile:
    """Relax rho <- rho + eta RHS(rho) / lam until max |RHS| < tol * lam.

    The node at r = 0 is pinned to lam/(v + mu) after every update and the
    profile is clipped at zero.  ``eta`` starts at 0.4 lam/(v + mu) (below the
    explicit-update stability limit) and is halved whenever the residual grows.
    """
    tp = TheoryProfile.of(params)
    eps = params.epsilon
    if check_pre:
        if grid_step > eps / 10 * (1 + 1e-12):
            raise ValueError("grid_step must be <= epsilon / 10")
        if domain_max < 20.0 * math.sqrt(tp.D_theory / params.v) * (1 - 1e-12):
            raise ValueError("domain_max must be >= 20 diffusion lengths")
    prof = initial if initial is not None else profile_from_params(params, grid_step, domain_max)
    rho = prof.values.copy()
    rho[0] = tp.rho0
    if eta is None:
        eta = 0.4 * params.lam / (params.v + params.mu)
    history = []
    last = math.inf
    for it in range(1, max_iter + 1):
        cur = GridProfile(grid_step, rho, rho_far=tp.rho_inf)
        rhs = boltzmann_rhs(cur, params, y_max=y_max)
        rhs[0] = 0.0
        res = float(np.max(np.abs(rhs))) / params.lam
        history.append(res)
        if res < tol:
            return GridProfile(grid_step, rho, rho_far=tp.rho_inf, iterations=it,
                               residual_history=tuple(history))
        if res > last:
            eta *= 0.5
        last = res
        rho = np.maximum(rho + eta * rhs / params.lam, 0.0)
        rho[0] = tp.rho0
    final = GridProfile(grid_step, rho, rho_far=tp.rho_inf, iterations=max_iter,
                        residual_history=tuple(history))
    raise NoConvergence(max_iter, history[-1], final, history)


# --------------------------------------------------------------------------
# dumps

METRICS_COLUMNS = ("lambda", "v", "mu", "delta", "spread_price", "impact_price", "D_price2_per_time")


def write_theory_metrics(path, params_list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for p in params_list:
            m = theory_metrics(p)
            w.writerow([f"{x:.17g}" for x in (p.lam, p.v, p.mu, p.delta, m.spread, m.impact, m.D)])
