"""Order-book microstate and the single-event dynamics.

Prices are integer tick levels; the midprice is carried as the doubled
integer ``best_ask + best_bid``.  The per-event routines here call the same
compiled code as the batch driver in :mod:`santafe_lob.simulate`, so a
Python-level :func:`step` loop reproduces a compiled run exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import _kernel as K
from .params import ModelParams, SeedSpec, make_rng


class EventKind(IntEnum):
    AskLimit = K.ASK_LIMIT
    BidLimit = K.BID_LIMIT
    AskCancel = K.ASK_CANCEL
    BidCancel = K.BID_CANCEL
    BuyMarket = K.BUY_MARKET
    SellMarket = K.SELL_MARKET

    @property
    def is_ask(self) -> bool:
        return self in (EventKind.AskLimit, EventKind.AskCancel, EventKind.BuyMarket)

    @property
    def is_market(self) -> bool:
        return self in (EventKind.BuyMarket, EventKind.SellMarket)


class BookError(RuntimeError):
    pass


class EmptySide(BookError):
    """A best price is undefined."""


class WindowViolation(BookError):
    """A submission outside the cutoff window."""


class EmptyQueue(BookError):
    """Removal from a level that holds no order."""


class SideWouldEmpty(BookError):
    """The removal would leave one side of the book without any order."""


class SideEmptied(BookError):
    def __init__(self, time: float, events: int):
        super().__init__(f"one side of the book emptied at t={time:.6g} after {events} events")
        self.time = time
        self.events = events


@dataclass(frozen=True)
class EventRecord:
    time: float
    kind: EventKind
    level: int
    rel_level: int
    doubled_mid_before: int
    doubled_mid_after: int
    best_ask_before: int
    best_ask_after: int
    best_bid_before: int
    best_bid_after: int

    @property
    def doubled_dm(self) -> int:
        return self.doubled_mid_after - self.doubled_mid_before


@dataclass(frozen=True)
class RelativeView:
    """Counts measured from the opposite best.

    ``ask_rel[i]`` is the ask count at relative level ``i`` (``i - B``) and
    ``bid_rel[i]`` the bid count at relative level ``-i`` (``i_b = -i``), for
    ``i = 0 .. depth``; index 0 is always empty.
    """

    ask_rel: np.ndarray
    bid_rel: np.ndarray
    rel_best_ask: int
    rel_best_bid: int


@dataclass(frozen=True)
class Snapshot:
    time: float
    best_ask: int
    best_bid: int
    ask_rel: np.ndarray
    bid_rel: np.ndarray


def _next_pow2(n: int) -> int:
    return 1 << max(int(n) - 1, 1).bit_length()


class BookState:
    """Mutable book: dense per-side counts plus Fenwick indices."""

    def __init__(self, ask: np.ndarray, bid: np.ndarray, base: int, clock: float = 0.0):
        ask = np.ascontiguousarray(ask, dtype=np.int64)
        bid = np.ascontiguousarray(bid, dtype=np.int64)
        if ask.shape != bid.shape:
            raise ValueError("ask and bid arrays must share one level axis")
        if (ask < 0).any() or (bid < 0).any():
            raise ValueError("counts must be non-negative")
        if not ask.any() or not bid.any():
            raise EmptySide("both sides need at least one order")
        self.ask = ask
        self.bid = bid
        self.ta = K.fw_build(ask)
        self.tb = K.fw_build(bid)
        best_ask = base + int(np.flatnonzero(ask)[0])
        best_bid = base + int(np.flatnonzero(bid)[-1])
        if best_ask <= best_bid:
            raise ValueError("crossed book")
        self.st = np.array([base, best_ask, best_bid, ask.sum(), bid.sum()], dtype=np.int64)
        self.clock = np.array([clock], dtype=np.float64)

    @classmethod
    def from_levels(cls, asks: dict, bids: dict, width: int | None = None,
                    cutoff: int = 1, clock: float = 0.0) -> "BookState":
        """Build a book from ``{level: count}`` maps (handy for hand-made cases)."""
        levels = [*asks, *bids]
        lo, hi = min(levels), max(levels)
        span = hi - lo + 1 + 2 * cutoff + 8
        width = width or _next_pow2(2 * span)
        base = (lo + hi) // 2 - width // 2
        ask = np.zeros(width, dtype=np.int64)
        bid = np.zeros(width, dtype=np.int64)
        for lvl, c in asks.items():
            ask[lvl - base] += c
        for lvl, c in bids.items():
            bid[lvl - base] += c
        return cls(ask, bid, base, clock)

    # -- scalar views -------------------------------------------------
    @property
    def base(self) -> int:
        return int(self.st[K.S_BASE])

    @property
    def width(self) -> int:
        return self.ask.shape[0]

    @property
    def best_ask_level(self) -> int:
        return int(self.st[K.S_ASK])

    @property
    def best_bid_level(self) -> int:
        return int(self.st[K.S_BID])

    @property
    def doubled_mid(self) -> int:
        return self.best_ask_level + self.best_bid_level

    @property
    def spread_ticks(self) -> int:
        return self.best_ask_level - self.best_bid_level

    @property
    def time(self) -> float:
        return float(self.clock[0])

    @property
    def total_ask(self) -> int:
        return int(self.st[K.S_NA])

    @property
    def total_bid(self) -> int:
        return int(self.st[K.S_NB])

    def ask_count(self, level: int) -> int:
        i = level - self.base
        return int(self.ask[i]) if 0 <= i < self.width else 0

    def bid_count(self, level: int) -> int:
        i = level - self.base
        return int(self.bid[i]) if 0 <= i < self.width else 0

    def window_orders(self, cutoff: int) -> tuple[int, int]:
        na, nb = K.window_counts(self.ta, self.tb, self.st, cutoff)
        return int(na), int(nb)

    def window_orders_scan(self, cutoff: int) -> tuple[int, int]:
        """Same as :meth:`window_orders` by a direct scan (no Fenwick)."""
        b, a, base = self.best_bid_level, self.best_ask_level, self.base
        lo_a, hi_a = max(b + 1 - base, 0), min(b + cutoff - base, self.width - 1)
        lo_b, hi_b = max(a - cutoff - base, 0), min(a - 1 - base, self.width - 1)
        return (int(self.ask[lo_a:hi_a + 1].sum()), int(self.bid[lo_b:hi_b + 1].sum()))

    def scan_bests(self) -> tuple[int, int]:
        return (self.base + int(np.flatnonzero(self.ask)[0]),
                self.base + int(np.flatnonzero(self.bid)[-1]))

    def copy(self) -> "BookState":
        new = object.__new__(BookState)
        new.ask = self.ask.copy()
        new.bid = self.bid.copy()
        new.ta = self.ta.copy()
        new.tb = self.tb.copy()
        new.st = self.st.copy()
        new.clock = self.clock.copy()
        return new

    def mirrored(self) -> "BookState":
        """Swap sides and negate the level axis."""
        width = self.width
        new_base = -(self.base + width - 1)
        return BookState(self.bid[::-1].copy(), self.ask[::-1].copy(), new_base, self.time)

    def relative_view(self, depth: int) -> RelativeView:
        b, a = self.best_bid_level, self.best_ask_level
        ask_rel = np.array([self.ask_count(b + i) for i in range(depth + 1)], dtype=np.int64)
        bid_rel = np.array([self.bid_count(a - i) for i in range(depth + 1)], dtype=np.int64)
        ask_rel[0] = 0
        bid_rel[0] = 0
        return RelativeView(ask_rel, bid_rel, a - b, b - a)

    def snapshot(self, depth: int) -> Snapshot:
        view = self.relative_view(depth)
        return Snapshot(self.time, self.best_ask_level, self.best_bid_level,
                        view.ask_rel[1:], view.bid_rel[1:])

    def regrow(self, cutoff: int) -> None:
        """Re-centre (and if needed enlarge) the level arrays around the book."""
        base = self.base
        occ_a = np.flatnonzero(self.ask)
        occ_b = np.flatnonzero(self.bid)
        margin = max(cutoff // 4, 16)
        lo = min(base + int(occ_b[0]), self.best_ask_level - cutoff - margin)
        hi = max(base + int(occ_a[-1]), self.best_bid_level + cutoff + margin)
        span = hi - lo + 1
        width = max(self.width, _next_pow2(span + 2 * margin))
        new_base = lo - (width - span) // 2
        ask = np.zeros(width, dtype=np.int64)
        bid = np.zeros(width, dtype=np.int64)
        src = slice(int(occ_b[0]), int(occ_a[-1]) + 1)
        off = base - new_base
        ask[src.start + off:src.stop + off] = self.ask[src]
        bid[src.start + off:src.stop + off] = self.bid[src]
        self.ask, self.bid = ask, bid
        self.ta = K.fw_build(ask)
        self.tb = K.fw_build(bid)
        self.st[K.S_BASE] = new_base

    def check_invariants(self) -> None:
        a, b = self.scan_bests()
        assert a == self.best_ask_level and b == self.best_bid_level, "stale bests"
        assert self.best_ask_level > self.best_bid_level, "crossed book"
        assert self.total_ask == self.ask.sum() and self.total_bid == self.bid.sum()
        assert (self.ask >= 0).all() and (self.bid >= 0).all()
        np.testing.assert_array_equal(self.ta, K.fw_build(self.ask))
        np.testing.assert_array_equal(self.tb, K.fw_build(self.bid))


def init_book(params: ModelParams, seed: SeedSpec | np.random.Generator) -> BookState:
    """Poisson(n_st) occupancy over each window plus one order at each best.

    Asks fill levels 1..L and bids levels 0..-(L-1), so the initial spread is
    one tick with best bid 0.
    """
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    L = int(params.cutoff)
    margin = max(L // 4, 16)
    width = _next_pow2(2 * L + 4 * margin)
    base = -(width // 2)
    ask = np.zeros(width, dtype=np.int64)
    bid = np.zeros(width, dtype=np.int64)
    draws = rng.poisson(params.n_st, size=2 * L)
    ask[1 - base:L + 1 - base] = draws[:L]
    bid[-(L - 1) - base:1 - base] = draws[L:][::-1]
    ask[1 - base] += 1
    bid[0 - base] += 1
    return BookState(ask, bid, base)


def total_intensity(state: BookState, params: ModelParams) -> float:
    """2 lam delta L + v (orders in both windows) + 2 mu."""
    if state.total_ask == 0 or state.total_bid == 0:
        raise EmptySide("best price undefined")
    return float(K.total_rate(state.ta, state.tb, state.st, params.submission_rate,
                              params.v, params.mu, params.cutoff))


@dataclass(frozen=True)
class EventDescriptor:
    kind: EventKind
    level: int

    def rel_level(self, state: BookState) -> int:
        ref = state.best_bid_level if self.kind.is_ask else state.best_ask_level
        return self.level - ref


def sample_event(state: BookState, params: ModelParams, rng: np.random.Generator,
                 mirror: bool = False) -> tuple[float, EventDescriptor]:
    """Exponential waiting time plus a rate-proportional channel pick."""
    rate = total_intensity(state, params)
    u1, u2 = rng.random(2)
    wait = -np.log1p(-u1) / rate
    kind, level = K.sample_channel(state.ta, state.tb, state.st, params.submission_rate,
                                   params.v, params.mu, params.cutoff, u2, mirror)
    return float(wait), EventDescriptor(EventKind(kind), int(level))


def _ensure_room(state: BookState, level: int, cutoff: int) -> None:
    i = level - state.base
    if not 0 <= i < state.width or K.needs_regrow(state.st, cutoff, state.width):
        state.regrow(max(cutoff, abs(level - state.best_bid_level), abs(level - state.best_ask_level)))


def _apply(state: BookState, kind: EventKind, level: int, cutoff: int) -> EventRecord:
    a0, b0 = state.best_ask_level, state.best_bid_level
    rel = level - (b0 if kind.is_ask else a0)
    _ensure_room(state, level, cutoff)
    code = K.apply_event(state.ask, state.ta, state.bid, state.tb, state.st, int(kind), int(level))
    if code == -2:
        raise EmptyQueue(f"no order at level {level}")
    if code == K.SIDE_EMPTY:
        raise SideWouldEmpty(f"removing level {level} empties the side")
    return EventRecord(state.time, kind, int(level), int(rel), a0 + b0, state.doubled_mid,
                       a0, state.best_ask_level, b0, state.best_bid_level)


def apply_limit_order(state: BookState, side: str, q: int, cutoff: int) -> EventRecord:
    """Submit one limit order at relative level ``q`` from the opposite best.

    ``q`` runs over 1..L for asks and -L..-1 for bids.
    """
    if side == "ask":
        if not 1 <= q <= cutoff:
            raise WindowViolation(f"ask submission at q={q} outside [1, {cutoff}]")
        return _apply(state, EventKind.AskLimit, state.best_bid_level + q, cutoff)
    if side == "bid":
        if not -cutoff <= q <= -1:
            raise WindowViolation(f"bid submission at q={q} outside [-{cutoff}, -1]")
        return _apply(state, EventKind.BidLimit, state.best_ask_level + q, cutoff)
    raise ValueError(f"unknown side {side!r}")


def apply_removal(state: BookState, side: str, q: int, is_market: bool = False,
                  cutoff: int | None = None) -> EventRecord:
    """Cancel (or execute, when ``is_market``) one order at relative level ``q``."""
    if side == "ask":
        level = state.best_bid_level + q
        kind = EventKind.BuyMarket if is_market else EventKind.AskCancel
        best = state.best_ask_level
        count = state.ask_count(level)
    elif side == "bid":
        level = state.best_ask_level + q
        kind = EventKind.SellMarket if is_market else EventKind.BidCancel
        best = state.best_bid_level
        count = state.bid_count(level)
    else:
        raise ValueError(f"unknown side {side!r}")
    if is_market and level != best:
        raise ValueError("market orders only hit the best level")
    if count < 1:
        raise EmptyQueue(f"no {side} order at relative level {q}")
    return _apply(state, kind, level, cutoff if cutoff is not None else 1)


def step(state: BookState, params: ModelParams, rng: np.random.Generator,
         mirror: bool = False) -> EventRecord:
    """Advance the clock by one exact waiting time and apply the sampled event."""
    wait, ev = sample_event(state, params, rng, mirror)
    state.clock[0] += wait
    try:
        return _apply(state, ev.kind, ev.level, params.cutoff)
    except SideWouldEmpty as exc:
        raise SideEmptied(state.time, -1) from exc
