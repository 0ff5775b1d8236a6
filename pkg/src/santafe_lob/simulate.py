"""Batch driver around the compiled event loop.

:func:`run_segment` returns the raw measurement arrays of one run;
:func:`run` feeds them to estimator sinks and returns the merged report.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernel as K
from .book import BookState, EventKind, SideEmptied, init_book
from .params import ModelParams, SeedSpec, make_rng, validate

logger = logging.getLogger(__name__)

RANDOM_CHUNK = 1 << 16
EVENT_LOG_HEADER = ("time", "kind", "level", "rel_level", "2m_before", "2m_after")


def default_warmup(params: ModelParams) -> float:
    """max(50/v, 50/mu) time units (the second term only when mu > 0)."""
    w = 50.0 / params.v
    if params.mu > 0:
        w = max(w, 50.0 / params.mu)
    return w


@dataclass
class Probe:
    """Occupancy histogram of ask levels ``B + lo .. B + hi - 1`` at each snapshot."""

    lo: int
    hi: int
    max_count: int = 64


@dataclass
class RunData:
    """Everything one measurement window produced, in raw integer form."""

    params: ModelParams
    t0: float
    t1: float
    snapshot_dt: float
    snap_t: np.ndarray
    snap_ask: np.ndarray
    snap_bid: np.ndarray
    hist_ask: np.ndarray
    hist_bid: np.ndarray
    gap_sum: np.ndarray
    gap_ok: int
    gap_skip: int
    probe_hist: np.ndarray
    mk_t: np.ndarray
    mk_sign: np.ndarray
    mk_before: np.ndarray
    mk_after: np.ndarray
    events: int
    warmup_events: int
    events_log: np.ndarray | None = None
    events_time: np.ndarray | None = None
    final_state: BookState | None = field(default=None, repr=False)

    @property
    def measure_time(self) -> float:
        return self.t1 - self.t0

    @property
    def n_snapshots(self) -> int:
        return int(self.snap_t.shape[0])


class _Grow:
    """Append-only int/float buffer with amortised doubling."""

    def __init__(self, dtype, cap=1024, cols=None):
        shape = (cap,) if cols is None else (cap, cols)
        self.buf = np.zeros(shape, dtype=dtype)

    def grow(self):
        new = np.zeros((self.buf.shape[0] * 2,) + self.buf.shape[1:], dtype=self.buf.dtype)
        new[: self.buf.shape[0]] = self.buf
        self.buf = new


class _EventSink:
    def __init__(self, path, keep: bool):
        self.keep = keep
        self.parts_t: list[np.ndarray] = []
        self.parts_i: list[np.ndarray] = []
        self.fh = None
        if path is not None:
            self.fh = open(path, "w", newline="")
            self.writer = csv.writer(self.fh, lineterminator="\n")
            self.writer.writerow(EVENT_LOG_HEADER)

    def flush(self, t, ev):
        if self.keep:
            self.parts_t.append(t.copy())
            self.parts_i.append(ev.copy())
        if self.fh is not None:
            names = [k.name for k in EventKind]
            for ti, row in zip(t.tolist(), ev.tolist()):
                self.writer.writerow((repr(ti), names[row[0]], row[1], row[2], row[3], row[4]))

    def close(self):
        if self.fh is not None:
            self.fh.close()

    def arrays(self):
        if not self.keep:
            return None, None
        if not self.parts_t:
            return np.zeros((0, 9), dtype=np.int64), np.zeros(0)
        return np.concatenate(self.parts_i), np.concatenate(self.parts_t)


def run_segment(params: ModelParams, seed: SeedSpec, warmup_time: float | None,
                measure_time: float, *, snapshot_dt: float | None = None,
                density_depth: int | None = None, gap_k: int = 20,
                probe: Probe | None = None, mirror: bool = False,
                event_log=None, keep_events: bool = False,
                book: BookState | None = None, rng: np.random.Generator | None = None) -> RunData:
    """Simulate warm-up plus measurement and return the raw measurement arrays.

    ``mirror`` swaps the channel order and the initial sides so the run follows
    the reflected trajectory of the unmirrored run with the same seed.
    """
    validate(params)
    if measure_time < 0:
        raise ValueError("measure_time must be non-negative")
    if warmup_time is None:
        warmup_time = default_warmup(params)
    if rng is None:
        rng = make_rng(seed)
    if book is None:
        book = init_book(params, rng)
        if mirror:
            book = book.mirrored()
    cutoff = int(params.cutoff)
    if snapshot_dt is None:
        snapshot_dt = 1.0 / (params.v + params.mu)
    depth = cutoff if density_depth is None else int(density_depth)
    hist_a = np.zeros(depth, dtype=np.int64)
    hist_b = np.zeros(depth, dtype=np.int64)
    gap_sum = np.zeros(gap_k + 1, dtype=np.int64)
    if probe is None:
        probe_lo, probe_hi, probe_hist = 0, 0, np.zeros(1, dtype=np.int64)
    else:
        probe_lo, probe_hi = probe.lo, probe.hi
        probe_hist = np.zeros(probe.max_count + 1, dtype=np.int64)

    n_snap_est = int(measure_time / snapshot_dt) + 2 if snapshot_dt > 0 else 1
    snaps_t = _Grow(np.float64, max(n_snap_est, 16))
    snaps_a = _Grow(np.int64, max(n_snap_est, 16))
    snaps_b = _Grow(np.int64, max(n_snap_est, 16))
    mk_cap = int(2.2 * params.mu * measure_time) + 1024
    mk_t = _Grow(np.float64, mk_cap)
    mk_s = _Grow(np.int64, mk_cap)
    mk_b = _Grow(np.int64, mk_cap)
    mk_a = _Grow(np.int64, mk_cap)
    log_on = event_log is not None or keep_events
    ev_cap = 1 << 16 if log_on else 0
    ev_t = np.zeros(ev_cap)
    ev_i = np.zeros((ev_cap, 9), dtype=np.int64)
    sink = _EventSink(event_log, keep_events) if log_on else None

    cnt = np.zeros(K.C_NLEN, dtype=np.int64)
    uni = rng.random(RANDOM_CHUNK)
    lam_delta, v, mu = params.submission_rate, params.v, params.mu

    def drive(t_stop: float, record: bool):
        nonlocal uni
        while True:
            code = K.advance(book.ask, book.ta, book.bid, book.tb, book.st, book.clock,
                             lam_delta, v, mu, cutoff, mirror, uni, t_stop, record,
                             snapshot_dt if record else 0.0, warmup_time,
                             snaps_t.buf, snaps_a.buf, snaps_b.buf,
                             hist_a, hist_b, gap_sum, probe_lo, probe_hi, probe_hist,
                             mk_t.buf,
                             mk_s.buf, mk_b.buf, mk_a.buf,
                             ev_t if record else ev_t[:0], ev_i, cnt)
            if code == K.DONE:
                return
            if code == K.NEED_RANDOM:
                rest = uni[cnt[K.C_UPOS]:]
                uni = np.concatenate((rest, rng.random(RANDOM_CHUNK)))
                cnt[K.C_UPOS] = 0
            elif code == K.NEED_REGROW:
                book.regrow(cutoff)
            elif code == K.BUFFER_FULL:
                if cnt[K.C_NSNAP] >= snaps_t.buf.shape[0]:
                    for g in (snaps_t, snaps_a, snaps_b):
                        g.grow()
                if cnt[K.C_NMK] >= mk_t.buf.shape[0]:
                    for g in (mk_t, mk_s, mk_b, mk_a):
                        g.grow()
                if log_on and cnt[K.C_NEV] >= ev_cap:
                    sink.flush(ev_t[: cnt[K.C_NEV]], ev_i[: cnt[K.C_NEV]])
                    cnt[K.C_NEV] = 0
            elif code == K.SIDE_EMPTY:
                raise SideEmptied(book.time, int(cnt[K.C_EVENTS]))
            else:  # pragma: no cover - kernel contract
                raise RuntimeError(f"unexpected kernel status {code}")

    try:
        drive(warmup_time, False)
        warm_events = int(cnt[K.C_EVENTS])
        if measure_time > 0:
            drive(warmup_time + measure_time, True)
        if log_on and cnt[K.C_NEV]:
            sink.flush(ev_t[: cnt[K.C_NEV]], ev_i[: cnt[K.C_NEV]])
    finally:
        if sink is not None:
            sink.close()
    ev_log, ev_time = sink.arrays() if sink is not None else (None, None)
    ns, nm = int(cnt[K.C_NSNAP]), int(cnt[K.C_NMK])
    return RunData(
        params=params, t0=warmup_time, t1=warmup_time + measure_time, snapshot_dt=snapshot_dt,
        snap_t=snaps_t.buf[:ns].copy(), snap_ask=snaps_a.buf[:ns].copy(),
        snap_bid=snaps_b.buf[:ns].copy(), hist_ask=hist_a, hist_bid=hist_b,
        gap_sum=gap_sum, gap_ok=int(cnt[K.C_GAP_OK]), gap_skip=int(cnt[K.C_GAP_SKIP]),
        probe_hist=probe_hist,
        mk_t=mk_t.buf[:nm].copy(), mk_sign=mk_s.buf[:nm].copy(),
        mk_before=mk_b.buf[:nm].copy(), mk_after=mk_a.buf[:nm].copy(),
        events=int(cnt[K.C_EVENTS]) - warm_events, warmup_events=warm_events,
        events_log=ev_log, events_time=ev_time, final_state=book)


def run(params: ModelParams, seed: SeedSpec, warmup_time: float | None, measure_time: float,
        sinks=None, settings=None, *, mirror: bool = False, event_log=None):
    """Warm up, measure, stream the measurement into ``sinks`` and report.

    ``sinks`` defaults to the full estimator set built from ``settings``.
    """
    from .estimators import EstimatorSettings, MetricsReport, make_sinks

    settings = settings or EstimatorSettings()
    resolved = settings.resolve(params)
    if sinks is None:
        sinks = make_sinks(params, resolved)
    data = run_segment(params, seed, warmup_time, measure_time,
                       snapshot_dt=resolved.snapshot_dt,
                       density_depth=resolved.density_depth(params),
                       gap_k=resolved.gap_k, mirror=mirror, event_log=event_log)
    for s in sinks:
        s.update(data)
    return MetricsReport.from_sinks(params, sinks)


def events_per_time(params: ModelParams) -> float:
    """Rough steady-state event rate: submissions plus cancellations of ~n_st L orders each side."""
    return 4.0 * params.submission_rate * params.cutoff + 2.0 * params.mu


def python_trajectory(params: ModelParams, seed: SeedSpec, n_events: int, mirror: bool = False):
    """Event-by-event reference path using :func:`santafe_lob.book.step` (slow)."""
    from .book import step

    rng = make_rng(seed)
    book = init_book(params, rng)
    if mirror:
        book = book.mirrored()
    out = []
    for _ in range(n_events):
        out.append(step(book, params, rng, mirror))
    return book, out
