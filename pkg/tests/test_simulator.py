import math

import numpy as np
import pytest
from scipy import stats

from oracles import DictBook, poisson_pmf
from santafe_lob import _kernel as K
from santafe_lob.book import BookState, EventKind, init_book
from santafe_lob.params import ModelParams, SeedSpec, make_rng
from santafe_lob.simulate import EVENT_LOG_HEADER, Probe, python_trajectory, run, run_segment

TINY = ModelParams(lam=1000.0, v=1.0, mu=2.0, delta=1e-3, cutoff=50)


def kernel_events(p, seed, T, mirror=False):
    d = run_segment(p, seed, 0.0, T, snapshot_dt=1.0, keep_events=True, mirror=mirror)
    return d.events_time, d.events_log


def test_kernel_matches_python_step_path():
    t, ev = kernel_events(TINY, SeedSpec(3), 5.0)
    n = min(ev.shape[0], 1500)
    _, recs = python_trajectory(TINY, SeedSpec(3), n)
    for i, rec in enumerate(recs):
        assert int(rec.kind) == ev[i, 0] and rec.level == ev[i, 1] and rec.rel_level == ev[i, 2]
        assert rec.doubled_mid_before == ev[i, 3] and rec.doubled_mid_after == ev[i, 4]
        assert math.isclose(rec.time, t[i], rel_tol=1e-12)


def test_kernel_matches_dict_reference():
    seed = SeedSpec(8)
    t, ev = kernel_events(TINY, seed, 5.0)
    rng = make_rng(seed)
    b = init_book(TINY, rng)
    lv = range(b.base, b.base + b.width)
    ref = DictBook({l: int(c) for l, c in zip(lv, b.ask)}, {l: int(c) for l, c in zip(lv, b.bid)})
    n = min(ev.shape[0], 3000)
    u = rng.random(2 * n)
    for i in range(n):
        ti, kind, level, m0, m1 = ref.step(TINY.submission_rate, TINY.v, TINY.mu, TINY.cutoff,
                                           u[2 * i], u[2 * i + 1])
        assert (kind, level, m0, m1) == tuple(ev[i, [0, 1, 3, 4]])
        assert math.isclose(ti, t[i], rel_tol=1e-11)


def test_mirror_run_negates_midprice_path():
    t, ev = kernel_events(TINY, SeedSpec(12), 20.0)
    tm, evm = kernel_events(TINY, SeedSpec(12), 20.0, mirror=True)
    assert np.array_equal(t, tm)
    assert np.array_equal(ev[:, 3], -evm[:, 3]) and np.array_equal(ev[:, 4], -evm[:, 4])
    swap = np.array([1, 0, 3, 2, 5, 4])
    assert np.array_equal(swap[ev[:, 0]], evm[:, 0])
    assert np.array_equal(ev[:, 1], -evm[:, 1])


def test_seeded_runs_are_identical():
    a = run(TINY, SeedSpec(5), 5.0, 50.0)
    b = run(TINY, SeedSpec(5), 5.0, 50.0)
    assert a.csv_row() == b.csv_row() and a.to_json() == b.to_json()
    c = run(TINY, SeedSpec(5, 1), 5.0, 50.0)
    assert c.csv_row() != a.csv_row()


def test_measure_time_zero_is_empty():
    rep = run(TINY, SeedSpec(1), 1.0, 0.0)
    assert rep.sample_counts["n_snapshots"] == 0 and math.isnan(rep.spread_mean)


def test_event_log_file(tmp_path):
    path = tmp_path / "events.csv"
    d = run_segment(TINY, SeedSpec(2), 1.0, 2.0, event_log=str(path), keep_events=True)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(EVENT_LOG_HEADER)
    assert len(lines) - 1 == d.events == d.events_log.shape[0]
    first = lines[1].split(",")
    assert float(first[0]) == d.events_time[0]
    assert first[1] == EventKind(d.events_log[0, 0]).name
    assert int(first[4]) == d.events_log[0, 3] and int(first[5]) == d.events_log[0, 4]


def test_zero_rate_market_channel_never_fires():
    d = run_segment(TINY.with_mu(0.0), SeedSpec(6), 1.0, 20.0, keep_events=True)
    assert d.events > 3000
    assert not np.isin(d.events_log[:, 0], [K.BUY_MARKET, K.SELL_MARKET]).any()
    assert d.mk_t.shape[0] == 0


def test_dominant_market_rate():
    p = TINY.with_mu(1e9)
    b = BookState.from_levels({1: 1, 2: 1}, {0: 1})
    rng = make_rng(SeedSpec(1))
    kinds = [K.sample_channel(b.ta, b.tb, b.st, p.submission_rate, p.v, p.mu, p.cutoff, u, False)[0]
             for u in rng.random(20_000)]
    assert np.mean(np.isin(kinds, [K.BUY_MARKET, K.SELL_MARKET])) > 0.999


def test_ask_submissions_uniform_over_window():
    p = TINY.with_mu(0.0)
    b = BookState.from_levels({5: 2, 9: 1}, {0: 1, -3: 1})
    c_sub = p.submission_rate * p.cutoff
    total = K.total_rate(b.ta, b.tb, b.st, p.submission_rate, p.v, p.mu, p.cutoff)
    u = make_rng(SeedSpec(21)).random(1_000_000) * (c_sub / total)
    q = np.array([K.sample_channel(b.ta, b.tb, b.st, p.submission_rate, p.v, p.mu, p.cutoff, x, False)[1]
                  for x in u]) - b.best_bid_level
    counts = np.bincount(q, minlength=p.cutoff + 1)
    assert counts[0] == 0 and counts.sum() == u.shape[0]
    assert stats.chisquare(counts[1:]).pvalue > 0.001


def test_cancellation_frequencies_on_frozen_book():
    p = TINY
    b = BookState.from_levels({1: 1, 3: 2, 6: 3}, {0: 1})
    na, nb = b.window_orders(p.cutoff)
    total = K.total_rate(b.ta, b.tb, b.st, p.submission_rate, p.v, p.mu, p.cutoff)
    lo = 2 * p.submission_rate * p.cutoff / total
    u = lo + make_rng(SeedSpec(22)).random(60_000) * (p.v * na / total)
    lv = np.array([K.sample_channel(b.ta, b.tb, b.st, p.submission_rate, p.v, p.mu, p.cutoff, x, False)
                   for x in u])
    assert set(lv[:, 0]) == {K.ASK_CANCEL}
    obs = np.array([(lv[:, 1] == L).sum() for L in (1, 3, 6)])
    assert stats.chisquare(obs, u.shape[0] * np.array([1, 2, 3]) / 6).pvalue > 0.001


def test_waiting_times_exponential():
    from santafe_lob.book import sample_event, total_intensity

    p = TINY
    b = BookState.from_levels({1: 1, 3: 2}, {0: 1})
    rate = total_intensity(b, p)
    rng = make_rng(SeedSpec(23))
    waits = np.array([sample_event(b, p, rng)[0] for _ in range(50_000)])
    assert stats.kstest(waits * rate, "expon").pvalue > 0.001


def test_birth_death_far_level_small():
    p = ModelParams(1000.0, 1.0, 0.0, 1e-3, 200)
    d = run_segment(p, SeedSpec(31), 20.0, 5000.0, snapshot_dt=5.0, probe=Probe(50, 150, 12))
    obs = d.probe_hist
    n = obs.sum()
    assert n == 100 * d.n_snapshots
    pmf = poisson_pmf(np.arange(obs.shape[0]), p.n_st)
    pmf[-1] = 1 - pmf[:-1].sum()
    k = 7  # pool the tail so every expected count is large
    o = np.append(obs[:k], obs[k:].sum())
    e = np.append(pmf[:k], pmf[k:].sum()) * n
    assert stats.chisquare(o, e).pvalue > 0.01


def test_snapshot_arrays_match_book_views():
    p = TINY
    d = run_segment(p, SeedSpec(4), 5.0, 3.0, snapshot_dt=1.0, density_depth=30)
    assert d.n_snapshots == 4  # t0, t0 + 1, t0 + 2 and t1
    assert np.all(d.snap_ask > d.snap_bid)
    fs = d.final_state
    fs.check_invariants()
    view = fs.relative_view(30)
    assert view.ask_rel[0] == 0 and view.bid_rel[0] == 0


def test_warmup_default():
    from santafe_lob.simulate import default_warmup

    assert default_warmup(TINY.with_mu(0.0)) == 50.0
    assert default_warmup(TINY.with_mu(0.1)) == 500.0
    assert default_warmup(TINY.with_mu(10.0)) == 50.0
