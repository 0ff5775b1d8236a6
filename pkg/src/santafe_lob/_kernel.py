"""Compiled event loop: Fenwick-indexed book arrays and the Gillespie step.

State layout shared by every routine:

* ``ask``/``bid``: dense int64 order counts over absolute levels
  ``base .. base + W - 1`` (index ``level - base``).
* ``ta``/``tb``: 1-based Fenwick trees over those counts (length ``W + 1``).
* ``st``: int64 scalars, see the ``S_*`` offsets.

Every event consumes exactly two uniforms: one for the waiting time and one
for the channel and the location inside the channel.
"""

import math

import numpy as np
from numba import njit

S_BASE = 0
S_ASK = 1
S_BID = 2
S_NA = 3
S_NB = 4

ASK_LIMIT = 0
BID_LIMIT = 1
ASK_CANCEL = 2
BID_CANCEL = 3
BUY_MARKET = 4
SELL_MARKET = 5

DONE = 0
NEED_RANDOM = 1
BUFFER_FULL = 2
NEED_REGROW = 3
SIDE_EMPTY = -1

# cnt offsets
C_UPOS = 0
C_NSNAP = 1
C_NMK = 2
C_NEV = 3
C_EVENTS = 4
C_SNAPK = 5
C_GAP_OK = 6
C_GAP_SKIP = 7
C_NLEN = 8

_jit = njit(cache=True, nogil=True)


@_jit
def fw_build(counts):
    n = counts.shape[0]
    tree = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        j = i + 1
        tree[j] += counts[i]
        k = j + (j & -j)
        if k <= n:
            tree[k] += tree[j]
    return tree


@_jit
def fw_add(tree, i, d):
    n = tree.shape[0] - 1
    j = i + 1
    while j <= n:
        tree[j] += d
        j += j & -j


@_jit
def fw_prefix(tree, i):
    """Sum of counts[0..i] inclusive (0 for i < 0)."""
    n = tree.shape[0] - 1
    if i >= n:
        i = n - 1
    s = 0
    j = i + 1
    while j > 0:
        s += tree[j]
        j -= j & -j
    return s


@_jit
def fw_find(tree, k):
    """Smallest index i with prefix(i) > k, for 0 <= k < total."""
    n = tree.shape[0] - 1
    pos = 0
    step = 1
    while step * 2 <= n:
        step *= 2
    while step > 0:
        nxt = pos + step
        if nxt <= n and tree[nxt] <= k:
            pos = nxt
            k -= tree[nxt]
        step //= 2
    return pos


@_jit
def window_counts(ta, tb, st, cutoff):
    """Orders inside the ask window (B, B+L] and the bid window [A-L, A)."""
    base = st[S_BASE]
    na = fw_prefix(ta, st[S_BID] + cutoff - base)
    nb = st[S_NB] - fw_prefix(tb, st[S_ASK] - cutoff - 1 - base)
    return na, nb


@_jit
def total_rate(ta, tb, st, lam_delta, v, mu, cutoff):
    na, nb = window_counts(ta, tb, st, cutoff)
    return 2.0 * lam_delta * cutoff + 2.0 * mu + v * (na + nb)


@_jit
def sample_channel(ta, tb, st, lam_delta, v, mu, cutoff, u, mirror):
    """Map one uniform onto (kind, absolute level).

    Channels are laid out as [sub X, sub Y, cancel X, cancel Y, market X,
    market Y] with X = ask (X = bid when ``mirror``).  Inside a channel the
    location is counted outward from the relevant best, so the mirrored
    book driven by the same stream follows the negated trajectory.
    """
    na, nb = window_counts(ta, tb, st, cutoff)
    return pick_channel(ta, tb, st, lam_delta, v, mu, cutoff, u, mirror, na, nb)


@_jit
def pick_channel(ta, tb, st, lam_delta, v, mu, cutoff, u, mirror, na, nb):
    """:func:`sample_channel` with the window order counts supplied."""
    base = st[S_BASE]
    a = st[S_ASK]
    b = st[S_BID]
    c_sub = lam_delta * cutoff
    total = 2.0 * c_sub + 2.0 * mu + v * (na + nb)
    x = u * total
    for rank in range(2):
        ask_side = (rank == 0) != mirror
        if x < c_sub:
            q = 1 + int(x / lam_delta)
            if q > cutoff:
                q = cutoff
            if ask_side:
                return ASK_LIMIT, b + q
            return BID_LIMIT, a - q
        x -= c_sub
    for rank in range(2):
        ask_side = (rank == 0) != mirror
        n = na if ask_side else nb
        c = v * n
        if x < c:
            k = int(x / v)
            if k >= n:
                k = n - 1
            if ask_side:
                return ASK_CANCEL, base + fw_find(ta, k)
            return BID_CANCEL, base + fw_find(tb, st[S_NB] - 1 - k)
        x -= c
    first_ask = not mirror
    if mu > 0.0:
        if x < mu:
            if first_ask:
                return BUY_MARKET, a
            return SELL_MARKET, b
        if first_ask:
            return SELL_MARKET, b
        return BUY_MARKET, a
    # rounding fell past the last non-empty channel
    if nb > 0 and (first_ask or na == 0):
        return BID_CANCEL, base + fw_find(tb, st[S_NB] - nb)
    if na > 0:
        return ASK_CANCEL, base + fw_find(ta, na - 1)
    if first_ask:
        return BID_LIMIT, a - cutoff
    return ASK_LIMIT, b + cutoff


@_jit
def apply_event(ask, ta, bid, tb, st, kind, level):
    """Mutate the book; returns 0, or SIDE_EMPTY / -2 (empty queue) untouched."""
    i = level - st[S_BASE]
    if kind == ASK_LIMIT:
        ask[i] += 1
        fw_add(ta, i, 1)
        st[S_NA] += 1
        if level < st[S_ASK]:
            st[S_ASK] = level
    elif kind == BID_LIMIT:
        bid[i] += 1
        fw_add(tb, i, 1)
        st[S_NB] += 1
        if level > st[S_BID]:
            st[S_BID] = level
    elif kind == ASK_CANCEL or kind == BUY_MARKET:
        if ask[i] <= 0:
            return -2
        if st[S_NA] <= 1:
            return SIDE_EMPTY
        ask[i] -= 1
        fw_add(ta, i, -1)
        st[S_NA] -= 1
        if ask[i] == 0 and level == st[S_ASK]:
            st[S_ASK] = st[S_BASE] + fw_find(ta, 0)
    else:
        if bid[i] <= 0:
            return -2
        if st[S_NB] <= 1:
            return SIDE_EMPTY
        bid[i] -= 1
        fw_add(tb, i, -1)
        st[S_NB] -= 1
        if bid[i] == 0 and level == st[S_BID]:
            st[S_BID] = st[S_BASE] + fw_find(tb, st[S_NB] - 1)
    return 0


@_jit
def needs_regrow(st, cutoff, width):
    base = st[S_BASE]
    return st[S_BID] + cutoff + 1 - base >= width or st[S_ASK] - cutoff - 1 - base < 0


@_jit
def _snapshot(ask, bid, st, cutoff, hist_a, hist_b, gap_sum, probe_lo, probe_hi, probe_hist, cnt):
    base = st[S_BASE]
    a = st[S_ASK]
    b = st[S_BID]
    width = ask.shape[0]
    depth = hist_a.shape[0]
    for r in range(depth):
        ia = b + 1 + r - base
        if ia < width:
            hist_a[r] += ask[ia]
        ib = a - 1 - r - base
        if ib >= 0:
            hist_b[r] += bid[ib]
    kmax = gap_sum.shape[0] - 1
    if kmax >= 0:
        ok = True
        prev = a
        j = a - base + 1
        lim = b + cutoff - base
        tmp0 = a - b
        found = 0
        if a - base > lim:
            ok = False
            found = kmax
        # first pass only verifies K+1 occupied levels inside the window
        while found < kmax:
            if j > lim or j >= width:
                ok = False
                break
            if ask[j] > 0:
                found += 1
            j += 1
        if ok:
            gap_sum[0] += tmp0
            j = a - base + 1
            k = 1
            while k <= kmax:
                if ask[j] > 0:
                    gap_sum[k] += (base + j) - prev
                    prev = base + j
                    k += 1
                j += 1
            cnt[C_GAP_OK] += 1
        else:
            cnt[C_GAP_SKIP] += 1
    nmax = probe_hist.shape[0] - 1
    for r in range(probe_lo, probe_hi):
        ia = b + r - base
        if ia < width:
            c = ask[ia]
            if c > nmax:
                c = nmax
            probe_hist[c] += 1


@_jit
def advance(ask, ta, bid, tb, st, clock, lam_delta, v, mu, cutoff, mirror,
            uni, t_stop, record,
            snap_dt, snap_t0, snap_t, snap_a, snap_b,
            hist_a, hist_b, gap_sum, probe_lo, probe_hi, probe_hist,
            mk_t, mk_sign, mk_before, mk_after,
            ev_t, ev_i,
            cnt):
    """Run the exact event loop until ``t_stop`` or a buffer needs service.

    ``clock`` is a length-1 float array.  Buffers are filled from the counts
    stored in ``cnt`` and the routine returns one of DONE, NEED_RANDOM,
    BUFFER_FULL, NEED_REGROW or SIDE_EMPTY.  Returning never consumes a
    uniform that was not applied, so resumption is deterministic.
    """
    width = ask.shape[0]
    n_uni = uni.shape[0]
    snap_cap = snap_t.shape[0]
    mk_cap = mk_t.shape[0]
    ev_cap = ev_t.shape[0]
    log_events = ev_cap > 0
    if needs_regrow(st, cutoff, width):
        return NEED_REGROW
    while True:
        if cnt[C_UPOS] + 2 > n_uni:
            return NEED_RANDOM
        if record and (cnt[C_NMK] >= mk_cap or (log_events and cnt[C_NEV] >= ev_cap)):
            return BUFFER_FULL
        na, nb = window_counts(ta, tb, st, cutoff)
        total = 2.0 * lam_delta * cutoff + 2.0 * mu + v * (na + nb)
        u1 = uni[cnt[C_UPOS]]
        t_new = clock[0] - math.log1p(-u1) / total
        if record and snap_dt > 0.0:
            while True:
                ts = snap_t0 + cnt[C_SNAPK] * snap_dt
                if ts > t_new or ts > t_stop:
                    break
                if cnt[C_NSNAP] >= snap_cap:
                    return BUFFER_FULL
                n = cnt[C_NSNAP]
                snap_t[n] = ts
                snap_a[n] = st[S_ASK]
                snap_b[n] = st[S_BID]
                _snapshot(ask, bid, st, cutoff, hist_a, hist_b, gap_sum,
                          probe_lo, probe_hi, probe_hist, cnt)
                cnt[C_NSNAP] += 1
                cnt[C_SNAPK] += 1
        if t_new > t_stop:
            clock[0] = t_stop
            return DONE
        u2 = uni[cnt[C_UPOS] + 1]
        kind, level = pick_channel(ta, tb, st, lam_delta, v, mu, cutoff, u2, mirror, na, nb)
        a0 = st[S_ASK]
        b0 = st[S_BID]
        rel = level - b0 if (kind == ASK_LIMIT or kind == ASK_CANCEL or kind == BUY_MARKET) else level - a0
        code = apply_event(ask, ta, bid, tb, st, kind, level)
        if code != 0:
            return SIDE_EMPTY
        cnt[C_UPOS] += 2
        cnt[C_EVENTS] += 1
        clock[0] = t_new
        if record:
            if kind == BUY_MARKET or kind == SELL_MARKET:
                n = cnt[C_NMK]
                mk_t[n] = t_new
                mk_sign[n] = 1 if kind == BUY_MARKET else -1
                mk_before[n] = a0 + b0
                mk_after[n] = st[S_ASK] + st[S_BID]
                cnt[C_NMK] += 1
            if log_events:
                n = cnt[C_NEV]
                ev_t[n] = t_new
                ev_i[n, 0] = kind
                ev_i[n, 1] = level
                ev_i[n, 2] = rel
                ev_i[n, 3] = a0 + b0
                ev_i[n, 4] = st[S_ASK] + st[S_BID]
                ev_i[n, 5] = a0
                ev_i[n, 6] = st[S_ASK]
                ev_i[n, 7] = b0
                ev_i[n, 8] = st[S_BID]
                cnt[C_NEV] += 1
        if needs_regrow(st, cutoff, width):
            return NEED_REGROW
