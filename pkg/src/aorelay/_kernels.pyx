# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: slot-by-slot simulation and one chain sweep.

Both loops mirror ``_pykernels`` line for line; the Python versions are the
reference and the tests check the two agree bit for bit.
"""
from libc.stdint cimport int8_t, int64_t

DEF OP_N = 0
DEF OP_R = 1
DEF OP_S = 2

DEF KIND_SP = 0
DEF KIND_RP = 1


cdef inline void _saturate(int64_t s, int64_t r, int64_t d,
                           int64_t cap_s, int64_t cap_r, int64_t cap_d,
                           int64_t* out) nogil:
    cdef int64_t s2, r2, d2
    if r > d:
        r = d
    if s == d:
        if d > cap_d:
            d = cap_d
        out[0] = d
        out[1] = d
        out[2] = d
        return
    s2 = s if s < cap_s else cap_s
    d2 = d if d < cap_d else cap_d
    if d2 < s2 + 1:
        d2 = s2 + 1
    if r == d:
        r2 = d2
    elif r == s:
        r2 = s2
    else:
        r2 = r if r < cap_r else cap_r
        if r2 < s2 + 1:
            r2 = s2 + 1
        if r2 > d2 - 1:
            r2 = d2 - 1
        if r2 <= s2:
            r2 = d2
    out[0] = s2
    out[1] = r2
    out[2] = d2


cdef inline int _decide(int kind, int64_t s, int64_t r, int64_t d,
                        const int8_t[:, :, ::1] table,
                        int64_t cap_s, int64_t cap_r, int64_t cap_d) nogil:
    cdef int64_t idx[3]
    if kind == KIND_SP:
        if s == d:
            return OP_N
        if s < r:
            return OP_S
        return OP_R
    if kind == KIND_RP:
        if r < d:
            return OP_R
        if s < d:
            return OP_S
        return OP_N
    if s == d:
        return OP_N
    _saturate(s, r, d, cap_s, cap_r, cap_d, idx)
    return table[idx[0], idx[1], idx[2]]


def simulate(const double[:, ::1] u, int kind, const int8_t[:, :, ::1] table,
             caps, double p, double p1, double p2, double p3,
             int64_t[::1] state, int64_t slot0, int64_t warmup, int64_t batch_len,
             double[::1] batch_sums, int64_t[::1] counts, int64_t[:, ::1] occupancy,
             int64_t[:, ::1] departures, int64_t[:, ::1] trace, bint record, bint do_trace):
    """Advance ``u.shape[0]`` slots; returns the number of departure rows written.

    ``state`` holds (s, r, d, h_s, h_r, last_delivery_slot) and is updated in
    place. ``counts`` = (n_N, n_R, n_S, direct, relay) over all slots;
    ``batch_sums`` and ``occupancy`` (per batch, end-of-slot flag pattern)
    cover post-warmup slots only.
    """
    cdef int64_t cap_s = caps[0], cap_r = caps[1], cap_d = caps[2]
    cdef int64_t n = u.shape[0]
    cdef int64_t s = state[0], r = state[1], d = state[2]
    cdef int64_t hs = state[3], hr = state[4], last = state[5]
    cdef int64_t i, t, new_r, new_d, y, h, z, nb, b
    cdef int op, gen, sd, sr, rd, via, empty, flag_s, flag_r
    cdef int64_t ndep = 0
    nb = batch_sums.shape[0]
    with nogil:
        for i in range(n):
            t = slot0 + i + 1
            op = _decide(kind, s, r, d, table, cap_s, cap_r, cap_d)
            sd = 0
            sr = 0
            rd = 0
            gen = u[i, 0] < p
            new_r = r + 1
            new_d = d + 1
            via = -1
            if op == OP_S:
                sd = u[i, 1] < p1
                sr = u[i, 2] < p2
                if hs < 0:
                    hs = s
                if sr:
                    new_r = s + 1
                    hr = hs
                if sd:
                    new_d = s + 1
                    via = 0
                    y = s + 1
                    h = hs
            elif op == OP_R:
                rd = u[i, 3] < p3
                if rd:
                    new_d = r + 1
                    via = 1
                    y = r + 1
                    h = hr
            empty = (s + 1) == new_d
            flag_s = (s + 1 < new_r) and (s + 1 < new_d)
            flag_r = new_r < new_d
            if gen:
                s = 0
                hs = -1
            else:
                s = s + 1
            r = new_r
            d = new_d
            counts[op] += 1
            if via >= 0:
                counts[3 + via] += 1
            if t > warmup:
                b = (t - warmup - 1) // batch_len
                if b >= nb:
                    b = nb - 1
                batch_sums[b] += d
                occupancy[b, 2 * flag_s + flag_r] += 1
            if via >= 0:
                z = t - last if last >= 0 else -1
                last = t
                if record and t > warmup:
                    departures[ndep, 0] = t
                    departures[ndep, 1] = y
                    departures[ndep, 2] = h
                    departures[ndep, 3] = z
                    departures[ndep, 4] = via
                    departures[ndep, 5] = empty
                    ndep += 1
            if do_trace:
                trace[i, 0] = t
                trace[i, 1] = s
                trace[i, 2] = r
                trace[i, 3] = d
                trace[i, 4] = op
                trace[i, 5] = gen
                trace[i, 6] = sd
                trace[i, 7] = sr
                trace[i, 8] = rd
    state[0] = s
    state[1] = r
    state[2] = d
    state[3] = hs
    state[4] = hr
    state[5] = last
    return ndep


cdef inline int64_t _push(double m, int64_t s, int64_t r, int64_t d, int op,
                          double[:, :, ::1] dst, double p, double p1, double p2,
                          double p3, int64_t cap_s, int64_t cap_r, int64_t cap_d) nogil:
    cdef int64_t g, a, b, new_s, new_r, new_d, top = 0
    cdef double pg, pa, pb
    cdef int64_t nxt[3]
    for g in range(2):
        pg = p if g == 1 else 1.0 - p
        if pg == 0.0:
            continue
        new_s = 0 if g == 1 else s + 1
        if op == OP_S:
            for a in range(2):
                pa = p1 if a == 1 else 1.0 - p1
                if pa == 0.0:
                    continue
                for b in range(2):
                    pb = p2 if b == 1 else 1.0 - p2
                    if pb == 0.0:
                        continue
                    new_d = s + 1 if a == 1 else d + 1
                    new_r = s + 1 if b == 1 else r + 1
                    _saturate(new_s, new_r, new_d, cap_s, cap_r, cap_d, nxt)
                    dst[nxt[0], nxt[1], nxt[2]] += m * pg * pa * pb
                    if nxt[2] > top:
                        top = nxt[2]
        elif op == OP_R:
            for a in range(2):
                pa = p3 if a == 1 else 1.0 - p3
                if pa == 0.0:
                    continue
                new_d = r + 1 if a == 1 else d + 1
                _saturate(new_s, r + 1, new_d, cap_s, cap_r, cap_d, nxt)
                dst[nxt[0], nxt[1], nxt[2]] += m * pg * pa
                if nxt[2] > top:
                    top = nxt[2]
        else:
            _saturate(new_s, r + 1, d + 1, cap_s, cap_r, cap_d, nxt)
            dst[nxt[0], nxt[1], nxt[2]] += m * pg
            if nxt[2] > top:
                top = nxt[2]
    return top


def chain_sweep(double[:, :, ::1] src, double[:, :, ::1] dst, int kind,
                const int8_t[:, :, ::1] table, caps, double p, double p1, double p2,
                double p3, int64_t dmax, double threshold, double scale):
    """Push ``scale`` times the mass in ``src`` one slot forward into ``dst``.

    ``dst`` must be zero on entry; every visited cell of ``src`` (d <= dmax)
    is zeroed, so the two arrays can simply swap roles for the next sweep.
    Returns (E[d] of the scaled src, total mass pushed, new dmax).
    """
    cdef int64_t cap_s = caps[0], cap_r = caps[1], cap_d = caps[2]
    cdef int64_t s, r, d, smax, top, out_dmax = 0
    cdef int op
    cdef double m, mean_d = 0.0, total = 0.0
    with nogil:
        for d in range(dmax + 1):
            # empty system (d, d, d)
            m = src[d, d, d] * scale
            src[d, d, d] = 0.0
            if m > threshold:
                mean_d += m * d
                total += m
                top = _push(m, d, d, d, OP_N, dst, p, p1, p2, p3, cap_s, cap_r, cap_d)
                if top > out_dmax:
                    out_dmax = top
            smax = d - 1 if d - 1 < cap_s else cap_s
            for s in range(smax + 1):
                for r in range(s, d + 1):
                    m = src[s, r, d] * scale
                    src[s, r, d] = 0.0
                    if m <= threshold:
                        continue
                    mean_d += m * d
                    total += m
                    op = _decide(kind, s, r, d, table, cap_s, cap_r, cap_d)
                    top = _push(m, s, r, d, op, dst, p, p1, p2, p3, cap_s, cap_r, cap_d)
                    if top > out_dmax:
                        out_dmax = top
    return mean_d, total, out_dmax
