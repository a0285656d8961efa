"""Pure-Python versions of the inner loops in ``_kernels.pyx``.

Used when the compiled extension is unavailable or ``AORELAY_PURE_PYTHON=1``.
Signatures and results match the compiled module exactly.
"""
from __future__ import annotations

import numpy as np

OP_N, OP_R, OP_S = 0, 1, 2
KIND_SP, KIND_RP, KIND_TABLE = 0, 1, 2


def saturate(s, r, d, cap_s, cap_r, cap_d):
    if r > d:
        r = d
    if s == d:
        d = min(d, cap_d)
        return d, d, d
    s2 = min(s, cap_s)
    d2 = max(min(d, cap_d), s2 + 1)
    if r == d:
        r2 = d2
    elif r == s:
        r2 = s2
    else:
        r2 = min(max(min(r, cap_r), s2 + 1), d2 - 1)
        if r2 <= s2:
            r2 = d2
    return s2, r2, d2


def decide(kind, s, r, d, table, cap_s, cap_r, cap_d):
    if kind == KIND_SP:
        if s == d:
            return OP_N
        return OP_S if s < r else OP_R
    if kind == KIND_RP:
        if r < d:
            return OP_R
        return OP_S if s < d else OP_N
    if s == d:
        return OP_N
    return int(table[saturate(s, r, d, cap_s, cap_r, cap_d)])


def simulate(u, kind, table, caps, p, p1, p2, p3, state, slot0, warmup, batch_len,
             batch_sums, counts, occupancy, departures, trace, record, do_trace):
    cap_s, cap_r, cap_d = (int(c) for c in caps)
    s, r, d, hs, hr, last = (int(x) for x in state)
    nb = batch_sums.shape[0]
    ndep = 0
    # plain lists are much faster than numpy scalar indexing in this loop
    rows = u.tolist()
    sums = [0.0] * nb
    local_counts = [0] * 5
    occ = [[0] * 4 for _ in range(nb)]
    dep_rows = []
    trace_rows = []
    for i, (ug, usd, usr, urd) in enumerate(rows):
        t = slot0 + i + 1
        op = decide(kind, s, r, d, table, cap_s, cap_r, cap_d)
        sd = sr = rd = 0
        gen = int(ug < p)
        new_r = r + 1
        new_d = d + 1
        via = -1
        y = h = 0
        if op == OP_S:
            sd = int(usd < p1)
            sr = int(usr < p2)
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
            rd = int(urd < p3)
            if rd:
                new_d = r + 1
                via = 1
                y = r + 1
                h = hr
        empty = int(s + 1 == new_d)
        flag_s = int(s + 1 < new_r and s + 1 < new_d)
        flag_r = int(new_r < new_d)
        if gen:
            s = 0
            hs = -1
        else:
            s += 1
        r = new_r
        d = new_d
        local_counts[op] += 1
        if via >= 0:
            local_counts[3 + via] += 1
        if t > warmup:
            b = min((t - warmup - 1) // batch_len, nb - 1)
            sums[b] += d
            occ[b][2 * flag_s + flag_r] += 1
        if via >= 0:
            z = t - last if last >= 0 else -1
            last = t
            if record and t > warmup:
                dep_rows.append((t, y, h, z, via, empty))
        if do_trace:
            trace_rows.append((t, s, r, d, op, gen, sd, sr, rd))

    for k in range(nb):
        batch_sums[k] += sums[k]
    for k in range(5):
        counts[k] += local_counts[k]
    occupancy += np.asarray(occ, dtype=np.int64)
    ndep = len(dep_rows)
    if ndep:
        departures[:ndep] = dep_rows
    if do_trace:
        trace[: len(trace_rows)] = trace_rows
    state[:] = (s, r, d, hs, hr, last)
    return ndep


def _push(m, s, r, d, op, dst, p, p1, p2, p3, cap_s, cap_r, cap_d):
    top = 0
    for g, pg in ((0, 1.0 - p), (1, p)):
        if pg == 0.0:
            continue
        new_s = 0 if g == 1 else s + 1
        if op == OP_S:
            for a, pa in ((0, 1.0 - p1), (1, p1)):
                if pa == 0.0:
                    continue
                for b, pb in ((0, 1.0 - p2), (1, p2)):
                    if pb == 0.0:
                        continue
                    nxt = saturate(new_s, s + 1 if b else r + 1, s + 1 if a else d + 1, cap_s, cap_r, cap_d)
                    dst[nxt] += m * pg * pa * pb
                    top = max(top, nxt[2])
        elif op == OP_R:
            for a, pa in ((0, 1.0 - p3), (1, p3)):
                if pa == 0.0:
                    continue
                nxt = saturate(new_s, r + 1, r + 1 if a else d + 1, cap_s, cap_r, cap_d)
                dst[nxt] += m * pg * pa
                top = max(top, nxt[2])
        else:
            nxt = saturate(new_s, r + 1, d + 1, cap_s, cap_r, cap_d)
            dst[nxt] += m * pg
            top = max(top, nxt[2])
    return top


def chain_sweep(src, dst, kind, table, caps, p, p1, p2, p3, dmax, threshold, scale):
    cap_s, cap_r, cap_d = (int(c) for c in caps)
    mean_d = 0.0
    total = 0.0
    out_dmax = 0
    for d in range(dmax + 1):
        m = src[d, d, d] * scale
        src[d, d, d] = 0.0
        if m > threshold:
            mean_d += m * d
            total += m
            out_dmax = max(out_dmax, _push(m, d, d, d, OP_N, dst, p, p1, p2, p3, cap_s, cap_r, cap_d))
        for s in range(min(d - 1, cap_s) + 1):
            for r in range(s, d + 1):
                m = src[s, r, d] * scale
                src[s, r, d] = 0.0
                if m <= threshold:
                    continue
                mean_d += m * d
                total += m
                op = decide(kind, s, r, d, table, cap_s, cap_r, cap_d)
                out_dmax = max(out_dmax, _push(m, s, r, d, op, dst, p, p1, p2, p3, cap_s, cap_r, cap_d))
    return mean_d, total, out_dmax
