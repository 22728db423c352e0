# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled SGNS epoch kernel (sequential SGD, exact sigmoid).

Releases the GIL so multiple workers can run hogwild-style over disjoint
walk shards sharing syn0/syn1.
"""

from libc.stdint cimport uint64_t, uint32_t, int64_t, int32_t
from libc.math cimport exp, log1p

import numpy as np

from poplex._native._rng cimport stream_state, next_f64, next_below

BACKEND_NAME = "native"

cdef long SGNS_STREAM_TAG = 0x53474E53


cdef inline double _sigmoid(double f) nogil:
    cdef double e
    if f >= 0:
        return 1.0 / (1.0 + exp(-f))
    e = exp(f)
    return e / (1.0 + e)


cdef inline double _softplus(double f) nogil:
    if f > 0:
        return f + log1p(exp(-f))
    return log1p(exp(f))


def sgns_epoch(
    const uint32_t[::1] tokens,
    const int64_t[::1] offsets,
    long walk_lo,
    long walk_hi,
    float[:, ::1] syn0,
    float[:, ::1] syn1,
    const double[::1] alias_prob,
    const int32_t[::1] alias_idx,
    int window,
    int negatives,
    double lr0,
    double lr_min,
    double progress_base,
    double progress_scale,
    const double[::1] keep_prob,  # may be None
    uint64_t seed,
    long epoch,
    long worker,
):
    cdef long dim = syn0.shape[1]
    cdef uint64_t K = <uint64_t>alias_prob.shape[0]
    cdef bint subsample = keep_prob is not None
    cdef uint64_t state = stream_state(seed, <uint64_t>(SGNS_STREAM_TAG + epoch), <uint64_t>worker)

    cdef double loss_sum = 0.0
    cdef long pair_count = 0
    cdef long processed = 0

    cdef long w, m, ci, cj, lo, hi, kneg, center, ctx, target, r
    cdef int64_t s0, s1, i
    cdef double progress, alpha, f, sig, g, label
    cdef uint64_t idx
    cdef long max_len = 0
    for w in range(walk_lo, walk_hi):
        if offsets[w + 1] - offsets[w] > max_len:
            max_len = <long>(offsets[w + 1] - offsets[w])

    sent_arr = np.empty(max_len if max_len > 0 else 1, dtype=np.int64)
    neu_arr = np.zeros(dim, dtype=np.float64)
    cdef int64_t[::1] sent = sent_arr
    cdef double[::1] neu1e = neu_arr

    with nogil:
        for w in range(walk_lo, walk_hi):
            s0 = offsets[w]
            s1 = offsets[w + 1]
            m = 0
            if subsample:
                for i in range(s0, s1):
                    if next_f64(&state) < keep_prob[tokens[i]]:
                        sent[m] = tokens[i]
                        m += 1
            else:
                for i in range(s0, s1):
                    sent[m] = tokens[i]
                    m += 1
            for ci in range(m):
                progress = progress_base + processed * progress_scale
                processed += 1
                if progress > 1.0:
                    progress = 1.0
                alpha = lr0 + (lr_min - lr0) * progress
                center = sent[ci]
                r = 1 + <long>next_below(&state, <uint64_t>window)
                lo = ci - r
                if lo < 0:
                    lo = 0
                hi = ci + r + 1
                if hi > m:
                    hi = m
                for cj in range(lo, hi):
                    if cj == ci:
                        continue
                    ctx = sent[cj]
                    for i in range(dim):
                        neu1e[i] = 0.0
                    for kneg in range(negatives + 1):
                        if kneg == 0:
                            target = ctx
                            label = 1.0
                        else:
                            idx = next_below(&state, K)
                            if next_f64(&state) < alias_prob[idx]:
                                target = <long>idx
                            else:
                                target = alias_idx[idx]
                            if target == ctx:
                                continue
                            label = 0.0
                        f = 0.0
                        for i in range(dim):
                            f += syn0[center, i] * syn1[target, i]
                        sig = _sigmoid(f)
                        g = (label - sig) * alpha
                        if label == 1.0:
                            loss_sum += _softplus(-f)
                        else:
                            loss_sum += _softplus(f)
                        for i in range(dim):
                            neu1e[i] += g * syn1[target, i]
                        for i in range(dim):
                            syn1[target, i] += <float>(g * syn0[center, i])
                    for i in range(dim):
                        syn0[center, i] += <float>neu1e[i]
                    pair_count += 1
    return loss_sum, pair_count
