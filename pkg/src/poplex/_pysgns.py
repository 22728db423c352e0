"""Pure-Python SGNS epoch kernel.

Semantics match the compiled kernel at (center, context) pair granularity:
same random draw order, same update rule, same learning-rate schedule.
Within one pair the (1 + negatives) target updates are vectorized, so
results are not bit-identical to the compiled backend (which updates
sequentially); both satisfy the same contracts.
"""

from __future__ import annotations

import numpy as np

from .rng import Stream

BACKEND_NAME = "python"

SGNS_STREAM_TAG = 0x53474E53  # distinguishes training streams from walk streams


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x + np.log1p(np.exp(-np.abs(x))), np.log1p(np.exp(x)))


def sgns_epoch(
    tokens: np.ndarray,
    offsets: np.ndarray,
    walk_lo: int,
    walk_hi: int,
    syn0: np.ndarray,
    syn1: np.ndarray,
    alias_prob: np.ndarray,
    alias_idx: np.ndarray,
    window: int,
    negatives: int,
    lr0: float,
    lr_min: float,
    progress_base: float,
    progress_scale: float,
    keep_prob: np.ndarray | None,
    seed: int,
    epoch: int,
    worker: int,
) -> tuple[float, int]:
    """Stream walks [walk_lo, walk_hi); returns (loss_sum, pair_count)."""
    stream = Stream(seed, SGNS_STREAM_TAG + epoch, worker)
    K = len(alias_prob)
    loss_sum = 0.0
    pair_count = 0
    processed = 0
    labels_buf = np.zeros(negatives + 1, dtype=np.float64)
    labels_buf[0] = 1.0

    for w in range(walk_lo, walk_hi):
        sent = tokens[offsets[w] : offsets[w + 1]]
        if keep_prob is not None:
            kept = [t for t in sent if stream.next_f64() < keep_prob[t]]
            sent = np.asarray(kept, dtype=tokens.dtype)
        m = len(sent)
        for ci in range(m):
            progress = progress_base + processed * progress_scale
            processed += 1
            if progress > 1.0:
                progress = 1.0
            alpha = lr0 + (lr_min - lr0) * progress
            center = int(sent[ci])
            radius = 1 + stream.next_below(window)
            lo = max(ci - radius, 0)
            hi = min(ci + radius + 1, m)
            for cj in range(lo, hi):
                if cj == ci:
                    continue
                ctx = int(sent[cj])
                targets = [ctx]
                for _ in range(negatives):
                    idx = stream.next_below(K)
                    t = idx if stream.next_f64() < alias_prob[idx] else int(alias_idx[idx])
                    if t != ctx:
                        targets.append(t)
                tg = np.asarray(targets, dtype=np.int64)
                labels = labels_buf[: len(tg)].copy()
                labels[1:] = 0.0
                labels[0] = 1.0
                u = syn0[center].astype(np.float64)
                V = syn1[tg].astype(np.float64)
                f = V @ u
                sig = np.where(f >= 0, 1.0 / (1.0 + np.exp(-f)),
                               np.exp(f) / (1.0 + np.exp(f)))
                g = (labels - sig) * alpha
                loss_sum += float(_softplus(-f[0]) + _softplus(f[1:]).sum())
                neu1e = g @ V
                np.add.at(syn1, tg, (g[:, None] * u[None, :]).astype(syn1.dtype))
                syn0[center] += neu1e.astype(syn0.dtype)
                pair_count += 1
    return loss_sum, pair_count
