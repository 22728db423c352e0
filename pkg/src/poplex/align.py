"""Temporal alignment of embedding spaces.

Each later year is projected directly into the base year's space.  The
preferred map is per-dimension least squares with intercept; Orthogonal
Procrustes (centered, unscaled) is the comparison baseline.  Quality is
judged by how well pairwise cosine similarities survive the map.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg, stats

from .errors import FormatError
from .fileio import read_blob, write_blob
from .sgns import EmbeddingMatrix

ALIGNMENT_MAGIC = b"PLXALN01"

_RIDGE = 1e-8


class LinearAlignment:
    """Affine map x -> xA + b between embedding spaces."""

    def __init__(self, matrix: np.ndarray, intercept: np.ndarray, method: str,
                 source_year: int | None = None, target_year: int | None = None):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.intercept = np.asarray(intercept, dtype=np.float64)
        self.method = method
        self.source_year = source_year
        self.target_year = target_year
        if not (np.all(np.isfinite(self.matrix)) and np.all(np.isfinite(self.intercept))):
            raise ValueError("alignment contains non-finite values")
        if method == "procrustes":
            dev = np.abs(self.matrix.T @ self.matrix - np.eye(self.matrix.shape[1])).max()
            if dev > 1e-6:
                raise ValueError(f"procrustes map not orthogonal (deviation {dev:.2e})")

    @property
    def d_source(self) -> int:
        return self.matrix.shape[0]

    @property
    def d_target(self) -> int:
        return self.matrix.shape[1]

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.d_source:
            raise ValueError(
                f"dimension mismatch: map expects {self.d_source}, got {X.shape[1]}")
        return X @ self.matrix + self.intercept

    def save(self, path: str) -> None:
        write_blob(path, ALIGNMENT_MAGIC,
                   {"method": self.method, "source_year": self.source_year,
                    "target_year": self.target_year, "d_source": self.d_source,
                    "d_target": self.d_target},
                   {"matrix": self.matrix, "intercept": self.intercept})

    @classmethod
    def load(cls, path: str) -> "LinearAlignment":
        meta, arrays = read_blob(path, ALIGNMENT_MAGIC)
        if "matrix" not in arrays or "intercept" not in arrays:
            raise FormatError(f"{path}: alignment file missing arrays")
        return cls(arrays["matrix"], arrays["intercept"], meta["method"],
                   meta.get("source_year"), meta.get("target_year"))


def _check_fit_inputs(X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y must be row-aligned 2-D arrays")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("non-finite values in alignment inputs")
    if X.shape[0] < X.shape[1] + 1:
        raise ValueError(
            f"under-determined fit: {X.shape[0]} rows for {X.shape[1]} dims")
    return X, Y


def fit_ols(X: np.ndarray, Y: np.ndarray, source_year: int | None = None,
            target_year: int | None = None) -> LinearAlignment:
    """Least-squares affine map: per target dimension, one regression with
    intercept. Falls back to a tiny ridge on rank deficiency."""
    X, Y = _check_fit_inputs(X, Y)
    n, d = X.shape
    Z = np.hstack([X, np.ones((n, 1))])
    beta, _, rank, _ = linalg.lstsq(Z, Y, lapack_driver="gelsd")
    if rank < d + 1:
        G = Z.T @ Z + _RIDGE * np.eye(d + 1)
        beta = linalg.solve(G, Z.T @ Y, assume_a="pos")
    return LinearAlignment(beta[:-1], beta[-1], "ols", source_year, target_year)


def fit_procrustes(X: np.ndarray, Y: np.ndarray, source_year: int | None = None,
                   target_year: int | None = None) -> LinearAlignment:
    """Orthogonal map of column-centered data, no scaling; the intercept
    carries the centering offset so the map sends the X mean to the Y mean."""
    X, Y = _check_fit_inputs(X, Y)
    if X.shape[1] != Y.shape[1]:
        raise ValueError("procrustes requires equal source and target dims")
    mx, my = X.mean(axis=0), Y.mean(axis=0)
    M = (X - mx).T @ (Y - my)
    U, _, Vt = linalg.svd(M)
    A = U @ Vt
    b = my - mx @ A
    return LinearAlignment(A, b, "procrustes", source_year, target_year)


def apply(alignment: LinearAlignment, emb: EmbeddingMatrix) -> EmbeddingMatrix:
    """Map every row of the embedding into the target space."""
    if emb.dim != alignment.d_source:
        raise ValueError(
            f"dimension mismatch: embedding dim {emb.dim}, map expects {alignment.d_source}")
    mapped = alignment.transform(emb.vectors.astype(np.float64)).astype(np.float32)
    metadata = dict(emb.metadata)
    metadata["alignment"] = {
        "method": alignment.method,
        "source_year": alignment.source_year,
        "target_year": alignment.target_year,
    }
    return EmbeddingMatrix(mapped, metadata)


def _pairwise_cosines(V: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    a = V[pairs[:, 0]].astype(np.float64)
    b = V[pairs[:, 1]].astype(np.float64)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = na * nb
    if np.any(denom == 0):
        raise ValueError("zero-norm vector among sampled pairs")
    return (a * b).sum(axis=1) / denom


def sample_pairs(ids: np.ndarray, n_pairs: int, seed: int) -> np.ndarray:
    """Distinct unordered id pairs, sampled without replacement."""
    if n_pairs < 2:
        raise ValueError("n_pairs must be at least 2")
    m = len(ids)
    total = m * (m - 1) // 2
    if n_pairs > total:
        raise ValueError(f"cannot sample {n_pairs} distinct pairs from {m} ids")
    rng = np.random.default_rng(seed)
    seen = set()
    out = np.empty((n_pairs, 2), dtype=np.int64)
    k = 0
    while k < n_pairs:
        draw = rng.integers(0, m, size=(n_pairs - k, 2))
        for i, j in draw:
            if i == j:
                continue
            key = (min(i, j), max(i, j))
            if key in seen:
                continue
            seen.add(key)
            out[k, 0] = ids[key[0]]
            out[k, 1] = ids[key[1]]
            k += 1
            if k == n_pairs:
                break
    return out


class PairSimilarityEval:
    def __init__(self, n_pairs: int, pearson: float, spearman: float, seed: int):
        self.n_pairs = n_pairs
        self.pearson = pearson
        self.spearman = spearman
        self.seed = seed

    def to_dict(self) -> dict:
        return {"n_pairs": self.n_pairs, "pearson": self.pearson,
                "spearman": self.spearman, "seed": self.seed}


def evaluate_pairs(emb_x: EmbeddingMatrix, emb_y: EmbeddingMatrix, n_pairs: int,
                   seed: int, ids: np.ndarray | None = None) -> PairSimilarityEval:
    """Correlate pairwise cosine similarities across two embedding spaces.

    Pass (source, aligned) for a before/after-distortion reading or
    (aligned, target) for an alignment-quality reading; the computation is
    the same either way.
    """
    if ids is None:
        n = min(emb_x.num_nodes, emb_y.num_nodes)
        ids = np.arange(n, dtype=np.int64)
    pairs = sample_pairs(np.asarray(ids, dtype=np.int64), n_pairs, seed)
    cx = _pairwise_cosines(emb_x.vectors, pairs)
    cy = _pairwise_cosines(emb_y.vectors, pairs)
    if np.std(cx) == 0 or np.std(cy) == 0:
        raise ValueError("correlation undefined: constant similarity list")
    pearson = float(stats.pearsonr(cx, cy).statistic)
    spearman = float(stats.spearmanr(cx, cy).statistic)
    return PairSimilarityEval(n_pairs, pearson, spearman, seed)
