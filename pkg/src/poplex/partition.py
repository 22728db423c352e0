"""Equipartitioning the embedding space.

PCA whitening brings embeddings to zero mean and unit covariance; a
deterministic quasi-uniform direction grid (equal angles on the circle,
Fibonacci lattice on the sphere, a Kronecker lattice mapped through the
normal inverse CDF in higher dimensions) splits directions into spherical
Voronoi cells; rows are assigned to the nearest direction by cosine.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

from .errors import FormatError
from .fileio import content_fingerprint, read_blob, write_blob
from .sgns import EmbeddingMatrix

WHITENING_MAGIC = b"PLXWHT01"
GRID_MAGIC = b"PLXGRID1"
PARTITION_MAGIC = b"PLXPART1"

GOLDEN = (1.0 + 5.0**0.5) / 2.0

_CLUSTER_REL_TOL = 1e-8  # eigenvalues closer than this are one eigenspace


def _as_rows(data) -> np.ndarray:
    if isinstance(data, EmbeddingMatrix):
        return data.person_vectors().astype(np.float64)
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("expected a 2-D array of row vectors")
    return X


class WhiteningTransform:
    """x -> (x - mean) W, with W from PCA: eigenvectors scaled by 1/sqrt(eig)."""

    def __init__(self, mean: np.ndarray, matrix: np.ndarray, eps: float):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.eps = float(eps)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def transform(self, X) -> np.ndarray:
        X = _as_rows(X)
        if X.shape[1] != self.dim:
            raise ValueError(f"dimension mismatch: transform is {self.dim}-d")
        return (X - self.mean) @ self.matrix

    def save(self, path: str) -> None:
        write_blob(path, WHITENING_MAGIC, {"eps": self.eps},
                   {"mean": self.mean, "matrix": self.matrix})

    @classmethod
    def load(cls, path: str) -> "WhiteningTransform":
        meta, arrays = read_blob(path, WHITENING_MAGIC)
        return cls(arrays["mean"], arrays["matrix"], meta["eps"])

    def fingerprint(self) -> str:
        return content_fingerprint({"eps": self.eps},
                                   {"mean": self.mean, "matrix": self.matrix})


def _canonicalize_eigenbasis(lam: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Deterministic eigenbasis.

    Within a numerically degenerate eigenvalue cluster any orthonormal
    basis of the eigenspace is valid; pick the one closest to the
    coordinate axes so that re-whitening already-white data yields the
    identity map.  Then fix signs: largest-magnitude component positive.
    """
    d = len(lam)
    E = E.copy()
    tol = _CLUSTER_REL_TOL * max(abs(lam[0]), abs(lam[-1]), 1e-300)
    start = 0
    while start < d:
        end = start + 1
        while end < d and abs(lam[end] - lam[end - 1]) <= tol:
            end += 1
        m = end - start
        if m > 1:
            V = E[:, start:end]
            row_norm = (V**2).sum(axis=1)
            axes = np.argsort(-row_norm, kind="stable")[:m]
            proj = V @ V[np.sort(axes), :].T  # projections of chosen axes
            Q, R = np.linalg.qr(proj)
            if np.abs(np.diag(R)).min() > 1e-10:
                E[:, start:end] = Q
        start = end
    for j in range(d):
        i = int(np.argmax(np.abs(E[:, j])))
        if E[i, j] < 0:
            E[:, j] = -E[:, j]
    return E


def fit_whitening(data, eps: float = 1e-9) -> WhiteningTransform:
    """PCA whitening fitted on the given rows (EmbeddingMatrix or array).

    Eigenvalues are floored at eps so rank-deficient directions scale
    boundedly instead of blowing up.
    """
    X = _as_rows(data)
    n, d = X.shape
    if n < d + 1:
        raise ValueError(f"need at least dim+1 rows to fit whitening, got {n}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite values in whitening input")
    mu = X.mean(axis=0)
    Xc = X - mu
    C = (Xc.T @ Xc) / (n - 1)
    lam, E = np.linalg.eigh(C)
    lam = lam[::-1]
    E = E[:, ::-1]
    E = _canonicalize_eigenbasis(lam, E)
    W = E / np.sqrt(np.maximum(lam, eps))
    return WhiteningTransform(mu, W, eps)


class FibonacciGrid:
    """k quasi-uniform unit directions in R^d."""

    def __init__(self, directions: np.ndarray, construction: str):
        self.directions = np.asarray(directions, dtype=np.float64)
        self.construction = construction

    @property
    def k(self) -> int:
        return self.directions.shape[0]

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    def fingerprint(self) -> str:
        return content_fingerprint({"construction": self.construction},
                                   {"directions": self.directions})

    def save(self, path: str) -> None:
        write_blob(path, GRID_MAGIC,
                   {"k": self.k, "dim": self.dim, "construction": self.construction},
                   {"directions": self.directions})

    @classmethod
    def load(cls, path: str) -> "FibonacciGrid":
        meta, arrays = read_blob(path, GRID_MAGIC)
        return cls(arrays["directions"], meta["construction"])


def _generalized_golden(d: int) -> float:
    """Unique real root > 1 of x**(d+1) = x + 1 (d=1 gives the golden ratio)."""
    x = 1.5
    for _ in range(200):
        f = x ** (d + 1) - x - 1.0
        fp = (d + 1) * x**d - 1.0
        step = f / fp
        x -= step
        if abs(step) < 1e-15:
            break
    return x


def fibonacci_grid(k: int, d: int) -> FibonacciGrid:
    """Deterministic direction grid; construction depends on the dimension.

    d=2: k equal angles around the circle (exact equipartition).
    d=3: Fibonacci sphere lattice: equal-area latitudes, golden-angle
         azimuths.
    d>3: rank-1 Kronecker lattice in [0,1)^d with the generalized-golden
         irrational shift, mapped componentwise through the standard
         normal inverse CDF and normalized; quasi-uniform by the same
         low-discrepancy mechanism, validated by uniformity metrics.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if d < 2:
        raise ValueError("dimension must be at least 2")
    j = np.arange(k)
    if d == 2:
        theta = 2.0 * np.pi * j / k
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        construction = "circle2d"
    elif d == 3:
        z = 1.0 - (2.0 * j + 1.0) / k
        az = 2.0 * np.pi * j * (GOLDEN - 1.0) ** 2  # golden angle
        r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
        dirs = np.stack([r * np.cos(az), r * np.sin(az), z], axis=1)
        construction = "sphere3d"
    else:
        g = _generalized_golden(d)
        alpha = (1.0 / g) ** np.arange(1, d + 1)
        u = (0.5 + np.arange(1, k + 1)[:, None] * alpha[None, :]) % 1.0
        u = np.clip(u, 1e-12, 1.0 - 1e-12)
        dirs = ndtri(u)
        construction = "generalized"
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise ValueError("degenerate grid direction")
    return FibonacciGrid(dirs / norms, construction)


class Partition:
    """Cluster assignment of node rows; -1 marks unassignable (zero-norm) rows."""

    def __init__(self, assignment: np.ndarray, k: int, grid_fingerprint: str,
                 source_fingerprint: str = ""):
        self.assignment = np.asarray(assignment, dtype=np.int32)
        self.k = int(k)
        self.grid_fingerprint = grid_fingerprint
        self.source_fingerprint = source_fingerprint

    @property
    def counts(self) -> np.ndarray:
        a = self.assignment[self.assignment >= 0]
        return np.bincount(a, minlength=self.k).astype(np.int64)

    @property
    def num_unassigned(self) -> int:
        return int((self.assignment < 0).sum())

    def save(self, path: str) -> None:
        write_blob(path, PARTITION_MAGIC,
                   {"k": self.k, "grid_fingerprint": self.grid_fingerprint,
                    "source_fingerprint": self.source_fingerprint,
                    "counts": self.counts.tolist(),
                    "num_unassigned": self.num_unassigned},
                   {"assignment": self.assignment})

    @classmethod
    def load(cls, path: str) -> "Partition":
        meta, arrays = read_blob(path, PARTITION_MAGIC)
        if "assignment" not in arrays:
            raise FormatError(f"{path}: partition file missing assignment array")
        return cls(arrays["assignment"], meta["k"], meta["grid_fingerprint"],
                   meta.get("source_fingerprint", ""))


def assign(data, grid: FibonacciGrid,
           whitening: WhiteningTransform | None = None) -> Partition:
    """Nearest grid direction by cosine; ties break to the lowest index."""
    X = _as_rows(data)
    if X.shape[1] != grid.dim:
        raise ValueError(f"dimension mismatch: rows are {X.shape[1]}-d, grid is {grid.dim}-d")
    if whitening is not None:
        X = whitening.transform(X)
    norms = np.linalg.norm(X, axis=1)
    scores = X @ grid.directions.T
    labels = np.argmax(scores, axis=1).astype(np.int32)
    labels[norms == 0.0] = -1
    src = ""
    if isinstance(data, EmbeddingMatrix):
        src = data.fingerprint()
    return Partition(labels, grid.k, grid.fingerprint(), src)


def balance_metrics(partition: Partition) -> dict:
    """Lorenz curve of cluster sizes, its Gini, and top-share statistics."""
    counts = partition.counts
    total = int(counts.sum())
    if total == 0:
        raise ValueError("empty partition")
    k = partition.k
    asc = np.sort(counts)
    shares_cum = np.cumsum(asc) / total
    ranks = np.arange(1, k + 1)
    gini = float(2.0 * (ranks * asc).sum() / (k * total) - (k + 1) / k)
    desc = asc[::-1]
    top_cum = np.cumsum(desc) / total
    n_for_half = int(np.searchsorted(top_cum, 0.5) + 1)
    return {
        "k": k,
        "total": total,
        "gini": gini,
        "clusters_holding_half": n_for_half,
        "fraction_holding_half": n_for_half / k,
        "max_share": float(desc[0] / total),
        "lorenz": shares_cum.tolist(),
        "num_unassigned": partition.num_unassigned,
    }


def retention(base: Partition, later: Partition,
              common_ids: np.ndarray | None = None) -> float:
    """Fraction of common ids whose cluster is unchanged since the base year."""
    if base.grid_fingerprint != later.grid_fingerprint:
        raise ValueError("partitions use different grids; retention undefined")
    if common_ids is None:
        n = min(len(base.assignment), len(later.assignment))
        common_ids = np.arange(n)
    common_ids = np.asarray(common_ids, dtype=np.int64)
    if len(common_ids) == 0:
        raise ValueError("no common ids")
    a = base.assignment[common_ids]
    b = later.assignment[common_ids]
    same = (a == b) & (a >= 0)
    return float(same.sum() / len(common_ids))
