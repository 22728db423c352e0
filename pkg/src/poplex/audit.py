"""Finite-population representativeness audits.

Both tests ask whether a sample's cluster composition is consistent with
simple random sampling without replacement from fixed population cluster
counts: a global misfit statistic with a Monte Carlo p-value, and a
per-cluster anomaly test standardized by a simulated "typical wiggle"
baseline with family-wise calibration via the max statistic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass
class AuditInput:
    population_counts: np.ndarray  # c_i, one per cluster
    sample_counts: np.ndarray  # x_i
    permutations: int = 10_000
    seed: int = 0

    def __post_init__(self):
        self.population_counts = np.asarray(self.population_counts, dtype=np.int64)
        self.sample_counts = np.asarray(self.sample_counts, dtype=np.int64)
        if self.population_counts.shape != self.sample_counts.shape:
            raise ConfigError("population and sample count vectors differ in length")
        if np.any(self.population_counts < 0) or np.any(self.sample_counts < 0):
            raise ConfigError("counts must be non-negative")
        if np.any(self.sample_counts > self.population_counts):
            raise ConfigError("sample count exceeds population count in some cluster")
        if self.permutations < 1:
            raise ConfigError("permutations must be at least 1")

    @property
    def num_clusters(self) -> int:
        return len(self.population_counts)

    @property
    def population_size(self) -> int:
        return int(self.population_counts.sum())

    @property
    def sample_size(self) -> int:
        return int(self.sample_counts.sum())

    @property
    def shares(self) -> np.ndarray:
        return self.population_counts / self.population_size

    def to_dict(self) -> dict:
        return {"c": self.population_counts.tolist(), "x": self.sample_counts.tolist(),
                "Q": self.permutations, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "AuditInput":
        return cls(np.asarray(d["c"]), np.asarray(d["x"]),
                   int(d.get("Q", 10_000)), int(d.get("seed", 0)))

    @classmethod
    def from_json(cls, path: str) -> "AuditInput":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def _null_draws(inp: AuditInput, rng: np.random.Generator) -> np.ndarray:
    """Q multivariate-hypergeometric samples of the sample size from c."""
    return rng.multivariate_hypergeometric(
        inp.population_counts, inp.sample_size, size=inp.permutations,
        method="marginals")


def _misfit(draws: np.ndarray, shares: np.ndarray, L: int) -> np.ndarray:
    return (np.abs(draws / L - shares) * 100.0).sum(axis=-1)


def global_misfit(inp: AuditInput) -> tuple[float, float]:
    """Total absolute share deviation (percentage points) and its
    +1-smoothed upper-tail Monte Carlo p-value under the SRS null."""
    L = inp.sample_size
    if L == 0:
        raise ConfigError("empty sample")
    shares = inp.shares
    s_obs = float(_misfit(inp.sample_counts, shares, L))
    rng = np.random.default_rng(inp.seed)
    s_null = _misfit(_null_draws(inp, rng), shares, L)
    p = (int((s_null >= s_obs).sum()) + 1) / (inp.permutations + 1)
    return s_obs, float(p)


class WiggleCurve:
    """Piecewise-linear w(p): typical (median) absolute share deviation, in
    percentage points, of a cluster with expected share p. w(0) = 0."""

    def __init__(self, grid: np.ndarray, values: np.ndarray):
        order = np.argsort(grid)
        self.grid = np.concatenate([[0.0], np.asarray(grid, dtype=float)[order]])
        self.values = np.concatenate([[0.0], np.asarray(values, dtype=float)[order]])

    def __call__(self, p) -> np.ndarray:
        return np.interp(p, self.grid, self.values)

    def to_dict(self) -> dict:
        return {"grid": self.grid.tolist(), "values": self.values.tolist()}


def wiggle_curve(population_counts: np.ndarray, sample_size: int,
                 grid: np.ndarray | None = None, sims: int = 1000,
                 seed: int = 0) -> WiggleCurve:
    """Fit w(p) by simulating hypergeometric counts at each grid share."""
    if sims < 100:
        raise ConfigError("need at least 100 sims per grid point")
    c = np.asarray(population_counts, dtype=np.int64)
    n = int(c.sum())
    p_max = float(c.max() / n)
    if grid is None:
        grid = np.geomspace(1e-4, max(p_max, 2e-4), 30)
    rng = np.random.default_rng(seed)
    values = []
    for p in grid:
        ngood = int(round(p * n))
        if ngood == 0 or ngood >= n:
            values.append(0.0)
            continue
        draws = rng.hypergeometric(ngood, n - ngood, sample_size, size=sims)
        share = ngood / n
        values.append(float(np.median(np.abs(draws / sample_size - share)) * 100.0))
    return WiggleCurve(np.asarray(grid), np.asarray(values))


@dataclass
class PerClusterResult:
    threshold: float  # c_T*
    scores: np.ndarray  # observed T_i; nan where excluded
    flags: np.ndarray  # bool per cluster
    p_tmax: float
    excluded: np.ndarray  # clusters where w(p_i) == 0

    def flagged_clusters(self) -> list:
        return np.nonzero(self.flags)[0].tolist()


def per_cluster_test(inp: AuditInput, w: WiggleCurve, alpha: float = 0.05
                     ) -> PerClusterResult:
    """Flag clusters whose standardized deviation exceeds the (1-alpha)
    quantile of the permutation max statistic."""
    L = inp.sample_size
    shares = inp.shares
    wp = np.asarray(w(shares), dtype=float)
    included = wp > 0
    if not included.any():
        raise ConfigError("all clusters excluded: w(p) is zero everywhere")
    rng = np.random.default_rng(inp.seed)
    draws = _null_draws(inp, rng)
    dev_null = np.abs(draws[:, included] / L - shares[included]) * 100.0
    t_max = (dev_null / wp[included]).max(axis=1)
    if alpha >= 1.0:
        threshold = 0.0  # degenerate level: any deviation flags
    else:
        # exact permutation convention: the ceil((1-alpha)(Q+1))-th order
        # statistic keeps the family-wise false-flag rate <= alpha
        q = inp.permutations
        idx = min(int(np.ceil((1.0 - alpha) * (q + 1))), q) - 1
        threshold = float(np.sort(t_max)[idx])
    dev_obs = np.abs(inp.sample_counts / L - shares) * 100.0
    scores = np.full(inp.num_clusters, np.nan)
    scores[included] = dev_obs[included] / wp[included]
    flags = np.zeros(inp.num_clusters, dtype=bool)
    flags[included] = scores[included] > threshold
    t_obs = float(np.nanmax(scores[included]))
    p_tmax = (int((t_max >= t_obs).sum()) + 1) / (inp.permutations + 1)
    return PerClusterResult(threshold=threshold, scores=scores, flags=flags,
                            p_tmax=float(p_tmax),
                            excluded=np.nonzero(~included)[0])


@dataclass
class AuditResult:
    s_obs: float
    p_global: float
    wiggle: WiggleCurve
    threshold: float
    scores: np.ndarray
    flags: np.ndarray
    p_tmax: float
    excluded: np.ndarray
    alpha: float
    funnel: list = field(default_factory=list)

    def flagged_clusters(self) -> list:
        return np.nonzero(self.flags)[0].tolist()

    def to_dict(self) -> dict:
        return {
            "S_obs": self.s_obs,
            "p_global": self.p_global,
            "wiggle": self.wiggle.to_dict(),
            "threshold": self.threshold,
            "scores": [None if np.isnan(s) else float(s) for s in self.scores],
            "flags": self.flags.astype(int).tolist(),
            "p_tmax": self.p_tmax,
            "excluded": self.excluded.tolist(),
            "alpha": self.alpha,
        }


def run_audit(inp: AuditInput, alpha: float = 0.05, wiggle_sims: int = 1000,
              wiggle_grid: np.ndarray | None = None) -> AuditResult:
    """Global test, wiggle calibration, per-cluster test, funnel rows."""
    s_obs, p_global = global_misfit(inp)
    w = wiggle_curve(inp.population_counts, inp.sample_size, grid=wiggle_grid,
                     sims=wiggle_sims, seed=inp.seed + 1)
    per = per_cluster_test(inp, w, alpha=alpha)
    shares = inp.shares
    dev = np.abs(inp.sample_counts / inp.sample_size - shares) * 100.0
    wp = w(shares)
    funnel = [
        {
            "cluster": i,
            "share": float(shares[i]),
            "deviation_pp": float(dev[i]),
            "envelope_pp": float(per.threshold * wp[i]),
            "flagged": bool(per.flags[i]),
        }
        for i in range(inp.num_clusters)
    ]
    return AuditResult(s_obs=s_obs, p_global=p_global, wiggle=w,
                       threshold=per.threshold, scores=per.scores,
                       flags=per.flags, p_tmax=per.p_tmax,
                       excluded=per.excluded, alpha=alpha, funnel=funnel)
