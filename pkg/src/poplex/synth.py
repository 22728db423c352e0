"""Synthetic temporal population generator for desk-scale experiments.

Produces yearly multiplex snapshots over a fixed node set with five layers:
within-household cliques, static kinship ties (parents, siblings, twins),
k-nearest-address neighbor ties, distance-capped colleague ties, and
permanently accumulating classmate cohorts.  Event flags and a continuous
income proxy carry planted, layer-specific signal so downstream probes
have something to learn.  Generation is deterministic in (config, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError
from .graph import LAYER_NAMES, MultiplexGraph, build_csr_layer

LAYER_INDEX = {name: i for i, name in enumerate(LAYER_NAMES)}

DEFAULT_EVENTS = {
    # analog events with layer-specific drivers; base rates are population means
    "union": {"base_rate": 0.06, "driver": "workplace"},
    "fertility": {"base_rate": 0.08, "driver": "neighborhood"},
    "divorce": {"base_rate": 0.05, "driver": "school"},
}

EVENT_DRIVERS = ("household", "workplace", "school", "neighborhood")


@dataclass
class SyntheticPopulationConfig:
    """All knobs of the generator. Every field has a usable default."""

    num_nodes: int = 10_000
    num_years: int = 3
    start_year: int = 0
    # households: sizes 1..len(probs) drawn with these weights
    household_size_probs: tuple = (0.28, 0.34, 0.14, 0.16, 0.06, 0.02)
    min_household_size: int = 1
    # families: sizes 2..(1+len(probs)); everyone gets kinship ties
    family_size_probs: tuple = (0.30, 0.28, 0.22, 0.12, 0.08)
    twin_rate: float = 0.15  # chance a family's first two children are twins
    # neighbors: cap on nearest addresses considered per household
    neighbor_addresses: int = 5
    # work
    employment_rate: float = 0.6
    workplace_size_mean: float = 12.0
    colleague_cap: int = 100
    # school
    student_rate: float = 0.25
    cohort_size: int = 18
    # yearly churn
    job_change_rate: float = 0.15
    move_rate: float = 0.08
    school_rotation_rate: float = 1.0
    # planted signal
    events: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_EVENTS.items()})
    signal_strength: float = 2.5
    neighborhood_blocks: int = 6  # spatial latents live on a blocks x blocks grid
    income_base: float = 10.0  # mean of log-income for earners
    income_signal: float = 0.8
    income_noise: float = 0.35
    zero_income_rate: float = 0.25  # non-workers reporting zero income

    def validate(self) -> None:
        if self.num_nodes < 2:
            raise ConfigError("num_nodes must be at least 2")
        if self.num_years < 1:
            raise ConfigError("num_years must be at least 1")
        if self.min_household_size > self.num_nodes:
            raise ConfigError("min_household_size exceeds num_nodes")
        if self.min_household_size >= 1 + len(self.household_size_probs):
            raise ConfigError("min_household_size exceeds largest household size")
        for probs, what in ((self.household_size_probs, "household"),
                            (self.family_size_probs, "family")):
            p = np.asarray(probs, dtype=float)
            if len(p) == 0 or np.any(p < 0) or p.sum() <= 0:
                raise ConfigError(f"invalid {what}_size_probs")
        if not (0.0 <= self.twin_rate <= 1.0):
            raise ConfigError("twin_rate must be in [0, 1]")
        if self.cohort_size < 2:
            raise ConfigError("cohort_size must be at least 2")
        if self.colleague_cap < 1:
            raise ConfigError("colleague_cap must be at least 1")
        if self.neighborhood_blocks < 1:
            raise ConfigError("neighborhood_blocks must be at least 1")
        for name, spec in self.events.items():
            if not (0.0 < spec["base_rate"] < 1.0):
                raise ConfigError(f"event {name}: base_rate must be in (0, 1)")
            if spec["driver"] not in EVENT_DRIVERS:
                raise ConfigError(f"event {name}: unknown driver {spec['driver']!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["household_size_probs"] = list(self.household_size_probs)
        d["family_size_probs"] = list(self.family_size_probs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticPopulationConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        d = dict(d)
        for key in ("household_size_probs", "family_size_probs"):
            if key in d:
                d[key] = tuple(d[key])
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path: str) -> "SyntheticPopulationConfig":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


@dataclass
class NodeAttributes:
    """Per-node, per-year synthetic attributes plus static kinship pairs."""

    years: list
    household: np.ndarray  # (Y, n) int64
    workplace: np.ndarray  # (Y, n) int64, -1 = not employed
    school: np.ndarray  # (Y, n) int64, -1 = not enrolled
    coords: np.ndarray  # (Y, n, 2) float64
    income: np.ndarray  # (Y, n) float64, 0 = no income
    events: dict  # name -> (Y, n) uint8
    twin_pairs: np.ndarray  # (T, 2) int64
    sibling_pairs: np.ndarray  # (S, 2) int64

    @property
    def num_nodes(self) -> int:
        return self.household.shape[1]

    def year_index(self, year: int) -> int:
        return self.years.index(year)

    def save_jsonl(self, path: str) -> None:
        """One record per node per year."""
        from .fileio import atomic_write_text

        twin_of = {}
        for a, b in self.twin_pairs:
            twin_of[int(a)] = int(b)
            twin_of[int(b)] = int(a)
        sibs: dict[int, list] = {}
        for a, b in self.sibling_pairs:
            sibs.setdefault(int(a), []).append(int(b))
            sibs.setdefault(int(b), []).append(int(a))
        lines = []
        for yi, year in enumerate(self.years):
            for v in range(self.num_nodes):
                rec = {
                    "node": v,
                    "year": int(year),
                    "household": int(self.household[yi, v]),
                    "workplace": int(self.workplace[yi, v]),
                    "school": int(self.school[yi, v]),
                    "coords": [round(float(c), 6) for c in self.coords[yi, v]],
                    "income": round(float(self.income[yi, v]), 4),
                    "events": {k: int(a[yi, v]) for k, a in self.events.items()},
                    "twin": twin_of.get(v),
                    "siblings": sorted(sibs.get(v, [])),
                }
                lines.append(json.dumps(rec, sort_keys=True))
        atomic_write_text(path, "\n".join(lines) + "\n")

    @classmethod
    def load_jsonl(cls, path: str) -> "NodeAttributes":
        records = []
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
        years = sorted({r["year"] for r in records})
        n = max(r["node"] for r in records) + 1
        yi_of = {y: i for i, y in enumerate(years)}
        household = np.full((len(years), n), -1, dtype=np.int64)
        workplace = np.full((len(years), n), -1, dtype=np.int64)
        school = np.full((len(years), n), -1, dtype=np.int64)
        coords = np.zeros((len(years), n, 2))
        income = np.zeros((len(years), n))
        event_names = sorted(records[0]["events"])
        events = {k: np.zeros((len(years), n), dtype=np.uint8) for k in event_names}
        twin_pairs = set()
        sibling_pairs = set()
        for r in records:
            yi, v = yi_of[r["year"]], r["node"]
            household[yi, v] = r["household"]
            workplace[yi, v] = r["workplace"]
            school[yi, v] = r["school"]
            coords[yi, v] = r["coords"]
            income[yi, v] = r["income"]
            for k in event_names:
                events[k][yi, v] = r["events"][k]
            if r.get("twin") is not None:
                twin_pairs.add((min(v, r["twin"]), max(v, r["twin"])))
            for s in r.get("siblings", []):
                sibling_pairs.add((min(v, s), max(v, s)))
        return cls(
            years=years, household=household, workplace=workplace, school=school,
            coords=coords, income=income, events=events,
            twin_pairs=np.array(sorted(twin_pairs), dtype=np.int64).reshape(-1, 2),
            sibling_pairs=np.array(sorted(sibling_pairs), dtype=np.int64).reshape(-1, 2),
        )


def _partition_by_sizes(members: np.ndarray, sizes: np.ndarray,
                        min_size: int = 1) -> list[np.ndarray]:
    """Split `members` into consecutive groups of the given sizes.

    A short leftover tail is merged into the previous group so no group
    falls below min_size.
    """
    groups, pos = [], 0
    for s in sizes:
        if pos >= len(members):
            break
        groups.append(members[pos : pos + int(s)])
        pos += int(s)
    if pos < len(members):
        groups.append(members[pos:])
    if len(groups) >= 2 and len(groups[-1]) < min_size:
        groups[-2] = np.concatenate([groups[-2], groups[-1]])
        groups.pop()
    return groups


def _draw_sizes(rng, total: int, probs, min_size: int = 1) -> np.ndarray:
    """Draw group sizes from the distribution until they cover `total` slots."""
    p = np.asarray(probs, dtype=float)
    sizes_support = np.arange(1, len(p) + 1)
    keep = sizes_support >= min_size
    p = p[keep]
    sizes_support = sizes_support[keep]
    p = p / p.sum()
    out = []
    covered = 0
    while covered < total:
        s = int(rng.choice(sizes_support, p=p))
        out.append(s)
        covered += s
    return np.asarray(out, dtype=np.int64)


def _clique_edges(groups: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    us, vs = [], []
    for g in groups:
        if len(g) < 2:
            continue
        iu, iv = np.triu_indices(len(g), k=1)
        us.append(g[iu])
        vs.append(g[iv])
    if not us:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(us), np.concatenate(vs)


def _capped_proximity_edges(groups: list[np.ndarray], xy: np.ndarray, cap: int):
    """Within-group ties to the `cap` geographically closest co-members.

    Mutual nearest-neighbor rule: a tie exists only when each endpoint is
    among the other's cap closest, so degree never exceeds cap even after
    symmetrization.
    """
    us, vs = [], []
    for g in groups:
        m = len(g)
        if m < 2:
            continue
        if m - 1 <= cap:
            iu, iv = np.triu_indices(m, k=1)
            us.append(g[iu])
            vs.append(g[iv])
            continue
        pts = xy[g]
        d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        np.fill_diagonal(d2, np.inf)
        order = np.argsort(d2, axis=1, kind="stable")
        rank = np.empty_like(order)
        rows = np.arange(m)[:, None]
        rank[rows, order] = np.arange(m)[None, :]
        keep = (rank < cap) & (rank.T < cap)
        iu, iv = np.nonzero(np.triu(keep, k=1))
        us.append(g[iu])
        vs.append(g[iv])
    if not us:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(us), np.concatenate(vs)


def _calibrated_intercept(latent: np.ndarray, beta: float, base_rate: float) -> float:
    """Intercept c such that mean(sigmoid(c + beta*latent)) == base_rate."""
    lo, hi = -30.0, 30.0
    for _ in range(80):
        c = 0.5 * (lo + hi)
        mean = float(np.mean(1.0 / (1.0 + np.exp(-(c + beta * latent)))))
        if mean > base_rate:
            hi = c
        else:
            lo = c
    return 0.5 * (lo + hi)


class _LatentBank:
    """Stable per-group latent draws, keyed by group id; grows as ids appear."""

    def __init__(self, rng):
        self._rng = rng
        self._vals: dict[int, float] = {}

    def of(self, ids: np.ndarray) -> np.ndarray:
        for g in np.unique(ids[ids >= 0]):
            if int(g) not in self._vals:
                self._vals[int(g)] = float(self._rng.standard_normal())
        out = np.zeros(len(ids))
        mask = ids >= 0
        out[mask] = [self._vals[int(g)] for g in ids[mask]]
        return out


def generate_synthetic(config: SyntheticPopulationConfig, seed: int
                       ) -> tuple[list[MultiplexGraph], NodeAttributes]:
    """Generate num_years multiplex snapshots plus attributes.

    The family layer is static; household/neighbor/colleague layers churn
    via moves and job changes; classmate ties accumulate permanently.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    n = config.num_nodes
    Y = config.num_years
    years = [config.start_year + t for t in range(Y)]

    # families cover everyone; first two members act as parents, rest children
    fam_sizes = _draw_sizes(rng, n, config.family_size_probs, min_size=2)
    families = _partition_by_sizes(rng.permutation(n), fam_sizes, min_size=2)
    twin_pairs, sibling_pairs = [], []
    for fam in families:
        children = fam[2:]
        for i in range(len(children)):
            for j in range(i + 1, len(children)):
                sibling_pairs.append((children[i], children[j]))
        if len(children) >= 2 and rng.random() < config.twin_rate:
            twin_pairs.append((children[0], children[1]))
    fam_u, fam_v = _clique_edges(families)
    family_layer = build_csr_layer(n, fam_u, fam_v)

    # year-0 households; twins are co-resident at the start
    hh_sizes = _draw_sizes(rng, n, config.household_size_probs,
                           min_size=config.min_household_size)
    hh_groups = _partition_by_sizes(rng.permutation(n), hh_sizes,
                                    min_size=config.min_household_size)
    household = np.empty(n, dtype=np.int64)
    for h, g in enumerate(hh_groups):
        household[g] = h
    next_household_id = len(hh_groups)
    for a, b in twin_pairs:
        if household[a] != household[b]:
            mates = np.nonzero(household == household[a])[0]
            mates = mates[mates != a]
            if len(mates):
                household[mates[0]] = household[b]
            household[b] = household[a]
    hh_coords: dict[int, np.ndarray] = {
        h: c for h, c in enumerate(rng.uniform(0.0, 1.0, (next_household_id, 2)))
    }

    # year-0 jobs
    workers = rng.random(n) < config.employment_rate
    workplace = np.full(n, -1, dtype=np.int64)
    widx = np.nonzero(workers)[0]
    if len(widx) >= 2:
        wp_sizes = 2 + rng.poisson(max(config.workplace_size_mean - 2.0, 0.0),
                                   size=max(len(widx) // 2, 1))
        wp_groups = _partition_by_sizes(rng.permutation(widx), wp_sizes)
        for w, g in enumerate(wp_groups):
            workplace[g] = w
    num_workplaces = int(workplace.max()) + 1 if len(widx) else 0

    # year-0 school cohorts; twins co-enroll
    students = rng.random(n) < config.student_rate
    for a, b in twin_pairs:
        students[b] = students[a]
    school = np.full(n, -1, dtype=np.int64)
    next_cohort_id = 0

    def assign_cohorts(member_ids: np.ndarray) -> None:
        nonlocal next_cohort_id
        groups = _partition_by_sizes(
            rng.permutation(member_ids),
            np.full(max(len(member_ids) // config.cohort_size, 1),
                    config.cohort_size, dtype=np.int64))
        for g in groups:
            school[g] = next_cohort_id
            next_cohort_id += 1

    sidx = np.nonzero(students)[0]
    if len(sidx):
        assign_cohorts(sidx)
    for a, b in twin_pairs:
        school[b] = school[a]

    # planted signal: one latent per group id per purpose
    ev_latents = {name: _LatentBank(rng) for name in config.events}
    inc_latent_wp = _LatentBank(rng)
    inc_latent_sc = _LatentBank(rng)
    inc_latent_nb = _LatentBank(rng)
    node_noise = rng.standard_normal(n)
    B = config.neighborhood_blocks

    def block_of(xy: np.ndarray) -> np.ndarray:
        cells = np.clip((xy * B).astype(np.int64), 0, B - 1)
        return cells[:, 0] * B + cells[:, 1]

    graphs: list[MultiplexGraph] = []
    att_household = np.empty((Y, n), dtype=np.int64)
    att_workplace = np.empty((Y, n), dtype=np.int64)
    att_school = np.empty((Y, n), dtype=np.int64)
    att_coords = np.empty((Y, n, 2))
    att_income = np.empty((Y, n))
    att_events = {k: np.zeros((Y, n), dtype=np.uint8) for k in config.events}
    classmate_accum_u: list[np.ndarray] = []
    classmate_accum_v: list[np.ndarray] = []

    for t in range(Y):
        if t > 0:
            movers = np.nonzero(rng.random(n) < config.move_rate)[0]
            for v in movers:
                household[v] = next_household_id
                hh_coords[next_household_id] = rng.uniform(0.0, 1.0, 2)
                next_household_id += 1
            if num_workplaces > 1:
                changers = np.nonzero(workers & (rng.random(n) < config.job_change_rate))[0]
                for v in changers:
                    old = workplace[v]
                    new = int(rng.integers(num_workplaces - 1))
                    workplace[v] = new if new < old else new + 1
            if len(sidx):
                rotate = rng.random(len(sidx)) < config.school_rotation_rate
                if rotate.any():
                    assign_cohorts(sidx[rotate])
                for a, b in twin_pairs:
                    if students[a]:
                        school[b] = school[a]

        # household layer
        hh_ids, hh_inv = np.unique(household, return_inverse=True)
        hh_members = [np.nonzero(hh_inv == i)[0] for i in range(len(hh_ids))]
        hh_u, hh_v = _clique_edges(hh_members)
        household_layer = build_csr_layer(n, hh_u, hh_v)

        # neighbor layer: k nearest addresses, all residents linked
        addr = np.array([hh_coords[h] for h in hh_ids])
        coords_now = addr[hh_inv]
        k = min(config.neighbor_addresses, len(hh_ids) - 1)
        if k > 0:
            tree = cKDTree(addr)
            _, nearest = tree.query(addr, k=k + 1)
            nearest = np.atleast_2d(nearest)[:, 1:]
            nb_u, nb_v = [], []
            for hi in range(len(hh_ids)):
                a_members = hh_members[hi]
                for hj in nearest[hi]:
                    b_members = hh_members[int(hj)]
                    nb_u.append(np.repeat(a_members, len(b_members)))
                    nb_v.append(np.tile(b_members, len(a_members)))
            neighbor_layer = build_csr_layer(
                n, np.concatenate(nb_u), np.concatenate(nb_v))
        else:
            neighbor_layer = build_csr_layer(n, [], [])

        # colleague layer: within-workplace, nearest-by-residence cap
        wp_groups_now = [np.nonzero(workplace == w)[0]
                         for w in range(num_workplaces)]
        co_u, co_v = _capped_proximity_edges(wp_groups_now, coords_now,
                                             config.colleague_cap)
        colleague_layer = build_csr_layer(n, co_u, co_v)

        # classmate layer: current cohorts' cliques accumulate permanently
        if len(sidx):
            cur_cohorts = [np.nonzero(school == c)[0]
                           for c in np.unique(school[school >= 0])]
            cm_u, cm_v = _clique_edges(cur_cohorts)
            classmate_accum_u.append(cm_u)
            classmate_accum_v.append(cm_v)
        classmate_layer = build_csr_layer(
            n,
            np.concatenate(classmate_accum_u) if classmate_accum_u else [],
            np.concatenate(classmate_accum_v) if classmate_accum_v else [])

        layers = [None] * len(LAYER_NAMES)
        layers[LAYER_INDEX["family"]] = family_layer
        layers[LAYER_INDEX["household"]] = household_layer
        layers[LAYER_INDEX["neighbor"]] = neighbor_layer
        layers[LAYER_INDEX["colleague"]] = colleague_layer
        layers[LAYER_INDEX["classmate"]] = classmate_layer
        graphs.append(MultiplexGraph(n, layers, year=years[t]))

        # targets
        neighborhood = block_of(coords_now)
        driver_ids = {"household": household, "workplace": workplace,
                      "school": school, "neighborhood": neighborhood}
        for name, spec in config.events.items():
            z = ev_latents[name].of(driver_ids[spec["driver"]])
            c = _calibrated_intercept(z, config.signal_strength, spec["base_rate"])
            p = 1.0 / (1.0 + np.exp(-(c + config.signal_strength * z)))
            att_events[name][t] = (rng.random(n) < p).astype(np.uint8)

        zw = inc_latent_wp.of(workplace)
        zs = inc_latent_sc.of(school)
        znb = inc_latent_nb.of(neighborhood)
        log_inc = (config.income_base
                   + config.income_signal * (zw + 0.6 * zs + 0.8 * znb)
                   + config.income_noise * (node_noise + 0.3 * rng.standard_normal(n)))
        income = np.exp(log_inc * 0.3)  # keep magnitudes desk-friendly
        zero_mask = (~workers) & (rng.random(n) < config.zero_income_rate)
        income[zero_mask] = 0.0

        att_household[t] = household
        att_workplace[t] = workplace
        att_school[t] = school
        att_coords[t] = coords_now
        att_income[t] = income

    attrs = NodeAttributes(
        years=years,
        household=att_household,
        workplace=att_workplace,
        school=att_school,
        coords=att_coords,
        income=att_income,
        events=att_events,
        twin_pairs=np.array(sorted((min(a, b), max(a, b)) for a, b in twin_pairs),
                            dtype=np.int64).reshape(-1, 2),
        sibling_pairs=np.array(sorted((min(a, b), max(a, b)) for a, b in sibling_pairs),
                               dtype=np.int64).reshape(-1, 2),
    )
    return graphs, attrs
