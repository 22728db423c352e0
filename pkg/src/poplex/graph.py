"""Multiplex graph data model, edge-list I/O, and validation.

A MultiplexGraph is one yearly snapshot: five undirected relation layers
over a shared node index space, each layer stored as compressed sparse
adjacency (offsets + sorted neighbor array).  Graphs are immutable after
construction and safe to share across worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MalformedInputError

LAYER_NAMES = ("family", "household", "neighbor", "colleague", "classmate")
NUM_LAYERS = len(LAYER_NAMES)


@dataclass(frozen=True)
class CSRLayer:
    """One layer's undirected adjacency: neighbors[offsets[u]:offsets[u+1]]."""

    offsets: np.ndarray  # int64, length num_nodes + 1
    neighbors: np.ndarray  # int32, sorted ascending within each node

    def degree(self, u: int) -> int:
        return int(self.offsets[u + 1] - self.offsets[u])

    def neighbors_of(self, u: int) -> np.ndarray:
        return self.neighbors[self.offsets[u] : self.offsets[u + 1]]

    @property
    def num_edges(self) -> int:
        return len(self.neighbors) // 2


class MultiplexGraph:
    """Per-layer CSR adjacency over one shared node set, tagged with a year."""

    def __init__(self, num_nodes: int, layers: list[CSRLayer], year: int = 0,
                 layer_names: tuple[str, ...] = LAYER_NAMES):
        if len(layers) != len(layer_names):
            raise ValueError("one CSRLayer required per layer name")
        self.num_nodes = int(num_nodes)
        self.layers = list(layers)
        self.year = int(year)
        self.layer_names = tuple(layer_names)
        self._active = None
        self._flat = None

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def degree(self, layer: int, u: int) -> int:
        return self.layers[layer].degree(u)

    def neighbors(self, layer: int, u: int) -> np.ndarray:
        return self.layers[layer].neighbors_of(u)

    def active_layers(self, u: int) -> np.ndarray:
        """Indices of layers in which node u has at least one edge."""
        off, flat = self.active_layer_csr()
        return flat[off[u] : off[u + 1]]

    def active_layer_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR over nodes listing their active layers; cached."""
        if self._active is None:
            n = self.num_nodes
            has = np.zeros((len(self.layers), n), dtype=bool)
            for li, lay in enumerate(self.layers):
                has[li] = np.diff(lay.offsets) > 0
            counts = has.sum(axis=0).astype(np.int64)
            off = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(counts, out=off[1:])
            flat = np.empty(off[-1], dtype=np.int8)
            pos = off[:-1].copy()
            for li in range(len(self.layers)):
                idx = np.nonzero(has[li])[0]
                flat[pos[idx]] = li
                pos[idx] += 1
            self._active = (off, flat)
        return self._active

    def flattened(self) -> CSRLayer:
        """Union of all layers' edge sets as a single untyped layer; cached."""
        if self._flat is None:
            srcs, dsts = [], []
            for lay in self.layers:
                deg = np.diff(lay.offsets)
                srcs.append(np.repeat(np.arange(self.num_nodes, dtype=np.int32), deg))
                dsts.append(lay.neighbors)
            if srcs:
                u = np.concatenate(srcs)
                v = np.concatenate(dsts)
            else:
                u = v = np.empty(0, dtype=np.int32)
            self._flat = build_csr_layer(self.num_nodes, u, v, symmetrize=False)
        return self._flat

    def non_isolated_nodes(self) -> np.ndarray:
        off, _ = self.active_layer_csr()
        return np.nonzero(np.diff(off) > 0)[0].astype(np.int32)

    def fingerprint(self) -> str:
        from .fileio import content_fingerprint

        arrays = {}
        for li, lay in enumerate(self.layers):
            arrays[f"off{li}"] = lay.offsets
            arrays[f"nbr{li}"] = lay.neighbors
        return content_fingerprint(
            {"num_nodes": self.num_nodes, "year": self.year,
             "layer_names": list(self.layer_names)}, arrays)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MultiplexGraph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and self.year == other.year
            and self.layer_names == other.layer_names
            and all(
                np.array_equal(a.offsets, b.offsets)
                and np.array_equal(a.neighbors, b.neighbors)
                for a, b in zip(self.layers, other.layers)
            )
        )


def build_csr_layer(num_nodes: int, u: np.ndarray, v: np.ndarray,
                    symmetrize: bool = True) -> CSRLayer:
    """Build one layer from endpoint arrays, deduplicating edges.

    With symmetrize=True each input edge contributes both directions and
    repeated edges collapse; neighbor lists come out sorted ascending.
    """
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    keep = u != v  # self-pairs in generated endpoint arrays are dropped
    u, v = u[keep], v[keep]
    if symmetrize:
        src = np.concatenate([u, v])
        dst = np.concatenate([v, u])
    else:
        src, dst = u, v
    if len(src):
        key = src * num_nodes + dst
        key = np.unique(key)
        src = (key // num_nodes).astype(np.int64)
        dst = (key % num_nodes).astype(np.int32)
    else:
        dst = np.empty(0, dtype=np.int32)
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=num_nodes), out=offsets[1:])
    return CSRLayer(offsets=offsets, neighbors=dst)


def load_edge_list(path: str, num_nodes: int, num_layers: int = NUM_LAYERS,
                   year: int = 0) -> MultiplexGraph:
    """Parse a `u v layer_id` text file into a validated MultiplexGraph.

    Lines starting with `#` are comments.  Each undirected edge may appear
    once or twice (either orientation); duplicates collapse.  Self-loops,
    out-of-range node ids and unknown layer ids raise MalformedInputError
    with the offending line number.
    """
    us, vs, ls = [], [], []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise MalformedInputError(
                    f"{path}:{lineno}: expected 'u v layer_id', got {line!r}")
            try:
                a, b, l = int(parts[0]), int(parts[1]), int(parts[2])
            except ValueError as e:
                raise MalformedInputError(f"{path}:{lineno}: non-integer field") from e
            if a == b:
                raise MalformedInputError(f"{path}:{lineno}: self-loop on node {a}")
            if not (0 <= a < num_nodes and 0 <= b < num_nodes):
                raise MalformedInputError(
                    f"{path}:{lineno}: node id out of range [0, {num_nodes})")
            if not (0 <= l < num_layers):
                raise MalformedInputError(
                    f"{path}:{lineno}: unknown layer_id {l}")
            us.append(a)
            vs.append(b)
            ls.append(l)
    us = np.asarray(us, dtype=np.int64)
    vs = np.asarray(vs, dtype=np.int64)
    ls = np.asarray(ls, dtype=np.int64)
    names = LAYER_NAMES if num_layers == NUM_LAYERS else tuple(
        f"layer{i}" for i in range(num_layers))
    layers = []
    for li in range(num_layers):
        m = ls == li
        layers.append(build_csr_layer(num_nodes, us[m], vs[m]))
    return MultiplexGraph(num_nodes, layers, year=year, layer_names=names)


def save_edge_list(graph: MultiplexGraph, path: str) -> None:
    """Write each undirected edge once (u < v), layers in order."""
    from .fileio import atomic_write_text

    lines = [f"# num_nodes={graph.num_nodes} year={graph.year}"]
    for li, lay in enumerate(graph.layers):
        deg = np.diff(lay.offsets)
        src = np.repeat(np.arange(graph.num_nodes, dtype=np.int64), deg)
        dst = lay.neighbors
        m = src < dst
        for a, b in zip(src[m], dst[m]):
            lines.append(f"{a} {b} {li}")
    atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass
class ValidationReport:
    valid: bool
    problems: list[str]
    num_nodes: int
    per_layer: list[dict]  # name, nodes_with_edges, num_edges, mean_degree
    mean_degree: float  # undirected mean over all nodes, all layers

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "problems": self.problems,
            "num_nodes": self.num_nodes,
            "per_layer": self.per_layer,
            "mean_degree": self.mean_degree,
        }


def validate(graph: MultiplexGraph) -> ValidationReport:
    """Check all structural invariants; violations become report entries."""
    problems: list[str] = []
    per_layer = []
    total_half_edges = 0
    n = graph.num_nodes
    for li, lay in enumerate(graph.layers):
        name = graph.layer_names[li]
        off, nbr = lay.offsets, lay.neighbors
        if len(off) != n + 1:
            problems.append(f"{name}: offsets length {len(off)} != num_nodes+1")
            continue
        if np.any(np.diff(off) < 0):
            problems.append(f"{name}: offsets not monotone non-decreasing")
        if off[-1] != len(nbr):
            problems.append(f"{name}: final offset {off[-1]} != neighbor count {len(nbr)}")
        if len(nbr) and (nbr.min() < 0 or nbr.max() >= n):
            problems.append(f"{name}: neighbor id out of range")
        deg = np.diff(off)
        src = np.repeat(np.arange(n, dtype=np.int64), deg)
        if np.any(src == nbr):
            bad = int(src[src == nbr][0])
            problems.append(f"{name}: self-loop on node {bad}")
        # sortedness + duplicates within each node's slice
        inner = np.ones(len(nbr), dtype=bool)
        inner[off[:-1][deg > 0]] = False  # first element of each slice
        if np.any(nbr[inner] <= nbr[np.nonzero(inner)[0] - 1]):
            i = np.nonzero(inner & (nbr <= np.roll(nbr, 1)))[0][0]
            problems.append(
                f"{name}: neighbors of node {int(src[i])} not strictly sorted")
        # symmetry: the set of (u,v) must equal the set of (v,u)
        fwd = src * n + nbr
        rev = nbr.astype(np.int64) * n + src
        missing = np.setdiff1d(fwd, rev, assume_unique=False)
        if len(missing):
            a, b = divmod(int(missing[0]), n)
            problems.append(f"{name}: asymmetric edge ({a}, {b}) has no reverse")
        nodes_with_edges = int((deg > 0).sum())
        per_layer.append({
            "name": name,
            "nodes_with_edges": nodes_with_edges,
            "num_edges": len(nbr) // 2,
            "mean_degree": float(len(nbr) / n) if n else 0.0,
        })
        total_half_edges += len(nbr)
    mean_degree = float(total_half_edges / n) if n else 0.0
    return ValidationReport(
        valid=not problems,
        problems=problems,
        num_nodes=n,
        per_layer=per_layer,
        mean_degree=mean_degree,
    )
