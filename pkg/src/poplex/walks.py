"""Random-walk corpus generation in three modes.

flatten: classic uniform walks over the union of all layers' edges.
blind:   layer-persistent walks emitting person tokens only.
aware:   layer-persistent walks with the layer's hub token interleaved
         between consecutive person tokens.

In blind/aware modes the next edge stays in the current layer with
probability p; otherwise the layer is resampled uniformly among the
layers in which the current node has an edge (possibly redrawing the
current one).  The first layer of a walk is drawn uniformly over the
node's active layers.  A node with a current layer gone dead (no
neighbor) resamples instead of terminating; walks truncate only when a
node has no edge in any layer.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from . import _backend
from .errors import ConfigError, FormatError
from .fileio import atomic_write_bytes, content_fingerprint
from .graph import MultiplexGraph
from .rng import Stream

MODES = ("flatten", "blind", "aware")
CORPUS_MAGIC = b"PLXCORP1"


@dataclass(frozen=True)
class WalkConfig:
    mode: str = "aware"
    persistence_p: float = 0.8
    walk_length: int = 40  # person tokens per walk
    walks_per_node: int = 4
    seed: int = 0

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (0.0 <= self.persistence_p <= 1.0):
            raise ConfigError("persistence_p must be in [0, 1]")
        if self.walk_length < 2:
            raise ConfigError("walk_length must be at least 2")
        if self.walks_per_node < 1:
            raise ConfigError("walks_per_node must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "WalkConfig":
        cfg = cls(**d)
        cfg.validate()
        return cfg


class WalkCorpus:
    """Token sequences over the vocabulary [person 0..n) ++ [hub n..n+layers)."""

    def __init__(self, tokens: np.ndarray, offsets: np.ndarray, num_nodes: int,
                 num_layers: int, config: WalkConfig, year: int):
        self.tokens = np.ascontiguousarray(tokens, dtype=np.uint32)
        self.offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        self.num_nodes = int(num_nodes)
        self.num_layers = int(num_layers)
        self.config = config
        self.year = int(year)

    @property
    def vocab_size(self) -> int:
        return self.num_nodes + self.num_layers

    @property
    def hub_base(self) -> int:
        return self.num_nodes

    @property
    def num_walks(self) -> int:
        return len(self.offsets) - 1

    def walk(self, i: int) -> np.ndarray:
        return self.tokens[self.offsets[i] : self.offsets[i + 1]]

    def __len__(self) -> int:
        return self.num_walks

    def __iter__(self):
        for i in range(self.num_walks):
            yield self.walk(i)

    def token_counts(self) -> np.ndarray:
        return np.bincount(self.tokens, minlength=self.vocab_size).astype(np.int64)

    def fingerprint(self) -> str:
        return content_fingerprint(
            {"num_nodes": self.num_nodes, "num_layers": self.num_layers,
             "config": self.config.to_dict(), "year": self.year},
            {"tokens": self.tokens, "offsets": self.offsets})

    def save(self, path: str) -> None:
        """magic, metadata JSON, then length-prefixed u32 token sequences."""
        meta = {
            "config": self.config.to_dict(),
            "num_nodes": self.num_nodes,
            "num_layers": self.num_layers,
            "year": self.year,
            "num_walks": self.num_walks,
        }
        meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
        parts = [CORPUS_MAGIC, struct.pack("<I", len(meta_bytes)), meta_bytes]
        lengths = np.diff(self.offsets).astype(np.uint32)
        for i in range(self.num_walks):
            parts.append(struct.pack("<I", lengths[i]))
            parts.append(self.walk(i).tobytes())
        atomic_write_bytes(path, b"".join(parts))

    @classmethod
    def load(cls, path: str) -> "WalkCorpus":
        with open(path, "rb") as f:
            magic = f.read(8)
            if magic != CORPUS_MAGIC:
                raise FormatError(f"{path}: bad corpus magic {magic!r}")
            (meta_len,) = struct.unpack("<I", f.read(4))
            meta = json.loads(f.read(meta_len).decode("utf-8"))
            lengths = []
            chunks = []
            for _ in range(meta["num_walks"]):
                raw = f.read(4)
                if len(raw) < 4:
                    raise FormatError(f"{path}: truncated corpus")
                (ln,) = struct.unpack("<I", raw)
                buf = f.read(4 * ln)
                if len(buf) < 4 * ln:
                    raise FormatError(f"{path}: truncated walk payload")
                lengths.append(ln)
                chunks.append(buf)
        tokens = np.frombuffer(b"".join(chunks), dtype=np.uint32).copy()
        offsets = np.zeros(len(lengths) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        return cls(tokens, offsets, meta["num_nodes"], meta["num_layers"],
                   WalkConfig.from_dict(meta["config"]), meta["year"])


def _stacked_layers(graph: MultiplexGraph, flatten: bool):
    """Pack per-layer CSR into the flat arrays the kernels consume."""
    layers = [graph.flattened()] if flatten else graph.layers
    n = graph.num_nodes
    offsets = np.empty((len(layers), n + 1), dtype=np.int64)
    bases = np.zeros(len(layers), dtype=np.int64)
    chunks = []
    pos = 0
    for li, lay in enumerate(layers):
        offsets[li] = lay.offsets
        bases[li] = pos
        chunks.append(lay.neighbors)
        pos += len(lay.neighbors)
    neighbors = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int32)
    if flatten:
        deg = np.diff(layers[0].offsets)
        counts = (deg > 0).astype(np.int64)
        act_off = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=act_off[1:])
        act_flat = np.zeros(act_off[-1], dtype=np.int8)
    else:
        act_off, act_flat = graph.active_layer_csr()
    return offsets, np.ascontiguousarray(neighbors, dtype=np.int32), bases, act_off, act_flat


def generate_walks(graph: MultiplexGraph, config: WalkConfig,
                   workers: int = 1) -> WalkCorpus:
    """walks_per_node walks from every non-isolated node, canonical order.

    Walk (v, j) consumes the stream keyed by (seed, v, j), so workers only
    split the start-node range into disjoint output slots: output bytes are
    identical for any worker count and backend.
    """
    config.validate()
    if workers < 1:
        raise ConfigError("workers must be at least 1")
    flatten = config.mode == "flatten"
    aware = config.mode == "aware"
    offs, nbrs, bases, act_off, act_flat = _stacked_layers(graph, flatten)
    starts = graph.non_isolated_nodes()
    n_walks = len(starts) * config.walks_per_node
    tok_len = 2 * config.walk_length - 1 if aware else config.walk_length
    out_tokens = np.zeros((n_walks, tok_len), dtype=np.uint32)
    out_lengths = np.zeros(n_walks, dtype=np.int32)
    hub_base = graph.num_nodes if aware else -1

    def run_block(lo: int, hi: int) -> None:
        _backend.walk_kernel.generate_walk_block(
            offs, nbrs, bases, act_off, act_flat, starts[lo:hi],
            config.walks_per_node, config.walk_length, config.persistence_p,
            config.seed, hub_base,
            out_tokens[lo * config.walks_per_node : hi * config.walks_per_node],
            out_lengths[lo * config.walks_per_node : hi * config.walks_per_node])

    if n_walks and workers == 1:
        run_block(0, len(starts))
    elif n_walks:
        import threading

        bounds = np.linspace(0, len(starts), workers + 1).astype(int)
        threads = [threading.Thread(target=run_block, args=(bounds[w], bounds[w + 1]))
                   for w in range(workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    full = int(out_lengths.min()) == tok_len if n_walks else True
    if full:
        tokens = out_tokens.reshape(-1)
        offsets = np.arange(n_walks + 1, dtype=np.int64) * tok_len
    else:
        offsets = np.zeros(n_walks + 1, dtype=np.int64)
        np.cumsum(out_lengths, out=offsets[1:])
        tokens = np.concatenate([out_tokens[i, : out_lengths[i]] for i in range(n_walks)])
    return WalkCorpus(tokens, offsets, graph.num_nodes, graph.num_layers,
                      config, graph.year)


def next_step(graph: MultiplexGraph, current_node: int, current_layer: int | None,
              p: float, rng: Stream):
    """One persistence step; returns (next_node, used_layer) or None at a dead end.

    Reference implementation of the walk rule; the kernels follow the same
    draw order.
    """
    active = graph.active_layers(current_node)
    if len(active) == 0:
        return None
    if (current_layer is not None and current_layer >= 0
            and graph.degree(current_layer, current_node) > 0):
        if rng.next_f64() < p:
            used = int(current_layer)
        else:
            used = int(active[rng.next_below(len(active))])
    else:
        used = int(active[rng.next_below(len(active))])
    nbrs = graph.neighbors(used, current_node)
    nxt = int(nbrs[rng.next_below(len(nbrs))])
    return nxt, used


def persistence_stats(corpus: WalkCorpus, graph: MultiplexGraph | None = None) -> dict:
    """Per-layer frequency that consecutive transitions stay in the layer.

    Requires an aware-mode corpus (hub tokens reveal the layer sequence).
    When the source graph is given, each layer also gets the theoretical
    stay probability implied by p and the deciding node's active-layer
    count, averaged over observed transitions.
    """
    if corpus.config.mode != "aware":
        raise ConfigError("persistence stats require an aware-mode corpus")
    L = corpus.num_layers
    hub_base = corpus.hub_base
    p = corpus.config.persistence_p
    stay = np.zeros(L, dtype=np.int64)
    total = np.zeros(L, dtype=np.int64)
    theory_sum = np.zeros(L, dtype=np.float64)
    act_counts = None
    if graph is not None:
        off, _ = graph.active_layer_csr()
        act_counts = np.diff(off)
    for i in range(corpus.num_walks):
        walk = corpus.walk(i)
        hubs = walk[1::2].astype(np.int64) - hub_base
        if len(hubs) < 2:
            continue
        cur, nxt = hubs[:-1], hubs[1:]
        np.add.at(total, cur, 1)
        np.add.at(stay, cur[cur == nxt], 1)
        if act_counts is not None:
            mids = walk[2:-1:2].astype(np.int64)  # deciding person nodes
            np.add.at(theory_sum, cur, p + (1.0 - p) / act_counts[mids])
    layers = []
    for l in range(L):
        entry = {
            "layer": l,
            "transitions": int(total[l]),
            "stay_frequency": float(stay[l] / total[l]) if total[l] else None,
        }
        if act_counts is not None:
            entry["theoretical_stay"] = (
                float(theory_sum[l] / total[l]) if total[l] else None)
        layers.append(entry)
    grand_total = int(total.sum())
    out = {
        "persistence_p": p,
        "layers": layers,
        "overall_stay_frequency": float(stay.sum() / grand_total) if grand_total else None,
    }
    if act_counts is not None and grand_total:
        out["overall_theoretical_stay"] = float(theory_sum.sum() / grand_total)
    return out
