"""Skip-gram negative-sampling training over walk corpora.

Person and hub tokens share one vocabulary and are trained identically.
The canonical embedding is the input-vector matrix.  Training with
workers=1 is bit-reproducible for a fixed seed; multi-worker training
uses unsynchronized shared updates and accepts nondeterminism.
"""

from __future__ import annotations

import base64
import json
import struct
import threading
from dataclasses import dataclass, asdict

import numpy as np

from . import _backend
from .errors import ConfigError, FormatError
from .fileio import atomic_write_bytes, atomic_write_text, content_fingerprint
from .rng import uniform_array
from .walks import WalkCorpus

EMBEDDING_MAGIC = b"PLXEMB01"
_INIT_TAG = 0x494E4954


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 128
    window: int = 5  # context radius; per-center radius drawn uniform in [1, window]
    negatives: int = 5
    epochs: int = 50
    learning_rate: float = 0.025  # decays linearly to min_learning_rate
    min_learning_rate: float = 1e-4
    subsample_threshold: float = 0.0  # 0 disables frequency subsampling
    unigram_power: float = 0.75
    seed: int = 0

    def validate(self) -> None:
        if self.dim < 1:
            raise ConfigError("dim must be positive")
        if self.window < 1:
            raise ConfigError("window must be at least 1")
        if self.negatives < 1:
            raise ConfigError("negatives must be at least 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.subsample_threshold < 0:
            raise ConfigError("subsample_threshold must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        cfg = cls(**d)
        cfg.validate()
        return cfg


class EmbeddingMatrix:
    """Vocabulary-indexed dense vectors; input vectors are canonical."""

    def __init__(self, vectors: np.ndarray, metadata: dict,
                 context_vectors: np.ndarray | None = None):
        self.vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        self.context_vectors = context_vectors
        self.metadata = dict(metadata)
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding contains non-finite values")

    @property
    def vocab_size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def num_nodes(self) -> int:
        return int(self.metadata.get("num_nodes", self.vocab_size))

    @property
    def year(self) -> int | None:
        return self.metadata.get("year")

    def trained_mask(self) -> np.ndarray:
        """Boolean mask of tokens that occurred in the training corpus."""
        b64 = self.metadata.get("trained_mask_b64")
        if b64 is None:
            return np.ones(self.vocab_size, dtype=bool)
        bits = np.frombuffer(base64.b64decode(b64), dtype=np.uint8)
        return np.unpackbits(bits, count=self.vocab_size).astype(bool)

    def person_vectors(self) -> np.ndarray:
        return self.vectors[: self.num_nodes]

    def fingerprint(self) -> str:
        return content_fingerprint(self.metadata, {"vectors": self.vectors})

    def save(self, path: str) -> None:
        """magic, u32 vocab, u32 dim, u32 meta length, meta JSON, f32 matrix."""
        meta_bytes = json.dumps(self.metadata, sort_keys=True).encode("utf-8")
        parts = [
            EMBEDDING_MAGIC,
            struct.pack("<III", self.vocab_size, self.dim, len(meta_bytes)),
            meta_bytes,
            self.vectors.tobytes(),
        ]
        atomic_write_bytes(path, b"".join(parts))

    @classmethod
    def load(cls, path: str) -> "EmbeddingMatrix":
        with open(path, "rb") as f:
            magic = f.read(8)
            if magic != EMBEDDING_MAGIC:
                raise FormatError(f"{path}: bad embedding magic {magic!r}")
            vocab, dim, meta_len = struct.unpack("<III", f.read(12))
            meta = json.loads(f.read(meta_len).decode("utf-8"))
            buf = f.read(vocab * dim * 4)
            if len(buf) != vocab * dim * 4:
                raise FormatError(f"{path}: truncated embedding matrix")
        vecs = np.frombuffer(buf, dtype=np.float32).reshape(vocab, dim).copy()
        return cls(vecs, meta)

    def save_text(self, path: str) -> None:
        """word2vec-style text export: `token_id v1 v2 ... vd` per line."""
        lines = [f"{self.vocab_size} {self.dim}"]
        for i in range(self.vocab_size):
            vals = " ".join(repr(float(x)) for x in self.vectors[i])
            lines.append(f"{i} {vals}")
        atomic_write_text(path, "\n".join(lines) + "\n")


def build_unigram_table(corpus: WalkCorpus, power: float = 0.75) -> np.ndarray:
    """Sampling distribution proportional to count(token)^power."""
    counts = corpus.token_counts().astype(np.float64)
    if counts.sum() == 0:
        raise ValueError("corpus is empty")
    weights = np.zeros_like(counts)
    nz = counts > 0
    weights[nz] = counts[nz] ** power
    return weights / weights.sum()


def build_alias_table(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias method; O(1) sampling, zero-probability entries never drawn."""
    K = len(probs)
    prob = np.zeros(K, dtype=np.float64)
    alias = np.zeros(K, dtype=np.int32)
    scaled = np.asarray(probs, dtype=np.float64) * K
    small = [i for i in range(K) if scaled[i] < 1.0]
    large = [i for i in range(K) if scaled[i] >= 1.0]
    scaled = scaled.copy()
    while small and large:
        s = small.pop()
        l = large.pop()
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = scaled[l] - (1.0 - scaled[s])
        if scaled[l] < 1.0:
            small.append(l)
        else:
            large.append(l)
    for i in large:
        prob[i] = 1.0
    for i in small:
        prob[i] = 1.0  # float leftovers; mass error is O(eps)
    return prob, alias


def _keep_probabilities(counts: np.ndarray, threshold: float) -> np.ndarray:
    """word2vec-style subsampling: keep token with prob sqrt(t/f) + t/f."""
    total = counts.sum()
    freq = counts / max(total, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        keep = np.sqrt(threshold / freq) + threshold / freq
    keep[~np.isfinite(keep)] = 1.0
    return np.minimum(keep, 1.0)


def init_vectors(vocab_size: int, dim: int, seed: int) -> np.ndarray:
    """word2vec init: uniform in (-0.5/dim, 0.5/dim), counter-based stream."""
    u = uniform_array(seed, vocab_size * dim, a=_INIT_TAG)
    return ((u - 0.5) / dim).astype(np.float32).reshape(vocab_size, dim)


def train(corpus: WalkCorpus, config: TrainConfig, workers: int = 1) -> EmbeddingMatrix:
    """Train SGNS over the corpus; returns input vectors as the embedding.

    workers=1 (default) is the strict deterministic mode.  With more
    workers, walks are sharded and updates race benignly on shared
    parameters; the returned matrix is a snapshot after all workers join.
    """
    config.validate()
    if len(corpus) == 0 or corpus.token_counts().sum() == 0:
        raise ValueError("cannot train on an empty corpus")
    if workers < 1:
        raise ConfigError("workers must be at least 1")
    V = corpus.vocab_size
    unigram = build_unigram_table(corpus, config.unigram_power)
    alias_prob, alias_idx = build_alias_table(unigram)
    syn0 = init_vectors(V, config.dim, config.seed)
    syn1 = np.zeros((V, config.dim), dtype=np.float32)
    keep_prob = None
    if config.subsample_threshold > 0:
        keep_prob = _keep_probabilities(corpus.token_counts(), config.subsample_threshold)

    total_tokens = int(len(corpus.tokens))
    n_walks = corpus.num_walks
    bounds = np.linspace(0, n_walks, workers + 1).astype(np.int64)
    loss_curve = []
    kernel = _backend.sgns_kernel.sgns_epoch
    for epoch in range(config.epochs):
        progress_base = epoch / config.epochs
        results = [None] * workers
        if workers == 1:
            results[0] = kernel(
                corpus.tokens, corpus.offsets, 0, n_walks, syn0, syn1,
                alias_prob, alias_idx, config.window, config.negatives,
                config.learning_rate, config.min_learning_rate,
                progress_base, 1.0 / (config.epochs * total_tokens),
                keep_prob, config.seed, epoch, 0)
        else:
            def run(w):
                lo, hi = int(bounds[w]), int(bounds[w + 1])
                shard_tokens = int(corpus.offsets[hi] - corpus.offsets[lo])
                results[w] = kernel(
                    corpus.tokens, corpus.offsets, lo, hi, syn0, syn1,
                    alias_prob, alias_idx, config.window, config.negatives,
                    config.learning_rate, config.min_learning_rate,
                    progress_base, 1.0 / (config.epochs * max(shard_tokens, 1)),
                    keep_prob, config.seed, epoch, w)

            threads = [threading.Thread(target=run, args=(w,)) for w in range(workers)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        loss = sum(r[0] for r in results)
        pairs = sum(r[1] for r in results)
        loss_curve.append(loss / max(pairs, 1))

    metadata = {
        "config": config.to_dict(),
        "corpus_fingerprint": corpus.fingerprint(),
        "year": corpus.year,
        "num_nodes": corpus.num_nodes,
        "num_layers": corpus.num_layers,
        "mode": corpus.config.mode,
        "loss_curve": [round(x, 6) for x in loss_curve],
        "trained_mask_b64": base64.b64encode(
            np.packbits((corpus.token_counts() > 0).astype(np.uint8)).tobytes()
        ).decode("ascii"),
        "workers": workers,
    }
    return EmbeddingMatrix(syn0, metadata, context_vectors=syn1)


def cosine(emb: EmbeddingMatrix, a: int, b: int) -> float:
    """Cosine similarity of two tokens' input vectors."""
    va, vb = emb.vectors[a], emb.vectors[b]
    na, nb = float(np.linalg.norm(va)), float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValueError(f"cosine undefined: token {a if na == 0 else b} has zero norm")
    return float(np.dot(va, vb) / (na * nb))


def pair_loss(u: np.ndarray, v_pos: np.ndarray, v_negs: np.ndarray) -> float:
    """SGNS local loss for one (center, context, negatives) update tuple."""
    def softplus(x):
        return np.where(x > 0, x + np.log1p(np.exp(-np.abs(x))), np.log1p(np.exp(x)))

    f_pos = float(u @ v_pos)
    f_neg = v_negs @ u if len(v_negs) else np.zeros(0)
    return float(softplus(-f_pos) + softplus(f_neg).sum())


def pair_gradients(u: np.ndarray, v_pos: np.ndarray, v_negs: np.ndarray):
    """Analytic gradients of pair_loss wrt (u, v_pos, each v_neg)."""
    def sigmoid(x):
        return np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)),
                        np.exp(x) / (1.0 + np.exp(x)))

    s_pos = float(sigmoid(np.array(u @ v_pos)))
    g_u = (s_pos - 1.0) * v_pos
    g_pos = (s_pos - 1.0) * u
    g_negs = np.zeros_like(v_negs)
    if len(v_negs):
        s_neg = sigmoid(v_negs @ u)
        g_u = g_u + s_neg @ v_negs
        g_negs = s_neg[:, None] * u[None, :]
    return g_u, g_pos, g_negs
