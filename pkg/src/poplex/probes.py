"""Downstream probe evaluation.

Tasks come from the synthetic attributes: a twin-pair control task,
binary event tasks built by sampling that preserves population base
rates, and a regression task on log income (non-positive incomes
excluded).  Probes are 2-layer ReLU networks trained with Adam over a
small (batch size, learning rate) grid, early stopping (patience 2) on
the validation metric, inverse-frequency class weights for binary
targets, and MSE for regression.  Inputs (and regression targets) are
standardized with train-split statistics.  Binary tasks report AUC;
regression reports R^2.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .fileio import atomic_write_text
from .sgns import EmbeddingMatrix
from .synth import NodeAttributes

BATCH_GRID = (16, 128)
LR_GRID = (1e-3, 5e-4, 5e-5)
MAX_EPOCHS = 20
PATIENCE = 2

SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST = 0, 1, 2
_SPLIT_FRACTIONS = (0.7, 0.1, 0.2)


def _softplus(t: np.ndarray) -> np.ndarray:
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def auc(scores, labels) -> float:
    """Rank-based (Mann-Whitney) AUC with midrank tie handling."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def r2(preds, targets) -> float:
    """Coefficient of determination, 1 - SS_res/SS_tot."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(targets) < 2:
        raise ValueError("R^2 needs at least 2 targets")
    ss_tot = float(((targets - targets.mean()) ** 2).sum())
    if ss_tot == 0:
        raise ValueError("R^2 undefined: zero target variance")
    ss_res = float(((targets - preds) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def make_splits(m: int, seed: int) -> np.ndarray:
    """70/10/20 labels, disjoint and exhaustive, proportions within one
    example of exact."""
    n_train = int(round(_SPLIT_FRACTIONS[0] * m))
    n_val = int(round(_SPLIT_FRACTIONS[1] * m))
    split = np.full(m, SPLIT_TEST, dtype=np.int8)
    order = np.random.default_rng(seed).permutation(m)
    split[order[:n_train]] = SPLIT_TRAIN
    split[order[n_train : n_train + n_val]] = SPLIT_VAL
    return split


@dataclass
class TaskDataset:
    name: str
    kind: str  # "binary" | "regression" | "pair_binary"
    items: np.ndarray  # (m,) node ids or (m, 2) pairs
    targets: np.ndarray  # (m,)
    split: np.ndarray  # (m,) in {0 train, 1 val, 2 test}
    base_rate: float | None = None
    year: int | None = None

    def __len__(self) -> int:
        return len(self.targets)

    def mask(self, which: int) -> np.ndarray:
        return self.split == which

    def to_records(self) -> list[dict]:
        recs = []
        for i in range(len(self)):
            item = self.items[i]
            recs.append({
                "task": self.name, "kind": self.kind,
                "item": item.tolist() if self.kind == "pair_binary" else int(item),
                "target": float(self.targets[i]),
                "split": ["train", "val", "test"][self.split[i]],
                "year": self.year,
            })
        return recs

    @classmethod
    def from_records(cls, name: str, recs: list[dict]) -> "TaskDataset":
        kind = recs[0]["kind"]
        split_code = {"train": SPLIT_TRAIN, "val": SPLIT_VAL, "test": SPLIT_TEST}
        items = np.asarray([r["item"] for r in recs], dtype=np.int64)
        targets = np.asarray([r["target"] for r in recs], dtype=np.float64)
        split = np.asarray([split_code[r["split"]] for r in recs], dtype=np.int8)
        base = None
        if kind.endswith("binary"):
            base = float(targets.mean())
        return cls(name, kind, items, targets, split, base, recs[0].get("year"))


def save_tasks(tasks: list[TaskDataset], path: str) -> None:
    lines = [json.dumps(rec, sort_keys=True)
             for t in tasks for rec in t.to_records()]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_tasks(path: str) -> list[TaskDataset]:
    by_name: dict[str, list[dict]] = {}
    order = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec["task"] not in by_name:
                order.append(rec["task"])
            by_name.setdefault(rec["task"], []).append(rec)
    return [TaskDataset.from_records(name, by_name[name]) for name in order]


def build_tasks(attrs: NodeAttributes, year: int | None = None, seed: int = 0,
                task_size: int | None = None) -> list[TaskDataset]:
    """Materialize the synthetic task suite for one year.

    Twin pairs become a balanced pair task against random unrelated
    negatives; each event flag becomes a single-node binary task sampled
    uniformly (base rates preserved); positive incomes become a
    log-regression task.
    """
    rng = np.random.default_rng(seed)
    if year is None:
        year = attrs.years[-1]
    yi = attrs.year_index(year)
    n = attrs.num_nodes
    tasks: list[TaskDataset] = []

    # twin-analog pair task
    pos = attrs.twin_pairs
    if len(pos) == 0:
        warnings.warn("no twin pairs available; twin task skipped")
    else:
        related = {(int(a), int(b)) for a, b in attrs.twin_pairs}
        related |= {(int(a), int(b)) for a, b in attrs.sibling_pairs}
        negs = []
        while len(negs) < len(pos):
            a, b = int(rng.integers(n)), int(rng.integers(n))
            if a == b:
                continue
            key = (min(a, b), max(a, b))
            if key in related:
                continue
            negs.append(key)
        items = np.vstack([pos, np.asarray(negs, dtype=np.int64)])
        targets = np.concatenate([np.ones(len(pos)), np.zeros(len(negs))])
        split = make_splits(len(items), seed=seed + 1)
        tasks.append(TaskDataset("twin", "pair_binary", items, targets, split,
                                 base_rate=0.5, year=year))

    # binary event tasks, population base rates preserved by uniform sampling
    for ti, (name, flags) in enumerate(sorted(attrs.events.items())):
        y = flags[yi].astype(np.float64)
        ids = np.arange(n, dtype=np.int64)
        if task_size is not None and task_size < n:
            ids = rng.choice(n, size=task_size, replace=False).astype(np.int64)
        yy = y[ids]
        if yy.sum() == 0 or yy.sum() == len(yy):
            warnings.warn(f"event task {name!r} has a single class; skipped")
            continue
        split = make_splits(len(ids), seed=seed + 2 + ti)
        tasks.append(TaskDataset(name, "binary", ids, yy, split,
                                 base_rate=float(y.mean()), year=year))

    # income regression on log-transformed positive values
    inc = attrs.income[yi]
    ids = np.nonzero(inc > 0)[0].astype(np.int64)
    if len(ids) >= 10:
        targets = np.log(inc[ids])
        split = make_splits(len(ids), seed=seed + 17)
        tasks.append(TaskDataset("income_log", "regression", ids, targets, split,
                                 base_rate=None, year=year))
    else:
        warnings.warn("too few positive incomes; regression task skipped")
    return tasks


def task_features(task: TaskDataset, emb: EmbeddingMatrix) -> np.ndarray:
    """Single-node tasks use the node vector; pair tasks concatenate both."""
    V = emb.vectors
    if task.kind == "pair_binary":
        return np.hstack([V[task.items[:, 0]], V[task.items[:, 1]]]).astype(np.float64)
    return V[task.items].astype(np.float64)


class ProbeModel:
    """2-layer feed-forward network: ReLU hidden layer, scalar output.

    Fitting standardizes inputs (and regression targets) with train-split
    statistics; predict() applies the stored transforms, while forward()
    and loss_and_grads() work in the standardized space.
    """

    def __init__(self, d_in: int, hidden: int, kind: str, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.W1 = rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_in, hidden))
        self.b1 = np.zeros(hidden)
        self.W2 = rng.normal(0.0, np.sqrt(1.0 / hidden), size=(hidden, 1))
        self.b2 = np.zeros(1)
        self.kind = kind
        self.in_shift = np.zeros(d_in)
        self.in_scale = np.ones(d_in)
        self.out_shift = 0.0
        self.out_scale = 1.0

    PARAMS = ("W1", "b1", "W2", "b2")

    def forward(self, X: np.ndarray):
        pre = X @ self.W1 + self.b1
        H = np.maximum(pre, 0.0)
        z = (H @ self.W2).ravel() + self.b2[0]
        return z, (X, pre, H)

    def predict(self, X: np.ndarray) -> np.ndarray:
        Xs = (np.asarray(X, dtype=np.float64) - self.in_shift) / self.in_scale
        return self.forward(Xs)[0] * self.out_scale + self.out_shift

    def loss_and_grads(self, X: np.ndarray, y: np.ndarray,
                       weights: np.ndarray | None = None):
        """Mean weighted-BCE (binary) or MSE (regression) plus gradients."""
        z, (X, pre, H) = self.forward(X)
        m = len(y)
        if self.kind == "regression":
            diff = z - y
            loss = float((diff**2).mean())
            dz = 2.0 * diff / m
        else:
            w = weights if weights is not None else np.ones(m)
            # stable per-sample BCE: y*softplus(-z) + (1-y)*softplus(z)
            loss = float((w * (y * _softplus(-z) + (1 - y) * _softplus(z))).mean())
            sig = np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)),
                           np.exp(z) / (1.0 + np.exp(z)))
            dz = w * (sig - y) / m
        dW2 = H.T @ dz[:, None]
        db2 = np.array([dz.sum()])
        dH = dz[:, None] @ self.W2.T
        dH[pre <= 0] = 0.0
        dW1 = X.T @ dH
        db1 = dH.sum(axis=0)
        return loss, {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}

    def state(self) -> tuple:
        return tuple(getattr(self, p).copy() for p in self.PARAMS)

    def restore(self, state: tuple) -> None:
        for p, s in zip(self.PARAMS, state):
            setattr(self, p, s)


class _Adam:
    """Adam updates; lr comes from the search grid."""

    def __init__(self, model: ProbeModel, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.m = {p: np.zeros_like(getattr(model, p)) for p in model.PARAMS}
        self.v = {p: np.zeros_like(getattr(model, p)) for p in model.PARAMS}
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0

    def step(self, model: ProbeModel, grads: dict) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p in model.PARAMS:
            g = grads[p]
            self.m[p] = self.beta1 * self.m[p] + (1 - self.beta1) * g
            self.v[p] = self.beta2 * self.v[p] + (1 - self.beta2) * g * g
            update = (self.m[p] / bc1) / (np.sqrt(self.v[p] / bc2) + self.eps)
            setattr(model, p, getattr(model, p) - self.lr * update)


@dataclass
class ProbeResult:
    task: str
    metric_name: str  # "auc" | "r2"
    test_metric: float
    chosen: dict
    epochs_run: int
    validation_curve: list
    grid: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "task": self.task, "metric": self.metric_name,
            "test_metric": self.test_metric, "chosen": self.chosen,
            "epochs_run": self.epochs_run,
            "validation_curve": self.validation_curve, "grid": self.grid,
        }


def _class_weights(y: np.ndarray) -> np.ndarray:
    """Inverse-frequency weights, normalized to mean 1."""
    m = len(y)
    n_pos = y.sum()
    n_neg = m - n_pos
    w = np.where(y == 1, m / (2.0 * n_pos), m / (2.0 * n_neg))
    return w


def _fit_one(X: np.ndarray, y: np.ndarray, split: np.ndarray, kind: str,
             batch: int, lr: float, hidden: int, seed: int,
             max_epochs: int = MAX_EPOCHS, patience: int = PATIENCE):
    """Train one grid cell with early stopping on the validation metric."""
    is_binary = kind != "regression"
    tr = split == SPLIT_TRAIN
    va = split == SPLIT_VAL
    if is_binary and (y[tr].sum() == 0 or y[tr].sum() == len(y[tr])):
        raise ValueError("single-class training split for a binary task")
    model = ProbeModel(X.shape[1], hidden, kind, seed=seed)
    model.in_shift = X[tr].mean(axis=0)
    model.in_scale = X[tr].std(axis=0) + 1e-12
    yt = y
    if not is_binary:
        model.out_shift = float(y[tr].mean())
        model.out_scale = float(y[tr].std()) + 1e-12
        yt = (y - model.out_shift) / model.out_scale
    Xs = (X - model.in_shift) / model.in_scale
    Xtr, ytr = Xs[tr], yt[tr]
    weights = _class_weights(ytr) if is_binary else None
    opt = _Adam(model, lr)
    rng = np.random.default_rng(seed + 1)
    metric = auc if is_binary else r2
    best_val = -np.inf
    best_state = None
    best_epoch = 0
    curve = []
    bad = 0
    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(len(ytr))
        for lo in range(0, len(ytr), batch):
            idx = order[lo : lo + batch]
            _, grads = model.loss_and_grads(
                Xtr[idx], ytr[idx],
                weights[idx] if weights is not None else None)
            opt.step(model, grads)
        val = metric(model.predict(X[va]), y[va])
        curve.append(round(float(val), 6))
        if val > best_val:
            best_val = val
            best_state = model.state()
            best_epoch = epoch
            bad = 0
        else:
            bad += 1
            if bad >= patience:
                break
    model.restore(best_state)
    return model, float(best_val), best_epoch, curve


def train_probe(task: TaskDataset, features: EmbeddingMatrix, hidden: int = 64,
                seed: int = 0, batch_grid=BATCH_GRID, lr_grid=LR_GRID
                ) -> tuple[ProbeModel, ProbeResult]:
    """Grid search over (batch, lr); select on validation, report test once.

    Ties break to the smaller learning rate, then the smaller batch size.
    """
    X = task_features(task, features)
    y = task.targets
    is_binary = task.kind != "regression"
    metric = auc if is_binary else r2
    runs = []
    for batch in batch_grid:
        for lr in lr_grid:
            model, val, epochs, curve = _fit_one(
                X, y, task.split, task.kind, batch, lr, hidden, seed)
            runs.append({"batch": batch, "lr": lr, "val": val,
                         "model": model, "epochs": epochs, "curve": curve})
    runs.sort(key=lambda r: (-r["val"], r["lr"], r["batch"]))
    best = runs[0]
    te = task.mask(SPLIT_TEST)
    test_metric = float(metric(best["model"].predict(X[te]), y[te]))
    result = ProbeResult(
        task=task.name,
        metric_name="auc" if is_binary else "r2",
        test_metric=test_metric,
        chosen={"batch": best["batch"], "lr": best["lr"]},
        epochs_run=best["epochs"],
        validation_curve=best["curve"],
        grid=[{"batch": r["batch"], "lr": r["lr"], "val": round(r["val"], 6)}
              for r in runs],
    )
    return best["model"], result
