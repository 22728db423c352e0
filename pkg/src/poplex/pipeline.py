"""End-to-end pipeline orchestration with manifest-based caching.

Stages run in a fixed order (synth, walk, train, align, align-eval,
whiten-fit, grid, partition, retention, audit, eval, report), each writing
its artifacts atomically plus a manifest recording parameter values and
input fingerprints.  A stage whose manifest matches its current inputs is
skipped unless forced.  Reports contain no timing, so two runs with the
same config and seed produce byte-identical metric reports.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time

import numpy as np

from . import align as align_mod
from . import audit as audit_mod
from . import partition as part_mod
from . import probes as probes_mod
from .errors import ConfigError, PoplexError
from .fileio import atomic_write_text, dumps_canonical, sha256_file
from .graph import MultiplexGraph, load_edge_list, save_edge_list, validate
from .rng import mix64
from .sgns import EmbeddingMatrix, TrainConfig, train
from .synth import NodeAttributes, SyntheticPopulationConfig, generate_synthetic
from .walks import WalkConfig, WalkCorpus, generate_walks, persistence_stats

STAGES = ("synth", "walk", "train", "align", "align-eval", "whiten-fit", "grid",
          "partition", "retention", "audit", "eval", "report")

DEFAULT_PIPELINE_CONFIG = {
    "seed": 7,
    "synth": {"num_nodes": 10_000, "num_years": 3},
    "walk": {"modes": ["aware", "blind"], "persistence_p": 0.8,
             "walk_length": 40, "walks_per_node": 4},
    "train": {"dim": 32, "window": 5, "negatives": 5, "epochs": 6,
              "learning_rate": 0.025},
    "align": {"eval_pairs": 2000},
    "partition": {"k": 50, "whiten_eps": 1e-9},
    "audit": {"sample_size": 1000, "Q": 2000, "alpha": 0.05, "wiggle_sims": 500},
    "eval": {"hidden": 64, "task_size": None},
    "workers": 1,
}


def derive_seed(seed: int, tag: str) -> int:
    """Stable per-stage seed derivation."""
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return mix64(seed ^ int.from_bytes(digest[:8], "little")) & 0x7FFFFFFF


def load_pipeline_config(path: str) -> dict:
    """Read a pipeline config, overlaying user values on the defaults.

    Section parameters are validated before any stage runs (synth via its
    dataclass here; the other sections by their stage constructors), so a
    bad config fails fast.
    """
    with open(path, "r", encoding="utf-8") as f:
        user = json.load(f)
    cfg = json.loads(json.dumps(DEFAULT_PIPELINE_CONFIG))
    for key, val in user.items():
        if key == "out_dir":
            cfg[key] = val
            continue
        if key not in DEFAULT_PIPELINE_CONFIG:
            raise ConfigError(f"unknown pipeline config section {key!r}")
        if isinstance(val, dict):
            cfg[key].update(val)
        else:
            cfg[key] = val
    SyntheticPopulationConfig.from_dict(cfg.get("synth", {}))
    TrainConfig.from_dict(dict(cfg.get("train", {})))
    wcfg = cfg.get("walk", {})
    for mode in wcfg.get("modes", ["aware"]):
        WalkConfig.from_dict({"mode": mode,
                              "persistence_p": wcfg.get("persistence_p", 0.8),
                              "walk_length": wcfg.get("walk_length", 40),
                              "walks_per_node": wcfg.get("walks_per_node", 4)})
    return cfg


class PipelineRun:
    """One output directory holding every stage's artifacts and manifests."""

    def __init__(self, config: dict, out_dir: str, workers: int | None = None):
        self.config = config
        self.out = out_dir
        self.seed = int(config.get("seed", 7))
        self.workers = int(workers if workers is not None else config.get("workers", 1))
        for sub in ("graphs", "corpora", "embeddings", "align", "partition",
                    "metrics", "manifests"):
            os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
        self._graphs: dict[int, MultiplexGraph] = {}
        self._synth_cfg = SyntheticPopulationConfig.from_dict(config.get("synth", {}))
        self.years = [self._synth_cfg.start_year + t
                      for t in range(self._synth_cfg.num_years)]
        self.base_year = self.years[0]
        self.modes = list(config.get("walk", {}).get("modes", ["aware"]))
        self.primary_mode = self.modes[0]

    # ---- paths ----
    def path(self, *parts: str) -> str:
        return os.path.join(self.out, *parts)

    def graph_path(self, year: int) -> str:
        return self.path("graphs", f"year_{year}.edges")

    def attrs_path(self) -> str:
        return self.path("graphs", "attrs.jsonl")

    def corpus_path(self, mode: str, year: int) -> str:
        return self.path("corpora", f"walks_{mode}_{year}.bin")

    def emb_path(self, mode: str, year: int) -> str:
        return self.path("embeddings", f"emb_{mode}_{year}.bin")

    def aligned_emb_path(self, year: int) -> str:
        return self.path("embeddings", f"emb_{self.primary_mode}_{year}_aligned.bin")

    # ---- manifest-based caching ----
    def _manifest_path(self, stage: str) -> str:
        return self.path("manifests", f"{stage}.json")

    def _should_skip(self, stage: str, params: dict, inputs: list[str],
                     outputs: list[str], force: bool) -> bool:
        if force:
            return False
        mpath = self._manifest_path(stage)
        if not os.path.exists(mpath):
            return False
        try:
            with open(mpath, "r", encoding="utf-8") as f:
                old = json.load(f)
        except json.JSONDecodeError:
            return False
        cur_inputs = {p: sha256_file(p) for p in inputs if os.path.exists(p)}
        if old.get("params") != json.loads(dumps_canonical(params)):
            return False
        if old.get("inputs") != cur_inputs:
            return False
        return all(os.path.exists(p) for p in outputs)

    def _write_manifest(self, stage: str, params: dict, inputs: list[str],
                        outputs: list[str], wall_time: float) -> None:
        from . import __version__

        manifest = {
            "stage": stage,
            "params": json.loads(dumps_canonical(params)),
            "inputs": {p: sha256_file(p) for p in inputs},
            "outputs": outputs,
            "version": __version__,
            "wall_time_s": round(wall_time, 3),
        }
        atomic_write_text(self._manifest_path(stage),
                          json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    def _require_inputs(self, stage: str, inputs: list[str]) -> None:
        missing = [p for p in inputs if not os.path.exists(p)]
        if missing:
            raise PoplexError(f"stage {stage}: missing inputs: {missing}")

    def _load_graph(self, year: int) -> MultiplexGraph:
        if year not in self._graphs:
            self._graphs[year] = load_edge_list(
                self.graph_path(year), self._synth_cfg.num_nodes, year=year)
        return self._graphs[year]

    def _load_attrs(self) -> NodeAttributes:
        return NodeAttributes.load_jsonl(self.attrs_path())

    # ---- stages ----
    def stage_synth(self, force: bool = False) -> bool:
        params = {"config": self._synth_cfg.to_dict(), "seed": self.seed}
        outputs = [self.graph_path(y) for y in self.years] + [self.attrs_path()]
        if self._should_skip("synth", params, [], outputs, force):
            return False
        t0 = time.time()
        graphs, attrs = generate_synthetic(self._synth_cfg, self.seed)
        for g in graphs:
            report = validate(g)
            if not report.valid:
                raise PoplexError(f"generated graph failed validation: {report.problems}")
            save_edge_list(g, self.graph_path(g.year))
            self._graphs[g.year] = g
        attrs.save_jsonl(self.attrs_path())
        atomic_write_text(self.path("graphs", "synth_config.json"),
                          json.dumps(self._synth_cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        self._write_manifest("synth", params, [], outputs, time.time() - t0)
        return True

    def stage_walk(self, force: bool = False) -> bool:
        wcfg = self.config.get("walk", {})
        params = {k: v for k, v in wcfg.items() if k != "modes"}
        params["modes"] = self.modes
        params["seed"] = self.seed
        inputs = [self.graph_path(y) for y in self.years]
        outputs = [self.corpus_path(m, y) for m in self.modes for y in self.years]
        outputs += [self.path("metrics", f"persistence_{y}.json") for y in self.years
                    if "aware" in self.modes]
        if self._should_skip("walk", params, inputs, outputs, force):
            return False
        self._require_inputs("walk", inputs)
        t0 = time.time()
        for year in self.years:
            graph = self._load_graph(year)
            for mode in self.modes:
                cfg = WalkConfig(
                    mode=mode,
                    persistence_p=float(wcfg.get("persistence_p", 0.8)),
                    walk_length=int(wcfg.get("walk_length", 40)),
                    walks_per_node=int(wcfg.get("walks_per_node", 4)),
                    seed=derive_seed(self.seed, f"walk:{mode}:{year}"))
                corpus = generate_walks(graph, cfg, workers=self.workers)
                corpus.save(self.corpus_path(mode, year))
                if mode == "aware":
                    stats = persistence_stats(corpus, graph)
                    atomic_write_text(
                        self.path("metrics", f"persistence_{year}.json"),
                        dumps_canonical(stats) + "\n")
        self._write_manifest("walk", params, inputs, outputs, time.time() - t0)
        return True

    def stage_train(self, force: bool = False) -> bool:
        tcfg = dict(self.config.get("train", {}))
        params = {"train": tcfg, "workers": self.workers, "seed": self.seed}
        inputs = [self.corpus_path(m, y) for m in self.modes for y in self.years]
        outputs = [self.emb_path(m, y) for m in self.modes for y in self.years]
        if self._should_skip("train", params, inputs, outputs, force):
            return False
        self._require_inputs("train", inputs)
        t0 = time.time()
        for mode in self.modes:
            for year in self.years:
                corpus = WalkCorpus.load(self.corpus_path(mode, year))
                cfg = TrainConfig.from_dict(
                    {**tcfg, "seed": derive_seed(self.seed, f"train:{mode}:{year}")})
                emb = train(corpus, cfg, workers=self.workers)
                emb.save(self.emb_path(mode, year))
        self._write_manifest("train", params, inputs, outputs, time.time() - t0)
        return True

    def _common_trained_ids(self, emb_a: EmbeddingMatrix, emb_b: EmbeddingMatrix
                            ) -> np.ndarray:
        n = min(emb_a.num_nodes, emb_b.num_nodes)
        mask = emb_a.trained_mask()[:n] & emb_b.trained_mask()[:n]
        return np.nonzero(mask)[0]

    def stage_align(self, force: bool = False) -> bool:
        params = {"method": "ols", "mode": self.primary_mode}
        inputs = [self.emb_path(self.primary_mode, y) for y in self.years]
        outputs = []
        for y in self.years[1:]:
            outputs.append(self.path("align", f"map_ols_{y}.aln"))
            outputs.append(self.path("align", f"map_procrustes_{y}.aln"))
        outputs += [self.aligned_emb_path(y) for y in self.years]
        if self._should_skip("align", params, inputs, outputs, force):
            return False
        self._require_inputs("align", inputs)
        t0 = time.time()
        base = EmbeddingMatrix.load(self.emb_path(self.primary_mode, self.base_year))
        base.save(self.aligned_emb_path(self.base_year))  # base aligns to itself
        for y in self.years[1:]:
            src = EmbeddingMatrix.load(self.emb_path(self.primary_mode, y))
            ids = self._common_trained_ids(src, base)
            X = src.vectors[ids].astype(np.float64)
            Y = base.vectors[ids].astype(np.float64)
            for method, fit in (("ols", align_mod.fit_ols),
                                ("procrustes", align_mod.fit_procrustes)):
                mapping = fit(X, Y, source_year=y, target_year=self.base_year)
                mapping.save(self.path("align", f"map_{method}_{y}.aln"))
                if method == "ols":
                    aligned = align_mod.apply(mapping, src)
                    aligned.save(self.aligned_emb_path(y))
        self._write_manifest("align", params, inputs, outputs, time.time() - t0)
        return True

    def stage_align_eval(self, force: bool = False) -> bool:
        n_pairs = int(self.config.get("align", {}).get("eval_pairs", 2000))
        params = {"n_pairs": n_pairs, "mode": self.primary_mode}
        inputs = [self.emb_path(self.primary_mode, y) for y in self.years]
        inputs += [self.path("align", f"map_{m}_{y}.aln")
                   for y in self.years[1:] for m in ("ols", "procrustes")]
        out_path = self.path("metrics", "align_eval.json")
        if self._should_skip("align-eval", params, inputs, [out_path], force):
            return False
        self._require_inputs("align-eval", inputs)
        t0 = time.time()
        base = EmbeddingMatrix.load(self.emb_path(self.primary_mode, self.base_year))
        rows = []
        for y in self.years[1:]:
            src = EmbeddingMatrix.load(self.emb_path(self.primary_mode, y))
            ids = self._common_trained_ids(src, base)
            for method in ("ols", "procrustes"):
                mapping = align_mod.LinearAlignment.load(
                    self.path("align", f"map_{method}_{y}.aln"))
                aligned = align_mod.apply(mapping, src)
                ev = align_mod.evaluate_pairs(
                    aligned, base, n_pairs,
                    seed=derive_seed(self.seed, f"align-eval:{y}"), ids=ids)
                rows.append({"year": y, "method": method,
                             "pearson": round(ev.pearson, 6),
                             "spearman": round(ev.spearman, 6)})
        atomic_write_text(out_path, dumps_canonical({"pairs": n_pairs, "rows": rows}) + "\n")
        self._write_manifest("align-eval", params, inputs, [out_path], time.time() - t0)
        return True

    def stage_whiten_fit(self, force: bool = False) -> bool:
        eps = float(self.config.get("partition", {}).get("whiten_eps", 1e-9))
        params = {"eps": eps}
        inputs = [self.aligned_emb_path(self.base_year)]
        out_path = self.path("partition", "whitening.wht")
        if self._should_skip("whiten-fit", params, inputs, [out_path], force):
            return False
        self._require_inputs("whiten-fit", inputs)
        t0 = time.time()
        base = EmbeddingMatrix.load(self.aligned_emb_path(self.base_year))
        ids = np.nonzero(base.trained_mask()[: base.num_nodes])[0]
        wt = part_mod.fit_whitening(base.vectors[ids].astype(np.float64), eps=eps)
        wt.save(out_path)
        self._write_manifest("whiten-fit", params, inputs, [out_path], time.time() - t0)
        return True

    def stage_grid(self, force: bool = False) -> bool:
        k = int(self.config.get("partition", {}).get("k", 50))
        dim = int(self.config.get("train", {}).get("dim", 32))
        params = {"k": k, "dim": dim}
        out_path = self.path("partition", "grid.grd")
        if self._should_skip("grid", params, [], [out_path], force):
            return False
        t0 = time.time()
        part_mod.fibonacci_grid(k, dim).save(out_path)
        self._write_manifest("grid", params, [], [out_path], time.time() - t0)
        return True

    def stage_partition(self, force: bool = False) -> bool:
        params = {"variants": ["raw", "white"]}
        inputs = [self.aligned_emb_path(y) for y in self.years]
        inputs += [self.path("partition", "grid.grd"), self.path("partition", "whitening.wht")]
        outputs = [self.path("partition", f"part_{v}_{y}.prt")
                   for v in ("raw", "white") for y in self.years]
        if self._should_skip("partition", params, inputs, outputs, force):
            return False
        self._require_inputs("partition", inputs)
        t0 = time.time()
        grid = part_mod.FibonacciGrid.load(self.path("partition", "grid.grd"))
        wt = part_mod.WhiteningTransform.load(self.path("partition", "whitening.wht"))
        for y in self.years:
            emb = EmbeddingMatrix.load(self.aligned_emb_path(y))
            part_mod.assign(emb, grid).save(self.path("partition", f"part_raw_{y}.prt"))
            part_mod.assign(emb, grid, wt).save(self.path("partition", f"part_white_{y}.prt"))
        self._write_manifest("partition", params, inputs, outputs, time.time() - t0)
        return True

    def stage_retention(self, force: bool = False) -> bool:
        params = {}
        inputs = [self.path("partition", f"part_{v}_{y}.prt")
                  for v in ("raw", "white") for y in self.years]
        inputs += [self.emb_path(self.primary_mode, y) for y in self.years]
        out_path = self.path("metrics", "retention.json")
        if self._should_skip("retention", params, inputs, [out_path], force):
            return False
        self._require_inputs("retention", inputs)
        t0 = time.time()
        base_emb = EmbeddingMatrix.load(self.emb_path(self.primary_mode, self.base_year))
        rows = []
        for v in ("raw", "white"):
            base_part = part_mod.Partition.load(
                self.path("partition", f"part_{v}_{self.base_year}.prt"))
            for y in self.years[1:]:
                later_emb = EmbeddingMatrix.load(self.emb_path(self.primary_mode, y))
                ids = self._common_trained_ids(base_emb, later_emb)
                later_part = part_mod.Partition.load(
                    self.path("partition", f"part_{v}_{y}.prt"))
                rows.append({"variant": v, "year": y,
                             "retention": round(part_mod.retention(
                                 base_part, later_part, ids), 6)})
        atomic_write_text(out_path, dumps_canonical({"rows": rows}) + "\n")
        self._write_manifest("retention", params, inputs, [out_path], time.time() - t0)
        return True

    def stage_audit(self, force: bool = False) -> bool:
        acfg = self.config.get("audit", {})
        params = dict(acfg)
        inputs = [self.path("partition", f"part_white_{self.base_year}.prt")]
        out_json = self.path("metrics", "audit.json")
        out_funnel = self.path("metrics", "audit_funnel.csv")
        if self._should_skip("audit", params, inputs, [out_json, out_funnel], force):
            return False
        self._require_inputs("audit", inputs)
        t0 = time.time()
        part = part_mod.Partition.load(inputs[0])
        assigned = np.nonzero(part.assignment >= 0)[0]
        labels = part.assignment[assigned]
        c = np.bincount(labels, minlength=part.k).astype(np.int64)
        rng = np.random.default_rng(derive_seed(self.seed, "audit:sample"))
        L = min(int(acfg.get("sample_size", 1000)), len(assigned))
        sample = rng.permutation(len(assigned))[:L]
        x = np.bincount(labels[sample], minlength=part.k).astype(np.int64)
        inp = audit_mod.AuditInput(c, x, int(acfg.get("Q", 2000)),
                                   seed=derive_seed(self.seed, "audit:test"))
        result = audit_mod.run_audit(inp, alpha=float(acfg.get("alpha", 0.05)),
                                     wiggle_sims=int(acfg.get("wiggle_sims", 500)))
        atomic_write_text(out_json, dumps_canonical(result.to_dict()) + "\n")
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["cluster", "share", "deviation_pp",
                                                 "envelope_pp", "flagged"])
        writer.writeheader()
        for row in result.funnel:
            writer.writerow(row)
        atomic_write_text(out_funnel, buf.getvalue())
        self._write_manifest("audit", params, inputs, [out_json, out_funnel],
                             time.time() - t0)
        return True

    def stage_eval(self, force: bool = False) -> bool:
        ecfg = self.config.get("eval", {})
        params = dict(ecfg)
        params["modes"] = self.modes
        inputs = [self.attrs_path()] + [self.emb_path(m, self.base_year)
                                        for m in self.modes]
        tasks_path = self.path("metrics", "tasks.jsonl")
        outputs = [tasks_path] + [self.path("metrics", f"probes_{m}.json")
                                  for m in self.modes]
        if self._should_skip("eval", params, inputs, outputs, force):
            return False
        self._require_inputs("eval", inputs)
        t0 = time.time()
        attrs = self._load_attrs()
        tasks = probes_mod.build_tasks(
            attrs, year=self.years[-1],
            seed=derive_seed(self.seed, "eval:tasks"),
            task_size=ecfg.get("task_size"))
        probes_mod.save_tasks(tasks, tasks_path)
        for mode in self.modes:
            emb = EmbeddingMatrix.load(self.emb_path(mode, self.base_year))
            results = []
            for task in tasks:
                _, res = probes_mod.train_probe(
                    task, emb, hidden=int(ecfg.get("hidden", 64)),
                    seed=derive_seed(self.seed, f"eval:{mode}:{task.name}"))
                results.append(res.to_dict())
            atomic_write_text(self.path("metrics", f"probes_{mode}.json"),
                              dumps_canonical({"mode": mode, "results": results}) + "\n")
        self._write_manifest("eval", params, inputs, outputs, time.time() - t0)
        return True

    def stage_report(self, force: bool = False) -> bool:
        params = {}
        inputs = [self.path("metrics", "align_eval.json"),
                  self.path("metrics", "retention.json"),
                  self.path("metrics", "audit.json")]
        inputs += [self.path("metrics", f"persistence_{y}.json") for y in self.years
                   if "aware" in self.modes]
        inputs += [self.path("metrics", f"probes_{m}.json") for m in self.modes]
        inputs += [self.path("partition", f"part_{v}_{y}.prt")
                   for v in ("raw", "white") for y in self.years]
        out_json = self.path("report.json")
        out_csv = self.path("report.csv")
        if self._should_skip("report", params, inputs, [out_json, out_csv], force):
            return False
        self._require_inputs("report", inputs)
        t0 = time.time()

        def read_json(p):
            with open(p, "r", encoding="utf-8") as f:
                return json.load(f)

        report: dict = {"config": self.config, "years": self.years}
        if "aware" in self.modes:
            report["persistence"] = {
                str(y): read_json(self.path("metrics", f"persistence_{y}.json"))
                for y in self.years}
        report["alignment"] = read_json(self.path("metrics", "align_eval.json"))
        report["retention"] = read_json(self.path("metrics", "retention.json"))
        report["audit"] = read_json(self.path("metrics", "audit.json"))
        balance = []
        for v in ("raw", "white"):
            for y in self.years:
                part = part_mod.Partition.load(self.path("partition", f"part_{v}_{y}.prt"))
                metrics = part_mod.balance_metrics(part)
                metrics["lorenz"] = [round(x, 6) for x in metrics["lorenz"]]
                metrics["gini"] = round(metrics["gini"], 6)
                metrics["max_share"] = round(metrics["max_share"], 6)
                balance.append({"variant": v, "year": y, **metrics})
        report["balance"] = balance
        report["probes"] = {m: read_json(self.path("metrics", f"probes_{m}.json"))
                            for m in self.modes}
        atomic_write_text(out_json, dumps_canonical(report) + "\n")

        rows = []
        if "aware" in self.modes:
            for y in self.years:
                stats = report["persistence"][str(y)]
                rows.append(("persistence", "overall_stay", y,
                             stats["overall_stay_frequency"]))
        for r in report["alignment"]["rows"]:
            rows.append((f"alignment_{r['method']}", "pearson", r["year"], r["pearson"]))
            rows.append((f"alignment_{r['method']}", "spearman", r["year"], r["spearman"]))
        for r in report["retention"]["rows"]:
            rows.append((f"retention_{r['variant']}", "retention", r["year"], r["retention"]))
        for b in balance:
            rows.append((f"balance_{b['variant']}", "gini", b["year"], b["gini"]))
            rows.append((f"balance_{b['variant']}", "max_share", b["year"], b["max_share"]))
        rows.append(("audit", "S_obs", self.base_year, report["audit"]["S_obs"]))
        rows.append(("audit", "p_global", self.base_year, report["audit"]["p_global"]))
        rows.append(("audit", "p_tmax", self.base_year, report["audit"]["p_tmax"]))
        for mode in self.modes:
            for res in report["probes"][mode]["results"]:
                rows.append((f"probe_{mode}", f"{res['task']}_{res['metric']}",
                             self.years[-1], res["test_metric"]))
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["section", "metric", "year", "value"])
        for row in rows:
            writer.writerow(row)
        atomic_write_text(out_csv, buf.getvalue())
        self._write_manifest("report", params, inputs, [out_json, out_csv],
                             time.time() - t0)
        return True

    # ---- driver ----
    def run_stage(self, name: str, force: bool = False) -> bool:
        """Run one stage; returns True if work was done, False if cached."""
        runners = {
            "synth": self.stage_synth,
            "walk": self.stage_walk,
            "train": self.stage_train,
            "align": self.stage_align,
            "align-eval": self.stage_align_eval,
            "whiten-fit": self.stage_whiten_fit,
            "grid": self.stage_grid,
            "partition": self.stage_partition,
            "retention": self.stage_retention,
            "audit": self.stage_audit,
            "eval": self.stage_eval,
            "report": self.stage_report,
        }
        if name not in runners:
            raise ConfigError(f"unknown stage {name!r}; stages are {STAGES}")
        return runners[name](force=force)

    def run_all(self, force: bool = False, log=None) -> None:
        for stage in STAGES:
            ran = self.run_stage(stage, force=force)
            if log is not None:
                log(f"[{stage}] {'done' if ran else 'skipped (cached)'}")
