"""Benchmark the compiled kernels against the pure-Python fallbacks.

Runs walk generation and one SGNS epoch on a small synthetic population
with each backend and prints a timing table.  Walk corpora are asserted
bit-identical across backends; embeddings agree in semantics but not bits.

Usage: python benchmarks/compare_backends.py [--nodes 2000] [--dim 32]
"""

import argparse
import time

import numpy as np

import poplex._backend as backend
from poplex import _pysgns, _pywalk
from poplex.sgns import TrainConfig, train
from poplex.synth import SyntheticPopulationConfig, generate_synthetic
from poplex.walks import WalkConfig, generate_walks


def time_backends(fn):
    results = {}
    originals = (backend.walk_kernel, backend.sgns_kernel)
    try:
        for name, walk_k, sgns_k in (
            ("native", *originals),
            ("python", _pywalk, _pysgns),
        ):
            if name == "native" and backend.active_backend() != "native":
                print("compiled kernels unavailable; skipping native timings")
                continue
            backend.walk_kernel, backend.sgns_kernel = walk_k, sgns_k
            t0 = time.perf_counter()
            results[name] = (fn(), time.perf_counter() - t0)
    finally:
        backend.walk_kernel, backend.sgns_kernel = originals
    return results


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--nodes", type=int, default=2000)
    parser.add_argument("--dim", type=int, default=32)
    parser.add_argument("--epochs", type=int, default=1)
    args = parser.parse_args()

    cfg = SyntheticPopulationConfig(num_nodes=args.nodes, num_years=1)
    graphs, _ = generate_synthetic(cfg, seed=1)
    graph = graphs[0]
    wcfg = WalkConfig(mode="aware", walk_length=40, walks_per_node=4, seed=2)

    print(f"== walk generation ({args.nodes} nodes, aware mode) ==")
    walk_results = time_backends(lambda: generate_walks(graph, wcfg))
    for name, (corpus, dt) in walk_results.items():
        print(f"  {name:7s} {dt:8.3f}s  ({len(corpus.tokens)} tokens)")
    if len(walk_results) == 2:
        a, b = walk_results["native"][0], walk_results["python"][0]
        assert np.array_equal(a.tokens, b.tokens), "corpora must be bit-identical"
        speedup = walk_results["python"][1] / walk_results["native"][1]
        print(f"  corpora bit-identical; native speedup {speedup:.0f}x")

    corpus = generate_walks(graph, wcfg)
    tcfg = TrainConfig(dim=args.dim, window=5, negatives=5,
                       epochs=args.epochs, seed=3)
    print(f"== sgns training ({args.epochs} epoch(s), dim={args.dim}) ==")
    sgns_results = time_backends(lambda: train(corpus, tcfg))
    for name, (emb, dt) in sgns_results.items():
        print(f"  {name:7s} {dt:8.3f}s  (final loss {emb.metadata['loss_curve'][-1]:.4f})")
    if len(sgns_results) == 2:
        speedup = sgns_results["python"][1] / sgns_results["native"][1]
        print(f"  native speedup {speedup:.0f}x")


if __name__ == "__main__":
    main()
