#!/usr/bin/env python3
"""Compare the compiled and pure-numpy training kernels.

The hot loop of the whole pipeline is head training: thousands of small
mini-batch steps whose matrices are tiny enough that interpreter overhead
dominates. This script times both backends on the self-training workload
shape (the phase that dominates a full run) and on the few-shot supervised
phase, and checks that both backends produce numerically matching models.

Usage: python benchmarks/bench_backends.py [--repeats 3]
"""

import argparse
import time

import numpy as np

from vpet._backend import get_backend
from vpet.data import EmbeddingSet
from vpet.heads import HeadConfig, TrainTargets, train_head


def make_workload(n, d, c, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    W = rng.normal(size=(d, c))
    y = np.argmax(X @ W + rng.normal(scale=0.5, size=(n, c)), axis=1)
    return EmbeddingSet(features=X, class_count=c, labels=y)


def time_backend(backend, dataset, config, repeats):
    targets = TrainTargets(hard=dataset.labels)
    best = float("inf")
    model = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        model = train_head(dataset, targets, config, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, model


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    workloads = [
        ("few-shot supervised (24 x 64, 8 classes, 30 epochs, linear)",
         make_workload(24, 64, 8, seed=1),
         HeadConfig(architecture="linear", learning_rate=0.05, epochs=30,
                    seed=3)),
        ("self-training (4024 x 64, 8 classes, 20 epochs, linear)",
         make_workload(4024, 64, 8, seed=2),
         HeadConfig(architecture="linear", learning_rate=0.05, epochs=20,
                    seed=3)),
        ("self-training (4024 x 64, 8 classes, 20 epochs, mlp-64)",
         make_workload(4024, 64, 8, seed=2),
         HeadConfig(architecture="mlp", hidden_width=64, learning_rate=0.01,
                    epochs=20, seed=3)),
    ]

    try:
        get_backend("compiled")
        backends = ["python", "compiled"]
    except ImportError:
        print("compiled backend not built; timing python only")
        backends = ["python"]

    for name, dataset, config in workloads:
        print(f"\n{name}")
        times = {}
        models = {}
        for backend in backends:
            elapsed, model = time_backend(backend, dataset, config,
                                          args.repeats)
            times[backend] = elapsed
            models[backend] = model
            print(f"  {backend:10s} {elapsed * 1000:9.1f} ms")
        if len(backends) == 2:
            speedup = times["python"] / times["compiled"]
            drift = max(
                float(np.max(np.abs(p - q)))
                for p, q in zip(models["python"].params,
                                models["compiled"].params))
            print(f"  speedup    {speedup:9.2f}x   max param drift {drift:.2e}")


if __name__ == "__main__":
    main()
