#!/usr/bin/env python3
"""Benchmark the compiled activation kernels against the numpy fallback.

Reports per-kernel microbenchmarks at training shapes and an end-to-end
training-iteration comparison.  Run after an editable install:

    python benchmarks/bench_kernels.py [--dim 2] [--batch 50] [--iters 150]
"""

import argparse
import time

import numpy as np


def bench(fn, *args, repeat=400):
    fn(*args)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat * 1e6


def kernel_table(batch, width, dim):
    from apacnet import _kernels_np as knp

    try:
        from apacnet import _kernels as kc
    except ImportError:
        print("compiled backend not built; nothing to compare")
        return

    k = dim + 1
    rng = np.random.default_rng(0)
    v = rng.normal(size=(batch, width))
    a = np.tanh(v)
    jac = rng.normal(size=(k, batch, width))
    lap = rng.normal(size=(batch, width))
    g2 = rng.normal(size=(batch, width))
    g3 = rng.normal(size=(k, batch, width))

    cases = [
        ("act_aug_fwd", (0, dim, v, jac, lap)),
        ("act_bwd_val", (0, a, g2)),
        ("act_bwd_jac", (0, a, jac, g3)),
        ("act_bwd_lap", (0, dim, a, jac, lap, g2)),
    ]
    print(f"\nkernel microbenchmarks (B={batch}, width={width}, K={k}):")
    print(f"{'kernel':<14} {'numpy us':>10} {'cython us':>10} {'speedup':>8}")
    for name, args in cases:
        tn = bench(getattr(knp, name), *args)
        tc = bench(getattr(kc, name), *args)
        print(f"{name:<14} {tn:>10.1f} {tc:>10.1f} {tn / tc:>7.2f}x")


def end_to_end(dim, batch, iters):
    from apacnet import _kernels_np as knp
    from apacnet import config as cmod, kernels, trainer
    from apacnet.environments import make_environment

    try:
        from apacnet import _kernels as kc
    except ImportError:
        return

    cfg = cmod.resolve({"experiment": "analytic", "dim": dim, "nu": 1.0,
                        "iterations": iters, "batch_size": batch, "seed": 0})
    env = make_environment(cfg)

    print(f"\nend-to-end training iteration (analytic, d={dim}, B={batch}):")
    baseline = None
    for name, impl in (("numpy", knp), ("cython", kc)):
        kernels.act_aug_fwd = impl.act_aug_fwd
        kernels.act_bwd_val = impl.act_bwd_val
        kernels.act_bwd_jac = impl.act_bwd_jac
        kernels.act_bwd_lap = impl.act_bwd_lap
        state = trainer.TrainerState(cfg, env)
        for _ in range(10):
            trainer.phi_step(state, env, state.rng)
            trainer.generator_step(state, env, state.rng)
        t0 = time.perf_counter()
        for _ in range(iters):
            trainer.phi_step(state, env, state.rng)
            trainer.generator_step(state, env, state.rng)
        per_iter = (time.perf_counter() - t0) / iters * 1e3
        note = ""
        if baseline is None:
            baseline = per_iter
        else:
            note = f"  ({baseline / per_iter:.2f}x vs numpy)"
        print(f"  {name:<7} {per_iter:8.2f} ms/iter{note}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dim", type=int, default=2)
    parser.add_argument("--batch", type=int, default=50)
    parser.add_argument("--width", type=int, default=100)
    parser.add_argument("--iters", type=int, default=150)
    args = parser.parse_args()

    import apacnet

    print(f"active backend at import: {apacnet.backend()}")
    kernel_table(args.batch, args.width, args.dim)
    end_to_end(args.dim, args.batch, args.iters)


if __name__ == "__main__":
    main()
