#!/usr/bin/env python3
"""Benchmark the sparse block forward against the dense attention oracle.

The dense oracle materializes the full n x n attention matrix, so it is only
run up to --dense-n and extrapolated quadratically beyond that. The sparse
path selects half the blocks per query block (the default k), which bounds
its score work to n^2/2 while keeping memory at the chunk working set.

Example:
    python scripts/bench_sparse.py --sizes 8192 32768 65536
"""

import argparse
import time

import numpy as np

from zsplat import reference, zformer
from zsplat.morton import Quantizer
from zsplat.numerics import uniform01
from zsplat.scene import PointRepresentation


def make_rep(n, width, seed=0):
    pos = uniform01(seed, 3 * n).reshape(n, 3) * 8
    feats = ((uniform01(seed + 1, n * width).reshape(n, width) * 2 - 1)
             ).astype(np.float32)
    colors = uniform01(seed + 2, 3 * n).reshape(n, 3)
    return PointRepresentation(pos, feats, colors, np.zeros(n, np.int32))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+",
                    default=[4096, 16384, 65536])
    ap.add_argument("--width", type=int, default=96)
    ap.add_argument("--block-len", type=int, default=32)
    ap.add_argument("--dense-n", type=int, default=8192)
    args = ap.parse_args()

    cfg = zformer.AttentionConfig(
        block_len=args.block_len, select_k=0, model_width=args.width,
        head_width=args.width,
    )
    params = zformer.ZFormerParams.init(cfg, seed=13)
    quant = Quantizer(np.zeros(3), 0.25, 8)

    rep = make_rep(args.dense_n, args.width)
    t0 = time.perf_counter()
    reference.dense_attention_reference(rep.features, params, cfg)
    dense_dt = time.perf_counter() - t0
    print(f"dense oracle  n={args.dense_n:>6}  {dense_dt:7.2f}s "
          f"(float64, full n x n)")

    for n in args.sizes:
        rep = make_rep(n, args.width)
        t0 = time.perf_counter()
        pooled, _ = zformer.zformer_block(rep, quant, params, cfg)
        dt = time.perf_counter() - t0
        scaled = dense_dt * (n / args.dense_n) ** 2
        print(f"sparse block  n={n:>6}  {dt:7.2f}s  -> {len(pooled):>6} tokens"
              f"   dense-extrapolated {scaled:8.1f}s  ({scaled / dt:4.1f}x)")


if __name__ == "__main__":
    main()
