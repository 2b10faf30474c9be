#!/usr/bin/env python3
"""End-to-end demo: synthesize a posed-RGBD scene, run the two-block model,
and write one Gaussian PLY per pooling level.

Example:
    python scripts/run_pipeline.py --workdir /tmp/zsplat-demo --kind sphere
"""

import argparse
import json
import os
import time

from zsplat.cli import main as zsplat


def sh(args):
    code = zsplat(args)
    if code != 0:
        raise SystemExit(f"zsplat {' '.join(args[:1])} exited with {code}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="demo_out")
    ap.add_argument("--kind", choices=["plane", "sphere"], default="plane")
    ap.add_argument("--res", default="64x64")
    ap.add_argument("--views", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--cell", type=float, default=0.0625,
                    help="grid cell size; default matches the 64x64 pixel footprint")
    args = ap.parse_args()

    scene = os.path.join(args.workdir, "scene")
    ckpt = os.path.join(args.workdir, "checkpoint")
    out = os.path.join(args.workdir, "gaussians")
    cfg_path = os.path.join(args.workdir, "run.json")
    os.makedirs(args.workdir, exist_ok=True)
    with open(cfg_path, "w", encoding="utf-8") as fh:
        json.dump({"cell": args.cell, "seed": args.seed}, fh)

    t0 = time.perf_counter()
    sh(["gen-scene", "--out", scene, "--kind", args.kind, "--res", args.res,
        "--views", str(args.views), "--seed", str(args.seed)])
    sh(["serialize", "--scene", scene, "--out",
        os.path.join(args.workdir, "codes.tns"), "--config", cfg_path])
    sh(["init-checkpoint", "--out", ckpt, "--config", cfg_path])
    sh(["forward", "--scene", scene, "--checkpoint", ckpt, "--out-dir", out,
        "--config", cfg_path])
    sh(["select-views", "--scene", scene, "--max-views", "2",
        "--out", os.path.join(args.workdir, "selection.json")])
    sh(["verify"])
    print(f"\ndone in {time.perf_counter() - t0:.1f}s; outputs in {args.workdir}/")


if __name__ == "__main__":
    main()
