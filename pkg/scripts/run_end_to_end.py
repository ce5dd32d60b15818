#!/usr/bin/env python3
"""Full pipeline demo: dataset -> three trainings -> reenactment -> report.

Runs the same flow as the acceptance end-to-end test into a workspace
directory and prints the headline metrics. Expect roughly 15-25 minutes
on a laptop CPU with the default configuration.

Usage: python scripts/run_end_to_end.py [workspace_dir] [--seed N]
"""

import argparse
import shutil
import sys
import time
from pathlib import Path

from reenact import cli, metrics


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("workspace", nargs="?", default="e2e_workspace")
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args()

    root = Path(args.workspace)
    if root.exists():
        shutil.rmtree(root)
    root.mkdir(parents=True)
    data = root / "data"
    t_start = time.time()

    def step(name: str, argv: list[str]) -> None:
        t0 = time.time()
        rc = cli.main(argv)
        if rc != 0:
            print(f"{name} failed with exit code {rc}", file=sys.stderr)
            raise SystemExit(rc)
        print(f"[{name}] {time.time() - t0:.0f}s")

    step("synth-gen", ["synth-gen", "--persons", "10", "--frames", "20",
                       "--seed", str(args.seed), "--out", str(data)])
    for stage in ("p2b", "b2f", "fr"):
        step(f"train-{stage}", ["train", stage, "--data", str(data),
                                "--seed", str(args.seed + 1), "--out", str(root / f"{stage}.ckpt")])
    step("infer", ["infer", "--data", str(data), "--target", "p000:0", "--driving", "p000",
                   "--frames", "16", "--p2b", str(root / "p2b.ckpt"), "--b2f", str(root / "b2f.ckpt"),
                   "--fr", str(root / "fr.ckpt"), "--background", "inpaint-driving",
                   "--out", str(root / "run"), "--debug-dir", str(root / "debug")])

    gt = root / "gt"
    gt.mkdir()
    src = data / "persons" / "p000" / "frames"
    for i in range(16):
        for sfx in ("frame.png", "map.png", "dense.png"):
            shutil.copy(src / f"{i:04d}.{sfx}", gt / f"{i:04d}.{sfx}")
    step("evaluate", ["evaluate", "--gen", str(root / "run"), "--gt", str(gt),
                      "--report", str(root / "report.json"),
                      "--p2b", str(root / "p2b.ckpt"), "--b2f", str(root / "b2f.ckpt")])

    report = metrics.MetricReport.load(root / "report.json")
    print(f"\ntotal {time.time() - t_start:.0f}s; self-reenactment scores:")
    for name, entry in report.metrics.items():
        print(f"  {name:6s} {entry['value']:.4f} ({entry['direction']} is better)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
