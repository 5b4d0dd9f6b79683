#!/usr/bin/env python3
"""Desk-scale end-to-end experiment: expert demos -> GP reference -> PPO
(deterministic and stochastic rewards) -> distribution comparison.

Writes checkpoints, metrics, GP models, sample banks, and comparison reports
under --out.  Mirrors the acceptance suite's training experiment, runnable
standalone.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from drivemimic import gp
from drivemimic.evaluation import compare, rollout, write_report
from drivemimic.experiments import (
    build_desk_reference,
    run_desk_training,
    sampled_band_std,
    two_lap_completion,
)
from drivemimic.logs import write_demo_csv
from drivemimic.nets import save_checkpoint
from drivemimic.track import write_track


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="desk_run")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--steps", type=int, default=500_000)
    ap.add_argument("--modes", nargs="+", default=["deterministic", "stochastic"])
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.time()
    print("building reference (demos + GPs + sample banks)...")
    ref = build_desk_reference(seed=0)
    write_track(ref.track, out / "track.txt")
    write_demo_csv(ref.demo, out / "demo.csv")
    gp.write_model(ref.d_model, out / "gp_trackpos.txt")
    gp.write_model(ref.v_model, out / "gp_speed.txt")
    print(f"  done in {time.time() - t0:.0f} s; lap {ref.track.total_length:.0f} m")

    for mode in args.modes:
        print(f"training ({mode} reward)...")
        run = run_desk_training(ref, mode=mode, seed=args.seed,
                                max_env_steps=args.steps, out_dir=out / mode)
        print(f"  {run.result.updates} updates, {run.result.env_steps} steps, "
              f"completion {run.completion:.2%}, D-gap proxy {run.trackpos_gap_proxy:.2f} m")
        save_checkpoint(run.result.nets, out / mode / "checkpoint.bin")
        logs, stats = rollout(run.result.nets, ref.track, rounds=7,
                              mode="mean_only", seed=args.seed + 1)
        report = compare(ref.d_model, ref.v_model, logs, ref.track.total_length,
                         stats, max_points=500)
        write_report(report, out / mode / "report.txt")
        print(f"  GP mean gaps: D {report.track_position.mean_gap:.2f} m, "
              f"V {report.speed.mean_gap:.2f} km/h")
        band = sampled_band_std(run.result.nets, ref, seed=args.seed + 2)
        print(f"  sampled-mode trackpos band std: {band:.3f} m")
    return 0


if __name__ == "__main__":
    sys.exit(main())
