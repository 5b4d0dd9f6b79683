#!/usr/bin/env python3
"""Full-scale pipeline on the 4.7 km training track via the CLI surface:
road -> expert demos -> GP fits -> sample banks -> (optionally) training.

Training at full scale takes days of CPU time; pass --steps to cap it.
"""

import argparse
import os
import subprocess
import sys
from pathlib import Path

PKG = Path(__file__).resolve().parent.parent


def cli(*argv) -> None:
    cmd = [sys.executable, "-m", "drivemimic.cli", *argv]
    print("+", " ".join(str(a) for a in argv))
    env = dict(os.environ)
    env["PYTHONPATH"] = str(PKG / "src") + os.pathsep + env.get("PYTHONPATH", "")
    res = subprocess.run(cmd, cwd=PKG, env=env)
    if res.returncode != 0:
        raise SystemExit(res.returncode)


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="full_run")
    ap.add_argument("--steps", type=int, default=2_000_000)
    ap.add_argument("--reward", default="stochastic")
    ap.add_argument("--train", action="store_true", help="run the PPO stage")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cli("collect-expert", "--track", "training", "--rounds", "8", "--seed", "0",
        "--out", str(out / "demo.csv"))
    cli("fit-gp", "--demo", str(out / "demo.csv"), "--variable", "trackpos",
        "--max-points", "2000", "--out", str(out / "gp_trackpos.txt"))
    cli("fit-gp", "--demo", str(out / "demo.csv"), "--variable", "speed",
        "--max-points", "2000", "--out", str(out / "gp_speed.txt"))
    cli("sample-gp", "--model", str(out / "gp_trackpos.txt"), "--n", "100",
        "--seed", "1", "--out", str(out / "samples_trackpos.csv"))
    cli("sample-gp", "--model", str(out / "gp_speed.txt"), "--n", "100",
        "--seed", "2", "--out", str(out / "samples_speed.csv"))
    if args.train:
        cli("train", "--track", "training",
            "--gp-trackpos", str(out / "gp_trackpos.txt"),
            "--gp-speed", str(out / "gp_speed.txt"),
            "--samples-trackpos", str(out / "samples_trackpos.csv"),
            "--samples-speed", str(out / "samples_speed.csv"),
            "--reward", args.reward, "--steps", str(args.steps),
            "--out", str(out / "train"))
        cli("evaluate", "--checkpoint", str(out / "train" / "checkpoint.bin"),
            "--track", "training", "--rounds", "7",
            "--gp-trackpos", str(out / "gp_trackpos.txt"),
            "--gp-speed", str(out / "gp_speed.txt"),
            "--out", str(out / "report.txt"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
