"""Episode and demonstration logs (10 Hz) with their CSV formats.

Episode CSV columns: t, sigma, x, y, theta, V_kmh, D, psi_deg, tau, termination
Demo CSV: the same columns prefixed by a round index, with metadata in
leading '#' comment lines (driver, track, seed).  Floats are written with
repr for bit-exact round trips.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EPISODE_COLUMNS = ("t", "sigma", "x", "y", "theta", "V_kmh", "D", "psi_deg",
                   "tau", "termination")


class LogError(ValueError):
    pass


@dataclass
class EpisodeLog:
    """One trajectory at 10 Hz; arrays share length, termination is per-row."""

    t: np.ndarray
    sigma: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    v_kmh: np.ndarray
    d: np.ndarray
    psi_deg: np.ndarray
    tau: np.ndarray
    termination: list[str] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.t)
        for name in ("sigma", "x", "y", "theta", "v_kmh", "d", "psi_deg", "tau"):
            if len(getattr(self, name)) != n:
                raise LogError(f"column {name} length mismatch")
        if not self.termination:
            self.termination = ["none"] * n
        if len(self.termination) != n:
            raise LogError("termination column length mismatch")

    def __len__(self) -> int:
        return len(self.t)

    @classmethod
    def empty(cls) -> "EpisodeLog":
        z = np.zeros(0)
        return cls(z, z.copy(), z.copy(), z.copy(), z.copy(), z.copy(),
                   z.copy(), z.copy(), z.copy(), [])


class EpisodeRecorder:
    """Accumulates rows during a rollout."""

    def __init__(self):
        self.rows: list[tuple] = []

    def record(self, t, state, steer_cmd, termination: str) -> None:
        self.rows.append((t, state.arc_length, state.position[0], state.position[1],
                          state.heading, state.speed * 3.6, state.lateral,
                          math.degrees(state.steering), state.torque, termination))

    def to_log(self) -> EpisodeLog:
        if not self.rows:
            return EpisodeLog.empty()
        cols = list(zip(*self.rows))
        arrays = [np.array(c, dtype=float) for c in cols[:9]]
        return EpisodeLog(*arrays, termination=list(cols[9]))


@dataclass
class DemoLog:
    """Expert demonstration: one EpisodeLog per completed round."""

    rounds: list[EpisodeLog]
    driver: str = "scripted"
    track: str = "track"
    seed: int = 0

    def all_points(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(sigma, D, V_kmh) concatenated over rounds, for GP fitting."""
        sigma = np.concatenate([r.sigma for r in self.rounds])
        d = np.concatenate([r.d for r in self.rounds])
        v = np.concatenate([r.v_kmh for r in self.rounds])
        return sigma, d, v


def _format_row(values) -> str:
    return ",".join(f"{float(v)!r}" for v in values)


def write_episode_csv(log: EpisodeLog, path) -> None:
    lines = [",".join(EPISODE_COLUMNS)]
    for i in range(len(log)):
        nums = (log.t[i], log.sigma[i], log.x[i], log.y[i], log.theta[i],
                log.v_kmh[i], log.d[i], log.psi_deg[i], log.tau[i])
        lines.append(_format_row(nums) + f",{log.termination[i]}")
    tmp = Path(str(path) + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def read_episode_csv(path) -> EpisodeLog:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",") if lines else []
    if header != list(EPISODE_COLUMNS):
        raise LogError(f"{path}: unexpected episode CSV header {header}")
    rows = [line.split(",") for line in lines[1:] if line.strip()]
    if not rows:
        return EpisodeLog.empty()
    cols = list(zip(*rows))
    arrays = [np.array([float(v) for v in col]) for col in cols[:9]]
    return EpisodeLog(*arrays, termination=list(cols[9]))


def write_demo_csv(demo: DemoLog, path) -> None:
    lines = [
        f"# driver {demo.driver}",
        f"# track {demo.track}",
        f"# seed {demo.seed}",
        "round," + ",".join(EPISODE_COLUMNS),
    ]
    for k, rnd in enumerate(demo.rounds):
        for i in range(len(rnd)):
            nums = (rnd.t[i], rnd.sigma[i], rnd.x[i], rnd.y[i], rnd.theta[i],
                    rnd.v_kmh[i], rnd.d[i], rnd.psi_deg[i], rnd.tau[i])
            lines.append(f"{k}," + _format_row(nums) + f",{rnd.termination[i]}")
    tmp = Path(str(path) + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def read_demo_csv(path) -> tuple[DemoLog, list[str]]:
    """Parse a demo CSV.  Returns (DemoLog, column names present).

    Rows are re-sorted by (round, t).  Missing columns (e.g. sigma) yield NaN
    entries for the caller to reconstruct; validation lives in expert.load_demo.
    """
    lines = Path(path).read_text().splitlines()
    meta = {"driver": "unknown", "track": "unknown", "seed": "0"}
    body_start = 0
    for i, line in enumerate(lines):
        if line.startswith("#"):
            parts = line[1:].strip().split(None, 1)
            if len(parts) == 2:
                meta[parts[0]] = parts[1]
            body_start = i + 1
        else:
            break
    if body_start >= len(lines):
        raise LogError(f"{path}: no header row")
    header = lines[body_start].split(",")
    if header[0] != "round":
        raise LogError(f"{path}: demo CSV must start with a round column")
    known = set(EPISODE_COLUMNS)
    for name in header[1:]:
        if name not in known:
            raise LogError(f"{path}: unknown column {name!r}")
    if "t" not in header:
        raise LogError(f"{path}: missing t column")
    idx = {name: header.index(name) for name in header}
    parsed = []
    for line_no, line in enumerate(lines[body_start + 1:], body_start + 2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise LogError(f"{path}:{line_no}: expected {len(header)} fields")
        try:
            rnd = int(float(parts[idx["round"]]))
            row = {name: (parts[idx[name]] if name == "termination"
                          else float(parts[idx[name]]))
                   for name in header if name != "round"}
        except ValueError as exc:
            raise LogError(f"{path}:{line_no}: malformed row ({exc})") from exc
        parsed.append((rnd, row))
    parsed.sort(key=lambda item: (item[0], item[1]["t"]))
    rounds: dict[int, list[dict]] = {}
    for rnd, row in parsed:
        rounds.setdefault(rnd, []).append(row)

    def column(rows, name):
        if name == "termination":
            return [r.get(name, "none") for r in rows]
        return np.array([r.get(name, math.nan) for r in rows])

    logs = []
    for rnd in sorted(rounds):
        rows = rounds[rnd]
        logs.append(EpisodeLog(
            column(rows, "t"), column(rows, "sigma"), column(rows, "x"),
            column(rows, "y"), column(rows, "theta"), column(rows, "V_kmh"),
            column(rows, "D"), column(rows, "psi_deg"), column(rows, "tau"),
            termination=column(rows, "termination")))
    demo = DemoLog(logs, driver=meta["driver"], track=meta["track"],
                   seed=int(meta["seed"]))
    return demo, header[1:]
