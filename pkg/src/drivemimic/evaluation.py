"""Rollout collection, expert-vs-agent distribution comparison, and the
generalization suite over the three procedural obstacle distributions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gp
from .expert import ExpertError, collect_demos
from .logs import DemoLog, EpisodeLog, EpisodeRecorder
from .nets import PolicyNets, mdn_sample
from .ppo import policy_distribution
from .sim import KMH, Simulator, TerminationKind
from .track import LANE_CENTER_OFFSET, RoadSpec, Track, generate_road

GRID_SPACING = 5.0


class EvalError(RuntimeError):
    pass


@dataclass
class RolloutStats:
    episodes: int = 0
    completed_rounds: int = 0
    terminations: dict = field(default_factory=dict)
    obstacles_encountered: int = 0
    collisions: int = 0

    @property
    def completion_rate(self) -> float:
        return self.completed_rounds / self.episodes if self.episodes else 0.0

    @property
    def collision_rate(self) -> float:
        if self.obstacles_encountered == 0:
            return 0.0
        return self.collisions / self.obstacles_encountered


def _select_action(nets: PolicyNets, obs: np.ndarray, mode: str,
                   rng: np.random.Generator) -> np.ndarray:
    dist = policy_distribution(nets, obs[None, :])
    if mode == "mean_only":
        k = int(np.argmax(dist.alphas[0]))
        return np.clip(dist.means[0, k], -1.0, 1.0)
    if mode == "sampled":
        return mdn_sample(dist, rng)[0]
    raise ValueError(f"unknown rollout mode {mode!r}")


def _crossed(track: Track, s0: float, s1: float) -> int:
    """Obstacle stations passed when sigma moves forward from s0 to s1."""
    fwd = (s1 - s0) % track.total_length
    if fwd == 0.0 or fwd > 0.5 * track.total_length:
        return 0
    count = 0
    for obs in track.obstacles:
        if (obs.arc_length - s0) % track.total_length <= fwd:
            count += 1
    return count


def rollout(nets: PolicyNets, track: Track, rounds: int = 7,
            mode: str = "mean_only", seed: int = 0,
            max_failures: int = 50) -> tuple[list[EpisodeLog], RolloutStats]:
    """Collect `rounds` completed laps; lap-segmented logs at 10 Hz.

    mean_only uses the dominant mixture component's mean (variance ignored);
    sampled draws from the full mixture.  More than `max_failures` consecutive
    failed episodes aborts with diagnostics.
    """
    if nets.actor.input_dim != 310:
        raise EvalError(f"checkpoint input dim {nets.actor.input_dim} != 310")
    rng = np.random.default_rng(seed)
    sim = Simulator(track, rng=rng)
    stats = RolloutStats()
    logs: list[EpisodeLog] = []
    consecutive_failures = 0
    while len(logs) < rounds:
        if consecutive_failures > max_failures:
            raise EvalError(
                f"{consecutive_failures} consecutive failed episodes on "
                f"{track.name} (mode={mode}); terminations: {stats.terminations}")
        state = sim.reset_at(0.0, lateral=LANE_CENTER_OFFSET,
                             speed=float(rng.uniform(30.0, 90.0)) * KMH)
        stats.episodes += 1
        recorder = EpisodeRecorder()
        t = 0.0
        completed = False
        for _ in range(40000):
            obs = sim.observe()
            action = _select_action(nets, obs, mode, rng)
            prev_sigma = state.arc_length
            prev_lap = state.lap_count
            state, term = sim.step(action)
            t += sim.config.dt
            stats.obstacles_encountered += _crossed(track, prev_sigma, state.arc_length)
            if term is not TerminationKind.NONE:
                stats.terminations[term.value] = stats.terminations.get(term.value, 0) + 1
                if term is TerminationKind.OBSTACLE_COLLISION:
                    stats.collisions += 1
                break
            if state.lap_count > prev_lap:
                completed = True
                break
            recorder.record(t, state, action[0], term.value)
        if completed:
            logs.append(recorder.to_log())
            stats.completed_rounds += 1
            consecutive_failures = 0
        else:
            consecutive_failures += 1
    return logs, stats


# -- distribution comparison -----------------------------------------------------------


@dataclass
class SeriesComparison:
    grid: np.ndarray
    expert_mean: np.ndarray
    expert_lo: np.ndarray
    expert_hi: np.ndarray
    agent_mean: np.ndarray
    agent_lo: np.ndarray
    agent_hi: np.ndarray

    @property
    def mean_gap(self) -> float:
        return float(np.mean(np.abs(self.expert_mean - self.agent_mean)))

    @property
    def in_ci_fraction(self) -> float:
        inside = (self.agent_mean >= self.expert_lo) & (self.agent_mean <= self.expert_hi)
        return float(np.mean(inside))

    @property
    def ci_jaccard(self) -> float:
        lo = np.maximum(self.expert_lo, self.agent_lo)
        hi = np.minimum(self.expert_hi, self.agent_hi)
        inter = np.maximum(hi - lo, 0.0)
        union = (np.maximum(self.expert_hi, self.agent_hi)
                 - np.minimum(self.expert_lo, self.agent_lo))
        return float(np.mean(inter / np.maximum(union, 1e-12)))

    @property
    def band_std(self) -> float:
        """Grid-averaged half band width of the agent fit, in sigma units."""
        return float(np.mean((self.agent_hi - self.agent_lo) / (2.0 * gp.CI_MULTIPLIER)))


@dataclass
class ComparisonReport:
    grid: np.ndarray
    track_position: SeriesComparison
    speed: SeriesComparison
    stats: RolloutStats | None = None


def fit_log_models(sigma, d, v, max_points: int = 800) -> tuple[gp.GPModel, gp.GPModel]:
    """Fit and noise-tune track-position and speed GPs from logged points."""
    d_model = gp.fit(sigma, d, max_points=max_points)
    d_model = gp.tune_noise(d_model, sigma, d)
    v_model = gp.fit(sigma, v, max_points=max_points)
    v_model = gp.tune_noise(v_model, sigma, v)
    return d_model, v_model


def _series(expert_model: gp.GPModel, agent_model: gp.GPModel, grid) -> SeriesComparison:
    em, elo, ehi = expert_model.predictive_band(grid)
    am, alo, ahi = agent_model.predictive_band(grid)
    return SeriesComparison(grid, em, elo, ehi, am, alo, ahi)


def compare(expert_d: gp.GPModel, expert_v: gp.GPModel,
            agent_logs: list[EpisodeLog], lap_length: float,
            stats: RolloutStats | None = None,
            max_points: int = 800) -> ComparisonReport:
    """Fit agent GPs with the same pipeline and compare both on the 5 m grid."""
    if not agent_logs:
        raise EvalError("no agent logs to compare")
    sigma = np.concatenate([r.sigma for r in agent_logs])
    d = np.concatenate([r.d for r in agent_logs])
    v = np.concatenate([r.v_kmh for r in agent_logs])
    agent_d, agent_v = fit_log_models(sigma, d, v, max_points=max_points)
    grid = np.arange(0.0, lap_length, GRID_SPACING)
    return ComparisonReport(
        grid,
        _series(expert_d, agent_d, grid),
        _series(expert_v, agent_v, grid),
        stats,
    )


def write_report(report: ComparisonReport, path) -> None:
    """Structured-text summary plus a plot-ready CSV alongside it."""
    t, s = report.track_position, report.speed
    lines = [
        "drivemimic-report v1",
        f"grid_points {len(report.grid)}",
        f"trackpos_mean_gap_m {t.mean_gap!r}",
        f"trackpos_in_ci_fraction {t.in_ci_fraction!r}",
        f"trackpos_ci_jaccard {t.ci_jaccard!r}",
        f"speed_mean_gap_kmh {s.mean_gap!r}",
        f"speed_in_ci_fraction {s.in_ci_fraction!r}",
        f"speed_ci_jaccard {s.ci_jaccard!r}",
    ]
    if report.stats is not None:
        lines += [
            f"episodes {report.stats.episodes}",
            f"completion_rate {report.stats.completion_rate!r}",
            f"collision_rate {report.stats.collision_rate!r}",
            f"terminations {report.stats.terminations}",
        ]
    tmp = Path(str(path) + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)
    csv_path = Path(str(path)).with_suffix(".csv")
    header = ("sigma,expert_d_mean,expert_d_lo,expert_d_hi,agent_d_mean,agent_d_lo,"
              "agent_d_hi,expert_v_mean,expert_v_lo,expert_v_hi,agent_v_mean,"
              "agent_v_lo,agent_v_hi")
    rows = [header]
    for i, g in enumerate(report.grid):
        vals = (g, t.expert_mean[i], t.expert_lo[i], t.expert_hi[i], t.agent_mean[i],
                t.agent_lo[i], t.agent_hi[i], s.expert_mean[i], s.expert_lo[i],
                s.expert_hi[i], s.agent_mean[i], s.agent_lo[i], s.agent_hi[i])
        rows.append(",".join(f"{float(x)!r}" for x in vals))
    tmp = Path(str(csv_path) + ".tmp")
    tmp.write_text("\n".join(rows) + "\n")
    tmp.replace(csv_path)


# -- generalization -----------------------------------------------------------------------


GENERALIZATION_SPECS = (
    RoadSpec(kind="alternating_50m", length=3140.0),
    RoadSpec(kind="gaussian_spaced", length=3140.0, spacing_mean=100.0, spacing_std=10.0),
    RoadSpec(kind="gaussian_batched", length=3140.0, spacing_mean=100.0, spacing_std=10.0),
)


def generalization_suite(nets: PolicyNets, seed: int = 0, rounds: int = 3,
                         mode: str = "mean_only",
                         with_expert_reference: bool = True) -> dict:
    """Run the three generalization roads; per-road safety plus, when the
    scripted expert can drive the road, a distribution comparison."""
    results = {}
    for spec in GENERALIZATION_SPECS:
        spec = RoadSpec(spec.kind, spec.length, seed, spec.spacing_mean,
                        spec.spacing_std, spec.batch_range)
        track = generate_road(spec)
        entry: dict = {"track": track.name, "length": track.total_length,
                       "obstacles": len(track.obstacles)}
        try:
            logs, stats = rollout(nets, track, rounds=rounds, mode=mode, seed=seed)
        except EvalError as exc:
            entry["error"] = str(exc)
            results[spec.kind] = entry
            continue
        entry["stats"] = stats
        if with_expert_reference:
            try:
                demo = collect_demos(track, rounds=max(rounds, 4), seed=seed)
                sig, d, v = demo.all_points()
                exp_d, exp_v = fit_log_models(sig, d, v)
                entry["report"] = compare(exp_d, exp_v, logs, track.total_length,
                                          stats)
            except ExpertError as exc:
                entry["expert_error"] = str(exc)
        results[spec.kind] = entry
    return results
