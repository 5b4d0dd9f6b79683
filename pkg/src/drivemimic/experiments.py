"""Desk-scale experiment: the full pipeline (expert demos, GP reference,
reward profiles, PPO training, evaluation) on a 600 m loop with 3 obstacles
and 64-unit hidden layers, small enough to train on a laptop CPU.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import gp
from .evaluation import RolloutStats, compare, fit_log_models, rollout
from .expert import ExpertParams, collect_demos
from .logs import DemoLog
from .nets import PolicyNets
from .ppo import DrivingEnv, PpoConfig, TrainResult, train
from .reward import ExpertProfile, RewardConfig
from .sim import KMH, Simulator, TerminationKind
from .track import LANE_CENTER_OFFSET, Track, build_compact_track


DESK_GRID_SPACING = 5.0


@dataclass
class Reference:
    """Expert side of the pipeline: demos, tuned GPs, reward profiles."""

    track: Track
    demo: DemoLog
    d_model: gp.GPModel
    v_model: gp.GPModel
    profile: ExpertProfile


def build_reference(track: Track, demo_rounds: int = 8, seed: int = 0,
                    n_samples: int = 100, max_points: int = 500,
                    grid_spacing: float = DESK_GRID_SPACING,
                    expert_params=None) -> Reference:
    """Collect demos, fit/tune both GPs, and assemble the reward profiles."""
    demo = collect_demos(track, rounds=demo_rounds, seed=seed, params=expert_params)
    sigma, d, v = demo.all_points()
    d_model, v_model = fit_log_models(sigma, d, v, max_points=max_points)
    grid = np.arange(0.0, track.total_length, grid_spacing)
    d_mean, _ = d_model.posterior(grid)
    v_mean, _ = v_model.posterior(grid)
    rng = np.random.default_rng(seed + 1)
    d_samples = [s.values for s in gp.sample_trajectories(d_model, grid, n_samples, rng)]
    v_samples = [s.values for s in gp.sample_trajectories(v_model, grid, n_samples, rng)]
    profile = ExpertProfile.build(grid, track.total_length, d_mean, v_mean,
                                  d_samples, v_samples)
    return Reference(track, demo, d_model, v_model, profile)


def desk_ppo_config(**overrides) -> PpoConfig:
    """Published hyperparameters at desk scale: hidden 64, lr 3e-4, rewards
    scaled down so critic targets stay O(10)."""
    base = dict(hidden=64, lr=3e-4, gamma=0.98, lam=0.95, clip_eps=0.2,
                value_coef=0.5, entropy_coef=0.005, epochs=5,
                batch_init=512, minibatch=256, entropy_draws=256,
                reward_scale=0.01, max_env_steps=500_000)
    base.update(overrides)
    return PpoConfig(**base)


def two_lap_completion(nets: PolicyNets, track: Track, episodes: int = 20,
                       seed: int = 0, mode: str = "mean_only") -> float:
    """Fraction of reference-init episodes that finish two laps cleanly."""
    from .evaluation import _select_action
    rng = np.random.default_rng(seed)
    sim = Simulator(track, rng=rng)
    lap_steps = int(2.8 * track.total_length / (8.0 * 0.1))
    completed = 0
    for _ in range(episodes):
        state = sim.reset(rng)
        start_lap = state.lap_count
        for _ in range(lap_steps):
            action = _select_action(nets, sim.observe(), mode, rng)
            state, term = sim.step(action)
            if term is not TerminationKind.NONE:
                break
            if state.lap_count - start_lap >= 2:
                completed += 1
                break
    return completed / episodes


def binned_trackpos_gap(nets: PolicyNets, reference: Reference, rounds: int = 3,
                        seed: int = 0, mode: str = "mean_only") -> float:
    """Cheap proxy for the GP mean gap: binned-average |D - D_h| over the grid."""
    try:
        logs, _ = rollout(nets, reference.track, rounds=rounds, mode=mode, seed=seed)
    except Exception:
        return math.inf
    sigma = np.concatenate([r.sigma for r in logs])
    d = np.concatenate([r.d for r in logs])
    grid = reference.profile.grid
    idx = np.clip(np.digitize(sigma, grid) - 1, 0, len(grid) - 1)
    sums = np.bincount(idx, weights=d, minlength=len(grid))
    counts = np.bincount(idx, minlength=len(grid))
    have = counts > 0
    agent_mean = sums[have] / counts[have]
    expert_mean = reference.profile.d_mean.lookup(grid[have])
    return float(np.mean(np.abs(agent_mean - expert_mean)))


@dataclass
class DeskRun:
    result: TrainResult
    completion: float
    trackpos_gap_proxy: float


def run_desk_training(reference: Reference, mode: str = "deterministic",
                      seed: int = 7, max_env_steps: int = 500_000,
                      out_dir=None, eval_every: int = 15,
                      completion_target: float = 0.9,
                      gap_target: float = 0.8,
                      min_steps_before_stop: int = 40_000,
                      config: PpoConfig | None = None) -> DeskRun:
    """Train at desk scale with early stopping once the completion and
    track-position targets hold on a quick evaluation."""
    cfg = config or desk_ppo_config(max_env_steps=max_env_steps)
    reward_cfg = RewardConfig(mode=mode)
    env = DrivingEnv(reference.track, reference.profile, reward_cfg,
                     np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0]))
    progress = {"completion": 0.0, "gap": math.inf}

    def stop_fn(nets, update, steps):
        if steps < min_steps_before_stop or update % eval_every != 0:
            return False
        progress["completion"] = two_lap_completion(nets, reference.track,
                                                    episodes=12, seed=seed)
        if progress["completion"] < completion_target:
            return False
        progress["gap"] = binned_trackpos_gap(nets, reference, seed=seed)
        return progress["gap"] <= gap_target

    result = train(env, cfg, seed=seed, out_dir=out_dir, stop_fn=stop_fn)
    completion = two_lap_completion(result.nets, reference.track, episodes=20, seed=seed + 1)
    gap = binned_trackpos_gap(result.nets, reference, seed=seed + 1)
    return DeskRun(result, completion, gap)


def sampled_band_std(nets: PolicyNets, reference: Reference, rounds: int = 7,
                     seed: int = 0) -> float:
    """Grid-averaged predictive std of a GP fitted to sampled-mode rollouts."""
    logs, _ = rollout(nets, reference.track, rounds=rounds, mode="sampled", seed=seed)
    sigma = np.concatenate([r.sigma for r in logs])
    d = np.concatenate([r.d for r in logs])
    v = np.concatenate([r.v_kmh for r in logs])
    d_model, _ = fit_log_models(sigma, d, v, max_points=600)
    grid = reference.profile.grid
    _, var = d_model.posterior(grid)
    return float(np.mean(np.sqrt(var + d_model.noise_var)))


def build_desk_reference(seed: int = 0) -> Reference:
    # A brisker expert (comfort limit 6 m/s^2) keeps the desk profile near
    # 70 km/h, so the speed term rewards driving over early termination.
    params = ExpertParams(a_lat_max=6.0)
    return build_reference(build_compact_track(), demo_rounds=8, seed=seed,
                           expert_params=params)
