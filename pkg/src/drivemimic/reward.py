"""Deterministic and stochastic imitation rewards.

R = (V_h - |V_h - V_a|) - c1*|D_h - D_a| - c2*|psi_t - psi_{t-1}|
    - c3*|tau_t - tau_{t-1}|, evaluated at the current arc-length, and exactly
-100 on any termination step.  Speed enters in km/h and track position in
meters (unscaled); steering/torque commands are the scaled [-1, 1] values, so
the c1-weighted position penalty is commensurate with the km/h speed term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TERMINATION_PENALTY = -100.0


@dataclass(frozen=True)
class RewardConfig:
    c1: float = 20.0       # track-position deviation weight
    c2: float = 100.0      # steering-smoothness weight
    c3: float = 10.0       # torque-smoothness weight
    termination_penalty: float = TERMINATION_PENALTY
    mode: str = "deterministic"  # or "stochastic"

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3) < 0:
            raise ValueError("penalty weights must be non-negative")
        if self.mode not in ("deterministic", "stochastic"):
            raise ValueError(f"unknown reward mode {self.mode!r}")


class Profile:
    """One scalar profile over arc-length with wrap-around interpolation."""

    def __init__(self, grid: np.ndarray, values: np.ndarray, lap_length: float):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or len(grid) == 0:
            raise ValueError("grid and values must be matching non-empty 1-d arrays")
        if not grid[-1] < lap_length:
            raise ValueError("grid must lie inside [0, lap_length)")
        self.lap_length = float(lap_length)
        self._grid = np.concatenate([grid, [lap_length]])
        self._values = np.concatenate([values, [values[0]]])

    def lookup(self, sigma: float):
        """Linear interpolation at sigma taken modulo the lap length."""
        return np.interp(np.asarray(sigma, float) % self.lap_length,
                         self._grid, self._values)


@dataclass
class ExpertProfile:
    """Mean profiles plus the 100-sample banks used by the stochastic reward."""

    grid: np.ndarray
    lap_length: float
    d_mean: Profile
    v_mean: Profile
    d_samples: list[Profile] = field(default_factory=list)
    v_samples: list[Profile] = field(default_factory=list)
    active: int = 0

    @classmethod
    def build(cls, grid, lap_length, d_mean_values, v_mean_values,
              d_sample_values=(), v_sample_values=()):
        d_bank = [Profile(grid, v, lap_length) for v in d_sample_values]
        v_bank = [Profile(grid, v, lap_length) for v in v_sample_values]
        if len(d_bank) != len(v_bank):
            raise ValueError("sample banks must have equal size")
        return cls(np.asarray(grid, float), float(lap_length),
                   Profile(grid, d_mean_values, lap_length),
                   Profile(grid, v_mean_values, lap_length),
                   d_bank, v_bank)

    @property
    def n_samples(self) -> int:
        return len(self.d_samples)

    def draw_sample_index(self, rng: np.random.Generator) -> int:
        """Pick the episode's sample; call at each episode start in stochastic mode."""
        if not self.d_samples:
            raise ValueError("sample banks are empty")
        self.active = int(rng.integers(0, len(self.d_samples)))
        return self.active


def _reward_terms(sigma, v_kmh, d, commands, prev_commands, terminated,
                  v_ref: Profile, d_ref: Profile, config: RewardConfig) -> float:
    vals = (sigma, v_kmh, d, *commands, *prev_commands)
    if not all(np.isfinite(v) for v in vals):
        raise ValueError(f"non-finite reward inputs {vals}")
    if terminated:
        return config.termination_penalty
    v_h = float(v_ref.lookup(sigma))
    d_h = float(d_ref.lookup(sigma))
    return (v_h - abs(v_h - v_kmh)
            - config.c1 * abs(d_h - d)
            - config.c2 * abs(commands[0] - prev_commands[0])
            - config.c3 * abs(commands[1] - prev_commands[1]))


def deterministic_reward(sigma, v_kmh, d, commands, prev_commands, terminated,
                         profile: ExpertProfile, config: RewardConfig) -> float:
    """Mean-profile reward; maximal value is V_h(sigma) when matching the expert."""
    return _reward_terms(sigma, v_kmh, d, commands, prev_commands, terminated,
                         profile.v_mean, profile.d_mean, config)


def stochastic_reward(sigma, v_kmh, d, commands, prev_commands, terminated,
                      profile: ExpertProfile, config: RewardConfig) -> float:
    """Sample-profile reward: identical form with the episode's active sample."""
    if not profile.d_samples:
        raise ValueError("sample banks are empty")
    j = profile.active
    return _reward_terms(sigma, v_kmh, d, commands, prev_commands, terminated,
                         profile.v_samples[j], profile.d_samples[j], config)


def episode_reward_fn(profile: ExpertProfile, config: RewardConfig):
    """The reward function matching config.mode."""
    return stochastic_reward if config.mode == "stochastic" else deterministic_reward
