"""Scripted stochastic expert driver and demonstration handling.

The expert keeps the right lane, shifts to the other lane with a smoothstep
profile when an obstacle blocks the lane ahead, tracks a curvature-limited
speed profile, and carries Ornstein-Uhlenbeck jitter on both targets so the
eight recorded rounds have human-like spread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .logs import DemoLog, EpisodeLog, EpisodeRecorder, read_demo_csv, write_demo_csv
from .sim import KMH, SimConfig, SimState, Simulator, TerminationKind
from .track import LANE_CENTER_OFFSET, Lane, Track


class ExpertError(RuntimeError):
    """Expert parameters are unsafe for this track or a demo file is invalid."""


@dataclass(frozen=True)
class ExpertParams:
    v_limit: float = 100.0 * KMH
    a_lat_max: float = 3.0            # comfortable lateral acceleration, m/s^2
    lookahead_base: float = 60.0      # obstacle trigger: base + gain * V
    lookahead_gain: float = 2.0
    shift_length: float = 40.0        # smoothstep arc-length of a lane change
    return_margin: float = 30.0       # distance past an obstacle before returning
    maneuver_speed_factor: float = 0.8
    pursuit_gain: float = 0.8         # pure-pursuit lookahead = gain * V
    pursuit_min: float = 8.0
    pursuit_max: float = 35.0
    speed_kp: float = 0.5             # torque per m/s of speed error
    ou_theta: float = 0.3             # 1/s
    ou_sigma_d: float = 0.3           # m, stationary std of the lateral target
    ou_sigma_v: float = 2.0 * KMH     # stationary std of the speed target


def _smoothstep(t: float) -> float:
    t = min(max(t, 0.0), 1.0)
    return t * t * (3.0 - 2.0 * t)


def _lane_lateral(lane: Lane) -> float:
    return LANE_CENTER_OFFSET if lane is Lane.RIGHT else -LANE_CENTER_OFFSET


def _speed_profile(track: Track, params: ExpertParams, ds: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """Curvature-limited speed target with a backward braking pass (wrapped)."""
    grid = np.arange(0.0, track.total_length, ds)
    kappa = np.abs(track.curvature(grid))
    with np.errstate(divide="ignore"):
        v = np.where(kappa > 1e-9, np.sqrt(params.a_lat_max / np.maximum(kappa, 1e-9)),
                     np.inf)
    v = np.minimum(v, params.v_limit)
    a_brake = 3.0  # comfortable braking for the profile, below the actuator limit
    for _ in range(2):  # two wrapped passes so the loop closure propagates
        for i in range(len(v) - 1, -1, -1):
            nxt = v[(i + 1) % len(v)]
            v[i] = min(v[i], math.sqrt(nxt * nxt + 2.0 * a_brake * ds))
    return grid, v


class ScriptedExpert:
    """Stateful scripted driver; a pure function of (state, rng stream)."""

    def __init__(self, track: Track, params: ExpertParams | None = None,
                 rng: np.random.Generator | None = None,
                 sim_config: SimConfig | None = None):
        self.track = track
        self.params = params or ExpertParams()
        self.rng = rng or np.random.default_rng(0)
        self.sim_config = sim_config or SimConfig()
        self._profile_grid, self._profile_v = _speed_profile(track, self.params)
        self.lane = Lane.RIGHT
        self._transition: tuple[float, float, float] | None = None  # (s_start, from, to)
        self._ou_d = 0.0
        self._ou_v = 0.0

    # -- lane state machine ---------------------------------------------------

    def _advance_lane_state(self, s: float, speed: float) -> None:
        p = self.params
        if self._transition is not None:
            s_start, _, _ = self._transition
            if (s - s_start) % self.track.total_length >= p.shift_length:
                self._transition = None
            else:
                return
        lookahead = p.lookahead_base + p.lookahead_gain * speed
        gap_here = self.track.forward_gap(s, self.lane)
        other = Lane.LEFT if self.lane is Lane.RIGHT else Lane.RIGHT
        if gap_here < lookahead:
            gap_other = self.track.forward_gap(s, other)
            if gap_other > gap_here + p.shift_length:
                self._begin_shift(s, other)
            return
        if self.lane is Lane.LEFT:
            # Return to the right lane once the avoided obstacle is behind us
            # and the right lane ahead is clear.
            passed = self.track.backward_gap(s, Lane.RIGHT) >= p.return_margin
            clear = self.track.forward_gap(s, Lane.RIGHT) > lookahead + p.shift_length
            if passed and clear:
                self._begin_shift(s, Lane.RIGHT)

    def _begin_shift(self, s: float, to_lane: Lane) -> None:
        self._transition = (s, self._target_lateral_at(s), _lane_lateral(to_lane))
        self.lane = to_lane

    def _target_lateral_at(self, s: float) -> float:
        if self._transition is None:
            return _lane_lateral(self.lane)
        s_start, frm, to = self._transition
        progress = ((s - s_start) % self.track.total_length) / self.params.shift_length
        return frm + (to - frm) * _smoothstep(progress)

    def _in_maneuver(self) -> bool:
        return self._transition is not None or self.lane is not Lane.RIGHT

    # -- control --------------------------------------------------------------

    def action(self, state: SimState) -> np.ndarray:
        """(steering, torque) commands in [-1, 1] for the current state."""
        p = self.params
        dt = self.sim_config.dt
        self._advance_lane_state(state.arc_length, state.speed)
        # OU jitter with stationary std sigma
        decay = math.exp(-p.ou_theta * dt)
        spread = math.sqrt(1.0 - decay * decay)
        self._ou_d = self._ou_d * decay + p.ou_sigma_d * spread * self.rng.standard_normal()
        self._ou_v = self._ou_v * decay + p.ou_sigma_v * spread * self.rng.standard_normal()

        # pure pursuit toward the lateral target ahead
        l_d = min(max(p.pursuit_gain * state.speed, p.pursuit_min), p.pursuit_max)
        s_ahead = state.arc_length + l_d
        lat_target = self._target_lateral_at(s_ahead) + self._ou_d
        target = self.track.position_at(s_ahead, lat_target)
        rel = target - state.position
        alpha = _wrap(math.atan2(rel[1], rel[0]) - state.heading)
        dist = max(math.hypot(rel[0], rel[1]), 1e-6)
        kappa_cmd = 2.0 * math.sin(alpha) / dist
        psi_phys = math.atan(kappa_cmd * self.sim_config.wheelbase)
        steer = psi_phys / self.sim_config.max_steer

        # speed tracking against the static profile
        v_target = float(np.interp(state.arc_length % self.track.total_length,
                                   self._profile_grid, self._profile_v))
        if self._in_maneuver():
            v_target *= p.maneuver_speed_factor
        v_target = max(v_target + self._ou_v, 8.0 * KMH)
        torque = p.speed_kp * (v_target - state.speed)
        return np.array([min(max(steer, -1.0), 1.0), min(max(torque, -1.0), 1.0)])


def _wrap(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def scripted_expert_action(state: SimState, track: Track, params: ExpertParams,
                           rng: np.random.Generator) -> np.ndarray:
    """One-shot functional wrapper around ScriptedExpert."""
    return ScriptedExpert(track, params, rng).action(state)


def collect_demos(track: Track, rounds: int = 8, seed: int = 0,
                  params: ExpertParams | None = None) -> DemoLog:
    """Run the scripted expert for `rounds` complete laps at 10 Hz.

    Any termination is a configuration error: the expert must be safe on the
    track it demonstrates.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    expert = ScriptedExpert(track, params, np.random.default_rng(seed))
    sim = Simulator(track)
    start_v = float(np.interp(0.0, expert._profile_grid, expert._profile_v))
    state = sim.reset_at(0.0, lateral=LANE_CENTER_OFFSET, speed=start_v)
    recorder = EpisodeRecorder()
    logs: list[EpisodeLog] = []
    t = 0.0
    max_steps = int(rounds * 40000)
    for _ in range(max_steps):
        action = expert.action(state)
        prev_lap = state.lap_count
        state, term = sim.step(action)
        t += sim.config.dt
        if term is not TerminationKind.NONE:
            raise ExpertError(
                f"scripted expert terminated with {term.value} at sigma="
                f"{state.arc_length:.1f} on {track.name}; parameters unsafe")
        if state.lap_count > prev_lap:
            logs.append(recorder.to_log())
            recorder = EpisodeRecorder()
            if len(logs) >= rounds:
                break
        recorder.record(t, state, action[0], term.value)
    else:
        raise ExpertError(f"expert failed to complete {rounds} rounds in {max_steps} steps")
    return DemoLog(logs, driver=f"scripted-{seed}", track=track.name, seed=seed)


def save_demo(demo: DemoLog, path) -> None:
    write_demo_csv(demo, path)


def load_demo(path, track: Track | None = None) -> DemoLog:
    """Load and validate a demo CSV.

    Rows are re-sorted by (round, t); sigma is reconstructed by projection
    when the column is absent (requires the track); speeds above the 100 km/h
    limit, non-monotone time or a mismatched track id are rejected.
    """
    demo, columns = read_demo_csv(path)
    if track is not None and demo.track not in ("unknown", track.name):
        raise ExpertError(f"{path}: unknown track id {demo.track!r} "
                          f"(expected {track.name!r})")
    has_sigma = "sigma" in columns
    for k, rnd in enumerate(demo.rounds):
        if np.any(np.diff(rnd.t) <= 0):
            raise ExpertError(f"{path}: non-monotone time in round {k}")
        if np.any(rnd.v_kmh > 100.0 + 1e-9):
            raise ExpertError(f"{path}: speed above the 100 km/h limit in round {k}")
        if np.any(rnd.v_kmh < 0.0):
            raise ExpertError(f"{path}: negative speed in round {k}")
        if not has_sigma or np.any(~np.isfinite(rnd.sigma)):
            if track is None:
                raise ExpertError(f"{path}: sigma missing and no track provided")
            for i in range(len(rnd)):
                s, lat, _ = track.project((rnd.x[i], rnd.y[i]))
                rnd.sigma[i] = s
    return demo


def demo_variability(demo: DemoLog, lap_length: float, ds: float = 5.0):
    """Per-grid-point std of D across rounds (diagnostic for GP noise tuning)."""
    grid = np.arange(0.0, lap_length, ds)
    per_round = []
    for rnd in demo.rounds:
        order = np.argsort(rnd.sigma)
        per_round.append(np.interp(grid, rnd.sigma[order], rnd.d[order]))
    return grid, np.std(np.stack(per_round), axis=0)
