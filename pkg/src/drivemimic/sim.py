"""Vehicle simulator: kinematic bicycle dynamics, 288-ray range sensor,
observation assembly and termination detection at a fixed 10 Hz control rate.

Internal units are SI (m, m/s, rad, s); km/h and degrees appear only at
interfaces.  One Simulator instance is single-threaded; run independent
instances (each with its own rng) for parallel rollouts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .track import LANE_CENTER_OFFSET, ROAD_HALF_WIDTH, Lane, Track

KMH = 1.0 / 3.6  # km/h expressed in m/s

N_RAYS = 288
RAY_STEP = math.radians(1.25)
RAY_MAX = 300.0
N_SCALARS = 11
OBS_DIM = 2 * N_SCALARS + N_RAYS  # 310


class TerminationKind(str, Enum):
    NONE = "none"
    OBSTACLE_COLLISION = "obstacle_collision"
    OFF_ROAD = "off_road"
    TOO_SLOW = "too_slow"
    WRONG_WAY = "wrong_way"


@dataclass
class SimConfig:
    dt: float = 0.1
    substeps: int = 10
    wheelbase: float = 2.6
    steer_lag: float = 0.2            # first-order steering actuator time constant (s)
    max_steer: float = math.radians(25.0)
    accel_max: float = 4.0            # m/s^2 at full throttle
    brake_max: float = 8.0            # m/s^2 at full brake
    v_max: float = 100.0 * KMH
    v_too_slow: float = 5.0 * KMH
    too_slow_grace: float = 3.0       # s after reset before too_slow can fire
    wrong_way_window: float = 1.0     # s of negative tangential speed
    car_half_length: float = 2.25
    car_half_width: float = 0.9
    reset_v_lo: float = 30.0 * KMH
    reset_v_hi: float = 90.0 * KMH


@dataclass
class SimState:
    position: np.ndarray              # (2,) m
    heading: float                    # rad, wrapped to [-pi, pi]
    speed: float                      # m/s
    steering: float                   # actual front-wheel angle, rad
    torque: float                     # last applied torque command in [-1, 1]
    steer_cmd: float = 0.0            # last applied steering command in [-1, 1]
    arc_length: float = 0.0           # sigma, m
    lateral: float = 0.0              # D, m
    tangent_heading: float = 0.0
    odometer: float = 0.0             # accumulated Euclidean distance, m
    lap_count: int = 0
    time_step: int = 0

    def copy(self) -> "SimState":
        c = SimState(**{k: v for k, v in self.__dict__.items()})
        c.position = self.position.copy()
        return c


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def scale(value, rng: tuple[float, float], target: tuple[float, float]):
    """Affine map from rng to target; inputs are clamped to rng first."""
    lo, hi = rng
    if not hi > lo:
        raise ValueError(f"degenerate range {rng}")
    t0, t1 = target
    v = np.clip(value, lo, hi)
    return t0 + (v - lo) * (t1 - t0) / (hi - lo)


def unscale(value, rng: tuple[float, float], target: tuple[float, float]):
    """Inverse of `scale` on the clamp-free interior."""
    lo, hi = rng
    t0, t1 = target
    if not t1 > t0:
        raise ValueError(f"degenerate target {target}")
    return lo + (np.asarray(value) - t0) * (hi - lo) / (t1 - t0)


# Table-driven scaling of the 11 state scalars:
# psi, tau, V, theta, D, D_r, D_l, delta_fr, delta_fl, delta_br, delta_bl
SCALAR_RANGES = (
    (-math.radians(25.0), math.radians(25.0)),
    (-1.0, 1.0),
    (0.0, 100.0),
    (-math.pi, math.pi),
    (-6.0, 6.0),
    (-9.0, 3.0),
    (-3.0, 9.0),
    (0.0, 300.0),
    (0.0, 300.0),
    (0.0, 300.0),
    (0.0, 300.0),
)
SCALAR_TARGETS = (
    (-1.0, 1.0),
    (-1.0, 1.0),
    (0.0, 1.0),
    (-1.0, 1.0),
    (-1.0, 1.0),
    (-1.0, 1.0 / 3.0),
    (-1.0 / 3.0, 1.0),
    (0.0, 1.0),
    (0.0, 1.0),
    (0.0, 1.0),
    (0.0, 1.0),
)


_SC_LO = np.array([r[0] for r in SCALAR_RANGES])
_SC_HI = np.array([r[1] for r in SCALAR_RANGES])
_SC_T0 = np.array([t[0] for t in SCALAR_TARGETS])
_SC_GAIN = np.array([(t[1] - t[0]) / (r[1] - r[0])
                     for t, r in zip(SCALAR_TARGETS, SCALAR_RANGES)])


def scale_scalars(raw: np.ndarray) -> np.ndarray:
    """Vectorized Table-I scaling of the 11 raw scalars."""
    return _SC_T0 + (np.clip(raw, _SC_LO, _SC_HI) - _SC_LO) * _SC_GAIN


def assemble_observation(current: np.ndarray, previous: np.ndarray,
                         ranges: np.ndarray) -> np.ndarray:
    """Stack [scaled current 11 | scaled previous 11 | scaled ranges 288]."""
    current = np.asarray(current, dtype=float)
    previous = np.asarray(previous, dtype=float)
    ranges = np.asarray(ranges, dtype=float)
    if current.shape != (N_SCALARS,) or previous.shape != (N_SCALARS,):
        raise ValueError(f"scalar blocks must have {N_SCALARS} entries")
    if ranges.shape != (N_RAYS,):
        raise ValueError(f"range block must have {N_RAYS} entries")
    return np.concatenate([current, previous, ranges])


class Simulator:
    """Single-vehicle simulator on an immutable track."""

    def __init__(self, track: Track, config: SimConfig | None = None,
                 rng: np.random.Generator | None = None):
        self.track = track
        self.config = config or SimConfig()
        self.rng = rng or np.random.default_rng(0)
        self._ray_offsets = np.arange(N_RAYS) * RAY_STEP
        self.state: SimState | None = None
        self._cur_scalars = np.zeros(N_SCALARS)
        self._prev_scalars = np.zeros(N_SCALARS)
        self._wrong_way_steps = 0
        self._steps_since_reset = 0
        self._last_termination = TerminationKind.NONE

    # -- resets ---------------------------------------------------------------

    def reset(self, rng: np.random.Generator | None = None) -> SimState:
        """Reference-state initialization: random station on the right-lane
        center, heading along the tangent, speed ~ U(30, 90) km/h."""
        rng = rng or self.rng
        cfg = self.config
        for _ in range(100):
            s = float(rng.uniform(0.0, self.track.total_length))
            # Do not spawn on top of (or immediately behind) a right-lane obstacle.
            if self.track.forward_gap(s, Lane.RIGHT) > 30.0 and \
               self.track.backward_gap(s, Lane.RIGHT) > 10.0:
                break
        v = float(rng.uniform(cfg.reset_v_lo, cfg.reset_v_hi))
        return self.reset_at(s, lateral=LANE_CENTER_OFFSET, speed=v)

    def reset_at(self, arc_length: float, lateral: float = LANE_CENTER_OFFSET,
                 speed: float = 60.0 * KMH) -> SimState:
        track = self.track
        s = arc_length % track.total_length
        pos = track.centerline_point(s) + track.normal(s) * lateral
        heading = float(track.tangent_heading(s))
        self.state = SimState(position=pos, heading=heading, speed=speed,
                              steering=0.0, torque=0.0, arc_length=s,
                              lateral=lateral, tangent_heading=heading)
        self._wrong_way_steps = 0
        self._steps_since_reset = 0
        self._last_termination = TerminationKind.NONE
        self._cur_scalars = scale_scalars(self._raw_scalars(self.state))
        self._prev_scalars = self._cur_scalars.copy()
        return self.state

    # -- stepping ---------------------------------------------------------------

    def step(self, action) -> tuple[SimState, TerminationKind]:
        """Advance one 0.1 s control step under (steering, torque) in [-1,1]^2."""
        if self.state is None:
            raise RuntimeError("step before reset")
        a = np.asarray(action, dtype=float).reshape(2)
        if not np.all(np.isfinite(a)):
            raise ValueError(f"non-finite action {a}")
        cfg = self.config
        st = self.state
        steer_cmd = float(np.clip(a[0], -1.0, 1.0))
        torque = float(np.clip(a[1], -1.0, 1.0))
        psi_target = steer_cmd * cfg.max_steer

        h = cfg.dt / cfg.substeps
        decay = math.exp(-h / cfg.steer_lag)
        x, y = st.position
        heading, speed, psi = st.heading, st.speed, st.steering
        accel = cfg.accel_max * torque if torque >= 0.0 else cfg.brake_max * torque
        dist = 0.0
        for _ in range(cfg.substeps):
            psi = psi_target + (psi - psi_target) * decay
            speed = min(max(speed + accel * h, 0.0), cfg.v_max)
            heading += (speed / cfg.wheelbase) * math.tan(psi) * h
            step_len = speed * h
            x += step_len * math.cos(heading)
            y += step_len * math.sin(heading)
            dist += step_len

        st.position = np.array([x, y])
        st.heading = wrap_angle(heading)
        st.speed = speed
        st.steering = psi
        st.steer_cmd = steer_cmd
        st.torque = torque
        st.odometer += dist
        st.time_step += 1
        self._steps_since_reset += 1

        prev_s = st.arc_length
        s, lateral, tang = self.track.project(st.position)
        # Lap wrap: a large negative jump in sigma while moving forward.
        if s - prev_s < -0.5 * self.track.total_length:
            st.lap_count += 1
        elif s - prev_s > 0.5 * self.track.total_length:
            st.lap_count -= 1
        st.arc_length, st.lateral, st.tangent_heading = s, lateral, tang

        self._prev_scalars = self._cur_scalars
        self._cur_scalars = scale_scalars(self._raw_scalars(st))
        termination = self._check_termination(st)
        self._last_termination = termination
        return st, termination

    def _check_termination(self, st: SimState) -> TerminationKind:
        cfg = self.config
        if self._collides(st):
            return TerminationKind.OBSTACLE_COLLISION
        if abs(st.lateral) > ROAD_HALF_WIDTH:
            return TerminationKind.OFF_ROAD
        if st.speed < cfg.v_too_slow and \
           self._steps_since_reset > round(cfg.too_slow_grace / cfg.dt):
            return TerminationKind.TOO_SLOW
        tangential = st.speed * math.cos(st.heading - st.tangent_heading)
        if tangential < 0.0:
            self._wrong_way_steps += 1
            if self._wrong_way_steps >= round(cfg.wrong_way_window / cfg.dt):
                return TerminationKind.WRONG_WAY
        else:
            self._wrong_way_steps = 0
        return TerminationKind.NONE

    def _car_corners(self, st: SimState) -> np.ndarray:
        cfg = self.config
        fwd = np.array([math.cos(st.heading), math.sin(st.heading)])
        left = np.array([-fwd[1], fwd[0]])
        hl, hw = cfg.car_half_length, cfg.car_half_width
        c = st.position
        return np.array([c + hl * fwd + hw * left, c - hl * fwd + hw * left,
                         c - hl * fwd - hw * left, c + hl * fwd - hw * left])

    def _collides(self, st: SimState) -> bool:
        track = self.track
        car = None
        for obs, poly in zip(track.obstacles, track.obstacle_polygons()):
            gap = abs(obs.arc_length - st.arc_length)
            gap = min(gap, track.total_length - gap)
            if gap > 30.0:
                continue
            if car is None:
                car = self._car_corners(st)
            if _obb_overlap(car, poly):
                return True
        return False

    # -- sensing and observations --------------------------------------------

    def sense_rays(self, state: SimState | None = None) -> np.ndarray:
        """Raw range readings in meters, ray i at heading + i * 1.25 deg."""
        st = state or self.state
        angles = st.heading + self._ray_offsets
        return self.track.cast_rays(st.position, angles, RAY_MAX)

    def nearest_obstacles(self, state: SimState | None = None) -> tuple[float, float, float, float]:
        """(front-right, front-left, back-right, back-left) arc gaps, capped at 300 m."""
        st = state or self.state
        s = st.arc_length
        fr = min(self.track.forward_gap(s, Lane.RIGHT), RAY_MAX)
        fl = min(self.track.forward_gap(s, Lane.LEFT), RAY_MAX)
        br = min(self.track.backward_gap(s, Lane.RIGHT), RAY_MAX)
        bl = min(self.track.backward_gap(s, Lane.LEFT), RAY_MAX)
        return fr, fl, br, bl

    def _raw_scalars(self, st: SimState) -> np.ndarray:
        fr, fl, br, bl = self.nearest_obstacles(st)
        d = st.lateral
        return np.array([
            st.steering, st.torque, st.speed / KMH, st.heading,
            d, d - LANE_CENTER_OFFSET, d + LANE_CENTER_OFFSET,
            fr, fl, br, bl,
        ])

    def observe(self) -> np.ndarray:
        """310-dim scaled observation for the current state (idempotent)."""
        st = self.state
        if abs(st.lateral) > ROAD_HALF_WIDTH:
            ranges_scaled = np.full(N_RAYS, -1.0)
        else:
            ranges_scaled = scale(self.sense_rays(st), (0.0, RAY_MAX), (0.0, 1.0))
        return assemble_observation(self._cur_scalars, self._prev_scalars, ranges_scaled)


def _obb_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    # Separating-axis test for two convex quads (edge normals of both).
    for quad in (a, b):
        for i in range(4):
            edge = quad[(i + 1) % 4] - quad[i]
            axis = np.array([-edge[1], edge[0]])
            pa = a @ axis
            pb = b @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True
