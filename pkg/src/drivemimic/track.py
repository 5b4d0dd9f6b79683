"""Road geometry: closed-loop centerline, arc-length lookup, obstacles, road generation.

A track is a closed polyline centerline with a 6 m lane on each side.  The
polyline is the single source of truth: arc-length, projection, boundaries
and the ray-cast segment soup are all derived from it.  Tracks are immutable
after construction and safe to share between rollout workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from numba import njit

LANE_WIDTH = 6.0
ROAD_HALF_WIDTH = 6.0
LANE_CENTER_OFFSET = 3.0
# Barricade footprint (half extents along / across the road), well inside one lane.
OBSTACLE_HALF_EXTENT = (1.25, 0.5)

# Committed training-track geometry: 8 straights and 8 arcs.  Turn angles sum
# to 360 deg; straight lengths are nudged by a least-squares closure solve so
# the loop closes exactly.  Total length lands near 4.7 km.
_TRAINING_TURNS_DEG = (60.0, 90.0, -45.0, 75.0, 60.0, 90.0, -60.0, 90.0)
_TRAINING_RADII = (150.0, 120.0, 200.0, 100.0, 180.0, 90.0, 250.0, 110.0)
_TRAINING_STRAIGHT_TARGETS = (420.0,) * 8
# Committed obstacle stations (arc-length in meters): 9 right, 8 left.
_TRAINING_OBSTACLES_RIGHT = (180.0, 650.0, 1150.0, 1720.0, 2250.0, 2800.0, 3350.0, 3900.0, 4430.0)
_TRAINING_OBSTACLES_LEFT = (420.0, 900.0, 1450.0, 1980.0, 2520.0, 3080.0, 3620.0, 4160.0)

_ARC_CHORD = 3.0  # max chord length when discretizing arcs (sagitta < 2 cm at R=80)


class Lane(str, Enum):
    LEFT = "left"
    RIGHT = "right"


class TrackError(ValueError):
    """Invalid road specification or out-of-domain geometry query."""


@dataclass(frozen=True)
class Obstacle:
    """Static barricade centered on a lane at a given arc-length."""

    arc_length: float
    lane: Lane
    half_extent: tuple[float, float] = OBSTACLE_HALF_EXTENT

    @property
    def lateral(self) -> float:
        return LANE_CENTER_OFFSET if self.lane is Lane.RIGHT else -LANE_CENTER_OFFSET


@dataclass
class RoadSpec:
    """Parameters for procedural road generation."""

    kind: str  # training | alternating_50m | gaussian_spaced | gaussian_batched
    length: float = 3140.0
    seed: int = 0
    spacing_mean: float = 100.0
    spacing_std: float = 10.0
    batch_range: tuple[int, int] = (2, 4)

    KINDS = ("training", "alternating_50m", "gaussian_spaced", "gaussian_batched")

    def validate(self) -> None:
        if self.kind not in self.KINDS:
            raise TrackError(f"unknown road kind {self.kind!r}")
        if self.kind == "training":
            return
        if self.length < 200.0:
            raise TrackError(f"road length {self.length} m below the 200 m minimum")
        if self.spacing_mean <= 0:
            raise TrackError("spacing_mean must be positive")
        if self.spacing_std <= 0:
            raise TrackError("spacing_std must be positive")
        lo, hi = self.batch_range
        if not (2 <= lo <= hi <= 4):
            raise TrackError(f"batch_range {self.batch_range} must lie within [2, 4]")


class Track:
    """Closed-loop road with arc-length parameterization.

    centerline is an (N+1, 2) array whose last point equals the first.
    Arc-length runs over [0, total_length) along the polyline.
    """

    def __init__(self, centerline: np.ndarray, lane_width: float,
                 obstacles: list[Obstacle], name: str = "track",
                 segment_kappa: np.ndarray | None = None):
        pts = np.asarray(centerline, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
            raise TrackError("centerline must be an (N,2) array with N >= 4")
        if not np.allclose(pts[0], pts[-1], atol=1e-9):
            raise TrackError("centerline must close: last point must equal the first")
        pts[-1] = pts[0]
        self.centerline = pts
        self.lane_width = float(lane_width)
        self.obstacles = sorted(obstacles, key=lambda o: o.arc_length)
        self.name = name

        d = np.diff(pts, axis=0)  # (N, 2)
        self.segment_lengths = np.hypot(d[:, 0], d[:, 1])
        if np.any(self.segment_lengths <= 0):
            raise TrackError("degenerate centerline segment")
        self.total_length = float(self.segment_lengths.sum())
        self._cum = np.concatenate([[0.0], np.cumsum(self.segment_lengths)])
        self._seg_dir = d / self.segment_lengths[:, None]
        # Right-of-travel normal: rotate tangent by -90 deg.
        self._seg_normal = np.stack([self._seg_dir[:, 1], -self._seg_dir[:, 0]], axis=1)
        if segment_kappa is None:
            segment_kappa = self._estimate_kappa()
        self.segment_kappa = np.asarray(segment_kappa, dtype=float)

        for obs in self.obstacles:
            if not (0.0 <= obs.arc_length < self.total_length):
                raise TrackError(f"obstacle arc_length {obs.arc_length} outside [0, {self.total_length})")

        self._boundaries = tuple(self._offset_polyline(side * ROAD_HALF_WIDTH) for side in (1.0, -1.0))
        self._obstacle_polys = [self._obstacle_polygon(o) for o in self.obstacles]
        self._build_segment_soup()
        self._obs_arcs = {
            Lane.RIGHT: np.array([o.arc_length for o in self.obstacles if o.lane is Lane.RIGHT]),
            Lane.LEFT: np.array([o.arc_length for o in self.obstacles if o.lane is Lane.LEFT]),
        }

    # -- construction helpers ------------------------------------------------

    def _estimate_kappa(self) -> np.ndarray:
        # Discrete curvature per segment from the turn angle at its end vertex.
        n = len(self.segment_lengths)
        kappa = np.zeros(n)
        for i in range(n):
            d0 = self._seg_dir[i]
            d1 = self._seg_dir[(i + 1) % n]
            turn = math.atan2(d0[0] * d1[1] - d0[1] * d1[0], d0 @ d1)
            ds = 0.5 * (self.segment_lengths[i] + self.segment_lengths[(i + 1) % n])
            kappa[i] = turn / ds
        return kappa

    def _offset_polyline(self, offset: float) -> np.ndarray:
        # Vertex normals averaged over the adjacent segments with miter correction.
        n = len(self.segment_lengths)
        prev_idx = np.arange(-1, n)  # normal of segment before each vertex
        next_idx = np.arange(0, n + 1) % n
        n_prev = self._seg_normal[prev_idx]
        n_next = self._seg_normal[next_idx]
        avg = n_prev + n_next
        norm = np.hypot(avg[:, 0], avg[:, 1])
        norm = np.where(norm < 1e-12, 1.0, norm)
        unit = avg / norm[:, None]
        cos_half = np.clip(np.einsum("ij,ij->i", unit, n_next), 0.2, 1.0)
        out = self.centerline + unit * (offset / cos_half)[:, None]
        out[-1] = out[0]
        return out

    def _obstacle_polygon(self, obs: Obstacle) -> np.ndarray:
        center = self.centerline_point(obs.arc_length) + self.normal(obs.arc_length) * obs.lateral
        t = self.tangent(obs.arc_length)
        nrm = self.normal(obs.arc_length)
        hx, hy = obs.half_extent
        return np.array([
            center + hx * t + hy * nrm,
            center - hx * t + hy * nrm,
            center - hx * t - hy * nrm,
            center + hx * t - hy * nrm,
        ])

    @staticmethod
    def _decimate(poly: np.ndarray, tol: float = 0.1) -> np.ndarray:
        # Greedy chord reduction: drop vertices while intermediate points stay
        # within `tol` of the chord.  Only used for the ray soup.
        keep = [0]
        i = 0
        n = len(poly)
        while i < n - 1:
            best = i + 1
            j = i + 2
            while j < n and j - i <= 60:
                chord = poly[j] - poly[i]
                norm = np.hypot(chord[0], chord[1])
                if norm < 1e-12:
                    break
                rel = poly[i + 1:j] - poly[i]
                dev = np.abs(rel[:, 0] * chord[1] - rel[:, 1] * chord[0]) / norm
                if dev.max() > tol:
                    break
                best = j
                j += 1
            keep.append(best)
            i = best
        return poly[keep]

    def _build_segment_soup(self) -> None:
        # Static segment soup for ray casting: both road boundaries plus
        # obstacle outlines, stored as (start, delta) pairs.
        starts, deltas = [], []
        for full in self._boundaries:
            poly = self._decimate(full)
            starts.append(poly[:-1])
            deltas.append(np.diff(poly, axis=0))
        for quad in self._obstacle_polys:
            closed = np.vstack([quad, quad[:1]])
            starts.append(closed[:-1])
            deltas.append(np.diff(closed, axis=0))
        self._soup_start = np.vstack(starts)
        self._soup_delta = np.vstack(deltas)
        self._soup_mid = self._soup_start + 0.5 * self._soup_delta
        self._soup_reach = 0.5 * np.hypot(self._soup_delta[:, 0], self._soup_delta[:, 1])

    # -- arc-length parameterization ----------------------------------------

    def _locate(self, s):
        s = np.asarray(s, dtype=float) % self.total_length
        idx = np.clip(np.searchsorted(self._cum, s, side="right") - 1, 0, len(self.segment_lengths) - 1)
        frac = s - self._cum[idx]
        return idx, frac

    def centerline_point(self, s):
        """Point on the centerline at arc-length s (scalar or array)."""
        idx, frac = self._locate(s)
        pt = self.centerline[idx] + self._seg_dir[idx] * np.expand_dims(frac, -1)
        return pt

    def tangent(self, s):
        idx, _ = self._locate(s)
        return self._seg_dir[idx]

    def tangent_heading(self, s):
        t = self.tangent(s)
        return np.arctan2(t[..., 1], t[..., 0])

    def normal(self, s):
        """Unit normal pointing toward the right road boundary."""
        idx, _ = self._locate(s)
        return self._seg_normal[idx]

    def curvature(self, s):
        idx, _ = self._locate(s)
        return self.segment_kappa[idx]

    def position_at(self, s, lateral):
        """World position at arc-length s and signed lateral offset."""
        return self.centerline_point(s) + self.normal(s) * np.expand_dims(np.asarray(lateral, float), -1)

    def project(self, point) -> tuple[float, float, float]:
        """Project a world point onto the centerline.

        Returns (arc_length, lateral, tangent_heading).  Lateral is signed
        track position D, positive toward the right boundary.  Points farther
        than 50 m from the centerline are out of domain.
        """
        p = np.asarray(point, dtype=float)
        rel = p[None, :] - self.centerline[:-1]
        t = np.einsum("ij,ij->i", rel, self._seg_dir)
        t = np.clip(t, 0.0, self.segment_lengths)
        closest = self.centerline[:-1] + self._seg_dir * t[:, None]
        diff = p[None, :] - closest
        dist2 = np.einsum("ij,ij->i", diff, diff)
        i = int(np.argmin(dist2))
        dist = math.sqrt(dist2[i])
        if dist > 50.0:
            raise TrackError(f"point {p.tolist()} is {dist:.1f} m from the centerline (max 50 m)")
        # Signed distance to the curve: magnitude from the true distance (the
        # perpendicular component alone lets a point slip past a clamped
        # segment end), sign from the side of the nearest segment.
        side = float(diff[i] @ self._seg_normal[i])
        lateral = math.copysign(dist, side) if side != 0.0 else dist
        s = float((self._cum[i] + t[i]) % self.total_length)
        heading = math.atan2(self._seg_dir[i, 1], self._seg_dir[i, 0])
        return s, lateral, heading

    # -- obstacle queries ----------------------------------------------------

    def obstacle_polygons(self) -> list[np.ndarray]:
        return self._obstacle_polys

    def obstacle_arcs(self, lane: Lane) -> np.ndarray:
        return self._obs_arcs[lane]

    def forward_gap(self, s: float, lane: Lane) -> float:
        """Arc-length gap to the nearest obstacle ahead in `lane` (inf if none)."""
        arcs = self._obs_arcs[lane]
        if arcs.size == 0:
            return math.inf
        gaps = (arcs - s) % self.total_length
        return float(gaps.min())

    def backward_gap(self, s: float, lane: Lane) -> float:
        arcs = self._obs_arcs[lane]
        if arcs.size == 0:
            return math.inf
        gaps = (s - arcs) % self.total_length
        return float(gaps.min())

    # -- ray casting ----------------------------------------------------------

    def cast_rays(self, origin, angles, max_range: float = 300.0) -> np.ndarray:
        """Distance along each ray to the nearest boundary or obstacle edge.

        Rays that hit nothing within max_range return max_range.
        """
        origin = np.asarray(origin, dtype=float)
        angles = np.asarray(angles, dtype=float)
        # Only segments whose midpoint can be within reach matter.
        rel_mid = self._soup_mid - origin
        within = np.hypot(rel_mid[:, 0], rel_mid[:, 1]) <= max_range + self._soup_reach
        p0 = self._soup_start[within]
        dd = self._soup_delta[within]
        if p0.shape[0] == 0:
            return np.full(angles.shape, max_range)
        out = np.empty(angles.shape[0])
        _ray_kernel(np.cos(angles), np.sin(angles),
                    np.ascontiguousarray(p0[:, 0] - origin[0]),
                    np.ascontiguousarray(p0[:, 1] - origin[1]),
                    np.ascontiguousarray(dd[:, 0]), np.ascontiguousarray(dd[:, 1]),
                    max_range, out)
        return out

    # -- serialization ---------------------------------------------------------

    def to_file(self, path) -> None:
        write_track(self, path)


@njit(cache=True)
def _ray_kernel(ux, uy, qx, qy, dx, dy, max_range, out):
    # Ray p + t*u against segment q0 + s*d:
    #   t = cross(q, d) / cross(u, d),  s = cross(q, u) / cross(u, d).
    n_rays = ux.shape[0]
    n_segs = qx.shape[0]
    for i in range(n_rays):
        best = max_range
        for j in range(n_segs):
            denom = ux[i] * dy[j] - uy[i] * dx[j]
            if denom == 0.0:
                continue
            t = (qx[j] * dy[j] - qy[j] * dx[j]) / denom
            if t <= 1e-9 or t >= best:
                continue
            s = (qx[j] * uy[i] - qy[j] * ux[i]) / denom
            if 0.0 <= s <= 1.0:
                best = t
        out[i] = best


# -- closed-loop construction ----------------------------------------------


def _solve_closure(headings: np.ndarray, arc_disp: np.ndarray,
                   targets: np.ndarray) -> np.ndarray:
    """Straight lengths closest to `targets` that close the loop exactly.

    The loop displacement is sum_i L_i * u(h_i) + sum_i arc_disp_i = 0; the
    2-constraint least-squares correction has a closed form.
    """
    u = np.stack([np.cos(headings), np.sin(headings)], axis=0)  # (2, n)
    c = -arc_disp.sum(axis=0)
    resid = c - u @ targets
    lam = np.linalg.solve(u @ u.T, resid)
    return targets + u.T @ lam


def _compose_loop(turns_deg, radii, straights) -> tuple[np.ndarray, np.ndarray]:
    """Discretize alternating straight/arc segments into a closed polyline.

    Returns (points, per-segment curvature of the generating primitive).
    """
    pts = [np.zeros(2)]
    kappa: list[float] = []
    heading = 0.0
    for turn_deg, radius, length in zip(turns_deg, radii, straights):
        p = pts[-1]
        # straight
        end = p + length * np.array([math.cos(heading), math.sin(heading)])
        pts.append(end)
        kappa.append(0.0)
        # arc
        turn = math.radians(turn_deg)
        sign = 1.0 if turn >= 0 else -1.0
        center = pts[-1] + radius * np.array([-math.sin(heading), math.cos(heading)]) * sign
        phi0 = math.atan2(pts[-1][1] - center[1], pts[-1][0] - center[0])
        n_sub = max(2, int(math.ceil(radius * abs(turn) / _ARC_CHORD)))
        for k in range(1, n_sub + 1):
            phi = phi0 + turn * k / n_sub
            pts.append(center + radius * np.array([math.cos(phi), math.sin(phi)]))
            kappa.append(sign / radius)
        heading += turn
    pts[-1] = pts[0]
    return np.array(pts), np.array(kappa)


def _arc_displacements(turns_deg, radii, headings) -> np.ndarray:
    disp = np.zeros((len(radii), 2))
    for i, (turn_deg, radius, h) in enumerate(zip(turns_deg, radii, headings)):
        turn = math.radians(turn_deg)
        sign = 1.0 if turn >= 0 else -1.0
        # Arc from heading h to h+turn around a center offset left/right of travel.
        c = radius * sign * np.array([-math.sin(h), math.cos(h)])
        phi0 = math.atan2(-c[1], -c[0])
        phi1 = phi0 + turn
        disp[i] = c + radius * np.array([math.cos(phi1), math.sin(phi1)])
    return disp


def _build_loop(turns_deg, radii, straight_targets, name, obstacles) -> Track:
    turns = np.asarray(turns_deg, dtype=float)
    if abs(turns.sum() - 360.0) > 1e-9 and abs(turns.sum() + 360.0) > 1e-9:
        raise TrackError("turn angles must sum to +-360 degrees")
    headings = np.radians(np.concatenate([[0.0], np.cumsum(turns)[:-1]]))
    arc_disp = _arc_displacements(turns, radii, headings)
    straights = _solve_closure(headings, arc_disp, np.asarray(straight_targets, float))
    if np.any(straights < 10.0):
        raise TrackError("closure solve produced a straight below 10 m; adjust targets")
    pts, kappa = _compose_loop(turns, radii, straights)
    return Track(pts, LANE_WIDTH, obstacles, name=name, segment_kappa=kappa)


def build_training_track() -> Track:
    """The committed ~4.7 km training loop with 9 right / 8 left obstacles."""
    obstacles = [Obstacle(s, Lane.RIGHT) for s in _TRAINING_OBSTACLES_RIGHT]
    obstacles += [Obstacle(s, Lane.LEFT) for s in _TRAINING_OBSTACLES_LEFT]
    return _build_loop(_TRAINING_TURNS_DEG, _TRAINING_RADII, _TRAINING_STRAIGHT_TARGETS,
                       "training-v1", obstacles)


def _procedural_loop(length: float, rng: np.random.Generator, name: str) -> Track:
    """Random closed loop of straights and arcs near the requested length."""
    r_lo = min(max(length / 40.0, 25.0), 80.0)
    r_hi = min(max(length / 12.0, 60.0), 250.0)
    for _ in range(64):
        n = int(rng.integers(6, 9))
        raw = rng.uniform(35.0, 100.0, size=n) * rng.choice([1.0, 1.0, 1.0, -1.0], size=n)
        pos = raw[raw > 0].sum()
        neg = raw[raw < 0].sum()
        if pos <= abs(neg) + 60.0:
            continue
        raw[raw > 0] *= (360.0 - neg) / pos
        radii = rng.uniform(r_lo, r_hi, size=n)
        arc_total = float(np.sum(radii * np.abs(np.radians(raw))))
        straight_total = length - arc_total
        if straight_total < 0.2 * length:
            continue
        targets = rng.uniform(0.6, 1.4, size=n)
        targets *= straight_total / targets.sum()
        try:
            track = _build_loop(raw, radii, targets, name, [])
        except TrackError:
            continue
        if abs(track.total_length - length) < 0.15 * length:
            return track
    raise TrackError(f"could not generate a closed loop of length {length} m")


def _place_alternating(total_length: float) -> list[Obstacle]:
    count = int(math.floor(total_length / 50.0))
    lanes = (Lane.RIGHT, Lane.LEFT)
    return [Obstacle(50.0 * k, lanes[k % 2]) for k in range(count)]


def _truncated_gap(rng: np.random.Generator, mean: float, std: float) -> float:
    for _ in range(1000):
        g = rng.normal(mean, std)
        if g > 20.0:
            return g
    raise TrackError("gap sampling failed: distribution mass below the 20 m floor")


def _place_gaussian(total_length: float, rng, mean, std) -> list[Obstacle]:
    obstacles = []
    s = _truncated_gap(rng, mean, std)
    while s < total_length - 30.0:
        lane = Lane.RIGHT if rng.random() < 0.5 else Lane.LEFT
        obstacles.append(Obstacle(s, lane))
        s += _truncated_gap(rng, mean, std)
    return obstacles


def _place_batched(total_length: float, rng, mean, std, batch_range) -> list[Obstacle]:
    lo, hi = batch_range
    obstacles = []
    s = _truncated_gap(rng, mean, std)
    while s < total_length - 30.0:
        run = int(rng.integers(lo, hi + 1))
        lane = Lane.RIGHT if rng.random() < 0.5 else Lane.LEFT
        for k in range(run):
            pos = s + 20.0 * k
            if pos >= total_length - 10.0:
                break
            obstacles.append(Obstacle(pos, lane))
        s = obstacles[-1].arc_length + _truncated_gap(rng, mean, std)
    return obstacles


def generate_road(spec: RoadSpec) -> Track:
    """Procedurally generate a road; a pure function of the spec (incl. seed)."""
    spec.validate()
    if spec.kind == "training":
        return build_training_track()
    rng = np.random.default_rng(spec.seed)
    name = f"gen-{spec.kind}-{spec.seed}-{int(spec.length)}"
    track = _procedural_loop(spec.length, rng, name)
    if spec.kind == "alternating_50m":
        obstacles = _place_alternating(track.total_length)
    elif spec.kind == "gaussian_spaced":
        obstacles = _place_gaussian(track.total_length, rng, spec.spacing_mean, spec.spacing_std)
    else:
        obstacles = _place_batched(track.total_length, rng, spec.spacing_mean,
                                   spec.spacing_std, spec.batch_range)
    return Track(track.centerline, LANE_WIDTH, obstacles, name=name,
                 segment_kappa=track.segment_kappa)


# Committed desk-scale geometry, matching the published road's mostly-straight
# character: four 90-degree corners joined by long straights (58% of the lap),
# with three obstacles on the straights, alternating lanes.
_COMPACT_TURNS = (90.0, 90.0, 90.0, 90.0)
_COMPACT_RADII = (40.0, 40.0, 40.0, 40.0)
_COMPACT_STRAIGHT_TARGETS = (87.0, 87.0, 87.0, 87.0)
_COMPACT_OBSTACLES = ((45.0, Lane.RIGHT), (192.0, Lane.LEFT), (340.0, Lane.RIGHT))


def build_compact_track() -> Track:
    """Desk-scale ~600 m loop with 3 obstacles, used by the scaled experiments."""
    obstacles = [Obstacle(s, lane) for s, lane in _COMPACT_OBSTACLES]
    return _build_loop(_COMPACT_TURNS, _COMPACT_RADII, _COMPACT_STRAIGHT_TARGETS,
                       "compact-v1", obstacles)


# -- serialization ------------------------------------------------------------
#
# Structured text schema (all floats via repr for bit-exact round trips):
#   line 1:  "drivemimic-track v1"
#   "name <name>" / "lane_width <w>"
#   "[centerline]" then one "x y" pair per line
#   "[kappa]" then one curvature per segment per line
#   "[obstacles]" then "arc_length lane half_x half_y" per line


def write_track(track: Track, path) -> None:
    lines = ["drivemimic-track v1", f"name {track.name}", f"lane_width {track.lane_width!r}"]
    lines.append("[centerline]")
    lines.extend(f"{float(x)!r} {float(y)!r}" for x, y in track.centerline)
    lines.append("[kappa]")
    lines.extend(f"{float(k)!r}" for k in track.segment_kappa)
    lines.append("[obstacles]")
    lines.extend(
        f"{o.arc_length!r} {o.lane.value} {o.half_extent[0]!r} {o.half_extent[1]!r}"
        for o in track.obstacles
    )
    tmp = Path(str(path) + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def read_track(path) -> Track:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "drivemimic-track v1":
        raise TrackError(f"{path}: not a drivemimic track file")
    name, lane_width = "track", LANE_WIDTH
    section = None
    pts: list[list[float]] = []
    kappa: list[float] = []
    obstacles: list[Obstacle] = []
    for line in lines[1:]:
        line = line.strip()
        if not line:
            continue
        if line.startswith("["):
            section = line
            continue
        if section is None:
            key, _, value = line.partition(" ")
            if key == "name":
                name = value
            elif key == "lane_width":
                lane_width = float(value)
            continue
        if section == "[centerline]":
            x, y = line.split()
            pts.append([float(x), float(y)])
        elif section == "[kappa]":
            kappa.append(float(line))
        elif section == "[obstacles]":
            s, lane, hx, hy = line.split()
            obstacles.append(Obstacle(float(s), Lane(lane), (float(hx), float(hy))))
    return Track(np.array(pts), lane_width, obstacles, name=name,
                 segment_kappa=np.array(kappa) if kappa else None)
