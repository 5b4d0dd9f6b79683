// Parser for the simulator's track files ("drivemimic-track v1"): centerline
// points, lane width and obstacle records, used purely for rendering.

export interface TrackObstacle {
  arcLength: number;
  lane: "left" | "right";
  halfX: number;
  halfY: number;
}

export interface TrackData {
  name: string;
  laneWidth: number;
  centerline: [number, number][];
  obstacles: TrackObstacle[];
}

export function parseTrack(text: string): TrackData {
  const lines = text.split(/\r?\n/);
  if (lines[0] !== "drivemimic-track v1") {
    throw new Error("not a drivemimic track file");
  }
  const track: TrackData = { name: "track", laneWidth: 6, centerline: [], obstacles: [] };
  let section = "";
  for (const raw of lines.slice(1)) {
    const line = raw.trim();
    if (!line) continue;
    if (line.startsWith("[")) {
      section = line;
      continue;
    }
    if (section === "") {
      const [key, ...rest] = line.split(" ");
      if (key === "name") track.name = rest.join(" ");
      if (key === "lane_width") track.laneWidth = Number(rest[0]);
    } else if (section === "[centerline]") {
      const [x, y] = line.split(" ").map(Number);
      track.centerline.push([x, y]);
    } else if (section === "[obstacles]") {
      const [s, lane, hx, hy] = line.split(" ");
      track.obstacles.push({
        arcLength: Number(s),
        lane: lane === "left" ? "left" : "right",
        halfX: Number(hx),
        halfY: Number(hy),
      });
    }
  }
  if (track.centerline.length < 4) throw new Error("track file has no centerline");
  return track;
}

/** Point and unit tangent/normal at an arc-length along the centerline. */
export function pointAt(track: TrackData, s: number): {
  x: number; y: number; tx: number; ty: number; nx: number; ny: number;
} {
  const pts = track.centerline;
  const lens: number[] = [];
  let total = 0;
  for (let i = 0; i + 1 < pts.length; i++) {
    const d = Math.hypot(pts[i + 1][0] - pts[i][0], pts[i + 1][1] - pts[i][1]);
    lens.push(d);
    total += d;
  }
  let rem = ((s % total) + total) % total;
  for (let i = 0; i < lens.length; i++) {
    if (rem <= lens[i] || i === lens.length - 1) {
      const t = lens[i] > 0 ? rem / lens[i] : 0;
      const [x0, y0] = pts[i];
      const [x1, y1] = pts[i + 1];
      const tx = (x1 - x0) / (lens[i] || 1);
      const ty = (y1 - y0) / (lens[i] || 1);
      return {
        x: x0 + (x1 - x0) * t,
        y: y0 + (y1 - y0) * t,
        tx,
        ty,
        nx: ty,  // right-of-travel normal
        ny: -tx,
      };
    }
    rem -= lens[i];
  }
  throw new Error("unreachable");
}
