// Canvas top-down renderer: road band, lane line, obstacles, car, sensor fan
// and HUD.  Pure drawing; all state comes from the caller.

import { StateMsg } from "./protocol.js";
import { TrackData, pointAt } from "./trackdata.js";

export interface Camera {
  cx: number;
  cy: number;
  scale: number; // px per meter
}

export function worldToScreen(cam: Camera, w: number, h: number,
                              x: number, y: number): [number, number] {
  return [w / 2 + (x - cam.cx) * cam.scale, h / 2 - (y - cam.cy) * cam.scale];
}

export class TrackRenderer {
  constructor(private ctx: CanvasRenderingContext2D, public track: TrackData | null) {}

  private get canvas(): HTMLCanvasElement {
    return this.ctx.canvas;
  }

  draw(cam: Camera, state: StateMsg | null, banner: string | null): void {
    const { ctx } = this;
    const w = this.canvas.width;
    const h = this.canvas.height;
    ctx.fillStyle = "#1c2b1c";
    ctx.fillRect(0, 0, w, h);
    if (this.track) this.drawRoad(cam, w, h);
    if (state) {
      this.drawSensorFan(cam, w, h, state);
      this.drawCar(cam, w, h, state);
      this.drawHud(state);
    }
    if (banner) this.drawBanner(banner, w, h);
  }

  private path(cam: Camera, w: number, h: number, pts: [number, number][]): void {
    const { ctx } = this;
    ctx.beginPath();
    pts.forEach(([x, y], i) => {
      const [sx, sy] = worldToScreen(cam, w, h, x, y);
      if (i === 0) ctx.moveTo(sx, sy);
      else ctx.lineTo(sx, sy);
    });
  }

  private drawRoad(cam: Camera, w: number, h: number): void {
    const { ctx } = this;
    const track = this.track!;
    ctx.lineJoin = "round";
    // road band: stroke the centerline at full road width
    this.path(cam, w, h, track.centerline);
    ctx.strokeStyle = "#3a3a40";
    ctx.lineWidth = 2 * track.laneWidth * cam.scale;
    ctx.stroke();
    // dashed center line
    this.path(cam, w, h, track.centerline);
    ctx.strokeStyle = "#e8e48a";
    ctx.lineWidth = Math.max(1, 0.15 * cam.scale);
    ctx.setLineDash([4 * cam.scale, 4 * cam.scale]);
    ctx.stroke();
    ctx.setLineDash([]);
    for (const obs of track.obstacles) {
      const p = pointAt(track, obs.arcLength);
      const side = obs.lane === "right" ? 1 : -1;
      const cx = p.x + p.nx * side * (track.laneWidth / 2);
      const cy = p.y + p.ny * side * (track.laneWidth / 2);
      ctx.save();
      const [sx, sy] = worldToScreen(cam, w, h, cx, cy);
      ctx.translate(sx, sy);
      ctx.rotate(-Math.atan2(p.ty, p.tx));
      ctx.fillStyle = "#d1442e";
      ctx.fillRect(-obs.halfX * cam.scale, -obs.halfY * cam.scale,
                   2 * obs.halfX * cam.scale, 2 * obs.halfY * cam.scale);
      ctx.restore();
    }
  }

  private drawCar(cam: Camera, w: number, h: number, state: StateMsg): void {
    const { ctx } = this;
    const [sx, sy] = worldToScreen(cam, w, h, state.x, state.y);
    ctx.save();
    ctx.translate(sx, sy);
    ctx.rotate(-state.theta);
    ctx.fillStyle = "#4ea3e8";
    ctx.fillRect(-2.25 * cam.scale, -0.9 * cam.scale, 4.5 * cam.scale, 1.8 * cam.scale);
    ctx.fillStyle = "#dcecf8";
    ctx.fillRect(0.8 * cam.scale, -0.7 * cam.scale, 1.0 * cam.scale, 1.4 * cam.scale);
    ctx.restore();
  }

  private drawSensorFan(cam: Camera, w: number, h: number, state: StateMsg): void {
    const { ctx } = this;
    if (!state.ranges_preview?.length) return;
    const n = state.ranges_preview.length;
    const step = (2 * Math.PI) / n;
    ctx.strokeStyle = "rgba(120, 220, 140, 0.25)";
    ctx.lineWidth = 1;
    const [sx, sy] = worldToScreen(cam, w, h, state.x, state.y);
    for (let i = 0; i < n; i++) {
      const a = state.theta + i * step;
      const r = Math.min(state.ranges_preview[i], 60) * cam.scale;
      ctx.beginPath();
      ctx.moveTo(sx, sy);
      ctx.lineTo(sx + Math.cos(a) * r, sy - Math.sin(a) * r);
      ctx.stroke();
    }
  }

  private drawHud(state: StateMsg): void {
    const { ctx } = this;
    ctx.fillStyle = "#f4f4f4";
    ctx.font = "14px monospace";
    ctx.fillText(`V ${state.V_kmh.toFixed(1)} km/h`, 12, 20);
    ctx.fillText(`D ${state.D.toFixed(2)} m`, 12, 38);
    ctx.fillText(`sigma ${state.sigma.toFixed(1)} m  lap ${state.lap}`, 12, 56);
  }

  private drawBanner(text: string, w: number, h: number): void {
    const { ctx } = this;
    ctx.fillStyle = "rgba(160, 30, 30, 0.85)";
    ctx.fillRect(0, h / 2 - 24, w, 48);
    ctx.fillStyle = "#fff";
    ctx.font = "bold 20px monospace";
    ctx.textAlign = "center";
    ctx.fillText(text, w / 2, h / 2 + 7);
    ctx.textAlign = "left";
  }
}
