// App bootstrap: connect to the session service, drive at 10 Hz with ramped
// keyboard axes, render states, toggle recording, and replay log files.

import { SessionClient, WebSocketTransport } from "./client.js";
import { DriverInput } from "./input.js";
import { Replay, parseLog } from "./logdata.js";
import { StateMsg } from "./protocol.js";
import { Camera, TrackRenderer } from "./render.js";
import { parseTrack } from "./trackdata.js";

const TICK_MS = 100; // 10 Hz, matching the simulator's control rate

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function main(): void {
  const canvas = el<HTMLCanvasElement>("view");
  const ctx = canvas.getContext("2d")!;
  const renderer = new TrackRenderer(ctx, null);
  const cam: Camera = { cx: 0, cy: 0, scale: 3.0 };
  const input = new DriverInput();
  input.attach(window);

  let client: SessionClient | null = null;
  let banner: string | null = null;
  let replay: Replay | null = null;
  const status = el<HTMLSpanElement>("status");

  function currentState(): StateMsg | null {
    if (replay) {
      const r = replay.row;
      return {
        type: "state", seq: replay.index, x: r.x, y: r.y, theta: r.theta,
        V_kmh: r.vKmh, D: r.d, sigma: r.sigma, lap: r.round,
        ranges_preview: [], termination: r.termination,
      };
    }
    return client?.latest ?? null;
  }

  el<HTMLButtonElement>("connect").onclick = () => {
    const url = el<HTMLInputElement>("server").value;
    const transport = new WebSocketTransport(url, () => {
      status.textContent = "connected";
      banner = null;
      client!.hello();
    });
    client = new SessionClient(transport, {
      onState: (s) => {
        if (s.termination !== "none") {
          banner = s.termination;
          setTimeout(() => (banner = null), 1500);
        }
      },
      onDemoSaved: (path) => {
        status.textContent = `demo saved: ${path}`;
      },
      onError: (message) => {
        status.textContent = `error: ${message}`;
      },
      onDisconnect: () => {
        status.textContent = "disconnected - reconnect to drive";
        banner = "disconnected";
        client = null;
      },
    });
    replay = null;
  };

  el<HTMLButtonElement>("record").onclick = () => {
    if (!client) return;
    client.setRecording(!client.recording);
    el<HTMLButtonElement>("record").textContent =
      client.recording ? "stop recording" : "record";
  };

  el<HTMLButtonElement>("reset").onclick = () => client?.reset();

  el<HTMLInputElement>("trackfile").onchange = async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (file) renderer.track = parseTrack(await file.text());
  };

  el<HTMLInputElement>("logfile").onchange = async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    replay = new Replay(parseLog(await file.text()));
    const scrub = el<HTMLInputElement>("scrub");
    scrub.max = String(replay.length - 1);
    scrub.value = "0";
    status.textContent = `replaying ${file.name} (${replay.length} rows)`;
  };

  el<HTMLInputElement>("scrub").oninput = (ev) => {
    replay?.scrubTo(Number((ev.target as HTMLInputElement).value));
  };
  el<HTMLButtonElement>("play").onclick = () => {
    if (replay) replay.playing = !replay.playing;
  };
  el<HTMLButtonElement>("speed").onclick = () => {
    if (!replay) return;
    replay.speed = replay.speed === 1 ? 4 : 1;
    el<HTMLButtonElement>("speed").textContent = `${replay.speed}x`;
  };

  // 10 Hz control loop: the human's pace sets the simulator's pace.
  setInterval(() => {
    const [steer, torque] = input.tick(TICK_MS / 1000);
    if (client && !replay) client.control(steer, torque);
  }, TICK_MS);

  // render loop
  let lastFrame = performance.now();
  function frame(now: number): void {
    const dt = (now - lastFrame) / 1000;
    lastFrame = now;
    replay?.tick(dt);
    if (replay) el<HTMLInputElement>("scrub").value = String(replay.index);
    const state = currentState();
    if (state) {
      cam.cx = state.x;
      cam.cy = state.y;
    }
    renderer.draw(cam, state, banner);
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);
}

window.addEventListener("DOMContentLoaded", main);
