// Integration against the real session service: lockstep over a
// 1,000-message session, and the record -> demo file -> fit-gp round trip.
// The client logic under test is the same SessionClient the browser uses;
// the transport here is the newline-JSON TCP framing (the server accepts
// both it and WebSocket upgrades on one port).

import { spawn, spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { createConnection } from "node:net";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { SessionClient, Transport } from "../src/client.js";
import { StateMsg } from "../src/protocol.js";

const PKG_ROOT = resolve(__dirname, "..", "..");
const PYTHON = process.env.PYTHON ?? "python3";

class TcpLineTransport implements Transport {
  private sock;
  private buffer = "";
  private messageCb: (text: string) => void = () => {};
  private closeCb: () => void = () => {};

  constructor(port: number, onOpen: () => void) {
    this.sock = createConnection({ host: "127.0.0.1", port }, onOpen);
    this.sock.on("data", (chunk) => {
      this.buffer += chunk.toString("utf-8");
      let idx;
      while ((idx = this.buffer.indexOf("\n")) >= 0) {
        const line = this.buffer.slice(0, idx);
        this.buffer = this.buffer.slice(idx + 1);
        if (line.trim()) this.messageCb(line);
      }
    });
    this.sock.on("close", () => this.closeCb());
  }

  send(text: string): void {
    this.sock.write(text + "\n");
  }

  onMessage(cb: (text: string) => void): void {
    this.messageCb = cb;
  }

  onClose(cb: () => void): void {
    this.closeCb = cb;
  }

  close(): void {
    this.sock.destroy();
  }
}

let server: ReturnType<typeof spawn>;
let port = 0;
let demoDir = "";
let trackFile = "";

function startServer(): Promise<number> {
  demoDir = mkdtempSync(join(tmpdir(), "drivemimic-ui-"));
  trackFile = join(demoDir, "track.txt");
  // spacing far beyond the lap length yields an obstacle-free loop, so the
  // simple proportional test driver cannot collide
  const gen = spawnSync(PYTHON, ["-m", "drivemimic.cli", "generate-road",
    "--kind", "gaussian_spaced", "--length", "700", "--seed", "11",
    "--spacing-mean", "900", "--spacing-std", "10", "--out", trackFile],
    { cwd: PKG_ROOT, env: pyEnv() });
  if (gen.status !== 0) {
    throw new Error(`generate-road failed: ${gen.stderr}`);
  }
  server = spawn(PYTHON, ["-m", "drivemimic.cli", "serve", "--track", trackFile,
    "--port", "0", "--demo-dir", demoDir], { cwd: PKG_ROOT, env: pyEnv() });
  return new Promise((resolvePort, reject) => {
    let out = "";
    server.stdout!.on("data", (chunk) => {
      out += chunk.toString();
      const m = out.match(/on 127\.0\.0\.1:(\d+)/);
      if (m) resolvePort(Number(m[1]));
    });
    server.stderr!.on("data", (chunk) => (out += chunk.toString()));
    server.on("exit", (code) => reject(new Error(`server exited ${code}: ${out}`)));
    setTimeout(() => reject(new Error(`server did not start: ${out}`)), 30000);
  });
}

function pyEnv() {
  return { ...process.env, PYTHONPATH: join(PKG_ROOT, "src") };
}

function connect(): Promise<{ client: SessionClient; onState: () => Promise<StateMsg>;
                              onSaved: () => Promise<string> }> {
  return new Promise((resolveClient) => {
    const stateQueue: StateMsg[] = [];
    const stateWaiters: ((s: StateMsg) => void)[] = [];
    const savedWaiters: ((p: string) => void)[] = [];
    const transport = new TcpLineTransport(port, () => {
      resolveClient({
        client,
        onState: () => new Promise((res) => {
          const s = stateQueue.shift();
          if (s) res(s);
          else stateWaiters.push(res);
        }),
        onSaved: () => new Promise((res) => savedWaiters.push(res)),
      });
    });
    const client = new SessionClient(transport, {
      onState: (s) => {
        const w = stateWaiters.shift();
        if (w) w(s);
        else stateQueue.push(s);
      },
      onDemoSaved: (p) => savedWaiters.shift()?.(p),
    });
  });
}

beforeAll(async () => {
  port = await startServer();
}, 60000);

afterAll(() => {
  server?.kill();
});

describe("session service round trip", () => {
  it("holds the lockstep contract over a 1,000-message session", async () => {
    const { client, onState } = await connect();
    client.hello();
    const first = await onState();
    expect(first.seq).toBe(0);
    expect(first.termination).toBe("none");
    for (let i = 0; i < 1000; i++) {
      expect(client.control(0.0, 0.25)).toBe(true);
      const state = await onState();
      expect(state.seq).toBe(i);
    }
    expect(client.controlsSent).toBe(1000);
    expect(client.statesReceived).toBe(1000);
  }, 120000);

  it("records a lap that fit-gp consumes and replay retraces", async () => {
    const { client, onState, onSaved } = await connect();
    client.hello();
    await onState();
    client.setRecording(true);

    // simple PD driver: hold the right-lane center at ~43 km/h
    let state: StateMsg | null = null;
    let dPrev = 3.0;
    let lap0: number | null = null;
    for (let i = 0; i < 9000; i++) {
      const d = state ? state.D : 3.0;
      const v = state ? state.V_kmh : 40;
      const steer = Math.max(-1, Math.min(1, 1.33 * (d - 3.0) + 10 * (d - dPrev)));
      const torque = Math.max(-1, Math.min(1, 0.15 * (43 - v)));
      dPrev = d;
      client.control(steer, torque);
      state = await onState();
      if (lap0 === null) lap0 = state.lap;
      expect(state.termination).toBe("none");
      if (state.lap > lap0) break;
    }
    expect(state!.lap).toBeGreaterThan(lap0!);

    const savedPromise = onSaved();
    client.setRecording(false);
    const demoPath = await savedPromise;
    const text = readFileSync(demoPath, "utf-8");
    expect(text.split("\n")[3].startsWith("round,")).toBe(true);

    // replay retraces the recorded path exactly (same rows)
    const { parseLog } = await import("../src/logdata.js");
    const { Replay } = await import("../src/logdata.js");
    const log = parseLog(text);
    const replay = new Replay(log);
    replay.playing = true;
    const replayed: { x: number; y: number }[] = [{ x: replay.row.x, y: replay.row.y }];
    while (replay.playing) {
      replay.tick(0.1);
      replayed.push({ x: replay.row.x, y: replay.row.y });
    }
    expect(replayed.length).toBe(log.rows.length);
    for (let i = 0; i < replayed.length; i++) {
      expect(replayed[i].x).toBeCloseTo(log.rows[i].x, 10);
    }

    // a 1-lap recording is a single round; append a shifted copy as a second
    // round so the fit-gp round-count validation accepts the file
    const lines = text.trimEnd().split("\n");
    const dataLines = lines.slice(4);
    const round2 = dataLines.map((l) => "2," + l.split(",").slice(1).join(","));
    const twoRound = [...lines, ...round2].join("\n") + "\n";
    const demo2 = join(demoDir, "demo_two_rounds.csv");
    const { writeFileSync } = await import("node:fs");
    writeFileSync(demo2, twoRound);

    const fit = spawnSync(PYTHON, ["-m", "drivemimic.cli", "fit-gp",
      "--demo", demo2, "--variable", "trackpos", "--track", trackFile,
      "--max-points", "150", "--out", join(demoDir, "gp.txt")],
      { cwd: PKG_ROOT, env: pyEnv() });
    expect(fit.status, String(fit.stderr)).toBe(0);
  }, 240000);

  it("keeps the session alive after malformed input", async () => {
    const { client, onState } = await connect();
    client.hello();
    await onState();
    // send garbage directly through a fresh transport-level connection
    const transport = new TcpLineTransport(port, () => {
      transport.send("not json at all");
    });
    const reply = await new Promise<string>((res) => transport.onMessage(res));
    expect(JSON.parse(reply).type).toBe("error");
    transport.send(JSON.stringify({ type: "hello" }));
    const hello = await new Promise<string>((res) => transport.onMessage(res));
    expect(JSON.parse(hello).type).toBe("state");
    transport.close();
  }, 60000);
});
