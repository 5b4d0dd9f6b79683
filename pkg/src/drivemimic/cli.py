"""Command-line entry point and the live-session service.

Subcommands: generate-road, collect-expert, fit-gp, sample-gp, train,
evaluate, replay, serve.  Outputs are written atomically (temp file +
rename).  Exit codes: 0 success, 2 validation error, 1 runtime error.

The session service speaks newline-delimited JSON records over TCP and
accepts WebSocket upgrades on the same port for browser clients.  It is
lockstep: the simulator advances exactly one 0.1 s step per `control`
message, so the client's pace sets the pace.
"""

from __future__ import annotations

import argparse
import base64
import hashlib
import json
import math
import socket
import socketserver
import struct
import sys
import threading
from pathlib import Path

import numpy as np

from . import gp
from .expert import ExpertError, collect_demos, load_demo, save_demo
from .logs import DemoLog, EpisodeLog, LogError, write_demo_csv
from .nets import CheckpointError, load_checkpoint
from .reward import ExpertProfile, RewardConfig
from .sim import KMH, N_RAYS, Simulator, TerminationKind
from .track import (
    Lane,
    RoadSpec,
    Track,
    TrackError,
    build_training_track,
    generate_road,
    read_track,
    write_track,
)


class ValidationError(ValueError):
    pass


def _load_track_arg(value: str) -> Track:
    if value == "training":
        return build_training_track()
    path = Path(value)
    if not path.exists():
        raise ValidationError(f"track {value!r}: not 'training' and no such file")
    return read_track(path)


# -- subcommands -----------------------------------------------------------------


def _cmd_generate_road(args) -> int:
    spec = RoadSpec(kind=args.kind, length=args.length, seed=args.seed,
                    spacing_mean=args.spacing_mean, spacing_std=args.spacing_std)
    track = generate_road(spec)
    write_track(track, args.out)
    print(f"wrote {args.out}: {track.name}, {track.total_length:.1f} m, "
          f"{len(track.obstacles)} obstacles")
    return 0


def _cmd_collect_expert(args) -> int:
    track = _load_track_arg(args.track)
    demo = collect_demos(track, rounds=args.rounds, seed=args.seed)
    save_demo(demo, args.out)
    n = sum(len(r) for r in demo.rounds)
    print(f"wrote {args.out}: {len(demo.rounds)} rounds, {n} rows")
    return 0


def _cmd_fit_gp(args) -> int:
    track = _load_track_arg(args.track) if args.track else None
    demo = load_demo(args.demo, track)
    if len(demo.rounds) < 2:
        raise ValidationError(f"{args.demo}: need at least 2 rounds, found {len(demo.rounds)}")
    sigma, d, v = demo.all_points()
    y = d if args.variable == "trackpos" else v
    model = gp.fit(sigma, y, max_points=args.max_points)
    model = gp.tune_noise(model, sigma, y)
    gp.write_model(model, args.out)
    print(f"wrote {args.out}: signal_var={model.signal_var:.4g} "
          f"length_scale={model.length_scale:.4g} shape={model.shape:.4g} "
          f"noise_var={model.noise_var:.4g}")
    return 0


def _cmd_sample_gp(args) -> int:
    model = gp.read_model(args.model)
    lap = args.lap_length or float(np.max(model.x_train))
    grid = np.arange(0.0, lap, args.grid_spacing)
    samples = gp.sample_trajectories(model, grid, n=args.n,
                                     rng=np.random.default_rng(args.seed))
    gp.write_samples(samples, args.out)
    print(f"wrote {args.out}: {len(samples)} samples on {len(grid)} grid points")
    return 0


def _build_profile(track: Track, d_model_path, v_model_path,
                   d_samples_path=None, v_samples_path=None) -> ExpertProfile:
    d_model = gp.read_model(d_model_path)
    v_model = gp.read_model(v_model_path)
    grid = np.arange(0.0, track.total_length, 5.0)
    d_mean, _ = d_model.posterior(grid)
    v_mean, _ = v_model.posterior(grid)
    d_samples, v_samples = [], []
    if d_samples_path and v_samples_path:
        d_samples = [np.interp(grid, s.grid, s.values)
                     for s in gp.read_samples(d_samples_path)]
        v_samples = [np.interp(grid, s.grid, s.values)
                     for s in gp.read_samples(v_samples_path)]
    return ExpertProfile.build(grid, track.total_length, d_mean, v_mean,
                               d_samples, v_samples)


def _cmd_train(args) -> int:
    from .ppo import DrivingEnv, PpoConfig, train
    track = _load_track_arg(args.track)
    profile = _build_profile(track, args.gp_trackpos, args.gp_speed,
                             args.samples_trackpos, args.samples_speed)
    if args.reward == "stochastic" and not profile.d_samples:
        raise ValidationError("stochastic reward requires --samples-trackpos/--samples-speed")
    cfg = PpoConfig(hidden=args.hidden, lr=args.lr, max_env_steps=args.steps,
                    reward_scale=args.reward_scale,
                    minibatch=args.minibatch,
                    batch_init=args.batch_init,
                    checkpoint_every=args.checkpoint_every)
    env = DrivingEnv(track, profile, RewardConfig(mode=args.reward),
                     np.random.default_rng(np.random.SeedSequence(args.seed).spawn(1)[0]))
    result = train(env, cfg, seed=args.seed, out_dir=args.out)
    status = "diverged" if result.diverged else "done"
    print(f"{status}: {result.updates} updates, {result.env_steps} steps; "
          f"checkpoint and metrics in {args.out}")
    return 1 if result.diverged else 0


def _cmd_evaluate(args) -> int:
    from .evaluation import compare, generalization_suite, rollout, write_report
    nets = load_checkpoint(args.checkpoint)
    track = _load_track_arg(args.track)
    logs, stats = rollout(nets, track, rounds=args.rounds, mode=args.mode,
                          seed=args.seed)
    print(f"rollout: {stats.completed_rounds}/{stats.episodes} rounds completed, "
          f"terminations {stats.terminations}")
    if args.gp_trackpos and args.gp_speed:
        report = compare(gp.read_model(args.gp_trackpos), gp.read_model(args.gp_speed),
                         logs, track.total_length, stats)
        write_report(report, args.out)
        t = report.track_position
        print(f"trackpos mean gap {t.mean_gap:.3f} m, in-CI {t.in_ci_fraction:.2%}; "
              f"report in {args.out}")
    if args.generalization:
        results = generalization_suite(nets, seed=args.seed, rounds=args.rounds,
                                       mode=args.mode)
        for kind, entry in results.items():
            stats = entry.get("stats")
            if stats is None:
                print(f"{kind}: ERROR {entry.get('error')}")
            else:
                print(f"{kind}: completion {stats.completion_rate:.2%}, "
                      f"collision/obstacle {stats.collision_rate:.3f}")
    return 0


def _cmd_replay(args) -> int:
    from .logs import read_episode_csv
    try:
        log = read_episode_csv(args.log)
        rows = len(log)
        v = log.v_kmh
        print(f"{args.log}: episode log, {rows} rows ({rows * 0.1:.1f} s)")
    except LogError:
        demo = load_demo(args.log, _load_track_arg(args.track) if args.track else None)
        rows = sum(len(r) for r in demo.rounds)
        v = np.concatenate([r.v_kmh for r in demo.rounds])
        print(f"{args.log}: demo log, {len(demo.rounds)} rounds, {rows} rows")
    print(f"speed km/h: min {v.min():.1f} mean {v.mean():.1f} max {v.max():.1f}")
    return 0


def _cmd_serve(args) -> int:
    track = _load_track_arg(args.track)
    server = SessionServer((args.host, args.port), track, Path(args.demo_dir))
    print(f"serving {track.name} on {args.host}:{server.server_address[1]} "
          f"(newline-JSON TCP; WebSocket upgrades accepted)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return 0


# -- session protocol ---------------------------------------------------------------
#
# Messages are JSON objects with a `type` field:
#   client -> server: hello{track_id?, dt?}, control{steering, torque, seq},
#                     reset{}, record{on}
#   server -> client: state{seq, x, y, theta, V_kmh, D, sigma, ranges_preview,
#                     termination, lap}, demo_saved{path}, error{message}
# Lockstep: exactly one state reply per control message; termination
# auto-resets after the terminal state is sent.


class Session:
    """One client's simulator and recorder; transport-agnostic."""

    def __init__(self, track: Track, demo_dir: Path, session_id: int):
        self.track = track
        self.demo_dir = demo_dir
        self.session_id = session_id
        self.sim = Simulator(track, rng=np.random.default_rng(session_id))
        self.sim.reset_at(0.0)
        self.recording = False
        self.rows: list[dict] = []
        self.round_index = 0
        self.seq = 0  # hello's state carries 0; control replies echo their seq
        self.t = 0.0

    def handle(self, msg: dict) -> list[dict]:
        kind = msg.get("type")
        if kind == "hello":
            return [self._state(TerminationKind.NONE)]
        if kind == "control":
            return self._control(msg)
        if kind == "reset":
            self.sim.reset_at(0.0)
            self.t = 0.0
            self.round_index += 1
            return [self._state(TerminationKind.NONE)]
        if kind == "record":
            return self._record(bool(msg.get("on")))
        return [{"type": "error", "message": f"unknown message type {kind!r}"}]

    def _control(self, msg) -> list[dict]:
        try:
            steering = float(msg["steering"])
            torque = float(msg["torque"])
            seq = int(msg["seq"])
        except (KeyError, TypeError, ValueError) as exc:
            return [{"type": "error", "message": f"bad control message: {exc}"}]
        if not (math.isfinite(steering) and math.isfinite(torque)):
            return [{"type": "error", "message": "non-finite control"}]
        prev_lap = self.sim.state.lap_count
        state, term = self.sim.step((steering, torque))
        self.t += self.sim.config.dt
        self.seq = seq
        if self.recording and term is TerminationKind.NONE:
            if state.lap_count > prev_lap:
                self.round_index += 1
            self.rows.append({
                "round": self.round_index, "t": self.t, "sigma": state.arc_length,
                "x": state.position[0], "y": state.position[1],
                "theta": state.heading, "V_kmh": state.speed / KMH,
                "D": state.lateral, "psi_deg": math.degrees(state.steering),
                "tau": state.torque, "termination": term.value,
            })
        out = [self._state(term)]
        if term is not TerminationKind.NONE:
            self.sim.reset_at(0.0)
            self.t = 0.0
            self.round_index += 1
        return out

    def _record(self, on: bool) -> list[dict]:
        if on and not self.recording:
            self.recording = True
            self.rows = []
            self.round_index = 0
            return []
        if not on and self.recording:
            self.recording = False
            if not self.rows:
                return [{"type": "error", "message": "nothing recorded"}]
            path = self.demo_dir / f"demo_session{self.session_id}.csv"
            self._write_demo(path)
            return [{"type": "demo_saved", "path": str(path)}]
        return []

    def _write_demo(self, path: Path) -> None:
        rounds: dict[int, list[dict]] = {}
        for row in self.rows:
            rounds.setdefault(row["round"], []).append(row)
        logs = []
        for k in sorted(rounds):
            rows = rounds[k]
            cols = {name: np.array([r[name] for r in rows]) for name in
                    ("t", "sigma", "x", "y", "theta", "V_kmh", "D", "psi_deg", "tau")}
            logs.append(EpisodeLog(cols["t"], cols["sigma"], cols["x"], cols["y"],
                                   cols["theta"], cols["V_kmh"], cols["D"],
                                   cols["psi_deg"], cols["tau"],
                                   termination=[r["termination"] for r in rows]))
        demo = DemoLog(logs, driver=f"human-session{self.session_id}",
                       track=self.track.name, seed=self.session_id)
        self.demo_dir.mkdir(parents=True, exist_ok=True)
        write_demo_csv(demo, path)

    def _state(self, term: TerminationKind) -> dict:
        st = self.sim.state
        ranges = self.sim.sense_rays()
        preview = [round(float(r), 2) for r in ranges[::8]]
        return {
            "type": "state", "seq": self.seq,
            "x": round(float(st.position[0]), 4), "y": round(float(st.position[1]), 4),
            "theta": round(float(st.heading), 6),
            "V_kmh": round(float(st.speed / KMH), 3),
            "D": round(float(st.lateral), 4),
            "sigma": round(float(st.arc_length), 3),
            "lap": int(st.lap_count),
            "ranges_preview": preview,
            "termination": term.value,
        }


class _SessionHandler(socketserver.StreamRequestHandler):
    def handle(self):
        server: SessionServer = self.server  # type: ignore[assignment]
        with server.lock:
            server.session_count += 1
            session = Session(server.track, server.demo_dir, server.session_count)
        first = self.rfile.peek(4)[:4] if hasattr(self.rfile, "peek") else b""
        if first.startswith(b"GET "):
            self._handle_websocket(session)
        else:
            self._handle_lines(session)

    # newline-delimited JSON over plain TCP
    def _handle_lines(self, session: Session) -> None:
        for raw in self.rfile:
            line = raw.strip()
            if not line:
                continue
            for reply in _dispatch(session, line.decode("utf-8", "replace")):
                self.wfile.write((json.dumps(reply) + "\n").encode())
            self.wfile.flush()

    # minimal RFC6455 server for browser clients
    def _handle_websocket(self, session: Session) -> None:
        request = bytearray()
        while b"\r\n\r\n" not in request:
            chunk = self.rfile.readline()
            if not chunk:
                return
            request += chunk
        headers = {}
        for line in request.decode("latin-1").split("\r\n")[1:]:
            if ":" in line:
                k, v = line.split(":", 1)
                headers[k.strip().lower()] = v.strip()
        key = headers.get("sec-websocket-key")
        if key is None:
            self.wfile.write(b"HTTP/1.1 400 Bad Request\r\n\r\n")
            return
        accept = base64.b64encode(hashlib.sha1(
            (key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11").encode()).digest()).decode()
        self.wfile.write((
            "HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\nConnection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {accept}\r\n\r\n").encode())
        self.wfile.flush()
        while True:
            msg = _ws_read_frame(self.rfile)
            if msg is None:
                return
            opcode, payload = msg
            if opcode == 0x8:  # close
                self.wfile.write(_ws_frame(0x8, b""))
                return
            if opcode == 0x9:  # ping
                self.wfile.write(_ws_frame(0xA, payload))
                continue
            if opcode not in (0x1, 0x2):
                continue
            for reply in _dispatch(session, payload.decode("utf-8", "replace")):
                self.wfile.write(_ws_frame(0x1, json.dumps(reply).encode()))
            self.wfile.flush()


def _dispatch(session: Session, text: str) -> list[dict]:
    try:
        msg = json.loads(text)
        if not isinstance(msg, dict):
            raise ValueError("message must be a JSON object")
    except ValueError as exc:
        return [{"type": "error", "message": f"malformed message: {exc}"}]
    return session.handle(msg)


def _ws_read_frame(rfile):
    head = rfile.read(2)
    if len(head) < 2:
        return None
    fin_opcode, mask_len = head
    opcode = fin_opcode & 0x0F
    masked = mask_len & 0x80
    length = mask_len & 0x7F
    if length == 126:
        length = struct.unpack(">H", rfile.read(2))[0]
    elif length == 127:
        length = struct.unpack(">Q", rfile.read(8))[0]
    mask = rfile.read(4) if masked else b"\0\0\0\0"
    payload = bytearray(rfile.read(length))
    for i in range(len(payload)):
        payload[i] ^= mask[i % 4]
    return opcode, bytes(payload)


def _ws_frame(opcode: int, payload: bytes) -> bytes:
    header = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        header += bytes([n])
    elif n < 65536:
        header += bytes([126]) + struct.pack(">H", n)
    else:
        header += bytes([127]) + struct.pack(">Q", n)
    return header + payload


class SessionServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, addr, track: Track, demo_dir: Path):
        super().__init__(addr, _SessionHandler)
        self.track = track
        self.demo_dir = demo_dir
        self.lock = threading.Lock()
        self.session_count = 0


# -- argument parsing -----------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drivemimic",
                                description="expert-imitating driving pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-road", help="procedurally generate a track file")
    g.add_argument("--kind", required=True, choices=RoadSpec.KINDS)
    g.add_argument("--length", type=float, default=3140.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--spacing-mean", type=float, default=100.0)
    g.add_argument("--spacing-std", type=float, default=10.0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=_cmd_generate_road)

    c = sub.add_parser("collect-expert", help="record scripted-expert demonstrations")
    c.add_argument("--track", default="training")
    c.add_argument("--rounds", type=int, default=8)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.set_defaults(fn=_cmd_collect_expert)

    f = sub.add_parser("fit-gp", help="fit a GP to a demo variable")
    f.add_argument("--demo", required=True)
    f.add_argument("--variable", required=True, choices=("trackpos", "speed"))
    f.add_argument("--track", default=None)
    f.add_argument("--max-points", type=int, default=800)
    f.add_argument("--out", required=True)
    f.set_defaults(fn=_cmd_fit_gp)

    s = sub.add_parser("sample-gp", help="draw bounded trajectory samples")
    s.add_argument("--model", required=True)
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--grid-spacing", type=float, default=5.0)
    s.add_argument("--lap-length", type=float, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_sample_gp)

    t = sub.add_parser("train", help="train the PPO policy")
    t.add_argument("--track", default="training")
    t.add_argument("--gp-trackpos", required=True)
    t.add_argument("--gp-speed", required=True)
    t.add_argument("--samples-trackpos", default=None)
    t.add_argument("--samples-speed", default=None)
    t.add_argument("--reward", choices=("deterministic", "stochastic"),
                   default="deterministic")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--steps", type=int, default=500_000)
    t.add_argument("--hidden", type=int, default=600)
    t.add_argument("--lr", type=float, default=3e-4)
    t.add_argument("--reward-scale", type=float, default=0.01)
    t.add_argument("--minibatch", type=int, default=256)
    t.add_argument("--batch-init", type=int, default=512)
    t.add_argument("--checkpoint-every", type=int, default=50)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("evaluate", help="roll out a checkpoint and compare")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--track", default="training")
    e.add_argument("--rounds", type=int, default=7)
    e.add_argument("--mode", choices=("mean_only", "sampled"), default="mean_only")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--gp-trackpos", default=None)
    e.add_argument("--gp-speed", default=None)
    e.add_argument("--generalization", action="store_true")
    e.add_argument("--out", default="report.txt")
    e.set_defaults(fn=_cmd_evaluate)

    r = sub.add_parser("replay", help="inspect an episode or demo log")
    r.add_argument("--log", required=True)
    r.add_argument("--track", default=None)
    r.set_defaults(fn=_cmd_replay)

    v = sub.add_parser("serve", help="run the live-driving session service")
    v.add_argument("--track", default="training")
    v.add_argument("--port", type=int, default=8355)
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--demo-dir", default="demos")
    v.set_defaults(fn=_cmd_serve)
    return p


def run_command(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ValidationError, TrackError, LogError, gp.GPError, CheckpointError,
            ExpertError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
