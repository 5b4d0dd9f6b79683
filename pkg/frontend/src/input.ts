// Keyboard-to-analog mapping.  Arrow keys (or WASD) drive two axes with
// attack/decay ramps so the emitted controls look like wheel/pedal motion
// rather than bang-bang input: full deflection in 0.4 s, release to zero in
// 0.5 s.

export interface InputConfig {
  attackTime: number; // s to full deflection while held
  decayTime: number;  // s back to zero after release
}

export const DEFAULT_INPUT: InputConfig = { attackTime: 0.4, decayTime: 0.5 };

export class AxisRamp {
  value = 0;

  constructor(private cfg: InputConfig = DEFAULT_INPUT) {}

  step(direction: -1 | 0 | 1, dt: number): number {
    if (direction !== 0) {
      this.value += (direction * dt) / this.cfg.attackTime;
    } else if (this.value > 0) {
      this.value = Math.max(0, this.value - dt / this.cfg.decayTime);
    } else if (this.value < 0) {
      this.value = Math.min(0, this.value + dt / this.cfg.decayTime);
    }
    this.value = Math.max(-1, Math.min(1, this.value));
    return this.value;
  }
}

export class DriverInput {
  steer = new AxisRamp();
  throttle = new AxisRamp();
  private held = new Set<string>();

  keyDown(key: string): void {
    this.held.add(key.toLowerCase());
  }

  keyUp(key: string): void {
    this.held.delete(key.toLowerCase());
  }

  private direction(neg: string[], pos: string[]): -1 | 0 | 1 {
    const n = neg.some((k) => this.held.has(k));
    const p = pos.some((k) => this.held.has(k));
    if (n && !p) return -1;
    if (p && !n) return 1;
    return 0;
  }

  /** Advance both axes by dt and return [steering, torque] in [-1, 1]. */
  tick(dt: number): [number, number] {
    // Left arrow steers left; positive steering turns left in the simulator.
    const steerDir = this.direction(["arrowright", "d"], ["arrowleft", "a"]);
    const throttleDir = this.direction(["arrowdown", "s"], ["arrowup", "w"]);
    return [this.steer.step(steerDir, dt), this.throttle.step(throttleDir, dt)];
  }

  attach(target: { addEventListener: Window["addEventListener"] }): void {
    target.addEventListener("keydown", (ev) => this.keyDown((ev as KeyboardEvent).key));
    target.addEventListener("keyup", (ev) => this.keyUp((ev as KeyboardEvent).key));
  }
}
