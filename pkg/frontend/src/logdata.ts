// Episode and demo CSV parsing for replay.  Episode logs start with the
// column header; demo logs carry '#' metadata lines and a leading round
// column.  Every rendered replay quantity comes straight from these rows.

export interface LogRow {
  round: number;
  t: number;
  sigma: number;
  x: number;
  y: number;
  theta: number;
  vKmh: number;
  d: number;
  psiDeg: number;
  tau: number;
  termination: string;
}

export interface ParsedLog {
  kind: "episode" | "demo";
  meta: Record<string, string>;
  rows: LogRow[];
}

const EPISODE_HEADER = "t,sigma,x,y,theta,V_kmh,D,psi_deg,tau,termination";

export function parseLog(text: string): ParsedLog {
  const lines = text.split(/\r?\n/).filter((l) => l.trim().length > 0);
  const meta: Record<string, string> = {};
  let i = 0;
  while (i < lines.length && lines[i].startsWith("#")) {
    const parts = lines[i].slice(1).trim().split(/\s+/);
    if (parts.length >= 2) meta[parts[0]] = parts.slice(1).join(" ");
    i += 1;
  }
  if (i >= lines.length) throw new Error("empty log file");
  const header = lines[i];
  const kind = header.startsWith("round,") ? "demo" : "episode";
  if (kind === "episode" && header !== EPISODE_HEADER) {
    throw new Error(`unexpected episode header: ${header}`);
  }
  const cols = header.split(",");
  const idx = (name: string) => cols.indexOf(name);
  const rows: LogRow[] = [];
  for (const line of lines.slice(i + 1)) {
    const parts = line.split(",");
    if (parts.length !== cols.length) throw new Error(`malformed row: ${line}`);
    const num = (name: string) => {
      const j = idx(name);
      return j >= 0 ? Number(parts[j]) : NaN;
    };
    rows.push({
      round: kind === "demo" ? Number(parts[0]) : 0,
      t: num("t"),
      sigma: num("sigma"),
      x: num("x"),
      y: num("y"),
      theta: num("theta"),
      vKmh: num("V_kmh"),
      d: num("D"),
      psiDeg: num("psi_deg"),
      tau: num("tau"),
      termination: idx("termination") >= 0 ? parts[idx("termination")] : "none",
    });
  }
  return { kind, meta, rows };
}

/** Playback cursor over a parsed log at 1x or 4x speed, scrubbable. */
export class Replay {
  index = 0;
  speed: 1 | 4 = 1;
  playing = false;
  private acc = 0;

  constructor(public log: ParsedLog, private dt = 0.1) {}

  get row(): LogRow {
    return this.log.rows[this.index];
  }

  get length(): number {
    return this.log.rows.length;
  }

  scrubTo(index: number): void {
    this.index = Math.max(0, Math.min(this.log.rows.length - 1, Math.round(index)));
  }

  tick(wallDt: number): void {
    if (!this.playing) return;
    this.acc += wallDt * this.speed;
    while (this.acc >= this.dt && this.index < this.log.rows.length - 1) {
      this.acc -= this.dt;
      this.index += 1;
    }
    if (this.index >= this.log.rows.length - 1) this.playing = false;
  }
}
