import type { EditOp } from "./types";

// Edit controls accumulate into an ordered operation list: an op enters the
// list the first time its control leaves neutral and keeps that position
// while its value changes, so the server applies edits in the order the
// user reached for them.

const NEUTRAL = {
  color: { dr: 0, dg: 0, db: 0 },
  shift: { dx: 0, dy: 0 },
  rotate: { angle: 0 },
  expand: { power: 1 },
  remove: { on: false },
};

type Kind = keyof typeof NEUTRAL;

function assertOffset(name: string, v: number): void {
  if (!Number.isFinite(v) || v < -1 || v > 1) {
    throw new RangeError(`${name} must be within [-1, 1], got ${v}`);
  }
}

export class EditControls {
  private order: Kind[] = [];
  private color = { ...NEUTRAL.color };
  private shift = { ...NEUTRAL.shift };
  private rotate = { ...NEUTRAL.rotate };
  private expand = { ...NEUTRAL.expand };

  private touch(kind: Kind, neutral: boolean): void {
    const at = this.order.indexOf(kind);
    if (neutral && at >= 0) this.order.splice(at, 1);
    if (!neutral && at < 0) this.order.push(kind);
  }

  setColor(dr: number, dg: number, db: number): void {
    assertOffset("dr", dr);
    assertOffset("dg", dg);
    assertOffset("db", db);
    this.color = { dr, dg, db };
    this.touch("color", dr === 0 && dg === 0 && db === 0);
  }

  setShift(dx: number, dy: number): void {
    if (!Number.isFinite(dx) || !Number.isFinite(dy)) {
      throw new RangeError("shift offsets must be finite");
    }
    this.shift = { dx, dy };
    this.touch("shift", dx === 0 && dy === 0);
  }

  setRotate(angle: number): void {
    if (!Number.isFinite(angle)) throw new RangeError("angle must be finite");
    this.rotate = { angle };
    this.touch("rotate", angle === 0);
  }

  setExpand(power: number): void {
    if (!Number.isFinite(power) || power <= 0) {
      throw new RangeError(`expansion power must be > 0, got ${power}`);
    }
    this.expand = { power };
    this.touch("expand", power === 1);
  }

  setRemove(on: boolean): void {
    this.touch("remove", !on);
  }

  reset(): void {
    this.order = [];
    this.color = { ...NEUTRAL.color };
    this.shift = { ...NEUTRAL.shift };
    this.rotate = { ...NEUTRAL.rotate };
    this.expand = { ...NEUTRAL.expand };
  }

  get isNeutral(): boolean {
    return this.order.length === 0;
  }

  /** Exactly the editor wire schema; neutral controls contribute nothing. */
  toSpec(): EditOp[] {
    return this.order.map((kind): EditOp => {
      switch (kind) {
        case "color":
          return { op: "color", ...this.color };
        case "shift":
          return { op: "shift", ...this.shift };
        case "rotate":
          return { op: "rotate", ...this.rotate };
        case "expand":
          return { op: "expand", ...this.expand };
        case "remove":
          return { op: "remove" };
      }
    });
  }
}
