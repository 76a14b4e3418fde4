/** Editor state machine: draft curve, turning-point assignments, undo/redo.
 *
 * Pure data plus transitions; no DOM, no network. The viewer feeds it
 * surface hits, the app serializes it into the wire schema. Undo snapshots
 * are full serializations, so restore is exact by construction.
 */
import type { SurfaceHit } from "./raycast.js";
import { serializeEdit, type HairlineEditJson } from "./schema.js";

export interface ControlPoint {
  face: number;
  bary: [number, number, number];
  position: [number, number, number];
}

export interface TurningAssignment {
  hairlineVertex: number;
  curveParam: number;
}

interface Snapshot {
  curve: ControlPoint[];
  assignments: TurningAssignment[];
}

export class EditorState {
  sessionId: string;
  earMarkers: [number, number];
  curve: ControlPoint[] = [];
  assignments: TurningAssignment[] = [];
  jobStatus: "idle" | "queued" | "running" | "done" | "failed" = "idle";
  jobProgress = 0;
  private undoStack: string[] = [];
  private redoStack: string[] = [];

  constructor(sessionId: string, earMarkers: [number, number]) {
    this.sessionId = sessionId;
    this.earMarkers = earMarkers;
  }

  private snapshot(): string {
    return JSON.stringify({ curve: this.curve, assignments: this.assignments });
  }

  private pushUndo(): void {
    this.undoStack.push(this.snapshot());
    this.redoStack.length = 0;
  }

  private restore(text: string): void {
    const snap = JSON.parse(text) as Snapshot;
    this.curve = snap.curve;
    this.assignments = snap.assignments;
  }

  appendPoint(hit: SurfaceHit): void {
    this.pushUndo();
    this.curve.push({
      face: hit.face,
      bary: hit.bary,
      position: [hit.position.x, hit.position.y, hit.position.z],
    });
  }

  /** Move one control point; only its own entry changes. */
  movePoint(index: number, hit: SurfaceHit): void {
    if (index < 0 || index >= this.curve.length) {
      throw new RangeError(`no control point ${index}`);
    }
    this.pushUndo();
    this.curve[index] = {
      face: hit.face,
      bary: hit.bary,
      position: [hit.position.x, hit.position.y, hit.position.z],
    };
  }

  /** Assignments must stay monotone along the curve parameter. */
  assignTurningPoint(hairlineVertex: number, curveParam: number): void {
    const next = this.assignments
      .filter((a) => a.hairlineVertex !== hairlineVertex)
      .concat([{ hairlineVertex, curveParam }])
      .sort((a, b) => a.curveParam - b.curveParam);
    for (let i = 1; i < next.length; i += 1) {
      if (next[i].curveParam === next[i - 1].curveParam) {
        throw new Error("turning points must have distinct curve parameters");
      }
    }
    this.pushUndo();
    this.assignments = next;
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (prev === undefined) {
      return false;
    }
    this.redoStack.push(this.snapshot());
    this.restore(prev);
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (next === undefined) {
      return false;
    }
    this.undoStack.push(this.snapshot());
    this.restore(next);
    return true;
  }

  canExport(): boolean {
    return this.curve.length >= 2;
  }

  toEditJson(): HairlineEditJson {
    if (!this.canExport()) {
      throw new Error("a hairline needs at least two control points");
    }
    return {
      curve: this.curve.map((p) => ({
        face: p.face,
        bary: [p.bary[1], p.bary[2]] as [number, number],
      })),
      turningPoints: this.assignments.map((a) => ({
        hairlineVertex: a.hairlineVertex,
        curveParam: a.curveParam,
      })),
      earMarkers: this.earMarkers,
    };
  }

  serialize(): string {
    return serializeEdit(this.toEditJson());
  }
}
