/**
 * Stroke buffer backing the drawing canvas.
 *
 * The buffer is a binary H*W raster (row-major, 0 or 1). Strokes are
 * rasterized at a fixed 2-pixel width; one undo entry is recorded per
 * stroke, bounded at 50 snapshots. Export/import is lossless so fixture
 * masks replayed through the canvas produce identical request payloads.
 */

export const UNDO_LIMIT = 50;
export type Tool = "draw" | "erase";

export class CanvasState {
  readonly height: number;
  readonly width: number;
  buffer: Uint8Array;
  activeView = 0;
  private undoStack: Uint8Array[] = [];
  private stroking = false;
  private lastX = 0;
  private lastY = 0;

  constructor(height: number, width: number) {
    this.height = height;
    this.width = width;
    this.buffer = new Uint8Array(height * width);
  }

  get isEmpty(): boolean {
    return !this.buffer.some((v) => v !== 0);
  }

  beginStroke(x: number, y: number, tool: Tool = "draw"): void {
    this.pushUndo();
    this.stroking = true;
    this.lastX = x;
    this.lastY = y;
    this.stamp(x, y, tool);
  }

  strokeTo(x: number, y: number, tool: Tool = "draw"): void {
    if (!this.stroking) {
      this.beginStroke(x, y, tool);
      return;
    }
    this.line(this.lastX, this.lastY, x, y, tool);
    this.lastX = x;
    this.lastY = y;
  }

  endStroke(): void {
    this.stroking = false;
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.buffer = prev;
    this.stroking = false;
    return true;
  }

  clear(): void {
    this.pushUndo();
    this.buffer = new Uint8Array(this.height * this.width);
  }

  /** Bytes 0/255, length H*W: exactly the service mask payload. */
  exportMask(): Uint8Array {
    const out = new Uint8Array(this.buffer.length);
    for (let i = 0; i < out.length; i++) out[i] = this.buffer[i] ? 255 : 0;
    return out;
  }

  importMask(mask: Uint8Array): void {
    if (mask.length !== this.buffer.length) {
      throw new Error(`mask length ${mask.length} != ${this.buffer.length}`);
    }
    this.pushUndo();
    for (let i = 0; i < mask.length; i++) this.buffer[i] = mask[i] > 127 ? 1 : 0;
  }

  private pushUndo(): void {
    this.undoStack.push(this.buffer.slice());
    if (this.undoStack.length > UNDO_LIMIT) this.undoStack.shift();
  }

  get undoDepth(): number {
    return this.undoStack.length;
  }

  private stamp(x: number, y: number, tool: Tool): void {
    // 2x2 footprint gives the fixed 2-px stroke width
    const v = tool === "draw" ? 1 : 0;
    for (let dy = 0; dy < 2; dy++) {
      for (let dx = 0; dx < 2; dx++) {
        const px = x + dx;
        const py = y + dy;
        if (px >= 0 && px < this.width && py >= 0 && py < this.height) {
          this.buffer[py * this.width + px] = v;
        }
      }
    }
  }

  private line(x0: number, y0: number, x1: number, y1: number, tool: Tool): void {
    let dx = Math.abs(x1 - x0);
    let dy = -Math.abs(y1 - y0);
    const sx = x0 < x1 ? 1 : -1;
    const sy = y0 < y1 ? 1 : -1;
    let err = dx + dy;
    let x = x0;
    let y = y0;
    for (;;) {
      this.stamp(x, y, tool);
      if (x === x1 && y === y1) break;
      const e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y += sy;
      }
    }
  }
}
