import { describe, expect, it } from "vitest";
import { CanvasState, UNDO_LIMIT } from "../src/canvas.js";

describe("CanvasState", () => {
  it("draw then undo restores the exact previous buffer", () => {
    const c = new CanvasState(32, 32);
    c.beginStroke(4, 4);
    c.strokeTo(20, 11);
    c.endStroke();
    const afterFirst = c.buffer.slice();
    c.beginStroke(1, 30, "draw");
    c.strokeTo(30, 30);
    c.endStroke();
    expect(c.buffer).not.toEqual(afterFirst);
    expect(c.undo()).toBe(true);
    expect(Array.from(c.buffer)).toEqual(Array.from(afterFirst));
  });

  it("erase over a blank area changes nothing", () => {
    const c = new CanvasState(16, 16);
    c.beginStroke(3, 3, "erase");
    c.strokeTo(12, 12, "erase");
    c.endStroke();
    expect(c.isEmpty).toBe(true);
  });

  it("erase removes drawn pixels", () => {
    const c = new CanvasState(16, 16);
    c.beginStroke(5, 5);
    c.strokeTo(10, 5);
    c.endStroke();
    expect(c.isEmpty).toBe(false);
    c.beginStroke(5, 5, "erase");
    c.strokeTo(10, 5, "erase");
    c.endStroke();
    expect(c.isEmpty).toBe(true);
  });

  it("exports masks of exactly H*W bytes with 0/255 values", () => {
    const c = new CanvasState(24, 40);
    c.beginStroke(2, 2);
    c.endStroke();
    const mask = c.exportMask();
    expect(mask.length).toBe(24 * 40);
    const values = new Set(Array.from(mask));
    expect([...values].every((v) => v === 0 || v === 255)).toBe(true);
  });

  it("export -> import round-trips the stroke buffer exactly", () => {
    const c = new CanvasState(20, 20);
    c.beginStroke(0, 0);
    c.strokeTo(19, 19);
    c.strokeTo(19, 0);
    c.endStroke();
    const mask = c.exportMask();
    const d = new CanvasState(20, 20);
    d.importMask(mask);
    expect(Array.from(d.buffer)).toEqual(Array.from(c.buffer));
    expect(Array.from(d.exportMask())).toEqual(Array.from(mask));
  });

  it("strokes are 2 pixels wide", () => {
    const c = new CanvasState(16, 16);
    c.beginStroke(4, 8);
    c.strokeTo(11, 8);
    c.endStroke();
    // vertical extent of the horizontal stroke is exactly rows 8 and 9
    const rows = new Set<number>();
    c.buffer.forEach((v, i) => {
      if (v) rows.add(Math.floor(i / 16));
    });
    expect([...rows].sort()).toEqual([8, 9]);
  });

  it("bounds the undo stack", () => {
    const c = new CanvasState(8, 8);
    for (let i = 0; i < UNDO_LIMIT + 20; i++) {
      c.beginStroke(i % 8, i % 8);
      c.endStroke();
    }
    expect(c.undoDepth).toBeLessThanOrEqual(UNDO_LIMIT);
  });

  it("rejects masks of the wrong size", () => {
    const c = new CanvasState(8, 8);
    expect(() => c.importMask(new Uint8Array(7))).toThrow();
  });
});
