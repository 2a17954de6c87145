/**
 * Painter's-algorithm mesh viewer with per-part coloring.
 *
 * Faces are assigned to parts by evaluating each part's weighted Gaussian
 * density at the face centroid (the same ownership rule the service uses
 * for segment maps), tinted from a fixed 16-color palette, flat-shaded,
 * depth-sorted, and drawn onto a 2D canvas. Orbit state is plain math so
 * it can be unit-tested without a DOM.
 */

import type { PartGaussian } from "./api.js";
import type { ParsedMesh } from "./objparse.js";

// fixed part palette: stable across sessions so screenshots are comparable
export const PART_PALETTE = [
  "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231", "#911eb4",
  "#46f0f0", "#f032e6", "#bcf60c", "#fabebe", "#008080", "#e6beff",
  "#9a6324", "#fffac8", "#800000", "#aaffc3",
];

export interface Orbit {
  azimuth: number;
  elevation: number;
  distance: number;
}

export const DEFAULT_ORBIT: Orbit = { azimuth: 0.7, elevation: 0.35, distance: 3.2 };

export function applyDrag(orbit: Orbit, dx: number, dy: number): Orbit {
  const elevation = Math.min(1.45, Math.max(-1.45, orbit.elevation + dy * 0.01));
  return { azimuth: orbit.azimuth + dx * 0.01, elevation, distance: orbit.distance };
}

export function applyZoom(orbit: Orbit, deltaY: number): Orbit {
  const distance = Math.min(12, Math.max(1.2, orbit.distance * Math.exp(deltaY * 0.001)));
  return { ...orbit, distance };
}

export function cameraBasis(orbit: Orbit): { eye: number[]; right: number[]; up: number[]; forward: number[] } {
  const ce = Math.cos(orbit.elevation);
  const eye = [
    orbit.distance * ce * Math.sin(orbit.azimuth),
    orbit.distance * Math.sin(orbit.elevation),
    orbit.distance * ce * Math.cos(orbit.azimuth),
  ];
  const norm = Math.hypot(eye[0], eye[1], eye[2]);
  const forward = [-eye[0] / norm, -eye[1] / norm, -eye[2] / norm];
  const right0 = [forward[2], 0, -forward[0]]; // cross(forward, worldUp)
  const rn = Math.hypot(right0[0], right0[1], right0[2]);
  const right = [right0[0] / rn, right0[1] / rn, right0[2] / rn];
  const up = [
    right[1] * forward[2] - right[2] * forward[1],
    right[2] * forward[0] - right[0] * forward[2],
    right[0] * forward[1] - right[1] * forward[0],
  ];
  return { eye, right, up, forward };
}

/** Project a world point to canvas pixels plus view depth. */
export function project(
  p: [number, number, number], orbit: Orbit, size: number, fovTan = 0.7,
): [number, number, number] {
  const { eye, right, up, forward } = cameraBasis(orbit);
  const d = [p[0] - eye[0], p[1] - eye[1], p[2] - eye[2]];
  const z = d[0] * forward[0] + d[1] * forward[1] + d[2] * forward[2];
  const x = d[0] * right[0] + d[1] * right[1] + d[2] * right[2];
  const y = d[0] * up[0] + d[1] * up[1] + d[2] * up[2];
  const sx = size / 2 + (size / 2) * (x / (z * fovTan));
  const sy = size / 2 - (size / 2) * (y / (z * fovTan));
  return [sx, sy, z];
}

function invert3(m: number[][]): { inv: number[][]; det: number } {
  const [a, b, c] = m[0];
  const [d, e, f] = m[1];
  const [g, h, i] = m[2];
  const co = [
    [e * i - f * h, c * h - b * i, b * f - c * e],
    [f * g - d * i, a * i - c * g, c * d - a * f],
    [d * h - e * g, b * g - a * h, a * e - b * d],
  ];
  const det = a * co[0][0] + b * co[1][0] + c * co[2][0];
  const inv = co.map((row) => row.map((v) => v / det));
  return { inv, det };
}

/** Index of the part most likely to own a 3D point (weighted density argmax). */
export function ownerPart(point: [number, number, number], parts: PartGaussian[]): number {
  let best = -Infinity;
  let owner = 0;
  parts.forEach((part, index) => {
    const { inv, det } = invert3(part.sigma);
    const d = [point[0] - part.mu[0], point[1] - part.mu[1], point[2] - part.mu[2]];
    let q = 0;
    for (let r = 0; r < 3; r++) {
      for (let col = 0; col < 3; col++) q += d[r] * inv[r][col] * d[col];
    }
    const score = Math.log(part.pi) - 0.5 * (q + Math.log(Math.abs(det)));
    if (score > best) {
      best = score;
      owner = index;
    }
  });
  return owner;
}

export interface FaceDrawCall {
  points: [number, number][]; // 2D triangle
  depth: number;
  color: string;
  part: number;
  highlighted: boolean;
}

function shade(hex: string, factor: number): string {
  const v = parseInt(hex.slice(1), 16);
  const r = Math.min(255, Math.round(((v >> 16) & 255) * factor));
  const g = Math.min(255, Math.round(((v >> 8) & 255) * factor));
  const b = Math.min(255, Math.round((v & 255) * factor));
  return `rgb(${r},${g},${b})`;
}

/** Depth-sorted, lit, part-colored draw list for a mesh. */
export function buildDrawList(
  mesh: ParsedMesh, parts: PartGaussian[], orbit: Orbit, size: number,
  highlight: Set<number> = new Set(),
): FaceDrawCall[] {
  const { forward } = cameraBasis(orbit);
  const out: FaceDrawCall[] = [];
  const v = mesh.vertices;
  for (let f = 0; f < mesh.faces.length; f += 3) {
    const idx = [mesh.faces[f] * 3, mesh.faces[f + 1] * 3, mesh.faces[f + 2] * 3];
    const centroid: [number, number, number] = [
      (v[idx[0]] + v[idx[1]] + v[idx[2]]) / 3,
      (v[idx[0] + 1] + v[idx[1] + 1] + v[idx[2] + 1]) / 3,
      (v[idx[0] + 2] + v[idx[1] + 2] + v[idx[2] + 2]) / 3,
    ];
    const pts: [number, number][] = [];
    let depth = 0;
    for (const base of idx) {
      const [sx, sy, z] = project([v[base], v[base + 1], v[base + 2]], orbit, size);
      pts.push([sx, sy]);
      depth += z / 3;
    }
    // flat shading from the face normal
    const e1 = [v[idx[1]] - v[idx[0]], v[idx[1] + 1] - v[idx[0] + 1], v[idx[1] + 2] - v[idx[0] + 2]];
    const e2 = [v[idx[2]] - v[idx[0]], v[idx[2] + 1] - v[idx[0] + 1], v[idx[2] + 2] - v[idx[0] + 2]];
    const n = [
      e1[1] * e2[2] - e1[2] * e2[1],
      e1[2] * e2[0] - e1[0] * e2[2],
      e1[0] * e2[1] - e1[1] * e2[0],
    ];
    const nn = Math.hypot(n[0], n[1], n[2]) || 1;
    const lambert = Math.abs((n[0] * forward[0] + n[1] * forward[1] + n[2] * forward[2]) / nn);
    const part = parts.length ? ownerPart(centroid, parts) : 0;
    const base = PART_PALETTE[part % PART_PALETTE.length];
    const highlighted = highlight.has(part);
    out.push({
      points: pts,
      depth,
      color: shade(base, (highlighted ? 0.75 : 0.45) + 0.55 * lambert),
      part,
      highlighted,
    });
  }
  out.sort((a, b) => b.depth - a.depth);
  return out;
}

export function renderMesh(
  ctx: CanvasRenderingContext2D, mesh: ParsedMesh, parts: PartGaussian[], orbit: Orbit,
  size: number, highlight: Set<number> = new Set(),
): void {
  ctx.fillStyle = "#16161e";
  ctx.fillRect(0, 0, size, size);
  for (const call of buildDrawList(mesh, parts, orbit, size, highlight)) {
    ctx.beginPath();
    ctx.moveTo(call.points[0][0], call.points[0][1]);
    ctx.lineTo(call.points[1][0], call.points[1][1]);
    ctx.lineTo(call.points[2][0], call.points[2][1]);
    ctx.closePath();
    ctx.fillStyle = call.color;
    ctx.fill();
    if (call.highlighted) {
      ctx.strokeStyle = "#ffffff";
      ctx.lineWidth = 0.6;
      ctx.stroke();
    }
  }
}
