/**
 * Studio shell: wires the drawing canvas, session shape list, mesh viewer,
 * edit mode, and interpolation slider to the inference service.
 */

import { ApiClient, ApiError, ShapeRecord } from "./api.js";
import { CanvasState } from "./canvas.js";
import { fnv1a64 } from "./hash.js";
import { LatestWins } from "./limiter.js";
import { ParsedMesh, parseObj } from "./objparse.js";
import { DEFAULT_ORBIT, Orbit, PART_PALETTE, applyDrag, applyZoom, renderMesh } from "./viewer.js";

interface SessionShape {
  record: ShapeRecord;
  mesh: ParsedMesh;
  hash: string;
  label: string;
}

const params = new URLSearchParams(window.location.search);
const api = new ApiClient(params.get("service") ?? "http://127.0.0.1:8799");

const el = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;
const statusLine = el<HTMLDivElement>("status");
const drawCanvas = el<HTMLCanvasElement>("draw-canvas");
const meshCanvas = el<HTMLCanvasElement>("mesh-canvas");
const viewTabs = el<HTMLDivElement>("view-tabs");
const shapeList = el<HTMLDivElement>("shape-list");
const generateBtn = el<HTMLButtonElement>("generate");
const editBtn = el<HTMLButtonElement>("edit-submit");
const seedInput = el<HTMLInputElement>("seed");
const lambdaSlider = el<HTMLInputElement>("lambda");
const toast = el<HTMLDivElement>("toast");

let raster = 96;
let canvases: CanvasState[] = [];
let activeView = 0;
let tool: "draw" | "erase" = "draw";
let shapes: SessionShape[] = [];
let selected: SessionShape | null = null;
let pinA: SessionShape | null = null;
let pinB: SessionShape | null = null;
let orbit: Orbit = { ...DEFAULT_ORBIT };
let busy = false;

const interpLimiter = new LatestWins(200); // debounce contract: <= 5 requests/s

function note(message: string, isError = false): void {
  toast.textContent = message;
  toast.className = isError ? "toast error" : "toast";
  if (message) setTimeout(() => (toast.textContent = ""), 4000);
}

function redrawSketch(): void {
  const ctx = drawCanvas.getContext("2d")!;
  const scale = drawCanvas.width / raster;
  ctx.fillStyle = "#101018";
  ctx.fillRect(0, 0, drawCanvas.width, drawCanvas.height);
  ctx.fillStyle = "#f5f5f0";
  const buf = canvases[activeView].buffer;
  for (let y = 0; y < raster; y++) {
    for (let x = 0; x < raster; x++) {
      if (buf[y * raster + x]) ctx.fillRect(x * scale, y * scale, scale, scale);
    }
  }
  generateBtn.disabled = busy || canvases.every((c) => c.isEmpty);
  editBtn.disabled = busy || selected === null || canvases[activeView].isEmpty;
}

function redrawMesh(): void {
  const ctx = meshCanvas.getContext("2d")!;
  if (!selected) {
    ctx.fillStyle = "#16161e";
    ctx.fillRect(0, 0, meshCanvas.width, meshCanvas.height);
    return;
  }
  const highlight = new Set(selected.record.edit_report?.edited_part_indices ?? []);
  renderMesh(ctx, selected.mesh, selected.record.part_gaussians, orbit,
    meshCanvas.width, highlight);
}

function rebuildShapeList(): void {
  shapeList.innerHTML = "";
  shapes.forEach((shape) => {
    const chip = document.createElement("button");
    chip.className = "chip" + (shape === selected ? " active" : "");
    chip.textContent = shape.label;
    if (shape === pinA) chip.textContent += " [A]";
    if (shape === pinB) chip.textContent += " [B]";
    chip.onclick = () => {
      selected = shape;
      rebuildShapeList();
      redrawMesh();
      redrawSketch();
    };
    shapeList.appendChild(chip);
  });
}

function addShape(record: ShapeRecord, label: string): SessionShape {
  const shape: SessionShape = {
    record,
    mesh: parseObj(record.obj),
    hash: fnv1a64(record.obj),
    label: `${label} ${record.shape_id.slice(0, 5)} #${fnv1a64(record.obj).slice(0, 6)}`,
  };
  shapes.push(shape);
  selected = shape;
  rebuildShapeList();
  redrawMesh();
  redrawSketch();
  const edited = record.edit_report?.edited_part_indices ?? [];
  if (edited.length) note(`edited parts: ${edited.join(", ")}`);
  return shape;
}

async function withBusy(fn: () => Promise<void>): Promise<void> {
  busy = true;
  redrawSketch();
  try {
    await fn();
  } catch (err) {
    note(err instanceof ApiError ? `${err.status}: ${err.message}` : String(err), true);
  } finally {
    busy = false;
    redrawSketch();
  }
}

function sketchInputs() {
  return canvases
    .map((c, view) => ({ view_index: view, mask: c.exportMask() }))
    .filter((_, view) => !canvases[view].isEmpty);
}

generateBtn.onclick = () =>
  withBusy(async () => {
    const record = await api.generate(sketchInputs(), Number(seedInput.value) || 0);
    addShape(record, "gen");
  });

editBtn.onclick = () =>
  withBusy(async () => {
    if (!selected) return;
    const record = await api.edit(
      selected.record.shape_id, activeView, canvases[activeView].exportMask(),
      Number(seedInput.value) || 0);
    addShape(record, "edit");
  });

el<HTMLButtonElement>("pin-a").onclick = () => {
  pinA = selected;
  rebuildShapeList();
};
el<HTMLButtonElement>("pin-b").onclick = () => {
  pinB = selected;
  rebuildShapeList();
};

lambdaSlider.oninput = () => {
  el<HTMLSpanElement>("lambda-value").textContent = lambdaSlider.value;
  if (!pinA || !pinB) return;
  const a = pinA;
  const b = pinB;
  const lam = Number(lambdaSlider.value);
  interpLimiter.schedule(async () => {
    try {
      const record = await api.interpolate(
        a.record.shape_id, b.record.shape_id, lam, Number(seedInput.value) || 0);
      addShape(record, `mix ${lam.toFixed(2)}`);
    } catch (err) {
      note(String(err), true);
    }
  });
};

el<HTMLButtonElement>("undo").onclick = () => {
  canvases[activeView].undo();
  redrawSketch();
};
el<HTMLButtonElement>("clear").onclick = () => {
  canvases[activeView].clear();
  redrawSketch();
};
el<HTMLButtonElement>("tool-draw").onclick = () => {
  tool = "draw";
  note("pencil");
};
el<HTMLButtonElement>("tool-erase").onclick = () => {
  tool = "erase";
  note("eraser");
};

function canvasPos(event: PointerEvent): [number, number] {
  const rect = drawCanvas.getBoundingClientRect();
  const scale = raster / rect.width;
  return [
    Math.floor((event.clientX - rect.left) * scale),
    Math.floor((event.clientY - rect.top) * scale),
  ];
}

let drawing = false;
drawCanvas.onpointerdown = (event) => {
  drawing = true;
  drawCanvas.setPointerCapture(event.pointerId);
  const [x, y] = canvasPos(event);
  canvases[activeView].beginStroke(x, y, tool);
  redrawSketch();
};
drawCanvas.onpointermove = (event) => {
  if (!drawing) return;
  const [x, y] = canvasPos(event);
  canvases[activeView].strokeTo(x, y, tool);
  redrawSketch();
};
drawCanvas.onpointerup = () => {
  drawing = false;
  canvases[activeView].endStroke();
  redrawSketch();
};

let orbiting = false;
let lastPointer: [number, number] = [0, 0];
meshCanvas.onpointerdown = (event) => {
  orbiting = true;
  lastPointer = [event.clientX, event.clientY];
  meshCanvas.setPointerCapture(event.pointerId);
};
meshCanvas.onpointermove = (event) => {
  if (!orbiting) return;
  orbit = applyDrag(orbit, event.clientX - lastPointer[0], event.clientY - lastPointer[1]);
  lastPointer = [event.clientX, event.clientY];
  redrawMesh();
};
meshCanvas.onpointerup = () => (orbiting = false);
meshCanvas.onwheel = (event) => {
  event.preventDefault();
  orbit = applyZoom(orbit, event.deltaY);
  redrawMesh();
};

function buildViewTabs(): void {
  viewTabs.innerHTML = "";
  for (let view = 0; view < 6; view++) {
    const tab = document.createElement("button");
    tab.textContent = `v${view}`;
    tab.className = view === activeView ? "tab active" : "tab";
    tab.onclick = () => {
      activeView = view;
      canvases.forEach((c, i) => (c.activeView = i === view ? view : c.activeView));
      buildViewTabs();
      redrawSketch();
    };
    viewTabs.appendChild(tab);
  }
}

async function boot(): Promise<void> {
  statusLine.textContent = `connecting to ${api.baseUrl} ...`;
  for (;;) {
    try {
      const health = await api.health();
      if (health.status === "ready" && health.raster) {
        raster = health.raster.h;
        statusLine.textContent =
          `ready | profile ${health.profile} | ckpt ${health.model_checkpoint} | ${raster}x${raster}`;
        break;
      }
      statusLine.textContent = `service loading (queue ${health.queue_depth}) ...`;
    } catch {
      statusLine.textContent = `waiting for service at ${api.baseUrl} ...`;
    }
    await new Promise((resolve) => setTimeout(resolve, 500));
  }
  canvases = Array.from({ length: 6 }, () => new CanvasState(raster, raster));
  buildViewTabs();
  redrawSketch();
  redrawMesh();
  const legend = el<HTMLDivElement>("palette");
  PART_PALETTE.forEach((color, i) => {
    const swatch = document.createElement("span");
    swatch.className = "swatch";
    swatch.style.background = color;
    swatch.title = `part ${i}`;
    legend.appendChild(swatch);
  });
}

void boot();
