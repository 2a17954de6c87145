/**
 * Typed client for the inference service (api_version 1).
 *
 * The studio never computes geometry locally: every mesh it shows comes
 * back from these endpoints as OBJ text inside the JSON response.
 */

export interface PartGaussian {
  mu: [number, number, number];
  sigma: number[][];
  pi: number;
}

export interface EditReport {
  edited_part_indices: number[];
  distances: number[];
  threshold: number;
}

export interface ShapeRecord {
  api_version: number;
  shape_id: string;
  parent_id: string | null;
  obj: string;
  part_gaussians: PartGaussian[];
  edit_report: EditReport | null;
  timing_ms: number;
}

export interface HealthInfo {
  api_version: number;
  status: "loading" | "ready";
  model_checkpoint: string;
  profile: string;
  queue_depth: number;
  raster: { h: number; w: number } | null;
}

export interface SketchInput {
  view_index: number;
  mask: Uint8Array;
}

const B64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

/** Dependency-free base64 so browser and node tests encode identically. */
export function bytesToBase64(bytes: Uint8Array): string {
  let out = "";
  for (let i = 0; i < bytes.length; i += 3) {
    const a = bytes[i];
    const b = i + 1 < bytes.length ? bytes[i + 1] : 0;
    const c = i + 2 < bytes.length ? bytes[i + 2] : 0;
    out += B64[a >> 2] + B64[((a & 3) << 4) | (b >> 4)];
    out += i + 1 < bytes.length ? B64[((b & 15) << 2) | (c >> 6)] : "=";
    out += i + 2 < bytes.length ? B64[c & 63] : "=";
  }
  return out;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    const data = (await resp.json()) as Record<string, unknown>;
    if (!resp.ok) {
      throw new ApiError(resp.status, String(data["error"] ?? resp.statusText));
    }
    return data as T;
  }

  async health(): Promise<HealthInfo> {
    const resp = await fetch(this.baseUrl + "/api/health");
    return (await resp.json()) as HealthInfo;
  }

  generate(sketches: SketchInput[], seed: number, steps?: number): Promise<ShapeRecord> {
    return this.post<ShapeRecord>("/api/generate", {
      sketches: sketches.map((s) => ({
        view_index: s.view_index,
        mask: bytesToBase64(s.mask),
      })),
      seed,
      ...(steps !== undefined ? { steps } : {}),
    });
  }

  edit(shapeId: string, viewIndex: number, mask: Uint8Array, seed: number): Promise<ShapeRecord> {
    return this.post<ShapeRecord>("/api/edit", {
      shape_id: shapeId,
      view_index: viewIndex,
      mask: bytesToBase64(mask),
      seed,
    });
  }

  interpolate(shapeIdA: string, shapeIdB: string, lambda: number, seed: number): Promise<ShapeRecord> {
    return this.post<ShapeRecord>("/api/interpolate", {
      shape_id_a: shapeIdA,
      shape_id_b: shapeIdB,
      lambda,
      seed,
    });
  }
}
