/** Minimal OBJ reader for the v/f triangle meshes the service emits. */

export interface ParsedMesh {
  vertices: Float64Array; // 3 * n
  faces: Uint32Array; // 3 * k, zero-based
}

export function parseObj(text: string): ParsedMesh {
  const verts: number[] = [];
  const faces: number[] = [];
  for (const line of text.split("\n")) {
    if (line.startsWith("v ")) {
      const parts = line.slice(2).trim().split(/\s+/);
      verts.push(Number(parts[0]), Number(parts[1]), Number(parts[2]));
    } else if (line.startsWith("f ")) {
      const parts = line.slice(2).trim().split(/\s+/);
      for (let i = 0; i < 3; i++) {
        faces.push(Number(parts[i].split("/")[0]) - 1);
      }
    }
  }
  return { vertices: Float64Array.from(verts), faces: Uint32Array.from(faces) };
}

export function vertexCount(mesh: ParsedMesh): number {
  return mesh.vertices.length / 3;
}

export function faceCount(mesh: ParsedMesh): number {
  return mesh.faces.length / 3;
}
