"""On-disk formats: ASCII OBJ meshes and binary part-latent records."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import DataCorruptionError
from ..partspace import PartLatent
from .field import Mesh

RECORD_MAGIC = b"PARTLAT\x00"
RECORD_VERSION = 1


def export_obj(mesh: Mesh, path) -> None:
    """Write v/f lines with 1-based indices and 9 significant digits."""
    path = Path(path)
    lines = ["# partgen mesh: %d vertices, %d faces" % (len(mesh.vertices), len(mesh.faces))]
    for v in mesh.vertices:
        lines.append("v %.9g %.9g %.9g" % (v[0], v[1], v[2]))
    for f in mesh.faces:
        lines.append("f %d %d %d" % (f[0] + 1, f[1] + 1, f[2] + 1))
    path.write_text("\n".join(lines) + "\n")


def import_obj(path) -> Mesh:
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
    verts = np.array(verts, dtype=np.float64).reshape(-1, 3)
    faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
    return Mesh(verts, faces)


def obj_text(mesh: Mesh) -> str:
    lines = ["# partgen mesh: %d vertices, %d faces" % (len(mesh.vertices), len(mesh.faces))]
    for v in mesh.vertices:
        lines.append("v %.9g %.9g %.9g" % (v[0], v[1], v[2]))
    for f in mesh.faces:
        lines.append("f %d %d %d" % (f[0] + 1, f[1] + 1, f[2] + 1))
    return "\n".join(lines) + "\n"


def save_latent_record(path, latent: PartLatent, shape_id: str, spec_seed: int) -> None:
    sid = shape_id.encode("utf-8")
    blob = b"".join([
        RECORD_MAGIC,
        struct.pack("<QQQ", RECORD_VERSION, latent.m, latent.d),
        np.ascontiguousarray(latent.rows, dtype="<f8").tobytes(),
        struct.pack("<Q", len(sid)),
        sid,
        struct.pack("<q", int(spec_seed)),
    ])
    Path(path).write_bytes(blob)


def load_latent_record(path):
    """Return (latent, shape_id, spec_seed); raises DataCorruptionError on damage."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != RECORD_MAGIC:
        raise DataCorruptionError(f"{path}: bad magic, not a part-latent record")
    try:
        version, m, d = struct.unpack_from("<QQQ", raw, 8)
        if version != RECORD_VERSION:
            raise DataCorruptionError(f"{path}: unsupported record version {version}")
        off = 32
        rows = np.frombuffer(raw, dtype="<f8", count=m * d, offset=off).reshape(m, d)
        off += 8 * m * d
        (sid_len,) = struct.unpack_from("<Q", raw, off)
        off += 8
        shape_id = raw[off:off + sid_len].decode("utf-8")
        off += sid_len
        (spec_seed,) = struct.unpack_from("<q", raw, off)
    except (struct.error, ValueError) as exc:
        raise DataCorruptionError(f"{path}: truncated part-latent record") from exc
    return PartLatent(rows.astype(np.float64)), shape_id, spec_seed
