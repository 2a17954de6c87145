"""Filesystem pipeline stages shared by the CLI, the service, and tests.

A dataset directory is self-describing:

    manifest.txt            one "shape_id<TAB>filename" line per shape
    views.txt               per-view camera geometry
    shape_XXXX.plat         binary part-latent records
    shape_XXXX_v{k}_{sil|edge|seg}.pgm
    alignment_manifest.txt  written by the align stage

Stages are gated: a stage that needs a missing artifact raises
MissingStageError naming the command that produces it.
"""

from __future__ import annotations

import subprocess
from pathlib import Path

import numpy as np

from .config import dump_config
from .diffusion import DenoiserParams, SampleRequest, sample
from .errors import ContractError, DataCorruptionError, MissingStageError
from .partspace import PartLatent, align_to_template, select_template
from .projection import (
    Camera,
    PartSegmentMaps,
    RasterImage,
    raster_filename,
    read_pgm,
    render_edgemap,
    render_part_maps,
    standard_views,
    write_pgm,
)
from .sketchnet import EncoderParams, SketchEncoding, aggregate_views, encode
from .shapegen import (
    ShapeSpec,
    decode_parts,
    load_latent_record,
    make_dataset,
    marching_cubes,
    sample_grid,
    save_latent_record,
)


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=10)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def write_run_manifest(out_dir: Path, cfg: dict, command: str) -> None:
    text = (f"command={command}\n"
            f"git={git_describe()}\n"
            + dump_config(cfg))
    (out_dir / "run_manifest.txt").write_text(text)


def shape_id(index: int) -> str:
    return f"shape_{index:04d}"


def dataset_views(cfg: dict):
    return standard_views(cfg["raster"], cfg["raster"])[: cfg["views"]]


def gen_data(cfg: dict, n: int, out_dir) -> list:
    """Write n shapes: latent records plus per-view sil/edge/seg rasters."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = ShapeSpec(category=cfg["category"], m=cfg["m"], seed=cfg["seed"],
                     jitter_pos=cfg["jitter_pos"], jitter_scale=cfg["jitter_scale"])
    latents = make_dataset(spec, n, d=cfg["d"])
    views = dataset_views(cfg)

    manifest_lines = []
    for i, latent in enumerate(latents):
        sid = shape_id(i)
        save_latent_record(out_dir / f"{sid}.plat", latent, sid, cfg["seed"])
        manifest_lines.append(f"{sid}\t{sid}.plat")
        for k, cam in enumerate(views):
            maps = render_part_maps(latent, cam)
            sil = (maps.labels > 0).astype(np.float64)
            edge = render_edgemap(RasterImage(sil))
            write_pgm(out_dir / raster_filename(sid, k, "sil"), sil)
            write_pgm(out_dir / raster_filename(sid, k, "edge"), edge.values)
            write_pgm(out_dir / raster_filename(sid, k, "seg"), maps.labels.astype(np.uint8))
    (out_dir / "manifest.txt").write_text("\n".join(manifest_lines) + "\n")
    (out_dir / "views.txt").write_text(
        "\n".join(f"view {k} azimuth={cam.azimuth:.10g} elevation={cam.elevation:.10g} "
                  f"distance={cam.distance:.10g} h={cam.height} w={cam.width}"
                  for k, cam in enumerate(views)) + "\n")
    return latents


def load_manifest(data_dir) -> list:
    data_dir = Path(data_dir)
    manifest = data_dir / "manifest.txt"
    if not manifest.exists():
        raise MissingStageError(f"{data_dir} has no manifest.txt; run gen-data first")
    out = []
    for line in manifest.read_text().splitlines():
        if line.strip():
            sid, fname = line.split("\t")
            out.append((sid, fname))
    return out


def load_latents(data_dir, with_seeds: bool = False):
    data_dir = Path(data_dir)
    ids, latents, seeds = [], [], []
    for sid, fname in load_manifest(data_dir):
        latent, rec_sid, rec_seed = load_latent_record(data_dir / fname)
        if rec_sid != sid:
            raise DataCorruptionError(f"{fname}: record id {rec_sid} != manifest id {sid}")
        ids.append(sid)
        latents.append(latent)
        seeds.append(rec_seed)
    return (ids, latents, seeds) if with_seeds else (ids, latents)


def align_dataset(data_dir, seed: int, greedy: bool = False) -> dict:
    """Permute every latent to the seeded template; relabel seg rasters to match."""
    data_dir = Path(data_dir)
    ids, latents, seeds = load_latents(data_dir, with_seeds=True)
    template, t_idx = select_template(latents, seed)
    lines = [f"template\t{ids[t_idx]}\t{t_idx}"]
    perms = {}
    for sid, latent, rec_seed in zip(ids, latents, seeds):
        aligned, alignment = align_to_template(latent, template, greedy=greedy)
        perm = np.asarray(alignment.perm)
        perms[sid] = perm
        save_latent_record(data_dir / f"{sid}.plat", aligned, sid, rec_seed)
        _relabel_segs(data_dir, sid, perm)
        lines.append(f"{sid}\t{','.join(str(int(p)) for p in perm)}")
    (data_dir / "alignment_manifest.txt").write_text("\n".join(lines) + "\n")
    return perms


def _relabel_segs(data_dir: Path, sid: str, perm: np.ndarray):
    # slot n now holds old row perm[n]: pixel label perm[n]+1 becomes n+1
    new_label = np.zeros(len(perm) + 1, dtype=np.uint8)
    for slot, src in enumerate(perm):
        new_label[src + 1] = slot + 1
    for path in sorted(data_dir.glob(f"{sid}_v*_seg.pgm")):
        labels = read_pgm(path)
        write_pgm(path, new_label[labels])


def require_aligned(data_dir) -> None:
    if not (Path(data_dir) / "alignment_manifest.txt").exists():
        raise MissingStageError(f"{data_dir} is not aligned; run align first")


def load_pairs(data_dir, m: int, limit=None) -> list:
    """(edgemap, part maps) training pairs for every shape and view."""
    data_dir = Path(data_dir)
    entries = load_manifest(data_dir)
    if limit is not None:
        entries = entries[:limit]
    pairs = []
    for sid, _ in entries:
        for path in sorted(data_dir.glob(f"{sid}_v*_edge.pgm")):
            view = int(path.stem.split("_v")[1].split("_")[0])
            edge = RasterImage(read_pgm(path) / 255.0)
            labels = read_pgm(data_dir / raster_filename(sid, view, "seg")).astype(np.int64)
            masks = np.stack([(labels == i + 1).astype(np.float64) for i in range(m)])
            pairs.append((edge, PartSegmentMaps(masks=masks, labels=labels)))
    if not pairs:
        raise MissingStageError(f"{data_dir} has no rendered views; run gen-data first")
    return pairs


def encodings_per_shape(data_dir, enc_params: EncoderParams, limit=None) -> list:
    """List (per shape) of per-view SketchEncoding from stored edgemaps."""
    data_dir = Path(data_dir)
    entries = load_manifest(data_dir)
    if limit is not None:
        entries = entries[:limit]
    out = []
    for sid, _ in entries:
        encs = []
        for path in sorted(data_dir.glob(f"{sid}_v*_edge.pgm")):
            encs.append(encode(RasterImage(read_pgm(path) / 255.0), enc_params))
        if not encs:
            raise MissingStageError(f"{sid} has no edgemaps; run gen-data first")
        out.append(encs)
    return out


def mesh_latent(latent: PartLatent, res: int):
    grid = sample_grid(decode_parts(latent), res)
    return marching_cubes(grid, 0.5)


def encode_mask(mask: np.ndarray, enc_params: EncoderParams) -> SketchEncoding:
    """0/1 (or 0/255) stroke raster -> part-aligned encoding."""
    arr = np.asarray(mask, dtype=np.float64)
    if arr.max() > 1.0:
        arr = arr / 255.0
    return encode(RasterImage((arr > 0.5).astype(np.float64)), enc_params)


def generate(params: DenoiserParams, seed: int, steps=None,
             cond: SketchEncoding | None = None) -> PartLatent:
    return sample(params, SampleRequest(seed=seed, steps=steps, cond=cond))


def aggregate_masks(masks, enc_params: EncoderParams) -> SketchEncoding:
    if not masks:
        raise ContractError("need at least one sketch mask")
    return aggregate_views([encode_mask(m, enc_params) for m in masks])
