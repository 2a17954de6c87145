from pathlib import Path

import numpy as np
import pytest

from partgen.cli import EXIT_CORRUPT, EXIT_MISSING_STAGE, EXIT_USAGE
from partgen.partspace import pairwise_w2
from partgen.projection import read_pgm
from partgen.shapegen import decode_parts, load_latent_record, save_latent_record
from partgen.numcore import make_rng

from conftest import MICRO_SET, run_cli


def tree_bytes(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_gen_data_counts_and_determinism(tmp_path, micro_run):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert run_cli(*MICRO_SET, "gen-data", "--n", "4", "--out", str(a)) == 0
    assert run_cli(*MICRO_SET, "gen-data", "--n", "4", "--out", str(b)) == 0
    plats = list(a.glob("*.plat"))
    pgms = list(a.glob("*.pgm"))
    assert len(plats) == 4
    assert len(pgms) == 4 * 2 * 3  # views=2, kinds sil/edge/seg
    assert (a / "manifest.txt").exists() and (a / "views.txt").exists()
    assert tree_bytes(a) == tree_bytes(b)


def test_views_manifest_geometry(micro_run):
    text = (Path(micro_run["data"]) / "views.txt").read_text()
    assert "elevation=0.3141592654" in text
    assert "distance=2.07" in text


def test_align_idempotent(micro_run, tmp_path):
    data = tmp_path / "data"
    assert run_cli(*MICRO_SET, "gen-data", "--n", "4", "--out", str(data)) == 0
    assert run_cli(*MICRO_SET, "align", "--data", str(data)) == 0
    first = tree_bytes(data)
    assert run_cli(*MICRO_SET, "align", "--data", str(data)) == 0
    second = tree_bytes(data)
    # artifacts unchanged; only the manifest switches to identity permutations
    first.pop("alignment_manifest.txt")
    second.pop("alignment_manifest.txt")
    assert first == second
    manifest = (data / "alignment_manifest.txt").read_text().splitlines()
    identity = ",".join(str(i) for i in range(16))
    assert all(line.split("\t")[1] == identity for line in manifest[1:])


def test_align_recovers_injected_permutation(tmp_path):
    data = tmp_path / "data"
    assert run_cli(*MICRO_SET, "gen-data", "--n", "3", "--out", str(data)) == 0
    assert run_cli(*MICRO_SET, "align", "--data", str(data)) == 0
    target = data / "shape_0001.plat"
    latent, sid, seed = load_latent_record(target)
    reference_bytes = target.read_bytes()
    perm = make_rng(99).permutation(latent.m)
    save_latent_record(target, latent.permuted(perm), sid, seed)
    assert run_cli(*MICRO_SET, "align", "--data", str(data)) == 0
    assert target.read_bytes() == reference_bytes


def test_align_reduces_cost(tmp_path):
    data = tmp_path / "data"
    assert run_cli(*MICRO_SET, "gen-data", "--n", "4", "--out", str(data)) == 0
    from partgen.pipeline import load_latents
    _, before = load_latents(data)
    assert run_cli(*MICRO_SET, "align", "--data", str(data)) == 0
    _, after = load_latents(data)
    manifest = (data / "alignment_manifest.txt").read_text().splitlines()
    t_idx = int(manifest[0].split("\t")[2])
    template = before[t_idx]
    gt = decode_parts(template).gaussians
    for z_before, z_after in zip(before, after):
        cost_before = pairwise_w2(decode_parts(z_before).gaussians, gt).diagonal().sum()
        cost_after = pairwise_w2(decode_parts(z_after).gaussians, gt).diagonal().sum()
        assert cost_after <= cost_before + 1e-9


def test_align_relabels_segmaps(tmp_path):
    data = tmp_path / "data"
    assert run_cli(*MICRO_SET, "gen-data", "--n", "2", "--out", str(data)) == 0
    seg_before = read_pgm(data / "shape_0000_v0_seg.pgm")
    assert run_cli(*MICRO_SET, "align", "--data", str(data)) == 0
    seg_after = read_pgm(data / "shape_0000_v0_seg.pgm")
    # foreground support unchanged, labels permuted consistently
    np.testing.assert_array_equal(seg_before > 0, seg_after > 0)
    from partgen.pipeline import load_latents
    from partgen.projection import standard_views, render_part_maps
    _, latents = load_latents(data)
    cam = standard_views(32, 32)[0]
    np.testing.assert_array_equal(render_part_maps(latents[0], cam).labels, seg_after)


def test_stage_gating(tmp_path):
    empty = tmp_path / "none"
    empty.mkdir()
    assert run_cli(*MICRO_SET, "train-sketchnet", "--data", str(empty),
                   "--out", str(tmp_path / "o")) == EXIT_MISSING_STAGE
    assert run_cli(*MICRO_SET, "sample", "--model", str(tmp_path / "missing.ckpt"),
                   "--out", str(tmp_path / "s")) == EXIT_MISSING_STAGE


def test_train_sketchnet_requires_alignment(tmp_path):
    data = tmp_path / "data"
    assert run_cli(*MICRO_SET, "gen-data", "--n", "2", "--out", str(data)) == 0
    assert run_cli(*MICRO_SET, "train-sketchnet", "--data", str(data),
                   "--out", str(tmp_path / "o")) == EXIT_MISSING_STAGE


def test_config_rejects_unknown_and_out_of_range(tmp_path):
    assert run_cli("--set", "nonsense=1", "gen-data", "--n", "1",
                   "--out", str(tmp_path / "x")) == EXIT_USAGE
    assert run_cli("--set", "m=0", "gen-data", "--n", "1",
                   "--out", str(tmp_path / "y")) == EXIT_USAGE


def test_corrupt_record_reported(tmp_path):
    data = tmp_path / "data"
    assert run_cli(*MICRO_SET, "gen-data", "--n", "2", "--out", str(data)) == 0
    (data / "shape_0001.plat").write_bytes(b"garbage")
    assert run_cli(*MICRO_SET, "align", "--data", str(data)) == EXIT_CORRUPT


def test_sample_deterministic_obj(micro_run, tmp_path):
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    edge = next(Path(micro_run["data"]).glob("shape_0000_v0_edge.pgm"))
    for out in (out1, out2):
        assert run_cli(*MICRO_SET, "--seed", "7", "sample",
                       "--model", str(micro_run["diffusion"]),
                       "--sketchnet", str(micro_run["sketchnet"]),
                       "--views", str(edge), "--out", str(out)) == 0
    assert (out1 / "sample.obj").read_bytes() == (out2 / "sample.obj").read_bytes()
    assert (out1 / "run_manifest.txt").read_bytes() == (out2 / "run_manifest.txt").read_bytes()


def test_sample_unconditional(micro_run, tmp_path):
    out = tmp_path / "u"
    assert run_cli(*MICRO_SET, "sample", "--model", str(micro_run["diffusion"]),
                   "--out", str(out)) == 0
    assert (out / "sample.obj").exists()


def test_edit_and_interpolate_commands(micro_run, tmp_path):
    data = Path(micro_run["data"])
    v0 = data / "shape_0000_v0_edge.pgm"
    v0b = data / "shape_0001_v0_edge.pgm"
    out = tmp_path / "edit"
    assert run_cli(*MICRO_SET, "edit", "--model", str(micro_run["diffusion"]),
                   "--sketchnet", str(micro_run["sketchnet"]),
                   "--views", str(v0), "--edited-views", str(v0b),
                   "--out", str(out)) == 0
    assert (out / "edited.obj").exists() and (out / "edit_report.json").exists()

    out2 = tmp_path / "interp"
    assert run_cli(*MICRO_SET, "interpolate", "--model", str(micro_run["diffusion"]),
                   "--sketchnet", str(micro_run["sketchnet"]),
                   "--views-a", str(v0), "--views-b", str(v0b), "--lam", "0.5",
                   "--out", str(out2)) == 0
    assert (out2 / "interpolated.obj").exists()


def test_eval_csv_schema(micro_run, tmp_path):
    out = tmp_path / "eval"
    assert run_cli(*MICRO_SET, "eval", "--model", str(micro_run["diffusion"]),
                   "--data", str(micro_run["data"]), "--n-gen", "3", "--limit", "3",
                   "--cloud-size", "32", "--dist", "CD", "EMD", "--out", str(out)) == 0
    lines = (out / "eval.csv").read_text().splitlines()
    assert lines[0] == "metric,dist_kind,value,n_gen,n_ref,cloud_size,seed"
    assert len(lines) == 1 + 3 * 2  # COV/MMD/1-NNA for CD and EMD


def test_export_roundtrip(micro_run, tmp_path):
    out = tmp_path / "samp"
    assert run_cli(*MICRO_SET, "sample", "--model", str(micro_run["diffusion"]),
                   "--out", str(out)) == 0
    target = tmp_path / "exported.obj"
    assert run_cli(*MICRO_SET, "export", "--latent", str(out / "sample.plat"),
                   "--res", "16", "--out", str(target)) == 0
    assert (out / "sample.obj").read_bytes() == target.read_bytes()
