"""Command-line pipeline driver.

Verbs run in stage order: gen-data -> align -> train-sketchnet ->
train-diffusion -> sample / edit / interpolate / eval / serve / export.
Each stage writes into its own output directory together with a run
manifest (config snapshot, git describe, command line) sufficient to
reproduce the artifacts byte-for-byte.

Exit codes: 0 success, 2 usage or config error, 3 missing prerequisite
stage, 4 corrupt data file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import diffusion as diff
from . import pipeline, sketchnet
from .config import load_config
from .editpipe import detect_edited_parts, interpolate_encodings, part_swap
from .errors import ContractError, DataCorruptionError, MissingStageError
from .metrics import gen_metrics, sample_points, write_report_csv
from .projection import read_pgm
from .shapegen import export_obj, load_latent_record, save_latent_record

EXIT_USAGE = 2
EXIT_MISSING_STAGE = 3
EXIT_CORRUPT = 4


def _write_curve(path, curve):
    with open(path, "w") as fh:
        fh.write("step,loss\n")
        for i, v in enumerate(curve):
            fh.write(f"{i},{v:.10g}\n")


def _sketch_config(cfg) -> sketchnet.SketchConfig:
    return sketchnet.SketchConfig(m=cfg["m"], d_s=cfg["d_s"], raster=cfg["raster"])


def _diff_config(cfg) -> diff.DiffusionConfig:
    return diff.DiffusionConfig(
        m=cfg["m"], d=cfg["d"], d_s=cfg["d_s"], hidden=cfg["hidden"], blocks=cfg["blocks"],
        heads=cfg["heads"], head_dim=cfg["head_dim"], T=cfg["T"],
        beta_min=cfg["beta_min"], beta_max=cfg["beta_max"],
        time_emb=cfg["time_emb"], part_emb=cfg["part_emb"])


def _load_masks(paths):
    return [read_pgm(p) for p in paths]


def _require(path, stage):
    if not Path(path).exists():
        raise MissingStageError(f"{path} not found; run {stage} first")
    return Path(path)


def cmd_gen_data(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_run_manifest(out, cfg, "gen-data")
    pipeline.gen_data(cfg, args.n, out)
    print(f"wrote {args.n} shapes to {out}")


def cmd_align(args, cfg):
    data = _require(args.data, "gen-data")
    perms = pipeline.align_dataset(data, cfg["seed"], greedy=args.greedy_argmin)
    identity = sum(1 for p in perms.values() if np.array_equal(p, np.arange(len(p))))
    print(f"aligned {len(perms)} shapes ({identity} already in template order)")


def cmd_train_sketchnet(args, cfg):
    data = _require(args.data, "gen-data")
    pipeline.require_aligned(data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_run_manifest(out, cfg, "train-sketchnet")
    pairs = pipeline.load_pairs(data, cfg["m"], limit=args.limit)
    sk_cfg = _sketch_config(cfg)
    train_cfg = sketchnet.TrainConfig(
        lr=cfg["lr_sketchnet"], batch=cfg["batch_sketchnet"], steps=cfg["steps_sketchnet"],
        seed=cfg["seed"], augment=bool(cfg["augment"]))
    enc, dec, curve = sketchnet.train_sketchnet(pairs, sk_cfg, train_cfg)
    sketchnet.save_checkpoint(out / "sketchnet.ckpt", enc, dec)
    _write_curve(out / "sketchnet_loss.csv", curve)
    print(f"sketchnet: {len(pairs)} pairs, final loss {curve[-1]:.4f} -> {out}")


def cmd_train_diffusion(args, cfg):
    data = _require(args.data, "gen-data")
    if not args.allow_unaligned:
        pipeline.require_aligned(data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_run_manifest(out, cfg, "train-diffusion")
    _, latents = pipeline.load_latents(data)
    if args.limit is not None:
        latents = latents[: args.limit]

    pairs = None
    if args.sketchnet is not None:
        enc, _ = sketchnet.load_checkpoint(_require(args.sketchnet, "train-sketchnet"))
        pairs = pipeline.encodings_per_shape(data, enc, limit=args.limit)

    d_cfg = _diff_config(cfg)
    train_cfg = diff.TrainDiffusionConfig(
        lr=cfg["lr_diffusion"], weight_decay=cfg["weight_decay"], batch=cfg["batch_diffusion"],
        steps=cfg["steps_diffusion"], seed=cfg["seed"], cond_dropout=cfg["cond_dropout"])
    params, curve = diff.train_diffusion(latents, d_cfg, train_cfg, pairs=pairs)
    diff.save_checkpoint(out / "diffusion.ckpt", params)
    _write_curve(out / "diffusion_loss.csv", curve)
    mode = "conditional" if pairs is not None else "unconditional"
    print(f"diffusion ({mode}): {len(latents)} latents, final loss {curve[-1]:.4f} -> {out}")


def _load_model(args):
    params = diff.load_checkpoint(_require(args.model, "train-diffusion"))
    enc = None
    if getattr(args, "sketchnet", None) is not None:
        enc, _ = sketchnet.load_checkpoint(_require(args.sketchnet, "train-sketchnet"))
    return params, enc


def _condition(args, enc):
    if not getattr(args, "views", None):
        return None
    if enc is None:
        raise MissingStageError("conditioning requires --sketchnet; run train-sketchnet first")
    return pipeline.aggregate_masks(_load_masks(args.views), enc)


def cmd_sample(args, cfg):
    params, enc = _load_model(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_run_manifest(out, cfg, "sample")
    cond = _condition(args, enc)
    latent = pipeline.generate(params, seed=cfg["seed"], steps=args.steps, cond=cond)
    save_latent_record(out / "sample.plat", latent, "sample", cfg["seed"])
    mesh = pipeline.mesh_latent(latent, cfg["mesh_res"])
    export_obj(mesh, out / "sample.obj")
    print(f"sampled {'conditionally' if cond is not None else 'unconditionally'} -> {out}/sample.obj "
          f"({len(mesh.vertices)} vertices)")


def cmd_edit(args, cfg):
    params, enc = _load_model(args)
    if enc is None:
        raise MissingStageError("edit requires --sketchnet; run train-sketchnet first")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_run_manifest(out, cfg, "edit")
    eta = pipeline.aggregate_masks(_load_masks(args.views), enc)
    eta_prime = pipeline.aggregate_masks(_load_masks(args.edited_views), enc)
    report = detect_edited_parts(eta, eta_prime)
    base = pipeline.generate(params, seed=cfg["seed"], steps=args.steps, cond=eta)
    edited = pipeline.generate(params, seed=cfg["seed"], steps=args.steps, cond=eta_prime)
    merged = part_swap(base, edited, report.edited_part_indices)
    export_obj(pipeline.mesh_latent(base, cfg["mesh_res"]), out / "base.obj")
    export_obj(pipeline.mesh_latent(merged, cfg["mesh_res"]), out / "edited.obj")
    (out / "edit_report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(f"edited parts {sorted(report.edited_part_indices)} -> {out}/edited.obj")


def cmd_interpolate(args, cfg):
    params, enc = _load_model(args)
    if enc is None:
        raise MissingStageError("interpolate requires --sketchnet; run train-sketchnet first")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_run_manifest(out, cfg, "interpolate")
    eta_a = pipeline.aggregate_masks(_load_masks(args.views_a), enc)
    eta_b = pipeline.aggregate_masks(_load_masks(args.views_b), enc)
    mixed = interpolate_encodings(eta_a, eta_b, args.lam)
    latent = pipeline.generate(params, seed=cfg["seed"], steps=args.steps, cond=mixed)
    export_obj(pipeline.mesh_latent(latent, cfg["mesh_res"]), out / "interpolated.obj")
    print(f"lambda={args.lam} -> {out}/interpolated.obj")


def cmd_eval(args, cfg):
    params, _ = _load_model(args)
    data = _require(args.data, "gen-data")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_run_manifest(out, cfg, "eval")
    _, latents = pipeline.load_latents(data)
    if args.limit is not None:
        latents = latents[: args.limit]

    cloud = args.cloud_size or cfg["cloud_size"]
    ref = [sample_points(pipeline.mesh_latent(z, cfg["grid_res"]), cloud, seed=cfg["seed"] + i)
           for i, z in enumerate(latents)]
    gen = []
    for i in range(args.n_gen):
        latent = pipeline.generate(params, seed=cfg["seed"] + 10_000 + i)
        gen.append(sample_points(pipeline.mesh_latent(latent, cfg["grid_res"]), cloud,
                                 seed=cfg["seed"] + 20_000 + i))
    rows = []
    for kind in args.dist:
        result = gen_metrics(gen, ref, dist=kind)
        for metric, value in (("COV", result.cov), ("MMD", result.mmd), ("1-NNA", result.nna)):
            rows.append((metric, kind, f"{value:.10g}", len(gen), len(ref), cloud, cfg["seed"]))
    write_report_csv(out / "eval.csv", rows)
    print(f"evaluated {len(gen)} generated vs {len(ref)} reference shapes -> {out}/eval.csv")


def cmd_serve(args, cfg):
    from .service import run_server

    params, enc = _load_model(args)
    if enc is None:
        raise MissingStageError("serve requires --sketchnet; run train-sketchnet first")
    run_server(params, enc, port=args.port, mesh_res=cfg["mesh_res"], profile=cfg["profile"],
               checkpoint_path=args.model)


def cmd_export(args, cfg):
    latent, sid, _ = load_latent_record(_require(args.latent, "sample"))
    mesh = pipeline.mesh_latent(latent, args.res or cfg["mesh_res"])
    export_obj(mesh, args.out)
    print(f"exported {sid} ({len(mesh.vertices)} vertices) -> {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="partgen",
                                     description="part-aware sketch-to-3D pipeline")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--profile", default="desk", choices=("desk", "paper"))
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the procedural dataset and renders")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("align", help="align all latents to a seeded template")
    p.add_argument("--data", required=True)
    p.add_argument("--greedy-argmin", action="store_true",
                   help="use the per-slot argmin rule instead of bijective matching")
    p.set_defaults(fn=cmd_align)

    p = sub.add_parser("train-sketchnet", help="train the sketch encoder + seg decoder")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int, help="use only the first N shapes")
    p.set_defaults(fn=cmd_train_sketchnet)

    p = sub.add_parser("train-diffusion", help="train the latent denoiser")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sketchnet", help="sketchnet checkpoint enabling conditioning")
    p.add_argument("--limit", type=int)
    p.add_argument("--allow-unaligned", action="store_true",
                   help="train on raw part order (ablation)")
    p.set_defaults(fn=cmd_train_diffusion)

    p = sub.add_parser("sample", help="generate one shape")
    p.add_argument("--model", required=True)
    p.add_argument("--sketchnet")
    p.add_argument("--views", nargs="*", default=[], help="sketch PGMs for conditioning")
    p.add_argument("--steps", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("edit", help="regenerate with localized part edits")
    p.add_argument("--model", required=True)
    p.add_argument("--sketchnet", required=True)
    p.add_argument("--views", nargs="+", required=True)
    p.add_argument("--edited-views", nargs="+", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_edit)

    p = sub.add_parser("interpolate", help="morph between two sketch encodings")
    p.add_argument("--model", required=True)
    p.add_argument("--sketchnet", required=True)
    p.add_argument("--views-a", nargs="+", required=True)
    p.add_argument("--views-b", nargs="+", required=True)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_interpolate)

    p = sub.add_parser("eval", help="COV/MMD/1-NNA of generated vs dataset shapes")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-gen", type=int, default=64)
    p.add_argument("--dist", nargs="+", default=["CD"], choices=("CD", "EMD"))
    p.add_argument("--cloud-size", type=int)
    p.add_argument("--limit", type=int)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve", help="run the JSON inference API")
    p.add_argument("--model", required=True)
    p.add_argument("--sketchnet", required=True)
    p.add_argument("--port", type=int, default=8799)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("export", help="decode a latent record to an OBJ mesh")
    p.add_argument("--latent", required=True)
    p.add_argument("--res", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ContractError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            overrides[key] = value
        if args.seed is not None:
            overrides["seed"] = args.seed
        cfg = load_config(profile=args.profile, path=args.config, overrides=overrides)
        args.fn(args, cfg)
        return 0
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MissingStageError as exc:
        print(f"missing prerequisite: {exc}", file=sys.stderr)
        return EXIT_MISSING_STAGE
    except DataCorruptionError as exc:
        print(f"corrupt data: {exc}", file=sys.stderr)
        return EXIT_CORRUPT


if __name__ == "__main__":
    sys.exit(main())
