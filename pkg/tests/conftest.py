import pytest

from partgen.cli import main as cli_main

# micro profile: every stage runs in seconds; quality is irrelevant here
MICRO_SET = []
for kv in ("raster=32", "views=2", "grid_res=16", "mesh_res=16", "T=10", "d=18",
           "hidden=32", "heads=2", "head_dim=16", "time_emb=16", "part_emb=8", "blocks=1",
           "steps_sketchnet=12", "steps_diffusion=15", "batch_sketchnet=2",
           "batch_diffusion=8", "cloud_size=64", "lr_sketchnet=1e-3"):
    MICRO_SET += ["--set", kv]


def run_cli(*argv):
    return cli_main(list(argv))


@pytest.fixture(scope="session")
def micro_run(tmp_path_factory):
    """One tiny end-to-end pipeline shared by CLI and service tests."""
    root = tmp_path_factory.mktemp("micro")
    data = root / "data"
    sk = root / "sketchnet"
    dm = root / "diffusion"
    assert run_cli(*MICRO_SET, "gen-data", "--n", "6", "--out", str(data)) == 0
    assert run_cli(*MICRO_SET, "align", "--data", str(data)) == 0
    assert run_cli(*MICRO_SET, "train-sketchnet", "--data", str(data), "--out", str(sk)) == 0
    assert run_cli(*MICRO_SET, "train-diffusion", "--data", str(data),
                   "--sketchnet", str(sk / "sketchnet.ckpt"), "--out", str(dm)) == 0
    return {
        "root": root,
        "data": data,
        "sketchnet": sk / "sketchnet.ckpt",
        "diffusion": dm / "diffusion.ckpt",
    }
