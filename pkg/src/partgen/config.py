"""Flat key=value run configuration with a validated schema and profiles.

The format is deliberately primitive (one `key=value` per line, `#`
comments) so any tool can parse or diff it. Unknown keys are rejected;
every value is range-checked. A profile is just a preset bundle applied
before file and command-line overrides.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ContractError

# key: (type, min, max) or (str, tuple-of-choices)
SCHEMA = {
    "profile": (str, ("desk", "paper")),
    "category": (str, ("chair-like", "table-like", "free")),
    "seed": (int, 0, 2**62),
    "m": (int, 1, 256),
    "d": (int, 17, 4096),
    "d_s": (int, 4, 1024),
    "raster": (int, 32, 1024),
    "views": (int, 1, 6),
    "grid_res": (int, 8, 256),
    "mesh_res": (int, 8, 256),
    "T": (int, 1, 10000),
    "beta_min": (float, 1e-8, 0.5),
    "beta_max": (float, 1e-8, 0.999),
    "hidden": (int, 8, 4096),
    "blocks": (int, 1, 16),
    "heads": (int, 1, 64),
    "head_dim": (int, 1, 512),
    "time_emb": (int, 2, 1024),
    "part_emb": (int, 2, 1024),
    "steps_sketchnet": (int, 1, 10**9),
    "steps_diffusion": (int, 1, 10**9),
    "batch_sketchnet": (int, 1, 4096),
    "batch_diffusion": (int, 1, 4096),
    "lr_sketchnet": (float, 1e-8, 1.0),
    "lr_diffusion": (float, 1e-8, 1.0),
    "weight_decay": (float, 0.0, 1.0),
    "cond_dropout": (float, 0.0, 1.0),
    "cloud_size": (int, 8, 100000),
    "jitter_pos": (float, 0.0, 1.0),
    "jitter_scale": (float, 0.0, 1.0),
    "augment": (int, 0, 1),
}

_COMMON = {
    "category": "chair-like",
    "seed": 0,
    "m": 16,
    "d_s": 64,
    "views": 6,
    "grid_res": 32,
    "mesh_res": 48,
    "beta_min": 1e-4,
    "beta_max": 0.02,
    "hidden": 128,
    "blocks": 4,
    "heads": 4,
    "head_dim": 32,
    "time_emb": 224,
    "part_emb": 64,
    "weight_decay": 0.01,
    "cond_dropout": 0.1,
    "cloud_size": 2048,
    "jitter_pos": 0.04,
    "jitter_scale": 0.12,
    "augment": 1,
}

PROFILES = {
    # trains end to end on a CPU in tens of minutes
    "desk": {
        **_COMMON,
        "profile": "desk",
        "d": 32,
        "raster": 96,
        "T": 100,
        "steps_sketchnet": 450,
        "steps_diffusion": 2000,
        "batch_sketchnet": 6,
        "batch_diffusion": 64,
        "lr_sketchnet": 5e-4,
        "lr_diffusion": 1e-4,
    },
    # structural constants at published scale; step counts stay desk-sized
    # so the profile remains runnable without accelerators
    "paper": {
        **_COMMON,
        "profile": "paper",
        "d": 512,
        "raster": 128,
        "T": 1000,
        "steps_sketchnet": 450,
        "steps_diffusion": 2000,
        "batch_sketchnet": 64,
        "batch_diffusion": 128,
        "lr_sketchnet": 2e-4,
        "lr_diffusion": 1e-4,
    },
}


def _coerce(key: str, raw):
    if key not in SCHEMA:
        raise ContractError(f"unknown config key '{key}'")
    spec = SCHEMA[key]
    if spec[0] is str:
        value = str(raw)
        if value not in spec[1]:
            raise ContractError(f"config {key}={value!r} not one of {spec[1]}")
        return value
    try:
        value = spec[0](raw)
    except (TypeError, ValueError):
        raise ContractError(f"config {key}={raw!r} is not a {spec[0].__name__}") from None
    lo, hi = spec[1], spec[2]
    if not (lo <= value <= hi):
        raise ContractError(f"config {key}={value} outside [{lo}, {hi}]")
    return value


def load_config(profile: str = "desk", path=None, overrides=None) -> dict:
    """Profile defaults, then file keys, then explicit overrides."""
    if profile not in PROFILES:
        raise ContractError(f"unknown profile '{profile}'")
    cfg = dict(PROFILES[profile])
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ContractError(f"{path}:{lineno}: expected key=value")
            key, raw = (part.strip() for part in line.split("=", 1))
            cfg[key] = _coerce(key, raw)
    for key, raw in (overrides or {}).items():
        cfg[key] = _coerce(key, raw)
    return cfg


def dump_config(cfg: dict) -> str:
    return "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg)) + "\n"
