"""Part-disentangled sketch encoder with an auxiliary segmentation decoder.

The encoder maps a line-drawing raster to one row per part; a single
shared decoder turns any one row into that part's mask logits. Because the
decoder sees rows in isolation, each row is forced to carry its own part's
evidence — that per-row sufficiency is what downstream conditioning and
edit detection rely on.

Encoder: 4 strided 3x3 conv blocks (16/32/64/128 channels) -> shared
bottleneck -> per-part linear heads. Decoder: linear seed at raster/8,
then 3 (nearest-upsample, conv, relu) stages and a final conv to logits.
Every decoder conv sees fixed coordinate-basis channels (x, y, x^2, y^2,
xy) alongside its features: part masks are projected ellipsoids, so their
boundaries are nearly linear in that basis, which lets a very small shared
decoder paint precise masks from one latent row.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError
from .numcore import Graph, AdamWState, adamw_step, make_rng, sigmoid
from .projection import PartSegmentMaps, RasterImage

ENC_CHANNELS = (16, 32, 64, 128)
DEC_CHANNELS = (16, 14, 12, 10)  # seed channels + one per upsample stage
N_COORD = 5  # x, y, x^2, y^2, xy basis appended before every decoder conv


@dataclass(frozen=True)
class SketchConfig:
    m: int = 16
    d_s: int = 64
    raster: int = 128
    trunk: int = 256
    enc_channels: tuple = ENC_CHANNELS
    dec_channels: tuple = DEC_CHANNELS

    def __post_init__(self):
        if self.raster % 16 != 0 or self.raster < 32:
            raise ContractError("raster size must be a multiple of 16 and >= 32")
        if len(self.enc_channels) != 4 or len(self.dec_channels) != 4:
            raise ContractError("expected 4 encoder conv blocks and 3 decoder upsample stages")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    batch: int = 64
    steps: int = 800
    seed: int = 0
    augment: bool = True


@dataclass(frozen=True)
class SketchEncoding:
    """m x d_s part-aligned encoding of one sketch."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or not np.all(np.isfinite(rows)):
            raise ContractError("sketch encoding must be a finite 2-D array")
        object.__setattr__(self, "rows", rows)

    @property
    def m(self):
        return self.rows.shape[0]

    @property
    def d_s(self):
        return self.rows.shape[1]


@dataclass
class EncoderParams:
    config: SketchConfig
    weights: dict = field(default_factory=dict)


@dataclass
class SegDecoderParams:
    config: SketchConfig
    weights: dict = field(default_factory=dict)


def init_params(config: SketchConfig, seed: int = 0):
    rng = make_rng(seed, 0x5E7)
    enc, dec = {}, {}
    cin = 1
    for i, cout in enumerate(config.enc_channels):
        enc[f"conv{i}_w"] = rng.normal(size=(3, 3, cin, cout)) * np.sqrt(2.0 / (9 * cin))
        # small positive bias keeps blank-region units off the exact relu kink
        enc[f"conv{i}_b"] = np.full(cout, 0.01)
        cin = cout
    spatial = config.raster // 16
    flat = spatial * spatial * config.enc_channels[-1]
    enc["trunk_w"] = rng.normal(size=(flat, config.trunk)) * np.sqrt(2.0 / flat)
    enc["trunk_b"] = np.full(config.trunk, 0.01)
    enc["head_w"] = rng.normal(size=(config.trunk, config.m * config.d_s)) * np.sqrt(1.0 / config.trunk)
    enc["head_b"] = np.zeros(config.m * config.d_s)

    seed_hw = config.raster // 8
    c0 = config.dec_channels[0]
    dec["seed_w"] = rng.normal(size=(config.d_s, seed_hw * seed_hw * c0)) * np.sqrt(2.0 / config.d_s)
    dec["seed_b"] = np.full(seed_hw * seed_hw * c0, 0.01)
    cin = c0
    for i, cout in enumerate(config.dec_channels[1:]):
        dec[f"up{i}_w"] = rng.normal(size=(3, 3, cin + N_COORD, cout)) * np.sqrt(2.0 / (9 * cin))
        dec[f"up{i}_b"] = np.full(cout, 0.01)
        cin = cout
    dec["out_w"] = rng.normal(size=(3, 3, cin + N_COORD, 1)) * np.sqrt(2.0 / (9 * cin))
    dec["out_b"] = np.zeros(1)
    return EncoderParams(config, enc), SegDecoderParams(config, dec)


def _leaves(g: Graph, weights: dict, param: bool):
    return {k: g.leaf(v, param=param, name=k) for k, v in weights.items()}


def _encoder_forward(g: Graph, images: int, w: dict, config: SketchConfig) -> int:
    """images (B, 1, H, W) -> encodings (B, m, d_s)."""
    h = images
    for i in range(len(config.enc_channels)):
        h = g.relu(g.conv2d(h, w[f"conv{i}_w"], w[f"conv{i}_b"], stride=2))
    batch = g.value(images).shape[0]
    h = g.reshape(h, (batch, -1))
    h = g.relu(g.affine(h, w["trunk_w"], w["trunk_b"]))
    h = g.affine(h, w["head_w"], w["head_b"])
    return g.reshape(h, (batch, config.m, config.d_s))


def coord_basis(size: int) -> np.ndarray:
    """(5, size, size) channels: x, y, x^2, y^2, xy over [-1, 1]."""
    axis = np.linspace(-1.0, 1.0, size)
    x, y = np.meshgrid(axis, axis)
    return np.stack([x, y, x * x, y * y, x * y])


def _with_coords(g: Graph, h: int, n: int, size: int) -> int:
    basis = np.broadcast_to(coord_basis(size), (n, N_COORD, size, size))
    return g.concat([h, g.constant(basis)], axis=1)


def _decoder_forward(g: Graph, rows: int, w: dict, config: SketchConfig) -> int:
    """rows (N, d_s) -> mask logits (N, H, W)."""
    n = g.value(rows).shape[0]
    s = config.raster // 8
    h = g.relu(g.affine(rows, w["seed_w"], w["seed_b"]))
    h = g.reshape(h, (n, config.dec_channels[0], s, s))
    for i in range(len(config.dec_channels) - 1):
        h = g.upsample2(h)
        s *= 2
        h = g.relu(g.conv2d(_with_coords(g, h, n, s), w[f"up{i}_w"], w[f"up{i}_b"], stride=1))
    h = g.conv2d(_with_coords(g, h, n, s), w["out_w"], w["out_b"], stride=1)
    return g.reshape(h, (n, config.raster, config.raster))


def loss_graph(enc_weights: dict, dec_weights: dict, images: np.ndarray,
               targets: np.ndarray, config: SketchConfig):
    """Per-part BCE segmentation loss, summed over parts.

    images (B, H, W); targets (B, m, H, W). Returns (graph, loss node,
    weight-leaf ids) so the same builder serves training and grad checks.
    """
    g = Graph(check_finite=False)
    img = g.constant(images[:, None, :, :])
    ew = _leaves(g, enc_weights, param=True)
    dw = _leaves(g, dec_weights, param=True)
    enc = _encoder_forward(g, img, ew, config)
    b = images.shape[0]
    rows = g.reshape(enc, (b * config.m, config.d_s))
    logits = _decoder_forward(g, rows, dw, config)
    tgt = g.constant(targets.reshape(b * config.m, config.raster, config.raster))
    loss = g.scale(g.bce_logits(logits, tgt), config.m)
    ids = {**{k: ew[k] for k in enc_weights}, **{k: dw[k] for k in dec_weights}}
    return g, loss, ids


def encode(image: RasterImage, params: EncoderParams) -> SketchEncoding:
    """Deterministic m x d_s encoding of one raster."""
    cfg = params.config
    vals = image.values
    if vals.shape != (cfg.raster, cfg.raster):
        raise ContractError(f"image shape {vals.shape} != configured raster {cfg.raster}")
    g = Graph(check_finite=False)
    img = g.constant(vals[None, None, :, :])
    w = _leaves(g, params.weights, param=False)
    out = _encoder_forward(g, img, w, cfg)
    return SketchEncoding(g.value(out)[0])


def decode_part(row: np.ndarray, params: SegDecoderParams) -> np.ndarray:
    """One encoding row -> per-pixel mask probabilities in (0, 1)."""
    cfg = params.config
    row = np.asarray(row, dtype=np.float64).reshape(1, cfg.d_s)
    g = Graph(check_finite=False)
    rows = g.constant(row)
    w = _leaves(g, params.weights, param=False)
    logits = _decoder_forward(g, rows, w, cfg)
    return sigmoid(g.value(logits)[0])


def aggregate_views(encodings) -> SketchEncoding:
    """Element-wise mean of part-aligned encodings from multiple views."""
    encodings = list(encodings)
    if not encodings:
        raise ContractError("cannot aggregate an empty list of encodings")
    shape = encodings[0].rows.shape
    if any(e.rows.shape != shape for e in encodings):
        raise ContractError("encoding shapes differ")
    return SketchEncoding(np.mean([e.rows for e in encodings], axis=0))


def jitter_strokes(edge: np.ndarray, rng) -> np.ndarray:
    """Pixel-level dilation/erosion noise used as training augmentation."""
    e = edge > 0.5
    pe = np.pad(e, 1)
    ring = (pe[:-2, 1:-1] | pe[2:, 1:-1] | pe[1:-1, :-2] | pe[1:-1, 2:]) & ~e
    out = (e & ~(rng.random(e.shape) < 0.10)) | (ring & (rng.random(e.shape) < 0.22))
    return out.astype(np.float64)


def train_sketchnet(pairs, config: SketchConfig, train: TrainConfig):
    """Fit encoder and shared decoder on (edgemap, part-maps) pairs.

    Returns (EncoderParams, SegDecoderParams, loss curve). Deterministic for
    a fixed seed: batch order and stroke jitter both derive from it.
    """
    if not pairs:
        raise ContractError("need at least one training pair")
    images, targets = [], []
    for sketch, maps in pairs:
        vals = sketch.values if isinstance(sketch, RasterImage) else np.asarray(sketch)
        m = maps.m if isinstance(maps, PartSegmentMaps) else np.asarray(maps).shape[0]
        if m != config.m:
            raise ContractError(f"pair has {m} part maps, config expects {config.m}")
        images.append(vals)
        targets.append(maps.masks if isinstance(maps, PartSegmentMaps) else np.asarray(maps))
    images = np.stack(images)
    targets = np.stack(targets)

    enc, dec = init_params(config, seed=train.seed)
    weights = {**{f"enc/{k}": v for k, v in enc.weights.items()},
               **{f"dec/{k}": v for k, v in dec.weights.items()}}
    state = AdamWState(lr=train.lr, weight_decay=0.0)
    order_rng = make_rng(train.seed, 0xBA7C)
    curve = []
    n = len(images)
    for step in range(train.steps):
        idx = order_rng.choice(n, size=min(train.batch, n), replace=train.batch > n)
        batch_imgs = images[idx]
        if train.augment:
            aug_rng = make_rng(train.seed, 0xA06, step)
            batch_imgs = np.stack([jitter_strokes(im, aug_rng) for im in batch_imgs])
        g, loss, ids = loss_graph(
            {k[4:]: v for k, v in weights.items() if k.startswith("enc/")},
            {k[4:]: v for k, v in weights.items() if k.startswith("dec/")},
            batch_imgs, targets[idx], config)
        grads = g.grad(loss)
        flat_grads = {}
        for k, nid in ids.items():
            prefix = "enc/" if k in enc.weights else "dec/"
            flat_grads[prefix + k] = grads[nid]
        weights = adamw_step(state, weights, flat_grads)
        curve.append(float(g.value(loss)))
    enc_out = EncoderParams(config, {k[4:]: v for k, v in weights.items() if k.startswith("enc/")})
    dec_out = SegDecoderParams(config, {k[4:]: v for k, v in weights.items() if k.startswith("dec/")})
    return enc_out, dec_out, curve


def save_checkpoint(path, enc: EncoderParams, dec: SegDecoderParams) -> None:
    cfg = enc.config
    tensors = {
        "meta": np.array([cfg.m, cfg.d_s, cfg.raster, cfg.trunk], dtype=np.float64),
        "meta_enc_channels": np.array(cfg.enc_channels, dtype=np.float64),
        "meta_dec_channels": np.array(cfg.dec_channels, dtype=np.float64),
    }
    tensors.update({f"enc/{k}": v for k, v in enc.weights.items()})
    tensors.update({f"dec/{k}": v for k, v in dec.weights.items()})
    from .numcore import save_tensors
    save_tensors(path, tensors)


def load_checkpoint(path):
    from .numcore import load_tensors
    tensors = load_tensors(path)
    m, d_s, raster, trunk = (int(x) for x in tensors.pop("meta"))
    cfg = SketchConfig(
        m=m, d_s=d_s, raster=raster, trunk=trunk,
        enc_channels=tuple(int(x) for x in tensors.pop("meta_enc_channels")),
        dec_channels=tuple(int(x) for x in tensors.pop("meta_dec_channels")))
    enc = {k[4:]: v for k, v in tensors.items() if k.startswith("enc/")}
    dec = {k[4:]: v for k, v in tensors.items() if k.startswith("dec/")}
    return EncoderParams(cfg, enc), SegDecoderParams(cfg, dec)
