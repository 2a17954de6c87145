"""Latent DDPM over aligned part-latents.

The denoiser is a stack of multi-head attention blocks over the m part
tokens. Unconditionally the blocks self-attend; with a sketch condition the
queries come from projected sketch tokens instead (keys/values stay on the
diffusion path), so one set of weights serves both modes and a seeded 10%
condition dropout during conditional training keeps the unconditional mode
trained.

Latents are standardized per dimension before diffusion (raw Gaussian
parameters live on wildly different scales) and de-standardized after
sampling; the standardization moments ride along in the checkpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractError
from .numcore import Graph, AdamWState, adamw_step, make_rng
from .partspace import PartLatent
from .sketchnet import SketchEncoding

TIME_EMB_WIDTH = 224
PART_EMB_WIDTH = 64


@dataclass(frozen=True)
class NoiseSchedule:
    """Forward-process constants; alpha_bar is the cumulative product."""

    T: int
    beta: np.ndarray
    alpha_bar: np.ndarray

    @classmethod
    def linear(cls, T: int, beta_min: float = 1e-4, beta_max: float = 0.02) -> "NoiseSchedule":
        if T < 1:
            raise ContractError("schedule needs at least one step")
        if not (0.0 < beta_min < beta_max < 1.0):
            raise ContractError("betas must satisfy 0 < beta_min < beta_max < 1")
        beta = np.linspace(beta_min, beta_max, T)
        alpha_bar = np.cumprod(1.0 - beta)
        return cls(T=T, beta=beta, alpha_bar=alpha_bar)

    def validate(self):
        if not np.all(np.diff(self.beta) > 0) or self.beta.min() <= 0 or self.beta.max() >= 1:
            raise ContractError("beta must be strictly increasing within (0, 1)")
        if not np.all(np.diff(self.alpha_bar) < 0) or self.alpha_bar.min() <= 0 or self.alpha_bar.max() >= 1:
            raise ContractError("alpha_bar must be strictly decreasing within (0, 1)")


@dataclass(frozen=True)
class DiffusionConfig:
    m: int = 16
    d: int = 32
    d_s: int = 64
    hidden: int = 128
    blocks: int = 4
    heads: int = 4
    head_dim: int = 32
    ff_mult: int = 2
    T: int = 1000
    beta_min: float = 1e-4
    beta_max: float = 0.02
    time_emb: int = TIME_EMB_WIDTH
    part_emb: int = PART_EMB_WIDTH

    def __post_init__(self):
        if self.heads * self.head_dim != self.hidden:
            raise ContractError("heads * head_dim must equal the hidden width")
        if self.part_emb >= self.hidden:
            raise ContractError("part embedding width must be below the hidden width")

    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule.linear(self.T, self.beta_min, self.beta_max)


@dataclass
class DenoiserParams:
    config: DiffusionConfig
    weights: dict = field(default_factory=dict)
    z_mean: Optional[np.ndarray] = None  # (m, d) standardization moments
    z_std: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SampleRequest:
    seed: int
    steps: Optional[int] = None  # <= T; None means all T
    cond: Optional[SketchEncoding] = None


def posemb(index, width: int) -> np.ndarray:
    """Interleaved sin/cos embedding with a base-10000 frequency ladder."""
    if width % 2 != 0:
        raise ContractError("positional embedding width must be even")
    index = np.asarray(index, dtype=np.float64)
    half = width // 2
    freqs = np.power(10000.0, -np.arange(half) / half)
    angles = index[..., None] * freqs
    out = np.empty(index.shape + (width,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def forward_noise(z0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """q(z_t | z_0): sqrt(abar_t) z0 + sqrt(1 - abar_t) eps, t in 1..T."""
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if not (1 <= t <= schedule.T):
        raise ContractError(f"step {t} outside schedule range 1..{schedule.T}")
    if eps.shape != z0.shape:
        raise ContractError("noise shape must match the latent shape")
    ab = schedule.alpha_bar[t - 1]
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def init_denoiser(config: DiffusionConfig, seed: int = 0) -> DenoiserParams:
    rng = make_rng(seed, 0xD1FF)
    h = config.hidden
    w = {}
    in_width = config.d + config.time_emb + config.part_emb
    w["in_w"] = rng.normal(size=(in_width, h)) * np.sqrt(1.0 / in_width)
    w["in_b"] = np.zeros(h)
    cond_in = config.d_s
    w["cond_w"] = rng.normal(size=(cond_in, h - config.part_emb)) * np.sqrt(1.0 / cond_in)
    w["cond_b"] = np.zeros(h - config.part_emb)
    for l in range(config.blocks):
        for name in ("q_self", "q_cond", "k", "v", "o"):
            w[f"b{l}_{name}"] = rng.normal(size=(h, h)) * np.sqrt(0.5 / h)
        w[f"b{l}_ff1_w"] = rng.normal(size=(h, config.ff_mult * h)) * np.sqrt(1.0 / h)
        w[f"b{l}_ff1_b"] = np.zeros(config.ff_mult * h)
        w[f"b{l}_ff2_w"] = rng.normal(size=(config.ff_mult * h, h)) * np.sqrt(0.5 / (config.ff_mult * h))
        w[f"b{l}_ff2_b"] = np.zeros(h)
    w["out_w"] = rng.normal(size=(h, config.d)) * np.sqrt(1.0 / h)
    w["out_b"] = np.zeros(config.d)
    return DenoiserParams(config=config, weights=w)


def cross_attention(g: Graph, q_tokens: int, k_tokens: int, v_tokens: int,
                    wq: int, wk: int, wv: int, wo: int, heads: int, head_dim: int) -> int:
    """Multi-head scaled dot-product attention; heads concatenated, then projected."""
    q = g.matmul(q_tokens, wq)
    k = g.matmul(k_tokens, wk)
    v = g.matmul(v_tokens, wv)
    outs = []
    for hd in range(heads):
        lo, hi = hd * head_dim, (hd + 1) * head_dim
        qh, kh, vh = (g.slice_last(x, lo, hi) for x in (q, k, v))
        scores = g.scale(g.matmul(qh, kh, transpose_b=True), 1.0 / np.sqrt(head_dim))
        outs.append(g.matmul(g.softmax_rows(scores), vh))
    return g.matmul(g.concat(outs, axis=-1), wo)


def _denoiser_graph(params: DenoiserParams, z_t: np.ndarray, t_steps: np.ndarray,
                    cond: Optional[np.ndarray], part_indices: np.ndarray,
                    target: Optional[np.ndarray] = None):
    """Build the eps-prediction graph for a batch.

    z_t (B, m, d); t_steps (B,); cond (B, m, d_s) or None; target (B, m, d)
    adds an MSE loss node. Returns (graph, eps_hat node, loss node or None,
    weight-leaf ids).
    """
    cfg = params.config
    b, m, _ = z_t.shape
    g = Graph(check_finite=False)
    w = {k: g.leaf(v, param=True, name=k) for k, v in params.weights.items()}

    temb = np.broadcast_to(posemb(t_steps, cfg.time_emb)[:, None, :], (b, m, cfg.time_emb))
    pemb = np.broadcast_to(posemb(part_indices, cfg.part_emb)[None, :, :], (b, m, cfg.part_emb))
    x = g.concat([g.constant(z_t), g.constant(temb), g.constant(pemb)], axis=-1)
    h = g.relu(g.affine(x, w["in_w"], w["in_b"]))

    q_src = None
    if cond is not None:
        proj = g.affine(g.constant(cond), w["cond_w"], w["cond_b"])
        q_src = g.concat([proj, g.constant(pemb)], axis=-1)

    for l in range(cfg.blocks):
        att = cross_attention(
            g, q_src if q_src is not None else h, h, h,
            w[f"b{l}_q_cond" if q_src is not None else f"b{l}_q_self"],
            w[f"b{l}_k"], w[f"b{l}_v"], w[f"b{l}_o"], cfg.heads, cfg.head_dim)
        h = g.add(h, att)
        ff = g.affine(g.relu(g.affine(h, w[f"b{l}_ff1_w"], w[f"b{l}_ff1_b"])),
                      w[f"b{l}_ff2_w"], w[f"b{l}_ff2_b"])
        h = g.add(h, ff)
    eps_hat = g.affine(h, w["out_w"], w["out_b"])
    loss = g.mse(eps_hat, g.constant(target)) if target is not None else None
    return g, eps_hat, loss, w


def denoise_step_predict(params: DenoiserParams, z_t: np.ndarray, t: int,
                         cond: Optional[SketchEncoding] = None,
                         part_indices=None) -> np.ndarray:
    """Predict the noise component of z_t at step t; (m, d) in, (m, d) out."""
    cfg = params.config
    z_t = np.asarray(z_t, dtype=np.float64)
    if z_t.shape != (cfg.m, cfg.d):
        raise ContractError(f"z_t shape {z_t.shape} != ({cfg.m}, {cfg.d})")
    cond_arr = None
    if cond is not None:
        if cond.rows.shape != (cfg.m, cfg.d_s):
            raise ContractError(f"condition shape {cond.rows.shape} != ({cfg.m}, {cfg.d_s})")
        cond_arr = cond.rows[None]
    if part_indices is None:
        part_indices = np.arange(cfg.m)
    g, eps_hat, _, _ = _denoiser_graph(params, z_t[None], np.array([t]), cond_arr,
                                       np.asarray(part_indices, dtype=np.float64))
    return g.value(eps_hat)[0]


@dataclass(frozen=True)
class TrainDiffusionConfig:
    lr: float = 1e-4
    weight_decay: float = 0.01
    batch: int = 128
    steps: int = 10000
    seed: int = 0
    cond_dropout: float = 0.1


def standardize_moments(latents) -> tuple:
    stack = np.stack([z.rows for z in latents])
    mean = stack.mean(axis=0)
    std = np.maximum(stack.std(axis=0), 1e-6)
    return mean, std


def train_diffusion(dataset, config: DiffusionConfig, train: TrainDiffusionConfig,
                    pairs=None, init: Optional[DenoiserParams] = None):
    """Fit the denoiser on aligned latents; ``pairs`` adds sketch conditioning.

    dataset: list of PartLatent (already aligned to one template).
    pairs: optional list (same length) of per-shape SketchEncoding lists;
    each sample draws one view's encoding, and with probability
    ``cond_dropout`` a step trains in unconditional (self-attention) mode.
    Returns (DenoiserParams, loss curve).
    """
    if not dataset:
        raise ContractError("empty training set")
    if any(z.rows.shape != dataset[0].rows.shape for z in dataset):
        raise ContractError("latents must share one shape")
    if pairs is not None and len(pairs) != len(dataset):
        raise ContractError("pairs must align 1:1 with the dataset")
    if (config.m, config.d) != dataset[0].rows.shape:
        raise ContractError("config (m, d) does not match the dataset")

    mean, std = standardize_moments(dataset)
    z0 = (np.stack([z.rows for z in dataset]) - mean) / std
    n = len(dataset)
    schedule = config.schedule()
    schedule.validate()

    params = init if init is not None else init_denoiser(config, seed=train.seed)
    params = DenoiserParams(config=config, weights=dict(params.weights), z_mean=mean, z_std=std)
    state = AdamWState(lr=train.lr, weight_decay=train.weight_decay)
    rng = make_rng(train.seed, 0x7EA1)
    part_idx = np.arange(config.m, dtype=np.float64)
    curve = []
    weights = params.weights
    for _ in range(train.steps):
        idx = rng.choice(n, size=train.batch, replace=True)
        t_steps = rng.integers(1, schedule.T + 1, size=train.batch)
        eps = rng.standard_normal((train.batch, config.m, config.d))
        ab = schedule.alpha_bar[t_steps - 1][:, None, None]
        z_t = np.sqrt(ab) * z0[idx] + np.sqrt(1.0 - ab) * eps

        cond = None
        if pairs is not None and rng.random() >= train.cond_dropout:
            picked = [pairs[i][rng.integers(len(pairs[i]))].rows for i in idx]
            cond = np.stack(picked)

        work = DenoiserParams(config=config, weights=weights, z_mean=mean, z_std=std)
        g, _, loss, ids = _denoiser_graph(work, z_t, t_steps.astype(np.float64), cond, part_idx,
                                          target=eps)
        grads = g.grad(loss)
        weights = adamw_step(state, weights, {k: grads[nid] for k, nid in ids.items()})
        curve.append(float(g.value(loss)))
    return DenoiserParams(config=config, weights=weights, z_mean=mean, z_std=std), curve


def sample(params: DenoiserParams, req: SampleRequest) -> PartLatent:
    """Ancestral DDPM sampling from seeded Gaussian noise down to a latent.

    ``req.steps`` < T runs the same update on an evenly strided subsequence;
    the final step adds no noise, so a single-step request returns the
    closed-form posterior mean given the predicted noise.
    """
    cfg = params.config
    if params.z_mean is None or params.z_std is None:
        raise ContractError("params carry no standardization moments; train first")
    schedule = cfg.schedule()
    steps = req.steps if req.steps is not None else schedule.T
    if not (1 <= steps <= schedule.T):
        raise ContractError(f"steps must lie in 1..{schedule.T}")
    # evenly strided subsequence that always starts at T (pure noise)
    timesteps = np.unique(np.linspace(schedule.T, 1, steps).round().astype(int))[::-1]

    rng = make_rng(req.seed, 0x5A3)
    z = rng.standard_normal((cfg.m, cfg.d))
    for i, t in enumerate(timesteps):
        eps_hat = denoise_step_predict(params, z, int(t), cond=req.cond)
        ab_t = schedule.alpha_bar[t - 1]
        ab_prev = schedule.alpha_bar[timesteps[i + 1] - 1] if i + 1 < len(timesteps) else 1.0
        z0_hat = (z - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
        if i + 1 < len(timesteps):
            var = (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev)
            z = (np.sqrt(ab_prev) * z0_hat
                 + np.sqrt(max(1.0 - ab_prev - var, 0.0)) * eps_hat
                 + np.sqrt(var) * rng.standard_normal((cfg.m, cfg.d)))
        else:
            z = z0_hat
    return PartLatent(z * params.z_std + params.z_mean)


def save_checkpoint(path, params: DenoiserParams) -> None:
    cfg = params.config
    meta = np.array([cfg.m, cfg.d, cfg.d_s, cfg.hidden, cfg.blocks, cfg.heads,
                     cfg.head_dim, cfg.ff_mult, cfg.T, cfg.time_emb, cfg.part_emb],
                    dtype=np.float64)
    tensors = {
        "meta": meta,
        "meta_beta": np.array([cfg.beta_min, cfg.beta_max]),
        "z_mean": params.z_mean if params.z_mean is not None else np.zeros((cfg.m, cfg.d)),
        "z_std": params.z_std if params.z_std is not None else np.ones((cfg.m, cfg.d)),
    }
    tensors.update({f"w/{k}": v for k, v in params.weights.items()})
    from .numcore import save_tensors
    save_tensors(path, tensors)


def load_checkpoint(path) -> DenoiserParams:
    from .numcore import load_tensors
    tensors = load_tensors(path)
    meta = [int(x) for x in tensors.pop("meta")]
    beta = tensors.pop("meta_beta")
    cfg = DiffusionConfig(m=meta[0], d=meta[1], d_s=meta[2], hidden=meta[3], blocks=meta[4],
                          heads=meta[5], head_dim=meta[6], ff_mult=meta[7], T=meta[8],
                          beta_min=float(beta[0]), beta_max=float(beta[1]),
                          time_emb=meta[9], part_emb=meta[10])
    weights = {k[2:]: v for k, v in tensors.items() if k.startswith("w/")}
    return DenoiserParams(config=cfg, weights=weights,
                          z_mean=tensors["z_mean"], z_std=tensors["z_std"])
