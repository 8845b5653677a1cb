"""Pretraining loop: augmentations, AdamW with warmup+cosine decay,
global-norm gradient clipping and loss logging.

One training thread owns the model and optimizer; every random draw is
funneled through seeds derived from (run seed, purpose, step, sample), so
a rerun with the same config reproduces the loss curve exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import model as M
from . import tokenizer as tok
from .coeffmap import BandInfo, build_map
from .errors import ConfigError, ContractError, DegenerateSegment, NumericError
from .synth import Segment
from .tensor import Tensor
from .wavelet import get_family, wavedec


@dataclass(frozen=True)
class AugSpec:
    p_flip: float = 0.5
    noise_std: float = 0.05
    stretch_range: tuple[float, float] = (0.8, 1.25)

    def validate(self) -> None:
        if not 0.0 <= self.p_flip <= 1.0:
            raise ConfigError("p_flip must lie in [0, 1]")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        lo, hi = self.stretch_range
        if not 0.0 < lo <= hi:
            raise ConfigError("stretch_range must be positive with min <= max")


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 32          # paper-scale value 512 fits via config
    total_steps: int = 500        # paper-scale value 33000 fits via config
    warmup_frac: float = 0.10
    grad_clip_norm: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    mask_ratio: float = 0.75
    mask_strategy: str = "random"
    log_every: int = 10
    aug: AugSpec = field(default_factory=AugSpec)

    def validate(self) -> None:
        if not 0.0 < self.warmup_frac < 1.0:
            raise ConfigError("warmup_frac must lie in (0, 1)")
        if self.grad_clip_norm <= 0:
            raise ConfigError("grad_clip_norm must be positive")
        if self.total_steps < 2 or self.batch_size < 1:
            raise ConfigError("total_steps >= 2 and batch_size >= 1 required")
        self.aug.validate()


@dataclass(frozen=True)
class PipelineConfig:
    """How a preprocessed segment becomes a patch sequence."""

    family: str = "haar"
    level: int = 3
    cutoff_hz: float = 10.0       # discard detail bands fully above this
    interp: str = "zero_order"
    norm: str = "per_band_instance"
    patch_rows: int = 1
    patch_cols: int = 25


def _stream_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1)[0])


def _stretch(x: np.ndarray, factor: float) -> np.ndarray:
    """Linear time rescale by factor, then center-crop / reflect-pad to T."""
    n = len(x)
    m = max(2, int(round(n * factor)))
    y = np.interp(np.linspace(0.0, n - 1, m), np.arange(n), x)
    if m == n:
        return y
    if m > n:
        start = (m - n) // 2
        return y[start:start + n]
    while len(y) < n:
        pad = min(n - len(y), len(y) - 1)
        left = pad // 2
        y = np.pad(y, (left, pad - left), mode="reflect")
    return y


def augment(samples: np.ndarray, spec: AugSpec,
            rng: np.random.Generator) -> np.ndarray:
    """Time flip, additive Gaussian noise, temporal stretch; length kept."""
    x = np.asarray(samples, dtype=np.float64).copy()
    if spec.p_flip > 0 and rng.random() < spec.p_flip:
        x = x[::-1].copy()
    if spec.noise_std > 0:
        x += rng.normal(0.0, spec.noise_std, size=len(x))
    lo, hi = spec.stretch_range
    if not (lo == hi == 1.0):
        x = _stretch(x, rng.uniform(lo, hi))
    return x


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to base_lr, then cosine decay to zero."""
    if step < 0 or step > cfg.total_steps:
        raise ContractError(f"step {step} outside [0, {cfg.total_steps}]")
    warmup = max(1, int(round(cfg.warmup_frac * cfg.total_steps)))
    if step <= warmup:
        return cfg.base_lr * step / warmup
    progress = (step - warmup) / (cfg.total_steps - warmup)
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def clip_global_norm(grads: dict[str, np.ndarray],
                     max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Scale the whole gradient set so its global L2 norm is <= max_norm."""
    total = math.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return grads, total
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}, total


class AdamW:
    """Decoupled weight decay + bias-corrected Adam moments."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Tensor], lr: float) -> float:
        cfg = self.cfg
        grads = {}
        for name, p in params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for {name}; step aborted")
            grads[name] = g
        grads, raw_norm = clip_global_norm(grads, cfg.grad_clip_norm)
        self.t += 1
        bc1 = 1.0 - cfg.beta1 ** self.t
        bc2 = 1.0 - cfg.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            if cfg.weight_decay:
                p.data *= 1.0 - lr * cfg.weight_decay
            m, v = self.m[name], self.v[name]
            m *= cfg.beta1
            m += (1 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1 - cfg.beta2) * (g * g)
            p.data -= (lr / bc1) * m / (np.sqrt(v / bc2) + cfg.eps)
        return raw_norm


def segment_patches(samples: np.ndarray, fs_hz: float, pipe: PipelineConfig,
                    mode: str) -> tuple[np.ndarray, list[BandInfo]]:
    """Turn one conditioned waveform into its patch matrix."""
    if mode == "mtr":
        if len(samples) % pipe.patch_cols:
            raise ConfigError(f"length {len(samples)} not divisible by "
                              f"patch_cols {pipe.patch_cols}")
        patches = np.asarray(samples, float).reshape(-1, pipe.patch_cols)
        meta = [BandInfo("approx", 0, 0.0, fs_hz / 2)]
        return patches, meta
    dec = wavedec(samples, get_family(pipe.family), pipe.level, pad=True)
    cmap = build_map(dec, fs_hz, pipe.cutoff_hz, pipe.interp, pipe.norm)
    grid = tok.PatchGrid(pipe.patch_rows, pipe.patch_cols,
                         cmap.n_bands, cmap.width)
    return tok.patchify(cmap.data, grid), cmap.band_meta


def _grid_for(patches: np.ndarray, pipe: PipelineConfig,
              n_bands: int, mode: str) -> tok.PatchGrid:
    if mode == "mtr":
        return tok.PatchGrid(1, pipe.patch_cols, 1,
                             patches.shape[0] * pipe.patch_cols)
    width = patches.shape[0] // (n_bands // pipe.patch_rows) * pipe.patch_cols
    return tok.PatchGrid(pipe.patch_rows, pipe.patch_cols, n_bands, width)


@dataclass
class TrainResult:
    state: dict[str, Tensor]
    optimizer: AdamW
    curve: list[tuple[int, float, float]]   # (step, lr, loss)
    n_skipped: int
    n_drawn: int


def pretrain(segments: list[Segment], arch: M.ArchConfig, cfg: TrainConfig,
             pipe: PipelineConfig) -> TrainResult:
    """Run the masked-reconstruction pretraining loop.

    Per drawn segment: augment -> decompose -> map -> patchify -> mask ->
    forward/backward; then clip and AdamW-update once per batch.
    Degenerate segments are skipped (and counted); more than half skipped
    aborts the run.
    """
    cfg.validate()
    if not segments:
        raise ConfigError("pretrain needs a non-empty dataset")
    probe = meta = None
    for seg in segments[:max(8, len(segments) // 2 + 1)]:
        try:
            probe, meta = segment_patches(seg.samples, seg.fs_hz, pipe, arch.mode)
            break
        except DegenerateSegment:
            continue
    if probe is None:
        raise ConfigError("could not derive a patch grid: sampled segments "
                          "are all degenerate")
    if probe.shape[1] != arch.patch_dim:
        raise ConfigError(f"arch.patch_dim {arch.patch_dim} != pipeline patch "
                          f"dim {probe.shape[1]}")
    grid = _grid_for(probe, pipe, len(meta), arch.mode)
    pos_enc = tok.pos_embed(grid, arch.enc_dim)
    pos_dec = tok.pos_embed(grid, arch.dec_dim)

    state = M.init_state(arch, seed=cfg.seed)
    opt = AdamW(cfg)
    curve: list[tuple[int, float, float]] = []
    order_rng = np.random.default_rng(
        np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    order = order_rng.permutation(len(segments))
    cursor = 0
    n_skipped = 0
    n_drawn = 0

    for step in range(1, cfg.total_steps + 1):
        batch_patches = []
        plans = []
        attempt = 0
        while len(batch_patches) < cfg.batch_size:
            if cursor >= len(order):
                order = order_rng.permutation(len(segments))
                cursor = 0
            seg = segments[order[cursor]]
            cursor += 1
            n_drawn += 1
            attempt += 1
            rng_aug = np.random.default_rng(
                np.random.SeedSequence(cfg.seed, spawn_key=(2, step, attempt)))
            try:
                x = augment(seg.samples, cfg.aug, rng_aug)
                patches, band_meta = segment_patches(x, seg.fs_hz, pipe, arch.mode)
            except DegenerateSegment:
                n_skipped += 1
                if n_drawn >= 2 * cfg.batch_size and n_skipped > 0.5 * n_drawn:
                    raise ConfigError(
                        f"{n_skipped}/{n_drawn} segments degenerate; aborting run")
                continue
            plans.append(tok.make_mask(
                grid, cfg.mask_strategy, cfg.mask_ratio,
                seed=_stream_seed(cfg.seed, 3, step, attempt),
                band_meta=band_meta))
            batch_patches.append(patches)

        lr = lr_at(step, cfg)
        _, loss = M.forward_mae(np.stack(batch_patches), plans, pos_enc,
                                pos_dec, state, arch)
        loss.backward()
        opt.step(state, lr)
        for p in state.values():
            p.zero_grad()
        if step % cfg.log_every == 0 or step in (1, cfg.total_steps):
            curve.append((step, lr, float(loss.data)))
    return TrainResult(state, opt, curve, n_skipped, n_drawn)


def masked_eval_mse(segments: list[Segment], state: dict[str, Tensor],
                    arch: M.ArchConfig, cfg: TrainConfig,
                    pipe: PipelineConfig, seed: int = 1234) -> float:
    """Masked-patch MSE on clean (unaugmented) segments with fixed masks."""
    batch = []
    plans = []
    grid = None
    for i, seg in enumerate(segments):
        patches, band_meta = segment_patches(seg.samples, seg.fs_hz, pipe,
                                             arch.mode)
        if grid is None:
            grid = _grid_for(patches, pipe, len(band_meta), arch.mode)
        batch.append(patches)
        plans.append(tok.make_mask(grid, cfg.mask_strategy, cfg.mask_ratio,
                                   seed=_stream_seed(seed, 4, i),
                                   band_meta=band_meta))
    pos_enc = tok.pos_embed(grid, arch.enc_dim)
    pos_dec = tok.pos_embed(grid, arch.dec_dim)
    _, loss = M.forward_mae(np.stack(batch), plans, pos_enc, pos_dec,
                            state, arch)
    return float(loss.data)
