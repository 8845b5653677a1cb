"""Transformer masked autoencoder over coefficient-map (or raw) patches.

Pre-norm ViT encoder over the visible tokens, a narrow decoder that fills
the gaps with a learned mask token, and a linear head back to patch
space. The training objective is the mean squared error over masked
patches only. The same machinery serves both the multiscale map mode
("mmr") and the raw-waveform mode ("mtr").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, NumericError, ShapeError
from .tensor import Tensor

INIT_STD = 0.02


@dataclass(frozen=True)
class ArchConfig:
    enc_blocks: int
    enc_dim: int
    enc_heads: int
    dec_blocks: int
    dec_dim: int
    dec_heads: int
    patch_dim: int
    enc_ffn: int | None = None
    dec_ffn: int | None = None
    mode: str = "mmr"

    def __post_init__(self):
        if self.enc_ffn is None:
            object.__setattr__(self, "enc_ffn", 4 * self.enc_dim)
        if self.dec_ffn is None:
            object.__setattr__(self, "dec_ffn", 4 * self.dec_dim)
        if self.mode not in ("mmr", "mtr"):
            raise ConfigError(f"mode must be 'mmr' or 'mtr', got {self.mode!r}")
        for dim, heads, tag in ((self.enc_dim, self.enc_heads, "enc"),
                                (self.dec_dim, self.dec_heads, "dec")):
            if dim % heads:
                raise ConfigError(f"{tag}_dim {dim} not divisible by {heads} heads")
            if dim % 4:
                raise ConfigError(f"{tag}_dim {dim} must be divisible by 4")
        if self.patch_dim < 1:
            raise ConfigError("patch_dim must be positive")


PRESETS = {
    "mmr": dict(enc_blocks=8, enc_dim=256, enc_heads=4, enc_ffn=1024,
                dec_blocks=2, dec_dim=192, dec_heads=4),
    "mmr_light": dict(enc_blocks=4, enc_dim=192, enc_heads=3,
                      dec_blocks=2, dec_dim=128, dec_heads=4),
}


def arch_preset(name: str, patch_dim: int = 25, mode: str = "mmr") -> ArchConfig:
    key = name.lower().replace("-", "_")
    if key not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {tuple(PRESETS)}")
    return ArchConfig(patch_dim=patch_dim, mode=mode, **PRESETS[key])


def _block_names(prefix: str, dim: int, ffn: int):
    yield f"{prefix}.norm1.g", (dim,), "ones"
    yield f"{prefix}.norm1.b", (dim,), "zeros"
    for w in ("wq", "wk", "wv", "wo"):
        yield f"{prefix}.attn.{w}", (dim, dim), "xavier"
        yield f"{prefix}.attn.{w[1]}b", (dim,), "zeros"
    yield f"{prefix}.norm2.g", (dim,), "ones"
    yield f"{prefix}.norm2.b", (dim,), "zeros"
    yield f"{prefix}.ffn.w1", (dim, ffn), "xavier"
    yield f"{prefix}.ffn.b1", (ffn,), "zeros"
    yield f"{prefix}.ffn.w2", (ffn, dim), "xavier"
    yield f"{prefix}.ffn.b2", (dim,), "zeros"


def _param_plan(cfg: ArchConfig):
    yield "patch_embed.w", (cfg.patch_dim, cfg.enc_dim), "xavier"
    yield "patch_embed.b", (cfg.enc_dim,), "zeros"
    for i in range(cfg.enc_blocks):
        yield from _block_names(f"enc.block{i}", cfg.enc_dim, cfg.enc_ffn)
    yield "enc.norm.g", (cfg.enc_dim,), "ones"
    yield "enc.norm.b", (cfg.enc_dim,), "zeros"
    yield "dec.proj.w", (cfg.enc_dim, cfg.dec_dim), "xavier"
    yield "dec.proj.b", (cfg.dec_dim,), "zeros"
    yield "mask_token", (cfg.dec_dim,), "zeros"
    for i in range(cfg.dec_blocks):
        yield from _block_names(f"dec.block{i}", cfg.dec_dim, cfg.dec_ffn)
    yield "dec.norm.g", (cfg.dec_dim,), "ones"
    yield "dec.norm.b", (cfg.dec_dim,), "zeros"
    # zero head: the untrained model predicts 0, so its masked MSE equals
    # the plain patch energy (an honest reference point)
    yield "head.w", (cfg.dec_dim, cfg.patch_dim), "zeros"
    yield "head.b", (cfg.patch_dim,), "zeros"


def init_state(cfg: ArchConfig, seed: int = 0) -> dict[str, Tensor]:
    """Fresh parameter set.

    Attention weights start at N(0, 0.02^2); embeddings, FFN, projection
    and head use fan-aware Xavier limits so the patch content enters on
    the same footing as the (unit-amplitude) positional channels even at
    small patch sizes. Biases, the mask token and layernorm shifts start
    at zero, layernorm scales at one.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    state: dict[str, Tensor] = {}
    for name, shape, kind in _param_plan(cfg):
        if kind == "attn":
            data = rng.normal(0.0, INIT_STD, size=shape)
        elif kind == "xavier":
            lim = np.sqrt(6.0 / (shape[0] + shape[1]))
            data = rng.uniform(-lim, lim, size=shape)
        elif kind == "ones":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        state[name] = Tensor(data, requires_grad=True, name=name)
    return state


def param_count(cfg: ArchConfig) -> int:
    """Exact parameter count implied by the architecture."""
    return sum(int(np.prod(shape)) for _, shape, _ in _param_plan(cfg))


def _assert_finite(arr: np.ndarray, stage: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {stage}")


def _affine_norm(x: Tensor, state, prefix: str) -> Tensor:
    return T.layernorm(x) * state[f"{prefix}.g"] + state[f"{prefix}.b"]


def _attention(x: Tensor, state, prefix: str, heads: int) -> Tensor:
    b, s, d = x.shape
    dh = d // heads

    def proj(w, bias):
        y = T.matmul(x, state[f"{prefix}.{w}"]) + state[f"{prefix}.{bias}"]
        y = T.reshape(y, (b, s, heads, dh))
        return T.transpose(y, (0, 2, 1, 3))

    q = proj("wq", "qb")
    k = proj("wk", "kb")
    v = proj("wv", "vb")
    att = T.matmul(q, T.transpose(k)) * (1.0 / np.sqrt(dh))
    att = T.softmax(att, axis=-1)
    out = T.transpose(T.matmul(att, v), (0, 2, 1, 3))
    out = T.reshape(out, (b, s, d))
    return T.matmul(out, state[f"{prefix}.wo"]) + state[f"{prefix}.ob"]


def _transformer(x: Tensor, state, prefix: str, n_blocks: int, heads: int) -> Tensor:
    for i in range(n_blocks):
        block = f"{prefix}.block{i}"
        x = x + _attention(_affine_norm(x, state, f"{block}.norm1"),
                           state, f"{block}.attn", heads)
        h = _affine_norm(x, state, f"{block}.norm2")
        h = T.matmul(h, state[f"{block}.ffn.w1"]) + state[f"{block}.ffn.b1"]
        h = T.matmul(T.gelu(h), state[f"{block}.ffn.w2"]) + state[f"{block}.ffn.b2"]
        x = x + h
    return _affine_norm(x, state, f"{prefix}.norm")


def loss_mmr(pred: Tensor, target: np.ndarray, masked_idx: np.ndarray) -> Tensor:
    """Mean over masked patches of the squared patch error.

    pred: (B, P, patch_dim) predictions; target: matching ndarray;
    masked_idx: (B, M) patch indices. Visible patches contribute nothing.
    """
    if masked_idx.size == 0:
        raise ConfigError("empty mask: the loss is undefined")
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    batch = np.arange(pred.shape[0])[:, None]
    diff = T.take_patches(pred, masked_idx) - Tensor(target[batch, masked_idx])
    return T.mean(T.tsum(diff * diff, axis=-1))


def _stack_plan_indices(plans) -> tuple[np.ndarray, np.ndarray]:
    vis = np.stack([p.visible for p in plans])
    msk = np.stack([p.masked for p in plans])
    return vis, msk


def forward_mae(patches: np.ndarray, plans, pos_enc: np.ndarray,
                pos_dec: np.ndarray, state, cfg: ArchConfig,
                targets: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Masked-autoencoder pass over a batch.

    patches: (B, P, patch_dim); plans: one MaskPlan per batch row (equal
    counts); targets defaults to the input patches. Returns the full
    prediction grid (B, P, patch_dim) and the scalar loss.
    """
    if patches.ndim != 3 or patches.shape[-1] != cfg.patch_dim:
        raise ShapeError(f"patches {patches.shape} do not match patch_dim "
                         f"{cfg.patch_dim}")
    _assert_finite(patches, "input patches")
    b, n_patches, _ = patches.shape
    vis_idx, mask_idx = _stack_plan_indices(plans)
    batch = np.arange(b)[:, None]

    visible = Tensor(patches[batch, vis_idx])
    tokens = T.matmul(visible, state["patch_embed.w"]) + state["patch_embed.b"]
    tokens = tokens + Tensor(pos_enc[vis_idx])
    enc = _transformer(tokens, state, "enc", cfg.enc_blocks, cfg.enc_heads)
    _assert_finite(enc.data, "encoder output")

    proj = T.matmul(enc, state["dec.proj.w"]) + state["dec.proj.b"]
    mask_tok = T.reshape(state["mask_token"], (1, 1, cfg.dec_dim))
    filler = Tensor(np.zeros((b, mask_idx.shape[1], cfg.dec_dim))) + mask_tok
    full = T.scatter_patches(proj, vis_idx, n_patches) + \
        T.scatter_patches(filler, mask_idx, n_patches)
    full = full + Tensor(pos_dec)
    dec = _transformer(full, state, "dec", cfg.dec_blocks, cfg.dec_heads)
    _assert_finite(dec.data, "decoder output")

    pred = T.matmul(dec, state["head.w"]) + state["head.b"]
    loss = loss_mmr(pred, patches if targets is None else targets, mask_idx)
    _assert_finite(loss.data, "loss")
    return pred, loss


def encode(patches: np.ndarray, pos_enc: np.ndarray, state,
           cfg: ArchConfig) -> np.ndarray:
    """Frozen-encoder embedding: full unmasked sequence, mean-pooled."""
    single = patches.ndim == 2
    if single:
        patches = patches[None]
    _assert_finite(patches, "input patches")
    tokens = T.matmul(Tensor(patches), state["patch_embed.w"]) + \
        state["patch_embed.b"]
    tokens = tokens + Tensor(pos_enc)
    enc = _transformer(tokens, state, "enc", cfg.enc_blocks, cfg.enc_heads)
    _assert_finite(enc.data, "encoder output")
    pooled = enc.data.mean(axis=1)
    return pooled[0] if single else pooled


def mtr_forward(raw: np.ndarray, plans, pos_enc: np.ndarray,
                pos_dec: np.ndarray, state, cfg: ArchConfig,
                patch_cols: int | None = None) -> tuple[Tensor, Tensor]:
    """Raw-waveform mode: 1 x T signal patched along time, same objective."""
    if raw.ndim == 1:
        raw = raw[None]
    cols = patch_cols if patch_cols is not None else cfg.patch_dim
    if raw.shape[-1] % cols:
        raise ShapeError(f"length {raw.shape[-1]} not divisible by {cols}")
    patches = raw.reshape(raw.shape[0], raw.shape[-1] // cols, cols)
    return forward_mae(patches, plans, pos_enc, pos_dec, state, cfg)
