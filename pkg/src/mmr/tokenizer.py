"""Patching of coefficient maps, mask planning and fixed positional tables.

Patches traverse the grid band-major (all time patches of the top band
rows, then the next), which keeps row- and column-structured masking
strategies expressible as plain index arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coeffmap import BandInfo
from .errors import ConfigError, ShapeError

MASK_STRATEGIES = ("random", "row_wise", "cross_scale", "frequency_guided")


@dataclass(frozen=True)
class PatchGrid:
    """(rows x cols) tiling of a [C x T] map with r*c cells per patch."""

    patch_rows: int
    patch_cols: int
    n_bands: int
    width: int

    def __post_init__(self):
        if self.patch_rows < 1 or self.patch_cols < 1:
            raise ConfigError("patch dimensions must be positive")
        if self.n_bands % self.patch_rows:
            raise ShapeError(
                f"{self.n_bands} bands not divisible by patch_rows={self.patch_rows}")
        if self.width % self.patch_cols:
            raise ShapeError(
                f"width {self.width} not divisible by patch_cols={self.patch_cols}")

    @property
    def grid_rows(self) -> int:
        return self.n_bands // self.patch_rows

    @property
    def grid_cols(self) -> int:
        return self.width // self.patch_cols

    @property
    def n_patches(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def patch_dim(self) -> int:
        return self.patch_rows * self.patch_cols


@dataclass(frozen=True)
class MaskPlan:
    masked: np.ndarray       # sorted patch indices
    visible: np.ndarray
    ratio: float             # achieved |masked| / n_patches
    strategy: str
    seed: int

    def validate(self, n_patches: int) -> None:
        union = np.union1d(self.masked, self.visible)
        if len(self.masked) + len(self.visible) != n_patches or \
                len(union) != n_patches:
            raise ShapeError("mask plan does not partition the patch set")


def patchify(data: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """[C x T] map -> [n_patches x patch_dim], band-major, lossless."""
    c, t = data.shape
    if c != grid.n_bands or t != grid.width:
        raise ShapeError(f"map {data.shape} does not match grid "
                         f"({grid.n_bands}, {grid.width})")
    r, p = grid.patch_rows, grid.patch_cols
    blocks = data.reshape(grid.grid_rows, r, grid.grid_cols, p)
    return blocks.transpose(0, 2, 1, 3).reshape(grid.n_patches, grid.patch_dim)


def unpatchify(patches: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Inverse of patchify."""
    if patches.shape != (grid.n_patches, grid.patch_dim):
        raise ShapeError(f"patches {patches.shape} do not match grid "
                         f"({grid.n_patches}, {grid.patch_dim})")
    r, p = grid.patch_rows, grid.patch_cols
    blocks = patches.reshape(grid.grid_rows, grid.grid_cols, r, p)
    return blocks.transpose(0, 2, 1, 3).reshape(grid.n_bands, grid.width)


def patch_band_f_hi(grid: PatchGrid, band_meta: list[BandInfo]) -> np.ndarray:
    """Per-patch f_hi: the highest band frequency a patch spans."""
    if len(band_meta) != grid.n_bands:
        raise ShapeError("band_meta length does not match grid bands")
    out = np.empty(grid.n_patches)
    for gr in range(grid.grid_rows):
        rows = band_meta[gr * grid.patch_rows:(gr + 1) * grid.patch_rows]
        f_hi = max(b.f_hi for b in rows)
        out[gr * grid.grid_cols:(gr + 1) * grid.grid_cols] = f_hi
    return out


def _closest_group_count(n_groups: int, group_size: int, n_patches: int,
                         ratio: float) -> int:
    target = ratio * n_patches
    best = min(range(1, n_groups + 1),
               key=lambda k: (abs(k * group_size - target), k))
    if best * group_size >= n_patches:
        best -= 1  # never mask everything
    if best < 1:
        raise ConfigError(
            f"ratio {ratio} infeasible for {n_groups} groups of {group_size}")
    return best


def make_mask(grid: PatchGrid, strategy: str, ratio: float, seed: int,
              band_meta: list[BandInfo] | None = None) -> MaskPlan:
    """Plan a masked/visible split of the patch set.

    random and frequency_guided hit round(ratio * n) exactly; row_wise and
    cross_scale mask whole grid rows/columns and record the closest
    achievable ratio instead.
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"mask ratio must lie in (0, 1), got {ratio}")
    if strategy not in MASK_STRATEGIES:
        raise ConfigError(f"strategy {strategy!r} not one of {MASK_STRATEGIES}")
    n = grid.n_patches
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if strategy == "random":
        count = int(round(ratio * n))
        if count < 1 or count >= n:
            raise ConfigError(f"ratio {ratio} leaves an empty side for {n} patches")
        masked = rng.choice(n, size=count, replace=False)
    elif strategy == "row_wise":
        k = _closest_group_count(grid.grid_rows, grid.grid_cols, n, ratio)
        rows = rng.choice(grid.grid_rows, size=k, replace=False)
        masked = (rows[:, None] * grid.grid_cols + np.arange(grid.grid_cols)).ravel()
    elif strategy == "cross_scale":
        k = _closest_group_count(grid.grid_cols, grid.grid_rows, n, ratio)
        cols = rng.choice(grid.grid_cols, size=k, replace=False)
        masked = (cols[:, None] + np.arange(grid.grid_rows) * grid.grid_cols).ravel()
    else:  # frequency_guided: weight each patch by its band's f_hi
        if band_meta is None:
            raise ConfigError("frequency_guided masking needs band_meta")
        count = int(round(ratio * n))
        if count < 1 or count >= n:
            raise ConfigError(f"ratio {ratio} leaves an empty side for {n} patches")
        weights = patch_band_f_hi(grid, band_meta)
        masked = rng.choice(n, size=count, replace=False, p=weights / weights.sum())
    masked = np.sort(masked.astype(np.int64))
    visible = np.setdiff1d(np.arange(n, dtype=np.int64), masked)
    if len(visible) == 0 or len(masked) == 0:
        raise ConfigError("mask plan left an empty masked or visible set")
    return MaskPlan(masked, visible, len(masked) / n, strategy, seed)


def pos_embed(grid: PatchGrid, d_model: int) -> np.ndarray:
    """Fixed sine-cosine table [n_patches x d_model], never trained.

    The first half of the channels encodes the time (column) index, the
    second half the band (row) index; each half is standard interleaved
    sin/cos over a geometric frequency ladder.
    """
    if d_model % 4:
        raise ConfigError(f"d_model must be divisible by 4, got {d_model}")
    half = d_model // 2

    def ladder(positions: np.ndarray) -> np.ndarray:
        n_freq = half // 2
        freqs = 1.0 / (10000.0 ** (np.arange(n_freq) / n_freq))
        ang = positions[:, None] * freqs[None, :]
        out = np.empty((len(positions), half))
        out[:, 0::2] = np.sin(ang)
        out[:, 1::2] = np.cos(ang)
        return out

    cols = np.tile(np.arange(grid.grid_cols), grid.grid_rows).astype(np.float64)
    rows = np.repeat(np.arange(grid.grid_rows), grid.grid_cols).astype(np.float64)
    return np.concatenate([ladder(cols), ladder(rows)], axis=1)
