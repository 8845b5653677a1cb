"""Aligned 2-D coefficient maps from a multilevel decomposition.

Bands whose support sits entirely above the bandpass cutoff are dropped,
the survivors are stretched to the full segment length, stacked with the
highest-frequency row on top, and normalized per band. Per-row stats are
kept so the map stays invertible for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError, DegenerateSegment, ShapeError
from .wavelet import DwtDecomposition, band_frequency_range, waverec

INTERP_MODES = ("zero_order", "linear", "cubic")
NORM_MODES = ("per_band_instance", "global", "none")
DEGENERATE_STD = 1e-8


@dataclass(frozen=True)
class BandInfo:
    kind: str      # "detail" | "approx"
    level: int
    f_lo: float
    f_hi: float


@dataclass
class CoeffMap:
    """[n_subbands x T] image, rows ordered by decreasing f_hi."""

    data: np.ndarray
    band_meta: list[BandInfo]
    interp: str
    norm: str
    norm_stats: list[tuple[float, float]]   # per-row (mean, std) for inversion
    level: int
    fs_hz: float
    pad_len: int = 0
    original_len: int = 0

    @property
    def n_bands(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def discard_out_of_band(dec: DwtDecomposition, fs_hz: float,
                        bandpass_high_hz: float) -> list[tuple[BandInfo, np.ndarray]]:
    """Keep bands overlapping [0, cutoff); approx always survives.

    Returned list is ordered by decreasing f_hi (finest detail first).
    """
    kept: list[tuple[BandInfo, np.ndarray]] = []
    for j in range(1, dec.level + 1):
        f_lo, f_hi = band_frequency_range("detail", j, fs_hz)
        if f_lo >= bandpass_high_hz:
            continue
        kept.append((BandInfo("detail", j, f_lo, f_hi), dec.details[j - 1]))
    f_lo, f_hi = band_frequency_range("approx", dec.level, fs_hz)
    kept.append((BandInfo("approx", dec.level, f_lo, f_hi), dec.approx))
    if len(kept) < 2:
        raise ConfigError(
            f"cutoff {bandpass_high_hz} Hz drops every detail band at "
            f"fs={fs_hz}, level={dec.level}; map needs at least 2 rows")
    return kept


def interp_band(coeffs: np.ndarray, target_len: int, mode: str) -> np.ndarray:
    """Stretch a band to target_len.

    zero_order repeats each coefficient target_len//len times; linear and
    cubic interpolate through knots at the block centers, clamped to the
    edge values outside the knot range.
    """
    c = np.asarray(coeffs, dtype=np.float64)
    if mode not in INTERP_MODES:
        raise ConfigError(f"interp mode {mode!r} not one of {INTERP_MODES}")
    n = len(c)
    if target_len % n:
        raise ShapeError(f"target length {target_len} not divisible by {n}")
    factor = target_len // n
    if factor == 1:
        return c.copy()
    if mode == "zero_order":
        return np.repeat(c, factor)
    knots = np.arange(n) * factor + (factor - 1) / 2.0
    t = np.arange(target_len, dtype=np.float64)
    if mode == "linear" or n < 3:
        return np.interp(t, knots, c)
    spline = CubicSpline(knots, c, bc_type="natural")
    out = spline(np.clip(t, knots[0], knots[-1]))
    return out


def build_map(dec: DwtDecomposition, fs_hz: float, bandpass_high_hz: float,
              interp: str = "zero_order",
              norm: str = "per_band_instance") -> CoeffMap:
    """discard -> stretch -> stack high-to-low -> normalize."""
    if norm not in NORM_MODES:
        raise ConfigError(f"norm mode {norm!r} not one of {NORM_MODES}")
    width = len(dec.details[0]) * 2
    kept = discard_out_of_band(dec, fs_hz, bandpass_high_hz)
    rows = np.stack([interp_band(band, width, interp) for _, band in kept])
    meta = [info for info, _ in kept]
    stats: list[tuple[float, float]]
    if norm == "per_band_instance":
        stats = []
        for r in range(rows.shape[0]):
            mu = float(rows[r].mean())
            sd = float(rows[r].std())
            if sd < DEGENERATE_STD:
                raise DegenerateSegment(
                    f"band {meta[r].kind}{meta[r].level} std {sd:.3e} too small")
            rows[r] = (rows[r] - mu) / sd
            stats.append((mu, sd))
    elif norm == "global":
        mu = float(rows.mean())
        sd = float(rows.std())
        if sd < DEGENERATE_STD:
            raise DegenerateSegment(f"map std {sd:.3e} too small")
        rows = (rows - mu) / sd
        stats = [(mu, sd)] * rows.shape[0]
    else:
        stats = [(0.0, 1.0)] * rows.shape[0]
    return CoeffMap(rows, meta, interp, norm, stats, dec.level, fs_hz,
                    dec.pad_len, dec.original_len)


def invert_map(cmap: CoeffMap, family) -> np.ndarray:
    """Diagnostic inverse: de-normalize, decimate, zero the dropped bands,
    reconstruct. Only exact for zero_order interpolation."""
    if cmap.interp != "zero_order":
        raise ConfigError("invert_map requires zero_order interpolation (lossy otherwise)")
    width = cmap.width
    details: list[np.ndarray] = [
        np.zeros(width // 2 ** j) for j in range(1, cmap.level + 1)]
    approx = np.zeros(width // 2 ** cmap.level)
    for row, info, (mu, sd) in zip(cmap.data, cmap.band_meta, cmap.norm_stats):
        raw = row * sd + mu
        coeffs = raw[::2 ** info.level]
        if info.kind == "approx":
            approx = coeffs
        else:
            details[info.level - 1] = coeffs
    original = cmap.original_len or width
    dec = DwtDecomposition(approx, details, cmap.level, family,
                           original, cmap.pad_len)
    return waverec(dec)
