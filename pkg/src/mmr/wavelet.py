"""Multilevel 1-D discrete wavelet transform with periodized boundaries.

Periodization treats the signal as circular, so a length-T input yields
exactly T/2 coefficients per branch at every level and the total
coefficient count stays T (non-redundant). Four filter banks are built
in: haar, db4, bior2.2 and bior4.4.

Filter tables: haar and bior2.2 (LeGall 5/3) are exact rationals times
sqrt(2); db4 comes from spectral factorization of the order-4 half-band
polynomial; bior4.4 (CDF 9/7) from its spline factorization. All four
are validated by the round-trip tests, not trusted from transcription.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError

SQRT2 = math.sqrt(2.0)

# Synthesis scaling filters (rec_lo). dec_lo is the time reverse for the
# orthogonal families and a separate dual filter for the biorthogonal ones.
_REC_LO = {
    "haar": [1.0 / SQRT2, 1.0 / SQRT2],
    "db4": [
        0.23037781330889645,
        0.71484657055291530,
        0.63088076792985910,
        -0.02798376941685969,
        -0.18703481171909300,
        0.03084138183556063,
        0.03288301166688516,
        -0.01059740178506902,
    ],
    "bior2.2": [SQRT2 / 4.0, SQRT2 / 2.0, SQRT2 / 4.0],
    "bior4.4": [
        -0.06453888262893849,
        -0.04068941760955851,
        0.41809227322221230,
        0.78848561640566480,
        0.41809227322221230,
        -0.04068941760955851,
        -0.06453888262893849,
    ],
}

# Analysis scaling filters for the biorthogonal pairs (dual lowpass).
_DEC_LO_BIOR = {
    "bior2.2": [
        -SQRT2 / 8.0, SQRT2 / 4.0, 3.0 * SQRT2 / 4.0, SQRT2 / 4.0, -SQRT2 / 8.0,
    ],
    "bior4.4": [
        0.03782845550699539,
        -0.02384946501938000,
        -0.11062440441842313,
        0.37740285561265380,
        0.85269867900940310,
        0.37740285561265380,
        -0.11062440441842313,
        -0.02384946501938000,
        0.03782845550699539,
    ],
}

FAMILY_NAMES = ("haar", "db4", "bior2.2", "bior4.4")


@dataclass(frozen=True)
class WaveletFamily:
    """One filter bank: analysis/synthesis low- and high-pass taps.

    All four filters share one even length; shorter published filters are
    zero-padded at offset 1, which keeps a single alignment rule valid for
    every family.
    """

    name: str
    dec_lo: np.ndarray
    dec_hi: np.ndarray
    rec_lo: np.ndarray
    rec_hi: np.ndarray
    orthogonal: bool

    @property
    def filter_len(self) -> int:
        return len(self.dec_lo)


def _pad_to(filt: list[float], length: int) -> np.ndarray:
    out = np.zeros(length)
    offset = 1 if len(filt) < length else 0
    out[offset:offset + len(filt)] = filt
    return out


def get_family(name: str) -> WaveletFamily:
    """Look up a filter bank by name ('bior2_2' accepted for 'bior2.2')."""
    key = name.lower().replace("_", ".", 1) if name.lower().startswith("bior") else name.lower()
    if key not in _REC_LO:
        raise ConfigError(f"unknown wavelet family {name!r}; choose from {FAMILY_NAMES}")
    rec_lo_raw = _REC_LO[key]
    orthogonal = key not in _DEC_LO_BIOR
    dec_lo_raw = rec_lo_raw[::-1] if orthogonal else _DEC_LO_BIOR[key]
    length = max(len(rec_lo_raw), len(dec_lo_raw))
    if length % 2:
        length += 1
    rec_lo = _pad_to(list(rec_lo_raw), length)
    dec_lo = _pad_to(list(dec_lo_raw), length)
    signs = (-1.0) ** np.arange(length)
    dec_hi = -signs * rec_lo  # (-1)^(k+1) * rec_lo[k]
    rec_hi = signs * dec_lo
    return WaveletFamily(key, dec_lo, dec_hi, rec_lo, rec_hi, orthogonal)


@dataclass
class DwtDecomposition:
    """Multilevel decomposition: approx a^J plus details d^1..d^J.

    details[j-1] holds level j (finest first). With T divisible by 2^J,
    len(details[j-1]) == T / 2^j and len(approx) == T / 2^J. When the
    input was edge-padded, pad_len records how many trailing samples to
    drop after reconstruction.
    """

    approx: np.ndarray
    details: list[np.ndarray]
    level: int
    family: WaveletFamily
    original_len: int
    pad_len: int = 0

    def coeff_count(self) -> int:
        return len(self.approx) + sum(len(d) for d in self.details)


def dwt_single(signal: np.ndarray, family: WaveletFamily) -> tuple[np.ndarray, np.ndarray]:
    """One analysis level: periodized convolution + downsample by 2."""
    x = np.asarray(signal, dtype=np.float64)
    n = x.shape[0]
    if n % 2:
        raise ShapeError(f"signal length {n} must be even")
    if n < family.filter_len:
        raise ShapeError(
            f"signal length {n} shorter than {family.name} filter ({family.filter_len})")
    taps = family.filter_len
    idx = (2 * np.arange(n // 2)[:, None] + 1 - np.arange(taps)[None, :]) % n
    windows = x[idx]
    return windows @ family.dec_lo, windows @ family.dec_hi


def idwt_single(approx: np.ndarray, detail: np.ndarray, family: WaveletFamily) -> np.ndarray:
    """One synthesis level; exact inverse of dwt_single."""
    a = np.asarray(approx, dtype=np.float64)
    d = np.asarray(detail, dtype=np.float64)
    if a.shape != d.shape or a.ndim != 1:
        raise ShapeError(f"approx/detail shapes differ: {a.shape} vs {d.shape}")
    n = 2 * a.shape[0]
    taps = family.filter_len
    up_a = np.zeros(n)
    up_d = np.zeros(n)
    up_a[::2] = a
    up_d[::2] = d
    # shift of taps-2 aligns synthesis with the analysis phase for all banks
    idx = (np.arange(n)[:, None] + (taps - 2) - np.arange(taps)[None, :]) % n
    return up_a[idx] @ family.rec_lo + up_d[idx] @ family.rec_hi


def max_level(n: int, family: WaveletFamily) -> int:
    """Deepest level keeping every analysis input at least one filter long."""
    return int(math.floor(math.log2(n) - math.log2(family.filter_len) + 1))


def wavedec(signal: np.ndarray, family: WaveletFamily, level: int,
            pad: bool = False) -> DwtDecomposition:
    """Recursive analysis down the approximation chain.

    Requires len(signal) divisible by 2**level; with pad=True the signal
    is instead right-padded by edge replication up to the next multiple
    and the pad length recorded for waverec.
    """
    x = np.asarray(signal, dtype=np.float64)
    n = x.shape[0]
    if level < 1:
        raise ConfigError(f"level must be >= 1, got {level}")
    pad_len = (-n) % (1 << level)
    if pad_len and not pad:
        raise ShapeError(
            f"length {n} not divisible by 2^{level}; pass pad=True to edge-pad")
    if pad_len:
        x = np.concatenate([x, np.full(pad_len, x[-1])])
    if level > max_level(x.shape[0], family):
        raise ConfigError(
            f"level {level} too deep for length {x.shape[0]} with "
            f"{family.name} (max {max_level(x.shape[0], family)})")
    details: list[np.ndarray] = []
    approx = x
    for _ in range(level):
        approx, d = dwt_single(approx, family)
        details.append(d)
    return DwtDecomposition(approx, details, level, family, n, pad_len)


def waverec(dec: DwtDecomposition) -> np.ndarray:
    """Synthesize the signal back; inverse of wavedec (pad trimmed)."""
    x = dec.approx
    for d in reversed(dec.details):
        if len(d) != len(x):
            raise ShapeError(
                f"detail length {len(d)} does not match approx chain {len(x)}")
        x = idwt_single(x, d, dec.family)
    if dec.pad_len:
        x = x[:dec.original_len]
    return x


def band_frequency_range(kind: str, level: int, fs_hz: float) -> tuple[float, float]:
    """Nominal frequency support of one dyadic band.

    Detail level j covers (fs/2^(j+1), fs/2^j]; the approximation at
    level J covers [0, fs/2^(J+1)].
    """
    if fs_hz <= 0:
        raise ConfigError(f"fs_hz must be positive, got {fs_hz}")
    if kind == "detail":
        return fs_hz / 2 ** (level + 1), fs_hz / 2 ** level
    if kind == "approx":
        return 0.0, fs_hz / 2 ** (level + 1)
    raise ConfigError(f"kind must be 'detail' or 'approx', got {kind!r}")
