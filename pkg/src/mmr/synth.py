"""Synthetic pulse-like segments with known ground truth.

Every segment is a harmonic stack at a chosen heart rate plus an optional
dicrotic bump, slow baseline wander and Gaussian noise, so downstream
stages can be exercised (and probed) against labels that are true by
construction. Not a physiological simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError

# baseline wander stays below this frequency (well under any credible pulse)
WANDER_MAX_HZ = 0.3
WANDER_MIN_HZ = 0.05


@dataclass(frozen=True)
class SynthConfig:
    fs_hz: float = 100.0
    duration_s: float = 10.0
    hr_bpm: float = 75.0
    n_harmonics: int = 3
    dicrotic_amp: float = 0.3
    wander_amp: float = 0.2
    noise_std: float = 0.05
    seed: int = 0

    def n_samples(self) -> int:
        n = self.fs_hz * self.duration_s
        if abs(n - round(n)) > 1e-9:
            raise ConfigError(
                f"duration_s * fs_hz = {n} is not an integer sample count")
        return int(round(n))

    def validate(self) -> None:
        if not 40.0 <= self.hr_bpm <= 180.0:
            raise ConfigError(f"hr_bpm {self.hr_bpm} outside [40, 180]")
        if self.n_harmonics < 1:
            raise ConfigError("n_harmonics must be >= 1")
        if not 0.0 <= self.dicrotic_amp <= 1.0:
            raise ConfigError("dicrotic_amp must lie in [0, 1]")
        # the dicrotic bump rides on the 2nd harmonic, so it counts too
        top = max(self.n_harmonics, 2 if self.dicrotic_amp > 0 else 1)
        f_max = self.hr_bpm / 60.0 * top
        if self.fs_hz <= 2.0 * f_max:
            raise ConfigError(
                f"fs_hz {self.fs_hz} aliases the top synthesized harmonic "
                f"({f_max:.2f} Hz); need fs_hz > {2 * f_max:.2f}")
        self.n_samples()


@dataclass
class Segment:
    """One fixed-length 1-D signal plus identity and ground-truth labels."""

    user_id: str
    segment_id: str
    fs_hz: float
    samples: np.ndarray
    labels: dict[str, float] = field(default_factory=dict)

    def validate(self) -> None:
        if not np.all(np.isfinite(self.samples)):
            raise ConfigError(f"segment {self.segment_id} has non-finite samples")


def _segment_rng(seed: int, index: int) -> np.random.Generator:
    # per-segment stream: parallel generation stays order-independent
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def generate_segment(cfg: SynthConfig, index: int = 0,
                     user_id: str = "user_0") -> Segment:
    """Render one segment; deterministic for fixed (cfg, index)."""
    cfg.validate()
    rng = _segment_rng(cfg.seed, index)
    n = cfg.n_samples()
    t = np.arange(n) / cfg.fs_hz
    f0 = cfg.hr_bpm / 60.0
    phases = rng.uniform(0.0, 2.0 * np.pi, size=cfg.n_harmonics)
    x = np.zeros(n)
    for h in range(1, cfg.n_harmonics + 1):
        x += np.sin(2.0 * np.pi * h * f0 * t + phases[h - 1]) / h
    if cfg.dicrotic_amp > 0:
        # secondary bump as a phase-shifted 2nd harmonic tied to the pulse
        x += cfg.dicrotic_amp * np.sin(
            2.0 * np.pi * 2.0 * f0 * t + phases[0] + np.pi / 3.0)
    if cfg.wander_amp > 0:
        f_w = rng.uniform(WANDER_MIN_HZ, WANDER_MAX_HZ)
        x += cfg.wander_amp * np.sin(2.0 * np.pi * f_w * t + rng.uniform(0, 2 * np.pi))
    if cfg.noise_std > 0:
        x += rng.normal(0.0, cfg.noise_std, size=n)
    labels = {
        "hr_bpm": float(cfg.hr_bpm),
        "class": 1.0 if cfg.hr_bpm > 90.0 else 0.0,
    }
    return Segment(user_id, f"{user_id}_s{index:04d}", cfg.fs_hz, x, labels)


@dataclass(frozen=True)
class CohortSpec:
    """Latent per-user heart rates drawn from two labeled ranges."""

    hr_low: tuple[float, float] = (60.0, 70.0)
    hr_high: tuple[float, float] = (110.0, 120.0)
    frac_high: float = 0.5
    hr_jitter_bpm: float = 1.5
    base: SynthConfig = field(default_factory=SynthConfig)

    def validate(self) -> None:
        for lo, hi in (self.hr_low, self.hr_high):
            if not 40.0 <= lo <= hi <= 180.0:
                raise ConfigError(f"hr range ({lo}, {hi}) outside [40, 180]")
        if not 0.0 <= self.frac_high <= 1.0:
            raise ConfigError("frac_high must lie in [0, 1]")
        if self.hr_jitter_bpm < 0:
            raise ConfigError("hr_jitter_bpm must be >= 0")


def generate_cohort(n_users: int, segments_per_user: int,
                    ranges: CohortSpec, seed: int) -> list[Segment]:
    """All of a user's segments share one latent rate plus small jitter."""
    if n_users < 1 or segments_per_user < 1:
        raise ConfigError("n_users and segments_per_user must be >= 1")
    ranges.validate()
    user_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xC0,)))
    segments: list[Segment] = []
    n_high = int(round(n_users * ranges.frac_high))
    groups = np.array([1] * n_high + [0] * (n_users - n_high))
    user_rng.shuffle(groups)
    for u in range(n_users):
        lo, hi = ranges.hr_high if groups[u] else ranges.hr_low
        latent_hr = user_rng.uniform(lo, hi)
        user_id = f"user_{u:03d}"
        for s in range(segments_per_user):
            jitter = user_rng.uniform(-ranges.hr_jitter_bpm, ranges.hr_jitter_bpm)
            hr = float(np.clip(latent_hr + jitter, 40.0, 180.0))
            cfg = replace(ranges.base, hr_bpm=hr, seed=seed)
            seg = generate_segment(cfg, index=u * segments_per_user + s,
                                   user_id=user_id)
            seg.labels["hr_latent_bpm"] = float(latent_hr)
            segments.append(seg)
    return segments
