"""Strict run configuration: defaults, schema validation, deep merge.

Unknown keys are rejected with their full path (a typo in an ablation
grid should fail loudly, not silently fall back to a default). The seed
is mandatory: either in the document or via --seed.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from . import model as M
from . import train as tr
from .errors import SchemaError
from .preprocess import BandpassSpec, SqiSpec
from .synth import CohortSpec, SynthConfig

DEFAULTS: dict = {
    "seed": None,  # mandatory
    "data": {
        "n_users": 20,
        "segments_per_user": 10,
        "fs_hz": 100.0,
        "duration_s": 10.0,
        "hr_low": [60.0, 70.0],
        "hr_high": [110.0, 120.0],
        "frac_high": 0.5,
        "hr_jitter_bpm": 1.5,
        "n_harmonics": 3,
        "dicrotic_amp": 0.3,
        "wander_amp": 0.2,
        "noise_std": 0.05,
    },
    "preprocess": {
        "target_fs_hz": 100.0,
        "bandpass": {"low_hz": 0.5, "high_hz": 10.0, "order": 4,
                     "ripple_db": 0.5},
        "sqi": {"entropy_max": 0.85, "autocorr_min": 0.3,
                "hr_band_bpm": [40.0, 180.0]},
    },
    "wavelet": {"family": "haar", "level": 3},
    "map": {"cutoff_hz": 10.0, "interp": "zero_order",
            "norm": "per_band_instance"},
    "tokenizer": {"patch_rows": 1, "patch_cols": 25},
    "arch": {
        "preset": "mmr_light",
        "mode": "mmr",
        "enc_blocks": None, "enc_dim": None, "enc_heads": None,
        "enc_ffn": None, "dec_blocks": None, "dec_dim": None,
        "dec_heads": None, "dec_ffn": None,
    },
    "train": {
        "base_lr": 1e-4,
        "weight_decay": 1e-5,
        "batch_size": 32,
        "total_steps": 500,
        "warmup_frac": 0.1,
        "grad_clip_norm": 1.0,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "mask_ratio": 0.75,
        "mask_strategy": "random",
        "log_every": 10,
        "aug": {"p_flip": 0.5, "noise_std": 0.05,
                "stretch_min": 0.8, "stretch_max": 1.25},
    },
    "eval": {
        "k_folds": 5,
        "task": "classification",
        "label": "class",
        "hr_label": "hr_bpm",
        "hr_normal": [60.0, 90.0],
        "hr_elevated": [90.0, 130.0],
    },
    "ablate": {
        "families": ["haar", "db4"],
        "levels": [2, 3],
        "patch_sizes": [[1, 25]],
        "mask_strategies": ["random"],
        "interps": ["zero_order"],
    },
}

_NUMERIC = (int, float)


def _check_value(path: str, value, default) -> None:
    if default is None:
        if not isinstance(value, int) or isinstance(value, bool):
            raise SchemaError(path, f"expected an integer, got {value!r}")
        return
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise SchemaError(path, f"expected a boolean, got {value!r}")
    elif isinstance(default, _NUMERIC):
        if not isinstance(value, _NUMERIC) or isinstance(value, bool):
            raise SchemaError(path, f"expected a number, got {value!r}")
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise SchemaError(path, f"expected a string, got {value!r}")
    elif isinstance(default, list):
        if not isinstance(value, list):
            raise SchemaError(path, f"expected a list, got {value!r}")
    else:
        raise SchemaError(path, f"unsupported schema type {type(default)}")


def _merge(path: str, user: dict, defaults: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise SchemaError(here, "unknown key")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise SchemaError(here, f"expected an object, got {value!r}")
            out[key] = _merge(here, value, defaults[key])
        else:
            # arch dims are nullable ints; everything else matches its default
            if value is None and path == "arch":
                out[key] = None
                continue
            if defaults[key] is None and path == "arch":
                if not isinstance(value, int) or isinstance(value, bool):
                    raise SchemaError(here, f"expected an integer, got {value!r}")
                out[key] = value
                continue
            _check_value(here, value, defaults[key])
            out[key] = value
    return out


def load_config(path=None, seed_override: int | None = None) -> dict:
    """Read, validate against the strict schema and merge with defaults."""
    user: dict = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(str(path), f"invalid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise SchemaError(str(path), "top level must be an object")
    cfg = _merge("", user, DEFAULTS)
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    if cfg["seed"] is None:
        raise SchemaError("seed", "mandatory; set it in the config or via --seed")
    return cfg


def echo_config(cfg: dict, out_dir) -> None:
    """Write the exact merged config next to the outputs it produced."""
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    with open(Path(out_dir) / "config.json", "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ------------------------------------------------ typed views of sections
def synth_spec(cfg: dict) -> CohortSpec:
    d = cfg["data"]
    base = SynthConfig(fs_hz=d["fs_hz"], duration_s=d["duration_s"],
                       n_harmonics=d["n_harmonics"],
                       dicrotic_amp=d["dicrotic_amp"],
                       wander_amp=d["wander_amp"], noise_std=d["noise_std"],
                       seed=cfg["seed"])
    return CohortSpec(hr_low=tuple(d["hr_low"]), hr_high=tuple(d["hr_high"]),
                      frac_high=d["frac_high"],
                      hr_jitter_bpm=d["hr_jitter_bpm"], base=base)


def bandpass_spec(cfg: dict) -> BandpassSpec:
    b = cfg["preprocess"]["bandpass"]
    return BandpassSpec(b["low_hz"], b["high_hz"], b["order"], b["ripple_db"])


def sqi_spec(cfg: dict) -> SqiSpec:
    s = cfg["preprocess"]["sqi"]
    return SqiSpec(s["entropy_max"], s["autocorr_min"],
                   tuple(s["hr_band_bpm"]))


def pipeline_config(cfg: dict) -> tr.PipelineConfig:
    return tr.PipelineConfig(
        family=cfg["wavelet"]["family"], level=cfg["wavelet"]["level"],
        cutoff_hz=cfg["map"]["cutoff_hz"], interp=cfg["map"]["interp"],
        norm=cfg["map"]["norm"], patch_rows=cfg["tokenizer"]["patch_rows"],
        patch_cols=cfg["tokenizer"]["patch_cols"])


def arch_config(cfg: dict) -> M.ArchConfig:
    a = cfg["arch"]
    rows, cols = cfg["tokenizer"]["patch_rows"], cfg["tokenizer"]["patch_cols"]
    patch_dim = rows * cols if a["mode"] == "mmr" else cols
    base = M.arch_preset(a["preset"], patch_dim=patch_dim, mode=a["mode"])
    overrides = {k: a[k] for k in ("enc_blocks", "enc_dim", "enc_heads",
                                   "enc_ffn", "dec_blocks", "dec_dim",
                                   "dec_heads", "dec_ffn")
                 if a[k] is not None}
    if not overrides:
        return base
    fields = dict(enc_blocks=base.enc_blocks, enc_dim=base.enc_dim,
                  enc_heads=base.enc_heads, enc_ffn=base.enc_ffn,
                  dec_blocks=base.dec_blocks, dec_dim=base.dec_dim,
                  dec_heads=base.dec_heads, dec_ffn=base.dec_ffn)
    fields.update(overrides)
    return M.ArchConfig(patch_dim=patch_dim, mode=a["mode"], **fields)


def train_config(cfg: dict) -> tr.TrainConfig:
    t = cfg["train"]
    aug = tr.AugSpec(p_flip=t["aug"]["p_flip"], noise_std=t["aug"]["noise_std"],
                     stretch_range=(t["aug"]["stretch_min"],
                                    t["aug"]["stretch_max"]))
    return tr.TrainConfig(
        base_lr=t["base_lr"], weight_decay=t["weight_decay"],
        batch_size=t["batch_size"], total_steps=t["total_steps"],
        warmup_frac=t["warmup_frac"], grad_clip_norm=t["grad_clip_norm"],
        beta1=t["beta1"], beta2=t["beta2"], eps=t["eps"], seed=cfg["seed"],
        mask_ratio=t["mask_ratio"], mask_strategy=t["mask_strategy"],
        log_every=t["log_every"], aug=aug)
