#!/usr/bin/env python3
"""End-to-end desk demo: synth -> preprocess -> pretrain -> embed -> probe.

Writes everything under runs/demo/. Adjust STEPS/USERS for a longer run.
"""

import json
import sys
from pathlib import Path

from mmr.cli import main

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "runs" / "demo"

CONFIG = {
    "seed": 7,
    "data": {
        "n_users": 12,
        "segments_per_user": 6,
        "n_harmonics": 7,
        "dicrotic_amp": 0.0,
        "wander_amp": 0.1,
        "noise_std": 0.01,
    },
    "train": {
        "base_lr": 6e-3,
        "batch_size": 16,
        "total_steps": 120,
        "log_every": 10,
        "aug": {"p_flip": 0.0, "noise_std": 0.01,
                "stretch_min": 1.0, "stretch_max": 1.0},
    },
}


def run() -> int:
    OUT.mkdir(parents=True, exist_ok=True)
    cfg_path = OUT / "run_config.json"
    cfg_path.write_text(json.dumps(CONFIG, indent=2))
    steps = [
        ["synth", "--config", str(cfg_path), "--out", str(OUT / "synth")],
        ["preprocess", "--in", str(OUT / "synth" / "segments.jsonl"),
         "--config", str(cfg_path), "--out", str(OUT / "prep")],
        ["pretrain", "--config", str(cfg_path),
         "--data", str(OUT / "prep" / "segments.jsonl"),
         "--out", str(OUT / "train")],
        ["embed", "--checkpoint", str(OUT / "train" / "checkpoint.mmrc"),
         "--data", str(OUT / "prep" / "segments.jsonl"),
         "--out", str(OUT / "emb")],
        ["probe", "--embeddings", str(OUT / "emb" / "embeddings.csv"),
         "--labels", str(OUT / "prep" / "segments.jsonl"),
         "--config", str(cfg_path), "--out", str(OUT / "probe")],
    ]
    for argv in steps:
        print(f"\n== mmr {' '.join(argv[:1])} ==")
        code = main(argv)
        if code != 0:
            return code
    print(f"\ndone; see {OUT}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
