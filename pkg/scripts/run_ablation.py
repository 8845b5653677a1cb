#!/usr/bin/env python3
"""Small ablation sweep over wavelet family and decomposition level.

Each grid cell pretrains a short run, embeds the cohort, and probes the
heart-rate class; tables land in runs/ablation/.
"""

import json
import sys
from pathlib import Path

from mmr.cli import main

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "runs" / "ablation"

CONFIG = {
    "seed": 21,
    "data": {"n_users": 10, "segments_per_user": 4,
             "n_harmonics": 7, "dicrotic_amp": 0.0, "noise_std": 0.01},
    "train": {"base_lr": 6e-3, "batch_size": 8, "total_steps": 40,
              "log_every": 10,
              "aug": {"p_flip": 0.0, "noise_std": 0.01,
                      "stretch_min": 1.0, "stretch_max": 1.0}},
    "eval": {"k_folds": 5},
    "ablate": {
        "families": ["haar", "db4", "bior2.2", "bior4.4"],
        "levels": [3],
        "patch_sizes": [[1, 25], [1, 50]],
        "mask_strategies": ["random", "cross_scale"],
        "interps": ["zero_order"],
    },
}


def run() -> int:
    OUT.mkdir(parents=True, exist_ok=True)
    cfg_path = OUT / "run_config.json"
    cfg_path.write_text(json.dumps(CONFIG, indent=2))
    code = main(["synth", "--config", str(cfg_path), "--out", str(OUT / "synth")])
    if code != 0:
        return code
    return main(["ablate", "--config", str(cfg_path),
                 "--data", str(OUT / "synth" / "segments.jsonl"),
                 "--out", str(OUT / "grid")])


if __name__ == "__main__":
    sys.exit(run())
