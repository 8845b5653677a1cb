import json
from pathlib import Path

import numpy as np
import pytest

from mmr.cli import main, read_embeddings
from mmr.config import DEFAULTS, load_config
from mmr.errors import SchemaError
from mmr.storage import load_checkpoint, read_segments

MICRO_CONFIG = {
    "seed": 11,
    "data": {"n_users": 6, "segments_per_user": 3, "noise_std": 0.03},
    "arch": {"preset": "mmr_light", "enc_blocks": 1, "enc_dim": 16,
             "enc_heads": 2, "enc_ffn": 32, "dec_blocks": 1, "dec_dim": 8,
             "dec_heads": 2, "dec_ffn": 16},
    "train": {"batch_size": 4, "total_steps": 6, "log_every": 2},
    "eval": {"k_folds": 3},
}


@pytest.fixture(scope="module")
def pipeline_dirs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(MICRO_CONFIG))
    assert main(["synth", "--config", str(cfg_path),
                 "--out", str(root / "synth")]) == 0
    assert main(["preprocess", "--in", str(root / "synth" / "segments.jsonl"),
                 "--config", str(cfg_path),
                 "--out", str(root / "prep")]) == 0
    assert main(["pretrain", "--config", str(cfg_path),
                 "--data", str(root / "prep" / "segments.jsonl"),
                 "--out", str(root / "train"), "--quiet"]) == 0
    assert main(["embed", "--checkpoint", str(root / "train" / "checkpoint.mmrc"),
                 "--data", str(root / "prep" / "segments.jsonl"),
                 "--out", str(root / "emb"), "--quiet"]) == 0
    assert main(["probe", "--embeddings", str(root / "emb" / "embeddings.csv"),
                 "--labels", str(root / "prep" / "segments.jsonl"),
                 "--config", str(cfg_path),
                 "--out", str(root / "probe"), "--quiet"]) == 0
    return root, cfg_path


def test_synth_outputs(pipeline_dirs):
    root, _ = pipeline_dirs
    segs = read_segments(root / "synth" / "segments.jsonl")
    assert len(segs) == 18
    assert (root / "synth" / "config.json").exists()
    summary = json.loads((root / "synth" / "summary.json").read_text())
    assert summary["n_segments"] == 18
    assert summary["n_users"] == 6


def test_preprocess_outputs(pipeline_dirs):
    root, _ = pipeline_dirs
    summary = json.loads((root / "prep" / "summary.json").read_text())
    assert summary["n_in"] == 18
    assert summary["n_accepted"] >= 16  # clean synth cohort mostly passes
    segs = read_segments(root / "prep" / "segments.jsonl")
    assert {len(s.samples) for s in segs} == {1000}


def test_pretrain_outputs(pipeline_dirs):
    root, _ = pipeline_dirs
    meta, tensors = load_checkpoint(root / "train" / "checkpoint.mmrc")
    assert meta["arch"]["enc_dim"] == 16
    assert meta["pipeline"]["family"] == "haar"
    assert any(k.startswith("opt.m.") for k in tensors)
    curve = (root / "train" / "loss_curve.csv").read_text().strip().splitlines()
    assert curve[0] == "step,lr,loss"
    assert len(curve) >= 4


def test_embed_csv_shape(pipeline_dirs):
    root, _ = pipeline_dirs
    seg_ids, user_ids, emb = read_embeddings(root / "emb" / "embeddings.csv")
    n_prep = len(read_segments(root / "prep" / "segments.jsonl"))
    assert emb.shape == (n_prep, 16)
    header = (root / "emb" / "embeddings.csv").read_text().splitlines()[0]
    assert header.split(",")[:2] == ["segment_id", "user_id"]
    assert len(header.split(",")) == 2 + 16


def test_probe_outputs(pipeline_dirs):
    root, _ = pipeline_dirs
    report = json.loads((root / "probe" / "report.json").read_text())
    assert "auroc" in report and "f1" in report
    assert len(report["auroc"]["per_fold"]) + len(
        report["auroc"]["skipped_folds"]) == 3
    assert (root / "probe" / "pca2.csv").exists()
    assert (root / "probe" / "user_distances.csv").exists()


def test_pretrain_determinism_byte_identical(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg = dict(MICRO_CONFIG)
    cfg["train"] = {"batch_size": 2, "total_steps": 3, "log_every": 1}
    cfg["data"] = {"n_users": 3, "segments_per_user": 2, "noise_std": 0.03}
    cfg_path.write_text(json.dumps(cfg))
    assert main(["synth", "--config", str(cfg_path),
                 "--out", str(tmp_path / "s"), "--quiet"]) == 0
    for tag in ("a", "b"):
        assert main(["pretrain", "--config", str(cfg_path),
                     "--data", str(tmp_path / "s" / "segments.jsonl"),
                     "--out", str(tmp_path / tag), "--quiet"]) == 0
    ck_a = (tmp_path / "a" / "checkpoint.mmrc").read_bytes()
    ck_b = (tmp_path / "b" / "checkpoint.mmrc").read_bytes()
    assert ck_a == ck_b
    assert (tmp_path / "a" / "loss_curve.csv").read_bytes() == \
        (tmp_path / "b" / "loss_curve.csv").read_bytes()


def test_ablate_grid_counts(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg = dict(MICRO_CONFIG)
    cfg["data"] = {"n_users": 5, "segments_per_user": 2, "noise_std": 0.03}
    cfg["train"] = {"batch_size": 2, "total_steps": 2, "log_every": 1}
    cfg["eval"] = {"k_folds": 3}
    cfg["ablate"] = {"families": ["haar", "db4"], "levels": [3],
                     "patch_sizes": [[1, 25]], "mask_strategies": ["random"],
                     "interps": ["zero_order"]}
    cfg_path.write_text(json.dumps(cfg))
    assert main(["synth", "--config", str(cfg_path),
                 "--out", str(tmp_path / "s"), "--quiet"]) == 0
    assert main(["ablate", "--config", str(cfg_path),
                 "--data", str(tmp_path / "s" / "segments.jsonl"),
                 "--out", str(tmp_path / "ab"), "--quiet"]) == 0
    rows = (tmp_path / "ab" / "ablate_auroc.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 2  # header + haar/db4 at L3


def test_schema_violation_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"seed": 1, "train": {"lr": 0.1}}))
    code = main(["synth", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "train.lr" in capsys.readouterr().err


def test_seed_mandatory(tmp_path, capsys):
    empty = tmp_path / "empty.json"
    empty.write_text("{}")
    code = main(["synth", "--config", str(empty), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "seed" in capsys.readouterr().err
    # --seed override satisfies the requirement
    assert main(["synth", "--config", str(empty), "--seed", "3",
                 "--out", str(tmp_path / "o2"), "--quiet"]) == 0


def test_config_strictness_and_merge():
    cfg = load_config(None, seed_override=5)
    assert cfg["train"]["base_lr"] == DEFAULTS["train"]["base_lr"]
    with pytest.raises(SchemaError):
        from mmr.config import _merge
        _merge("", {"wavelet": {"familly": "haar"}}, DEFAULTS)


def test_bad_checkpoint_magic(tmp_path, capsys):
    fake = tmp_path / "fake.mmrc"
    fake.write_bytes(b"NOPE" + b"\x00" * 64)
    code = main(["embed", "--checkpoint", str(fake),
                 "--data", str(tmp_path / "none.jsonl"),
                 "--out", str(tmp_path / "o")])
    assert code == 1
    assert "magic" in capsys.readouterr().err


def test_runtime_error_exit_code(tmp_path, capsys):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({"seed": 1}))
    code = main(["pretrain", "--config", str(cfg_path),
                 "--data", str(tmp_path / "missing.jsonl"),
                 "--out", str(tmp_path / "o")])
    assert code != 0
