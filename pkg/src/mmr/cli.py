"""Command-line pipeline: synth -> preprocess -> pretrain -> embed ->
probe -> ablate.

Every command writes its outputs plus the exact config that produced
them and a machine-readable summary.json. Exit codes: 0 success, 2 for
config/schema violations (field path printed), 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import config as C
from . import evaluate as ev
from . import model as M
from . import tokenizer as tok
from . import train as tr
from .errors import MmrError, SchemaError
from .preprocess import preprocess_segment
from .storage import (load_checkpoint, read_segments, save_checkpoint,
                      write_csv, write_segments)
from .synth import generate_cohort


def _worker_count() -> int:
    raw = os.environ.get("MMR_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _write_summary(out_dir, payload: dict) -> None:
    with open(Path(out_dir) / "summary.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_synth(cfg: dict, out_dir: Path, quiet: bool) -> None:
    spec = C.synth_spec(cfg)
    segs = generate_cohort(cfg["data"]["n_users"],
                           cfg["data"]["segments_per_user"], spec,
                           seed=cfg["seed"])
    C.echo_config(cfg, out_dir)
    write_segments(out_dir / "segments.jsonl", segs)
    _write_summary(out_dir, {"n_segments": len(segs),
                             "n_users": len({s.user_id for s in segs}),
                             "fs_hz": spec.base.fs_hz})
    if not quiet:
        print(f"wrote {len(segs)} segments to {out_dir / 'segments.jsonl'}")


def cmd_preprocess(cfg: dict, data: Path, out_dir: Path, quiet: bool) -> None:
    segs = read_segments(data)
    bandpass = C.bandpass_spec(cfg)
    sqi = C.sqi_spec(cfg)
    target_fs = cfg["preprocess"]["target_fs_hz"]

    def work(seg):
        return preprocess_segment(seg, target_fs, bandpass, sqi)

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, segs))  # order-preserving
    else:
        results = [work(s) for s in segs]
    accepted = [r for r in results if not hasattr(r, "reason")]
    rejected = [r for r in results if hasattr(r, "reason")]
    C.echo_config(cfg, out_dir)
    write_segments(out_dir / "segments.jsonl", accepted)
    with open(out_dir / "rejects.jsonl", "w") as fh:
        for r in rejected:
            fh.write(json.dumps({"segment_id": r.segment_id,
                                 "reason": r.reason,
                                 "detail": r.detail}, sort_keys=True) + "\n")
    _write_summary(out_dir, {
        "n_in": len(segs), "n_accepted": len(accepted),
        "n_rejected_sqi": sum(1 for r in rejected if r.reason == "sqi"),
        "n_rejected_degenerate":
            sum(1 for r in rejected if r.reason == "degenerate"),
    })
    if not quiet:
        print(f"accepted {len(accepted)}/{len(segs)} segments")


def _checkpoint_meta(cfg: dict, arch: M.ArchConfig) -> dict:
    return {
        "arch": {"enc_blocks": arch.enc_blocks, "enc_dim": arch.enc_dim,
                 "enc_heads": arch.enc_heads, "enc_ffn": arch.enc_ffn,
                 "dec_blocks": arch.dec_blocks, "dec_dim": arch.dec_dim,
                 "dec_heads": arch.dec_heads, "dec_ffn": arch.dec_ffn,
                 "patch_dim": arch.patch_dim, "mode": arch.mode},
        "pipeline": {"family": cfg["wavelet"]["family"],
                     "level": cfg["wavelet"]["level"],
                     "cutoff_hz": cfg["map"]["cutoff_hz"],
                     "interp": cfg["map"]["interp"],
                     "norm": cfg["map"]["norm"],
                     "patch_rows": cfg["tokenizer"]["patch_rows"],
                     "patch_cols": cfg["tokenizer"]["patch_cols"]},
        "seed": cfg["seed"],
    }


def _meta_views(meta: dict) -> tuple[M.ArchConfig, tr.PipelineConfig]:
    arch = M.ArchConfig(**meta["arch"])
    pipe = tr.PipelineConfig(**meta["pipeline"])
    return arch, pipe


def cmd_pretrain(cfg: dict, data: Path, out_dir: Path, quiet: bool) -> None:
    segs = read_segments(data)
    arch = C.arch_config(cfg)
    pipe = C.pipeline_config(cfg)
    result = tr.pretrain(segs, arch, C.train_config(cfg), pipe)
    C.echo_config(cfg, out_dir)
    tensors = {name: p.data for name, p in result.state.items()}
    for name, m in result.optimizer.m.items():
        tensors[f"opt.m.{name}"] = m
        tensors[f"opt.v.{name}"] = result.optimizer.v[name]
    tensors["opt.t"] = np.array(float(result.optimizer.t))
    save_checkpoint(out_dir / "checkpoint.mmrc", _checkpoint_meta(cfg, arch),
                    tensors)
    write_csv(out_dir / "loss_curve.csv", ["step", "lr", "loss"],
              [(s, float(lr), float(loss)) for s, lr, loss in result.curve])
    _write_summary(out_dir, {
        "steps": len(result.curve) and result.curve[-1][0],
        "final_loss": result.curve[-1][2],
        "initial_loss": result.curve[0][2],
        "n_segments": len(segs),
        "n_skipped": result.n_skipped,
        "param_count": M.param_count(arch),
    })
    if not quiet:
        print(f"checkpoint at {out_dir / 'checkpoint.mmrc'}; "
              f"loss {result.curve[0][2]:.4f} -> {result.curve[-1][2]:.4f}")


def _model_tensors(tensors: dict) -> dict:
    from .tensor import Tensor
    return {name: Tensor(arr, requires_grad=True, name=name)
            for name, arr in tensors.items() if not name.startswith("opt.")}


def _embed_segments(segs, state, arch, pipe):
    rows = []
    grid = None
    pos_enc = None
    for seg in segs:
        patches, meta = tr.segment_patches(seg.samples, seg.fs_hz, pipe,
                                           arch.mode)
        if grid is None:
            grid = tr._grid_for(patches, pipe, len(meta), arch.mode)
            pos_enc = tok.pos_embed(grid, arch.enc_dim)
        emb = M.encode(patches, pos_enc, state, arch)
        rows.append((seg.segment_id, seg.user_id, emb))
    return rows


def cmd_embed(checkpoint: Path, data: Path, out_dir: Path, quiet: bool) -> None:
    meta, tensors = load_checkpoint(checkpoint)
    arch, pipe = _meta_views(meta)
    state = _model_tensors(tensors)
    segs = read_segments(data)
    rows = _embed_segments(segs, state, arch, pipe)
    out_dir.mkdir(parents=True, exist_ok=True)
    dim = len(rows[0][2])
    header = ["segment_id", "user_id"] + [f"e{i:03d}" for i in range(dim)]
    write_csv(out_dir / "embeddings.csv", header,
              [(sid, uid) + tuple(float(v) for v in emb)
               for sid, uid, emb in rows])
    _write_summary(out_dir, {"n_rows": len(rows), "dim": dim,
                             "checkpoint": str(checkpoint)})
    if not quiet:
        print(f"wrote {len(rows)} x {dim} embeddings")


def read_embeddings(path) -> tuple[list[str], list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        seg_ids, user_ids, vecs = [], [], []
        for line in fh:
            parts = line.strip().split(",")
            seg_ids.append(parts[0])
            user_ids.append(parts[1])
            vecs.append([float(v) for v in parts[2:]])
    if header[:2] != ["segment_id", "user_id"]:
        raise MmrError(f"{path}: unexpected embeddings header")
    return seg_ids, user_ids, np.asarray(vecs)


def cmd_probe(cfg: dict, embeddings: Path, labels: Path, out_dir: Path,
              quiet: bool) -> None:
    seg_ids, user_ids, emb = read_embeddings(embeddings)
    label_segs = {s.segment_id: s for s in read_segments(labels)}
    missing = [sid for sid in seg_ids if sid not in label_segs]
    if missing:
        raise MmrError(f"{len(missing)} embedded segments missing from the "
                       f"label file (first: {missing[0]})")
    e_cfg = cfg["eval"]
    label_key = e_cfg["label"]
    y = np.array([label_segs[sid].labels[label_key] for sid in seg_ids])
    users = np.array(user_ids)
    folds = ev.make_folds(users, y if e_cfg["task"] == "classification"
                          else (y > np.median(y)).astype(float),
                          k=e_cfg["k_folds"], seed=cfg["seed"])
    reports = {}
    if e_cfg["task"] == "classification":
        for metric in ("auroc", "f1"):
            reports[metric] = ev.probe(emb, y, users, "classification",
                                       folds, metric=metric)
    else:
        reports["mae"] = ev.probe(emb, y, users, "regression", folds)

    # embedding diagnostics: HR-group silhouette, distances, 2-D projection
    hr = np.array([label_segs[sid].labels.get(e_cfg["hr_label"], np.nan)
                   for sid in seg_ids])
    sil = None
    if np.all(np.isfinite(hr)):
        lo, hi = e_cfg["hr_normal"], e_cfg["hr_elevated"]
        group = np.full(len(hr), -1)
        group[(hr >= lo[0]) & (hr < lo[1])] = 0
        group[(hr >= hi[0]) & (hr <= hi[1])] = 1
        user_arr = np.array(user_ids)
        keep_users = sorted(set(user_arr[group >= 0]))
        user_mean, user_group = [], []
        for u in keep_users:
            sel = (user_arr == u) & (group >= 0)
            user_mean.append(emb[sel].mean(axis=0))
            user_group.append(int(np.round(group[sel].mean())))
        if len(set(user_group)) == 2:
            sil = ev.silhouette(np.stack(user_mean), np.array(user_group))

    dists, pairs, dist_summary = ev.pairwise_user_distances(emb, users)
    coords, variances = ev.pca2(emb)

    C.echo_config(cfg, out_dir)
    report_payload = {
        metric: {"per_fold": r.per_fold, "mean": r.mean, "min": r.min,
                 "max": r.max, "skipped_folds": r.skipped_folds}
        for metric, r in reports.items()
    }
    report_payload["silhouette_hr_groups"] = sil
    report_payload["pairwise_user_distances"] = dist_summary
    report_payload["pca_explained_variance"] = list(variances)
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report_payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_csv(out_dir / "report.csv", ["metric", "fold", "value"],
              [(m, i, float(v)) for m, r in reports.items()
               for i, v in enumerate(r.per_fold)])
    write_csv(out_dir / "user_distances.csv", ["user_a", "user_b", "distance"],
              [(a, b, float(d)) for (a, b), d in zip(pairs, dists)])
    write_csv(out_dir / "pca2.csv", ["segment_id", "user_id", "pc1", "pc2"],
              [(sid, uid, float(c[0]), float(c[1]))
               for sid, uid, c in zip(seg_ids, user_ids, coords)])
    _write_summary(out_dir, {m: r.mean for m, r in reports.items()}
                   | {"silhouette_hr_groups": sil})
    if not quiet:
        for metric, r in reports.items():
            print(f"{metric}: mean={r.mean:.4f} [{r.min:.4f}-{r.max:.4f}]")


def _valid_ablate_cell(family, level, rows, cols, strategy, cfg) -> bool:
    # level-3 keeps 2 bands at the default 10 Hz cutoff, level-2 keeps 1
    n_bands = level + 1 - 2 if cfg["map"]["cutoff_hz"] <= 12.5 else level + 1
    if n_bands < 2 or n_bands % rows:
        return False
    if strategy == "row_wise" and n_bands // rows < 2:
        return False
    return True


def cmd_ablate(cfg: dict, data: Path, out_dir: Path, quiet: bool) -> None:
    segs = read_segments(data)
    grid_spec = cfg["ablate"]
    rows_out = []
    cells = [(f, l, tuple(p), s, i)
             for f in grid_spec["families"] for l in grid_spec["levels"]
             for p in grid_spec["patch_sizes"]
             for s in grid_spec["mask_strategies"]
             for i in grid_spec["interps"]]
    for family, level, (p_rows, p_cols), strategy, interp in cells:
        if not _valid_ablate_cell(family, level, p_rows, p_cols, strategy, cfg):
            continue
        sub = json.loads(json.dumps(cfg))  # deep copy
        sub["wavelet"]["family"] = family
        sub["wavelet"]["level"] = level
        sub["tokenizer"]["patch_rows"] = p_rows
        sub["tokenizer"]["patch_cols"] = p_cols
        sub["train"]["mask_strategy"] = strategy
        sub["map"]["interp"] = interp
        arch = C.arch_config(sub)
        pipe = C.pipeline_config(sub)
        result = tr.pretrain(segs, arch, C.train_config(sub), pipe)
        rows = _embed_segments(segs, result.state, arch, pipe)
        emb = np.stack([r[2] for r in rows])
        users = np.array([r[1] for r in rows])
        y = np.array([s.labels[cfg["eval"]["label"]] for s in segs])
        folds = ev.make_folds(users, y, k=cfg["eval"]["k_folds"],
                              seed=cfg["seed"])
        cell = {"family": family, "level": level,
                "patch": f"{p_rows}x{p_cols}", "mask": strategy,
                "interp": interp,
                "final_loss": result.curve[-1][2]}
        for metric in ("auroc", "f1"):
            cell[metric] = ev.probe(emb, y, users, "classification", folds,
                                    metric=metric).mean
        rows_out.append(cell)
        if not quiet:
            print(f"[{family} L{level} {cell['patch']} {strategy} {interp}] "
                  f"auroc={cell['auroc']:.4f}")
    if not rows_out:
        raise MmrError("ablation grid produced no valid combinations")
    C.echo_config(cfg, out_dir)
    keys = ["family", "level", "patch", "mask", "interp"]
    for metric in ("auroc", "f1", "final_loss"):
        write_csv(out_dir / f"ablate_{metric}.csv", keys + [metric],
                  [tuple(c[k] for k in keys) + (float(c[metric]),)
                   for c in rows_out])
    _write_summary(out_dir, {"n_cells": len(rows_out)})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmr",
        description="masked multiscale reconstruction pipeline for "
                    "pulse-like signals")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", type=Path, default=None,
                           help="JSON run config (defaults apply)")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    common(p)
    p = sub.add_parser("preprocess", help="filter/normalize/resample + SQI gate")
    p.add_argument("--in", dest="data", type=Path, required=True)
    common(p)
    p = sub.add_parser("pretrain", help="masked-reconstruction pretraining")
    p.add_argument("--data", type=Path, required=True)
    common(p)
    p = sub.add_parser("embed", help="frozen-encoder embeddings to CSV")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    common(p, needs_config=False)
    p = sub.add_parser("probe", help="grouped-fold linear probing + diagnostics")
    p.add_argument("--embeddings", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    common(p)
    p = sub.add_parser("ablate", help="run a small configuration grid")
    p.add_argument("--data", type=Path, required=True)
    common(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "embed":
            cfg = None
        else:
            cfg = C.load_config(args.config, seed_override=args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "synth":
            cmd_synth(cfg, args.out, args.quiet)
        elif args.command == "preprocess":
            cmd_preprocess(cfg, args.data, args.out, args.quiet)
        elif args.command == "pretrain":
            cmd_pretrain(cfg, args.data, args.out, args.quiet)
        elif args.command == "embed":
            cmd_embed(args.checkpoint, args.data, args.out, args.quiet)
        elif args.command == "probe":
            cmd_probe(cfg, args.embeddings, args.labels, args.out, args.quiet)
        elif args.command == "ablate":
            cmd_ablate(cfg, args.data, args.out, args.quiet)
    except SchemaError as exc:
        print(f"config error at {exc.path}: {exc}", file=sys.stderr)
        return 2
    except (MmrError, OSError) as exc:
        print(f"error: {exc.__class__.__module__}.{exc.__class__.__name__}: "
              f"{exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
