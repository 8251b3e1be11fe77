"""Command-line interface: generate, train, eval, embed, match, import-ply,
bench.

Exit codes: 0 success, 1 runtime failure, 2 usage/validation error,
3 partial success (evaluation with skipped files).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import bench as benchmod
from .diagnostics import Diagnostics
from .errors import InvalidInput, PointfaceError, ProtocolError
from .fileio.checkpoint import load_checkpoint
from .fileio.cloudfile import load_cloud, save_cloud
from .fileio.datasets import DirectorySink, load_manifest_clouds
from .fileio.ply import import_ply
from .fileio.runconfig import RunConfig
from .metrics import Embedding, cosine_distance, evaluate, identify
from .morphable import generate_dataset, load_model, make_toy_model, save_model
from .network import Network
from .persist import load_network_checkpoint, save_network_checkpoint
from .training import EpochRecord, fit


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_toml(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for key in ("seed", "identities", "expressions", "epochs", "batch_size",
                "lr", "weight_decay", "arch", "n0", "far_target"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if overrides:
        cfg = RunConfig.from_dict({**cfg.to_dict(), **overrides})
    return cfg


# ----------------------------------------------------------------- generate


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.toy_model:
        model = make_toy_model(args.toy_vertices, args.toy_shape_dims,
                               args.toy_expr_dims, seed=cfg.seed)
        save_model(model, out / "model.gpmm")
    else:
        if not args.model:
            raise InvalidInput("supply --model FILE or --toy-model")
        model = load_model(args.model)
    guided_pool = None
    if args.guided_pool:
        with np.load(args.guided_pool) as data:
            betas = data["betas"]
        guided_pool = [betas[i] for i in range(betas.shape[0])]
    params = cfg.gen_params(guided_pool=guided_pool)
    sink = DirectorySink(out)
    manifest = generate_dataset(model, cfg.identities, cfg.expressions, params,
                                seed=cfg.seed, sink=sink, workers=args.workers)
    manifest.save(out / "manifest.json")
    print(f"generated {len(manifest.records)} clouds "
          f"({cfg.identities} identities x {cfg.expressions} expressions), seed {cfg.seed}")
    print(f"manifest: {out / 'manifest.json'}")
    return 0


# ----------------------------------------------------------------- train


def _append_metrics(path: Path, record: EpochRecord) -> None:
    new = not path.exists()
    with open(path, "a", newline="") as f:
        writer = csv.writer(f)
        if new:
            writer.writerow(EpochRecord.CSV_FIELDS)
        writer.writerow(record.csv_row())


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_clouds = load_manifest_clouds(args.train)
    val_clouds = load_manifest_clouds(args.val)

    train_ids = sorted({c.id_label for c in train_clouds})
    val_ids = {c.id_label for c in val_clouds}
    overlap = set(train_ids) & val_ids
    if overlap:
        raise ProtocolError(
            f"train/verification identity overlap: {sorted(overlap)[:5]}"
            f"{'...' if len(overlap) > 5 else ''}"
        )

    spec = cfg.network_spec(n_classes=len(train_ids))
    metrics_path = out / "metrics.csv"
    last_path = out / "last.s3ck"
    best_path = out / "best.s3ck"

    start_epoch = 1
    best_so_far = None
    if args.resume and last_path.exists():
        network, last_ck = load_network_checkpoint(last_path)
        start_epoch = int(last_ck.config["epoch"]) + 1
        if best_path.exists():
            best_ck = load_checkpoint(best_path)
            best_so_far = (int(best_ck.config["epoch"]),
                           best_ck.verification_loss, best_ck.arrays)
        print(f"resuming after epoch {start_epoch - 1}")
    else:
        network = Network(spec, seed=cfg.seed)
        if metrics_path.exists():
            metrics_path.unlink()

    def echo(epoch, best_epoch, best_loss):
        return {
            "run_config": cfg.to_dict(),
            "network_spec": spec.to_dict(),
            "network_seed": cfg.seed,
            "epoch": epoch,
            "best_epoch": best_epoch,
            "best_verification_loss": best_loss,
            "class_labels": train_ids,
        }

    state = {"best_epoch": 0, "best_loss": float("inf")}
    if best_so_far is not None:
        state["best_epoch"], state["best_loss"] = best_so_far[0], best_so_far[1]

    def on_epoch(record, net, is_best):
        _append_metrics(metrics_path, record)
        if is_best:
            state["best_epoch"] = record.epoch
            state["best_loss"] = record.verification_loss
            save_network_checkpoint(
                best_path, net, echo(record.epoch, record.epoch, record.verification_loss),
                record.verification_loss,
            )
        save_network_checkpoint(
            last_path, net, echo(record.epoch, state["best_epoch"], state["best_loss"]),
            record.verification_loss, include_optimizer=True,
        )
        print(f"epoch {record.epoch:3d}  lr {record.lr:.1e}  "
              f"train {record.train_loss:.4f}  rr1 {record.rr1:.4f}  "
              f"vr {record.vr_at_far:.4f}  auc {record.auc:.4f}  "
              f"vloss {record.verification_loss:.4f}{'  *' if is_best else ''}")

    result = fit(network, train_clouds, val_clouds, cfg.fit_config(),
                 on_epoch=on_epoch, start_epoch=start_epoch, best_so_far=best_so_far)

    summary = {
        "best_epoch": result.best_epoch,
        "best_verification_loss": result.best_verification_loss,
        "epochs_run": [r.epoch for r in result.records],
        "checkpoint": str(best_path),
        "metrics": str(metrics_path),
        "n_classes": len(train_ids),
        "config": cfg.to_dict(),
        "diagnostics": result.diagnostics.as_dict(),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    print(f"best epoch {result.best_epoch} "
          f"(verification loss {result.best_verification_loss:.4f}) -> {best_path}")
    return 0


# ----------------------------------------------------------------- eval


def _embed_many(network, clouds, workers, diag):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vectors = list(pool.map(lambda c: network.embed(c, diag=diag), clouds))
    else:
        vectors = [network.embed(c, diag=diag) for c in clouds]
    return [
        Embedding(vec, id_label=c.id_label, expr_label=c.expr_label)
        for vec, c in zip(vectors, clouds)
    ]


def cmd_eval(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    network, ck = load_network_checkpoint(args.checkpoint)
    gallery_clouds, g_errors = load_manifest_clouds(
        args.gallery, expr=args.gallery_expr, on_error="collect")
    probe_clouds, p_errors = load_manifest_clouds(
        args.probe, expr_not=args.probe_expr_not, on_error="collect")
    errors = g_errors + p_errors
    if not gallery_clouds or not probe_clouds:
        raise InvalidInput("gallery and probe sets must be nonempty after filtering")

    diag = Diagnostics()
    gallery = _embed_many(network, gallery_clouds, args.workers, diag)
    probes = _embed_many(network, probe_clouds, args.workers, diag)
    report = evaluate(gallery, probes, far_target=args.far, diag=diag)

    payload = report.to_dict()
    payload["metadata"] = {
        "checkpoint": str(args.checkpoint),
        "checkpoint_verification_loss": ck.verification_loss,
        "gallery_manifest": str(args.gallery),
        "probe_manifest": str(args.probe),
        "far_target": args.far,
    }
    if errors:
        payload["errors"] = errors
    (out / "report.json").write_text(json.dumps(payload, indent=2), encoding="utf-8")

    with open(out / "report.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(report.CSV_FIELDS)
        writer.writerow(report.csv_row())

    ranking = identify(gallery, probes)
    with open(out / "ranks.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["probe_id", "probe_expr", "rank1_label", "rank1_distance",
                         "hit", "ranked_labels"])
        for probe, ranks in zip(probes, ranking.ranked):
            top_label, top_dist = ranks[0]
            writer.writerow([
                probe.id_label or "", probe.expr_label or "", top_label,
                f"{top_dist:.6f}",
                int(probe.id_label == top_label) if probe.id_label else "",
                ";".join(lab for lab, _ in ranks),
            ])

    print(f"rr1 {report.rr1:.4f}  vr@{args.far:g} {report.vr_at_far:.4f}  "
          f"auc {report.auc:.4f}  verification loss {report.verification_loss:.4f}")
    if errors:
        print(f"{len(errors)} file(s) skipped; see report.json", file=sys.stderr)
        return 3
    return 0


# ----------------------------------------------------------------- embed / match


def cmd_embed(args) -> int:
    network, _ = load_network_checkpoint(args.checkpoint)
    cloud = load_cloud(args.cloud)
    vec = network.embed(cloud)
    payload = {
        "source": str(args.cloud),
        "id_label": cloud.id_label,
        "expr_label": cloud.expr_label,
        "dim": int(vec.size),
        "values": [float(v) for v in vec],
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text)
    return 0


def cmd_match(args) -> int:
    network, _ = load_network_checkpoint(args.checkpoint)
    emb_a = network.embed(load_cloud(args.cloud_a))
    emb_b = network.embed(load_cloud(args.cloud_b))
    dist = cosine_distance(emb_a, emb_b)
    print(json.dumps({
        "cloud_a": str(args.cloud_a),
        "cloud_b": str(args.cloud_b),
        "cosine_distance": dist,
    }, indent=2))
    return 0


# ----------------------------------------------------------------- import


def cmd_import_ply(args) -> int:
    nose_tip = None
    if args.nose_tip:
        parts = args.nose_tip.split(",")
        if len(parts) != 3:
            raise InvalidInput("--nose-tip expects x,y,z")
        nose_tip = np.array([float(v) for v in parts])
    cloud = import_ply(args.input, scale=args.scale, nose_tip=nose_tip,
                       nose_heuristic=args.nose_heuristic,
                       outlier_filter=args.outlier_filter)
    save_cloud(cloud, args.out)
    print(f"{args.input} -> {args.out} ({cloud.n_points} points"
          f"{', normals' if cloud.normals is not None else ''}"
          f"{', nose tip' if cloud.nose_tip is not None else ''})")
    return 0


# ----------------------------------------------------------------- bench


def cmd_bench(args) -> int:
    repeats = args.repeats
    if args.kernel == "suite":
        rows = benchmod.standard_suite(repeats, full_scale=args.full_scale)
    elif args.kernel == "fps":
        rows = benchmod.bench_fps(args.n, args.count, repeats)
    elif args.kernel == "dfps":
        rows = benchmod.bench_dfps(args.n, args.count, radius=args.radius, repeats=repeats)
    elif args.kernel == "ball_query":
        rows = benchmod.bench_ball_query(args.n, args.count, args.radius, args.k, repeats)
    elif args.kernel == "normals":
        rows = benchmod.bench_normals(args.n, args.k, repeats)
    elif args.kernel == "forward":
        rows = benchmod.bench_forward(args.n, repeats, arch=args.arch or "micro")
    else:
        raise InvalidInput(f"unknown kernel {args.kernel!r}")
    if args.out:
        benchmod.write_csv(rows, args.out)
    fmt = "{:<18} {:<10} {:>7} {:>6} {:>7} {:>4} {:>10} {:>12}"
    print(fmt.format("kernel", "impl", "n", "count", "radius", "k", "median_ms", "var_ms2"))
    for row in rows:
        print(fmt.format(row.kernel, row.implementation, row.n, row.count,
                         row.radius, row.k, f"{row.median_ms:.3f}",
                         f"{row.variance_ms2:.4f}"))
    return 0


# ----------------------------------------------------------------- parser


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pointface",
        description="Point-cloud face embedding pipeline: synthetic data "
                    "generation, training, and gallery/probe evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--seed", type=int, help="RNG seed override")

    p = sub.add_parser("generate", help="generate a labeled synthetic dataset")
    add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--model", help="morphable-model container file")
    p.add_argument("--toy-model", action="store_true",
                   help="procedurally create a toy model instead of loading one")
    p.add_argument("--toy-vertices", type=_positive_int, default=2000)
    p.add_argument("--toy-shape-dims", type=_positive_int, default=20)
    p.add_argument("--toy-expr-dims", type=_positive_int, default=20)
    p.add_argument("--identities", type=_positive_int)
    p.add_argument("--expressions", type=_positive_int)
    p.add_argument("--guided-pool", help="npz file with a 'betas' array for "
                                         "expression-guided generation")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("train", help="train and keep the checkpoint with the "
                                     "lowest verification loss")
    add_common(p)
    p.add_argument("--train", required=True, help="training dataset manifest")
    p.add_argument("--val", required=True, help="verification dataset manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--arch", choices=("full", "micro", "nano"))
    p.add_argument("--epochs", type=_positive_int)
    p.add_argument("--batch-size", dest="batch_size", type=_positive_int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--n0", type=_positive_int)
    p.add_argument("--resume", action="store_true",
                   help="continue from <out>/last.s3ck")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="gallery/probe evaluation of a checkpoint")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--gallery", required=True, help="gallery manifest")
    p.add_argument("--probe", required=True, help="probe manifest")
    p.add_argument("--gallery-expr", help="keep only this expression label in the gallery")
    p.add_argument("--probe-expr-not", help="drop this expression label from the probes")
    p.add_argument("--far", type=float, default=1e-3)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("embed", help="embed one cloud file")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cloud", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("match", help="cosine distance between two clouds")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cloud-a", dest="cloud_a", required=True)
    p.add_argument("--cloud-b", dest="cloud_b", required=True)
    p.set_defaults(fn=cmd_match)

    p = sub.add_parser("import-ply", help="convert a PLY file to the cloud container")
    add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=float, default=1.0,
                   help="multiply coordinates into millimeters")
    p.add_argument("--nose-tip", help="x,y,z in file units")
    p.add_argument("--nose-heuristic", action="store_true",
                   help="fall back to the max-z-after-centering heuristic")
    p.add_argument("--outlier-filter", action="store_true")
    p.set_defaults(fn=cmd_import_ply)

    p = sub.add_parser("bench", help="kernel timing table")
    add_common(p)
    p.add_argument("--kernel", default="suite",
                   choices=("suite", "fps", "dfps", "ball_query", "normals", "forward"))
    p.add_argument("--n", type=_positive_int, default=4096)
    p.add_argument("--count", type=_positive_int, default=512,
                   help="sample count / query centers")
    p.add_argument("--radius", type=float, default=8.0)
    p.add_argument("--k", type=_positive_int, default=16)
    p.add_argument("--repeats", type=_positive_int, default=10)
    p.add_argument("--arch", choices=("full", "micro"))
    p.add_argument("--full-scale", action="store_true")
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (InvalidInput, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PointfaceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
