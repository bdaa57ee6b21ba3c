"""Command-line entry point.

One binary, subcommand style; a JSON config file supplies defaults and
explicit flags win.  Every run writes a manifest capturing the resolved
configuration, seed and artifact paths, so a run can be reproduced from its
manifest alone (same device/precision).

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical
failure, 130 interrupted.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, evaluation, io, kernels
from .exceptions import NonFiniteLoss, SphereLocError
from .nn.model import EncoderConfig, ModelConfig, load_checkpoint
from .projection import project, save_panorama
from .splits import split_query_database
from .synthetic import TrajectorySpec, WorldParams, make_synthetic_world, save_world
from .training import TrainConfig, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ConfigError(Exception):
    pass


# --------------------------------------------------------------------------
# config plumbing
# --------------------------------------------------------------------------
def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    known = {"model", "train"}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config section {key!r}")
    return data


def _dataclass_from_dict(cls, data: dict, what: str):
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"unknown {what} config key {key!r}")
    return cls(**data)


def _model_config(data: dict, args) -> ModelConfig:
    data = dict(data)
    enc_keys = {"input_bandwidth", "layers", "batchnorm"}
    enc = {k: data.pop(k) for k in list(data) if k in enc_keys}
    if "layers" in enc:
        enc["layers"] = tuple(tuple(layer) for layer in enc["layers"])
    if getattr(args, "bandwidth", None) is not None:
        enc["input_bandwidth"] = args.bandwidth
    if getattr(args, "no_batchnorm", False):
        enc["batchnorm"] = False
    for key in data:
        if key not in {"attention", "clusters"}:
            raise ConfigError(f"unknown model config key {key!r}")
    encoder = _dataclass_from_dict(EncoderConfig, enc, "encoder")
    cfg = ModelConfig(encoder=encoder, attention=data.get("attention", True),
                      clusters=data.get("clusters", 32))
    if getattr(args, "no_attention", False):
        cfg = dataclasses.replace(cfg, attention=False)
    return cfg


def _train_config(data: dict, args) -> TrainConfig:
    data = dict(data)
    for flag in ("seed", "steps", "learning_rate"):
        value = getattr(args, flag, None)
        if value is not None:
            data[flag] = value
    try:
        return _dataclass_from_dict(TrainConfig, data, "train")
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _write_manifest(out_dir: Path, command: str, args: argparse.Namespace,
                    seed: int | None, artifacts: list[str], started: float,
                    status: str = "completed") -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = {k: v for k, v in vars(args).items()
                if k != "func" and not k.startswith("_")}
    manifest = {
        "command": command,
        "arguments": {k: str(v) if isinstance(v, Path) else v
                      for k, v in resolved.items()},
        "seed": seed,
        "artifacts": artifacts,
        "tool_version": __version__,
        "started_unix": started,
        "finished_unix": time.time(),
        "status": status,
    }
    (out_dir / f"{command}_manifest.json").write_text(json.dumps(manifest, indent=2))


def _load_frames(args) -> list:
    frames = io.load_dataset(args.data, format=args.format)
    return frames


def _split_from_args(args):
    params = {"success_threshold_m": args.threshold_m}
    if args.strategy == "keypose_rest":
        params["spacing_m"] = args.spacing_m
    elif args.strategy == "revisit":
        params["radius_m"] = args.revisit_radius_m
    elif args.strategy == "cross_recording":
        params["database_recording"] = args.database_recording
    return params


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------
def cmd_project(args) -> int:
    started = time.time()
    frames = _load_frames(args)
    if not frames:
        print("no frames found", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = []
    for frame in frames:
        pano = project(frame, args.max_range, args.bandwidth)
        path = out_dir / f"pano_{frame.frame_id:06d}.f32"
        save_panorama(pano, path)
        artifacts.append(str(path))
    _write_manifest(out_dir, "project", args, None, artifacts, started)
    print(f"projected {len(frames)} frames at bandwidth {args.bandwidth}")
    return EXIT_OK


def cmd_synth(args) -> int:
    started = time.time()
    traj = TrajectorySpec(radius_m=args.radius, frames_per_pass=args.frames_per_pass,
                          passes=args.passes, phases=tuple(args.phases),
                          reverse=tuple(bool(r) for r in args.reverse),
                          lateral_noise_m=args.lateral_noise)
    params = WorldParams(area_m=args.area, n_landmarks=args.landmarks,
                         trajectory=traj, max_range_m=args.max_range)
    frames = make_synthetic_world(args.seed, params)
    out_dir = Path(args.out)
    manifest_path = save_world(frames, out_dir, args.seed, params)
    _write_manifest(out_dir, "synth", args, args.seed,
                    [str(manifest_path)], started)
    print(f"wrote {len(frames)} frames to {out_dir}")
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.time()
    config = _load_config_file(args.config)
    model_cfg = _model_config(config.get("model", {}), args)
    train_cfg = _train_config(config.get("train", {}), args)
    frames = _load_frames(args)
    if not frames:
        print("no frames found", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out)
    result = train(frames, model_cfg, train_cfg, out_dir=out_dir)
    artifacts = [str(p) for p in result.checkpoints] + [str(out_dir / "loss_curve.csv")]
    _write_manifest(out_dir, "train", args, train_cfg.seed, artifacts, started)
    print(f"trained {train_cfg.steps} steps; "
          f"val loss {result.initial_val_loss:.4f} -> {result.final_val_loss:.4f}")
    return EXIT_OK


def cmd_index(args) -> int:
    started = time.time()
    model = load_checkpoint(args.checkpoint)
    frames = _load_frames(args)
    split = split_query_database(frames, args.strategy, **_split_from_args(args))
    db_frames, _ = evaluation.split_frames(frames, split)
    desc = evaluation.compute_descriptors(model, db_frames, args.max_range)
    index = evaluation.build_index(desc, [f.frame_id for f in db_frames],
                                   [f.translation for f in db_frames])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    evaluation.save_index(index, out)
    _write_manifest(out.parent, "index", args, None, [str(out)], started)
    print(f"indexed {index.size} frames (dim {index.dim}) -> {out}")
    return EXIT_OK


def cmd_query(args) -> int:
    started = time.time()
    model = load_checkpoint(args.checkpoint)
    index = evaluation.load_index(args.index)
    frames = _load_frames(args)
    by_id = {f.frame_id: f for f in frames}
    ids = args.frame_ids or sorted(set(by_id) - set(index.frame_ids.tolist()))
    targets = [by_id[i] for i in ids]
    desc = evaluation.compute_descriptors(model, targets, args.max_range)
    rows = []
    for frame, vec in zip(targets, desc):
        res = evaluation.query(index, vec, top_n=args.top_n, query_id=frame.frame_id)
        for rank, (db_id, dist) in enumerate(zip(res.db_ids, res.distances), 1):
            rows.append({"query_id": frame.frame_id, "rank": rank,
                         "db_id": int(db_id), "distance": float(dist)})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    evaluation.write_csv(rows, out_dir / "query_results.csv")
    _write_manifest(out_dir, "query", args, None,
                    [str(out_dir / "query_results.csv")], started)
    print(f"queried {len(targets)} frames against {index.size} database entries")
    return EXIT_OK


def cmd_eval(args) -> int:
    started = time.time()
    model = load_checkpoint(args.checkpoint)
    frames = _load_frames(args)
    split = split_query_database(frames, args.strategy, **_split_from_args(args))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = []

    summary, _ = evaluation.evaluate_split(model, frames, split, args.max_range)
    curve_rows = [{"n": i + 1, "recall": float(r)} for i, r in enumerate(summary.curve)]
    evaluation.write_csv(curve_rows, out_dir / "recall_curve.csv")
    artifacts.append(str(out_dir / "recall_curve.csv"))
    print(f"AR@1 {summary.ar1:.4f}  AR@1% {summary.ar1_percent:.4f} "
          f"(cutoff {summary.one_percent_cutoff}, threshold {summary.threshold_m} m)")

    if args.yaw_sweep:
        yaws = _parse_sweep(args.yaw_sweep)
        rows = evaluation.yaw_sweep_eval(model, frames, split, yaws,
                                         translation_noise_m=args.translation_noise,
                                         seed=args.seed or 0,
                                         max_range_m=args.max_range)
        evaluation.write_csv(rows, out_dir / "yaw_sweep.csv")
        artifacts.append(str(out_dir / "yaw_sweep.csv"))
        for row in rows:
            print(f"  yaw {row['yaw_deg']:6.1f} deg  AR@1 {row['ar1']:.4f}")
        if args.plot:
            _plot_yaw(rows, out_dir / "yaw_sweep.png")
            artifacts.append(str(out_dir / "yaw_sweep.png"))

    if args.snr:
        report = evaluation.snr_report(model, frames, args.activity_fraction,
                                       args.max_range)
        payload = {"n_total": report.n_total, "n_active": report.n_active,
                   "snr": report.snr, "degenerate": report.degenerate,
                   "histogram": report.histogram.tolist(),
                   "activity_min_fraction": report.activity_min_fraction}
        (out_dir / "snr.json").write_text(json.dumps(payload, indent=2))
        hist_rows = [{"centroid": k, "count": int(c)}
                     for k, c in enumerate(report.histogram)]
        evaluation.write_csv(hist_rows, out_dir / "assignment_histogram.csv")
        artifacts += [str(out_dir / "snr.json"),
                      str(out_dir / "assignment_histogram.csv")]
        if args.plot:
            _plot_histogram(report.histogram, out_dir / "assignment_histogram.png")
            artifacts.append(str(out_dir / "assignment_histogram.png"))
        print(f"  SNR {report.snr:.4f} ({report.n_active}/{report.n_total} active)")

    if args.ablation_table:
        config = _load_config_file(args.config)
        model_cfg = _model_config(config.get("model", {}), args)
        train_cfg = _train_config(config.get("train", {}), args)

        def train_fn(cfg):
            return train(frames, cfg, train_cfg).model

        rows = evaluation.run_ablation(frames, split, model_cfg, train_fn,
                                       args.max_range)
        evaluation.write_csv(rows, out_dir / "ablation.csv")
        artifacts.append(str(out_dir / "ablation.csv"))
        for row in rows:
            print(f"  bn={row['batchnorm']} att={row['attention']} "
                  f"AR@1 {row['ar1']:.4f} AR@1% {row['ar1_percent']:.4f}")

    if args.bench:
        by_id = {f.frame_id: f for f in frames}
        probe = by_id[split.query_ids[0]] if split.query_ids else frames[0]
        bench = evaluation.benchmark_runtime(model, probe.points, n_runs=args.n_runs,
                                             max_range_m=args.max_range)
        (out_dir / "bench.json").write_text(json.dumps(bench, indent=2))
        artifacts.append(str(out_dir / "bench.json"))
        print(f"  preprocess {bench['mean_preprocess_ms']:.3f} ms  "
              f"inference {bench['mean_inference_ms']:.3f} ms")

    if args.plot:
        _plot_recall(summary, out_dir / "recall_curve.png")
        artifacts.append(str(out_dir / "recall_curve.png"))
    _write_manifest(out_dir, "eval", args, args.seed, artifacts, started)
    return EXIT_OK


def cmd_snr(args) -> int:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.counts_file:
        counts = np.asarray(json.loads(Path(args.counts_file).read_text()))
        report = evaluation.snr_from_counts(counts, args.activity_fraction)
    else:
        if not args.checkpoint:
            print("snr needs --checkpoint or --counts-file", file=sys.stderr)
            return EXIT_USAGE
        model = load_checkpoint(args.checkpoint)
        frames = _load_frames(args)
        report = evaluation.snr_report(model, frames, args.activity_fraction,
                                       args.max_range)
    payload = {"n_total": report.n_total, "n_active": report.n_active,
               "snr": report.snr, "degenerate": report.degenerate,
               "histogram": report.histogram.tolist(),
               "activity_min_fraction": report.activity_min_fraction}
    (out_dir / "snr.json").write_text(json.dumps(payload, indent=2))
    _write_manifest(out_dir, "snr", args, None, [str(out_dir / "snr.json")], started)
    print(f"SNR {report.snr} ({report.n_active}/{report.n_total} active)")
    return EXIT_OK


def cmd_bench(args) -> int:
    started = time.time()
    model = load_checkpoint(args.checkpoint)
    frames = _load_frames(args)
    if not frames:
        print("no frames found", file=sys.stderr)
        return EXIT_USAGE
    points = frames[0].points
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = {}
    backends = ["numpy", "cython"] if (args.compare_backends and kernels.HAVE_COMPILED) \
        else [None]
    for backend in backends:
        label = backend or kernels.active_backend()
        results[label] = evaluation.benchmark_runtime(
            model, points, n_runs=args.n_runs, max_range_m=args.max_range,
            backend=backend)
        print(f"[{label}] preprocess {results[label]['mean_preprocess_ms']:.3f} ms  "
              f"inference {results[label]['mean_inference_ms']:.3f} ms  "
              f"peak {results[label]['peak_memory_mb']:.0f} MB")
    (out_dir / "bench.json").write_text(json.dumps(results, indent=2))
    _write_manifest(out_dir, "bench", args, None, [str(out_dir / "bench.json")], started)
    return EXIT_OK


def _parse_sweep(spec: str) -> list[float]:
    try:
        start, step, stop = (float(v) for v in spec.split(":"))
    except ValueError as exc:
        raise ConfigError(f"bad sweep spec {spec!r}; expected start:step:stop") from exc
    if step <= 0:
        raise ConfigError("sweep step must be positive")
    return list(np.arange(start, stop + step / 2, step))


def _plot_recall(summary, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots()
    ax.plot(np.arange(1, len(summary.curve) + 1), 100 * summary.curve, marker="o")
    ax.set_xlabel("N")
    ax.set_ylabel("Recall@N (%)")
    ax.set_ylim(0, 101)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_yaw(rows, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots()
    ax.plot([r["yaw_deg"] for r in rows], [100 * r["ar1"] for r in rows], marker="o")
    ax.set_xlabel("yaw (deg)")
    ax.set_ylabel("AR@1 (%)")
    ax.set_ylim(0, 101)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_histogram(counts, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots()
    ax.bar(np.arange(len(counts)), counts)
    ax.set_xlabel("centroid")
    ax.set_ylabel("argmax assignments")
    fig.savefig(path, dpi=120)
    plt.close(fig)


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------
def _add_data_args(p, with_split: bool = False):
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--format", default="npz", choices=list(io.FORMATS))
    p.add_argument("--max-range", type=float, default=50.0, dest="max_range")
    if with_split:
        p.add_argument("--strategy", default="cross_recording",
                       choices=["keypose_rest", "revisit", "cross_recording"])
        p.add_argument("--spacing-m", type=float, default=5.0, dest="spacing_m")
        p.add_argument("--revisit-radius-m", type=float, default=3.0,
                       dest="revisit_radius_m")
        p.add_argument("--database-recording", type=int, default=0,
                       dest="database_recording")
        p.add_argument("--threshold-m", type=float, default=5.0, dest="threshold_m")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sphereloc",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="batch-project submaps to panoramas")
    _add_data_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--bandwidth", type=int, default=32)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("synth", help="generate a deterministic synthetic world")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--area", type=float, default=160.0)
    p.add_argument("--landmarks", type=int, default=60)
    p.add_argument("--radius", type=float, default=64.0)
    p.add_argument("--frames-per-pass", type=int, default=200, dest="frames_per_pass")
    p.add_argument("--passes", type=int, default=2)
    p.add_argument("--phases", type=float, nargs="*", default=[0.0, 0.5])
    p.add_argument("--reverse", type=int, nargs="*", default=[0, 0],
                   help="per-pass flags: 1 reverses travel direction")
    p.add_argument("--lateral-noise", type=float, default=0.0, dest="lateral_noise")
    p.add_argument("--max-range", type=float, default=50.0, dest="max_range")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a descriptor model")
    _add_data_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None, dest="learning_rate")
    p.add_argument("--bandwidth", type=int, default=None)
    p.add_argument("--no-attention", action="store_true", dest="no_attention")
    p.add_argument("--no-batchnorm", action="store_true", dest="no_batchnorm")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("index", help="build a database index from a split")
    _add_data_args(p, with_split=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="rank database entries for query frames")
    _add_data_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--frame-ids", type=int, nargs="*", default=None, dest="frame_ids")
    p.add_argument("--top-n", type=int, default=25, dest="top_n")
    p.add_argument("--out", default="sphereloc_query")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="retrieval metrics, sweeps and diagnostics")
    _add_data_args(p, with_split=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--yaw-sweep", default=None, dest="yaw_sweep",
                   help="start:step:stop in degrees, e.g. 0:30:180")
    p.add_argument("--translation-noise", type=float, default=1.0,
                   dest="translation_noise")
    p.add_argument("--snr", action="store_true")
    p.add_argument("--activity-fraction", type=float, default=0.01,
                   dest="activity_fraction")
    p.add_argument("--ablation-table", action="store_true", dest="ablation_table")
    p.add_argument("--bench", action="store_true")
    p.add_argument("--n-runs", type=int, default=500, dest="n_runs")
    p.add_argument("--plot", action="store_true")
    p.add_argument("--no-attention", action="store_true", dest="no_attention")
    p.add_argument("--no-batchnorm", action="store_true", dest="no_batchnorm")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("snr", help="active-centroid ratio from a model or counts")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--format", default="npz", choices=list(io.FORMATS))
    p.add_argument("--max-range", type=float, default=50.0, dest="max_range")
    p.add_argument("--counts-file", default=None, dest="counts_file",
                   help="JSON list of per-centroid argmax counts")
    p.add_argument("--activity-fraction", type=float, default=0.01,
                   dest="activity_fraction")
    p.add_argument("--out", default="sphereloc_snr")
    p.set_defaults(func=cmd_snr)

    p = sub.add_parser("bench", help="runtime/memory benchmark")
    _add_data_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n-runs", type=int, default=500, dest="n_runs")
    p.add_argument("--compare-backends", action="store_true", dest="compare_backends")
    p.add_argument("--out", default="sphereloc_bench")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        out = getattr(args, "out", None)
        if out:
            _write_manifest(Path(out), args.command, args, getattr(args, "seed", None),
                            [], time.time(), status="interrupted")
        return 130
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteLoss as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SphereLocError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
