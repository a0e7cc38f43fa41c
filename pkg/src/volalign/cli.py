"""Command-line interface: align, synth, bench and distance subcommands.

Exit codes: 0 success, 2 input/argument error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import pipeline, so3, volume, wemd
from .exceptions import ConditioningError, EvaluationError, VolalignError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

SNR_CLEAN = float("inf")


def _read_config_file(path) -> dict:
    """Flat key=value file mirroring the flags; '#' starts a comment."""
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {line!r}")
            key, val = line.split("=", 1)
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser):
    """Merge config-file values under explicit flags."""
    if not getattr(args, "config", None):
        return
    file_values = _read_config_file(args.config)
    defaults = {a.dest: a.default for a in parser._actions}
    for key, raw in file_values.items():
        if key not in defaults:
            raise ValueError(f"unknown config key {key!r}")
        # flags that were left at their default are overridden by the file
        if getattr(args, key) == defaults[key]:
            current = defaults[key]
            if isinstance(current, bool):
                setattr(args, key, raw.lower() in ("1", "true", "yes", "on"))
            elif isinstance(current, int):
                setattr(args, key, int(raw))
            elif isinstance(current, float):
                setattr(args, key, float(raw))
            else:
                setattr(args, key, raw)


def _default_seed(value) -> int:
    if value is not None:
        return value
    return int(os.environ.get("VOLALIGN_SEED", "0"))


def _align_options(args) -> pipeline.AlignOptions:
    return pipeline.AlignOptions(
        downsample=args.downsample,
        iterations=args.iters,
        loss_kind=args.loss,
        lengthscale=args.lengthscale,
        refine=not args.no_refine,
        handedness=args.handedness,
        wavelet_levels=args.wavelet_levels,
        com_threshold=args.threshold,
        seed=_default_seed(args.seed),
    )


def _add_align_flags(p: argparse.ArgumentParser):
    p.add_argument("--downsample", type=int, default=32)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--loss", choices=["wemd", "l2"], default="wemd")
    p.add_argument("--lengthscale", type=float, default=None)
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--handedness", action="store_true")
    p.add_argument("--wavelet-levels", type=int, default=None)
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="key=value config file")


def cmd_align(args) -> int:
    v1 = volume.load_mrc(args.volume1)
    v2 = volume.load_mrc(args.volume2)
    truth_rot = truth_t = None
    if args.truth:
        with open(args.truth) as fh:
            truth = json.load(fh)
        truth_rot = np.array(truth["rotation"]).reshape(3, 3)
        truth_t = np.array(truth["translation"])
    report = pipeline.align_volumes(
        v1, v2, _align_options(args), true_rotation=truth_rot, true_translation=truth_t
    )
    out = args.out or "alignment_report.json"
    with open(out, "w") as fh:
        fh.write(report.to_json(indent=2))
        fh.write("\n")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    seed = _default_seed(args.seed)
    spec = pipeline.reference_spec(args.side)
    v1, v2, truth = pipeline.make_test_pair(
        spec,
        seed,
        shift_scale=args.shift_scale,
        snr=args.snr if args.snr is not None else SNR_CLEAN,
        reflected=args.reflect,
    )
    volume.save_mrc(v1, args.out_v1)
    volume.save_mrc(v2, args.out_v2)
    with open(args.out_truth, "w") as fh:
        json.dump(truth, fh, indent=2)
        fh.write("\n")
    print(f"wrote {args.out_v1}, {args.out_v2}, {args.out_truth}")
    return EXIT_OK


def run_bench_trial(task: dict) -> dict:
    """One bench trial; isolated so a worker pool can map over tasks."""
    spec = pipeline.reference_spec(task["side"])
    v1, v2, truth = pipeline.make_test_pair(
        spec, task["seed"], shift_scale=task["shift_scale"], snr=task["snr"]
    )
    opts = pipeline.AlignOptions(
        downsample=task["downsample"],
        iterations=task["iters"],
        loss_kind=task["loss"],
        seed=task["seed"],
    )
    t0 = time.perf_counter()
    report = pipeline.align_volumes(
        v1,
        v2,
        opts,
        true_rotation=np.array(truth["rotation"]).reshape(3, 3),
        true_translation=np.array(truth["translation"]),
    )
    return {
        "seed": task["seed"],
        "loss": task["loss"],
        "L0": task["downsample"],
        "T": task["iters"],
        "snr": task["snr"],
        "error_deg_pre": report.error_deg,
        "error_deg_post": report.refined_error_deg,
        "translation_error_voxels": report.translation_error_voxels,
        "seconds": time.perf_counter() - t0,
        "failed": False,
    }


def cmd_bench(args) -> int:
    losses = args.loss.split(",") if args.loss else ["wemd"]
    snrs = [float(s) for s in args.snr.split(",")] if args.snr else [SNR_CLEAN]
    downsamples = [int(s) for s in args.downsample.split(",")]
    tasks = [
        {
            "seed": base_seed + trial,
            "loss": loss,
            "downsample": L0,
            "iters": args.iters,
            "snr": snr,
            "side": args.side,
            "shift_scale": args.shift_scale,
        }
        for loss in losses
        for L0 in downsamples
        for snr in snrs
        for base_seed in [_default_seed(args.seed)]
        for trial in range(args.trials)
    ]
    if not tasks:
        print("empty trial matrix", file=sys.stderr)
        return EXIT_INPUT

    rows = []
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for task, row in zip(tasks, pool.map(_safe_trial, tasks)):
                rows.append(row)
    else:
        rows = [_safe_trial(t) for t in tasks]

    fieldnames = [
        "seed", "loss", "L0", "T", "snr", "error_deg_pre", "error_deg_post",
        "translation_error_voxels", "seconds", "failed",
    ]
    csv_path = args.out + ".csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)

    summary = _summarize(rows)
    with open(args.out + "_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(f"wrote {csv_path} and {args.out}_summary.json")
    ok_rows = [r for r in rows if not r["failed"]]
    return EXIT_OK if ok_rows else EXIT_NUMERIC


def _safe_trial(task: dict) -> dict:
    try:
        return run_bench_trial(task)
    except VolalignError:
        return {
            "seed": task["seed"], "loss": task["loss"], "L0": task["downsample"],
            "T": task["iters"], "snr": task["snr"], "error_deg_pre": None,
            "error_deg_post": None, "translation_error_voxels": None,
            "seconds": None, "failed": True,
        }


def _summarize(rows: list[dict]) -> dict:
    cells = {}
    for row in rows:
        key = f"loss={row['loss']},L0={row['L0']},T={row['T']},snr={row['snr']}"
        cells.setdefault(key, []).append(row)
    summary = {}
    for key, cell_rows in cells.items():
        ok = [r for r in cell_rows if not r["failed"]]
        entry = {"trials": len(cell_rows), "failed": len(cell_rows) - len(ok)}
        for col in ("error_deg_pre", "error_deg_post", "seconds"):
            vals = [r[col] for r in ok if r[col] is not None]
            if vals:
                q1, med, q3 = np.percentile(vals, [25, 50, 75])
                entry[col] = {"median": float(med), "q1": float(q1), "q3": float(q3)}
        summary[key] = entry
    return summary


def cmd_distance(args) -> int:
    v1 = volume.load_mrc(args.volume1)
    v2 = volume.load_mrc(args.volume2)
    if args.kind == "wemd":
        value = wemd.wemd_distance(v1, v2, args.wavelet_levels)
    else:
        value = volume.l2_distance(v1, v2)
    print(f"{value:.12g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volalign",
        description="Rigid alignment of 3D density maps via Bayesian optimization "
        "of a wavelet EMD loss.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", help="align two MRC volumes")
    p.add_argument("volume1")
    p.add_argument("volume2")
    _add_align_flags(p)
    p.add_argument("--truth", default=None, help="ground-truth JSON for error reporting")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_align, _subparser=p)

    p = sub.add_parser("synth", help="generate a synthetic test pair")
    p.add_argument("--side", type=int, default=64)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--snr", type=float, default=None)
    p.add_argument("--shift-scale", type=float, default=0.0)
    p.add_argument("--reflect", action="store_true")
    p.add_argument("--out-v1", default="v1.mrc")
    p.add_argument("--out-v2", default="v2.mrc")
    p.add_argument("--out-truth", default="truth.json")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="run the trial matrix and summarize errors")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--loss", default="wemd", help="comma-separated: wemd,l2")
    p.add_argument("--downsample", default="32", help="comma-separated L0 values")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--snr", default=None, help="comma-separated SNR values")
    p.add_argument("--side", type=int, default=64)
    p.add_argument("--shift-scale", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", default="bench")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("distance", help="print the distance between two volumes")
    p.add_argument("volume1")
    p.add_argument("volume2")
    p.add_argument("--kind", choices=["wemd", "l2"], default="wemd")
    p.add_argument("--wavelet-levels", type=int, default=None)
    p.set_defaults(func=cmd_distance)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "config", None):
            _apply_config(args, args._subparser)
        return args.func(args)
    except (ConditioningError, EvaluationError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (VolalignError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
