"""Command-line entry point: synth, check, train, eval, experiment, report.

Anything that affects results lives in JSON config files; flags only select
files and modes. Exit codes: 0 success, 2 usage, 3 data error, 4 training
divergence, 1 anything else. Logs go to stderr with severity prefixes.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset, experiment, ingest, metrics, neural, synth

log = logging.getLogger("stepwave")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

_DATA_ERRORS = (
    ingest.IngestError,
    dataset.DatasetError,
    metrics.MetricsError,
    synth.InvalidProfile,
    experiment.TooFewParticipants,
    experiment.ReportError,
    neural.IoFailure,
    neural.CorruptCheckpoint,
    FileNotFoundError,
    json.JSONDecodeError,
    KeyError,
)


def _cmd_synth(args: argparse.Namespace) -> int:
    if args.profiles:
        spec = synth.load_cohort_spec(args.profiles)
    else:
        spec = synth.default_cohort_spec(
            group=ingest.WalkerGroup(args.group),
            n_participants=args.participants,
            paths_per_participant=args.paths,
            duration_s=args.duration,
            sample_rate_hz=args.sample_rate,
            seed=args.seed,
        )
    pairs = synth.generate_cohort(spec, args.out)
    print(f"wrote {len(pairs)} walks to {args.out}")
    return EXIT_OK


def _cmd_check(args: argparse.Namespace) -> int:
    pairs = ingest.load_dataset_dir(args.data, timestamp_column=args.timestamp_column)
    total_slices = 0
    total_steps = 0
    total_seconds = 0.0
    for seq, walk in pairs:
        slices = ingest.extract_usable_spans(walk, seq)
        seconds = sum(s.span[1] - s.span[0] for s in slices)
        steps = sum(len(s.steps) for s in slices)
        total_slices += len(slices)
        total_steps += steps
        total_seconds += seconds
        print(
            f"{walk.participant_id}/{walk.path_id} [{walk.walker_group.value}]: "
            f"{len(slices)} usable slice(s), {steps} steps, {seconds:.1f}s usable"
        )
    print(
        f"total: {len(pairs)} walks, {total_slices} slices, "
        f"{total_steps} steps, {total_seconds:.1f}s usable"
    )
    return EXIT_OK


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = experiment.load_experiment_config(args.config)
    data = experiment.load_group(
        cfg.dataset_dir, cfg.group, cfg.train.timesteps, cfg.timestamp_column
    )
    model, stats, trace = experiment.train_all(data, cfg)
    neural.save_checkpoint(
        args.out,
        model,
        step=cfg.train.training_steps,
        seed=cfg.train.seed,
        extra={
            "norm_mean": stats.mean.tolist(),
            "norm_std": stats.std.tolist(),
            "timesteps": cfg.train.timesteps,
            "group": cfg.group.value,
        },
    )
    print(f"trained {cfg.train.training_steps} steps, final loss {trace[-1]:.6f}; saved {args.out}")
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg = experiment.load_experiment_config(args.config)
    bundle = neural.load_checkpoint(args.model)
    if not bundle.extra or "norm_mean" not in bundle.extra:
        raise neural.CorruptCheckpoint("checkpoint lacks normalization statistics")
    stats = dataset.NormStats(
        mean=np.asarray(bundle.extra["norm_mean"], dtype=np.float64),
        std=np.asarray(bundle.extra["norm_std"], dtype=np.float64),
    )
    timesteps = int(bundle.extra.get("timesteps", cfg.train.timesteps))
    data = experiment.load_group(cfg.dataset_dir, cfg.group, timesteps, cfg.timestamp_column)
    report = experiment.evaluate_slices(
        bundle.model, data.slices, stats, timesteps, cfg.postprocess, cfg.boundary_mode
    )
    payload = {
        "group": cfg.group.value,
        "model": str(args.model),
        "report": report.to_dict(),
    }
    experiment.dump_json(payload, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_experiment(args: argparse.Namespace) -> int:
    cfg = experiment.load_experiment_config(args.config)
    result = experiment.run_experiment(cfg)
    out_dir = Path(cfg.out_dir)
    files = experiment.render_report(result, "json", out_dir)
    files += experiment.render_report(result, "table", out_dir)
    for path in files:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    result = json.loads(Path(args.input).read_text())
    if "report" in result and "protocol" not in result:
        raise experiment.ReportError("input is a single-model eval report, not an experiment result")
    files = experiment.render_report(result, args.format, args.out)
    for path in files:
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stepwave",
        description="LSTM step counting pipeline: synthesize, ingest, train, evaluate, report.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--profiles", help="cohort spec JSON (overrides the preset flags)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--group", default="sighted", choices=[g.value for g in ingest.WalkerGroup])
    p.add_argument("--participants", type=int, default=5)
    p.add_argument("--paths", type=int, default=6)
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--sample-rate", type=float, default=synth.DEFAULT_SAMPLE_RATE)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("check", help="parse a dataset and print usable-span statistics")
    p.add_argument("--data", required=True)
    p.add_argument("--timestamp-column", default=ingest.DEFAULT_TIMESTAMP_COLUMN)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("train", help="train one model on a whole group")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("experiment", help="run the full protocol from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("report", help="re-render a result JSON as table or plotdata")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=["json", "table", "plotdata"], default="table")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except neural.DivergedTraining as exc:
        log.error("%s", exc)
        return EXIT_DIVERGED
    except _DATA_ERRORS as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic
        log.error("unexpected failure: %s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
