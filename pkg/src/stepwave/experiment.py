"""Protocol orchestration: per-group models, mixed k-fold CV, leave-one-person-out.

A run loads one walker group's recordings, windows the usable slices, trains
one model per fold/rotation, scores whole slices with the interval metrics,
and emits a result dict that serializes to byte-stable JSON (same config +
seed + dataset => identical bytes).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ingest
from .dataset import (
    NormStats,
    SingleParticipant,
    SplitPlan,
    WindowSet,
    build_window_set,
    fit_norm_stats,
    label_slice,
    normalize_inputs,
    split_leave_one_out,
    split_mixed_kfold,
)
from .ingest import UsableSlice, WalkerGroup
from .metrics import BoundaryMode, SegmentEval, StepErrorReport, METRIC_NAMES, aggregate
from .neural import (
    LstmModel,
    TrainConfig,
    cast_model,
    init_model,
    lstm_forward,
    predict_slice,
    train,
)
from .postprocess import PostprocessConfig, binarize, predicted_steps, signal_accuracy

log = logging.getLogger(__name__)


class TooFewParticipants(Exception):
    pass


class ReportError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_dir: str
    group: WalkerGroup = WalkerGroup.SIGHTED
    protocol: str = "mixed"  # "mixed" | "leave_one_out"
    k: int = 10
    held_test: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    postprocess: PostprocessConfig = field(default_factory=PostprocessConfig)
    boundary_mode: BoundaryMode = "extend"
    seed: int = 0
    out_dir: str = "runs"
    timestamp_column: str = ingest.DEFAULT_TIMESTAMP_COLUMN

    def to_dict(self) -> dict:
        return {
            "dataset_dir": self.dataset_dir,
            "group": self.group.value,
            "protocol": self.protocol,
            "k": self.k,
            "held_test": self.held_test,
            "train": self.train.to_dict(),
            "postprocess": {
                "threshold": self.postprocess.threshold,
                "min_dwell_s": self.postprocess.min_dwell_s,
            },
            "boundary_mode": self.boundary_mode,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "timestamp_column": self.timestamp_column,
        }


def load_experiment_config(path: Path | str) -> ExperimentConfig:
    data = json.loads(Path(path).read_text())
    train_cfg = TrainConfig.from_dict(data.get("train", {}))
    post = data.get("postprocess", {})
    return ExperimentConfig(
        dataset_dir=data["dataset_dir"],
        group=WalkerGroup(data.get("group", "sighted")),
        protocol=data.get("protocol", "mixed"),
        k=int(data.get("k", 10)),
        held_test=data.get("held_test"),
        train=train_cfg,
        postprocess=PostprocessConfig(
            threshold=float(post.get("threshold", 0.5)),
            min_dwell_s=float(post.get("min_dwell_s", 0.0)),
        ),
        boundary_mode=data.get("boundary_mode", "extend"),
        seed=int(data.get("seed", 0)),
        out_dir=data.get("out_dir", "runs"),
        timestamp_column=data.get("timestamp_column", ingest.DEFAULT_TIMESTAMP_COLUMN),
    )


@dataclass
class GroupData:
    """One walker group's usable slices and their windowed examples."""

    group: WalkerGroup
    slices: list[UsableSlice]
    windows: WindowSet

    @property
    def participants(self) -> list[str]:
        return sorted({s.participant_id for s in self.slices})


def load_group(
    dataset_dir: Path | str,
    group: WalkerGroup,
    timesteps: int,
    timestamp_column: str = ingest.DEFAULT_TIMESTAMP_COLUMN,
) -> GroupData:
    """Load one group's walks only; other groups' sensor files are never read."""
    root = Path(dataset_dir)
    slices: list[UsableSlice] = []
    n_walks = 0
    for xml_path in sorted(root.glob("*.xml")):
        walk = ingest.parse_ground_truth_xml(xml_path.read_bytes())
        if walk.walker_group is not group:
            continue
        csv_path = xml_path.with_suffix(".csv")
        if not csv_path.exists():
            log.warning("no CSV next to %s, skipping", xml_path.name)
            continue
        seq = ingest.parse_sensor_csv(
            csv_path.read_bytes(),
            participant_id=walk.participant_id,
            path_id=walk.path_id,
            timestamp_column=timestamp_column,
        )
        slices.extend(ingest.extract_usable_spans(walk, seq))
        n_walks += 1
    if not slices:
        raise ingest.NoUsableData(f"no usable {group.value} walks under {root}")
    log.info("group %s: %d walks, %d usable slices", group.value, n_walks, len(slices))
    return GroupData(group=group, slices=slices, windows=build_window_set(slices, timesteps))


def _fold_seed(base_seed: int, index: int) -> int:
    # Stable derived seed per fold/rotation, independent of execution order.
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def _train_on(
    data: GroupData, train_idx: np.ndarray, config: TrainConfig
) -> tuple[LstmModel, NormStats, list[float]]:
    stats = fit_norm_stats(data.windows.inputs[train_idx])
    x = normalize_inputs(data.windows.inputs[train_idx], stats)
    y = data.windows.targets[train_idx]
    model = init_model(
        input_size=x.shape[-1],
        hidden_sizes=config.hidden_sizes,
        dropout_rate=config.dropout_rate,
        seed=config.seed,
    )
    result = train(model, x, y, config)
    return model, stats, result.loss_trace


def evaluate_slices(
    model: LstmModel,
    slices: Sequence[UsableSlice],
    stats: NormStats,
    timesteps: int,
    post: PostprocessConfig,
    boundary: BoundaryMode = "extend",
) -> StepErrorReport:
    """Score whole slices: predict the full signal, extract steps, aggregate."""
    evals = []
    accuracies = []
    for slc in slices:
        truth = label_slice(slc)
        raw = predict_slice(model, normalize_inputs(slc.channels, stats), timesteps, float32=True)
        bits = binarize(raw, post)
        pred_times = predicted_steps(slc.times, raw, post)
        evals.append(
            SegmentEval(
                segment_id=slc.slice_id,
                ground_truth=slc.step_times,
                predicted=pred_times,
                span=slc.span,
            )
        )
        accuracies.append((signal_accuracy(bits, truth.values), float(len(slc))))
    return aggregate(evals, accuracies, boundary)


def _window_accuracy(
    model: LstmModel,
    data: GroupData,
    idx: np.ndarray,
    stats: NormStats,
    post: PostprocessConfig,
    chunk: int = 2048,
) -> float:
    """Binary accuracy of last-output predictions on the given windows."""
    fast = cast_model(model, np.float32)
    hits = 0
    for lo in range(0, len(idx), chunk):
        sel = idx[lo : lo + chunk]
        x = normalize_inputs(data.windows.inputs[sel], stats).astype(np.float32)
        outputs, _ = lstm_forward(fast, x, want_cache=False)
        bits = binarize(outputs[:, -1], post)
        hits += int(np.sum(bits == data.windows.targets[sel][:, -1].astype(np.int8)))
    return hits / len(idx)


def run_mixed(data: GroupData, config: ExperimentConfig) -> dict:
    """Mixed protocol: shuffle windows, k-fold CV, one model per fold.

    Interval metrics are computed over the full slices with each fold's
    model (window-level mixing leaves no contiguous test span, so the fold's
    generalization shows up through its trained model); the reported signal
    accuracy is restricted to the fold's test windows.
    """
    plans = split_mixed_kfold(data.windows, config.k, config.seed)
    folds = []
    for i, plan in enumerate(plans):
        fold_cfg = replace(config.train, seed=_fold_seed(config.train.seed, i))
        try:
            model, stats, trace = _train_on(data, plan.train, fold_cfg)
            report = evaluate_slices(
                model, data.slices, stats, config.train.timesteps, config.postprocess,
                config.boundary_mode,
            )
            test_acc = _window_accuracy(model, data, plan.test, stats, config.postprocess)
            entry = {
                "fold": plan.name,
                "report": report.to_dict(),
                "test_window_accuracy": test_acc,
                "test_windows": int(len(plan.test)),
                "loss_trace": trace,
            }
        except Exception as exc:  # keep remaining folds running
            log.error("fold %s failed: %s", plan.name, exc)
            entry = {"fold": plan.name, "error": f"{type(exc).__name__}: {exc}"}
        folds.append(entry)
    good = [f for f in folds if "report" in f]
    if not good:
        raise ReportError("every fold failed")
    result = {
        "protocol": "mixed",
        "group": data.group.value,
        "config": config.to_dict(),
        "folds": folds,
        "mean": _mean_of([f["report"] for f in good]),
    }
    return result


def run_leave_one_out(data: GroupData, config: ExperimentConfig) -> dict:
    """Leave-one-person-out protocol.

    With ``held_test`` set, the test participant is fixed and the validation
    participant rotates over the remaining ones (train = the rest). Without
    it, the test participant itself rotates over all participants and no
    validation split is held (the whole-group generalization check).
    """
    participants = data.participants
    if len(participants) < 2:
        raise SingleParticipant(f"group {data.group.value} has {len(participants)} participant(s)")

    rotations: list[tuple[str, str | None]] = []
    if config.held_test is not None:
        if config.held_test not in participants:
            raise SingleParticipant(f"unknown held-out participant {config.held_test!r}")
        pool = [p for p in participants if p != config.held_test]
        if len(pool) < 2:
            raise TooFewParticipants(
                "validation rotation needs at least 3 participants (train/valid/test)"
            )
        rotations = [(config.held_test, valid) for valid in pool]
    else:
        rotations = [(test, None) for test in participants]

    slices_by_participant: dict[str, list[UsableSlice]] = {}
    for slc in data.slices:
        slices_by_participant.setdefault(slc.participant_id, []).append(slc)

    entries = []
    for i, (test_p, valid_p) in enumerate(rotations):
        plan = split_leave_one_out(data.windows, test_p, valid_p)
        fold_cfg = replace(config.train, seed=_fold_seed(config.train.seed, i))
        try:
            model, stats, trace = _train_on(data, plan.train, fold_cfg)
            test_report = evaluate_slices(
                model, slices_by_participant[test_p], stats,
                config.train.timesteps, config.postprocess, config.boundary_mode,
            )
            entry = {
                "rotation": f"cv{i}",
                "test_participant": test_p,
                "valid_participant": valid_p,
                "test": test_report.to_dict(),
                "loss_trace": trace,
            }
            if valid_p is not None:
                valid_report = evaluate_slices(
                    model, slices_by_participant[valid_p], stats,
                    config.train.timesteps, config.postprocess, config.boundary_mode,
                )
                entry["valid"] = valid_report.to_dict()
        except Exception as exc:
            log.error("rotation %d (test=%s valid=%s) failed: %s", i, test_p, valid_p, exc)
            entry = {
                "rotation": f"cv{i}",
                "test_participant": test_p,
                "valid_participant": valid_p,
                "error": f"{type(exc).__name__}: {exc}",
            }
        entries.append(entry)

    good = [e for e in entries if "test" in e]
    if not good:
        raise ReportError("every rotation failed")
    result = {
        "protocol": "leave_one_out",
        "group": data.group.value,
        "config": config.to_dict(),
        "rotations": entries,
        "mean": {
            "test": _mean_of([e["test"] for e in good]),
            "valid": _mean_of([e["valid"] for e in good if "valid" in e]) or None,
        },
    }
    return result


def _mean_of(reports: list[dict]) -> dict | None:
    if not reports:
        return None
    out: dict = {"signal_accuracy": float(np.mean([r["signal_accuracy"] for r in reports]))}
    for metric in METRIC_NAMES:
        under = float(np.mean([r[metric]["undercount_rate"] for r in reports]))
        over = float(np.mean([r[metric]["overcount_rate"] for r in reports]))
        out[metric] = {
            "undercount_rate": under,
            "overcount_rate": over,
            "combined_rate": under + over,
        }
    return out


def select_best_config(results: Sequence[dict]) -> int:
    """Index of the leave-one-out result with the lowest mean validation
    metric-3 combined error (the concrete model-selection rule)."""
    best = None
    best_idx = -1
    for i, result in enumerate(results):
        mean_valid = result.get("mean", {}).get("valid")
        if not mean_valid:
            continue
        score = mean_valid["metric3"]["combined_rate"]
        if best is None or score < best:
            best = score
            best_idx = i
    if best_idx < 0:
        raise ReportError("no result carries validation reports")
    return best_idx


def run_experiment(config: ExperimentConfig) -> dict:
    data = load_group(
        config.dataset_dir, config.group, config.train.timesteps, config.timestamp_column
    )
    if config.protocol == "mixed":
        return run_mixed(data, config)
    if config.protocol == "leave_one_out":
        return run_leave_one_out(data, config)
    raise ValueError(f"unknown protocol {config.protocol!r}")


def dump_json(obj: dict, path: Path | str) -> Path:
    """Canonical JSON dump: sorted keys, fixed separators, trailing newline."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")
    return path


def _fmt_pct(rate: float) -> str:
    return f"{100.0 * rate:.2f}"


def _report_columns(result: dict) -> list[tuple[str, dict]]:
    if result["protocol"] == "mixed":
        cols = [(f["fold"], f["report"]) for f in result["folds"] if "report" in f]
        cols.append(("mean", result["mean"]))
        return cols
    cols = []
    for e in result["rotations"]:
        if "valid" in e:
            cols.append((f"{e['rotation']} valid", e["valid"]))
        if "test" in e:
            cols.append((f"{e['rotation']} test", e["test"]))
    if result["mean"].get("valid"):
        cols.append(("mean valid", result["mean"]["valid"]))
    cols.append(("mean test", result["mean"]["test"]))
    return cols


def render_table(result: dict) -> str:
    """Aligned text table: metric x {undercount, overcount} rows, fold columns."""
    cols = _report_columns(result)
    header = ["error(%)", ""] + [name for name, _ in cols]
    rows = [header]
    for metric in METRIC_NAMES:
        for kind, key in (("undercount", "undercount_rate"), ("overcount", "overcount_rate")):
            row = [metric if kind == "undercount" else "", kind]
            row += [_fmt_pct(rep[metric][key]) for _, rep in cols]
            rows.append(row)
    acc_row = ["accuracy", ""]
    acc_row += [
        f"{100.0 * rep['signal_accuracy']:.2f}" if rep.get("signal_accuracy") is not None else "-"
        for _, rep in cols
    ]
    rows.append(acc_row)

    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def render_report(result: dict, fmt: str, out_dir: Path | str, stem: str = "report") -> list[Path]:
    """Write the result in one of the output formats; returns the files written."""
    if not result:
        raise ReportError("nothing to render")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if fmt == "json":
        written.append(dump_json(result, out_dir / f"{stem}.json"))
    elif fmt == "table":
        path = out_dir / f"{stem}.txt"
        path.write_text(render_table(result))
        written.append(path)
    elif fmt == "plotdata":
        metrics_path = out_dir / f"{stem}_metrics.csv"
        with open(metrics_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fold", "metric", "undercount_rate", "overcount_rate"])
            for name, rep in _report_columns(result):
                for metric in METRIC_NAMES:
                    writer.writerow(
                        [name, metric, repr(rep[metric]["undercount_rate"]),
                         repr(rep[metric]["overcount_rate"])]
                    )
        written.append(metrics_path)
        loss_path = out_dir / f"{stem}_loss.csv"
        entries = result.get("folds") or result.get("rotations") or []
        with open(loss_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fold", "step", "loss"])
            for entry in entries:
                name = entry.get("fold") or entry.get("rotation")
                for step, value in enumerate(entry.get("loss_trace", [])):
                    writer.writerow([name, step, repr(value)])
        written.append(loss_path)
    else:
        raise ReportError(f"unknown report format {fmt!r}")
    return written


def train_all(data: GroupData, config: ExperimentConfig) -> tuple[LstmModel, NormStats, list[float]]:
    """Train one model on every window of the group (for the train/eval CLI)."""
    all_idx = np.arange(len(data.windows))
    return _train_on(data, all_idx, config.train)
