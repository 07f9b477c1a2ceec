"""Summaries of search logs: epochs-to-threshold, reward AUC, final best."""
from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass
from pathlib import Path

REQUIRED = ("epoch", "mode", "mean_reward", "best_reward")


class LogFormatError(ValueError):
    pass


@dataclass
class RunSummary:
    path: str
    mode: str
    seed: int | None
    epochs: int
    epochs_to_threshold: int | None
    auc: float
    final_best: float
    curve: list[float]


def parse_log(path) -> list[dict]:
    """Parse a JSON-lines search log, naming the first bad line on failure."""
    records = []
    last_epoch = 0
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LogFormatError(f"{path}:{lineno}: not valid JSON ({exc.msg})") from None
        if not isinstance(rec, dict):
            raise LogFormatError(f"{path}:{lineno}: expected a JSON object")
        missing = [k for k in REQUIRED if k not in rec]
        if missing:
            raise LogFormatError(f"{path}:{lineno}: missing field(s) {', '.join(missing)}")
        if not isinstance(rec["epoch"], int) or rec["epoch"] <= last_epoch:
            raise LogFormatError(f"{path}:{lineno}: epoch numbers must increase")
        for k in ("mean_reward", "best_reward"):
            if not isinstance(rec[k], (int, float)) or isinstance(rec[k], bool):
                raise LogFormatError(f"{path}:{lineno}: {k} must be a number")
        last_epoch = rec["epoch"]
        records.append(rec)
    if not records:
        raise LogFormatError(f"{path}: log is empty")
    return records


def epochs_to_threshold(records: list[dict], tau: float = 0.9) -> int | None:
    """First epoch whose *mean* reward reaches ``tau`` (best_reward is ignored)."""
    for rec in records:
        if rec["mean_reward"] >= tau:
            return rec["epoch"]
    return None


def reward_auc(records: list[dict]) -> float:
    """Mean of the per-epoch mean reward, i.e. the curve's area normalized by length."""
    return sum(r["mean_reward"] for r in records) / len(records)


def summarize_log(path, tau: float = 0.9) -> RunSummary:
    recs = parse_log(path)
    modes = {r["mode"] for r in recs}
    if len(modes) != 1:
        raise LogFormatError(f"{path}: mixes modes {sorted(modes)}")
    return RunSummary(
        path=str(path), mode=recs[0]["mode"], seed=recs[0].get("seed"), epochs=len(recs),
        epochs_to_threshold=epochs_to_threshold(recs, tau), auc=reward_auc(recs),
        final_best=recs[-1]["best_reward"], curve=[r["mean_reward"] for r in recs],
    )


def median_epochs(values: list[int | None]) -> float | None:
    """Median epochs-to-threshold where an unreached run counts as infinitely slow.

    Returns None when the median itself falls on unreached runs.
    """
    keyed = sorted(float("inf") if v is None else v for v in values)
    med = statistics.median(keyed)
    return None if med == float("inf") else med


@dataclass
class ModeSummary:
    mode: str
    runs: int
    reached: int
    median_epochs_to_threshold: float | None
    median_auc: float
    median_final_best: float
    median_final_mean: float


def summarize_modes(runs: list[RunSummary]) -> list[ModeSummary]:
    out = []
    for mode in sorted({r.mode for r in runs}):
        group = [r for r in runs if r.mode == mode]
        out.append(ModeSummary(
            mode=mode, runs=len(group),
            reached=sum(r.epochs_to_threshold is not None for r in group),
            median_epochs_to_threshold=median_epochs([r.epochs_to_threshold for r in group]),
            median_auc=statistics.median(r.auc for r in group),
            median_final_best=statistics.median(r.final_best for r in group),
            median_final_mean=statistics.median(r.curve[-1] for r in group),
        ))
    return out


def format_table(modes: list[ModeSummary], tau: float) -> str:
    head = f"{'mode':<10} {'runs':>4} {'reached':>7} {f'epochs-to-{tau:g}':>14} {'auc':>7} {'best':>7}"
    lines = [head, "-" * len(head)]
    for m in modes:
        ett = "not reached" if m.median_epochs_to_threshold is None else f"{m.median_epochs_to_threshold:g}"
        lines.append(f"{m.mode:<10} {m.runs:>4} {m.reached:>7} {ett:>14} {m.median_auc:>7.4f} "
                     f"{m.median_final_best:>7.4f}")
    return "\n".join(lines)


def write_csv(runs: list[RunSummary], path) -> None:
    """One row per (mode, seed); the reward curve is a ';'-joined column."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "seed", "path", "epochs", "epochs_to_threshold", "auc", "final_best", "curve"])
        for r in runs:
            w.writerow([r.mode, "" if r.seed is None else r.seed, r.path, r.epochs,
                        "" if r.epochs_to_threshold is None else r.epochs_to_threshold,
                        repr(r.auc), repr(r.final_best), ";".join(repr(v) for v in r.curve)])


def report(paths, tau: float = 0.9, csv_path=None) -> str:
    runs = [summarize_log(p, tau) for p in paths]
    if csv_path is not None:
        write_csv(runs, csv_path)
    return format_table(summarize_modes(runs), tau)
