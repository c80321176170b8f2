# fl_runner/outputs.py
"""
Files written by the runner.

<out>/partitions/            client_<id>_{train,test}.bin, server_{validation,test}.bin
<out>/partition_summary.csv  client, total, train, test, class_0..class_{K-1}
<out>/rounds.csv             round, agg_acc, agg_loss, client_<id>_acc, client_<id>_loss..., d_metric, sigma, warning
<out>/summary.json           final test metrics, last-5 mean/std, c-tilde, optional multi-run block
<out>/roc.csv                fpr, tpr of the final model (micro one-vs-rest)
<out>/cia_report.json        one entry per (strategy, mode): aggregated_loss, target_loss, difference_pct, ...
<out>/report.{csv,txt}       one row per summary.json found under <out>

Floats are written with repr so every value parses back to the same double.
Nothing written depends on wall-clock time or absolute paths.
"""

from __future__ import annotations
import csv
import json
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from humanfriendly.tables import format_pretty_table
from humanfriendly.terminal import ansi_strip

from src.errors import OutputError
from src.orchestrator import CiaReport, ExperimentResult, Federation, MultiRunResult, summarize_last_k

LAST_K = 5

REPORT_COLUMNS = [
    "run",
    "strategy",
    "mode",
    "scenario",
    "last5_mean",
    "last5_std",
    "test_accuracy",
    "test_macro_f1",
    "test_macro_precision",
    "test_macro_recall",
    "test_auc",
    "test_loss",
]


def _num(value: float) -> str:
    return repr(float(value))


def _write_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# -------------------------
# Partitions
# -------------------------
def partition_rows(federation: Federation) -> List[List[int]]:
    rows = []
    for c in federation.clients:
        counts = [a + b for a, b in zip(c.train.class_counts(), c.test.class_counts())]
        rows.append([c.client_id, sum(counts), len(c.train), len(c.test)] + counts)
    return rows


def partition_header(num_classes: int) -> List[str]:
    return ["client", "total", "train", "test"] + [f"class_{k}" for k in range(num_classes)]


def write_partition_summary(path: Path, federation: Federation) -> Path:
    return _write_rows(path, partition_header(federation.num_classes), partition_rows(federation))


def render_partition_table(federation: Federation) -> str:
    header = ["Client", "Total"] + [f"Class {k}" for k in range(federation.num_classes)]
    rows = [[r[0], r[1]] + r[4:] for r in partition_rows(federation)]
    return format_pretty_table(rows, header)


# -------------------------
# Runs
# -------------------------
def rounds_header(client_ids: Sequence[int]) -> List[str]:
    cols = ["round", "agg_acc", "agg_loss"]
    for cid in client_ids:
        cols += [f"client_{cid}_acc", f"client_{cid}_loss"]
    return cols + ["d_metric", "sigma", "warning"]


def write_rounds_csv(path: Path, result: ExperimentResult) -> Path:
    client_ids = [m.client_id for m in result.records[0].clients]
    rows = []
    for rec in result.records:
        row = [rec.round_index, _num(rec.aggregated_accuracy), _num(rec.aggregated_loss)]
        for m in rec.clients:
            row += [_num(m.accuracy), _num(m.loss)]
        row += [_num(rec.privacy.distance), _num(rec.privacy.sigma), int(rec.privacy.warning)]
        rows.append(row)
    return _write_rows(path, rounds_header(client_ids), rows)


def write_roc_csv(path: Path, result: ExperimentResult) -> Path:
    fpr, tpr = result.final_report.roc
    return _write_rows(path, ["fpr", "tpr"], [[_num(a), _num(b)] for a, b in zip(fpr, tpr)])


def build_summary(result: ExperimentResult, multi: Optional[MultiRunResult] = None) -> Dict[str, Any]:
    cfg = result.config
    k = min(LAST_K, len(result.records))
    mean, std = summarize_last_k(result.records, k)
    first = result.records[0].privacy
    summary: Dict[str, Any] = {
        "strategy": cfg.strategy.kind,
        "mode": cfg.privacy.mode,
        "scenario": cfg.scenario,
        "rounds": len(result.records),
        "seed": cfg.seed,
        "num_clients": len(result.records[0].clients),
        "final_test": result.final_report.as_dict(),
        "last_k": {"k": k, "mean_accuracy": mean, "std_accuracy": std},
        "ctilde": first.ctilde,
        "rounds_flagged": [rec.round_index for rec in result.records if rec.privacy.warning],
    }
    if multi is not None:
        summary["multi_run"] = {
            "seeds": list(multi.seeds),
            "final_accuracies": list(multi.final_accuracies),
            "mean_accuracy": multi.mean_accuracy,
            "std_accuracy": multi.std_accuracy,
        }
    return summary


def write_summary(path: Path, result: ExperimentResult, multi: Optional[MultiRunResult] = None) -> Path:
    return _write_json(path, build_summary(result, multi))


# dataclass field -> key in cia_report.json
CIA_KEYS = {
    "target_shadow_loss": "target_loss",
    "relative_difference_pct": "difference_pct",
    "absent_target_shadow_loss": "absent_target_loss",
    "absent_relative_difference_pct": "absent_difference_pct",
}


def cia_entry(report: CiaReport) -> Dict[str, Any]:
    return {CIA_KEYS.get(k, k): v for k, v in asdict(report).items()}


def write_cia_report(path: Path, reports: Sequence[CiaReport]) -> Path:
    return _write_json(path, {"reports": [cia_entry(r) for r in reports]})


def render_cia_table(reports: Sequence[CiaReport]) -> str:
    rows = [
        [r.strategy, r.mode, f"{r.aggregated_loss:.3f}", f"{r.target_shadow_loss:.3f}",
         f"{r.relative_difference_pct:.3f}", f"{r.first_round_test_loss:.3f}"]
        for r in reports
    ]
    return format_pretty_table(rows, ["Strategy", "Mode", "Aggregated", "Target", "Diff %", "Test loss"])


# -------------------------
# Report
# -------------------------
def find_summaries(root: Path) -> List[Path]:
    return sorted(p for p in Path(root).rglob("summary.json") if p.is_file())


def report_row(root: Path, path: Path) -> List[Any]:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        final = doc["final_test"]
        last = doc["last_k"]
        run = path.parent.relative_to(root).as_posix() or "."
        return [
            run,
            doc["strategy"],
            doc["mode"],
            doc["scenario"],
            _num(last["mean_accuracy"]),
            _num(last["std_accuracy"]),
            _num(final["accuracy"]),
            _num(final["macro_f1"]),
            _num(final["macro_precision"]),
            _num(final["macro_recall"]),
            _num(final["auc_micro_ovr"]),
            _num(final["loss"]),
        ]
    except (ValueError, KeyError, TypeError) as e:
        raise OutputError(f"corrupt run summary {path}: {e}") from e


def build_report(root: Path) -> List[List[Any]]:
    root = Path(root)
    paths = find_summaries(root)
    if not paths:
        raise OutputError(f"no summary.json found under {root}")
    return [report_row(root, p) for p in paths]


def write_report(root: Path, rows: List[List[Any]], csv_name: str, txt_name: str) -> str:
    _write_rows(Path(root) / csv_name, REPORT_COLUMNS, rows)
    text = format_pretty_table(rows, REPORT_COLUMNS)
    (Path(root) / txt_name).write_text(ansi_strip(text) + "\n", encoding="utf-8")
    return text
