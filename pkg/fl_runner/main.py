# fl_runner/main.py
"""
Federated simulation runner — entry point

Commands:
    partition  build the client / server datasets and print the per-class table
    run        federated training; rounds.csv, summary.json, roc.csv
    cia        one-round client inference attack for every configured privacy mode
    report     collect every summary.json under --out into report.csv / report.txt

Pipeline:
    scenario.toml → sources → partitions/ → round loop → outputs
                                               ↑
                          strategy + privacy wrapper (server side)

Usage:
    python -m fl_runner.main partition --config configs/homogeneous.toml --out runs/homog
    python -m fl_runner.main run --config configs/homogeneous.toml --out runs/homog --set privacy.mode=metric
    python -m fl_runner.main cia --config configs/cia.toml --out runs/cia
    python -m fl_runner.main report --out runs

Setting precedence (lowest first): built-in defaults, --config file, --set
table.key=value (repeatable, later wins), then --seed / --threads.

Exit codes: 0 success, 1 runtime or I/O error, 2 configuration error or infeasible plan.
"""

from __future__ import annotations
import argparse
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import coloredlogs
from humanfriendly import format_timespan

# Add project root so we can import from src.*
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.data import LabeledDataset, load_csv, load_dataset, synth_pair
from src.errors import ConfigError, FedSimError, OutputError
from src.orchestrator import Federation, multi_run, prepare_federation, run_cia, run_experiment
from src.seeding import derive_seed
from fl_runner.config import (
    CIA_JSON,
    CIA_RESOLVED_CONFIG,
    PARTITION_SUMMARY_CSV,
    PARTITIONS_DIR,
    REPORT_CSV,
    REPORT_TXT,
    RESOLVED_CONFIG,
    ROC_CSV,
    ROUNDS_CSV,
    SUMMARY_JSON,
    DataConfig,
    RunnerConfig,
    load_config,
)
from fl_runner import outputs

log = logging.getLogger("fl_runner")

COMMANDS = ("partition", "run", "cia", "report")


# ─── Sources ────────────────────────────────────────────────────────

def _read_source(path: str, has_header: bool, num_classes: Optional[int] = None) -> LabeledDataset:
    p = Path(path)
    if p.suffix.lower() == ".csv":
        return load_csv(p, has_header=has_header, num_classes=num_classes)
    ds = load_dataset(p)
    if num_classes is not None and ds.num_classes != num_classes:
        ds = LabeledDataset(ds.features, ds.labels, max(num_classes, ds.num_classes))
    return ds


def load_sources(data: DataConfig, seed: int) -> Tuple[LabeledDataset, LabeledDataset]:
    """Training source and held-out source (server validation + test)."""
    if data.synthetic:
        return synth_pair(
            data.class_counts, data.test_class_counts, data.dim, data.spread, derive_seed(seed, "data", "synthetic")
        )
    if not data.test_source:
        raise ConfigError("[data] test_source is required when [data] source is a file")
    train = _read_source(data.source, data.has_header)
    test = _read_source(data.test_source, data.has_header, num_classes=train.num_classes)
    if test.num_classes != train.num_classes:
        train = LabeledDataset(train.features, train.labels, test.num_classes)
    return train, test


def build_federation(cfg: RunnerConfig) -> Federation:
    train, test = load_sources(cfg.data, cfg.experiment.seed)
    return prepare_federation(cfg.experiment, train, test)


def federation_for(cfg: RunnerConfig, out: Path) -> Federation:
    """Partitions under <out>/partitions, created on first use."""
    part_dir = out / PARTITIONS_DIR
    if part_dir.is_dir():
        log.info("loading partitions from %s", part_dir)
        return Federation.load(part_dir)
    fed = build_federation(cfg)
    fed.save(part_dir)
    outputs.write_partition_summary(out / PARTITION_SUMMARY_CSV, fed)
    return fed


def _guard(out: Path, names: Sequence[str], force: bool) -> None:
    existing = [n for n in names if (out / n).exists()]
    if existing and not force:
        raise OutputError(f"{out} already holds {', '.join(existing)} (use --force to overwrite)")


# ─── Commands ───────────────────────────────────────────────────────

def cmd_partition(cfg: RunnerConfig, out: Path, force: bool) -> int:
    part_dir = out / PARTITIONS_DIR
    _guard(out, [PARTITIONS_DIR, PARTITION_SUMMARY_CSV], force)
    fed = build_federation(cfg)
    if part_dir.is_dir():
        for old in part_dir.glob("*.bin"):
            old.unlink()
    written = fed.save(part_dir)
    outputs.write_partition_summary(out / PARTITION_SUMMARY_CSV, fed)
    print(outputs.render_partition_table(fed))
    log.info("wrote %d partition files to %s", len(written), part_dir)
    return 0


def cmd_run(cfg: RunnerConfig, out: Path, force: bool) -> int:
    _guard(out, [ROUNDS_CSV, SUMMARY_JSON, ROC_CSV, RESOLVED_CONFIG], force)
    exp = cfg.experiment
    fed = federation_for(cfg, out)
    log.info(
        "run: strategy=%s mode=%s rounds=%d clients=%d threads=%d",
        exp.strategy.kind, exp.privacy.mode, exp.rounds, len(fed.clients), exp.threads,
    )
    t0 = time.time()
    result = run_experiment(exp, fed)
    multi = multi_run(exp, fed, exp.num_seeds) if exp.num_seeds > 1 else None

    outputs.write_rounds_csv(out / ROUNDS_CSV, result)
    outputs.write_summary(out / SUMMARY_JSON, result, multi)
    outputs.write_roc_csv(out / ROC_CSV, result)
    (out / RESOLVED_CONFIG).write_text(cfg.resolved_toml(), encoding="utf-8")

    rep = result.final_report
    print(f"final test: acc={rep.accuracy:.4f} f1={rep.macro_f1:.4f} auc={rep.auc_micro_ovr:.4f} loss={rep.loss:.4f}")
    log.info("run finished in %s", format_timespan(time.time() - t0))
    return 0


def cmd_cia(cfg: RunnerConfig, out: Path, force: bool) -> int:
    _guard(out, [CIA_JSON, CIA_RESOLVED_CONFIG], force)
    fed = federation_for(cfg, out)
    t0 = time.time()
    reports = run_cia(cfg.experiment, fed)
    outputs.write_cia_report(out / CIA_JSON, reports)
    (out / CIA_RESOLVED_CONFIG).write_text(cfg.resolved_toml(), encoding="utf-8")
    print(outputs.render_cia_table(reports))
    log.info("cia finished in %s", format_timespan(time.time() - t0))
    return 0


def cmd_report(out: Path, force: bool) -> int:
    _guard(out, [REPORT_CSV, REPORT_TXT], force)
    rows = outputs.build_report(out)
    print(outputs.write_report(out, rows, REPORT_CSV, REPORT_TXT))
    log.info("report: %d runs", len(rows))
    return 0


# ─── CLI ────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fl_runner",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, default=None, help="scenario TOML file")
    parser.add_argument("--out", type=Path, default=Path("runs/default"), help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="shorthand for --set run.seed=N (wins over both)")
    parser.add_argument("--threads", type=int, default=None, help="client-training threads; results do not depend on it")
    parser.add_argument("--force", action="store_true", help="overwrite existing outputs")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="TABLE.KEY=VALUE",
        help="override one setting (repeatable; applied after --config)",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("-q", "--quiet", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    coloredlogs.install(level=level, fmt="%(asctime)s %(name)s %(levelname)s %(message)s")

    try:
        if args.command == "report":
            return cmd_report(args.out, args.force)
        cfg = load_config(args.config, args.overrides, seed=args.seed, threads=args.threads)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "partition":
            return cmd_partition(cfg, args.out, args.force)
        if args.command == "run":
            return cmd_run(cfg, args.out, args.force)
        return cmd_cia(cfg, args.out, args.force)
    except ConfigError as e:
        print(f"✗ configuration error: {e}", file=sys.stderr)
        return 2
    except (FedSimError, OSError) as e:
        print(f"✗ {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
