# fl_runner/config.py
"""
Defaults and scenario-file loading for the simulation runner.

A scenario file is TOML with the tables [model] [data] [run] [strategy]
[privacy] [cia]. Precedence, lowest first:
    defaults below  <  scenario file  <  --set table.key=value  <  --seed / --threads
"""

from __future__ import annotations
import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import toml

from src.data import PartitionPlan
from src.errors import ConfigError
from src.model import TrainConfig
from src.orchestrator import CiaConfig, ExperimentConfig
from src.privacy import PrivacyConfig
from src.strategies import StrategyConfig

# ─── Source data ────────────────────────────────────────────────────
# "synthetic" draws Gaussian clusters with the class counts below;
# anything else is a path to a CSV or binary dataset.
DATA_SOURCE = "synthetic"
TRAIN_CLASS_COUNTS = [724, 49, 2566, 1781]
TEST_CLASS_COUNTS = [172, 15, 634, 459]
SYNTH_DIM = 16
SYNTH_SPREAD = 1.0

# ─── Federation ─────────────────────────────────────────────────────
SCENARIO = "homogeneous"
NUM_CLIENTS = 4
TEST_FRACTION = 0.2  # per client
VALIDATION_FRACTION = 0.5  # of the server's held-out source

# ─── Training ───────────────────────────────────────────────────────
HIDDEN_DIMS = [32]
ROUNDS = 20
LOCAL_EPOCHS = 5
BATCH_SIZE = 32
LEARNING_RATE = 1e-3
OPTIMIZER = "adam"
SEED = 0
THREADS = 1

# ─── Privacy ────────────────────────────────────────────────────────
NOISE_MULTIPLIER = 0.01
CLIPPING_NORM = 5.0

# ─── Output files ───────────────────────────────────────────────────
PARTITIONS_DIR = "partitions"
ROUNDS_CSV = "rounds.csv"
SUMMARY_JSON = "summary.json"
ROC_CSV = "roc.csv"
RESOLVED_CONFIG = "config.resolved.toml"
CIA_JSON = "cia_report.json"
CIA_RESOLVED_CONFIG = "config.cia.resolved.toml"
PARTITION_SUMMARY_CSV = "partition_summary.csv"
REPORT_CSV = "report.csv"
REPORT_TXT = "report.txt"

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "model": {"hidden_dims": HIDDEN_DIMS},
    "data": {
        "source": DATA_SOURCE,
        "test_source": "",
        "has_header": False,
        "class_counts": TRAIN_CLASS_COUNTS,
        "test_class_counts": TEST_CLASS_COUNTS,
        "dim": SYNTH_DIM,
        "spread": SYNTH_SPREAD,
        "scenario": SCENARIO,
        "num_clients": NUM_CLIENTS,
        "plan": "",
        "test_fraction": TEST_FRACTION,
        "validation_fraction": VALIDATION_FRACTION,
    },
    "run": {
        "rounds": ROUNDS,
        "epochs": LOCAL_EPOCHS,
        "batch_size": BATCH_SIZE,
        "learning_rate": LEARNING_RATE,
        "optimizer": OPTIMIZER,
        "seed": SEED,
        "threads": THREADS,
        "init_seed": None,
        "pretrain": "auto",
        "pretrain_epochs": None,
        "num_seeds": 1,
    },
    "strategy": {
        "kind": "fedavg",
        "beta": 0.9,
        "server_lr": None,
        "prox_mu": 0.1,
        "beta1": 0.9,
        "beta2": 0.99,
        "tau": 1e-3,
    },
    "privacy": {
        "mode": "none",
        "noise_multiplier": NOISE_MULTIPLIER,
        "clipping_norm": CLIPPING_NORM,
        "sampled_clients": None,
        "noise_seed": None,
    },
    "cia": {
        "attacker_id": 1,
        "target_id": 3,
        "shadow_fraction": 0.1,
        "local_epochs": 20,
        "modes": ["none", "global_dp", "metric"],
        "compare_absent": False,
        "strategies": [],
    },
}


@dataclass(frozen=True)
class DataConfig:
    source: str = DATA_SOURCE
    test_source: str = ""
    has_header: bool = False
    class_counts: Tuple[int, ...] = tuple(TRAIN_CLASS_COUNTS)
    test_class_counts: Tuple[int, ...] = tuple(TEST_CLASS_COUNTS)
    dim: int = SYNTH_DIM
    spread: float = SYNTH_SPREAD

    @property
    def synthetic(self) -> bool:
        return self.source == "synthetic"


@dataclass(frozen=True)
class RunnerConfig:
    experiment: ExperimentConfig
    data: DataConfig
    raw: Dict[str, Dict[str, Any]]

    def resolved_toml(self) -> str:
        """The merged configuration; unset optional keys are omitted."""
        clean = {
            table: {k: v for k, v in values.items() if v is not None}
            for table, values in self.raw.items()
        }
        return toml.dumps(clean)


# -------------------------
# Loading
# -------------------------
def parse_override(text: str) -> Tuple[str, str, Any]:
    """'table.key=value' with value read as a TOML scalar or array, else a bare string."""
    if "=" not in text:
        raise ConfigError(f"override '{text}' is not of the form table.key=value")
    path, raw = text.split("=", 1)
    path = path.strip()
    if path.count(".") != 1:
        raise ConfigError(f"override key '{path}' must be table.key")
    table, key = path.split(".")
    try:
        value = toml.loads(f"v = {raw.strip()}")["v"]
    except (ValueError, IndexError):
        value = raw.strip()
    return table, key, value


def _merge(base: Dict[str, Dict[str, Any]], table: str, key: str, value: Any, origin: str) -> None:
    if table not in DEFAULTS:
        raise ConfigError(f"{origin}: unknown table [{table}] (known: {', '.join(DEFAULTS)})")
    if key not in DEFAULTS[table]:
        raise ConfigError(f"{origin}: unknown key '{key}' in [{table}]")
    base[table][key] = value


def load_raw(
    path: Optional[Union[str, Path]] = None,
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> Dict[str, Dict[str, Any]]:
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config not found: {path}")
        try:
            doc = toml.load(path)
        except toml.TomlDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
        for table, values in doc.items():
            if not isinstance(values, dict):
                raise ConfigError(f"{path}: top-level key '{table}' must be a table")
            for key, value in values.items():
                _merge(raw, table, key, value, str(path))
    for text in overrides:
        table, key, value = parse_override(text)
        _merge(raw, table, key, value, "--set")
    if seed is not None:
        raw["run"]["seed"] = int(seed)
    if threads is not None:
        raw["run"]["threads"] = int(threads)
    return raw


def _plan(value: Any) -> Optional[PartitionPlan]:
    if value in (None, ""):
        return None
    if isinstance(value, str):
        return PartitionPlan.preset(value)
    if isinstance(value, list):
        return PartitionPlan(tuple(tuple(row) for row in value))
    raise ConfigError(f"[data] plan must be a preset name or a matrix of counts, got {value!r}")


def build(raw: Dict[str, Dict[str, Any]]) -> RunnerConfig:
    try:
        d, r, s, p, c = raw["data"], raw["run"], raw["strategy"], raw["privacy"], raw["cia"]
        train = TrainConfig(
            epochs=int(r["epochs"]),
            batch_size=int(r["batch_size"]),
            learning_rate=float(r["learning_rate"]),
            optimizer=str(r["optimizer"]),
        )
        strategy = StrategyConfig(
            kind=str(s["kind"]),
            beta=float(s["beta"]),
            server_lr=None if s["server_lr"] is None else float(s["server_lr"]),
            prox_mu=float(s["prox_mu"]),
            beta1=float(s["beta1"]),
            beta2=float(s["beta2"]),
            tau=float(s["tau"]),
        )
        privacy = PrivacyConfig(
            mode=str(p["mode"]),
            noise_multiplier=float(p["noise_multiplier"]),
            clipping_norm=float(p["clipping_norm"]),
            sampled_clients=None if p["sampled_clients"] is None else int(p["sampled_clients"]),
            noise_seed=None if p["noise_seed"] is None else int(p["noise_seed"]),
        )
        cia = CiaConfig(
            attacker_id=int(c["attacker_id"]),
            target_id=int(c["target_id"]),
            shadow_fraction=float(c["shadow_fraction"]),
            local_epochs=int(c["local_epochs"]),
            modes=tuple(str(m) for m in c["modes"]),
            compare_absent=bool(c["compare_absent"]),
            strategies=tuple(str(k) for k in c["strategies"]),
        )
        experiment = ExperimentConfig(
            hidden_dims=tuple(int(h) for h in raw["model"]["hidden_dims"]),
            strategy=strategy,
            privacy=privacy,
            train=train,
            rounds=int(r["rounds"]),
            scenario=str(d["scenario"]),
            num_clients=int(d["num_clients"]),
            plan=_plan(d["plan"]),
            test_fraction=float(d["test_fraction"]),
            validation_fraction=float(d["validation_fraction"]),
            seed=int(r["seed"]),
            threads=int(r["threads"]),
            init_seed=None if r["init_seed"] is None else int(r["init_seed"]),
            pretrain=str(r["pretrain"]),
            pretrain_epochs=None if r["pretrain_epochs"] is None else int(r["pretrain_epochs"]),
            num_seeds=int(r["num_seeds"]),
            cia=cia,
        )
        data = DataConfig(
            source=str(d["source"]),
            test_source=str(d["test_source"]),
            has_header=bool(d["has_header"]),
            class_counts=tuple(int(v) for v in d["class_counts"]),
            test_class_counts=tuple(int(v) for v in d["test_class_counts"]),
            dim=int(d["dim"]),
            spread=float(d["spread"]),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid configuration value: {e}") from e
    return RunnerConfig(experiment=experiment, data=data, raw=raw)


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> RunnerConfig:
    return build(load_raw(path, overrides, seed=seed, threads=threads))


def known_keys() -> List[str]:
    return [f"{table}.{key}" for table, values in DEFAULTS.items() for key in values]
