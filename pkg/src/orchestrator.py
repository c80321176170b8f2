# src/orchestrator.py
"""
orchestrator.py
Federated round loop, multi-seed statistics and the client inference attack harness.

Round r (client ids are 1-based, always visited in ascending order):
1) broadcast the global model
2) every client trains locally (in parallel, one derived seed per client and round)
3) the server clips / aggregates / adds noise (privacy.privatize_round)
4) the new global model is evaluated on every client's test split

Seeds (see seeding.derive_seed):
    data      ("data", ...)          partitioning and splits
    init      ("init",)              initial model
    pretrain  ("pretrain",)          server-side pretraining on the validation split
    client    ("client", id, r)      local training
    noise     ("noise", r)           server noise
    shadow    ("shadow",)            attacker's shadow sample
    run k     ("run", k)             experiment seed of the k-th multi-run repetition
"""

from __future__ import annotations
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .data import (
    LabeledDataset,
    PartitionPlan,
    load_dataset,
    partition_by_plan,
    partition_homogeneous,
    save_dataset,
    shadow_sample,
    stratified_split,
)
from .errors import ConfigError, DatasetError, FedSimError, RoundError
from .evaluate import EvalReport
from .model import ModelSpec, TrainConfig, evaluate, init_params, mean_loss, train_local
from .params import ParameterSet
from .privacy import MODES, PrivacyConfig, RoundPrivacyRecord, privatize_round
from .seeding import derive_seed
from .strategies import KINDS, ClientUpdate, ServerState, StrategyConfig, pretrain_initial

log = logging.getLogger(__name__)

SCENARIOS = ("homogeneous", "by_plan", "cia")
PRETRAIN_CHOICES = ("auto", "always", "never")
CIA_DEFAULT_PLAN = "client-inference-3-clients"


# -------------------------
# Config
# -------------------------
@dataclass(frozen=True)
class CiaConfig:
    attacker_id: int = 1
    target_id: int = 3
    shadow_fraction: float = 0.1
    local_epochs: int = 20
    modes: Tuple[str, ...] = MODES
    compare_absent: bool = False
    strategies: Tuple[str, ...] = ()  # empty: the experiment's strategy

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "strategies", tuple(self.strategies))
        if self.attacker_id == self.target_id:
            raise ConfigError("cia attacker_id and target_id must differ")
        if not 0.0 < self.shadow_fraction <= 1.0:
            raise ConfigError(f"cia shadow_fraction must lie in (0, 1], got {self.shadow_fraction}")
        if self.local_epochs < 1:
            raise ConfigError(f"cia local_epochs must be >= 1, got {self.local_epochs}")
        if not self.modes or any(m not in MODES for m in self.modes):
            raise ConfigError(f"cia modes must be a non-empty subset of {MODES}, got {self.modes}")
        if any(k not in KINDS for k in self.strategies):
            raise ConfigError(f"cia strategies must be drawn from {KINDS}, got {self.strategies}")


@dataclass(frozen=True)
class ExperimentConfig:
    hidden_dims: Tuple[int, ...] = (32,)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    privacy: PrivacyConfig = field(default_factory=PrivacyConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    rounds: int = 20
    scenario: str = "homogeneous"
    num_clients: int = 4
    plan: Optional[PartitionPlan] = None
    test_fraction: float = 0.2
    validation_fraction: float = 0.5
    seed: int = 0
    threads: int = 1
    init_seed: Optional[int] = None
    pretrain: str = "auto"
    pretrain_epochs: Optional[int] = None
    num_seeds: int = 1
    cia: CiaConfig = field(default_factory=CiaConfig)

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.pretrain not in PRETRAIN_CHOICES:
            raise ConfigError(f"pretrain must be one of {PRETRAIN_CHOICES}, got {self.pretrain!r}")
        if self.pretrain_epochs is not None and self.pretrain_epochs < 0:
            raise ConfigError(f"pretrain_epochs must be >= 0, got {self.pretrain_epochs}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.num_seeds < 1:
            raise ConfigError(f"num_seeds must be >= 1, got {self.num_seeds}")
        for name in ("test_fraction", "validation_fraction"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {value}")

        if self.scenario == "cia" and self.plan is None:
            object.__setattr__(self, "plan", PartitionPlan.preset(CIA_DEFAULT_PLAN))
        if self.scenario in ("by_plan", "cia"):
            if self.plan is None:
                raise ConfigError(f"scenario '{self.scenario}' needs a partition plan")
            object.__setattr__(self, "num_clients", self.plan.num_clients)
        elif self.num_clients < 1:
            raise ConfigError(f"num_clients must be >= 1, got {self.num_clients}")

        if self.scenario == "cia":
            if self.num_clients != 3:
                raise ConfigError(f"the cia scenario needs exactly 3 clients, plan has {self.num_clients}")
            for role in ("attacker_id", "target_id"):
                cid = getattr(self.cia, role)
                if not 1 <= cid <= self.num_clients:
                    raise ConfigError(f"cia {role} {cid} is not a client id (1..{self.num_clients})")

    def client_train_config(self, client_id: int, round_index: int) -> TrainConfig:
        return replace(
            self.train,
            proximal_mu=self.strategy.client_proximal_mu,
            seed=derive_seed(self.seed, "client", client_id, round_index),
        )

    def uses_pretraining(self) -> bool:
        if self.pretrain == "always":
            return True
        if self.pretrain == "never":
            return False
        return self.strategy.needs_initial_params


# -------------------------
# Data roles
# -------------------------
@dataclass(frozen=True)
class ClientData:
    client_id: int
    train: LabeledDataset
    test: LabeledDataset


@dataclass(frozen=True)
class Federation:
    clients: Tuple[ClientData, ...]
    server_validation: LabeledDataset
    server_test: LabeledDataset

    def __post_init__(self):
        object.__setattr__(self, "clients", tuple(sorted(self.clients, key=lambda c: c.client_id)))
        if not self.clients:
            raise ConfigError("a federation needs at least one client")
        ids = [c.client_id for c in self.clients]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate client ids: {ids}")
        sets = [self.server_validation, self.server_test]
        sets += [c.train for c in self.clients] + [c.test for c in self.clients]
        if len({(d.dim, d.num_classes) for d in sets}) != 1:
            raise DatasetError("client and server datasets disagree on feature width or class count")

    @property
    def dim(self) -> int:
        return self.server_test.dim

    @property
    def num_classes(self) -> int:
        return self.server_test.num_classes

    def model_spec(self, hidden_dims: Sequence[int]) -> ModelSpec:
        return ModelSpec(input_dim=self.dim, hidden_dims=tuple(hidden_dims), num_classes=self.num_classes)

    def client(self, client_id: int) -> ClientData:
        for c in self.clients:
            if c.client_id == client_id:
                return c
        raise KeyError(f"no client with id {client_id}")

    def without(self, client_id: int) -> "Federation":
        rest = tuple(c for c in self.clients if c.client_id != client_id)
        if len(rest) == len(self.clients):
            raise KeyError(f"no client with id {client_id}")
        return replace(self, clients=rest)

    # ─── on disk ───
    def save(self, directory: Union[str, Path]) -> List[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = [
            save_dataset(directory / "server_validation.bin", self.server_validation),
            save_dataset(directory / "server_test.bin", self.server_test),
        ]
        for c in self.clients:
            written.append(save_dataset(directory / f"client_{c.client_id}_train.bin", c.train))
            written.append(save_dataset(directory / f"client_{c.client_id}_test.bin", c.test))
        return written

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "Federation":
        directory = Path(directory)
        if not directory.is_dir():
            raise FileNotFoundError(f"Partition directory not found: {directory}")
        clients = []
        for train_path in sorted(directory.glob("client_*_train.bin")):
            cid = int(train_path.name.split("_")[1])
            test_path = directory / f"client_{cid}_test.bin"
            clients.append(ClientData(cid, load_dataset(train_path), load_dataset(test_path)))
        if not clients:
            raise FileNotFoundError(f"No client partitions in {directory}")
        return cls(
            clients=tuple(clients),
            server_validation=load_dataset(directory / "server_validation.bin"),
            server_test=load_dataset(directory / "server_test.bin"),
        )


def prepare_federation(
    config: ExperimentConfig, train_source: LabeledDataset, test_source: LabeledDataset
) -> Federation:
    """Partition the training source among clients and split the held-out source for the server."""
    part_seed = derive_seed(config.seed, "data", "partition")
    if config.scenario == "homogeneous":
        parts = partition_homogeneous(train_source, config.num_clients, part_seed)
    else:
        parts = partition_by_plan(train_source, config.plan, part_seed)

    clients = []
    for cid, part in enumerate(parts, start=1):
        if len(part) == 0:
            raise ConfigError(f"client {cid} receives no samples")
        train, test = stratified_split(part, config.test_fraction, derive_seed(config.seed, "data", "split", cid))
        if len(train) == 0:
            raise ConfigError(f"client {cid} has an empty training split")
        clients.append(ClientData(cid, train, test))

    server_test, server_validation = stratified_split(
        test_source, config.validation_fraction, derive_seed(config.seed, "data", "server")
    )
    fed = Federation(tuple(clients), server_validation, server_test)
    log.info(
        "federation: %d clients sizes=%s validation=%d test=%d",
        len(clients),
        [len(c.train) + len(c.test) for c in fed.clients],
        len(server_validation),
        len(server_test),
    )
    return fed


# -------------------------
# Records
# -------------------------
@dataclass(frozen=True)
class ClientMetrics:
    client_id: int
    accuracy: float
    loss: float
    test_count: int


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    aggregated_accuracy: float
    aggregated_loss: float
    clients: Tuple[ClientMetrics, ...]
    privacy: RoundPrivacyRecord


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    records: Tuple[RoundRecord, ...]
    final_report: EvalReport
    final_params: ParameterSet = field(repr=False)
    initial_params: ParameterSet = field(repr=False)
    elapsed_s: float = 0.0


@dataclass(frozen=True)
class MultiRunResult:
    seeds: Tuple[int, ...]
    final_accuracies: Tuple[float, ...]
    mean_accuracy: float
    std_accuracy: float
    results: Tuple[ExperimentResult, ...] = field(repr=False, default=())


@dataclass(frozen=True)
class CiaReport:
    strategy: str
    mode: str
    aggregated_loss: float
    target_shadow_loss: float
    relative_difference_pct: float
    first_round_test_loss: float
    aggregated_accuracy: float
    shadow_size: int
    absent_aggregated_loss: Optional[float] = None
    absent_target_shadow_loss: Optional[float] = None
    absent_relative_difference_pct: Optional[float] = None


# -------------------------
# Round loop
# -------------------------
def initial_global(config: ExperimentConfig, federation: Federation) -> ParameterSet:
    spec = federation.model_spec(config.hidden_dims)
    if config.init_seed is not None:
        init_seed = int(config.init_seed)
        pretrain_seed = derive_seed(init_seed, "pretrain")
    else:
        init_seed = derive_seed(config.seed, "init")
        pretrain_seed = derive_seed(config.seed, "pretrain")

    if not config.uses_pretraining():
        return init_params(spec, init_seed)
    epochs = config.train.epochs if config.pretrain_epochs is None else config.pretrain_epochs
    pre_cfg = replace(config.train, epochs=epochs, proximal_mu=0.0, seed=pretrain_seed)
    log.info("pretraining initial parameters on %d validation samples (%d epochs)", len(federation.server_validation), epochs)
    return pretrain_initial(spec, federation.server_validation, pre_cfg, init_seed=init_seed)


def _train_client(config: ExperimentConfig, client: ClientData, global_params: ParameterSet, r: int) -> ClientUpdate:
    try:
        cfg = config.client_train_config(client.client_id, r)
        params = train_local(global_params, client.train, cfg)
        return ClientUpdate(
            client_id=client.client_id,
            sample_count=len(client.train),
            params=params,
            train_loss=mean_loss(params, client.train),
        )
    except (FedSimError, ValueError, FloatingPointError) as e:
        raise RoundError(r, e, client.client_id) from e


def evaluate_clients(params: ParameterSet, federation: Federation) -> Tuple[float, float, Tuple[ClientMetrics, ...]]:
    """Per-client test metrics and their test-size weighted aggregate."""
    metrics = []
    for c in federation.clients:
        if len(c.test) == 0:
            metrics.append(ClientMetrics(c.client_id, 0.0, 0.0, 0))
            continue
        rep = evaluate(params, c.test)
        metrics.append(ClientMetrics(c.client_id, rep.accuracy, rep.loss, rep.sample_count))
    total = sum(m.test_count for m in metrics)
    if total == 0:
        raise DatasetError("every client test split is empty")
    acc = sum(m.test_count * m.accuracy for m in metrics) / total
    loss = sum(m.test_count * m.loss for m in metrics) / total
    return float(acc), float(loss), tuple(metrics)


def run_experiment(
    config: ExperimentConfig, federation: Federation, distance_override: Optional[float] = None
) -> ExperimentResult:
    t0 = time.time()
    initial = initial_global(config, federation)
    state = ServerState.initial(initial)
    global_params = initial
    records: List[RoundRecord] = []
    noise_base = config.privacy.noise_seed if config.privacy.noise_seed is not None else config.seed

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        for r in range(1, config.rounds + 1):
            try:
                futures = [pool.submit(_train_client, config, c, global_params, r) for c in federation.clients]
                updates = [f.result() for f in futures]
                global_params, state, prec = privatize_round(
                    config.privacy,
                    global_params,
                    updates,
                    config.strategy,
                    state,
                    derive_seed(noise_base, "noise", r),
                    distance_override=distance_override,
                )
                acc, loss, clients = evaluate_clients(global_params, federation)
            except RoundError:
                raise
            except (FedSimError, ValueError, FloatingPointError) as e:
                raise RoundError(r, e) from e

            records.append(RoundRecord(r, acc, loss, clients, prec))
            log.info(
                "round %d/%d: agg_acc=%.4f agg_loss=%.4f d=%.4g sigma=%.4g%s",
                r,
                config.rounds,
                acc,
                loss,
                prec.distance,
                prec.sigma,
                " [d=0]" if prec.warning else "",
            )

    final = evaluate(global_params, federation.server_test)
    return ExperimentResult(
        config=config,
        records=tuple(records),
        final_report=final,
        final_params=global_params,
        initial_params=initial,
        elapsed_s=time.time() - t0,
    )


# -------------------------
# Statistics
# -------------------------
def summarize_last_k(records: Sequence[RoundRecord], k: int = 5) -> Tuple[float, float]:
    """Mean and population std of the aggregated accuracy over the last k rounds."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(records) < k:
        raise ValueError(f"need at least {k} rounds, got {len(records)}")
    acc = np.array([rec.aggregated_accuracy for rec in records[-k:]], dtype=np.float64)
    return float(acc.mean()), float(acc.std())


def multi_run(config: ExperimentConfig, federation: Federation, num_seeds: int = 5) -> MultiRunResult:
    if num_seeds < 2:
        raise ConfigError(f"multi_run needs at least 2 seeds, got {num_seeds}")
    seeds, results = [], []
    for k in range(num_seeds):
        run_seed = derive_seed(config.seed, "run", k)
        log.info("multi-run %d/%d (seed %d)", k + 1, num_seeds, run_seed)
        seeds.append(run_seed)
        results.append(run_experiment(replace(config, seed=run_seed), federation))
    acc = np.array([res.final_report.accuracy for res in results], dtype=np.float64)
    return MultiRunResult(
        seeds=tuple(seeds),
        final_accuracies=tuple(float(a) for a in acc),
        mean_accuracy=float(acc.mean()),
        std_accuracy=float(acc.std()),
        results=tuple(results),
    )


# -------------------------
# Client inference attack
# -------------------------
def relative_difference_pct(aggregated_loss: float, target_loss: float) -> float:
    """(target - aggregated) / target * 100."""
    if target_loss == 0:
        raise ValueError("target loss is zero")
    return float((target_loss - aggregated_loss) / target_loss * 100.0)


def run_cia(config: ExperimentConfig, federation: Federation) -> List[CiaReport]:
    """
    One round with cia.local_epochs local epochs per (strategy, mode). The
    attacker sees the aggregated model and the aggregated client metrics and
    scores the model on a shadow sample of the target's training data.
    """
    if config.scenario != "cia":
        raise ConfigError(f"run_cia needs scenario 'cia', got '{config.scenario}'")
    cia = config.cia
    target = federation.client(cia.target_id)
    federation.client(cia.attacker_id)
    shadow = shadow_sample(target.train, cia.shadow_fraction, derive_seed(config.seed, "shadow"))
    if len(shadow) == 0:
        raise DatasetError(f"shadow sample of client {cia.target_id} is empty")
    log.info("cia: attacker=%d target=%d shadow=%d rows", cia.attacker_id, cia.target_id, len(shadow))

    absent = federation.without(cia.target_id) if cia.compare_absent else None
    reports = []
    for kind in cia.strategies or (config.strategy.kind,):
        for mode in cia.modes:
            cfg = replace(
                config,
                rounds=1,
                train=replace(config.train, epochs=cia.local_epochs),
                strategy=replace(config.strategy, kind=kind),
                privacy=config.privacy.with_mode(mode),
            )
            res = run_experiment(cfg, federation)
            rec = res.records[0]
            target_loss = mean_loss(res.final_params, shadow)
            extra = {}
            if absent is not None:
                res_absent = run_experiment(cfg, absent)
                absent_target = mean_loss(res_absent.final_params, shadow)
                extra = dict(
                    absent_aggregated_loss=res_absent.records[0].aggregated_loss,
                    absent_target_shadow_loss=absent_target,
                    absent_relative_difference_pct=relative_difference_pct(
                        res_absent.records[0].aggregated_loss, absent_target
                    ),
                )
            report = CiaReport(
                strategy=kind,
                mode=mode,
                aggregated_loss=rec.aggregated_loss,
                target_shadow_loss=target_loss,
                relative_difference_pct=relative_difference_pct(rec.aggregated_loss, target_loss),
                first_round_test_loss=res.final_report.loss,
                aggregated_accuracy=rec.aggregated_accuracy,
                shadow_size=len(shadow),
                **extra,
            )
            log.info(
                "cia %s/%s: aggregated=%.4f target=%.4f diff=%.3f%%",
                kind,
                mode,
                report.aggregated_loss,
                report.target_shadow_loss,
                report.relative_difference_pct,
            )
            reports.append(report)
    return reports
