# src/strategies.py
"""
strategies.py
Server aggregation rules and the optimizer state they carry between rounds.

Kinds:
- fedavg     n_i-weighted mean of client parameters
- fedavgm    server momentum on the weighted pseudo-gradient
- fedmedian  coordinate-wise median of client parameters
- fedprox    weighted mean; the proximal term lives in client training
- fedopt     plain server step on the unweighted pseudo-gradient
- fedyogi    Yogi adaptive server step on the unweighted pseudo-gradient

Updates are always folded in ascending client_id order.
"""

from __future__ import annotations
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .data import LabeledDataset
from .errors import ConfigError, DatasetError, ShapeMismatchError
from .model import ModelSpec, TrainConfig, init_params, train_local
from .params import ParameterSet, axpy, check_compatible, coordinate_median, weighted_mean, zeros_like

KINDS = ("fedavg", "fedavgm", "fedmedian", "fedprox", "fedopt", "fedyogi")

# Server step sizes used when server_lr is left unset
DEFAULT_SERVER_LR = {"fedavgm": 1.0, "fedopt": 1.0, "fedyogi": 0.01}


# -------------------------
# Data
# -------------------------
@dataclass(frozen=True)
class ClientUpdate:
    client_id: int
    sample_count: int
    params: ParameterSet
    train_loss: float = 0.0

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError(f"client {self.client_id}: sample_count must be >= 1, got {self.sample_count}")


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "fedavg"
    beta: float = 0.9
    server_lr: Optional[float] = None
    prox_mu: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.99
    tau: float = 1e-3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"strategy kind must be one of {KINDS}, got {self.kind!r}")
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError(f"beta must lie in [0, 1), got {self.beta}")
        if self.server_lr is not None and self.server_lr <= 0:
            raise ConfigError(f"server_lr must be > 0, got {self.server_lr}")
        if self.prox_mu < 0:
            raise ConfigError(f"prox_mu must be >= 0, got {self.prox_mu}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {value}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")

    @property
    def effective_server_lr(self) -> float:
        if self.server_lr is not None:
            return float(self.server_lr)
        return DEFAULT_SERVER_LR.get(self.kind, 1.0)

    @property
    def client_proximal_mu(self) -> float:
        """mu forwarded to client training (FedProx only)."""
        return float(self.prox_mu) if self.kind == "fedprox" else 0.0

    @property
    def needs_initial_params(self) -> bool:
        return self.kind in ("fedopt", "fedyogi") or (self.kind == "fedavgm" and self.beta > 0)


@dataclass(frozen=True)
class ServerState:
    round_index: int
    global_params: ParameterSet
    momentum: ParameterSet = field(repr=False)
    m: ParameterSet = field(repr=False)
    v: ParameterSet = field(repr=False)

    @classmethod
    def initial(cls, global_params: ParameterSet) -> "ServerState":
        zero = zeros_like(global_params)
        return cls(round_index=0, global_params=global_params, momentum=zero, m=zero, v=zero)


# -------------------------
# Rules
# -------------------------
def _ordered(updates: Sequence[ClientUpdate]) -> List[ClientUpdate]:
    if not updates:
        raise ValueError("aggregate needs at least one client update")
    ordered = sorted(updates, key=lambda u: u.client_id)
    ids = [u.client_id for u in ordered]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate client ids in updates: {ids}")
    return ordered


def _pseudo_gradient(global_params: ParameterSet, sets: Sequence[ParameterSet]) -> ParameterSet:
    """(1/n) * sum(w_i - w), unweighted."""
    diffs = [axpy(s, global_params, 1.0, -1.0) for s in sets]
    return weighted_mean(diffs, [1.0] * len(diffs))


def aggregate(
    config: StrategyConfig, state: ServerState, updates: Sequence[ClientUpdate]
) -> Tuple[ParameterSet, ServerState]:
    ordered = _ordered(updates)
    w = state.global_params
    sets = [u.params for u in ordered]
    try:
        check_compatible([w] + sets)
    except ShapeMismatchError as e:
        raise ShapeMismatchError(f"client update does not match the global model: {e}") from e
    counts = [float(u.sample_count) for u in ordered]
    lr = config.effective_server_lr
    momentum, m, v = state.momentum, state.m, state.v

    if config.kind in ("fedavg", "fedprox"):
        new = weighted_mean(sets, counts)

    elif config.kind == "fedavgm":
        mean = weighted_mean(sets, counts)
        delta = axpy(w, mean, 1.0, -1.0)
        momentum = axpy(momentum, delta, config.beta, 1.0)
        # w - lr*v written as mean + (delta - lr*v); beta=0, lr=1 then returns mean exactly
        new = axpy(mean, axpy(delta, momentum, 1.0, -lr), 1.0, 1.0)

    elif config.kind == "fedmedian":
        new = coordinate_median(sets)

    elif config.kind == "fedopt":
        new = axpy(w, _pseudo_gradient(w, sets), 1.0, lr)

    else:  # fedyogi
        delta = _pseudo_gradient(w, sets)
        m = axpy(m, delta, config.beta1, 1.0 - config.beta1)
        sq = [d * d for d in delta.arrays]
        v = ParameterSet(
            tuple(
                (name, vi - (1.0 - config.beta2) * s * np.sign(vi - s))
                for (name, vi), s in zip(v.layers, sq)
            )
        )
        step = ParameterSet(
            tuple(
                (name, lr * mi / (np.sqrt(vi) + config.tau))
                for (name, mi), vi in zip(m.layers, v.arrays)
            )
        )
        new = axpy(w, step, 1.0, 1.0)

    new_state = replace(
        state, round_index=state.round_index + 1, global_params=new, momentum=momentum, m=m, v=v
    )
    return new, new_state


# -------------------------
# Initial parameters
# -------------------------
def pretrain_initial(
    spec: ModelSpec, validation: LabeledDataset, config: TrainConfig, init_seed: Optional[int] = None
) -> ParameterSet:
    """init_params followed by train_local on the server's validation split."""
    if len(validation) == 0:
        raise DatasetError("pretraining needs a non-empty validation set")
    params = init_params(spec, config.seed if init_seed is None else init_seed)
    return train_local(params, validation, config)
