# src/privacy.py
"""
privacy.py
Server-side Gaussian mechanism wrapped around any aggregation strategy.

Modes:
- none       plain aggregation, nothing clipped, no noise
- global_dp  clip every client update to C, aggregate, add N(0, sigma^2) with sigma = n_e * C / n_c
- metric     as global_dp but sigma is divided by the round distance d: the largest
             layer-averaged Frobenius distance between two clipped client models

The distance is measured after clipping. sigma is a standard deviation.
"""

from __future__ import annotations
import itertools
import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import PrivacyError
from .params import ParameterSet, axpy, check_compatible, frobenius_per_layer_mean_distance, l2_norm
from .strategies import ClientUpdate, ServerState, StrategyConfig, aggregate

log = logging.getLogger(__name__)

MODES = ("none", "global_dp", "metric")


# -------------------------
# Data
# -------------------------
@dataclass(frozen=True)
class PrivacyConfig:
    mode: str = "none"
    noise_multiplier: float = 0.01
    clipping_norm: float = 5.0
    sampled_clients: Optional[int] = None  # None: number of participating clients
    noise_seed: Optional[int] = None  # None: derived from the experiment seed

    def __post_init__(self):
        if self.mode not in MODES:
            raise PrivacyError(f"privacy mode must be one of {MODES}, got {self.mode!r}")
        if not self.noise_multiplier >= 0 or not np.isfinite(self.noise_multiplier):
            raise PrivacyError(f"noise_multiplier must be finite and >= 0, got {self.noise_multiplier}")
        if not self.clipping_norm > 0 or not np.isfinite(self.clipping_norm):
            raise PrivacyError(f"clipping_norm must be finite and > 0, got {self.clipping_norm}")
        if self.sampled_clients is not None and self.sampled_clients < 1:
            raise PrivacyError(f"sampled_clients must be >= 1, got {self.sampled_clients}")

    def with_mode(self, mode: str) -> "PrivacyConfig":
        return replace(self, mode=mode)


@dataclass(frozen=True)
class RoundPrivacyRecord:
    round_index: int
    distance: float = 1.0
    sigma: float = 0.0
    ctilde: Optional[float] = None
    warning: bool = False
    clipped_clients: int = 0


# -------------------------
# Clipping / distances
# -------------------------
def clip_update(global_params: ParameterSet, client: ParameterSet, clipping_norm: float) -> ParameterSet:
    """
    Project client onto the l2 ball of radius C around global. Inside the ball
    the client object is returned as is; outside, the scale is shrunk by ulps
    until the realized distance is <= C, so clipping twice equals clipping once.
    """
    if clipping_norm <= 0:
        raise PrivacyError(f"clipping_norm must be > 0, got {clipping_norm}")
    delta = axpy(client, global_params, 1.0, -1.0)
    norm = l2_norm(delta)
    if norm <= clipping_norm:
        return client

    scale = clipping_norm / norm
    step = np.finfo(np.float64).eps
    while True:
        clipped = axpy(global_params, delta, 1.0, scale)
        if l2_norm(axpy(clipped, global_params, 1.0, -1.0)) <= clipping_norm:
            return clipped
        scale *= 1.0 - step
        step *= 2.0


def _max_pairwise(sets: Sequence[ParameterSet], dist: Callable[[ParameterSet, ParameterSet], float]) -> float:
    if len(sets) < 2:
        raise PrivacyError(f"need at least 2 parameter sets, got {len(sets)}")
    check_compatible(sets)
    return float(max(dist(a, b) for a, b in itertools.combinations(sets, 2)))


def compute_ctilde(sets: Sequence[ParameterSet]) -> float:
    """Largest l2 distance between two client models (clipping-norm heuristic)."""
    return _max_pairwise(sets, lambda a, b: l2_norm(axpy(a, b, 1.0, -1.0)))


def compute_distance(sets: Sequence[ParameterSet]) -> float:
    return _max_pairwise(sets, frobenius_per_layer_mean_distance)


# -------------------------
# Noise
# -------------------------
def noise_stddev(config: PrivacyConfig, d: float = 1.0, num_clients: Optional[int] = None) -> float:
    if config.mode == "none":
        return 0.0
    n_c = config.sampled_clients if config.sampled_clients is not None else num_clients
    if n_c is None or n_c < 1:
        raise PrivacyError("number of sampled clients is unknown")
    sigma_global = config.noise_multiplier * config.clipping_norm / n_c
    if config.mode == "global_dp":
        return float(sigma_global)
    if not d > 0:
        raise PrivacyError(f"metric mode needs a positive distance, got {d}")
    return float(sigma_global / d)


def add_gaussian_noise(params: ParameterSet, sigma: float, rng_seed: int) -> ParameterSet:
    if sigma < 0 or not np.isfinite(sigma):
        raise PrivacyError(f"sigma must be finite and >= 0, got {sigma}")
    if sigma == 0:
        return params
    rng = np.random.default_rng(rng_seed)
    return params.map(lambda a: a + rng.normal(0.0, sigma, size=a.shape))


# -------------------------
# Round wrapper
# -------------------------
def privatize_round(
    config: PrivacyConfig,
    global_params: ParameterSet,
    updates: Sequence[ClientUpdate],
    strategy: StrategyConfig,
    state: ServerState,
    round_seed: int,
    distance_override: Optional[float] = None,
) -> Tuple[ParameterSet, ServerState, RoundPrivacyRecord]:
    """
    clip -> distance (metric) -> aggregate -> noise.
    distance_override replaces the measured distance (test hook).
    """
    round_index = state.round_index + 1
    ordered = sorted(updates, key=lambda u: u.client_id)
    ctilde = None
    if state.round_index == 0 and len(ordered) >= 2:
        ctilde = compute_ctilde([u.params for u in ordered])

    if config.mode == "none":
        new, new_state = aggregate(strategy, state, ordered)
        return new, new_state, RoundPrivacyRecord(round_index, ctilde=ctilde)

    clipped = []
    n_clipped = 0
    for u in ordered:
        p = clip_update(global_params, u.params, config.clipping_norm)
        if p is not u.params:
            n_clipped += 1
            u = replace(u, params=p)
        clipped.append(u)

    distance = 1.0
    warning = False
    if config.mode == "metric":
        if distance_override is not None:
            distance = float(distance_override)
        elif len(clipped) >= 2:
            distance = compute_distance([u.params for u in clipped])
        else:
            distance = 0.0
        if distance == 0.0:
            warning = True
            log.warning("round %d: client models coincide after clipping (d=0), no noise added", round_index)

    sigma = 0.0 if warning else noise_stddev(config, distance, len(clipped))
    new, new_state = aggregate(strategy, state, clipped)
    noisy = add_gaussian_noise(new, sigma, round_seed)
    if noisy is not new:
        new_state = replace(new_state, global_params=noisy)

    record = RoundPrivacyRecord(
        round_index,
        distance=distance,
        sigma=sigma,
        ctilde=ctilde,
        warning=warning,
        clipped_clients=n_clipped,
    )
    log.debug("round %d privacy: d=%.6g sigma=%.6g clipped=%d", round_index, distance, sigma, n_clipped)
    return noisy, new_state, record
