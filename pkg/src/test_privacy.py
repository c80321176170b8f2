# src/test_privacy.py
"""
test_privacy.py
Clipping, round distance, noise scale and the per-round privacy wrapper.

Usage:
    python -m pytest src/test_privacy.py
"""

import numpy as np
import pytest

from src.errors import PrivacyError
from src.params import ParameterSet, axpy, l2_norm
from src.privacy import (
    PrivacyConfig,
    add_gaussian_noise,
    clip_update,
    compute_ctilde,
    compute_distance,
    noise_stddev,
    privatize_round,
)
from src.strategies import ClientUpdate, ServerState, StrategyConfig, aggregate


def ps(*arrays):
    return ParameterSet(tuple((f"l{i}", np.asarray(a, dtype=np.float64)) for i, a in enumerate(arrays)))


def random_set(rng, scale=1.0):
    return ps(rng.normal(scale=scale, size=(3, 2)), rng.normal(scale=scale, size=2))


# ─── clipping ───

def test_clip_inside_ball_returns_client():
    g = ps([0.0, 0.0])
    w = ps([3.0, 4.0])
    assert clip_update(g, w, 5.0) is w


def test_clip_outside_ball_projects_onto_sphere():
    g = ps([0.0, 0.0])
    out = clip_update(g, ps([3.0, 4.0]), 1.0)
    np.testing.assert_allclose(out["l0"], [0.6, 0.8], rtol=1e-12)
    assert l2_norm(axpy(out, g, 1.0, -1.0)) <= 1.0


def test_clip_bound_and_idempotence_on_random_sets():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        g = random_set(rng)
        w = random_set(rng, scale=3.0)
        c = float(rng.uniform(0.01, 4.0))
        once = clip_update(g, w, c)
        assert l2_norm(axpy(once, g, 1.0, -1.0)) <= c
        assert clip_update(g, once, c) is once


def test_clip_rejects_non_positive_norm():
    with pytest.raises(PrivacyError):
        clip_update(ps([0.0]), ps([1.0]), 0.0)


# ─── distances ───

def test_ctilde_example():
    sets = [ps([0.0, 0.0]), ps([3.0, 4.0]), ps([0.0, 1.0])]
    assert compute_ctilde(sets) == 5.0


def test_distance_example_and_single_layer_equality():
    sets = [ps([0.0, 0.0]), ps([3.0, 4.0])]
    assert compute_distance(sets) == 5.0
    assert compute_distance(sets) == compute_ctilde(sets)
    two_layers = [ps([0.0, 0.0], [0.0]), ps([3.0, 4.0], [1.0])]
    assert compute_distance(two_layers) == 3.0


def test_distance_of_identical_sets_is_zero():
    a = random_set(np.random.default_rng(1))
    assert compute_distance([a, a, a]) == 0.0


def test_distance_needs_two_sets():
    with pytest.raises(PrivacyError):
        compute_distance([ps([1.0])])


# ─── noise ───

def test_noise_stddev_values():
    cfg = PrivacyConfig(mode="global_dp", noise_multiplier=0.01, clipping_norm=5.0)
    assert noise_stddev(cfg, num_clients=4) == pytest.approx(0.0125)
    assert noise_stddev(cfg, num_clients=2) == pytest.approx(0.025)
    assert noise_stddev(cfg.with_mode("none"), num_clients=4) == 0.0
    metric = cfg.with_mode("metric")
    assert noise_stddev(metric, d=0.5, num_clients=4) == pytest.approx(0.025)
    for d in (0.1, 1.0, 3.7):
        assert noise_stddev(metric, d=d, num_clients=4) * d == pytest.approx(noise_stddev(cfg, num_clients=4))
    fixed = PrivacyConfig(mode="global_dp", sampled_clients=4)
    assert noise_stddev(fixed, num_clients=2) == pytest.approx(0.0125)


def test_noise_stddev_errors():
    metric = PrivacyConfig(mode="metric")
    with pytest.raises(PrivacyError):
        noise_stddev(metric, d=0.0, num_clients=4)
    with pytest.raises(PrivacyError):
        noise_stddev(metric, d=1.0)


def test_gaussian_noise_statistics():
    zero = ps(np.zeros(1_000_000))
    noisy = add_gaussian_noise(zero, 0.0125, rng_seed=3)
    x = noisy["l0"]
    assert abs(float(np.mean(x))) < 5 * 0.0125 / np.sqrt(x.size)
    assert float(np.std(x)) == pytest.approx(0.0125, rel=0.01)
    assert add_gaussian_noise(zero, 0.0125, rng_seed=3).bit_equal(noisy)


def test_zero_sigma_returns_input():
    p = ps([1.0, 2.0])
    assert add_gaussian_noise(p, 0.0, rng_seed=0) is p
    with pytest.raises(PrivacyError):
        add_gaussian_noise(p, -1.0, rng_seed=0)


def test_config_validation():
    with pytest.raises(PrivacyError):
        PrivacyConfig(mode="local")
    with pytest.raises(PrivacyError):
        PrivacyConfig(clipping_norm=0.0)
    with pytest.raises(PrivacyError):
        PrivacyConfig(noise_multiplier=-0.1)


# ─── round wrapper ───

@pytest.fixture
def round_inputs():
    rng = np.random.default_rng(5)
    g = random_set(rng)
    updates = [ClientUpdate(i, int(n), axpy(g, random_set(rng, 0.5), 1.0, 1.0)) for i, n in ((1, 10), (2, 30), (3, 20))]
    return g, updates


def test_none_mode_is_plain_aggregation(round_inputs):
    g, updates = round_inputs
    state = ServerState.initial(g)
    strategy = StrategyConfig("fedavg")
    new, new_state, rec = privatize_round(PrivacyConfig(), g, updates, strategy, state, round_seed=0)
    expected, _ = aggregate(strategy, state, updates)
    assert new.bit_equal(expected)
    assert rec.sigma == 0.0 and rec.clipped_clients == 0
    assert rec.ctilde == pytest.approx(compute_ctilde([u.params for u in updates]))
    assert new_state.round_index == 1


def test_ctilde_only_recorded_in_first_round(round_inputs):
    g, updates = round_inputs
    state = ServerState.initial(g)
    _, state, first = privatize_round(PrivacyConfig(), g, updates, StrategyConfig(), state, round_seed=0)
    _, _, second = privatize_round(PrivacyConfig(), state.global_params, updates, StrategyConfig(), state, round_seed=1)
    assert first.ctilde is not None and second.ctilde is None
    assert second.round_index == 2


def test_metric_unit_distance_matches_global_dp(round_inputs):
    g, updates = round_inputs
    state = ServerState.initial(g)
    strategy = StrategyConfig("fedavg")
    cfg = PrivacyConfig(mode="global_dp", noise_multiplier=0.5, clipping_norm=1.0)
    a, _, rec_a = privatize_round(cfg, g, updates, strategy, state, round_seed=42)
    b, _, rec_b = privatize_round(cfg.with_mode("metric"), g, updates, strategy, state, round_seed=42, distance_override=1.0)
    assert a.bit_equal(b)
    assert rec_a.sigma == rec_b.sigma == pytest.approx(0.5 * 1.0 / 3)


def test_noisy_params_land_in_state(round_inputs):
    g, updates = round_inputs
    cfg = PrivacyConfig(mode="global_dp", noise_multiplier=1.0, clipping_norm=10.0)
    new, new_state, rec = privatize_round(cfg, g, updates, StrategyConfig(), ServerState.initial(g), round_seed=7)
    assert rec.sigma > 0
    assert new_state.global_params is new
    clean, _ = aggregate(StrategyConfig(), ServerState.initial(g), updates)
    assert not new.bit_equal(clean)


def test_clipping_counts_clients(round_inputs):
    g, updates = round_inputs
    cfg = PrivacyConfig(mode="global_dp", noise_multiplier=0.0, clipping_norm=1e-3)
    new, _, rec = privatize_round(cfg, g, updates, StrategyConfig(), ServerState.initial(g), round_seed=0)
    assert rec.clipped_clients == 3
    assert l2_norm(axpy(new, g, 1.0, -1.0)) <= 1e-3 + 1e-12


def test_identical_clients_in_metric_mode_warn_and_skip_noise():
    g = ps([0.0, 0.0])
    same = ps([1.0, 1.0])
    updates = [ClientUpdate(1, 5, same), ClientUpdate(2, 5, same)]
    cfg = PrivacyConfig(mode="metric", noise_multiplier=1.0, clipping_norm=5.0)
    new, _, rec = privatize_round(cfg, g, updates, StrategyConfig(), ServerState.initial(g), round_seed=0)
    assert rec.warning and rec.distance == 0.0 and rec.sigma == 0.0
    assert new.bit_equal(same)


def test_single_client_in_metric_mode_warns():
    g = ps([0.0])
    cfg = PrivacyConfig(mode="metric")
    _, _, rec = privatize_round(cfg, g, [ClientUpdate(1, 3, ps([0.5]))], StrategyConfig(), ServerState.initial(g), 0)
    assert rec.warning and rec.sigma == 0.0 and rec.ctilde is None


def test_metric_sigma_times_distance_is_global_sigma():
    rng = np.random.default_rng(9)
    cfg = PrivacyConfig(mode="global_dp", noise_multiplier=0.01, clipping_norm=5.0)
    sigma_global = noise_stddev(cfg, num_clients=4)
    for d in rng.uniform(0.01, 100.0, size=100):
        assert noise_stddev(cfg.with_mode("metric"), d=d, num_clients=4) * d == pytest.approx(sigma_global, rel=1e-15)
