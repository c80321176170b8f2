# src/test_params.py
"""
test_params.py
Parameter-set arithmetic, distances and the binary codec.

Usage:
    python -m pytest src/test_params.py
"""

import numpy as np
import pytest

from src.errors import CodecError, ShapeMismatchError
from src.params import (
    ParameterSet,
    axpy,
    coordinate_median,
    frobenius_per_layer_mean_distance,
    from_bytes,
    l2_norm,
    load_params,
    save_params,
    to_bytes,
    weighted_mean,
)


def ps(*arrays):
    return ParameterSet(tuple((f"l{i}", np.asarray(a, dtype=np.float64)) for i, a in enumerate(arrays)))


def random_set(rng, shapes=((3, 2), (2,))):
    return ps(*[rng.normal(size=s) for s in shapes])


# ─── container ───

def test_arrays_are_read_only_copies():
    src = np.array([1.0, 2.0])
    p = ps(src)
    src[0] = 99.0
    assert p["l0"][0] == 1.0
    with pytest.raises(ValueError):
        p["l0"][0] = 5.0


def test_rejects_non_finite_and_duplicate_names():
    with pytest.raises(ValueError):
        ps([1.0, np.nan])
    with pytest.raises(ShapeMismatchError):
        ParameterSet((("a", np.zeros(1)), ("a", np.zeros(1))))


# ─── weighted mean ───

def test_weighted_mean_scalar():
    out = weighted_mean([ps([0.0]), ps([4.0])], [1, 3])
    assert out["l0"][0] == 3.0


def test_weighted_mean_identical_sets_bit_equal():
    rng = np.random.default_rng(1)
    a = random_set(rng)
    out = weighted_mean([a, a, a], [2.0, 7.0, 0.5])
    assert out.bit_equal(a)


def test_weighted_mean_matches_per_coordinate_oracle():
    rng = np.random.default_rng(2)
    sets = [random_set(rng) for _ in range(3)]
    w = [2.0, 5.0, 1.0]
    out = weighted_mean(sets, w)
    flat = np.stack([s.flatten() for s in sets])
    expected = [sum(w[i] * flat[i, j] for i in range(3)) / sum(w) for j in range(flat.shape[1])]
    np.testing.assert_allclose(out.flatten(), expected, rtol=1e-10)


def test_weighted_mean_within_convex_hull():
    rng = np.random.default_rng(3)
    sets = [random_set(rng) for _ in range(4)]
    out = weighted_mean(sets, rng.uniform(0.1, 5.0, size=4)).flatten()
    flat = np.stack([s.flatten() for s in sets])
    assert np.all(out >= flat.min(axis=0) - 1e-12)
    assert np.all(out <= flat.max(axis=0) + 1e-12)


def test_weighted_mean_errors():
    with pytest.raises(ValueError):
        weighted_mean([ps([1.0]), ps([2.0])], [0.0, 0.0])
    with pytest.raises(ShapeMismatchError):
        weighted_mean([ps([1.0]), ps([1.0, 2.0])], [1.0, 1.0])


# ─── median ───

def test_coordinate_median_odd_and_even():
    assert coordinate_median([ps([1.0]), ps([2.0]), ps([9.0])])["l0"][0] == 2.0
    assert coordinate_median([ps([1.0]), ps([3.0])])["l0"][0] == 2.0


def test_coordinate_median_sort_oracle_and_permutation():
    rng = np.random.default_rng(4)
    sets = [random_set(rng) for _ in range(5)]
    out = coordinate_median(sets).flatten()
    flat = np.sort(np.stack([s.flatten() for s in sets]), axis=0)
    np.testing.assert_array_equal(out, flat[2])
    assert coordinate_median(sets[::-1]).bit_equal(coordinate_median(sets))


def test_median_equals_mean_for_two_inputs():
    rng = np.random.default_rng(5)
    a, b = random_set(rng), random_set(rng)
    np.testing.assert_allclose(
        coordinate_median([a, b]).flatten(), weighted_mean([a, b], [1, 1]).flatten(), rtol=1e-12
    )


# ─── norms / distances ───

def test_l2_norm_examples():
    assert l2_norm(ps(np.zeros((2, 2)))) == 0.0
    assert l2_norm(ps([3.0, 4.0])) == 5.0
    assert l2_norm(ps([3.0], [4.0])) == 5.0


def test_frobenius_distance_examples():
    a = ps(np.zeros((2, 2)))
    b = ps([[3.0, 4.0], [0.0, 0.0]])
    assert frobenius_per_layer_mean_distance(a, a) == 0.0
    assert frobenius_per_layer_mean_distance(a, b) == 5.0
    two_a = ps([0.0, 0.0], [0.0])
    two_b = ps([3.0, 4.0], [1.0])
    assert frobenius_per_layer_mean_distance(two_a, two_b) == 3.0


def test_frobenius_distance_metric_axioms():
    rng = np.random.default_rng(6)
    for _ in range(200):
        a, b, c = (random_set(rng) for _ in range(3))
        ab = frobenius_per_layer_mean_distance(a, b)
        assert ab >= 0
        assert ab == frobenius_per_layer_mean_distance(b, a)
        assert ab <= frobenius_per_layer_mean_distance(a, c) + frobenius_per_layer_mean_distance(c, b) + 1e-12


def test_axpy_examples():
    rng = np.random.default_rng(7)
    a, b = random_set(rng), random_set(rng)
    assert axpy(a, b, 1.0, 0.0).bit_equal(a)
    assert l2_norm(axpy(a, a, 1.0, -1.0)) == 0.0
    np.testing.assert_allclose(axpy(a, b, 2.0, -0.5).flatten(), 2.0 * a.flatten() - 0.5 * b.flatten(), rtol=1e-12)
    assert l2_norm(axpy(a, b, 1.0, -1.0)) == l2_norm(axpy(b, a, 1.0, -1.0))


# ─── codec ───

def test_codec_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    p = ParameterSet((("w", rng.normal(size=(3, 4))), ("b", rng.normal(size=4)), ("s", np.array(2.5))))
    assert from_bytes(to_bytes(p)).bit_equal(p)
    path = save_params(tmp_path / "p.bin", p)
    assert load_params(path).bit_equal(p)


def test_codec_rejects_truncated_and_trailing():
    raw = to_bytes(ps([1.0, 2.0]))
    with pytest.raises(CodecError):
        from_bytes(raw[:-3])
    with pytest.raises(CodecError):
        from_bytes(raw + b"\x00")
