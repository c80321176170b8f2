# src/params.py
"""
params.py
Dense parameter sets: the unit of exchange between clients and server.

A ParameterSet is an ordered sequence of (name, float64 ndarray) layers.
Every arithmetic helper below is pure: inputs are never modified and the
arrays inside a ParameterSet are read-only.

Binary format (little-endian):
    u32 layer_count
    per layer: u32 name_len, name bytes (utf-8), u32 rank, rank x u64 dims
    then every layer's float64 payload, in layer order
"""

from __future__ import annotations
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, List, Sequence, Tuple, Union

import numpy as np

from .errors import CodecError, ShapeMismatchError

Layer = Tuple[str, np.ndarray]


# -------------------------
# Data
# -------------------------
@dataclass(frozen=True)
class ParameterSet:
    layers: Tuple[Layer, ...]

    def __post_init__(self):
        names = [name for name, _ in self.layers]
        if len(set(names)) != len(names):
            raise ShapeMismatchError(f"duplicate layer names: {names}")
        frozen = []
        for name, arr in self.layers:
            a = np.array(arr, dtype=np.float64, copy=True)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"layer '{name}' holds non-finite values")
            a.setflags(write=False)
            frozen.append((str(name), a))
        object.__setattr__(self, "layers", tuple(frozen))

    @classmethod
    def from_pairs(cls, pairs: Sequence[Layer]) -> "ParameterSet":
        return cls(tuple((n, a) for n, a in pairs))

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.layers)

    @property
    def arrays(self) -> Tuple[np.ndarray, ...]:
        return tuple(arr for _, arr in self.layers)

    @property
    def shapes(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(arr.shape for _, arr in self.layers)

    @property
    def num_parameters(self) -> int:
        return int(sum(arr.size for _, arr in self.layers))

    def __len__(self) -> int:
        return len(self.layers)

    def __iter__(self) -> Iterator[Layer]:
        return iter(self.layers)

    def __getitem__(self, name: str) -> np.ndarray:
        for n, arr in self.layers:
            if n == name:
                return arr
        raise KeyError(name)

    def flatten(self) -> np.ndarray:
        if not self.layers:
            return np.zeros(0, dtype=np.float64)
        return np.concatenate([arr.reshape(-1) for _, arr in self.layers])

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ParameterSet":
        return ParameterSet(tuple((n, fn(a)) for n, a in self.layers))

    def compatible_with(self, other: "ParameterSet") -> bool:
        return self.names == other.names and self.shapes == other.shapes

    def bit_equal(self, other: "ParameterSet") -> bool:
        """Exact equality, including the sign of zeros."""
        if not self.compatible_with(other):
            return False
        return all(a.tobytes() == b.tobytes() for a, b in zip(self.arrays, other.arrays))


def zeros_like(pset: ParameterSet) -> ParameterSet:
    return pset.map(np.zeros_like)


def check_compatible(sets: Sequence[ParameterSet]) -> None:
    if not sets:
        raise ShapeMismatchError("no parameter sets given")
    ref = sets[0]
    for i, s in enumerate(sets[1:], start=1):
        if not ref.compatible_with(s):
            raise ShapeMismatchError(
                f"parameter set {i} is not shape-compatible: "
                f"{list(zip(s.names, s.shapes))} vs {list(zip(ref.names, ref.shapes))}"
            )


# -------------------------
# Linear algebra
# -------------------------
def axpy(a: ParameterSet, b: ParameterSet, alpha: float, beta: float) -> ParameterSet:
    """alpha*a + beta*b, coordinate-wise."""
    check_compatible([a, b])
    return ParameterSet(
        tuple((n, alpha * x + beta * y) for (n, x), y in zip(a.layers, b.arrays))
    )


def weighted_mean(sets: Sequence[ParameterSet], weights: Sequence[float]) -> ParameterSet:
    """
    Coordinate-wise sum(w_i * set_i) / sum(w_i).

    Evaluated as ref + sum(p_i * (set_i - ref)) with p_i = w_i / sum(w) and ref
    the first set, so identical inputs come back bit-for-bit.
    """
    check_compatible(sets)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(sets),):
        raise ValueError(f"expected {len(sets)} weights, got {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    total = float(np.sum(w))
    if total <= 0.0:
        raise ValueError("weights sum to zero")
    p = w / total

    ref = sets[0]
    out: List[Layer] = []
    for li, (name, base) in enumerate(ref.layers):
        acc = np.zeros_like(base)
        for pi, s in zip(p, sets):
            acc += pi * (s.arrays[li] - base)
        out.append((name, base + acc))
    return ParameterSet(tuple(out))


def coordinate_median(sets: Sequence[ParameterSet]) -> ParameterSet:
    """Per-coordinate median; an even count averages the two middle values."""
    check_compatible(sets)
    ref = sets[0]
    return ParameterSet(
        tuple(
            (name, np.median(np.stack([s.arrays[li] for s in sets], axis=0), axis=0))
            for li, name in enumerate(ref.names)
        )
    )


def l2_norm(pset: ParameterSet) -> float:
    """Euclidean norm over every coordinate of every layer."""
    return float(np.sqrt(sum(float(np.sum(a * a)) for a in pset.arrays)))


def frobenius_per_layer_mean_distance(a: ParameterSet, b: ParameterSet) -> float:
    """(1/|L|) * sum over layers of ||a(l) - b(l)||_F."""
    check_compatible([a, b])
    if len(a) == 0:
        return 0.0
    dists = [float(np.linalg.norm((x - y).reshape(-1))) for x, y in zip(a.arrays, b.arrays)]
    return float(sum(dists) / len(dists))


# -------------------------
# Binary codec
# -------------------------
def to_bytes(pset: ParameterSet) -> bytes:
    header = [struct.pack("<I", len(pset))]
    for name, arr in pset.layers:
        raw = name.encode("utf-8")
        header.append(struct.pack("<I", len(raw)))
        header.append(raw)
        header.append(struct.pack("<I", arr.ndim))
        header.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    payload = [np.ascontiguousarray(arr, dtype="<f8").tobytes() for arr in pset.arrays]
    return b"".join(header + payload)


def from_bytes(buf: bytes) -> ParameterSet:
    view = memoryview(buf)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CodecError(f"truncated tensor payload at byte {pos} (need {n} more)")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    specs: List[Tuple[str, Tuple[int, ...]]] = []
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        try:
            name = bytes(take(name_len)).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CodecError(f"layer name is not utf-8: {e}") from e
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank)) if rank else ()
        specs.append((name, tuple(int(d) for d in dims)))

    layers: List[Layer] = []
    for name, shape in specs:
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        arr = np.frombuffer(bytes(take(8 * n)), dtype="<f8").astype(np.float64)
        layers.append((name, arr.reshape(shape)))
    if pos != len(view):
        raise CodecError(f"{len(view) - pos} trailing bytes after tensor payload")
    return ParameterSet(tuple(layers))


def save_params(path: Union[str, Path], pset: ParameterSet) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(pset))
    return path


def load_params(path: Union[str, Path]) -> ParameterSet:
    return from_bytes(Path(path).read_bytes())
