"""Square M-QAM mapping, symbol generation and symbol-error scoring."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc


@dataclass(frozen=True)
class Constellation:
    order: int
    points: np.ndarray  # complex, unit average energy, index -> point

    def __post_init__(self) -> None:
        self.points.setflags(write=False)

    def map(self, indices: np.ndarray) -> np.ndarray:
        return self.points[np.asarray(indices)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "re", "im"])
            for i, c in enumerate(self.points):
                w.writerow([i, repr(float(c.real)), repr(float(c.imag))])


@dataclass(frozen=True)
class SymbolBatch:
    indices: np.ndarray
    onehot: np.ndarray
    mapped: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


def qam_constellation(order: int) -> Constellation:
    """Square QAM with levels +-1, +-3, ... per axis, row-major indices, unit energy.

    Index ``i`` sits at row ``i // side`` (imaginary level) and column ``i % side``
    (real level); natural (not Gray) labelling.
    """
    side = math.isqrt(order) if order > 0 else 0
    if order < 4 or side * side != order or side & (side - 1):
        raise ValueError(f"unsupported modulation order {order}: need a square power of two (4, 16, 64, ...)")
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    re = np.tile(levels, side)
    im = np.repeat(levels[::-1], side)
    pts = re + 1j * im
    pts /= math.sqrt(np.mean(np.abs(pts) ** 2))
    return Constellation(order, pts)


def constellation_moments(c: Constellation) -> tuple[float, float]:
    """(mu4, mu6): normalised fourth and sixth moments under uniform symbols."""
    p2 = np.abs(c.points) ** 2
    e2 = p2.mean()
    return float(np.mean(p2**2) / e2**2), float(np.mean(p2**3) / e2**3)


def onehot(indices: np.ndarray, order: int) -> np.ndarray:
    indices = np.asarray(indices)
    out = np.zeros((len(indices), order))
    out[np.arange(len(indices)), indices] = 1.0
    return out


def generate_symbols(rng: np.random.Generator, order: int, n: int, constellation: Constellation | None = None) -> SymbolBatch:
    """``n`` i.i.d. uniform symbols with index, one-hot and mapped views."""
    if n < 1:
        raise ValueError("n must be >= 1")
    c = constellation or qam_constellation(order)
    if c.order != order:
        raise ValueError("constellation order does not match")
    idx = rng.integers(0, order, size=n)
    return SymbolBatch(idx, onehot(idx, order), c.map(idx))


def ser(predicted: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of positions where the detected index differs from the sent one."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError(f"length mismatch: {predicted.shape} vs {truth.shape}")
    if predicted.size == 0:
        raise ValueError("empty symbol vectors")
    return float(np.mean(predicted != truth))


def ml_baseline_detect(received: np.ndarray, c: Constellation, chunk: int = 1 << 16) -> np.ndarray:
    """Nearest-point decisions; exact ties resolve to the lower index."""
    received = np.asarray(received, dtype=complex).ravel()
    out = np.empty(received.shape, dtype=np.int64)
    for start in range(0, len(received), chunk):
        r = received[start : start + chunk]
        d = np.abs(r[:, None] - c.points[None, :]) ** 2
        out[start : start + chunk] = np.argmin(d, axis=1)  # argmin returns the first minimum
    return out


def qpsk_ser_awgn(es_n0: float) -> float:
    """Closed-form QPSK symbol error rate on AWGN for linear Es/N0."""
    q = 0.5 * erfc(math.sqrt(es_n0 / 2.0))
    return 2.0 * q - q * q
