from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from krakensim import kernels


class UnknownObservationSchema(ValueError):
    pass


@dataclass(frozen=True)
class SemanticState:
    subject: str
    key: int
    annotation: tuple[float, ...] = ()
    confidence: float = 1.0
    timestamp: int = 0


@dataclass(frozen=True)
class Quantizer:
    """Product of per-dimension uniform quantizers over ``[lo, hi)``.

    Keys are row-major flattened cell indices, so the alphabet is
    ``range(n_keys)``.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    cells: tuple[int, ...]

    def __post_init__(self):
        if not (len(self.lo) == len(self.hi) == len(self.cells) >= 1):
            raise ValueError("lo, hi and cells must have the same non-zero length")
        if any(h <= l for l, h in zip(self.lo, self.hi)) or any(c < 1 for c in self.cells):
            raise ValueError("need hi > lo and cells >= 1 in every dimension")

    @property
    def dims(self) -> int:
        return len(self.cells)

    @property
    def n_keys(self) -> int:
        return math.prod(self.cells)

    def _check(self, raw) -> np.ndarray:
        arr = np.asarray(raw, dtype=float)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != self.dims or not np.all(np.isfinite(arr)):
            raise UnknownObservationSchema(
                f"expected finite observations with {self.dims} dimension(s), got shape {np.shape(raw)}"
            )
        return arr

    def encode_batch(self, raw) -> tuple[np.ndarray, np.ndarray]:
        arr = self._check(raw)
        cells, dist = kernels.quantize(arr, self.lo, self.hi, self.cells)
        keys = np.ravel_multi_index(tuple(cells.T), self.cells)
        return keys.astype(np.int64), dist

    def encode(self, raw: Sequence[float] | float) -> tuple[int, float]:
        keys, dist = self.encode_batch(np.atleast_1d(np.asarray(raw, dtype=float)))
        return int(keys[0]), float(dist[0])

    def centre(self, key: int) -> tuple[float, ...]:
        idx = np.unravel_index(int(key), self.cells)
        return tuple(
            l + (i + 0.5) * (h - l) / c for l, h, c, i in zip(self.lo, self.hi, self.cells, idx)
        )


def perceive(
    raw,
    quantizer: Quantizer,
    subject: str,
    now: int,
    confidence: float = 1.0,
) -> tuple[SemanticState, float]:
    """Abstract a raw observation into a state key plus its semantic distortion."""
    key, dist = quantizer.encode(raw)
    annotation = tuple(float(x) for x in np.atleast_1d(np.asarray(raw, dtype=float)))
    return SemanticState(subject, key, annotation, confidence, now), dist
