"""Bitcell flip behavior under pseudo-read.

A bitcell that is pseudo-read flips its stored bit with a probability that
depends on the lowered cell supply (CVDD) and on ambient temperature.  The
model here is a piecewise-linear table over CVDD multiplied by a
piecewise-linear temperature scale, both clamped at their end points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

REFERENCE_TEMPERATURE = 27.0

DEFAULT_ANCHORS = ((0.5, 0.45), (0.6, 0.40), (0.8, 0.0))
# (temperature degC, multiplicative scale on the CVDD curve)
DEFAULT_TEMP_CURVE = ((-40.0, 0.40 / 0.45), (-20.0, 1.0), (85.0, 1.0))


def _interp_clamped(x: float, points: Sequence[tuple[float, float]]) -> float:
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return float(np.interp(x, xs, ys))


@dataclass(frozen=True)
class FlipModel:
    """Immutable flip-probability model.

    ``flip01`` / ``flip10`` override the probability of a 0->1 / 1->0 flip.
    When left as ``None`` both directions use the interpolated bit flip
    rate, which keeps the proposal kernel symmetric.
    """

    anchors: tuple[tuple[float, float], ...] = DEFAULT_ANCHORS
    temp_curve: tuple[tuple[float, float], ...] = DEFAULT_TEMP_CURVE
    flip01: float | None = None
    flip10: float | None = None

    def __post_init__(self):
        anchors = tuple((float(v), float(p)) for v, p in self.anchors)
        curve = tuple((float(t), float(s)) for t, s in self.temp_curve)
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "temp_curve", curve)
        if not anchors:
            raise ValueError("flip model needs at least one cvdd anchor")
        for (v0, p0), (v1, p1) in zip(anchors, anchors[1:]):
            if not v1 > v0:
                raise ValueError("cvdd anchors must be strictly increasing")
            if p1 > p0:
                raise ValueError("flip probability must be non-increasing in cvdd")
        for _, p in anchors:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"anchor probability {p} outside [0, 1]")
        if not curve:
            raise ValueError("temperature curve must not be empty")
        for (t0, _), (t1, _) in zip(curve, curve[1:]):
            if not t1 > t0:
                raise ValueError("temperature curve must be strictly increasing")
        for _, s in curve:
            if s < 0.0:
                raise ValueError("temperature scale must be nonnegative")
        for name in ("flip01", "flip10"):
            p = getattr(self, name)
            if p is not None and not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")

    @property
    def symmetric(self) -> bool:
        return self.flip01 is None and self.flip10 is None

    def flip_probs(self, cvdd: float, temperature: float = REFERENCE_TEMPERATURE) -> tuple[float, float]:
        """Return ``(p01, p10)`` at the given operating point."""
        p = bfr_at(self, cvdd, temperature)
        p01 = p if self.flip01 is None else self.flip01
        p10 = p if self.flip10 is None else self.flip10
        return p01, p10

    @classmethod
    def from_dict(cls, data: dict) -> "FlipModel":
        kwargs = {}
        if "anchors" in data:
            kwargs["anchors"] = tuple(tuple(a) for a in data["anchors"])
        if "temp_curve" in data:
            kwargs["temp_curve"] = tuple(tuple(a) for a in data["temp_curve"])
        for name in ("flip01", "flip10"):
            if data.get(name) is not None:
                kwargs[name] = float(data[name])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "anchors": [list(a) for a in self.anchors],
            "temp_curve": [list(a) for a in self.temp_curve],
            "flip01": self.flip01,
            "flip10": self.flip10,
        }


def bfr_at(model: FlipModel, cvdd: float, temperature: float = REFERENCE_TEMPERATURE) -> float:
    """Bit flip rate at supply ``cvdd`` (V) and ``temperature`` (degC)."""
    if not np.isfinite(temperature):
        raise ValueError("temperature must be finite")
    p = _interp_clamped(cvdd, model.anchors) * _interp_clamped(temperature, model.temp_curve)
    return min(max(p, 0.0), 1.0)


def flip_bit(model: FlipModel | None, current: int, p: float, rng: np.random.Generator) -> int:
    """Flip a single bit with probability ``p``.

    ``model`` is accepted for signature symmetry with the array operations;
    the probability is passed explicitly.  One uniform is consumed per call.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"flip probability {p} outside [0, 1]")
    return int(current) ^ int(rng.random() < p)


def flip_bits(bits: np.ndarray, p01: float, p10: float, uniforms: np.ndarray) -> np.ndarray:
    """Vectorized flip of a bit array given one uniform per bit."""
    bits = np.asarray(bits, dtype=np.uint8)
    thresh = np.where(bits == 0, p01, p10)
    return bits ^ (uniforms < thresh).astype(np.uint8)
