"""Accurate [0, 1] random numbers from biased bitcells via a multi-stage XOR cascade.

64 cells are reset to zero and pseudo-read, giving 64 Bernoulli(p) bits.
Each XOR stage halves the width and maps the per-bit bias
``lambda -> 2*lambda*(1 - lambda)``; three stages leave one 8-bit value.
"""

from __future__ import annotations

import warnings
from decimal import Context, Decimal

import numpy as np

from .device import REFERENCE_TEMPERATURE, FlipModel
from .memory import GroupAddr, MacroArray, bits_to_word
from .perf import SHARED, PerfLedger

RAW_CELLS = 64


class BiasWarning(UserWarning):
    pass


def xor_reduce(bits) -> np.ndarray:
    """Pairwise XOR of adjacent bits along the last axis: ``out[i] = in[2i] ^ in[2i+1]``."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] % 2:
        raise ValueError("xor_reduce needs an even number of bits")
    return bits[..., 0::2] ^ bits[..., 1::2]


def lambda_after(lambda0: float, n: int) -> float:
    """Probability of a 1 after ``n`` XOR stages fed with Bernoulli(lambda0) bits.

    Iterates the deviation ``d = 0.5 - lambda`` as ``d <- 2 d**2``, which is
    algebraically the same map and keeps full relative precision near 0.5.
    """
    if not 0.0 <= lambda0 <= 1.0:
        raise ValueError("lambda0 must be in [0, 1]")
    if n < 0:
        raise ValueError("n must be >= 0")
    d = 0.5 - lambda0
    for _ in range(n):
        d = 2.0 * d * d
    return 0.5 - d


_WIDE = Context(prec=60, Emin=-10**15, Emax=10**15)


def deviation_sequence(lambda0: float, n: int) -> list[Decimal]:
    """``[0.5 - lambda_0, ..., 0.5 - lambda_n]`` in 60-digit decimal arithmetic.

    The exponent range is wide enough that the doubly-exponential decay never
    underflows within any practical number of stages.
    """
    d = _WIDE.subtract(Decimal("0.5"), Decimal(lambda0))
    out = [d]
    two = Decimal(2)
    for _ in range(n):
        d = _WIDE.multiply(two, _WIDE.multiply(d, d))
        out.append(d)
    return out


def output_bits(stages: int) -> int:
    if stages < 1:
        raise ValueError("stages must be >= 1")
    if RAW_CELLS % (2 ** stages):
        raise ValueError(f"{RAW_CELLS} raw cells not divisible by 2**{stages}")
    return RAW_CELLS >> stages


class MsxorRng:
    """Reset + pseudo-read raw entropy followed by an XOR cascade.

    Owns a private single-row 64-cell array; its reset/pseudo-read activity is
    accounted inside the single ``urng`` event logged per output value.
    """

    def __init__(self, rng: np.random.Generator, flip_model: FlipModel | None = None,
                 stages: int = 3, ledger: PerfLedger | None = None,
                 cvdd: float = 0.5, temperature: float = REFERENCE_TEMPERATURE):
        self.width = output_bits(stages)
        self.stages = stages
        self.rng = rng
        self.flip_model = flip_model or FlipModel()
        self.ledger = ledger
        self.cvdd = cvdd
        self.temperature = temperature
        self._cells = MacroArray(1, 1, RAW_CELLS, flip_model=self.flip_model)

    def default_p(self) -> float:
        # cells start at zero, so only the 0->1 probability matters
        return self.flip_model.flip_probs(self.cvdd, self.temperature)[0]

    @staticmethod
    def _check_p(p: float):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p_BFR {p} outside [0, 1]")
        if p == 0.0:
            warnings.warn("p_BFR = 0: raw bits are constant zero", BiasWarning, stacklevel=3)
        elif p > 0.5:
            warnings.warn(f"p_BFR = {p} > 0.5: bias guarantee assumes p <= 0.5",
                          BiasWarning, stacklevel=3)

    def raw_bits(self, p: float | None = None) -> np.ndarray:
        """Reset the private cells, pseudo-read them, return the 64 raw bits."""
        p = self.default_p() if p is None else p
        self._check_p(p)
        addr = GroupAddr(0, 0, 0)
        self._cells.reset_zero(addr, RAW_CELLS)
        return self._cells.pseudo_read(addr, RAW_CELLS, p=p, uniforms=self.rng.random(RAW_CELLS))

    def cascade(self, raw: np.ndarray) -> np.ndarray:
        out = raw
        for _ in range(self.stages):
            out = xor_reduce(out)
        return out

    def next_u8(self, p: float | None = None) -> int:
        value = int(bits_to_word(self.cascade(self.raw_bits(p))))
        if self.ledger is not None:
            self.ledger.record("urng", SHARED, bits=self.width)
        return value

    def draw(self, n: int, p: float | None = None, compartment: int = SHARED) -> np.ndarray:
        """``n`` successive outputs; identical to ``n`` calls of :meth:`next_u8`."""
        p = self.default_p() if p is None else p
        self._check_p(p)
        raw = (self.rng.random((n, RAW_CELLS)) < p).astype(np.uint8)
        values = bits_to_word(self.cascade(raw))
        if self.ledger is not None and n:
            self.ledger.record("urng", compartment, n, bits=self.width)
        return values
