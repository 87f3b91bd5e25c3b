"""Goodness-of-fit checks for sampled words and raw RNG output."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .memory import GROUP_WIDTH, GroupAddr, MacroArray, bits_to_word, word_to_bits
from .targets import TargetPdf

MIN_EXPECTED = 5.0


@dataclass(frozen=True)
class Histogram:
    bins: np.ndarray
    total: int

    @classmethod
    def from_samples(cls, samples, n_bits: int) -> "Histogram":
        samples = np.asarray(samples).astype(np.int64).reshape(-1)
        bins = np.bincount(samples, minlength=2 ** n_bits)
        if bins.size != 2 ** n_bits:
            raise ValueError(f"sample value outside {n_bits}-bit domain")
        return cls(bins, int(bins.sum()))

    @classmethod
    def from_counts(cls, counts) -> "Histogram":
        counts = np.asarray(counts, dtype=np.int64)
        return cls(counts, int(counts.sum()))

    def to_csv_rows(self):
        return [(i, int(c)) for i, c in enumerate(self.bins)]


def _probs(target) -> np.ndarray:
    if isinstance(target, TargetPdf):
        return target.normalized()
    t = np.asarray(target, dtype=float)
    if np.any(t < 0) or not t.sum() > 0:
        raise ValueError("target weights must be nonnegative with positive sum")
    return t / t.sum()


def tv_distance(hist: Histogram, target) -> float:
    """Total variation distance between the empirical and normalized target law."""
    probs = _probs(target)
    if hist.bins.size != probs.size:
        raise ValueError("histogram and target domains differ")
    if hist.total <= 0:
        raise ValueError("empty histogram")
    return 0.5 * float(np.abs(hist.bins / hist.total - probs).sum())


# -- chi-square -------------------------------------------------------------

def _gamma_series(a: float, x: float) -> float:
    # lower regularized P(a, x) by its power series
    term = total = 1.0 / a
    ap = a
    for _ in range(100000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cfrac(a: float, x: float) -> float:
    # upper regularized Q(a, x) by modified Lentz continued fraction
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 100000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gammaincc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function ``Q(a, x)``."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return min(1.0, _gamma_cfrac(a, x))


def chi2_sf(statistic: float, dof: int) -> float:
    """Survival function of the chi-square distribution."""
    if dof < 1:
        raise ValueError("dof must be >= 1")
    return gammaincc(dof / 2.0, statistic / 2.0)


def merge_bins(observed, expected, min_expected: float = MIN_EXPECTED):
    """Merge adjacent bins left to right until each group expects >= ``min_expected``.

    A trailing group that stays short is folded into the previous group.
    """
    obs_out, exp_out = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs_out.append(o_acc)
            exp_out.append(e_acc)
            o_acc = e_acc = 0.0
    if o_acc or e_acc:
        if obs_out:
            obs_out[-1] += o_acc
            exp_out[-1] += e_acc
        else:
            obs_out.append(o_acc)
            exp_out.append(e_acc)
    return np.array(obs_out), np.array(exp_out)


class ChiSquare(NamedTuple):
    statistic: float
    p_value: float
    dof: int


def chi_square_gof(hist: Histogram, target, min_expected: float = MIN_EXPECTED) -> ChiSquare:
    """Pearson goodness-of-fit after merging low-expectation bins."""
    probs = _probs(target)
    if hist.bins.size != probs.size:
        raise ValueError("histogram and target domains differ")
    if hist.total <= 0:
        raise ValueError("empty histogram")
    obs, exp = merge_bins(hist.bins.astype(float), probs * hist.total, min_expected)
    if obs.size < 2:
        raise ValueError("chi-square test needs at least two bins after merging")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(exp > 0, (obs - exp) ** 2 / exp, np.where(obs > 0, np.inf, 0.0))
    stat = float(terms.sum())
    dof = obs.size - 1
    return ChiSquare(stat, chi2_sf(stat, dof), dof)


def uniformity(u8_samples, width: int = 8) -> ChiSquare:
    """Chi-square test of ``width``-bit integers against the flat law."""
    hist = Histogram.from_samples(u8_samples, width)
    return chi_square_gof(hist, np.ones(2 ** width))


def monobit_bias(u8_samples, width: int = 8) -> np.ndarray:
    """Frequency of a 1 at each bit position (index 0 = least significant)."""
    samples = np.asarray(u8_samples).astype(np.uint64).reshape(-1)
    if samples.size == 0:
        raise ValueError("no samples")
    bits = (samples[:, None] >> np.arange(width, dtype=np.uint64)) & np.uint64(1)
    return bits.mean(axis=0)


# -- transfer matrix --------------------------------------------------------

def empirical_transfer_matrix(array: MacroArray, x: int, p: float, trials: int,
                              rng: np.random.Generator, n_bits: int = GROUP_WIDTH) -> np.ndarray:
    """Frequency row of pseudo-read outcomes starting from word ``x``.

    Each batch writes ``x`` into every word slot of the whole array, pseudo-reads
    the array, and reads it back, so one batch yields
    ``compartments * rows * slots`` independent trials.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    k = n_bits // GROUP_WIDTH
    slots = array.groups // k
    width = slots * n_bits
    word = np.tile(word_to_bits(x, n_bits), slots)
    addr = GroupAddr(0, 0, 0)
    every, rows = slice(None), slice(None)
    counts = np.zeros(2 ** n_bits, dtype=np.int64)
    left = trials
    while left > 0:
        array.write(addr, np.broadcast_to(word, (array.compartments, array.rows, width)),
                    comp=every, row=rows)
        array.pseudo_read(addr, width, p=p, rng=rng, comp=every, row=rows)
        bits = array.read(addr, width, comp=every, row=rows)
        words = bits_to_word(bits.reshape(-1, n_bits)).astype(np.int64)[:left]
        counts += np.bincount(words, minlength=2 ** n_bits)
        left -= words.size
    return counts / trials
