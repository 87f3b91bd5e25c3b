"""Plain floating-point Metropolis-Hastings used as an oracle for the macro model.

Same proposal law (each bit of the current word flips independently), but a
real-valued uniform ``u`` and no array, ledger or RNG-circuit modeling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .targets import TargetPdf


@dataclass
class ReferenceResult:
    iterations: np.ndarray
    values: np.ndarray
    candidates: np.ndarray
    accepted: np.ndarray
    u: np.ndarray
    accepted_counts: np.ndarray
    steps: int

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted_counts.sum()) / (self.steps * self.accepted_counts.size)

    @property
    def n_samples(self) -> int:
        return int(self.values.size)

    def flat(self) -> np.ndarray:
        return self.values.T.reshape(-1)

    def rows(self):
        for c in range(self.values.shape[1]):
            for i, it in enumerate(self.iterations):
                yield (c, int(it), int(self.candidates[i, c]), int(self.accepted[i, c]),
                       int(self.values[i, c]), float(self.u[i, c]))


def reference_mh(target: TargetPdf, n_bits: int, p01: float, iterations: int, burn_in: int,
                 chains: int = 64, seed: int = 0, thin: int = 1, p10: float | None = None,
                 init_value: int | None = None) -> ReferenceResult:
    if burn_in > iterations:
        raise ValueError("burn_in must not exceed iterations")
    if n_bits > 62:
        raise ValueError("reference sampler supports at most 62-bit words")
    p10 = p01 if p10 is None else p10
    rng = np.random.default_rng(seed)
    weights = np.int64(1) << np.arange(n_bits - 1, -1, -1, dtype=np.int64)
    if init_value is None:
        cur = rng.integers(0, 2 ** n_bits, size=chains, dtype=np.int64)
    else:
        cur = np.full(chains, init_value, dtype=np.int64)
    p_cur = np.asarray(target.density(cur), dtype=float)
    n_ret = max(0, -(-(iterations - burn_in) // thin))
    values = np.zeros((n_ret, chains), dtype=np.int64)
    cands = np.zeros((n_ret, chains), dtype=np.int64)
    accs = np.zeros((n_ret, chains), dtype=bool)
    us = np.zeros((n_ret, chains))
    acc_count = np.zeros(chains, dtype=np.int64)
    r = 0
    for i in range(iterations):
        bits = (cur[:, None] & weights) != 0
        thresh = np.where(bits, p10, p01)
        flips = rng.random((chains, n_bits)) < thresh
        cand = cur ^ (flips * weights).sum(axis=1)
        p_cand = np.asarray(target.density(cand), dtype=float)
        u = rng.random(chains)
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha = np.where(p_cur > 0, p_cand / p_cur, np.inf)
        acc = u < alpha
        cur = np.where(acc, cand, cur)
        p_cur = np.where(acc, p_cand, p_cur)
        acc_count += acc
        if i >= burn_in and (i - burn_in) % thin == 0:
            values[r], cands[r], accs[r], us[r] = cur, cand, acc, u
            r += 1
    its = burn_in + thin * np.arange(n_ret)
    return ReferenceResult(its, values, cands, accs, us, acc_count, iterations)
