"""Energy / latency constants, the event ledger, and the analytic cost model."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from fractions import Fraction

import numpy as np

OP_KINDS = ("write", "read", "random", "copy", "reset", "urng", "calc")

SHARED = -1  # compartment id for macro-level events (the [0,1] RNG)


@dataclass(frozen=True)
class EnergyConstants:
    """Per-operation energies in fJ (array ops are per 4-bit group)."""

    e_random: float = 79.1
    e_copy: float = 47.5
    e_read: float = 343.1
    e_write: float = 372.6
    e_urng: float = 234.6  # per 8-bit u
    # calibrated: 506.5 - 79.1 - 47.5 - 343.1 - 234.6/64, rounded
    e_calc: float = 33.1
    e_reset: float = 0.0  # array reset; RNG-side reset lives inside e_urng
    urng_share: int = 64

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be nonnegative")
        if self.urng_share < 1:
            raise ValueError("urng_share must be >= 1")

    def for_kind(self, kind: str) -> float:
        return getattr(self, f"e_{kind}")


@dataclass(frozen=True)
class TimingConstants:
    """Iteration timing (ns).

    ``t_base`` and ``t_step`` drive the throughput model.  The remaining
    fields are waveform-scale durations used only to timestamp trace events.
    """

    t_base: float = 192.0
    t_step: float = 192.0
    t_write: float = 1.0
    t_random: float = 1.0
    t_copy: float = 2.0
    t_read: float = 1.0
    t_urng: float = 1.0
    t_calc: float = 1.0
    t_reset: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")

    def for_kind(self, kind: str) -> float:
        return getattr(self, f"t_{kind}")

    def iteration_ns(self, n_bits: int) -> float:
        _check_bits(n_bits)
        return self.t_base + (n_bits // 4) * self.t_step


def _check_bits(n_bits: int):
    if n_bits <= 0 or n_bits % 4:
        raise ValueError(f"n_bits must be a positive multiple of 4, got {n_bits}")


class PerfLedger:
    """Accumulates (kind, bits, compartment, energy, time) events.

    Events are stored run-length encoded: identical event tuples share one
    counter per compartment, so million-step runs stay cheap.  Totals are
    computed in exact rational arithmetic from the stored float values, which
    makes them equal to the sum over the expanded event list.  With
    ``trace=True`` every event is also kept in order in :attr:`trace`.
    """

    def __init__(self, energy: EnergyConstants | None = None,
                 timing: TimingConstants | None = None, trace: bool = False):
        self.energy = energy or EnergyConstants()
        self.timing = timing or TimingConstants()
        self._counts: dict[tuple, np.ndarray] = {}
        self.trace: list[tuple] | None = [] if trace else None

    def record(self, kind, compartments, count=1, *, bits=4, energy_fj=None, time_ns=None):
        if kind not in OP_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        energy = self.energy.for_kind(kind) if energy_fj is None else float(energy_fj)
        time = self.timing.for_kind(kind) if time_ns is None else float(time_ns)
        comps = np.asarray(compartments, dtype=np.int64).reshape(-1)
        if comps.size == 0:
            return
        key = (kind, int(bits), energy, time)
        idx = comps + 1
        arr = self._counts.get(key)
        need = int(idx.max()) + 1
        if arr is None or arr.size < need:
            grown = np.zeros(max(need, 1 if arr is None else arr.size), dtype=np.int64)
            if arr is not None:
                grown[:arr.size] = arr
            arr = self._counts[key] = grown
        if comps.size == 1:
            arr[idx[0]] += count
        else:
            np.add.at(arr, idx, count)
        if self.trace is not None:
            counts = np.broadcast_to(np.asarray(count), comps.shape)
            for c, n in zip(comps.tolist(), counts.tolist()):
                self.trace.extend([(kind, int(bits), c, energy, time)] * int(n))

    def events(self):
        """Yield ``(kind, bits, compartment, energy_fj, time_ns, count)``."""
        for (kind, bits, energy, time), arr in sorted(self._counts.items()):
            for i in np.flatnonzero(arr):
                yield kind, bits, int(i) - 1, energy, time, int(arr[i])

    def count(self, kind: str, compartment: int | None = None) -> int:
        total = 0
        for k, _, c, _, _, n in self.events():
            if k == kind and (compartment is None or c == compartment):
                total += n
        return total

    def _exact(self, pos: int, kind: str | None = None) -> Fraction:
        total = Fraction(0)
        for key, arr in self._counts.items():
            if kind is not None and key[0] != kind:
                continue
            total += Fraction(key[pos]) * int(arr.sum())
        return total

    @property
    def total_energy_fj(self) -> float:
        return float(self._exact(2))

    @property
    def total_time_ns(self) -> float:
        return float(self._exact(3))

    def energy_by_kind(self) -> dict[str, float]:
        return {k: float(self._exact(2, k)) for k in OP_KINDS if self.count(k)}

    def counts_by_kind(self) -> dict[str, int]:
        out = defaultdict(int)
        for key, arr in self._counts.items():
            out[key[0]] += int(arr.sum())
        return {k: out[k] for k in OP_KINDS if out[k]}

    def merge(self, other: "PerfLedger") -> "PerfLedger":
        for key, arr in other._counts.items():
            mine = self._counts.get(key)
            if mine is None:
                self._counts[key] = arr.copy()
                continue
            n = max(mine.size, arr.size)
            merged = np.zeros(n, dtype=np.int64)
            merged[:mine.size] += mine
            merged[:arr.size] += arr
            self._counts[key] = merged
        if self.trace is not None and other.trace is not None:
            self.trace.extend(other.trace)
        return self

    def snapshot(self) -> dict[str, int]:
        return self.counts_by_kind()

    def to_dict(self) -> dict:
        return {
            "total_energy_fj": self.total_energy_fj,
            "total_energy_pj": self.total_energy_fj / 1000.0,
            "total_time_ns": self.total_time_ns,
            "counts": self.counts_by_kind(),
            "energy_fj": self.energy_by_kind(),
        }


def energy_per_sample(constants: EnergyConstants, n_bits: int, accepted: bool) -> float:
    """Energy of one sampling step in pJ."""
    _check_bits(n_bits)
    k = n_bits // 4
    c = constants
    fj = (c.e_random * k + c.e_copy * k + c.e_read * k
          + c.e_urng / c.urng_share + c.e_calc)
    if not accepted:
        fj += c.e_copy * k
    return fj / 1000.0


def blended_energy(constants: EnergyConstants, n_bits: int, acceptance_rate: float) -> float:
    if not 0.0 <= acceptance_rate <= 1.0:
        raise ValueError("acceptance_rate must be in [0, 1]")
    acc = energy_per_sample(constants, n_bits, True)
    rej = energy_per_sample(constants, n_bits, False)
    return acceptance_rate * acc + (1.0 - acceptance_rate) * rej


def throughput(timing: TimingConstants, n_bits: int, compartments: int) -> float:
    """Samples per second for ``compartments`` chains advancing in lockstep."""
    if compartments < 1:
        raise ValueError("compartments must be >= 1")
    return compartments / (timing.iteration_ns(n_bits) * 1e-9)


def throughput_curve(timing: TimingConstants, compartments: int = 64,
                     bits=(4, 8, 16, 32)) -> list[dict]:
    return [{"n_bits": b, "samples_per_s": throughput(timing, b, compartments)} for b in bits]


AREA_MM2 = 0.1967
AREA_SHARES = {"rw": 34.136, "subarray": 32.839, "decoders": 32.800, "urng": 0.225}


def area_report() -> dict:
    """Static layout breakdown of the reference macro (percent of core area)."""
    shares = dict(AREA_SHARES)
    other = max(0.0, 100.0 - sum(shares.values()))
    return {"total_mm2": AREA_MM2, "percent": shares, "other_percent": round(other, 6)}


def constants_to_dict(energy: EnergyConstants, timing: TimingConstants) -> dict:
    return {"energy_constants": asdict(energy), "timing": asdict(timing)}
