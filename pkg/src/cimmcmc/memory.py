"""Compartmentalized SRAM sub-array with write/read/pseudo-read/copy/reset.

Cells are stored densely as ``uint8`` with shape ``(compartments, rows, cols)``.
A word of ``n`` bits occupies ``n/4`` consecutive 4-column groups of one row,
most significant bit in the lowest column.

Every operation addresses a *block*: a compartment selector (int, slice or
index array), a row selector (int or slice), a starting group and a group
count.  All compartments in a selector act in lockstep, as they do in the
macro when the shared word lines fire.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .device import REFERENCE_TEMPERATURE, FlipModel, flip_bits
from .perf import PerfLedger

GROUP_WIDTH = 4


class AddressError(IndexError):
    pass


@dataclass(frozen=True)
class GroupAddr:
    compartment: int
    row: int
    group: int


def word_to_bits(values, n_bits: int) -> np.ndarray:
    """Integer word(s) -> bit array, MSB first, shape ``(..., n_bits)``."""
    values = np.asarray(values, dtype=np.uint64)
    shifts = np.arange(n_bits - 1, -1, -1, dtype=np.uint64)
    return ((values[..., None] >> shifts) & np.uint64(1)).astype(np.uint8)


def bits_to_word(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint64)
    n = bits.shape[-1]
    weights = np.uint64(1) << np.arange(n - 1, -1, -1, dtype=np.uint64)
    return (bits * weights).sum(axis=-1, dtype=np.uint64)


def parse_bits(text: str) -> np.ndarray:
    return np.array([int(ch) for ch in text], dtype=np.uint8)


class MacroArray:
    """Bitcell storage plus the primitive in-memory operations.

    ``compartment_offset`` lets a worker own a contiguous slice of a larger
    array (see :meth:`partition`); ledger events carry global compartment ids.
    """

    def __init__(self, compartments: int = 64, rows: int = 64, cols: int = 64,
                 flip_model: FlipModel | None = None, ledger: PerfLedger | None = None,
                 cells: np.ndarray | None = None, compartment_offset: int = 0):
        if cols % GROUP_WIDTH:
            raise ValueError(f"cols must be a multiple of {GROUP_WIDTH}")
        if cells is None:
            cells = np.zeros((compartments, rows, cols), dtype=np.uint8)
        self.cells = cells
        self.flip_model = flip_model or FlipModel()
        self.ledger = ledger if ledger is not None else PerfLedger()
        self.compartment_offset = compartment_offset

    @property
    def compartments(self) -> int:
        return self.cells.shape[0]

    @property
    def rows(self) -> int:
        return self.cells.shape[1]

    @property
    def cols(self) -> int:
        return self.cells.shape[2]

    @property
    def groups(self) -> int:
        return self.cols // GROUP_WIDTH

    @property
    def capacity_bits(self) -> int:
        return self.cells.size

    def partition(self, start: int, stop: int, ledger: PerfLedger) -> "MacroArray":
        """View of compartments ``[start, stop)`` sharing cell storage."""
        return MacroArray(cells=self.cells[start:stop], flip_model=self.flip_model,
                          ledger=ledger, compartment_offset=self.compartment_offset + start)

    # -- addressing -------------------------------------------------------

    def _comp_ids(self, comp) -> np.ndarray:
        ids = np.arange(self.compartments)[comp]
        return np.atleast_1d(ids) + self.compartment_offset

    def _n_rows(self, row) -> int:
        return len(range(self.rows)[row]) if isinstance(row, slice) else 1

    def _block(self, comp, row, group: int, n_groups: int):
        if n_groups < 1:
            raise AddressError("block must cover at least one group")
        if group < 0 or group + n_groups > self.groups:
            raise AddressError(f"groups [{group}, {group + n_groups}) outside 0..{self.groups}")
        if isinstance(row, (int, np.integer)) and not 0 <= row < self.rows:
            raise AddressError(f"row {row} outside 0..{self.rows}")
        if isinstance(row, slice) and len(range(self.rows)[row]) == 0:
            raise AddressError("empty row slice")
        if isinstance(comp, (int, np.integer)) and not 0 <= comp < self.compartments:
            raise AddressError(f"compartment {comp} outside 0..{self.compartments}")
        if isinstance(comp, np.ndarray) and comp.size and (
                int(comp.min()) < 0 or int(comp.max()) >= self.compartments):
            raise AddressError("compartment index out of range")
        cols = slice(group * GROUP_WIDTH, (group + n_groups) * GROUP_WIDTH)
        return comp, row, cols

    @staticmethod
    def _groups_for(n_bits: int) -> int:
        if n_bits <= 0 or n_bits % GROUP_WIDTH:
            raise ValueError(f"word length {n_bits} is not a positive multiple of {GROUP_WIDTH}")
        return n_bits // GROUP_WIDTH

    def _log(self, kind, comp, row, n_groups, timed_per_row=None):
        ids = self._comp_ids(comp)
        events = n_groups * self._n_rows(row)
        if timed_per_row is None:
            self.ledger.record(kind, ids, events)
            return
        # one timed event per word-line assertion, the rest energy-only
        rows = self._n_rows(row)
        self.ledger.record(kind, ids, rows)
        if events > rows:
            self.ledger.record(kind, ids, events - rows, time_ns=0.0)

    # -- operations -------------------------------------------------------

    def write(self, addr: GroupAddr, bits, comp=None, row=None):
        """Write ``bits`` (length multiple of 4, or batched ``(..., n)``) at ``addr``.

        ``comp``/``row`` override the address selectors for batched writes.
        """
        bits = np.asarray(bits, dtype=np.uint8)
        k = self._groups_for(bits.shape[-1])
        if np.any(bits > 1):
            raise ValueError("bits must be 0 or 1")
        c = addr.compartment if comp is None else comp
        r = addr.row if row is None else row
        c, r, cols = self._block(c, r, addr.group, k)
        self.cells[c, r, cols] = bits
        self._log("write", c, r, k)

    def read(self, addr: GroupAddr, n_bits: int, comp=None, row=None) -> np.ndarray:
        k = self._groups_for(n_bits)
        c = addr.compartment if comp is None else comp
        r = addr.row if row is None else row
        c, r, cols = self._block(c, r, addr.group, k)
        out = self.cells[c, r, cols].copy()
        self._log("read", c, r, k)
        return out

    def pseudo_read(self, addr: GroupAddr, n_bits: int, cvdd: float = 0.5,
                    temperature: float = REFERENCE_TEMPERATURE, *, rng=None,
                    uniforms=None, p: float | None = None, comp=None, row=None) -> np.ndarray:
        """Randomize the addressed block; each bit flips independently.

        Flip probabilities come from the flip model at ``(cvdd, temperature)``
        unless ``p`` is given.  Randomness is either drawn from ``rng`` or
        supplied as ``uniforms`` with the block's shape.
        """
        k = self._groups_for(n_bits)
        c = addr.compartment if comp is None else comp
        r = addr.row if row is None else row
        c, r, cols = self._block(c, r, addr.group, k)
        if p is None:
            p01, p10 = self.flip_model.flip_probs(cvdd, temperature)
        else:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"flip probability {p} outside [0, 1]")
            p01 = p10 = p
        current = self.cells[c, r, cols]
        if uniforms is None:
            if rng is None:
                raise ValueError("pseudo_read needs rng or uniforms")
            uniforms = rng.random(current.shape)
        new = flip_bits(current, p01, p10, uniforms)
        self.cells[c, r, cols] = new
        self._log("random", c, r, k, timed_per_row=True)
        return new

    def copy(self, src: GroupAddr, dst: GroupAddr, n_bits: int = GROUP_WIDTH, comp=None):
        """Row-local bus copy of ``n_bits`` starting at ``src`` to ``dst``."""
        k = self._groups_for(n_bits)
        if comp is None and src.compartment != dst.compartment:
            raise AddressError("in-memory copy cannot cross compartments")
        if src.row != dst.row:
            raise AddressError("in-memory copy is row-local")
        if src.group == dst.group:
            raise AddressError("copy source and destination coincide")
        if abs(src.group - dst.group) < k:
            raise AddressError("copy source and destination overlap")
        c = src.compartment if comp is None else comp
        c, r, scols = self._block(c, src.row, src.group, k)
        _, _, dcols = self._block(c, dst.row, dst.group, k)
        self.cells[c, r, dcols] = self.cells[c, r, scols]
        self._log("copy", c, r, k)

    def reset_zero(self, addr: GroupAddr, n_bits: int = GROUP_WIDTH, comp=None, row=None):
        k = self._groups_for(n_bits)
        c = addr.compartment if comp is None else comp
        r = addr.row if row is None else row
        c, r, cols = self._block(c, r, addr.group, k)
        self.cells[c, r, cols] = 0
        self._log("reset", c, r, k, timed_per_row=True)

    # -- snapshots --------------------------------------------------------

    def dump(self, path, fmt: str = "bin"):
        """Write cells in compartment-major, row-major, column order.

        ``bin``: bits packed MSB-first into bytes.  ``hex``: one line per row,
        hex digits of the packed row bytes.
        """
        path = Path(path)
        if fmt == "bin":
            path.write_bytes(np.packbits(self.cells.ravel()).tobytes())
        elif fmt == "hex":
            packed = np.packbits(self.cells.reshape(-1, self.cols), axis=1)
            path.write_text("".join(row.tobytes().hex() + "\n" for row in packed))
        else:
            raise ValueError(f"unknown snapshot format {fmt!r}")

    def load(self, path, fmt: str = "bin"):
        path = Path(path)
        if fmt == "bin":
            raw = np.frombuffer(path.read_bytes(), dtype=np.uint8)
            bits = np.unpackbits(raw)[: self.cells.size]
        elif fmt == "hex":
            lines = path.read_text().split()
            raw = np.array([np.frombuffer(bytes.fromhex(ln), dtype=np.uint8) for ln in lines])
            bits = np.unpackbits(raw, axis=1)[:, : self.cols]
        else:
            raise ValueError(f"unknown snapshot format {fmt!r}")
        if bits.size != self.cells.size:
            raise ValueError("snapshot size does not match array geometry")
        self.cells[...] = bits.reshape(self.cells.shape)

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.cells).tobytes()).hexdigest()
