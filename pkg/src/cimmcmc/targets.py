"""Unnormalized target densities over n-bit word domains.

A multi-dimensional word packs dimension 0 into the lowest ``bits_per_dim``
bits, dimension 1 into the next ones, and so on.  Grid points are cell
centers: index ``i`` of a ``b``-bit dimension spanning ``[lo, hi)`` maps to
``lo + (i + 0.5) * (hi - lo) / 2**b``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

# largest word width tabulated eagerly; wider domains evaluate on the fly
MAX_TABLE_BITS = 24

DEFAULT_GMM = ((0.25, 0.2, 0.05), (0.25, 0.4, 0.05), (0.25, 0.6, 0.05), (0.25, 0.8, 0.05))
DEFAULT_MGD_COV = ((1.0, 0.5), (0.5, 1.0))
# per-dimension standard deviation of the default MGD, as a fraction of the range
DEFAULT_MGD_SCALE = 1.0 / 16.0


class TargetError(ValueError):
    pass


def gmm_pdf(x, components: Sequence[tuple[float, float, float]]):
    """Sum of ``w * N(x; mu, sigma**2)`` over ``(w, mu, sigma)`` components."""
    if not components:
        raise TargetError("GMM needs at least one component")
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for w, mu, sigma in components:
        if w <= 0 or sigma <= 0:
            raise TargetError("GMM weights and sigmas must be positive")
        z = (x - mu) / sigma
        out = out + w * np.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))
    return out if out.ndim else float(out)


def mgd_pdf(x, mean, cov):
    """Multivariate normal density; ``x`` has shape ``(..., d)``."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    d = mean.shape[0]
    if cov.shape != (d, d) or not np.allclose(cov, cov.T):
        raise TargetError("covariance must be a symmetric d x d matrix")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise TargetError("covariance is not positive definite") from None
    x = np.asarray(x, dtype=float)
    diff = x - mean
    sol = np.linalg.solve(chol, diff.reshape(-1, d).T).T
    maha = np.sum(sol * sol, axis=-1).reshape(diff.shape[:-1])
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    dens = np.exp(-0.5 * (maha + d * math.log(2.0 * math.pi) + log_det))
    return dens if dens.ndim else float(dens)


@dataclass(frozen=True)
class TargetPdf:
    dims: int
    bits_per_dim: int
    table: np.ndarray | None = None
    ranges: tuple[tuple[float, float], ...] = ()
    pdf: Callable | None = field(default=None, compare=False)
    name: str = "table"

    def __post_init__(self):
        if self.dims < 1 or self.bits_per_dim < 1:
            raise TargetError("dims and bits_per_dim must be >= 1")
        if not self.ranges:
            object.__setattr__(self, "ranges", tuple((0.0, float(2 ** self.bits_per_dim))
                                                     for _ in range(self.dims)))
        if len(self.ranges) != self.dims:
            raise TargetError("one range per dimension required")
        if self.table is None:
            if self.pdf is None:
                raise TargetError("target needs a table or a pdf")
            return
        table = np.asarray(self.table, dtype=float)
        table.setflags(write=False)
        object.__setattr__(self, "table", table)
        if table.shape != (2 ** self.n_bits,):
            raise TargetError(f"table length {table.size} != 2**{self.n_bits}")
        if not np.all(np.isfinite(table)) or np.any(table < 0):
            raise TargetError("densities must be finite and nonnegative")
        if not np.any(table > 0):
            raise TargetError("at least one density must be positive")

    @property
    def n_bits(self) -> int:
        return self.dims * self.bits_per_dim

    @property
    def size(self) -> int:
        return 2 ** self.n_bits

    @property
    def integer_valued(self) -> bool:
        return (self.table is not None and bool(np.all(self.table == np.round(self.table)))
                and float(self.table.max()) < 2.0 ** 53 / 256)

    def unpack(self, words) -> np.ndarray:
        """Word(s) -> per-dimension integer indices, shape ``(..., dims)``."""
        words = np.asarray(words).astype(np.uint64)
        mask = np.uint64((1 << self.bits_per_dim) - 1)
        shifts = (np.arange(self.dims) * self.bits_per_dim).astype(np.uint64)
        return ((words[..., None] >> shifts) & mask).astype(np.int64)

    def pack(self, indices) -> np.ndarray:
        indices = np.asarray(indices).astype(np.uint64)
        shifts = (np.arange(self.dims) * self.bits_per_dim).astype(np.uint64)
        return np.sum(indices << shifts, axis=-1, dtype=np.uint64)

    def grid_point(self, words) -> np.ndarray:
        idx = self.unpack(words).astype(float)
        lo = np.array([r[0] for r in self.ranges])
        hi = np.array([r[1] for r in self.ranges])
        return lo + (idx + 0.5) * (hi - lo) / 2 ** self.bits_per_dim

    def density(self, words) -> np.ndarray:
        words = np.asarray(words)
        if self.table is not None:
            return self.table[words]
        vals = np.asarray(self.pdf(self.grid_point(words).reshape(-1, self.dims)), dtype=float)
        vals = vals.reshape(words.shape)
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise TargetError("pdf returned a negative or non-finite density")
        return vals

    def normalized(self) -> np.ndarray:
        if self.table is None:
            raise TargetError(f"{self.n_bits}-bit target is not tabulated")
        return self.table / self.table.sum()

    def scaled(self, factor: float) -> "TargetPdf":
        if self.table is None or factor <= 0:
            raise TargetError("scaling needs a tabulated target and a positive factor")
        return TargetPdf(self.dims, self.bits_per_dim, self.table * factor, self.ranges,
                         self.pdf, self.name)


def discretize(pdf: Callable, dims: int, bits_per_dim: int,
               ranges: Sequence[tuple[float, float]], name: str = "pdf",
               tabulate: bool | None = None) -> TargetPdf:
    """Evaluate ``pdf`` (taking an ``(N, dims)`` array) on the cell-centered grid."""
    ranges = tuple((float(lo), float(hi)) for lo, hi in ranges)
    for lo, hi in ranges:
        if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
            raise TargetError(f"invalid range ({lo}, {hi})")
    if tabulate is None:
        tabulate = dims * bits_per_dim <= MAX_TABLE_BITS
    lazy = TargetPdf(dims, bits_per_dim, None, ranges, pdf, name)
    if not tabulate:
        return lazy
    table = lazy.density(np.arange(lazy.size))
    return TargetPdf(dims, bits_per_dim, table, ranges, pdf, name)


def gmm_target(bits: int = 8, components=DEFAULT_GMM, range_=(0.0, 1.0)) -> TargetPdf:
    comps = tuple(tuple(float(v) for v in c) for c in components)
    return discretize(lambda x: gmm_pdf(x[:, 0], comps), 1, bits, [range_], name="gmm")


def default_mgd_params(ranges=((0.0, 1.0), (0.0, 1.0))):
    ranges = np.asarray(ranges, dtype=float)
    mean = ranges.mean(axis=1)
    span = ranges[:, 1] - ranges[:, 0]
    scale = np.outer(span, span) * DEFAULT_MGD_SCALE ** 2
    return mean, np.asarray(DEFAULT_MGD_COV) * scale


def mgd_target(bits_per_dim: int = 8, mean=None, cov=None,
               ranges=((0.0, 1.0), (0.0, 1.0))) -> TargetPdf:
    dmean, dcov = default_mgd_params(ranges)
    mean = dmean if mean is None else np.asarray(mean, dtype=float)
    cov = dcov if cov is None else np.asarray(cov, dtype=float)
    mgd_pdf(mean, mean, cov)  # validates
    return discretize(lambda x: mgd_pdf(x, mean, cov), len(mean), bits_per_dim,
                      ranges, name="mgd")


def flat_target(bits: int) -> TargetPdf:
    if bits > MAX_TABLE_BITS:
        return TargetPdf(1, bits, None, pdf=lambda x: np.ones(len(x)), name="flat")
    return TargetPdf(1, bits, np.ones(2 ** bits), name="flat")


def table_target(values, bits: int | None = None, dims: int = 1) -> TargetPdf:
    values = np.asarray(values, dtype=float)
    n = int(round(math.log2(values.size))) if values.size else 0
    if values.size == 0 or 2 ** n != values.size:
        raise TargetError("table length must be a power of two")
    if bits is not None and bits != n:
        raise TargetError(f"table has {n} bits, expected {bits}")
    if n % dims:
        raise TargetError("table bits not divisible by dims")
    return TargetPdf(dims, n // dims, values, name="table")


def load_table_csv(path) -> np.ndarray:
    """Read ``index,density`` rows (header optional); missing indices are zero."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or not rec[0].strip():
                continue
            try:
                rows.append((int(rec[0]), float(rec[1])))
            except ValueError:
                if rows:
                    raise TargetError(f"bad CSV row {rec!r}") from None
    if not rows:
        raise TargetError("empty density CSV")
    size = max(i for i, _ in rows) + 1
    size = 1 << max(0, (size - 1).bit_length())
    table = np.zeros(max(size, 2))
    for i, d in rows:
        table[i] = d
    return table


def target_from_spec(spec, bits: int | None = None, base_dir=None) -> TargetPdf:
    """Build a target from a JSON-like dict (or a JSON string / file path).

    ``{"type": "gmm", "bits": 8, "range": [0, 1], "components": [[w, mu, sigma], ...]}``
    ``{"type": "mgd", "bits_per_dim": 8, "ranges": [[0, 1], [0, 1]], "mean": [...], "cov": [[...]]}``
    ``{"type": "table", "table": [...]} | {"type": "table", "csv": "path"}``
    ``{"type": "flat", "bits": 4}``
    """
    if isinstance(spec, (str, Path)):
        text = str(spec)
        if text.lstrip().startswith("{"):
            spec = json.loads(text)
        else:
            path = Path(text)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            base_dir = path.parent
            spec = json.loads(path.read_text())
    kind = spec.get("type")
    if kind == "gmm":
        b = int(spec.get("bits", bits or 8))
        comps = spec.get("components", DEFAULT_GMM)
        return gmm_target(b, comps, tuple(spec.get("range", (0.0, 1.0))))
    if kind == "mgd":
        b = int(spec.get("bits_per_dim", (bits // 2) if bits else 8))
        ranges = tuple(tuple(r) for r in spec.get("ranges", ((0.0, 1.0), (0.0, 1.0))))
        return mgd_target(b, spec.get("mean"), spec.get("cov"), ranges)
    if kind == "flat":
        return flat_target(int(spec.get("bits", bits or 4)))
    if kind == "table":
        if "csv" in spec:
            path = Path(spec["csv"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            values = load_table_csv(path)
            if bits is not None and values.size < 2 ** bits:
                values = np.pad(values, (0, 2 ** bits - values.size))
        else:
            values = spec["table"]
        t = table_target(values, dims=int(spec.get("dims", 1)))
        if bits is not None and t.n_bits != bits:
            raise TargetError(f"table has {t.n_bits} bits but run uses {bits}")
        return t
    raise TargetError(f"unknown target type {kind!r}")
