"""Metropolis-Hastings sampling on the simulated macro.

Each compartment runs one chain.  A chain lives in one row of its
compartment: the row is cut into word slots of ``n_bits/4`` groups and the
chain walks the slots as a ring, so every commit is a row-local in-memory
copy.  Per iteration, all compartments in lockstep:

1. copy the current word to the next slot,
2. pseudo-read the next slot, producing the candidate,
3. read the candidate out for the accept check,
4. compare against the shared 8-bit uniform ``u8``,
5. on reject, copy the current word over the candidate again.

Every compartment draws its flips from a private stream derived from the
run seed and its compartment index, so results do not depend on how
compartments are split across workers.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .device import REFERENCE_TEMPERATURE, FlipModel
from .memory import GROUP_WIDTH, GroupAddr, MacroArray, bits_to_word, word_to_bits
from .perf import EnergyConstants, PerfLedger, TimingConstants
from .targets import TargetPdf, flat_target
from .urng import MsxorRng, output_bits

logger = logging.getLogger(__name__)

MAX_BITS = 64
# uniforms drawn per compartment stream in one go
_BLOCK = 1024

_STREAM_URNG = 0
_STREAM_CHAIN = 1
_STREAM_LOCAL_URNG = 2


class SamplerError(RuntimeError):
    pass


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key)``; stable across runs and layouts."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


# -- proposal kernel --------------------------------------------------------

def hamming(x: int, y: int) -> int:
    return bin(int(x) ^ int(y)).count("1")


def transfer_prob(x: int, y: int, p: float, n_bits: int) -> float:
    """Probability that pseudo-reading word ``x`` yields ``y`` (symmetric flips)."""
    if not (0 <= x < 2 ** n_bits and 0 <= y < 2 ** n_bits):
        raise ValueError("word outside n-bit domain")
    h = hamming(x, y)
    return p ** h * (1.0 - p) ** (n_bits - h)


def transfer_matrix(n_bits: int, p01: float, p10: float | None = None) -> np.ndarray:
    """Full ``2**n x 2**n`` proposal matrix; row = current word, column = candidate."""
    p10 = p01 if p10 is None else p10
    words = np.arange(2 ** n_bits)
    xb = word_to_bits(words, n_bits)[:, None, :]
    yb = word_to_bits(words, n_bits)[None, :, :]
    per_bit = np.where(xb == 0, np.where(yb == 1, p01, 1.0 - p01),
                       np.where(yb == 0, p10, 1.0 - p10))
    return np.prod(per_bit, axis=-1)


# -- accept check -----------------------------------------------------------

def accept_check(p_cur: float, p_cand: float, u8: int, levels: int = 256) -> bool:
    """``u8/256 < p_cand/p_cur`` evaluated exactly as ``u8*p_cur < 256*p_cand``.

    ``levels`` generalizes to a ``log2(levels)``-bit uniform.
    """
    if p_cur < 0 or p_cand < 0:
        raise SamplerError("densities must be nonnegative")
    if p_cur == 0 and p_cand == 0:
        raise SamplerError("target density is zero at both current and candidate state")
    if not 0 <= u8 < levels:
        raise ValueError(f"u8 must be in 0..{levels - 1}")
    return Fraction(int(u8)) * Fraction(p_cur) < levels * Fraction(p_cand)


def accept_mask(p_cur, p_cand, u8, levels: int = 256) -> np.ndarray:
    """Vectorized :func:`accept_check`.

    An 8-bit integer times a double fits the 64-bit mantissa of x86 extended
    precision, so the comparison below is exact there.
    """
    p_cur = np.asarray(p_cur, dtype=np.longdouble)
    p_cand = np.asarray(p_cand, dtype=np.longdouble)
    if np.any((p_cur == 0) & (p_cand == 0)):
        raise SamplerError("target density is zero at both current and candidate state")
    u = np.asarray(u8, dtype=np.longdouble)
    return u * p_cur < levels * p_cand


def mh_ratio(p_cur, p_cand, q_fwd, q_back) -> float:
    """Full Metropolis-Hastings ratio ``p(x*) q(x|x*) / (p(x) q(x*|x))``."""
    return (p_cand * q_back) / (p_cur * q_fwd)


def mh_transition_matrix(target, p01: float, n_bits: int, p10: float | None = None,
                         discrete_u: bool = False) -> np.ndarray:
    """Analytic MH kernel: proposal times acceptance, rejection mass on the diagonal.

    ``discrete_u`` uses the hardware acceptance probability
    ``#{u8 : u8*p(x) < 256*p(y)} / 256`` instead of ``min(1, p(y)/p(x))``.
    """
    pi = np.asarray(target.table if isinstance(target, TargetPdf) else target, dtype=float)
    q = transfer_matrix(n_bits, p01, p10)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = pi[None, :] / pi[:, None]
    ratio = np.where(pi[:, None] == 0, np.inf, ratio)
    if discrete_u:
        u = np.arange(256, dtype=float)[None, None, :]
        acc = np.mean(u * pi[:, None, None] < 256 * pi[None, :, None], axis=-1)
    else:
        acc = np.minimum(1.0, ratio)
    kernel = q * acc
    np.fill_diagonal(kernel, 0.0)
    np.fill_diagonal(kernel, 1.0 - kernel.sum(axis=1))
    return kernel


def stationary_vector(kernel: np.ndarray) -> np.ndarray:
    """Left eigenvector of ``kernel`` for eigenvalue 1, normalized to sum 1."""
    vals, vecs = np.linalg.eig(kernel.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    return v / v.sum()


# -- configuration and results ---------------------------------------------

@dataclass
class RunConfig:
    n_bits: int = 4
    iterations: int = 2000
    burn_in: int = 1000
    compartments: int = 64
    seed: int = 0
    cvdd: float = 0.5
    temperature: float = REFERENCE_TEMPERATURE
    target: TargetPdf | None = None
    thin: int = 1
    shared_u: bool = True
    init_value: int | None = None
    chain_row: int = 0
    wrap: bool = True
    workers: int = 1
    rows: int = 64
    cols: int = 64
    stages: int = 3
    flip_model: FlipModel = field(default_factory=FlipModel)
    energy: EnergyConstants = field(default_factory=EnergyConstants)
    timing: TimingConstants = field(default_factory=TimingConstants)
    trace: bool = False

    def __post_init__(self):
        if self.target is None:
            self.target = flat_target(self.n_bits)

    def validate(self):
        if self.n_bits % GROUP_WIDTH or not GROUP_WIDTH <= self.n_bits <= MAX_BITS:
            raise ValueError(f"n_bits must be a multiple of 4 in 4..{MAX_BITS}")
        if 2 * self.n_bits > self.cols:
            raise ValueError(f"{self.n_bits}-bit chains need at least {2 * self.n_bits} columns "
                             f"for row-local copies (have {self.cols})")
        if self.iterations < 0 or self.burn_in < 0:
            raise ValueError("iterations and burn_in must be nonnegative")
        if self.burn_in > self.iterations:
            raise ValueError("burn_in must not exceed iterations")
        if self.compartments < 1:
            raise ValueError("compartments must be >= 1")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not 0 <= self.chain_row < self.rows:
            raise ValueError("chain_row outside the array")
        if self.target.n_bits != self.n_bits:
            raise ValueError(f"target is {self.target.n_bits}-bit, run is {self.n_bits}-bit")
        if self.init_value is not None and not 0 <= self.init_value < 2 ** self.n_bits:
            raise ValueError("init_value outside the n-bit domain")
        return self

    @property
    def slots(self) -> int:
        return (self.cols // GROUP_WIDTH) // (self.n_bits // GROUP_WIDTH)

    def flip_probs(self) -> tuple[float, float]:
        return self.flip_model.flip_probs(self.cvdd, self.temperature)


@dataclass
class ChainState:
    compartment: int
    current_word: int
    current_addr: GroupAddr
    next_addr: GroupAddr
    iteration: int = 0
    accepted_count: int = 0


@dataclass
class StepOutcome:
    accepted: bool
    candidate: int
    sample: int
    events: dict


@dataclass
class SampleSet:
    """Retained samples, one column per compartment.

    ``values[i, c]`` is the chain state of compartment ``c`` after iteration
    ``iterations[i]``; ``candidates``/``accepted``/``u8`` describe that step.
    """

    config: RunConfig
    iterations: np.ndarray
    values: np.ndarray
    candidates: np.ndarray
    accepted: np.ndarray
    u8: np.ndarray
    accepted_counts: np.ndarray
    steps: np.ndarray
    ledger: PerfLedger
    truncated: bool = False

    @property
    def acceptance_rate(self) -> float:
        total = int(self.steps.sum())
        return float(self.accepted_counts.sum()) / total if total else float("nan")

    @property
    def retained_acceptance_rate(self) -> float:
        return float(self.accepted.mean()) if self.accepted.size else float("nan")

    @property
    def n_samples(self) -> int:
        return int(self.values.size)

    def flat(self) -> np.ndarray:
        """All retained values, compartment-major."""
        return self.values.T.reshape(-1)

    def rows(self):
        """Yield CSV records sorted by compartment, then iteration."""
        shared = self.u8.ndim == 1
        for c in range(self.values.shape[1]):
            for i, it in enumerate(self.iterations):
                u = self.u8[i] if shared else self.u8[i, c]
                yield (c, int(it), int(self.candidates[i, c]), int(self.accepted[i, c]),
                       int(self.values[i, c]), int(u))


# -- single-chain API -------------------------------------------------------

def new_chain(config: RunConfig, compartment: int, word: int, slot: int = 0) -> ChainState:
    k = config.n_bits // GROUP_WIDTH
    nxt = (slot + 1) % config.slots
    return ChainState(compartment, int(word), GroupAddr(compartment, config.chain_row, slot * k),
                      GroupAddr(compartment, config.chain_row, nxt * k))


def propose(chain: ChainState, array: MacroArray, n_bits: int, rng: np.random.Generator,
            cvdd: float = 0.5, temperature: float = REFERENCE_TEMPERATURE) -> int:
    """Pseudo-read the candidate slot (which must hold a copy of the current word)."""
    bits = array.pseudo_read(chain.next_addr, n_bits, cvdd, temperature, rng=rng)
    return int(bits_to_word(bits))


def step(chain: ChainState, array: MacroArray, u8: int, target: TargetPdf,
         rng: np.random.Generator, n_bits: int, cvdd: float = 0.5,
         temperature: float = REFERENCE_TEMPERATURE) -> StepOutcome:
    """One full iteration for a single chain; mutates ``chain`` and ``array``."""
    before = array.ledger.counts_by_kind()
    cur, nxt = chain.current_addr, chain.next_addr
    array.copy(cur, nxt, n_bits)
    propose(chain, array, n_bits, rng, cvdd, temperature)
    cand = int(bits_to_word(array.read(nxt, n_bits)))
    p_cur = float(target.density(np.uint64(chain.current_word)))
    p_cand = float(target.density(np.uint64(cand)))
    accepted = accept_check(p_cur, p_cand, u8)
    array.ledger.record("calc", chain.compartment + array.compartment_offset, bits=n_bits)
    if not accepted:
        array.copy(cur, nxt, n_bits)
    else:
        chain.current_word = cand
        chain.accepted_count += 1
    chain.iteration += 1
    slots = (array.cols // GROUP_WIDTH) // (n_bits // GROUP_WIDTH)
    k = n_bits // GROUP_WIDTH
    nslot = (nxt.group // k + 1) % slots
    chain.current_addr = nxt
    chain.next_addr = GroupAddr(nxt.compartment, nxt.row, nslot * k)
    after = array.ledger.counts_by_kind()
    events = {kind: after.get(kind, 0) - before.get(kind, 0) for kind in after}
    return StepOutcome(accepted, cand, chain.current_word, {k_: v for k_, v in events.items() if v})


# -- lockstep batch ---------------------------------------------------------

class _Lane:
    """A contiguous range of compartments advanced in lockstep by one worker."""

    def __init__(self, config: RunConfig, array: MacroArray, start: int, stop: int):
        self.cfg = config
        self.array = array
        self.start, self.stop = start, stop
        self.n = stop - start
        self.local = np.arange(self.n)
        self.every = slice(None)
        self.levels = 2 ** output_bits(config.stages)
        self.k = config.n_bits // GROUP_WIDTH
        self.p01, self.p10 = config.flip_probs()
        self.rngs = [stream(config.seed, _STREAM_CHAIN, c) for c in range(start, stop)]
        self._buf = None
        self._pos = 0
        self._left = _n_steps(config)

    def _uniforms(self) -> np.ndarray:
        if self._buf is None or self._pos == self._buf.shape[0]:
            b = min(_BLOCK, max(self._left, 1))
            self._buf = np.stack([r.random((b, self.cfg.n_bits)) for r in self.rngs], axis=1)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        self._left -= 1
        return u

    def addr(self, slot: int) -> GroupAddr:
        return GroupAddr(0, self.cfg.chain_row, slot * self.k)

    def init(self) -> np.ndarray:
        cfg = self.cfg
        a0 = self.addr(0)
        if cfg.init_value is None:
            self.array.reset_zero(a0, cfg.n_bits, comp=self.local)
            u = np.stack([r.random(cfg.n_bits) for r in self.rngs])
            bits = self.array.pseudo_read(a0, cfg.n_bits, comp=self.local, uniforms=u,
                                          cvdd=cfg.cvdd, temperature=cfg.temperature)
        else:
            bits = np.broadcast_to(word_to_bits(cfg.init_value, cfg.n_bits), (self.n, cfg.n_bits))
            self.array.write(a0, bits, comp=self.local)
        return bits_to_word(bits)

    def run(self, u8_seq: np.ndarray) -> dict:
        cfg = self.cfg
        target = cfg.target
        n_ret = _n_retained(cfg)
        vtype = np.uint64
        values = np.zeros((n_ret, self.n), dtype=vtype)
        cands = np.zeros((n_ret, self.n), dtype=vtype)
        accs = np.zeros((n_ret, self.n), dtype=bool)
        acc_count = np.zeros(self.n, dtype=np.int64)
        cur = self.init()
        p_cur = target.density(cur)
        slot, done, r = 0, 0, 0
        ids = self.local + self.array.compartment_offset
        for i in range(_n_steps(cfg)):
            nslot = (slot + 1) % cfg.slots
            src, dst = self.addr(slot), self.addr(nslot)
            self.array.copy(src, dst, cfg.n_bits, comp=self.every)
            self.array.pseudo_read(dst, cfg.n_bits, comp=self.every, uniforms=self._uniforms(),
                                   cvdd=cfg.cvdd, temperature=cfg.temperature)
            cand = bits_to_word(self.array.read(dst, cfg.n_bits, comp=self.every))
            p_cand = target.density(cand)
            u = u8_seq[i] if u8_seq.ndim == 1 else u8_seq[i, self.start:self.stop]
            acc = accept_mask(p_cur, p_cand, u, self.levels)
            self.array.ledger.record("calc", ids, bits=cfg.n_bits)
            rej = self.local[~acc]
            if rej.size:
                self.array.copy(src, dst, cfg.n_bits, comp=rej)
            cur = np.where(acc, cand, cur)
            p_cur = np.where(acc, p_cand, p_cur)
            acc_count += acc
            if i >= cfg.burn_in and (i - cfg.burn_in) % cfg.thin == 0:
                values[r], cands[r], accs[r] = cur, cand, acc
                r += 1
            slot = nslot
            done += 1
        return {"values": values[:r], "cands": cands[:r], "accs": accs[:r],
                "acc_count": acc_count, "steps": done}


def _n_steps(cfg: RunConfig) -> int:
    """Iterations actually executed; a non-wrapping window holds ``slots`` words."""
    return cfg.iterations if cfg.wrap else min(cfg.iterations, cfg.slots - 1)


def _n_retained(cfg: RunConfig) -> int:
    post = _n_steps(cfg) - cfg.burn_in
    return 0 if post <= 0 else (post + cfg.thin - 1) // cfg.thin


def _partition(n: int, workers: int) -> list[tuple[int, int]]:
    workers = min(workers, n)
    bounds = np.linspace(0, n, workers + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in itertools.pairwise(bounds) if b > a]


def draw_u8(cfg: RunConfig, ledger: PerfLedger) -> np.ndarray:
    """Uniform sequence for the run: one per iteration, or one per compartment."""
    if cfg.shared_u:
        rng = MsxorRng(stream(cfg.seed, _STREAM_URNG), cfg.flip_model, cfg.stages, ledger,
                       cfg.cvdd, cfg.temperature)
        return rng.draw(_n_steps(cfg))
    cols = []
    for c in range(cfg.compartments):
        rng = MsxorRng(stream(cfg.seed, _STREAM_LOCAL_URNG, c), cfg.flip_model, cfg.stages,
                       ledger, cfg.cvdd, cfg.temperature)
        cols.append(rng.draw(_n_steps(cfg), compartment=c))
    return np.stack(cols, axis=1)


def run(config: RunConfig, array: MacroArray | None = None) -> SampleSet:
    """Run ``config.iterations`` lockstep iterations on every compartment."""
    cfg = config.validate()
    ledger = PerfLedger(cfg.energy, cfg.timing, trace=cfg.trace)
    if array is None:
        array = MacroArray(cfg.compartments, cfg.rows, cfg.cols, cfg.flip_model, ledger)
    elif array.compartments != cfg.compartments or array.cols != cfg.cols:
        raise ValueError("array geometry does not match the run configuration")
    u8_seq = draw_u8(cfg, ledger)
    parts = _partition(cfg.compartments, cfg.workers)
    lanes = [_Lane(cfg, array.partition(a, b, PerfLedger(cfg.energy, cfg.timing, trace=cfg.trace)), a, b)
             for a, b in parts]
    if len(lanes) == 1:
        results = [lanes[0].run(u8_seq)]
    else:
        with ThreadPoolExecutor(max_workers=len(lanes)) as pool:
            results = list(pool.map(lambda lane: lane.run(u8_seq), lanes))
    for lane in lanes:
        ledger.merge(lane.array.ledger)
    if ledger.trace is not None:
        # stable: per compartment, events stay in program order
        ledger.trace.sort(key=lambda ev: ev[2])
    steps = results[0]["steps"]
    truncated = steps < cfg.iterations
    if truncated:
        logger.warning("storage window exhausted after %d of %d iterations", steps, cfg.iterations)
    n_ret = len(results[0]["values"])
    its = cfg.burn_in + cfg.thin * np.arange(n_ret)
    u8 = u8_seq[its] if len(its) else u8_seq[:0]
    return SampleSet(
        config=cfg,
        iterations=its,
        values=np.concatenate([r["values"] for r in results], axis=1),
        candidates=np.concatenate([r["cands"] for r in results], axis=1),
        accepted=np.concatenate([r["accs"] for r in results], axis=1),
        u8=u8,
        accepted_counts=np.concatenate([r["acc_count"] for r in results]),
        steps=np.full(cfg.compartments, steps, dtype=np.int64),
        ledger=ledger,
        truncated=bool(truncated),
    )


def with_overrides(config: RunConfig, **kw) -> RunConfig:
    return replace(config, **kw)
