import hashlib

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cimmcmc.memory import AddressError, GroupAddr, MacroArray, bits_to_word, parse_bits, word_to_bits
from cimmcmc.perf import PerfLedger


def small(compartments=2, rows=4, cols=16, trace=False):
    return MacroArray(compartments, rows, cols, ledger=PerfLedger(trace=trace))


def complement_digest(array, comp, row, g0, ngroups):
    mask = np.ones(array.cells.shape, dtype=bool)
    mask[comp, row, g0 * 4:(g0 + ngroups) * 4] = False
    return hashlib.sha256(array.cells[mask].tobytes()).hexdigest()


def test_default_geometry():
    a = MacroArray()
    assert (a.compartments, a.rows, a.cols, a.groups) == (64, 64, 64, 16)
    assert a.capacity_bits == 262_144


def test_cols_must_be_group_multiple():
    with pytest.raises(ValueError):
        MacroArray(1, 1, 6)


def test_word_bit_conversions():
    assert word_to_bits(5, 4).tolist() == [0, 1, 0, 1]
    assert int(bits_to_word(parse_bits("1001"))) == 9
    words = np.arange(256)
    assert np.array_equal(bits_to_word(word_to_bits(words, 8)), words)


def test_write_read_round_trip():
    a = small()
    addr = GroupAddr(0, 0, 0)
    a.write(addr, parse_bits("0101"))
    assert a.read(addr, 4).tolist() == [0, 1, 0, 1]


def test_pseudo_read_zero_probability_preserves():
    a = small()
    addr = GroupAddr(1, 2, 3)
    a.write(addr, parse_bits("0101"))
    out = a.pseudo_read(addr, 4, p=0.0, rng=np.random.default_rng(0))
    assert out.tolist() == [0, 1, 0, 1]
    assert a.read(addr, 4).tolist() == [0, 1, 0, 1]


def test_eight_bit_write_spans_two_groups():
    a = small()
    a.write(GroupAddr(0, 1, 1), parse_bits("10110011"))
    assert a.cells[0, 1, 4:12].tolist() == [1, 0, 1, 1, 0, 0, 1, 1]
    assert a.ledger.count("write") == 2


def test_word_length_must_be_group_multiple():
    a = small()
    with pytest.raises(ValueError):
        a.write(GroupAddr(0, 0, 0), parse_bits("101"))
    with pytest.raises(ValueError):
        a.read(GroupAddr(0, 0, 0), 6)


@pytest.mark.parametrize("addr", [GroupAddr(2, 0, 0), GroupAddr(0, 4, 0), GroupAddr(0, 0, 4),
                                  GroupAddr(-1, 0, 0), GroupAddr(0, 0, 3)])
def test_out_of_bounds(addr):
    a = small()
    with pytest.raises(AddressError):
        a.write(addr, parse_bits("01010101"))


def test_pseudo_read_from_zero_frequency():
    a = MacroArray(64, 64, 64)
    a.reset_zero(GroupAddr(0, 0, 0), 64, comp=slice(None), row=slice(None))
    a.pseudo_read(GroupAddr(0, 0, 0), 64, p=0.45, rng=np.random.default_rng(3),
                  comp=slice(None), row=slice(None))
    n = a.cells.size
    assert abs(a.cells.mean() - 0.45) < 3 * np.sqrt(0.45 * 0.55 / n)


def test_pseudo_read_uses_flip_model_operating_point():
    a = MacroArray(64, 64, 64)
    a.pseudo_read(GroupAddr(0, 0, 0), 64, cvdd=0.6, rng=np.random.default_rng(4),
                  comp=slice(None), row=slice(None))
    assert abs(a.cells.mean() - 0.40) < 0.005
    a.cells[:] = 0
    a.pseudo_read(GroupAddr(0, 0, 0), 64, cvdd=0.8, rng=np.random.default_rng(4),
                  comp=slice(None), row=slice(None))
    assert a.cells.sum() == 0


def test_copy_example():
    a = small()
    a.write(GroupAddr(0, 0, 0), parse_bits("1001"))
    a.copy(GroupAddr(0, 0, 0), GroupAddr(0, 0, 2))
    assert a.read(GroupAddr(0, 0, 2), 4).tolist() == [1, 0, 0, 1]
    assert a.read(GroupAddr(0, 0, 0), 4).tolist() == [1, 0, 0, 1]


def test_copy_overwrites_and_is_transitive():
    a = small()
    a.write(GroupAddr(0, 0, 0), parse_bits("0110"))
    a.write(GroupAddr(0, 0, 1), parse_bits("1111"))
    a.copy(GroupAddr(0, 0, 0), GroupAddr(0, 0, 1))
    assert a.read(GroupAddr(0, 0, 1), 4).tolist() == [0, 1, 1, 0]
    a.copy(GroupAddr(0, 0, 1), GroupAddr(0, 0, 3))
    assert np.array_equal(a.read(GroupAddr(0, 0, 3), 4), a.read(GroupAddr(0, 0, 0), 4))


def test_copy_is_idempotent():
    a = small()
    a.write(GroupAddr(1, 3, 0), parse_bits("1100"))
    a.copy(GroupAddr(1, 3, 0), GroupAddr(1, 3, 2))
    before = a.cells.copy()
    a.copy(GroupAddr(1, 3, 0), GroupAddr(1, 3, 2))
    assert np.array_equal(before, a.cells)


@pytest.mark.parametrize("src, dst, n", [
    (GroupAddr(0, 0, 0), GroupAddr(1, 0, 1), 4),
    (GroupAddr(0, 0, 0), GroupAddr(0, 1, 1), 4),
    (GroupAddr(0, 0, 1), GroupAddr(0, 0, 1), 4),
    (GroupAddr(0, 0, 0), GroupAddr(0, 0, 1), 8),
])
def test_copy_rejections(src, dst, n):
    with pytest.raises(AddressError):
        small().copy(src, dst, n)


def test_reset_examples():
    a = small()
    a.cells[:] = 1
    a.reset_zero(GroupAddr(0, 0, 0))
    assert a.read(GroupAddr(0, 0, 0), 4).tolist() == [0, 0, 0, 0]
    assert a.read(GroupAddr(0, 0, 1), 4).tolist() == [1, 1, 1, 1]


def test_reset_then_pseudo_read_is_bernoulli_p():
    a = MacroArray(64, 64, 64)
    a.cells[:] = 1
    every = dict(comp=slice(None), row=slice(None))
    a.reset_zero(GroupAddr(0, 0, 0), 64, **every)
    a.pseudo_read(GroupAddr(0, 0, 0), 64, p=0.3, rng=np.random.default_rng(8), **every)
    assert abs(a.cells.mean() - 0.3) < 3 * np.sqrt(0.21 / a.cells.size)


ops = st.sampled_from(["write", "read", "pseudo_read", "reset", "copy"])


@settings(max_examples=60, deadline=None)
@given(op=ops, comp=st.integers(0, 1), row=st.integers(0, 3), group=st.integers(0, 3),
       k=st.integers(1, 2), seed=st.integers(0, 2 ** 16))
def test_operations_leave_complement_untouched(op, comp, row, group, k, seed):
    rng = np.random.default_rng(seed)
    a = small()
    a.cells[:] = rng.integers(0, 2, a.cells.shape, dtype=np.uint8)
    group = min(group, a.groups - k)
    addr = GroupAddr(comp, row, group)
    n = 4 * k
    if op == "copy":
        free = [g for g in range(a.groups - k + 1) if abs(g - group) >= k]
        assume(free)
        target = GroupAddr(comp, row, free[seed % len(free)])
    else:
        target = addr
    before = complement_digest(a, comp, row, target.group, k)
    if op == "write":
        a.write(addr, rng.integers(0, 2, n, dtype=np.uint8))
    elif op == "read":
        a.read(addr, n)
    elif op == "pseudo_read":
        a.pseudo_read(addr, n, p=0.45, rng=rng)
    elif op == "reset":
        a.reset_zero(addr, n)
    else:
        a.copy(addr, target, n)
    assert complement_digest(a, comp, row, target.group, k) == before
    assert set(np.unique(a.cells)) <= {0, 1}


def test_pseudo_read_ledgers_one_timed_event_per_row():
    a = small(trace=True)
    a.pseudo_read(GroupAddr(0, 0, 0), 16, p=0.5, rng=np.random.default_rng(0))
    led = a.ledger
    assert led.count("random") == 4
    assert led.total_energy_fj == pytest.approx(4 * 79.1)
    assert led.total_time_ns == pytest.approx(1.0)


def test_snapshot_round_trip(tmp_path):
    a = small()
    a.cells[:] = np.random.default_rng(1).integers(0, 2, a.cells.shape, dtype=np.uint8)
    for fmt in ("bin", "hex"):
        path = tmp_path / f"snap.{fmt}"
        a.dump(path, fmt)
        b = small()
        b.load(path, fmt)
        assert np.array_equal(a.cells, b.cells)
    hexdump = (tmp_path / "snap.hex").read_text().splitlines()
    assert len(hexdump) == a.compartments * a.rows
    assert hexdump[0] == np.packbits(a.cells[0, 0]).tobytes().hex()


def scripted_state():
    rng = np.random.default_rng(2024)
    a = MacroArray(4, 8, 32)
    for i in range(50):
        c, r = i % 4, (3 * i) % 8
        g = (5 * i) % 6
        a.write(GroupAddr(c, r, g), word_to_bits(i * 37 % 256, 8))
        a.pseudo_read(GroupAddr(c, r, g), 8, p=0.45, rng=rng)
        a.copy(GroupAddr(c, r, g), GroupAddr(c, r, (g + 2) % 8 if (g + 2) % 8 < 7 else 0), 4)
        if i % 7 == 0:
            a.reset_zero(GroupAddr(c, r, 7))
    return a


GOLDEN_DIGEST = "6d516fba1c56f8a52da4c678da5e20e7571668665233a2851adba9d4c9dc6fe7"


def test_golden_state():
    a, b = scripted_state(), scripted_state()
    assert a.digest() == b.digest()
    assert a.digest() == GOLDEN_DIGEST


def test_waveform_trace_order_and_times():
    a = small(trace=True)
    addr, other = GroupAddr(0, 0, 0), GroupAddr(0, 0, 1)
    rng = np.random.default_rng(0)
    a.write(addr, parse_bits("0101"))
    a.pseudo_read(addr, 4, p=0.45, rng=rng)
    a.copy(addr, other)
    a.pseudo_read(other, 4, p=0.45, rng=rng)
    a.read(other, 4)
    kinds = [ev[0] for ev in a.ledger.trace]
    times = [ev[4] for ev in a.ledger.trace]
    assert kinds == ["write", "random", "copy", "random", "read"]
    assert times == [1.0, 1.0, 2.0, 1.0, 1.0]
    assert np.cumsum(times).tolist() == [1.0, 2.0, 4.0, 5.0, 6.0]
