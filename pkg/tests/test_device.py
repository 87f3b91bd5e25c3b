import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cimmcmc.device import FlipModel, bfr_at, flip_bit, flip_bits


@pytest.fixture
def model():
    return FlipModel()


@pytest.mark.parametrize("cvdd, expected", [(0.5, 0.45), (0.6, 0.40), (0.55, 0.425), (0.7, 0.20)])
def test_bfr_anchors_and_interpolation(model, cvdd, expected):
    assert bfr_at(model, cvdd, 27.0) == pytest.approx(expected, abs=1e-12)


def test_bfr_clamped_outside_span(model):
    assert bfr_at(model, 0.3) == pytest.approx(0.45)
    assert bfr_at(model, 1.1) == 0.0


@pytest.mark.parametrize("temp, expected", [(-40, 0.40), (-30, 0.425), (-20, 0.45), (27, 0.45),
                                            (85, 0.45), (-60, 0.40), (120, 0.45)])
def test_temperature_curve(model, temp, expected):
    assert bfr_at(model, 0.5, temp) == pytest.approx(expected, abs=1e-12)


def test_temperature_must_be_finite(model):
    with pytest.raises(ValueError):
        bfr_at(model, 0.5, float("nan"))


def test_default_is_symmetric(model):
    assert model.symmetric
    p01, p10 = model.flip_probs(0.5)
    assert p01 == p10 == pytest.approx(0.45)


def test_asymmetric_override():
    m = FlipModel(flip01=0.3, flip10=0.2)
    assert not m.symmetric
    assert m.flip_probs(0.5) == (0.3, 0.2)


@pytest.mark.parametrize("kwargs", [
    {"anchors": ((0.6, 0.4), (0.5, 0.45))},
    {"anchors": ((0.5, 0.4), (0.6, 0.45))},
    {"anchors": ((0.5, 1.2),)},
    {"anchors": ()},
    {"temp_curve": ((0.0, 1.0), (-10.0, 1.0))},
    {"temp_curve": ((0.0, -1.0),)},
    {"flip01": 1.5},
])
def test_invalid_models_rejected(kwargs):
    with pytest.raises(ValueError):
        FlipModel(**kwargs)


def test_dict_round_trip():
    m = FlipModel(anchors=((0.4, 0.5), (0.9, 0.1)), flip10=0.3)
    assert FlipModel.from_dict(m.to_dict()) == m


@given(st.floats(0.3, 1.0), st.floats(0.3, 1.0), st.floats(-60, 120))
def test_bfr_monotone_in_cvdd(a, b, temp):
    m = FlipModel()
    lo, hi = min(a, b), max(a, b)
    assert bfr_at(m, hi, temp) <= bfr_at(m, lo, temp)
    assert 0.0 <= bfr_at(m, lo, temp) <= 1.0


def test_flip_bit_trivial_cases():
    rng = np.random.default_rng(0)
    assert all(flip_bit(None, 0, 0.0, rng) == 0 for _ in range(1000))
    assert all(flip_bit(None, 1, 1.0, rng) == 0 for _ in range(1000))


def test_flip_bit_reproducible():
    r1, r2 = np.random.default_rng(5), np.random.default_rng(5)
    s1 = [flip_bit(None, i & 1, 0.45, r1) for i in range(2000)]
    s2 = [flip_bit(None, i & 1, 0.45, r2) for i in range(2000)]
    assert s1 == s2


@pytest.mark.parametrize("p", [0.45, 0.40, 0.0])
def test_flip_frequency_within_3_sigma(p):
    n = 10 ** 6
    rng = np.random.default_rng(11)
    out = flip_bits(np.zeros(n, dtype=np.uint8), p, p, rng.random(n))
    assert abs(out.mean() - p) <= 3 * np.sqrt(p * (1 - p) / n) + 1e-12


def test_flip_bits_asymmetric_directions():
    rng = np.random.default_rng(2)
    n = 200_000
    bits = np.repeat(np.array([0, 1], dtype=np.uint8), n)
    out = flip_bits(bits, 0.3, 0.1, rng.random(2 * n))
    assert abs(out[:n].mean() - 0.3) < 0.005
    assert abs((1 - out[n:]).mean() - 0.1) < 0.005
