import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tiltcode import predictor
from tiltcode.errors import InstanceTooLargeError
from tiltcode.predictor import PredictorState, log_loss, snml_predict, two_tilt_predict


def test_snml_basic():
    np.testing.assert_allclose(snml_predict(PredictorState(2, counts=[1, 0])), [0.8, 0.2], atol=1e-15)
    np.testing.assert_allclose(snml_predict(PredictorState(5)), np.full(5, 0.2), atol=1e-15)


def test_snml_large_count_asymptotics():
    k = 10 ** 6
    p = snml_predict(PredictorState(2, counts=[k, 0]))[0]
    w = (k + 1) * (1 + 1 / k) ** k
    assert p == pytest.approx(w / (w + 1), rel=1e-12)
    assert w == pytest.approx((k + 1) * math.e, rel=1e-6)


def test_two_tilt_examples():
    p = two_tilt_predict(PredictorState(2, L=1, b=math.log(2)))
    np.testing.assert_allclose(p, [2 / 3, 1 / 3], atol=1e-15)
    p = two_tilt_predict(PredictorState(3, L=1, b=1.0, counts=[1, 1, 0]))
    w = np.array([4, 4 / math.e, 1 / math.e])
    np.testing.assert_allclose(p, w / w.sum(), atol=1e-15)


@given(st.lists(st.integers(0, 50), min_size=1, max_size=12), st.integers(0, 12), st.floats(0, 5))
@settings(max_examples=80, deadline=None)
def test_predictive_vectors(counts, L, b):
    m = len(counts)
    L = min(L, m)
    s = PredictorState(m, L=L, b=b, counts=counts)
    for p in (snml_predict(s), two_tilt_predict(s)):
        assert abs(p.sum() - 1) < 1e-12
        assert np.all(p > 0)
    s0 = PredictorState(m, L=L, b=0.0, counts=counts)
    np.testing.assert_array_equal(two_tilt_predict(s0), snml_predict(s0))


def test_log_loss_examples():
    assert log_loss([0, 0, 0, 0], 1).total_bits == 0.0
    assert log_loss([0, 1], 2).total_bits == pytest.approx(1 + math.log2(5), abs=1e-12)


def test_log_loss_matches_stepwise():
    rng = np.random.default_rng(5)
    seq = rng.integers(0, 6, 300)
    rule = ("two-tilt", 2, 0.8)
    res = log_loss(seq, 6, rule)
    s = PredictorState(6, L=2, b=0.8)
    ref = 0.0
    for x in seq.tolist():
        ref -= math.log2(two_tilt_predict(s)[x])
        s.update(x)
    assert res.total_bits == pytest.approx(ref, rel=1e-12)
    assert res.per_symbol_bits.size == 300


def test_log_loss_uniform_rate():
    rng = np.random.default_rng(1)
    seq = rng.integers(0, 4, 10 ** 4)
    assert abs(log_loss(seq, 4).mean_bits - 2) < 0.05


def test_log_loss_rejects_out_of_range():
    with pytest.raises(ValueError):
        log_loss([0, 3], 3)


def test_kt_baseline():
    # 1/2 * 1/4 * 1/2 under add-one-half
    assert predictor.kt_log_loss([0, 1, 0], 2).total_bits == pytest.approx(4.0, abs=1e-12)


def test_full_horizon_telescopes():
    from tiltcode.nml import multinomial_ml_log, multinomial_shtarkov
    seq = [0, 2, 0, 1]
    res = predictor.full_horizon_log_loss(seq, 3)
    counts = np.bincount(seq, minlength=3)
    ln_ml = float(multinomial_ml_log(counts[None, :])[0])
    ln_arr = math.lgamma(5) - sum(math.lgamma(c + 1) for c in counts)
    expect = -(ln_ml - ln_arr) / math.log(2) + multinomial_shtarkov(3, 4)
    assert res.total_bits == pytest.approx(expect, abs=1e-10)


def test_horizon_dependence():
    assert predictor.horizon_dependence_demo(1, 4) == 0.0
    v = predictor.horizon_dependence_demo(2, 2)
    assert v > 0
    assert predictor.horizon_dependence_demo(2, 2) == v
    assert predictor.horizon_dependence_demo(2, 3) > 0


def test_horizon_two_symbols_one_step_by_hand():
    # P_1 = (1/2, 1/2); P_2 on aa, ab, ba, bb = (1, 1/4, 1/4, 1) / 2.5: marginals are again 1/2
    p2 = [Fraction(1), Fraction(1, 4), Fraction(1, 4), Fraction(1)]
    z = sum(p2)
    assert (p2[0] + p2[1]) / z == Fraction(1, 2)
    assert predictor.horizon_dependence_demo(2, 1) == 0.0


def test_horizon_caps():
    with pytest.raises(InstanceTooLargeError):
        predictor.horizon_dependence_demo(4, 2)
