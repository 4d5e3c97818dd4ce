import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ufqsh.numerics import (E_E, SignedLogValue, b_scale, golden_section_max, golden_section_min,
                            lil_envelope, lnln, logsumexp)

finite = st.floats(min_value=-1e300, max_value=1e300, allow_nan=False).filter(
    lambda x: x == 0 or 1e-300 <= abs(x))


def close(a, b, rel=1e-12):
    return abs(a - b) <= rel * max(abs(a), abs(b)) or a == b


@given(finite, finite)
@settings(max_examples=400)
def test_add_matches_extended_precision(a, b):
    mpmath.mp.prec = 200
    exact = mpmath.mpf(a) + mpmath.mpf(b)
    got = SignedLogValue.from_float(a) + SignedLogValue.from_float(b)
    if exact == 0:
        assert got.sign == 0 or abs(float(got)) <= 1e-15 * max(abs(a), abs(b))
        return
    # cancellation inflates the relative error by |a|+|b| over |a+b|
    cond = (abs(a) + abs(b)) / abs(float(exact))
    err = abs(mpmath.mpf(float(got)) - exact) / abs(exact) if abs(float(exact)) < 1e300 else 0
    assert err <= 1e-12 * cond


@given(finite, finite)
def test_mul_and_div(a, b):
    x, y = SignedLogValue.from_float(a), SignedLogValue.from_float(b)
    p = x * y
    assert p.sign == (0 if a == 0 or b == 0 else (1 if (a > 0) == (b > 0) else -1))
    if p.sign:
        assert math.isclose(p.logmag, math.log(abs(a)) + math.log(abs(b)), rel_tol=1e-13, abs_tol=1e-13)
    if b != 0:
        q = x / y
        assert q.sign == (0 if a == 0 else (1 if (a > 0) == (b > 0) else -1))


@given(finite, finite)
def test_ordering_agrees_with_floats(a, b):
    x, y = SignedLogValue.from_float(a), SignedLogValue.from_float(b)
    assert (x < y) == (a < b)
    assert (x == y) == (a == b)


def test_zero_and_huge_values():
    z = SignedLogValue.zero()
    assert z.is_zero() and float(z) == 0.0
    big = SignedLogValue.from_log(1e5)
    assert float(big) == math.inf
    assert (big - big).is_zero()
    assert float(big.scale_log(-1e5)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        SignedLogValue.from_float(math.nan)
    with pytest.raises(ZeroDivisionError):
        SignedLogValue.one() / 0.0


def test_lnln_floor():
    assert E_E == pytest.approx(15.15426224147926)
    with pytest.raises(ValueError):
        lnln(E_E)
    assert b_scale(10.0) is None and lil_envelope(10.0) is None
    A = 1e6
    L = math.log(math.log(A))
    assert b_scale(A) == pytest.approx(math.sqrt(A / L))
    assert lil_envelope(A) == pytest.approx(math.sqrt(2 * A * L))


def test_logsumexp():
    assert logsumexp([0.0, 0.0]) == pytest.approx(math.log(2))
    assert logsumexp([-math.inf, 1.0]) == 1.0
    assert logsumexp([]) == -math.inf
    assert logsumexp([1000.0, 1000.0]) == pytest.approx(1000 + math.log(2))


def test_golden_section():
    # a quadratic is flat to first order, so x is only resolvable to ~sqrt(machine eps)
    x, fx = golden_section_min(lambda t: (t - 1.3) ** 2 + 2, 0, 4)
    assert x == pytest.approx(1.3, abs=1e-7) and fx == pytest.approx(2.0)
    x, fx = golden_section_max(lambda t: -(t + 0.5) ** 2, -3, 3)
    assert x == pytest.approx(-0.5, abs=1e-7)
