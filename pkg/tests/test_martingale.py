import math

import numpy as np
import pytest

from ufqsh.constants import select_constants
from ufqsh.hedge import logsquare_hedge, power_hedge
from ufqsh.martingale import (BlockContext, BlockScale, MartingaleError, StoppingFlags, combine_M,
                              l_lower_update, l_upper_update, lemma5_bound_check,
                              lemma6_bound_check, lemma7_payoff_check, lower_ratio_parts,
                              n_process, new_process, run_block_processes,
                              stakes_from_multiplicative, stopping_update, upper_ratio_parts)
from ufqsh.numerics import SignedLogValue
from ufqsh.protocol import ForecasterMove


def test_upper_update_example(cubic):
    num, den = upper_ratio_parts(0.1, 1.0, 1.0, 0.5, cubic)
    assert (num, den) == pytest.approx((1.104, 1.0045))
    s = l_upper_update(new_process("upper", 0.1), 1.0, 1.0, 0.5, cubic)
    assert float(s.value) == pytest.approx(1.104 / 1.0045, rel=1e-14)
    assert float(l_upper_update(new_process("upper", 0.1), 0, 0, 0, cubic).value) == 1.0


def test_upper_update_denominator_guard(cubic):
    with pytest.raises(MartingaleError):
        l_upper_update(new_process("upper", 0.1), 0.0, 0.0, 2000.0, cubic)


def test_upper_numerator_may_go_negative(cubic):
    s = l_upper_update(new_process("upper", 1.0), 10.0, 0.0, 0.0, cubic)
    assert s.value.sign == -1


def test_lower_update_example():
    num, den = lower_ratio_parts(0.1, 0.1, 1.0, 1.0)
    assert (num, den) == pytest.approx((1.1055, 1.0055))
    s = l_lower_update(new_process("lower", 0.1, 0.1), 1.0, 1.0)
    assert float(s.value) == pytest.approx(1.1055 / 1.0055, rel=1e-14)
    assert float(l_lower_update(new_process("lower", 0.1, 0.1), 0, 0).value) == 1.0


def test_lower_always_positive():
    rng = np.random.default_rng(1)
    s = new_process("lower", 0.7, 0.05)
    for x in rng.standard_cauchy(5000):
        s = l_lower_update(s, float(x), float(abs(x)))
        assert s.value.sign == 1


def test_combine_and_n():
    mk = lambda kind, val: new_process(kind, 0.1).__class__(kind, 0.1, 0.0, SignedLogValue.from_float(val), 0,
                                                          BlockScale.unit())
    one = lambda k: mk(k, 1.0)
    assert float(combine_M(one("upper"), one("lower"), one("lower"))) == pytest.approx(1.0)
    assert float(combine_M(mk("upper", 2.5), mk("lower", 2.5), mk("lower", 2.5))) == pytest.approx(2.5)
    assert float(combine_M(mk("upper", 0.5), mk("lower", 1.0), mk("lower", 1.2))) == pytest.approx(-0.7)
    assert float(n_process(SignedLogValue.one(), 7.0)) == pytest.approx(1.0)
    assert float(n_process(SignedLogValue.zero(), 100.0)) == pytest.approx(1.01)
    assert float(n_process(SignedLogValue.from_float(-3.0), 100.0)) >= 1 + 1 / 100


def test_stakes_example(cubic):
    s = stakes_from_multiplicative(1.0, "upper", 0.1, 0.0, 1.0, 0.5, cubic)
    M, V, W = s.actual()
    assert (M, V, W) == pytest.approx((0.099552, 0.0049776, -0.00099552), rel=1e-4)
    for x in (-1.0, 0.0, 1.0, 2.0):
        num, den = upper_ratio_parts(0.1, x, 1.0, 0.5, cubic)
        assert M * x + V * (x * x - 1) + W * (cubic(x) - 0.5) == pytest.approx(num / den - 1, abs=1e-15)
    assert stakes_from_multiplicative(0.0, "upper", 0.1, 0.0, 1.0, 0.5, cubic).is_flat()
    assert stakes_from_multiplicative(3.0, "lower", 0.1, 0.1, 1.0, 0.5, None).W == 0.0


@pytest.mark.parametrize("make", [lambda: power_hedge(3.0), logsquare_hedge], ids=["cubic", "logsquare"])
def test_ticket_decomposition_random(make):
    h = make()
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100_000):
        K = float(rng.choice([-1, 1]) * 10 ** rng.uniform(-5, 5))
        kappa = float(10 ** rng.uniform(-3, 0.5))
        v = float(rng.exponential())
        x = float(rng.normal() * 2)
        if rng.random() < 0.5:
            hk = h(1 / kappa)
            w = float(rng.uniform(0, 0.5) * hk * (1 + 0.5 * kappa * kappa * v))
            kind, delta = "upper", 0.0
            num, den = upper_ratio_parts(kappa, x, v, w, h)
        else:
            w, kind, delta = float(rng.exponential()), "lower", float(rng.uniform(0, 0.2))
            num, den = lower_ratio_parts(kappa, delta, x, v)
        s = stakes_from_multiplicative(K, kind, kappa, delta, v, w, h)
        M, V, W = s.actual()
        inc = math.fsum((M * x, V * (x * x - v), W * (h(x) - w)))
        target = K * (num / den - 1)
        scale = abs(K) * (1 + abs(num / den) + abs(kappa * x) + kappa * kappa * (x * x + v)
                          + (h(x) + w) / (h(1 / kappa) if kind == "upper" else 1))
        worst = max(worst, abs(inc - target) / scale)
    assert worst <= 1e-12


@pytest.mark.parametrize("make", [lambda: power_hedge(2.5), lambda: power_hedge(3.0), logsquare_hedge],
                         ids=["p2.5", "cubic", "logsquare"])
def test_upper_numerator_below_exp_and_two(make):
    h = make()
    t = np.linspace(-30, 30, 10_000)
    for b in (0.1, 1.0, 10.0, 100.0):  # kappa = 1/b
        num = 1 + t + t * t / 2 - h.eval_array(t * b) / h(b)
        with np.errstate(over="ignore"):
            assert np.all(num <= np.exp(t) + 1e-12)
        assert np.all(num < 2)


def test_lower_ratio_positive():
    rng = np.random.default_rng(5)
    for _ in range(10_000):
        kappa, delta = 10 ** rng.uniform(-3, 1), rng.uniform(0, 1)
        num, den = lower_ratio_parts(kappa, delta, rng.normal() * 100, rng.exponential())
        assert num > 0 and den >= 1
        assert num / den >= 0.5 / den


def test_stopping_examples(cubic):
    # delta = 0.1 and C / lnln C = 100
    L = 2.0
    C_ln = math.log(100 * L)
    ctx = BlockContext(C_ln, L, 0.1, cubic)
    fl = stopping_update(StoppingFlags(), ctx, ForecasterMove(0, 0.5, 0), 1.5)
    assert fl.tau3_hit and fl.tau3_round == 1
    fl = stopping_update(StoppingFlags(), ctx, ForecasterMove(0, 0.9, 0), 0.0)
    assert not fl.tau1_hit
    C = 100 * L
    ctx2 = BlockContext(C_ln, L, 0.1, cubic, A=C - 0.1, round=4)
    fl = stopping_update(StoppingFlags(), ctx2, ForecasterMove(0, 0.2, 0), 0.0)
    assert fl.tau2_hit and fl.tau2_round == 5
    # once hit, flags stay set
    assert stopping_update(fl, ctx, ForecasterMove(0, 0, 0), 0.0).tau2_hit


def _proof_stream(seed, bundle, n=10_000):
    rng = np.random.default_rng(seed)
    d, L = bundle.delta, bundle.lnlnC_min
    wmax = min(d, d * L / n)
    return [(float(d * rng.uniform(-0.99, 0.99)), float(d * d * rng.uniform()), float(wmax * rng.uniform()))
            for _ in range(n)]


@pytest.mark.parametrize("seed", range(5))
def test_lemma_checks_at_proof_grade(seed):
    b = select_constants(0.1)
    scale = BlockScale.normalised(b.lnlnC_min)
    for h in (power_hedge(3.0), logsquare_hedge()):
        tr = run_block_processes(_proof_stream(seed, b), eps=b.eps, eps_star=b.eps_star,
                                 delta=b.delta, scale=scale, hedge=h)
        assert tr.halted is None and not tr.flags.any
        for check in (lemma5_bound_check, lemma6_bound_check, lemma7_payoff_check):
            rep = check(tr)
            assert rep.passed, rep.as_dict()
            assert rep.n_checked >= 10_000


def test_lemma_checks_vacuous_and_scoped(cubic):
    b = select_constants(0.1)
    scale = BlockScale.normalised(b.lnlnC_min)
    empty = run_block_processes([], eps=b.eps, eps_star=b.eps_star, delta=b.delta, scale=scale,
                                hedge=cubic)
    assert lemma5_bound_check(empty).passed and lemma5_bound_check(empty).n_checked == 0
    moves = _proof_stream(0, b, 100)
    moves[50] = (2 * b.delta, moves[50][1], moves[50][2])
    tr = run_block_processes(moves, eps=b.eps, eps_star=b.eps_star, delta=b.delta, scale=scale,
                             hedge=cubic)
    assert tr.tau(3) == 51
    assert max(c.n for c in lemma5_bound_check(tr).checks) == 50
