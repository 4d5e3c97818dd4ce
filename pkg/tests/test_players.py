import math

import numpy as np
import pytest

from ufqsh.engine import play
from ufqsh.kernels import MINIMUM, UNBOUNDED_BELOW
from ufqsh.players import (best_response, comply_reality, constant_forecaster, expected_hedge,
                           file_forecaster, iid_reality, scheduled_forecaster, scripted_reality)
from ufqsh.protocol import ForecasterMove, IncoherentForecast, TicketStakes
from ufqsh.strategy import Strategy, ZeroStrategy, theorem2_forcer


def test_constant_forecaster_coherence(cubic):
    assert constant_forecaster(0, 1, 1, cubic).move(7) == ForecasterMove(0.0, 1.0, 1.0)
    with pytest.raises(IncoherentForecast):
        constant_forecaster(0, 1, 0.5, cubic)
    assert constant_forecaster(0, 0, 0, cubic).move(1).v == 0.0
    assert constant_forecaster(0, 4, hedge=cubic).move(1).w == pytest.approx(8.0)


def test_scheduled_and_file_forecasters(cubic, tmp_path):
    seq = scheduled_forecaster([(0, 1, 1), (0.5, 4, 8)], cubic)
    assert seq.length == 2 and seq.move(2) == ForecasterMove(0.5, 4.0, 8.0)
    bad = scheduled_forecaster(lambda n: (0, 4, 7), cubic)
    with pytest.raises(IncoherentForecast):
        bad.move(1)
    p = tmp_path / "f.csv"
    p.write_text("m,v,w\n0,1,1\n0,4,9\n")
    ff = file_forecaster(str(p), cubic)
    assert ff.kind == "file" and ff.length == 2 and ff.move(2).w == 9.0


def test_gaussian_cubic_moment(cubic):
    rep = expected_hedge(cubic, "gaussian", 1.0)
    assert rep.expected_h == pytest.approx(2 * math.sqrt(2 / math.pi), rel=1e-9)
    with pytest.raises(ValueError):
        iid_reality("gaussian", 0, f=ForecasterMove(0, 1, 1.5), hedge=cubic)
    iid_reality("gaussian", 0, f=ForecasterMove(0, 1, 1.59577), hedge=cubic)


def test_rademacher_exact_and_student_t(cubic):
    assert expected_hedge(cubic, "rademacher", 1.0).expected_h == cubic(1.0)
    iid_reality("rademacher", 0, f=ForecasterMove(0, 1, 1.0), hedge=cubic)
    with pytest.raises(ValueError):
        iid_reality("student_t", 0, nu=3, f=ForecasterMove(0, 1, 100.0), hedge=cubic)
    rep = expected_hedge(cubic, "student_t", 1.0, nu=6)
    assert rep.expected_h > expected_hedge(cubic, "gaussian", 1.0).expected_h


def test_two_point_moments(cubic):
    rep = expected_hedge(cubic, "two_point", 1.0, p=0.2)
    assert rep.expected_h == pytest.approx(0.2 * 2.0 ** 3 + 0.8 * 0.5 ** 3)


@pytest.mark.parametrize("dist,kw", [("gaussian", {}), ("rademacher", {}),
                                     ("two_point", {"p": 0.3}), ("student_t", {"nu": 5})])
def test_iid_streams_reproducible_and_standardised(dist, kw):
    f = ForecasterMove(1.0, 4.0, 0.0)
    a = iid_reality(dist, 42, **kw)
    b = iid_reality(dist, 42, **kw)
    xa = np.array([a.move(n, None, f, None) for n in range(1, 200_001)])
    xb = np.array([b.move(n, None, f, None) for n in range(1, 200_001)])
    assert np.array_equal(xa, xb)
    assert xa.mean() == pytest.approx(1.0, abs=0.03)
    assert xa.var() == pytest.approx(4.0, rel=0.03)


def _run_script(cubic, kind, rounds=10_000, **kw):
    f = constant_forecaster(0.0, 1.0, 1.0, cubic)
    r = scripted_reality(kind, 1 / 16, **kw)
    res = play(hedge=cubic, forecaster=f, skeptic=ZeroStrategy(), reality=r, rounds=rounds)
    return res.trace, r


def test_lil_violator_low(cubic):
    tr, _ = _run_script(cubic, "lil_violator_low")
    live = tr.A > math.exp(math.e)
    assert np.max(np.abs(tr.lil_ratio[live])) <= 1 - 2 / 16


def test_lil_violator_high(cubic):
    tr, r = _run_script(cubic, "lil_violator_high", rounds=100_000)
    tail = tr.A >= 1e3
    assert np.all(tr.lil_ratio[tail] >= 1 + 2 / 16)
    assert not [n for n in r.flagged if tr.A[n - 1] >= 1e3]


def test_boundary_rider(cubic):
    tr, _ = _run_script(cubic, "boundary_rider")
    live = tr.A > math.exp(math.e)
    g = np.sqrt(2 * tr.A * np.log(np.log(np.where(live, tr.A, math.e ** math.e))))
    # from the first crossing on, the path stays within one step of g
    caught = np.argmax(live & (tr.lil_ratio >= 1))
    assert caught > 0
    assert np.all(np.abs(tr.lil_ratio[caught:] - 1) <= 2 / g[caught:])


def test_scripted_replay_bit_exact(cubic):
    a, _ = _run_script(cubic, "lil_violator_high", rounds=2000, cap=0.01, drive=True)
    b, _ = _run_script(cubic, "lil_violator_high", rounds=2000, cap=0.01, drive=True)
    assert np.array_equal(a.x, b.x)


def test_best_response_examples(cubic):
    br = best_response(1.0, TicketStakes(0.0, -3.0, 1.0), ForecasterMove(0, 4, 8), cubic)
    assert br.status == MINIMUM
    assert abs(br.x) == pytest.approx(2.0, abs=1e-7)
    assert br.increment == pytest.approx(0.0, abs=1e-12)
    grid = np.linspace(-10, 10, 200_001)
    assert br.increment <= (np.abs(grid) ** 3 - 8 - 3 * (grid ** 2 - 4)).min() + 1e-9
    br = best_response(1.0, TicketStakes(0.0, 1.0, 0.0), ForecasterMove(0, 1, 123.0), cubic)
    assert (br.x, br.increment, br.status) == (0.0, -1.0, MINIMUM)
    br = best_response(3.0, TicketStakes(1.0, 0.0, 0.0), ForecasterMove(0, 1, 1), cubic)
    assert br.status == UNBOUNDED_BELOW and br.x == -4.0 and br.increment < -3.0


def test_comply_vs_zero_stakes(cubic):
    f = constant_forecaster(0.0, 1.0, 1.0, cubic)
    r = comply_reality(cubic, 1)
    res = play(hedge=cubic, forecaster=f, skeptic=ZeroStrategy(), reality=r, rounds=5000)
    assert np.all(res.trace.K_logmag == 0.0)
    assert r.report()["slack_rounds"] == 0
    late = res.trace.A > 1000
    assert np.all(np.abs(res.trace.lil_ratio[late] - 1) < 0.2)


def test_comply_vs_theorem2_short(cubic):
    f = constant_forecaster(0.0, 1.0, 1.0, cubic)
    r = comply_reality(cubic, 2)
    res = play(hedge=cubic, forecaster=f, skeptic=theorem2_forcer(cubic), reality=r,
               rounds=20_000, record=False)
    assert res.stop is None
    assert not r.slack
    assert res.sup_logmag <= 1e-9


class _ShortW(Strategy):
    def stakes(self, state, f):
        return TicketStakes(0.0, 0.0, -1.0)

    def settle(self, state, f, x, hd=None):
        pass

    def log_capital(self):
        return 0.0


def test_comply_exploits_negative_W(cubic):
    f = constant_forecaster(0.0, 1.0, 1.0, cubic)
    r = comply_reality(cubic, 0)
    res = play(hedge=cubic, forecaster=f, skeptic=_ShortW(), reality=r, rounds=1, prudent=False)
    assert r.exploits == 1
    assert res.K_sign == -1
