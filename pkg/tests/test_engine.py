import math

import numpy as np
import pytest

from ufqsh.analysis import path_stats_from_checkpoints, running_stats
from ufqsh.engine import AdditivityError, Trace, geometric_checkpoints, play
from ufqsh.players import constant_forecaster, iid_reality, scheduled_forecaster, scripted_reality
from ufqsh.protocol import (CollateralViolation, ForecasterMove, IncoherentForecast, InvalidStakes,
                            ProtocolKind, RangeViolation, TicketStakes, new_game, step)
from ufqsh.strategy import Strategy, ZeroStrategy, theorem2_forcer


class Fixed(Strategy):
    """Same tickets every round; tracks its own capital for additivity."""

    def __init__(self, s, lie=0.0):
        self.s, self.lie, self.K = s, lie, 1.0

    def stakes(self, state, f):
        return self.s

    def settle(self, state, f, x, hd=None):
        d = x - f.m
        M, V, W = self.s.actual()
        self.K += M * d + V * (d * d - f.v) + W * ((hd or 0.0) - f.w)

    def log_capital(self):
        return math.log(self.K) + self.lie


def test_geometric_checkpoints():
    cps = geometric_checkpoints(100)
    assert cps[0] == 1 and cps[-1] == 100
    assert cps == sorted(set(cps))
    expected = {math.ceil(1.2 ** j) for j in range(30) if math.ceil(1.2 ** j) <= 100} | {100}
    assert set(cps) == expected
    assert geometric_checkpoints(0) == []


def test_zero_strategy_capital_constant(cubic):
    f = constant_forecaster(0.0, 1.0, 1.0, cubic)
    res = play(hedge=cubic, forecaster=f, skeptic=ZeroStrategy(),
               reality=iid_reality("gaussian", 1), rounds=500)
    assert res.rounds == 500 and res.stop is None
    assert np.all(res.trace.capital() == 1.0)
    assert len(res.trace) == 500 and res.trace.n[-1] == 500


def test_engine_matches_protocol_step(cubic):
    rng = np.random.default_rng(0)
    moves = [ForecasterMove(float(rng.normal()), 1.0, 1.0) for _ in range(300)]
    f = scheduled_forecaster(moves, cubic)
    real = iid_reality("rademacher", 5)
    res = play(hedge=cubic, forecaster=f, skeptic=theorem2_forcer(cubic), reality=real, rounds=10_000)
    assert res.rounds == 300  # capped by the schedule
    st = new_game(ProtocolKind.UFQSH, cubic)
    tr = res.trace
    for i in range(300):
        s = TicketStakes(tr.M[i], tr.V[i], tr.W[i])
        st = step(st, moves[i], s, tr.x[i])
        assert float(st.capital) == pytest.approx(float(tr.capital()[i]), rel=1e-12)
    assert st.S == pytest.approx(tr.S[-1]) and st.A == tr.A[-1]


def test_checkpoints_agree_with_trace(cubic):
    f = constant_forecaster(0.0, 1.0, 1.0, cubic)
    res = play(hedge=cubic, forecaster=f, skeptic=ZeroStrategy(),
               reality=iid_reality("gaussian", 2), rounds=5000)
    a = running_stats(res.trace, hedge=cubic)
    b = path_stats_from_checkpoints(res.checkpoints)
    assert np.array_equal(a.n, b.n)
    for col in ("S", "A", "b", "g", "ratio", "price_sum"):
        assert np.allclose(getattr(a, col), getattr(b, col), rtol=1e-12, equal_nan=True), col


def test_record_off_gives_same_result(cubic):
    f = constant_forecaster(0.0, 1.0, 1.0, cubic)
    kw = dict(hedge=cubic, forecaster=f, rounds=3000)
    a = play(skeptic=theorem2_forcer(cubic), reality=iid_reality("rademacher", 9), **kw)
    b = play(skeptic=theorem2_forcer(cubic), reality=iid_reality("rademacher", 9), record=False, **kw)
    assert b.trace is None
    assert (a.K_sign, a.K_logmag, a.sup_logmag) == (b.K_sign, b.K_logmag, b.sup_logmag)


def test_incoherent_forecast_stops_round_one(cubic):
    f = constant_forecaster(0.0, 4.0, 7.0)
    res = play(hedge=cubic, forecaster=f, skeptic=ZeroStrategy(),
               reality=scripted_reality("boundary_rider"), rounds=10)
    assert isinstance(res.stop, IncoherentForecast) and res.stop.round == 1
    assert res.rounds == 0


def test_collateral_violation_stops(cubic):
    f = constant_forecaster(0.0, 1.0, 1.0, cubic)
    res = play(hedge=cubic, forecaster=f, skeptic=Fixed(TicketStakes(5.0, 0.0, 0.0)),
               reality=scheduled_reality_down(), rounds=10)
    assert isinstance(res.stop, CollateralViolation)
    assert res.rounds == 0 and res.capital == 1.0


def scheduled_reality_down():
    class Down:
        def move(self, n, state, f, stakes):
            return -1.0

        def report(self):
            return {}
    return Down()


def test_unbounded_protocol_rejects_h_ticket(cubic):
    f = constant_forecaster(0.0, 1.0, 1.0)
    res = play(hedge=None, kind="unbounded", forecaster=f, skeptic=Fixed(TicketStakes(0, 0, 0.1)),
               reality=scheduled_reality_down(), rounds=3)
    assert isinstance(res.stop, InvalidStakes)


def test_puf_range(cubic):
    f = constant_forecaster(0.0, 0.25, 0.0, c=0.5)
    res = play(hedge=None, kind="predictably_unbounded", forecaster=f, skeptic=ZeroStrategy(),
               reality=scheduled_reality_down(), rounds=3)
    assert isinstance(res.stop, RangeViolation)


def test_additivity_check(cubic):
    f = constant_forecaster(0.0, 1.0, 1.0, cubic)
    s = TicketStakes(0.1, 0.05, 0.01)
    ok = play(hedge=cubic, forecaster=f, skeptic=Fixed(s), reality=iid_reality("rademacher", 1),
              rounds=200, additivity_every=1)
    assert ok.max_additivity_gap < 1e-12
    with pytest.raises(AdditivityError):
        play(hedge=cubic, forecaster=f, skeptic=Fixed(s, lie=1e-6),
             reality=iid_reality("rademacher", 1), rounds=200, additivity_every=7)


def test_trace_csv_header_and_roundtrip(cubic, tmp_path):
    f = constant_forecaster(0.0, 1.0, 1.0, cubic)
    res = play(hedge=cubic, forecaster=f, skeptic=theorem2_forcer(cubic),
               reality=iid_reality("rademacher", 3), rounds=100)
    p = tmp_path / "t.csv"
    res.trace.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0].split(",") == list(Trace.COLUMNS)
    assert len(lines) == 101
    data = np.genfromtxt(p, delimiter=",", names=True)
    assert np.array_equal(data["x"], res.trace.x)
    assert np.array_equal(data["K_logmag"], res.trace.K_logmag)
