"""Betting protocol state machines and the coherence criterion.

One round: Forecaster prices (m, v, w[, c]); Skeptic buys tickets (M, V, W);
Reality announces x; capital moves by

    M (x - m) + V ((x - m)^2 - v) + W (h(x - m) - w).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .hedge import HedgeFunction
from .numerics import SignedLogValue, golden_section_max, golden_section_min

__all__ = [
    "ProtocolKind",
    "ForecasterMove",
    "TicketStakes",
    "GameState",
    "RoundRecord",
    "ProtocolError",
    "CollateralViolation",
    "IncoherentForecast",
    "RangeViolation",
    "InvalidStakes",
    "new_game",
    "step",
    "unit_increment",
    "check_coherence",
    "coherence_supmin_oracle",
    "supmin_details",
    "reject_negative_W_exploit",
    "ZERO_STAKES",
]


class ProtocolKind(enum.Enum):
    UFQSH = "ufqsh"
    UnboundedForecasting = "unbounded"
    PredictablyUnboundedForecasting = "predictably_unbounded"

    @classmethod
    def parse(cls, name: str) -> "ProtocolKind":
        for kind in cls:
            if name in (kind.value, kind.name):
                return kind
        raise ValueError(f"unknown protocol kind {name!r}")


@dataclass(frozen=True, slots=True)
class ForecasterMove:
    m: float
    v: float
    w: float = 0.0
    c: float = math.inf


@dataclass(frozen=True, slots=True)
class TicketStakes:
    """Ticket amounts; the actual stakes are exp(log_scale) * (M, V, W).

    Mixtures of accounts whose capital has left the double range keep their
    stakes finite by moving the common magnitude into ``log_scale``.
    """

    M: float = 0.0
    V: float = 0.0
    W: float = 0.0
    log_scale: float = 0.0

    def actual(self) -> tuple[float, float, float]:
        try:
            k = math.exp(self.log_scale)
        except OverflowError:
            k = math.inf
        return (self.M * k if self.M else 0.0,
                self.V * k if self.V else 0.0,
                self.W * k if self.W else 0.0)

    def is_flat(self) -> bool:
        return self.M == 0.0 and self.V == 0.0 and self.W == 0.0


ZERO_STAKES = TicketStakes()


class ProtocolError(Exception):
    code = "PROTOCOL_ERROR"

    def __init__(self, message: str, round: int | None = None):
        self.round = round
        where = f" at round {round}" if round is not None else ""
        super().__init__(f"{self.code}{where}: {message}")


class CollateralViolation(ProtocolError):
    code = "COLLATERAL_VIOLATION"


class IncoherentForecast(ProtocolError):
    code = "INCOHERENT_FORECAST"


class RangeViolation(ProtocolError):
    code = "RANGE_VIOLATION"


class InvalidStakes(ProtocolError):
    code = "INVALID_STAKES"


@dataclass(frozen=True, slots=True)
class RoundRecord:
    n: int
    f: ForecasterMove
    stakes: TicketStakes
    x: float
    capital: SignedLogValue


@dataclass(frozen=True)
class GameState:
    kind: ProtocolKind
    hedge: HedgeFunction | None
    capital: SignedLogValue
    round: int = 0
    S: float = 0.0
    A: float = 0.0
    W_sum: float = 0.0
    prudent: bool = True
    coherence_gate: bool = True
    history: tuple[RoundRecord, ...] | None = None
    history_limit: int = 0  # 0 keeps everything when history is on


def new_game(kind: ProtocolKind, hedge: HedgeFunction | None, K0: float = 1.0, *,
             prudent: bool = True, coherence_gate: bool = True,
             history: bool = False, history_limit: int = 0) -> GameState:
    if isinstance(kind, str):
        kind = ProtocolKind.parse(kind)
    K0 = SignedLogValue.from_float(K0)
    if K0.sign <= 0:
        raise ValueError("initial capital K0 must be positive")
    if kind is ProtocolKind.UFQSH and hedge is None:
        raise ValueError("the UFQSH protocol needs a hedge function")
    return GameState(kind=kind, hedge=hedge, capital=K0, prudent=prudent,
                     coherence_gate=coherence_gate,
                     history=() if history else None, history_limit=history_limit)


def check_coherence(hedge: HedgeFunction, f: ForecasterMove) -> bool:
    """True iff h(sqrt(v)) <= w (with 1e-12 slack)."""
    if f.v < 0 or f.w < 0:
        return False
    return hedge.eval(math.sqrt(f.v)) <= f.w + 1e-12 * max(1.0, f.w)


def _validate_forecast(state: GameState, f: ForecasterMove, n: int) -> None:
    if not (math.isfinite(f.m) and math.isfinite(f.v) and math.isfinite(f.w)):
        raise IncoherentForecast(f"non-finite prices {f!r}", n)
    if f.v < 0:
        raise IncoherentForecast(f"v must be nonnegative, got {f.v!r}", n)
    if f.w < 0:
        raise IncoherentForecast(f"w must be nonnegative, got {f.w!r}", n)
    if not state.coherence_gate:
        return
    if state.kind is ProtocolKind.UFQSH and not check_coherence(state.hedge, f):
        raise IncoherentForecast(
            f"h(sqrt(v)) = {state.hedge.eval(math.sqrt(f.v))!r} exceeds w = {f.w!r}", n)
    if state.kind is ProtocolKind.PredictablyUnboundedForecasting:
        if f.c < 0:
            raise IncoherentForecast(f"range bound c must be nonnegative, got {f.c!r}", n)
        if f.v > f.c * f.c * (1 + 1e-12):
            raise IncoherentForecast(f"v = {f.v!r} exceeds c^2 = {f.c * f.c!r}", n)


def _validate_stakes(state: GameState, s: TicketStakes, n: int) -> None:
    if not (math.isfinite(s.M) and math.isfinite(s.V) and math.isfinite(s.W)):
        raise InvalidStakes(f"non-finite stakes {s!r}", n)
    kind = state.kind
    if kind is ProtocolKind.UnboundedForecasting:
        if s.V < 0:
            raise InvalidStakes(f"V must be nonnegative in the unbounded protocol, got {s.V!r}", n)
        if s.W != 0:
            raise InvalidStakes("the unbounded protocol has no h-ticket (W must be 0)", n)
    elif kind is ProtocolKind.PredictablyUnboundedForecasting:
        if s.W != 0:
            raise InvalidStakes("the predictably unbounded protocol has no h-ticket (W must be 0)", n)
    elif state.prudent and s.W < 0:
        raise InvalidStakes(f"prudent play needs W >= 0, got {s.W!r}", n)


def unit_increment(s: TicketStakes, f: ForecasterMove, d: float, hd: float) -> float:
    """Capital change per unit of exp(log_scale), for deviation d = x - m."""
    return math.fsum((s.M * d, s.V * d * d, -s.V * f.v, s.W * hd, -s.W * f.w))


def step(state: GameState, f: ForecasterMove, s: TicketStakes, x: float) -> GameState:
    n = state.round + 1
    _validate_forecast(state, f, n)
    _validate_stakes(state, s, n)
    if not math.isfinite(x):
        raise RangeViolation(f"Reality's move must be finite, got {x!r}", n)
    d = x - f.m
    if state.kind is ProtocolKind.PredictablyUnboundedForecasting and abs(d) > f.c:
        raise RangeViolation(f"|x - m| = {abs(d)!r} exceeds c = {f.c!r}", n)

    if state.kind is ProtocolKind.UFQSH and s.W != 0.0:
        hd = state.hedge.eval(d)
    else:
        hd = 0.0
    inc = unit_increment(s, f, d, hd)
    capital = state.capital + SignedLogValue.from_float(inc).scale_log(s.log_scale)
    if state.prudent and capital.sign < 0:
        # an all-in account can land a rounding error below zero
        scale = max(abs(s.M * d), abs(s.V) * (d * d + f.v), abs(s.W) * (hd + f.w))
        noise = SignedLogValue.from_float(1e-12 * scale).scale_log(s.log_scale)
        noise = max(noise, abs(state.capital) * 1e-12)
        if abs(capital) <= noise:
            capital = SignedLogValue.zero()
        else:
            raise CollateralViolation(f"capital would become {float(capital)!r}", n)

    history = state.history
    if history is not None:
        history = history + (RoundRecord(n, f, s, x, capital),)
        if state.history_limit and len(history) > state.history_limit:
            history = history[-state.history_limit:]
    return replace(state, capital=capital, round=n, S=state.S + d, A=state.A + f.v,
                   W_sum=state.W_sum + f.w, history=history)


# ---------------------------------------------------------------------------
# the sup-min characterisation of coherence

def _inner_min(hedge: HedgeFunction, v: float, w: float, U: float) -> tuple[float, float]:
    """min over x >= 0 of h(x) - w - U (x^2 - v); returns (x, value)."""

    def f(x):
        return hedge.h(x) - w - U * (x * x - v)

    x_hi = math.sqrt(v)
    while f(2.0 * x_hi) <= f(x_hi):
        x_hi *= 2.0
        if x_hi > 1e150:
            # the minimiser lies past the double range, so the inner minimum
            # is astronomically negative and cannot be the outer supremum
            return math.inf, -math.inf
    return golden_section_min(f, 0.0, 2.0 * x_hi, xtol=1e-13)


def supmin_details(hedge: HedgeFunction, v: float, w: float,
                   per_decade: int = 64, decades: int = 10) -> tuple[float, float, float]:
    """Return (sup-min value, maximising U, inner minimiser x)."""
    if not (v > 0 and w > 0):
        raise ValueError("the sup-min oracle needs v > 0 and w > 0")
    root = math.sqrt(v)
    U0 = hedge.deriv1(root) / (2.0 * root)
    if not U0 > 0:
        raise ArithmeticError(f"cannot centre the U grid: h'(sqrt v)/(2 sqrt v) = {U0!r}")
    half = decades / 2.0
    logs = np.linspace(math.log10(U0) - half, math.log10(U0) + half, decades * per_decade + 1)
    vals = np.array([_inner_min(hedge, v, w, 10.0 ** t)[1] for t in logs])
    i = int(np.argmax(vals))
    if i == 0 or i == len(logs) - 1:
        raise ArithmeticError(
            f"sup over U not bracketed on [{10 ** logs[0]:.3e}, {10 ** logs[-1]:.3e}]")
    t_star, best = golden_section_max(lambda t: _inner_min(hedge, v, w, 10.0 ** t)[1],
                                      float(logs[i - 1]), float(logs[i + 1]), xtol=1e-13)
    if best < vals[i]:
        t_star, best = float(logs[i]), float(vals[i])
    U_star = 10.0 ** t_star
    x_star, _ = _inner_min(hedge, v, w, U_star)
    return best, U_star, x_star


def coherence_supmin_oracle(hedge: HedgeFunction, v: float, w: float) -> float:
    """sup_{U>0} min_{x>0} [h(x) - w - U (x^2 - v)], computed numerically.

    It should agree with h(sqrt v) - w; a positive value means Skeptic has a
    sure profit (the prices are incoherent).
    """
    return supmin_details(hedge, v, w)[0]


def reject_negative_W_exploit(state: GameState, f: ForecasterMove, s: TicketStakes) -> float:
    """An x that sends capital below zero against stakes with W < 0."""
    if state.kind is not ProtocolKind.UFQSH:
        raise ValueError("the h-ticket only exists in the UFQSH protocol")
    if not s.W < 0:
        raise ValueError("reject_negative_W_exploit needs W < 0")
    budget = float(state.capital.scale_log(-s.log_scale))
    h = state.hedge
    d = 1.0
    for _ in range(4000):
        for cand in (d, -d):
            if unit_increment(s, f, cand, h.eval(cand)) < -budget:
                return f.m + cand
        d *= 2.0
        if not math.isfinite(d):
            break
    raise ArithmeticError("no witness found before overflow")
