"""The game loop and its per-round trace.

Each round runs Forecaster -> Skeptic -> Reality -> settlement. Skeptic's
capital is carried as (sign, log magnitude) so proof-scale stakes cannot
overflow. The validation rules are those of :func:`ufqsh.protocol.step`,
applied to a mutable state to keep million-round runs cheap.
"""
from __future__ import annotations

import csv
import math
from array import array
from dataclasses import dataclass, field

import numpy as np

from .hedge import HedgeFunction
from .numerics import E_E, SignedLogValue
from .protocol import (CollateralViolation, ForecasterMove, ProtocolError, ProtocolKind,
                       RangeViolation, _validate_forecast, _validate_stakes)

__all__ = ["Trace", "Checkpoint", "RunResult", "LiveState", "play", "geometric_checkpoints",
           "AdditivityError"]


class AdditivityError(AssertionError):
    pass


def geometric_checkpoints(rounds: int, ratio: float = 1.2) -> list[int]:
    """Sorted distinct ceil(ratio^j) up to ``rounds``, always ending at ``rounds``."""
    out = set()
    x = 1.0
    while x <= rounds:
        out.add(math.ceil(x))
        x *= ratio
    out.add(rounds)
    return sorted(n for n in out if 1 <= n <= rounds)


class Trace:
    """Column store of a played game, one row per round."""

    COLUMNS = ("n", "m", "v", "w", "M", "V", "W", "x", "S", "A", "b", "lil_ratio",
               "K_sign", "K_logmag", "tau_flags", "block_k")
    _INT = frozenset({"n", "K_sign", "tau_flags", "block_k"})

    def __init__(self):
        for c in self.COLUMNS:
            setattr(self, "_" + c, array("q" if c in self._INT else "d"))

    def __len__(self):
        return len(self._n)

    def __getattr__(self, name):
        if name in Trace.COLUMNS:
            return np.frombuffer(object.__getattribute__(self, "_" + name),
                                 dtype=np.int64 if name in Trace._INT else np.float64)
        raise AttributeError(name)

    def columns(self) -> dict[str, np.ndarray]:
        return {c: getattr(self, c) for c in self.COLUMNS}

    def capital(self) -> np.ndarray:
        """K_n as floats (overflowing to inf for huge capitals)."""
        with np.errstate(over="ignore"):
            return self.K_sign * np.exp(self.K_logmag)

    def to_csv(self, path) -> None:
        cols = [getattr(self, "_" + c) for c in self.COLUMNS]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(self.COLUMNS)
            for row in zip(*cols):
                wr.writerow([repr(v) for v in row])


@dataclass(frozen=True)
class Checkpoint:
    n: int
    S: float
    A: float
    b: float
    g: float
    ratio: float
    K_sign: int
    K_logmag: float
    price_sum: float  # running sum of w_i / h(b_i) over rounds with A_i > e^e


@dataclass
class RunResult:
    rounds: int  # rounds completed
    trace: Trace | None
    checkpoints: list[Checkpoint]
    K_sign: int
    K_logmag: float
    sup_logmag: float
    stop: ProtocolError | None
    skeptic: dict
    reality: dict
    max_additivity_gap: float = 0.0

    @property
    def capital(self) -> float:
        return self.K_sign * math.exp(self.K_logmag) if self.K_sign else 0.0


class LiveState:
    """The mutable counterpart of GameState that the loop hands to players."""

    __slots__ = ("kind", "hedge", "prudent", "coherence_gate", "round", "S", "A", "W_sum",
                 "K_sign", "K_log")

    def __init__(self, kind, hedge, K0, prudent, coherence_gate):
        self.kind, self.hedge = kind, hedge
        self.prudent, self.coherence_gate = prudent, coherence_gate
        self.round = 0
        self.S = self.A = self.W_sum = 0.0
        self.K_sign, self.K_log = 1, math.log(K0)

    @property
    def capital(self) -> SignedLogValue:
        return SignedLogValue(self.K_sign, self.K_log) if self.K_sign else SignedLogValue.zero()


def _apply(st: LiveState, inc: float, log_scale: float, s, d, hd, f, n):
    """Add inc * exp(log_scale) to the capital, enforcing the collateral rule."""
    if inc == 0.0:
        return
    if st.K_sign > 0 and log_scale - st.K_log < 700.0:
        r = inc * math.exp(log_scale - st.K_log)
        if r > -1.0:
            st.K_log += math.log1p(r)
            return
    cap = st.capital + SignedLogValue.from_float(inc).scale_log(log_scale)
    if st.prudent and cap.sign < 0:
        scale = max(abs(s.M * d), abs(s.V) * (d * d + f.v), abs(s.W) * (hd + f.w))
        noise = SignedLogValue.from_float(1e-12 * scale).scale_log(log_scale)
        noise = max(noise, abs(st.capital) * 1e-12)
        if abs(cap) <= noise:
            cap = SignedLogValue.zero()
        else:
            raise CollateralViolation(f"capital would become {float(cap)!r}", n)
    st.K_sign, st.K_log = cap.sign, cap.logmag


def play(*, hedge: HedgeFunction | None, forecaster, skeptic, reality, rounds: int,
         kind: ProtocolKind | str = ProtocolKind.UFQSH, K0: float = 1.0, prudent: bool = True,
         coherence_gate: bool = True, record: bool = True, checkpoints=None,
         additivity_every: int = 0, additivity_rtol: float = 1e-9) -> RunResult:
    """Run one game. A ProtocolError ends it early and is returned in ``stop``.

    With ``additivity_every`` = k > 0, every k-th round the strategy's own
    account total is compared with the game's capital.
    """
    if isinstance(kind, str):
        kind = ProtocolKind.parse(kind)
    if rounds < 0:
        raise ValueError("rounds must be nonnegative")
    if kind is ProtocolKind.UFQSH and hedge is None:
        raise ValueError("the UFQSH protocol needs a hedge function")
    length = getattr(forecaster, "length", None)
    if length is not None:
        rounds = min(rounds, length)
    st = LiveState(kind, hedge, K0, prudent, coherence_gate)
    tr = Trace() if record else None
    cps = set(geometric_checkpoints(rounds) if checkpoints is None else checkpoints)
    cp_rows: list[Checkpoint] = []
    h_eval = hedge.eval if hedge is not None else None
    ufqsh = kind is ProtocolKind.UFQSH
    puf = kind is ProtocolKind.PredictablyUnboundedForecasting
    price_sum = 0.0
    sup_log = st.K_log
    last_f = None
    max_gap = 0.0
    stop = None
    if tr is not None:
        app = {c: getattr(tr, "_" + c).append for c in Trace.COLUMNS}
    n = 0
    try:
        for n in range(1, rounds + 1):
            f = forecaster.move(n)
            if f is not last_f:
                _validate_forecast(st, f, n)
                last_f = f
            s = skeptic.stakes(st, f)
            _validate_stakes(st, s, n)
            x = reality.move(n, st, f, s)
            if not math.isfinite(x):
                raise RangeViolation(f"Reality's move must be finite, got {x!r}", n)
            d = x - f.m
            if puf and abs(d) > f.c:
                raise RangeViolation(f"|x - m| = {abs(d)!r} exceeds c = {f.c!r}", n)
            hd = h_eval(d) if ufqsh else 0.0
            if s.M or s.V or s.W:
                inc = math.fsum((s.M * d, s.V * d * d, -s.V * f.v, s.W * hd, -s.W * f.w))
                _apply(st, inc, s.log_scale, s, d, hd, f, n)
            skeptic.settle(st, f, x, hd)
            st.round = n
            st.S += d
            st.A += f.v
            st.W_sum += f.w
            if st.K_sign and st.K_log > sup_log:
                sup_log = st.K_log
            A = st.A
            if A > E_E:
                L = math.log(math.log(A))
                b = math.sqrt(A / L)
                g = math.sqrt(2.0 * A * L)
                ratio = st.S / g
                if f.w and ufqsh:
                    price_sum += f.w / h_eval(b)
            else:
                b = g = 0.0
                ratio = math.nan
            if additivity_every and n % additivity_every == 0:
                lk = skeptic.log_capital()
                gap = abs(math.expm1(lk - st.K_log)) if st.K_sign else (math.exp(lk) if lk > -math.inf else 0.0)
                max_gap = max(max_gap, gap)
                if gap > additivity_rtol:
                    raise AdditivityError(f"round {n}: accounts total exp({lk}) vs capital "
                                          f"exp({st.K_log}) (relative gap {gap:.3e})")
            if tr is not None:
                M, V, W = s.actual()
                fl, bk = skeptic.round_info()
                app["n"](n); app["m"](f.m); app["v"](f.v); app["w"](f.w)
                app["M"](M); app["V"](V); app["W"](W); app["x"](x)
                app["S"](st.S); app["A"](A); app["b"](b); app["lil_ratio"](ratio)
                app["K_sign"](st.K_sign); app["K_logmag"](st.K_log)
                app["tau_flags"](fl); app["block_k"](bk)
            if n in cps:
                cp_rows.append(Checkpoint(n, st.S, A, b, g, ratio, st.K_sign, st.K_log, price_sum))
    except ProtocolError as e:
        stop = e
        n -= 1
    return RunResult(rounds=n if stop is None else st.round, trace=tr, checkpoints=cp_rows,
                     K_sign=st.K_sign, K_logmag=st.K_log, sup_logmag=sup_log, stop=stop,
                     skeptic=skeptic.report(), reality=reality.report(), max_additivity_gap=max_gap)
