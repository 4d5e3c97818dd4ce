"""Forecaster and Reality policies used to exercise Skeptic's strategies."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate, stats

from .hedge import HedgeFunction
from .kernels import MINIMUM, UNBOUNDED_BELOW, backend_for
from .numerics import E_E, SignedLogValue
from .protocol import (ForecasterMove, IncoherentForecast, ProtocolKind, TicketStakes,
                       check_coherence, reject_negative_W_exploit, unit_increment)

__all__ = [
    "ForecasterPolicy",
    "constant_forecaster",
    "scheduled_forecaster",
    "file_forecaster",
    "RealityPolicy",
    "IIDReality",
    "iid_reality",
    "expected_hedge",
    "MomentReport",
    "ScriptedReality",
    "scripted_reality",
    "BestResponse",
    "best_response",
    "ComplyReality",
    "comply_reality",
    "UNBOUNDED_BELOW",
    "MINIMUM",
]


# ---------------------------------------------------------------------------
# Forecaster

class ForecasterPolicy:
    """Source of per-round prices; ``length`` is None for endless policies."""

    kind = "base"
    length: int | None = None

    def move(self, n: int) -> ForecasterMove:
        raise NotImplementedError


class _Constant(ForecasterPolicy):
    kind = "constant"

    def __init__(self, f: ForecasterMove):
        self.f = f

    def move(self, n):
        return self.f


def constant_forecaster(m: float, v: float, w: float | None = None, hedge: HedgeFunction | None = None,
                        c: float = math.inf) -> ForecasterPolicy:
    """Prices (m, v, w) every round. ``w`` defaults to the cheapest coherent h(sqrt v)."""
    if v < 0:
        raise IncoherentForecast(f"v must be nonnegative, got {v!r}")
    if w is None:
        w = hedge.eval(math.sqrt(v)) if hedge is not None else 0.0
    f = ForecasterMove(float(m), float(v), float(w), c)
    if hedge is not None and not check_coherence(hedge, f):
        raise IncoherentForecast(f"h(sqrt(v)) = {hedge.eval(math.sqrt(v))!r} exceeds w = {w!r}")
    return _Constant(f)


class _Scheduled(ForecasterPolicy):
    kind = "scheduled"

    def __init__(self, fn, hedge, length=None):
        self.fn, self.hedge, self.length = fn, hedge, length

    def move(self, n):
        out = self.fn(n)
        f = out if isinstance(out, ForecasterMove) else ForecasterMove(*map(float, out))
        if self.hedge is not None and not check_coherence(self.hedge, f):
            raise IncoherentForecast(f"scheduled move {f!r} is incoherent", n)
        return f


def scheduled_forecaster(schedule: Callable[[int], object] | Sequence, hedge: HedgeFunction | None = None
                         ) -> ForecasterPolicy:
    """Prices from a function of the round number n >= 1, or from a finite sequence."""
    if callable(schedule):
        return _Scheduled(schedule, hedge)
    moves = list(schedule)
    return _Scheduled(lambda n: moves[n - 1], hedge, length=len(moves))


def file_forecaster(path: str, hedge: HedgeFunction | None = None) -> ForecasterPolicy:
    """Prices from a CSV file with columns m, v, w and optionally c."""
    moves = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            c = float(row["c"]) if row.get("c") not in (None, "") else math.inf
            moves.append(ForecasterMove(float(row["m"]), float(row["v"]), float(row["w"]), c))
    if not moves:
        raise ValueError(f"no forecaster moves in {path}")
    pol = scheduled_forecaster(moves, hedge)
    pol.kind = "file"
    return pol


# ---------------------------------------------------------------------------
# Reality

class RealityPolicy:
    kind = "base"

    def move(self, n: int, state, f: ForecasterMove, stakes: TicketStakes) -> float:
        raise NotImplementedError

    def report(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class MomentReport:
    dist: str
    mean: float
    variance: float
    expected_h: float
    error: float  # quadrature error estimate or Monte Carlo standard error
    method: str


def _standard_dist(kind: str, p: float | None, nu: float | None):
    """(sampler(rng, size), E h(s*Z) evaluator) for a mean-0 variance-1 Z."""
    if kind == "gaussian":
        return (lambda rng, k: rng.standard_normal(k)), stats.norm()
    if kind == "rademacher":
        return (lambda rng, k: rng.integers(0, 2, size=k) * 2.0 - 1.0), None
    if kind == "two_point":
        if p is None or not 0 < p < 1:
            raise ValueError("two_point needs 0 < p < 1")
        hi, lo = math.sqrt((1 - p) / p), -math.sqrt(p / (1 - p))
        return (lambda rng, k: np.where(rng.random(k) < p, hi, lo)), None
    if kind == "student_t":
        if nu is None or not nu > 2:
            raise ValueError("student_t needs nu > 2 for a finite variance")
        s = math.sqrt((nu - 2) / nu)
        return (lambda rng, k: rng.standard_t(nu, size=k) * s), stats.t(nu, scale=s)
    raise ValueError(f"unknown distribution {kind!r}")


def expected_hedge(hedge: HedgeFunction, kind: str, v: float, p: float | None = None,
                   nu: float | None = None) -> MomentReport:
    """E h(X - m) for X - m = sqrt(v) Z with Z standardized; raises if infinite."""
    root = math.sqrt(v)
    if kind == "rademacher":
        return MomentReport(kind, 0.0, v, hedge.eval(root), 0.0, "exact")
    if kind == "two_point":
        hi, lo = math.sqrt((1 - p) / p), -math.sqrt(p / (1 - p))
        eh = p * hedge.eval(root * hi) + (1 - p) * hedge.eval(root * lo)
        return MomentReport(kind, 0.0, v, eh, 0.0, "exact")
    if kind == "student_t" and hedge.tail_exponent is not None and not nu > hedge.tail_exponent:
        raise ValueError(f"E h(X) is infinite: Student-t with nu = {nu} has no moment "
                         f"of order {hedge.tail_exponent}")
    _, dist = _standard_dist(kind, p, nu)
    val, err = integrate.quad(lambda z: 2.0 * hedge.eval(root * z) * dist.pdf(z), 0.0, math.inf,
                              limit=200, epsabs=1e-12, epsrel=1e-10)
    if not math.isfinite(val) or err > 1e-3 * max(1.0, abs(val)):
        raise ValueError(f"E h(X) did not converge for {kind} (estimate {val}, error {err})")
    return MomentReport(kind, 0.0, v, val, err, "quadrature")


class IIDReality(RealityPolicy):
    """x_n = m_n + sqrt(v_n) Z_n with i.i.d. standardized Z_n, drawn in chunks."""

    kind = "iid"
    CHUNK = 1 << 16

    def __init__(self, dist: str, seed: int, p=None, nu=None, moments: MomentReport | None = None):
        self.dist, self.seed, self.moments = dist, seed, moments
        self._sampler, _ = _standard_dist(dist, p, nu)
        self._rng = np.random.default_rng(seed)
        self._buf: list[float] = []
        self._i = 0

    def move(self, n, state, f, stakes):
        if self._i >= len(self._buf):
            self._buf = self._sampler(self._rng, self.CHUNK).tolist()
            self._i = 0
        z = self._buf[self._i]
        self._i += 1
        return f.m + math.sqrt(f.v) * z

    def report(self):
        out = {"kind": self.kind, "dist": self.dist, "seed": self.seed}
        if self.moments is not None:
            out["moments"] = self.moments.__dict__
        return out


def iid_reality(dist: str, seed: int, *, f: ForecasterMove | None = None,
                hedge: HedgeFunction | None = None, p: float | None = None,
                nu: float | None = None, rtol: float = 0.01) -> IIDReality:
    """An i.i.d. Reality; with ``f`` and ``hedge`` given, checks E h(X - m) <= w
    (up to ``rtol`` relative) for those prices before accepting."""
    moments = None
    if f is not None and hedge is not None:
        moments = expected_hedge(hedge, dist, f.v, p, nu)
        if moments.expected_h > f.w * (1 + rtol) + 1e-300:
            raise ValueError(f"E h(X - m) = {moments.expected_h:.8g} exceeds w = {f.w:.8g} "
                             f"for {dist} Reality")
    else:
        _standard_dist(dist, p, nu)
    return IIDReality(dist, seed, p, nu, moments)


def _g_of(A: float) -> float:
    return math.sqrt(2.0 * A * math.log(math.log(A))) if A > E_E else 0.0


def _b_of(A: float) -> float:
    return math.sqrt(A / math.log(math.log(A))) if A > E_E else 0.0


class ScriptedReality(RealityPolicy):
    """Deterministic adversarial paths measured against g = sqrt(2 A lnln A).

    * ``lil_violator_low``: step sqrt(v) toward 0, so |S_n| <= sqrt(v).
    * ``lil_violator_high``: push S above (1+2 eps) g. Each move is capped at
      sqrt(v) and, when ``cap`` is set, at cap * b_n. With ``drive`` every move
      is the full cap upward; otherwise the path tracks the target from just
      above it. Rounds past ``start_A`` that end below target are flagged.
    * ``boundary_rider``: step up while S < g, down otherwise.
    """

    kind = "scripted"
    KINDS = ("lil_violator_low", "lil_violator_high", "boundary_rider")

    def __init__(self, script: str, eps: float = 1 / 16, *, cap: float | None = None,
                 drive: bool = False, start_A: float = 100.0, level: float | None = None):
        if script not in self.KINDS:
            raise ValueError(f"unknown script {script!r}; expected one of {self.KINDS}")
        if not 0 < eps < 0.5:
            raise ValueError("scripted eps must lie in (0, 1/2)")
        self.script, self.eps, self.cap, self.drive, self.start_A = script, eps, cap, drive, start_A
        self.level = 1 + 2 * eps if level is None else level
        self.flagged: list[int] = []

    def move(self, n, state, f, stakes):
        root = math.sqrt(f.v)
        S = state.S
        A_after = state.A + f.v
        if self.script == "lil_violator_low":
            return f.m + (-root if S > 0 else root)
        if self.script == "boundary_rider":
            return f.m + (root if S < _g_of(A_after) else -root)
        step = root
        if self.cap is not None:
            step = min(step, self.cap * _b_of(A_after))
        if self.drive:
            d = step
        else:
            d = max(-step, min(step, self.level * _g_of(A_after) * (1 + 1e-9) - S))
            d = max(d, 0.0) if S + d < self.level * _g_of(A_after) else d
        if A_after > self.start_A and S + d < self.level * _g_of(A_after):
            if len(self.flagged) < 1000:
                self.flagged.append(n)
        return f.m + d

    def report(self):
        return {"kind": self.kind, "script": self.script, "eps": self.eps, "cap": self.cap,
                "drive": self.drive, "below_target_rounds": len(self.flagged)}


def scripted_reality(kind: str, eps: float = 1 / 16, **kw) -> ScriptedReality:
    return ScriptedReality(kind, eps, **kw)


# ---------------------------------------------------------------------------
# best response and compliance

class BestResponse(NamedTuple):
    x: float
    increment: float  # actual capital change, in the units of K_prev
    status: str  # MINIMUM, or UNBOUNDED_BELOW with a witness x


def best_response(K_prev, stakes: TicketStakes, f: ForecasterMove, hedge: HedgeFunction) -> BestResponse:
    """Reality's move minimising Skeptic's capital increment.

    When the increment is unbounded below, ``x`` is a witness that takes more
    than K_prev from Skeptic.
    """
    K = SignedLogValue.from_float(K_prev)
    budget = max(float(K.scale_log(-stakes.log_scale)), 0.0)
    kern = backend_for(hedge)
    d, g, status = kern.best_response(hedge, stakes.M, stakes.V, stakes.W, f.v, f.w, budget)
    return BestResponse(f.m + d, _actual(g, stakes.log_scale), status)


def _actual(unit: float, log_scale: float) -> float:
    if unit == 0.0:
        return 0.0
    return float(SignedLogValue.from_float(unit).scale_log(log_scale))


class ComplyReality(RealityPolicy):
    """Steers the LIL ratio toward 1 using only moves that do not raise
    Skeptic's capital.

    Candidates each round: +-sqrt(v), +-sqrt(v)/2, 0, the best response, and
    the move toward g_n clipped to 2 sqrt(v). Among candidates with increment
    <= 0 (up to rounding), the one landing closest to the target wins, with
    ties broken by a seeded shuffle. If none qualifies, the smallest increment
    is played and the overshoot is logged as compliance slack.
    """

    kind = "comply"

    def __init__(self, hedge: HedgeFunction, seed: int = 0, target: str = "lil_ratio"):
        if target != "lil_ratio":
            raise ValueError(f"unsupported compliance target {target!r}")
        self.hedge = hedge
        self.target = target
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._kern = backend_for(hedge)
        self.slack: list[tuple[int, float]] = []
        self.exploits = 0

    def move(self, n, state, f, stakes):
        root = math.sqrt(f.v)
        S = state.S
        T = _g_of(state.A + f.v)
        track = max(-2 * root, min(2 * root, T - S))
        if stakes.is_flat():
            return f.m + track
        if stakes.W < 0 and getattr(state, "kind", None) is ProtocolKind.UFQSH:
            self.exploits += 1
            return reject_negative_W_exploit(state, f, stakes)
        budget = max(float(state.capital.scale_log(-stakes.log_scale)), 0.0)
        br, _, status = self._kern.best_response(self.hedge, stakes.M, stakes.V, stakes.W,
                                                 f.v, f.w, budget)
        if status == UNBOUNDED_BELOW:
            return f.m + br
        cands = [root, -root, 0.5 * root, -0.5 * root, 0.0, br, track]
        order = self._rng.permutation(len(cands))
        h = self.hedge
        best_ok = None
        best_any = None
        M, V, W = stakes.M, stakes.V, stakes.W
        for i in order:
            d = cands[i]
            hd = h.eval(d) if W else 0.0
            inc = unit_increment(stakes, f, d, hd)
            tol = 1e-12 * (abs(M * d) + abs(V) * (d * d + f.v) + abs(W) * (hd + f.w))
            miss = abs(S + d - T)
            if inc <= tol and (best_ok is None or miss < best_ok[0]):
                best_ok = (miss, d)
            if best_any is None or inc < best_any[0]:
                best_any = (inc, d)
        if best_ok is not None:
            return f.m + best_ok[1]
        self.slack.append((n, _actual(best_any[0], stakes.log_scale)))
        return f.m + best_any[1]

    def report(self):
        return {"kind": self.kind, "target": self.target, "seed": self.seed,
                "slack_rounds": len(self.slack),
                "slack_total": math.fsum(s for _, s in self.slack),
                "negative_W_exploits": self.exploits}


def comply_reality(hedge: HedgeFunction, seed: int = 0, target: str = "lil_ratio") -> ComplyReality:
    return ComplyReality(hedge, seed, target)
