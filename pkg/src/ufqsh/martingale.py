"""Exponential capital processes used by the lower-bound block strategy.

Two multiplicative processes and their combination:

* upper kind, ratio (1 + k x + k^2 x^2/2 - h(x)/h(1/k)) / (1 + k^2 v/2 - w/h(1/k))
* lower kind, ratio (1 + k x + (1+d) k^2 x^2/2) / (1 + (1+d) k^2 v/2)
* M = 3 L_upper(k2) - L_lower(k1) - L_lower(k3),  N = 1 + (1 - M)/ln C

A :class:`BlockScale` fixes the units. In raw units every quantity is what
the protocol sees. In normalised units x, v and w are divided by sigma,
sigma^2 and h(sigma) with sigma = sqrt(C / ln ln C), and kappa is multiplied
by sigma. That keeps proof-grade blocks (where C has no float representation)
computable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

from .hedge import HedgeFunction
from .numerics import SignedLogValue
from .protocol import ForecasterMove, TicketStakes

__all__ = [
    "MartingaleError",
    "BlockScale",
    "ExpProcessState",
    "StoppingFlags",
    "BlockContext",
    "upper_ratio_parts",
    "lower_ratio_parts",
    "new_process",
    "l_upper_update",
    "l_lower_update",
    "combine_M",
    "n_process",
    "stakes_from_multiplicative",
    "stopping_update",
    "BlockRound",
    "BlockTrace",
    "run_block_processes",
    "LemmaCheck",
    "LemmaReport",
    "lemma5_bound_check",
    "lemma6_bound_check",
    "lemma7_payoff_check",
]


class MartingaleError(ArithmeticError):
    """A multiplicative update with a nonpositive denominator."""


@dataclass(frozen=True)
class BlockScale:
    C_lnln: float
    C_ln: float  # may be +inf in normalised units
    log_sigma: float
    normalized: bool

    @classmethod
    def raw(cls, C_ln: float) -> "BlockScale":
        if not (C_ln > 1 and math.isfinite(C_ln)):
            raise ValueError("raw units need a finite ln C > 1")
        return cls(math.log(C_ln), C_ln, 0.0, False)

    @classmethod
    def unit(cls) -> "BlockScale":
        """Raw units without a block attached (process updates only)."""
        return cls(math.nan, math.nan, 0.0, False)

    @classmethod
    def normalised(cls, C_lnln: float) -> "BlockScale":
        if not C_lnln > 0:
            raise ValueError("ln ln C must be positive")
        C_ln = math.exp(C_lnln) if C_lnln < 709.0 else math.inf
        log_sigma = 0.5 * (C_ln - math.log(C_lnln))
        return cls(C_lnln, C_ln, log_sigma, True)

    @property
    def lnC(self) -> SignedLogValue:
        return SignedLogValue(1, self.C_lnln)

    @property
    def C(self) -> float:
        """C in the units of this scale (ln ln C after normalisation)."""
        return self.C_lnln if self.normalized else math.exp(self.C_ln)

    @property
    def sigma(self) -> float:
        """sqrt(C / ln ln C) in the units of this scale."""
        return 1.0 if self.normalized else math.exp(0.5 * (self.C_ln - math.log(self.C_lnln)))

    def hx_ratio(self, h: HedgeFunction, x: float, kappa: float) -> float:
        """h(x)/h(1/kappa) for x and kappa in these units."""
        if self.normalized:
            return h.scale_ratio(x, 1.0 / kappa, self.log_sigma)
        return h.eval(x) / h.eval(1.0 / kappa)

    def w_ratio(self, h: HedgeFunction, w: float, kappa: float) -> float:
        """w/h(1/kappa); normalised w is already w/h(sigma)."""
        if w == 0.0:
            return 0.0
        if self.normalized:
            return w / h.scale_ratio(1.0 / kappa, 1.0, self.log_sigma)
        return w / h.eval(1.0 / kappa)

    def h_sigma(self, h: HedgeFunction) -> float:
        """h(sqrt(C/lnlnC)) in these units."""
        return 1.0 if self.normalized else h.eval(self.sigma)


@dataclass(frozen=True)
class ExpProcessState:
    kind: str  # "upper" or "lower"
    kappa: float
    delta: float = 0.0
    value: SignedLogValue = SignedLogValue(1, 0.0)
    round: int = 0
    scale: BlockScale = field(default_factory=BlockScale.unit)


def new_process(kind: str, kappa: float, delta: float = 0.0,
                scale: BlockScale | None = None) -> ExpProcessState:
    if kind not in ("upper", "lower"):
        raise ValueError(f"kind must be 'upper' or 'lower', got {kind!r}")
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    return ExpProcessState(kind, kappa, delta, SignedLogValue.one(), 0,
                           scale if scale is not None else BlockScale.unit())


def upper_ratio_parts(kappa, x, v, w, h, scale=None) -> tuple[float, float]:
    scale = scale or BlockScale.unit()
    t = kappa * x
    num = 1.0 + t + 0.5 * t * t - scale.hx_ratio(h, x, kappa)
    den = 1.0 + 0.5 * kappa * kappa * v - scale.w_ratio(h, w, kappa)
    return num, den


def lower_ratio_parts(kappa, delta, x, v) -> tuple[float, float]:
    t = kappa * x
    num = 1.0 + t + 0.5 * (1.0 + delta) * t * t
    den = 1.0 + 0.5 * (1.0 + delta) * kappa * kappa * v
    return num, den


def l_upper_update(s: ExpProcessState, x: float, v: float, w: float,
                   h: HedgeFunction) -> ExpProcessState:
    num, den = upper_ratio_parts(s.kappa, x, v, w, h, s.scale)
    if not den > 0:
        raise MartingaleError(f"upper-process denominator {den!r} <= 0 at round {s.round + 1}")
    value = s.value * SignedLogValue.from_float(num) / SignedLogValue.from_float(den)
    return replace(s, value=value, round=s.round + 1)


def l_lower_update(s: ExpProcessState, x: float, v: float) -> ExpProcessState:
    num, den = lower_ratio_parts(s.kappa, s.delta, x, v)
    value = s.value * SignedLogValue.from_float(num) / SignedLogValue.from_float(den)
    return replace(s, value=value, round=s.round + 1)


def combine_M(l2: ExpProcessState, l1: ExpProcessState, l3: ExpProcessState) -> SignedLogValue:
    if l2.kind != "upper" or l1.kind != "lower" or l3.kind != "lower":
        raise ValueError("combine_M expects (upper, lower, lower)")
    return 3 * l2.value - l1.value - l3.value


def n_process(M: SignedLogValue, C_ln) -> SignedLogValue:
    """1 + (1 - M)/ln C; ``C_ln`` is a float or a SignedLogValue."""
    lnC = SignedLogValue.from_float(C_ln)
    if lnC.sign <= 0:
        raise ValueError("ln C must be positive")
    return SignedLogValue.one() + (SignedLogValue.one() - M) / lnC


def stakes_from_multiplicative(K_prev, kind: str, kappa: float, delta: float, v: float,
                               w: float, h: HedgeFunction | None) -> TicketStakes:
    """Tickets whose payoff reproduces one multiplicative update of K_prev.

    Raw units only. The magnitude of K_prev travels in ``log_scale``.
    """
    K = SignedLogValue.from_float(K_prev)
    if kind == "upper":
        hk = h.eval(1.0 / kappa)
        den = 1.0 + 0.5 * kappa * kappa * v - w / hk
        if not den > 0:
            raise MartingaleError(f"upper-process denominator {den!r} <= 0")
        M, V, W = kappa / den, kappa * kappa / (2.0 * den), -1.0 / (hk * den)
    elif kind == "lower":
        den = 1.0 + 0.5 * (1.0 + delta) * kappa * kappa * v
        M, V, W = kappa / den, (1.0 + delta) * kappa * kappa / (2.0 * den), 0.0
    else:
        raise ValueError(f"kind must be 'upper' or 'lower', got {kind!r}")
    if K.sign == 0:
        return TicketStakes(0.0, 0.0, 0.0)
    return TicketStakes(K.sign * M, K.sign * V, K.sign * W if W else 0.0, log_scale=K.logmag)


# ---------------------------------------------------------------------------
# stopping times

@dataclass(frozen=True)
class StoppingFlags:
    tau1_hit: bool = False
    tau2_hit: bool = False
    tau3_hit: bool = False
    tau1_round: int | None = None
    tau2_round: int | None = None
    tau3_round: int | None = None

    @property
    def any(self) -> bool:
        return self.tau1_hit or self.tau2_hit or self.tau3_hit


@dataclass(frozen=True)
class BlockContext:
    """Running block sums before the current round, plus the block's C."""

    C_ln: float
    C_lnln: float
    delta: float
    hedge: HedgeFunction
    w_sum: float = 0.0
    A: float = 0.0
    round: int = 0
    normalized: bool = False

    @property
    def scale(self) -> BlockScale:
        if self.normalized:
            return BlockScale.normalised(self.C_lnln)
        return BlockScale(self.C_lnln, self.C_ln, 0.0, False)

    def thresholds(self) -> dict[str, float]:
        sc = self.scale
        sigma, hs, d, L = sc.sigma, sc.h_sigma(self.hedge), self.delta, self.C_lnln
        return {
            "v": d * d * sigma * sigma,
            "w": d * hs,
            "w_sum": d * hs * L,
            "A": sc.C,
            "x": d * sigma,
        }

    def advance(self, f: ForecasterMove) -> "BlockContext":
        return replace(self, w_sum=self.w_sum + f.w, A=self.A + f.v, round=self.round + 1)


def stopping_update(flags: StoppingFlags, ctx: BlockContext, f: ForecasterMove,
                    x: float) -> StoppingFlags:
    """Flags after round ctx.round + 1; ``ctx`` holds the sums before it."""
    n = ctx.round + 1
    thr = ctx.thresholds()
    out = flags
    if not out.tau1_hit and (f.v > thr["v"] or f.w > thr["w"] or ctx.w_sum + f.w > thr["w_sum"]):
        out = replace(out, tau1_hit=True, tau1_round=n)
    if not out.tau2_hit and ctx.A + f.v >= thr["A"]:
        out = replace(out, tau2_hit=True, tau2_round=n)
    if not out.tau3_hit and abs(x - f.m) > thr["x"]:
        out = replace(out, tau3_hit=True, tau3_round=n)
    return out


# ---------------------------------------------------------------------------
# block traces and the lemma checkers

@dataclass(frozen=True)
class BlockRound:
    n: int
    S: float
    A: float
    L1: SignedLogValue
    L2: SignedLogValue
    L3: SignedLogValue
    M: SignedLogValue
    N: SignedLogValue


@dataclass
class BlockTrace:
    eps: float
    delta: float
    kappas: tuple[float, float, float]  # in the units of ``scale``
    scale: BlockScale
    rounds: list[BlockRound]
    flags: StoppingFlags
    halted: str | None = None  # why updating stopped early, if it did

    def tau(self, i: int) -> float:
        r = getattr(self.flags, f"tau{i}_round")
        return math.inf if r is None else r


def run_block_processes(moves: Iterable[tuple[float, float, float]], *, eps: float,
                        eps_star: float, delta: float, scale: BlockScale,
                        hedge: HedgeFunction, kappas_scaled: tuple[float, float, float] | None = None
                        ) -> BlockTrace:
    """Run the (L1, L2, L3, M, N) processes over (x, v, w) moves in ``scale`` units.

    Moves are centred (m = 0). Updating continues past the stopping times so
    that checkers can demonstrate their scoping, and halts only when an upper
    denominator stops being positive.
    """
    if kappas_scaled is None:
        base = (1 - eps) * math.sqrt(2.0 * scale.C_lnln / scale.C) if not scale.normalized \
            else (1 - eps) * math.sqrt(2.0)
        kappas_scaled = (base, base * (1 + eps_star), base * (1 + eps_star) ** 2)
    k1, k2, k3 = kappas_scaled
    l1 = new_process("lower", k1, delta, scale)
    l2 = new_process("upper", k2, 0.0, scale)
    l3 = new_process("lower", k3, delta, scale)
    ctx = BlockContext(scale.C_ln, scale.C_lnln, delta, hedge, normalized=scale.normalized)
    flags = StoppingFlags()
    rounds: list[BlockRound] = []
    S = A = 0.0
    halted = None
    for x, v, w in moves:
        f = ForecasterMove(0.0, v, w)
        flags = stopping_update(flags, ctx, f, x)
        ctx = ctx.advance(f)
        try:
            l2 = l_upper_update(l2, x, v, w, hedge)
        except MartingaleError as exc:
            halted = str(exc)
            break
        l1 = l_lower_update(l1, x, v)
        l3 = l_lower_update(l3, x, v)
        S += x
        A += v
        M = combine_M(l2, l1, l3)
        rounds.append(BlockRound(ctx.round, S, A, l1.value, l2.value, l3.value, M,
                                 n_process(M, scale.lnC)))
    return BlockTrace(eps, delta, (k1, k2, k3), scale, rounds, flags, halted)


@dataclass(frozen=True)
class LemmaCheck:
    n: int
    check: str
    passed: bool
    slack: float  # log scale where the bound is multiplicative


@dataclass
class LemmaReport:
    lemma: str
    checks: list[LemmaCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def n_checked(self) -> int:
        return len(self.checks)

    def worst(self) -> LemmaCheck | None:
        return min(self.checks, key=lambda c: c.slack, default=None)

    def as_dict(self) -> dict:
        w = self.worst()
        return {
            "lemma": self.lemma,
            "passed": self.passed,
            "checked": self.n_checked,
            "failed": sum(not c.passed for c in self.checks),
            "worst": None if w is None else {"n": w.n, "check": w.check, "slack": w.slack},
        }


_TOL = 1e-9


def _log_pos(x: SignedLogValue) -> float:
    return x.logmag if x.sign > 0 else math.nan


def lemma5_bound_check(trace: BlockTrace) -> LemmaReport:
    """Upper process: ln L - kS + (1-d)k^2 A/2 <= 4d lnlnC before the stops,
    and ln L - kS + k^2 C/2 <= 4d lnlnC at n = tau2 < tau1, tau3."""
    d, L = trace.delta, trace.scale.C_lnln
    k = trace.kappas[1]
    t1, t2, t3 = trace.tau(1), trace.tau(2), trace.tau(3)
    cap = 4 * d * L
    checks = []
    for r in trace.rounds:
        if r.n <= t2 and r.n < t1 and r.n < t3:
            lv = _log_pos(r.L2)
            lhs = lv - k * r.S + 0.5 * (1 - d) * k * k * r.A
            slack = cap - lhs if not math.isnan(lhs) else -math.inf
            checks.append(LemmaCheck(r.n, "A_n bound", slack >= -_TOL * max(1.0, cap), slack))
        if r.n == t2 and t2 < t1 and t2 < t3:
            lhs = _log_pos(r.L2) - k * r.S + 0.5 * k * k * trace.scale.C
            slack = cap - lhs if not math.isnan(lhs) else -math.inf
            checks.append(LemmaCheck(r.n, "C/2 bound", slack >= -_TOL * max(1.0, cap), slack))
    return LemmaReport("upper process bound", checks)


def lemma6_bound_check(trace: BlockTrace) -> LemmaReport:
    """Lower processes: ln L - kS + (1+d)k^2 A/2 >= 0 before the stops and
    ln L - kS + k^2 C/2 >= -4d lnlnC at n = tau2 < tau1, tau3."""
    d, L = trace.delta, trace.scale.C_lnln
    t1, t2, t3 = trace.tau(1), trace.tau(2), trace.tau(3)
    floor = -4 * d * L
    checks = []
    for label, k, attr in (("k1", trace.kappas[0], "L1"), ("k3", trace.kappas[2], "L3")):
        for r in trace.rounds:
            lv = _log_pos(getattr(r, attr))
            if r.n <= t2 and r.n < t1 and r.n < t3:
                slack = lv - k * r.S + 0.5 * (1 + d) * k * k * r.A
                checks.append(LemmaCheck(r.n, f"A_n bound ({label})", slack >= -_TOL, slack))
            if r.n == t2 and t2 < t1 and t2 < t3:
                slack = lv - k * r.S + 0.5 * k * k * trace.scale.C - floor
                checks.append(LemmaCheck(r.n, f"C/2 bound ({label})",
                                         slack >= -_TOL * max(1.0, -floor), slack))
    return LemmaReport("lower process bound", checks)


def lemma7_payoff_check(trace: BlockTrace) -> LemmaReport:
    """N > 0 for n < tau1, n <= tau2, tau3; and N >= 1 + 1/ln C at n = tau2 < tau1, tau3
    when S <= (1-eps) sqrt(2 C lnlnC)."""
    t1, t2, t3 = trace.tau(1), trace.tau(2), trace.tau(3)
    sc = trace.scale
    s_cap = (1 - trace.eps) * math.sqrt(2.0 * sc.C * sc.C_lnln)
    checks = []
    for r in trace.rounds:
        if r.n < t1 and r.n <= t2 and r.n <= t3:
            slack = r.N.logmag if r.N.sign > 0 else -math.inf
            checks.append(LemmaCheck(r.n, "N positive", r.N.sign > 0, slack))
        if r.n == t2 and t2 < t1 and t2 < t3 and r.S <= s_cap:
            # N >= 1 + 1/ln C is the same as M <= 0
            slack = float(-r.M)
            checks.append(LemmaCheck(r.n, "payoff N >= 1 + 1/ln C", r.M.sign <= 0, slack))
    return LemmaReport("N process payoff", checks)
