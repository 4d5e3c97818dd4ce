"""Path diagnostics on recorded traces: LIL ratios, the summability
antecedent, and the small-price ratios behind the lower-bound argument."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import Checkpoint, Trace, geometric_checkpoints
from .hedge import HedgeFunction
from .numerics import E_E

__all__ = ["PathStats", "running_stats", "path_stats_from_checkpoints", "max_tail_ratio",
           "antecedent_check", "littleo_diagnostics", "AntecedentReport", "LittleOReport"]


@dataclass(frozen=True)
class PathStats:
    n: np.ndarray
    S: np.ndarray  # centred: sum of (x_i - m_i)
    A: np.ndarray
    b: np.ndarray  # nan where A <= e^e
    g: np.ndarray
    ratio: np.ndarray
    price_sum: np.ndarray  # sum over i <= n of w_i / h(b_i), A_i > e^e

    def max_ratio(self, tail_start: int = 1) -> float:
        sel = (self.n >= tail_start) & np.isfinite(self.ratio)
        return float(np.max(self.ratio[sel])) if sel.any() else math.nan

    def as_dict(self) -> dict:
        return {k: [None if not np.isfinite(x) else float(x) for x in v] for k, v in asdict(self).items()}


def _bg(A: np.ndarray):
    with np.errstate(invalid="ignore", divide="ignore"):
        ok = A > E_E
        L = np.where(ok, np.log(np.log(np.where(ok, A, math.e ** 2))), np.nan)
        b = np.where(ok, np.sqrt(A / L), np.nan)
        g = np.where(ok, np.sqrt(2.0 * A * L), np.nan)
    return b, g, L


def running_stats(trace: Trace, checkpoints=None, hedge: HedgeFunction | None = None) -> PathStats:
    """Statistics at the given (1-based) rounds; geometric 1.2^j by default.

    The price sum needs ``hedge``; without it that column is nan.
    """
    N = len(trace)
    if N == 0:
        empty = np.array([])
        return PathStats(empty.astype(int), empty, empty, empty, empty, empty, empty)
    cps = np.asarray(geometric_checkpoints(N) if checkpoints is None else sorted(checkpoints), dtype=int)
    if cps.size and (cps[0] < 1 or cps[-1] > N):
        raise ValueError(f"checkpoints must lie in [1, {N}]")
    d = trace.x - trace.m
    S = np.cumsum(d)
    A = np.cumsum(trace.v)
    b, g, L = _bg(A)
    if hedge is not None:
        terms = np.where(np.isfinite(b), trace.w / hedge.eval_array(np.nan_to_num(b, nan=1.0)), 0.0)
        price = np.cumsum(terms)
    else:
        price = np.full(N, np.nan)
    # the LIL identity g = sqrt(2) b lnln A holds by construction; check it anyway
    ok = np.isfinite(b)
    if ok.any() and not np.allclose(g[ok], math.sqrt(2.0) * b[ok] * L[ok], rtol=1e-12, atol=0.0):
        raise ArithmeticError("g_n != sqrt(2) b_n lnln A_n")
    i = cps - 1
    with np.errstate(invalid="ignore"):
        ratio = S[i] / g[i]
    return PathStats(cps, S[i], A[i], b[i], g[i], ratio, price[i])


def path_stats_from_checkpoints(rows: list[Checkpoint]) -> PathStats:
    """The same statistics, rebuilt from the engine's streaming checkpoints."""
    def col(name):
        return np.array([getattr(r, name) for r in rows], dtype=float)

    b, g = col("b"), col("g")
    b[b == 0] = np.nan
    g[g == 0] = np.nan
    return PathStats(np.array([r.n for r in rows], dtype=int), col("S"), col("A"), b, g,
                     col("ratio"), col("price_sum"))


def max_tail_ratio(stats: PathStats, tail_start: int) -> float:
    return stats.max_ratio(tail_start)


@dataclass(frozen=True)
class AntecedentReport:
    A_first: float
    A_last: float
    A_growth: float
    price_partial_sums: list[float]
    price_total: float
    tail_increment: float  # over the second half of the tail rounds
    plateau: bool
    inconclusive: bool

    def as_dict(self) -> dict:
        return asdict(self)


def antecedent_check(trace: Trace, hedge: HedgeFunction, min_tail: int = 100) -> AntecedentReport:
    """Growth of A_n and whether sum w_i / h(b_i) has levelled off.

    A plateau means the increment over the last half of the tail is below 5%
    of the total. Fewer than ``min_tail`` rounds with A_n > e^e is inconclusive.
    """
    if len(trace) == 0:
        raise ValueError("antecedent_check needs a nonempty trace")
    A = np.cumsum(trace.v)
    b, _, _ = _bg(A)
    tail = np.isfinite(b)
    terms = np.where(tail, trace.w / hedge.eval_array(np.nan_to_num(b, nan=1.0)), 0.0)
    partial = np.cumsum(terms)
    total = float(partial[-1])
    idx = np.nonzero(tail)[0]
    inconclusive = idx.size < min_tail
    if idx.size:
        mid = idx[idx.size // 2]
        tail_inc = total - float(partial[mid - 1] if mid > 0 else 0.0)
    else:
        tail_inc = 0.0
    plateau = (not inconclusive) and tail_inc < 0.05 * total if total > 0 else not inconclusive
    cps = geometric_checkpoints(len(trace), 2.0)
    return AntecedentReport(float(A[0]), float(A[-1]), float(A[-1] / A[0]) if A[0] > 0 else math.inf,
                            [float(partial[c - 1]) for c in cps], total, tail_inc, bool(plateau),
                            bool(inconclusive))


@dataclass(frozen=True)
class LittleOReport:
    tail_rounds: int
    sup_v_ratio: float  # v_n / b_n^2
    sup_w_ratio: float  # w_n / h(b_n)
    sup_wsum_ratio: float  # (sum_{i<=n} w_i) / h(b_n)
    slopes: dict  # least-squares slope of log ratio vs log n over the tail
    last: dict  # final values of the three ratios
    delta: float | None
    v_threshold_ok: bool | None  # v_n <= (delta^2/2) b_n^2 over the tail
    flags: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def littleo_diagnostics(trace: Trace, hedge: HedgeFunction, delta: float | None = None,
                        tail_start: int | None = None) -> LittleOReport:
    """Ratios that must vanish along the tail for the lower-bound blocks to run.

    The tail starts at the first round with A_n > e^e (or ``tail_start``
    if later). A ratio whose final value exceeds 1e-3 and whose log-log tail
    slope is above -0.05 (no visible decay) is flagged.
    """
    A = np.cumsum(trace.v)
    b, _, _ = _bg(A)
    n = np.arange(1, len(trace) + 1)
    sel = np.isfinite(b)
    if tail_start is not None:
        sel &= n >= tail_start
    if not sel.any():
        raise ValueError("no rounds with A_n > e^e in the requested tail")
    hb = hedge.eval_array(b[sel])
    ratios = {
        "v": trace.v[sel] / b[sel] ** 2,
        "w": trace.w[sel] / hb,
        "wsum": np.cumsum(trace.w)[sel] / hb,
    }
    slopes, last, flags = {}, {}, []
    ln = np.log(n[sel].astype(float))
    for k, r in ratios.items():
        pos = r > 0
        if pos.sum() >= 2 and np.ptp(ln[pos]) > 0:
            slopes[k] = float(np.polyfit(ln[pos], np.log(r[pos]), 1)[0])
        else:
            slopes[k] = 0.0 if not pos.any() else math.nan
        last[k] = float(r[-1])
        if last[k] > 1e-3 and not slopes[k] < -0.05:
            flags.append(k)
    v_ok = None
    if delta is not None:
        v_ok = bool(np.all(trace.v[sel] <= 0.5 * delta * delta * b[sel] ** 2))
    return LittleOReport(int(sel.sum()), float(ratios["v"].max()), float(ratios["w"].max()),
                         float(ratios["wsum"].max()), slopes, last, delta, v_ok, flags)
