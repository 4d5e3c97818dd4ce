"""Hedge functions h for the extra ticket, plus their validators.

Built-in hedges are the power family |x|^alpha (2 < alpha <= 3) and the
log-square hedge (1+x)^2 ln^2(1+x) - x^2. Every evaluator applies the even
extension itself, so callers may pass negative arguments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .numerics import golden_section_max

__all__ = [
    "HedgeFunction",
    "HedgeValidationReport",
    "power_hedge",
    "logsquare_hedge",
    "custom_hedge",
    "hedge_from_config",
    "validate_assumption1",
    "scaling_bounds",
    "growth_gap_max",
    "growth_gap_argmax",
    "summability_partial",
    "finite_difference_check",
    "SUMMABILITY_N0",
]

SUMMABILITY_N0 = 16  # first integer above e^e


@dataclass(frozen=True)
class HedgeFunction:
    """An even hedge function with analytic first and second derivatives.

    ``h``, ``dh`` and ``d2h`` act on nonnegative arguments; the public
    methods fold the sign away first.
    """

    name: str
    h: Callable[[float], float]
    dh: Callable[[float], float]
    d2h: Callable[[float], float]
    params: tuple = ()
    kind: str = "custom"
    vec: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)
    d2h_inv: Callable[[float], float] | None = field(default=None, compare=False)
    large_ratio: Callable[[float, float, float], float] | None = field(default=None, compare=False)
    tail_exponent: float | None = None  # h(x) ~ x^p up to log factors

    def eval(self, x: float) -> float:
        return self.h(abs(x))

    __call__ = eval

    def deriv1(self, x: float) -> float:
        return self.dh(abs(x))

    def deriv2(self, x: float) -> float:
        return self.d2h(abs(x))

    def eval_array(self, x) -> np.ndarray:
        x = np.abs(np.asarray(x, dtype=float))
        if self.vec is not None:
            return self.vec(x)
        return np.vectorize(self.h, otypes=[float])(x)

    @property
    def builtin(self) -> bool:
        return self.kind in ("power", "logsquare")

    @property
    def alpha(self) -> float:
        return self.params[0] if self.kind == "power" else 0.0

    def inverse_deriv2(self, c: float) -> float:
        """Smallest y >= 0 with h''(y) >= c (h'' is increasing)."""
        if c <= 0:
            return 0.0
        if self.d2h_inv is not None:
            return self.d2h_inv(c)
        lo, hi = 0.0, 1.0
        while self.d2h(hi) < c:
            lo, hi = hi, hi * 2.0
            if hi > 1e300:
                raise ValueError(f"h'' never reaches {c!r}")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.d2h(mid) < c:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * hi:
                break
        return hi

    def scale_ratio(self, a: float, b: float, log_sigma: float = 0.0) -> float:
        """h(sigma*a) / h(sigma*b) with sigma = exp(log_sigma).

        ``log_sigma`` may be +inf; hedges then fall back on their large-argument
        asymptotics (exact for the power family).
        """
        a, b = abs(a), abs(b)
        if b == 0:
            raise ZeroDivisionError("h(sigma*b) vanishes at b = 0")
        if a == 0:
            return 0.0
        if log_sigma < 300.0:
            sigma = math.exp(log_sigma)
            ha, hb = self.h(sigma * a), self.h(sigma * b)
            if math.isfinite(ha) and math.isfinite(hb) and hb > 0:
                return ha / hb
        if self.large_ratio is None:
            raise ValueError(f"hedge {self.name!r} has no large-argument ratio; "
                             f"cannot evaluate at log sigma = {log_sigma!r}")
        return self.large_ratio(a, b, log_sigma)


# ---------------------------------------------------------------------------
# built-in hedges

def power_hedge(alpha: float) -> HedgeFunction:
    """h(x) = |x|^alpha for 2 < alpha <= 3."""
    alpha = float(alpha)
    if not (2.0 < alpha <= 3.0):
        raise ValueError(f"power hedge needs 2 < alpha <= 3 (h'' must vanish at 0 and stay concave); got alpha={alpha}")
    a1, a2 = alpha * (alpha - 1.0), alpha - 2.0

    def h(x):
        return x ** alpha

    def dh(x):
        return alpha * x ** (alpha - 1.0)

    def d2h(x):
        return a1 * x ** a2

    def d2h_inv(c):
        return (c / a1) ** (1.0 / a2)

    def large_ratio(a, b, log_sigma):
        return (a / b) ** alpha

    return HedgeFunction(
        name=f"power({alpha:g})", h=h, dh=dh, d2h=d2h, params=(alpha,), kind="power",
        vec=lambda x: x ** alpha, d2h_inv=d2h_inv, large_ratio=large_ratio,
        tail_exponent=alpha,
    )


# Taylor coefficients of g(x) = (1+x) ln(1+x) - x = sum_{k>=2} (-1)^k x^k / (k(k-1))
_G_COEFFS = tuple((-1.0) ** k / (k * (k - 1)) for k in range(2, 26))
_G_SERIES_CUTOFF = 0.1


def _g_small(x: float) -> float:
    acc = 0.0
    for c in reversed(_G_COEFFS):
        acc = acc * x + c
    return acc * x * x


def _logsq_g(x: float) -> float:
    if x < _G_SERIES_CUTOFF:
        return _g_small(x)
    return (1.0 + x) * math.log1p(x) - x


def _logsq_h(x: float) -> float:
    g = _logsq_g(x)
    return g * (g + 2.0 * x)


def _logsq_dh(x: float) -> float:
    L = math.log1p(x)
    return 2.0 * (1.0 + x) * L * L + 2.0 * _logsq_g(x)


def _logsq_d2h(x: float) -> float:
    L = math.log1p(x)
    return 2.0 * L * L + 6.0 * L


def _logsq_d2h_inv(c: float) -> float:
    # 2L^2 + 6L = c, positive root written without cancellation
    L = 2.0 * c / (6.0 + math.sqrt(36.0 + 8.0 * c))
    return math.expm1(L)


def _logsq_vec(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    small = x < _G_SERIES_CUTOFF
    g = np.empty_like(x)
    xs = x[small]
    acc = np.zeros_like(xs)
    for c in reversed(_G_COEFFS):
        acc = acc * xs + c
    g[small] = acc * xs * xs
    xl = x[~small]
    g[~small] = (1.0 + xl) * np.log1p(xl) - xl
    return g * (g + 2.0 * x)


def _logsq_large_ratio(a: float, b: float, log_sigma: float) -> float:
    # h(y) = y^2 (ln^2 y - 1) (1 + O(ln^2 y / y)) for large y
    r = (a / b) ** 2
    if math.isinf(log_sigma):
        return r
    s = log_sigma
    num = (1.0 + math.log(a) / s) ** 2 - 1.0 / (s * s)
    den = (1.0 + math.log(b) / s) ** 2 - 1.0 / (s * s)
    return r * num / den


def logsquare_hedge() -> HedgeFunction:
    """h(x) = (1+|x|)^2 ln^2(1+|x|) - x^2."""
    return HedgeFunction(
        name="logsquare", h=_logsq_h, dh=_logsq_dh, d2h=_logsq_d2h, params=(),
        kind="logsquare", vec=_logsq_vec, d2h_inv=_logsq_d2h_inv,
        large_ratio=_logsq_large_ratio, tail_exponent=2.0,
    )


def custom_hedge(name: str, h, dh, d2h, params: Sequence[float] = ()) -> HedgeFunction:
    """Wrap user callables (acting on x >= 0) as a hedge; nothing is certified."""
    return HedgeFunction(name=name, h=h, dh=dh, d2h=d2h, params=tuple(params), kind="custom")


def hedge_from_config(kind: str, alpha: float | None = None) -> HedgeFunction:
    if kind == "power":
        if alpha is None:
            raise ValueError("hedge.alpha is required for the power hedge")
        return power_hedge(alpha)
    if kind == "logsquare":
        if alpha is not None:
            raise ValueError("hedge.alpha only applies to the power hedge")
        return logsquare_hedge()
    raise ValueError(f"unknown hedge kind {kind!r} (expected 'power' or 'logsquare')")


# ---------------------------------------------------------------------------
# validation

@dataclass
class HedgeValidationReport:
    hedge: str
    grid: tuple[float, float, int]  # (min, max, size)
    checks: dict[str, bool]
    worst: dict[str, float]
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> list[str]:
        return [k for k, ok in self.checks.items() if not ok]

    def as_dict(self) -> dict:
        return {
            "hedge": self.hedge,
            "grid": {"min": self.grid[0], "max": self.grid[1], "size": self.grid[2]},
            "passed": self.passed,
            "checks": dict(self.checks),
            "worst": dict(self.worst),
            "notes": list(self.notes),
        }


def _safe(fn, x):
    try:
        val = fn(x)
    except (OverflowError, ValueError, ZeroDivisionError):
        return math.nan
    return float(val)


def finite_difference_check(h: HedgeFunction, xs: Sequence[float], rtol: float = 1e-4):
    """Cross-check h' and h'' against central differences.

    Returns (ok, worst relative error). Points where the step would not be
    small relative to x are skipped, because a central difference there
    measures curvature rather than the derivative.
    """
    worst = 0.0
    for x in xs:
        step = 1e-5 * max(1.0, abs(x))
        if x <= 0 or step > 1e-2 * x:
            continue
        fd1 = (h.h(x + step) - h.h(x - step)) / (2.0 * step)
        fd2 = (h.dh(x + step) - h.dh(x - step)) / (2.0 * step)
        for fd, an in ((fd1, h.dh(x)), (fd2, h.d2h(x))):
            err = abs(fd - an) / max(abs(an), 1e-300)
            worst = max(worst, err)
    return worst <= rtol, worst


def validate_assumption1(h: HedgeFunction, grid: Sequence[float] | None = None,
                         horizon: float = 1e6) -> HedgeValidationReport:
    """Sample-based check of the structural assumptions on h.

    Covers the origin conditions, evenness, monotonicity and concavity of h'',
    the small-x limits h'(x)/x -> 0 and h(x)/x^2 -> 0, monotonicity of h'(x)/x,
    and an analytic cross-check of both derivatives.
    """
    if grid is None:
        grid = np.logspace(-6, 3, 400)
    g = np.asarray(grid, dtype=float)
    if g.size == 0:
        raise ValueError("grid must be nonempty")
    if np.any(g < 0) or np.any(np.diff(g) <= 0):
        raise ValueError("grid must be nonnegative and strictly increasing")

    checks: dict[str, bool] = {}
    worst: dict[str, float] = {}
    notes: list[str] = []

    vals = np.array([_safe(h.h, x) for x in g])
    d1 = np.array([_safe(h.dh, x) for x in g])
    d2 = np.array([_safe(h.d2h, x) for x in g])
    finite = bool(np.all(np.isfinite(vals)) and np.all(np.isfinite(d1)) and np.all(np.isfinite(d2)))
    checks["finite on grid"] = finite
    if not finite:
        notes.append("non-finite evaluation on the grid; remaining checks use finite points only")
        keep = np.isfinite(vals) & np.isfinite(d1) & np.isfinite(d2)
        g, vals, d1, d2 = g[keep], vals[keep], d1[keep], d2[keep]

    origin = [abs(_safe(h.h, 0.0)), abs(_safe(h.dh, 0.0)), abs(_safe(h.d2h, 0.0))]
    worst["origin"] = max(origin)
    checks["h(0)=0"] = origin[0] <= 1e-12
    checks["h'(0)=0"] = origin[1] <= 1e-12
    checks["h''(0)=0"] = origin[2] <= 1e-12

    even_err = max((abs(h.eval(-x) - h.eval(x)) for x in g), default=0.0)
    worst["evenness"] = even_err
    checks["even"] = even_err == 0.0

    if g.size >= 2:
        inc = np.diff(d2)
        worst["h'' increments"] = float(inc.min())
        checks["h'' strictly increasing"] = bool(np.all(inc > 0))
    else:
        checks["h'' strictly increasing"] = True

    # concavity of h'' via midpoints of consecutive grid pairs
    if g.size >= 2:
        mids = 0.5 * (g[:-1] + g[1:])
        dm = np.array([_safe(h.d2h, x) for x in mids])
        gap = dm - 0.5 * (d2[:-1] + d2[1:])
        worst["h'' concavity"] = float(np.nanmin(gap))
        checks["h'' concave"] = bool(np.nanmin(gap) >= -1e-12 * max(1.0, float(np.max(np.abs(d2)))))
        if h.kind == "power" and h.alpha == 3.0:
            notes.append("alpha = 3 makes h'' linear: concave only in the weak sense, accepted")
    else:
        checks["h'' concave"] = True

    if h.builtin:
        notes.append("h'' unbounded: certified analytically for the built-in family")
        checks["h'' unbounded"] = True
    else:
        top = _safe(h.d2h, horizon)
        ok = math.isfinite(top) and (g.size == 0 or top > d2[-1])
        checks["h'' unbounded"] = ok
        notes.append(f"h'' unbounded up to {horizon:g} (sampled, not certified)")

    pos = g[g > 0]
    if pos.size >= 2:
        r1 = np.array([_safe(h.dh, x) / x for x in pos])
        checks["h'(x)/x strictly increasing"] = bool(np.all(np.diff(r1) > 0))
        worst["h'(x)/x increments"] = float(np.min(np.diff(r1)))
    near = pos[pos <= 1e-3]
    if near.size:
        ref = float(pos[pos <= 1.0].max()) if np.any(pos <= 1.0) else float(pos[0])
        x0 = float(near[0])
        lim1 = (_safe(h.dh, x0) / x0) / max(_safe(h.dh, ref) / ref, 1e-300)
        lim2 = (_safe(h.h, x0) / x0 ** 2) / max(_safe(h.h, ref) / ref ** 2, 1e-300)
        worst["h'(x)/x near 0 (relative)"] = lim1
        worst["h(x)/x^2 near 0 (relative)"] = lim2
        checks["h'(x)/x -> 0"] = lim1 <= 1e-2
        checks["h(x)/x^2 -> 0"] = lim2 <= 1e-2
    else:
        notes.append("grid does not reach 1e-3; small-x limits not sampled")

    ok, err = finite_difference_check(h, g)
    checks["derivatives match finite differences"] = ok
    worst["derivative relative error"] = err

    return HedgeValidationReport(
        hedge=h.name,
        grid=(float(g[0]) if g.size else math.nan, float(g[-1]) if g.size else math.nan, int(g.size)),
        checks=checks, worst=worst, notes=notes,
    )


def scaling_bounds(h: HedgeFunction, c: float, x: float) -> tuple[float, float, float]:
    """(lower, h(cx), upper) from the c^2 / c^3 sandwich."""
    if c < 0 or x < 0:
        raise ValueError("scaling_bounds needs c >= 0 and x >= 0")
    hx = h.h(x)
    mid = h.h(c * x)
    if c <= 1.0:
        return c ** 3 * hx, mid, c ** 2 * hx
    return c ** 2 * hx, mid, c ** 3 * hx


def growth_gap_argmax(h: HedgeFunction, b: float, y_max: float = 4.0, n_grid: int = 4001):
    """Maximise y -> 1 + y + y^2/2 - h(by)/h(b) over y >= 0; returns (y, value).

    Past y = 1 + sqrt(3) the objective is below 0 whenever h(by) >= y^2 h(b),
    so a grid on [0, 4] followed by golden-section refinement suffices.
    """
    if not b > 0:
        raise ValueError("b must be positive")
    hb = h.h(b)
    if not hb > 0:
        raise ValueError("h(b) must be positive")

    def obj(y):
        return 1.0 + y + 0.5 * y * y - h.h(b * y) / hb

    ys = np.linspace(0.0, y_max, n_grid)
    vals = 1.0 + ys + 0.5 * ys * ys - h.eval_array(b * ys) / hb
    i = int(np.argmax(vals))
    if i == n_grid - 1:
        return float(ys[i]), float(vals[i])  # no interior bracket: report the grid value
    lo = ys[max(i - 1, 0)]
    hi = ys[i + 1]
    y, val = golden_section_max(obj, float(lo), float(hi), xtol=1e-14)
    if val < vals[i]:
        return float(ys[i]), float(vals[i])
    return float(y), float(val)


def growth_gap_max(h: HedgeFunction, b: float) -> float:
    return growth_gap_argmax(h, b)[1]


def summability_partial(h: HedgeFunction, N: int, chunk: int = 1 << 18) -> float:
    """sum_{n=16}^{N} 1 / h(sqrt(n / ln ln n))."""
    n0 = SUMMABILITY_N0
    if N < n0:
        raise ValueError(f"N must be at least {n0}")
    total = 0.0
    start = n0
    while start <= N:
        stop = min(N, start + chunk - 1)
        n = np.arange(start, stop + 1, dtype=float)
        vals = h.eval_array(np.sqrt(n / np.log(np.log(n))))
        if np.any(vals <= 0):
            bad = n[np.argmax(vals <= 0)]
            raise ValueError(f"hedge vanishes at a positive argument (n={int(bad)})")
        total += float(np.sum(1.0 / vals))
        start = stop + 1
    return total
