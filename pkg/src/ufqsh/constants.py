"""Proof constants for the lower-bound block strategy.

C is far too large to hold as a float at proof grade (ln ln C is in the tens
of thousands), so everything here is expressed through ln ln C, and ln C or D
only appear when they are representable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "ConstantBundle",
    "KappaTriple",
    "Predicate",
    "ConstraintReport",
    "select_constants",
    "demo_constants",
    "verify_bundle",
    "kappas",
    "c_eps",
    "delta_upper_bounds",
    "lnlnC_lower_bounds",
    "LEMMA_SAMPLES",
]

SQRT2 = math.sqrt(2.0)
LN3 = math.log(3.0)
LN9 = math.log(9.0)
LEMMA_SAMPLES = 10_000


def c_eps(eps: float, eps_star: float, delta: float) -> float:
    """(1+d)(1+e*)^2(1+2e*+d)(1-e)^2 + ((5+4e*)/e*) d."""
    return ((1 + delta) * (1 + eps_star) ** 2 * (1 + 2 * eps_star + delta) * (1 - eps) ** 2
            + (5 + 4 * eps_star) / eps_star * delta)


# ---------------------------------------------------------------------------
# the three elementary inequalities, as gap functions of t (>= 0 when they hold)

def _gap_log1p(t, delta):
    return np.log1p(t) - (1 - delta) * t


def _gap_log1m(t, delta):
    return np.log1p(-t) + (1 + 2 * SQRT2 * delta) * t


def _exp_tail3(t):
    """e^t - 1 - t - t^2/2, summed as a series near 0 to avoid cancellation."""
    t = np.asarray(t, dtype=float)
    out = np.exp(t) - 1 - t - t * t / 2
    small = np.abs(t) < 1.0
    ts = t[small]
    term = ts ** 3 / 6
    acc = np.zeros_like(ts)
    for k in range(4, 40):
        acc += term
        term = term * ts / k
    out[small] = acc
    return out


def _gap_exp(t, delta):
    return delta * np.asarray(t) ** 2 / 2 - _exp_tail3(t)


def _lemma_slacks(delta: float, n: int = LEMMA_SAMPLES) -> dict[str, float]:
    """Minimum normalised gap over n samples of each lemma's range.

    Gaps vanish at t = 0, so they are divided by |t| (or t^2 for the
    exponential one, whose gap is second order) to expose a strict margin.
    """
    out = {}
    t = np.linspace(0.0, delta, n + 1)[1:]
    out["ln(1+t) >= (1-delta)t on [0, delta]"] = float(np.min(_gap_log1p(t, delta) / t))
    a = 2 * SQRT2 * delta
    if a >= 1:
        out["ln(1-t) >= -(1+2sqrt2 delta)t on [0, 2sqrt2 delta]"] = -math.inf
    else:
        t = np.linspace(0.0, a, n + 1)[1:]
        out["ln(1-t) >= -(1+2sqrt2 delta)t on [0, 2sqrt2 delta]"] = float(np.min(_gap_log1m(t, delta) / t))
    r = SQRT2 * delta
    t = np.linspace(-r, r, n + 1)
    t = t[t != 0.0]
    out["1+t+(1+delta)t^2/2 >= e^t on [-sqrt2 delta, sqrt2 delta]"] = float(np.min(_gap_exp(t, delta) / (t * t)))
    return out


def delta_upper_bounds(eps: float, eps_star: float) -> dict[str, float]:
    """Strict upper bounds on delta implied by each requirement."""
    bounds = {
        "2sqrt2 delta < 1": 1 / (2 * SQRT2),
        "sqrt2 delta < 1": 1 / SQRT2,
        "2sqrt2(1+2sqrt2 delta) < 3": (3 - 2 * SQRT2) / 8,
        "8 delta < (eps*)^2(1-eps)^2/2": eps_star ** 2 * (1 - eps) ** 2 / 16,
        "-(eps*)^2 + delta((1+eps*)^2+1) < 0": eps_star ** 2 / ((1 + eps_star) ** 2 + 1),
    }
    c0 = c_eps(eps, eps_star, 0.0)
    if c0 >= 1:
        raise ValueError(f"c_eps >= 1 even at delta = 0 (eps={eps}, eps*={eps_star}); infeasible")
    bounds["c_eps < 1"] = brentq(lambda d: c_eps(eps, eps_star, d) - 1.0, 0.0, 1.0, xtol=1e-300, rtol=1e-15)
    # the log and exp inequalities only bind for large delta; solve their
    # endpoint conditions numerically (both gaps are checked at the right end)
    a_star = brentq(lambda a: math.log1p(-a) + (1 + a) * a, 0.3, 0.99, rtol=1e-15)
    bounds["ln(1-t) lemma endpoint"] = a_star / (2 * SQRT2)
    bounds["exp lemma endpoint"] = brentq(
        lambda d: float(_gap_exp(np.array([SQRT2 * d]), d)[0]), 0.5, 20.0, rtol=1e-15)
    return bounds


def lnlnC_lower_bounds(eps: float, eps_star: float, delta: float) -> dict[str, float]:
    """Lower bounds on ln ln C (strict unless noted) from each requirement."""
    c = c_eps(eps, eps_star, delta)
    return {
        "3 lnlnC > delta(1+delta)": delta * (1 + delta) / 3,
        "lnlnC >= delta": delta,
        "(eps*)^2(1-eps)^2 lnlnC / 2 > ln 3": 2 * LN3 / (eps_star ** 2 * (1 - eps) ** 2),
        "(ln C)^(c_eps-1) < 1/3": LN3 / (1 - c),
        "(ln C)^(-delta) < 1/9": LN9 / delta,
        "lnlnC > 1": 1.0,
    }


@dataclass(frozen=True)
class ConstantBundle:
    eps: float
    eps_star: float
    delta: float
    lnlnC_min: float
    D_lnln: float  # ln ln D; ln D itself overflows at proof grade
    c_eps: float
    lnlnC_binding: float = math.nan
    demo: bool = False
    report: "ConstraintReport | None" = field(default=None, compare=False, repr=False)

    @property
    def D_log(self) -> float:
        """ln D, or +inf when it is not representable."""
        return math.exp(self.D_lnln) if self.D_lnln < 709.0 else math.inf

    @property
    def simulatable(self) -> bool:
        return math.isfinite(self.D_log)

    def block_lnC(self, k: int) -> float:
        return k * self.D_log

    def as_dict(self) -> dict:
        out = {
            "eps": self.eps, "eps_star": self.eps_star, "delta": self.delta,
            "lnlnC_min": self.lnlnC_min, "lnlnC_binding": self.lnlnC_binding,
            "D_lnln": self.D_lnln, "D_log": self.D_log, "c_eps": self.c_eps, "demo": self.demo,
        }
        if self.report is not None:
            out["report"] = self.report.as_dict()
        return out


@dataclass(frozen=True)
class Predicate:
    name: str
    group: str
    slack: float  # > 0 (>= 0 for non-strict ones) when the predicate holds
    strict: bool = True

    @property
    def passed(self) -> bool:
        return self.slack > 0 if self.strict else self.slack >= 0


@dataclass(frozen=True)
class ConstraintReport:
    predicates: tuple[Predicate, ...]

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.predicates)

    def failures(self) -> list[str]:
        return [p.name for p in self.predicates if not p.passed]

    def __getitem__(self, name: str) -> Predicate:
        for p in self.predicates:
            if p.name == name:
                return p
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "predicates": [
                {"name": p.name, "group": p.group, "passed": p.passed, "slack": p.slack}
                for p in self.predicates
            ],
        }

    def format(self) -> str:
        width = max(len(p.name) for p in self.predicates)
        lines = [f"{'PASS' if p.passed else 'FAIL'}  {p.name:<{width}}  slack={p.slack:.6g}"
                 for p in self.predicates]
        return "\n".join(lines)


def verify_bundle(b: ConstantBundle) -> ConstraintReport:
    for name in ("eps", "eps_star", "delta", "lnlnC_min", "c_eps"):
        if not math.isfinite(getattr(b, name)):
            raise ValueError(f"bundle field {name} is not finite")
    e, es, d, L = b.eps, b.eps_star, b.delta, b.lnlnC_min
    c = c_eps(e, es, d)
    q = es ** 2 * (1 - e) ** 2
    preds = [
        Predicate("eps < 1/8", "eps", 0.125 - e),
        Predicate("2sqrt2 delta < 1", "delta", 1 - 2 * SQRT2 * d),
        Predicate("sqrt2 delta < 1", "delta", 1 - SQRT2 * d),
        Predicate("2sqrt2(1+2sqrt2 delta) < 3", "delta", 3 - 2 * SQRT2 * (1 + 2 * SQRT2 * d)),
        Predicate("8 delta < (eps*)^2(1-eps)^2/2", "delta", q / 2 - 8 * d),
        Predicate("-(eps*)^2 + delta((1+eps*)^2+1) < 0", "delta", es ** 2 - d * ((1 + es) ** 2 + 1)),
        Predicate("c_eps < 1", "delta", 1 - c),
        Predicate("3 lnlnC > delta(1+delta)", "C", 3 * L - d * (1 + d)),
        Predicate("lnlnC >= delta", "C", L - d, strict=False),
        Predicate("(eps*)^2(1-eps)^2 lnlnC / 2 > ln 3", "C", q * L / 2 - LN3),
        Predicate("(ln C)^(c_eps-1) < 1/3", "C", (1 - c) * L - LN3),
        Predicate("(ln C)^(-delta) < 1/9", "C", d * L - LN9),
        Predicate("lnlnC > 1", "C", L - 1),
        Predicate("kappa3 within sqrt(2 lnlnC / C): (1+eps*)^2(1-eps) <= 1", "kappa",
                  1 - (1 + es) ** 2 * (1 - e), strict=False),
    ]
    for name, slack in _lemma_slacks(d).items():
        preds.append(Predicate(name, "lemma", slack))
    return ConstraintReport(tuple(preds))


def select_constants(eps: float) -> ConstantBundle:
    if not (0 < eps < 0.125):
        raise ValueError(f"eps must lie in (0, 1/8), got {eps!r}")
    eps_star = eps / 2
    delta = 0.5 * min(delta_upper_bounds(eps, eps_star).values())
    binding = max(lnlnC_lower_bounds(eps, eps_star, delta).values())
    lnlnC_min = 1.1 * binding
    D_lnln = max(lnlnC_min, math.log(-4.0 * math.log(eps)))
    b = ConstantBundle(eps=eps, eps_star=eps_star, delta=delta, lnlnC_min=lnlnC_min,
                       D_lnln=D_lnln, c_eps=c_eps(eps, eps_star, delta),
                       lnlnC_binding=binding, demo=False)
    report = verify_bundle(b)
    if not report.passed:
        raise ArithmeticError("selected constants fail verification: " + ", ".join(report.failures()))
    return ConstantBundle(**{**b.__dict__, "report": report})


def demo_constants(eps: float, delta: float, lnlnC: float,
                   eps_star: float | None = None) -> ConstantBundle:
    """Simulation-scale constants; proof predicates are reported, not enforced."""
    if not (0 < eps < 1):
        raise ValueError(f"eps must lie in (0, 1), got {eps!r}")
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not lnlnC > 0:
        raise ValueError("lnlnC must be positive")
    if eps_star is None:
        eps_star = eps / 2
    D_lnln = max(lnlnC, math.log(-4.0 * math.log(eps)))
    b = ConstantBundle(eps=eps, eps_star=eps_star, delta=delta, lnlnC_min=lnlnC,
                       D_lnln=D_lnln, c_eps=c_eps(eps, eps_star, delta),
                       lnlnC_binding=lnlnC, demo=True)
    return ConstantBundle(**{**b.__dict__, "report": verify_bundle(b)})


@dataclass(frozen=True)
class KappaTriple:
    k1: float
    k2: float
    k3: float
    log_k1: float
    log_k2: float
    log_k3: float
    k3_excess: float  # kappa3 / sqrt(2 lnlnC / C) = (1+eps*)^2 (1-eps)

    @property
    def k3_admissible(self) -> bool:
        return self.k3_excess <= 1.0


def kappas(eps: float, eps_star: float, C_lnln: float, C_ln: float) -> KappaTriple:
    if not (math.isfinite(C_ln) and math.isfinite(C_lnln)):
        raise ValueError("C must be finite (pass ln C and ln ln C as finite numbers)")
    if not C_lnln > 1:
        raise ValueError("kappas need ln ln C > 1")
    if abs(math.log(C_ln) - C_lnln) > 1e-9 * max(1.0, C_lnln):
        raise ValueError(f"inconsistent pair: ln(ln C) = {math.log(C_ln)!r} but ln ln C = {C_lnln!r}")
    base = 0.5 * (math.log(2.0) + math.log(C_lnln) - C_ln)
    step = math.log1p(eps_star)
    logs = [math.log1p(-eps) + base + i * step for i in range(3)]
    ks = [math.exp(l) for l in logs]
    return KappaTriple(ks[0], ks[1], ks[2], logs[0], logs[1], logs[2],
                       (1 + eps_star) ** 2 * (1 - eps))
