"""Small numerical helpers shared across the package.

``SignedLogValue`` stores a real number as a sign and the natural log of its
magnitude, so capital processes can grow far past the double range.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import total_ordering
from typing import Callable

E_E = math.exp(math.e)  # ln ln a > 1 exactly when a > e^e
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def lnln(a: float) -> float:
    """ln ln a, defined only on the guarded range a > e^e."""
    if not a > E_E:
        raise ValueError(f"ln ln a is only evaluated for a > e^e, got {a!r}")
    return math.log(math.log(a))


def b_scale(A: float) -> float | None:
    """b = sqrt(A / ln ln A), or None while A <= e^e."""
    if not A > E_E:
        return None
    return math.sqrt(A / math.log(math.log(A)))


def lil_envelope(A: float) -> float | None:
    """g = sqrt(2 A ln ln A), or None while A <= e^e."""
    if not A > E_E:
        return None
    return math.sqrt(2.0 * A * math.log(math.log(A)))


def logsumexp(logs, weights=None) -> float:
    """log(sum_i w_i exp(l_i)) for nonnegative weights; -inf for an empty sum."""
    if weights is None:
        weights = [1.0] * len(logs)
    top = -math.inf
    for l, wt in zip(logs, weights):
        if wt > 0 and l > top:
            top = l
    if top == -math.inf:
        return -math.inf
    if top == math.inf:
        return math.inf
    total = 0.0
    for l, wt in zip(logs, weights):
        if wt > 0:
            total += wt * math.exp(l - top)
    return top + math.log(total)


@total_ordering
@dataclass(frozen=True, slots=True)
class SignedLogValue:
    """A real number as (sign, log|value|).

    ``sign`` is -1, 0 or +1 and ``sign == 0`` means exactly zero (``logmag`` is
    then -inf).
    """

    sign: int
    logmag: float

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or 1, got {self.sign!r}")
        if self.sign == 0 and self.logmag != -math.inf:
            object.__setattr__(self, "logmag", -math.inf)
        if self.sign != 0 and math.isnan(self.logmag):
            raise ValueError("logmag is NaN")
        if self.sign != 0 and self.logmag == -math.inf:
            object.__setattr__(self, "sign", 0)

    @classmethod
    def zero(cls) -> "SignedLogValue":
        return cls(0, -math.inf)

    @classmethod
    def one(cls) -> "SignedLogValue":
        return cls(1, 0.0)

    @classmethod
    def from_float(cls, x: float) -> "SignedLogValue":
        if isinstance(x, SignedLogValue):
            return x
        x = float(x)
        if math.isnan(x):
            raise ValueError("cannot represent NaN")
        if x == 0.0:
            return cls(0, -math.inf)
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    @classmethod
    def from_log(cls, logmag: float, sign: int = 1) -> "SignedLogValue":
        return cls(sign, logmag)

    def __float__(self) -> float:
        if self.sign == 0:
            return 0.0
        try:
            return self.sign * math.exp(self.logmag)
        except OverflowError:
            return self.sign * math.inf

    to_float = __float__

    def is_zero(self) -> bool:
        return self.sign == 0

    def __neg__(self) -> "SignedLogValue":
        return SignedLogValue(-self.sign, self.logmag)

    def __abs__(self) -> "SignedLogValue":
        return SignedLogValue(abs(self.sign), self.logmag)

    def __add__(self, other) -> "SignedLogValue":
        other = SignedLogValue.from_float(other)
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        big, small = (self, other) if self.logmag >= other.logmag else (other, self)
        if big.logmag == math.inf:
            if small.logmag == math.inf and small.sign != big.sign:
                raise ValueError("inf - inf in SignedLogValue")
            return big
        gap = small.logmag - big.logmag
        if big.sign == small.sign:
            return SignedLogValue(big.sign, big.logmag + math.log1p(math.exp(gap)))
        if gap == 0.0:
            return SignedLogValue.zero()
        return SignedLogValue(big.sign, big.logmag + math.log1p(-math.exp(gap)))

    __radd__ = __add__

    def __sub__(self, other) -> "SignedLogValue":
        return self + (-SignedLogValue.from_float(other))

    def __rsub__(self, other) -> "SignedLogValue":
        return SignedLogValue.from_float(other) + (-self)

    def __mul__(self, other) -> "SignedLogValue":
        other = SignedLogValue.from_float(other)
        if self.sign == 0 or other.sign == 0:
            return SignedLogValue.zero()
        return SignedLogValue(self.sign * other.sign, self.logmag + other.logmag)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "SignedLogValue":
        other = SignedLogValue.from_float(other)
        if other.sign == 0:
            raise ZeroDivisionError("division by a zero SignedLogValue")
        if self.sign == 0:
            return self
        return SignedLogValue(self.sign * other.sign, self.logmag - other.logmag)

    def scale_log(self, log_factor: float) -> "SignedLogValue":
        """Multiply by exp(log_factor)."""
        if self.sign == 0:
            return self
        return SignedLogValue(self.sign, self.logmag + log_factor)

    def _key(self):
        if self.sign > 0:
            return (1, self.logmag)
        if self.sign < 0:
            return (-1, -self.logmag)
        return (0, 0.0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SignedLogValue):
            try:
                other = SignedLogValue.from_float(other)
            except (TypeError, ValueError):
                return NotImplemented
        return self.sign == other.sign and (self.sign == 0 or self.logmag == other.logmag)

    def __lt__(self, other) -> bool:
        other = SignedLogValue.from_float(other)
        return self._key() < other._key()

    def __hash__(self):
        return hash((self.sign, self.logmag if self.sign else 0.0))

    def __repr__(self) -> str:
        return f"SignedLogValue(sign={self.sign}, logmag={self.logmag!r})"


def golden_section_min(f: Callable[[float], float], a: float, b: float,
                       xtol: float = 1e-12, max_iter: int = 500) -> tuple[float, float]:
    """Minimise a unimodal f on [a, b]; returns (x, f(x))."""
    if b < a:
        a, b = b, a
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= xtol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    candidates = [(fc, c), (fd, d)]
    fa, fb = f(a), f(b)
    candidates += [(fa, a), (fb, b)]
    fx, x = min(candidates)
    return x, fx


def golden_section_max(f, a, b, xtol=1e-12, max_iter=500):
    x, fx = golden_section_min(lambda t: -f(t), a, b, xtol, max_iter)
    return x, -fx
