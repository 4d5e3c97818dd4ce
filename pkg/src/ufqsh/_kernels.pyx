# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled account banks and best response (built-in hedges only).

Mirrors ``_kernels_py`` method for method; see that module for the meaning
of each bank. Hedges are evaluated in C, so only the power and log-square
families are accepted here.
"""
import numpy as np
from libc.math cimport log, log1p, exp, sqrt, pow, fabs, floor, expm1, INFINITY, isfinite

BACKEND = "compiled"
UNBOUNDED_BELOW = "UNBOUNDED_BELOW"
MINIMUM = "MINIMUM"

DEF KIND_POWER = 1
DEF KIND_LOGSQ = 2

cdef double NEG_INF = -INFINITY
cdef double[24] G_COEFFS
cdef int _i
for _i in range(24):
    G_COEFFS[_i] = (-1.0) ** (_i + 2) / ((_i + 2) * (_i + 1))


cdef inline double _g_logsq(double x) nogil:
    cdef double acc = 0.0
    cdef int i
    if x < 0.1:
        for i in range(23, -1, -1):
            acc = acc * x + G_COEFFS[i]
        return acc * x * x
    return (1.0 + x) * log1p(x) - x


cdef inline double h_eval(int kind, double alpha, double x) nogil:
    cdef double g
    x = fabs(x)
    if kind == KIND_POWER:
        return pow(x, alpha)
    g = _g_logsq(x)
    return g * (g + 2.0 * x)


cdef inline double dh_eval(int kind, double alpha, double x) nogil:
    cdef double L
    if kind == KIND_POWER:
        return alpha * pow(x, alpha - 1.0)
    L = log1p(x)
    return 2.0 * (1.0 + x) * L * L + 2.0 * _g_logsq(x)


cdef inline double d2h_eval(int kind, double alpha, double x) nogil:
    cdef double L
    if kind == KIND_POWER:
        return alpha * (alpha - 1.0) * pow(x, alpha - 2.0)
    L = log1p(x)
    return 2.0 * L * L + 6.0 * L


cdef inline double d2h_inv(int kind, double alpha, double c) nogil:
    if c <= 0.0:
        return 0.0
    if kind == KIND_POWER:
        return pow(c / (alpha * (alpha - 1.0)), 1.0 / (alpha - 2.0))
    return expm1(2.0 * c / (6.0 + sqrt(36.0 + 8.0 * c)))


cdef tuple _hedge_code(hedge):
    if hedge.kind == "power":
        return KIND_POWER, float(hedge.params[0])
    if hedge.kind == "logsquare":
        return KIND_LOGSQ, 0.0
    raise TypeError(f"compiled kernels only support built-in hedges, not {hedge.name!r}")


def hedge_eval(hedge, double x):
    """h(x) through the compiled evaluator (parity testing)."""
    kind, alpha = _hedge_code(hedge)
    return h_eval(kind, alpha, x)


cdef class ExpBank:
    cdef public int n
    cdef double sign
    cdef double[::1] kappa, level, C, log_weight, log_cap, den
    cdef int[::1] active, staked

    def __init__(self, kappa, level, C, log_weight, sign=1):
        n = len(kappa)
        if not (len(level) == len(C) == len(log_weight) == n):
            raise ValueError("ExpBank arrays must have equal length")
        self.n = n
        self.sign = 1.0 if sign >= 0 else -1.0
        self.kappa = np.asarray(kappa, dtype=np.float64).copy()
        self.level = np.asarray(level, dtype=np.float64).copy()
        self.C = np.asarray(C, dtype=np.float64).copy()
        self.log_weight = np.asarray(log_weight, dtype=np.float64).copy()
        self.log_cap = np.zeros(n)
        self.den = np.ones(n)
        self.active = np.ones(n, dtype=np.intc)
        self.staked = np.zeros(n, dtype=np.intc)

    def stakes(self, double v, double A_after):
        cdef int a
        cdef double ref = NEG_INF, l, k, c, M = 0.0, V = 0.0
        for a in range(self.n):
            self.staked[a] = 0
            if not self.active[a]:
                continue
            if A_after >= self.C[a]:
                self.active[a] = 0
                continue
            self.staked[a] = 1
            k = self.kappa[a]
            self.den[a] = 1.0 + k * k * v
            l = self.log_weight[a] + self.log_cap[a]
            if l > ref:
                ref = l
        if ref == NEG_INF:
            return (NEG_INF, 0.0, 0.0, 0.0)
        for a in range(self.n):
            if self.staked[a]:
                k = self.kappa[a]
                c = exp(self.log_weight[a] + self.log_cap[a] - ref) / self.den[a]
                M += c * self.sign * k
                V += c * k * k
        return (ref, M, V, 0.0)

    def settle(self, double d, double S_after, double A_after, double g_after):
        cdef int a
        cdef double k, t, s = self.sign
        for a in range(self.n):
            if not self.staked[a]:
                continue
            k = self.kappa[a]
            t = s * k * d
            self.log_cap[a] += log1p(t + k * k * d * d) - log(self.den[a])
            if g_after > 0 and A_after >= 0.5 * self.C[a] and s * S_after >= (1.0 + self.level[a]) * g_after:
                self.active[a] = 0

    def total_log(self):
        cdef int a
        cdef double top = NEG_INF, l, acc = 0.0
        for a in range(self.n):
            l = self.log_weight[a] + self.log_cap[a]
            if l > top:
                top = l
        if top == NEG_INF:
            return top
        for a in range(self.n):
            acc += exp(self.log_weight[a] + self.log_cap[a] - top)
        return top + log(acc)

    def log_capitals(self):
        return list(np.asarray(self.log_cap))

    def n_active(self):
        return int(np.asarray(self.active).sum())


cdef class TruncBank:
    cdef public int n
    cdef int kind
    cdef double alpha
    cdef double[::1] eps, D, log_weight, cap, Wa

    def __init__(self, eps, D, log_weight, hedge):
        n = len(eps)
        if not (len(D) == len(log_weight) == n):
            raise ValueError("TruncBank arrays must have equal length")
        self.kind, self.alpha = _hedge_code(hedge)
        self.n = n
        self.eps = np.asarray(eps, dtype=np.float64).copy()
        self.D = np.asarray(D, dtype=np.float64).copy()
        self.log_weight = np.asarray(log_weight, dtype=np.float64).copy()
        self.cap = np.ones(n)
        self.Wa = np.zeros(n)

    def stakes(self, double w, double b_after):
        cdef int a
        cdef double ref = NEG_INF, Wa, W = 0.0
        for a in range(self.n):
            self.Wa[a] = 0.0
        if not b_after > 0:
            return (NEG_INF, 0.0, 0.0, 0.0)
        for a in range(self.n):
            Wa = 1.0 / (self.D[a] * h_eval(self.kind, self.alpha, self.eps[a] * b_after))
            if self.cap[a] - Wa * w < 0.0 or not self.cap[a] > 0.0:
                continue
            self.Wa[a] = Wa
            if self.log_weight[a] > ref:
                ref = self.log_weight[a]
        if ref == NEG_INF:
            return (NEG_INF, 0.0, 0.0, 0.0)
        for a in range(self.n):
            if self.Wa[a] > 0.0:
                W += exp(self.log_weight[a] - ref) * self.Wa[a]
        return (ref, 0.0, 0.0, W)

    def settle(self, double hd, double w):
        cdef int a
        cdef double c
        for a in range(self.n):
            if self.Wa[a] > 0.0:
                c = self.cap[a] + self.Wa[a] * (hd - w)
                self.cap[a] = c if c > 0.0 else 0.0

    def total_log(self):
        cdef int a
        cdef double top = NEG_INF, acc = 0.0
        for a in range(self.n):
            if self.cap[a] > 0.0 and self.log_weight[a] > top:
                top = self.log_weight[a]
        if top == NEG_INF:
            return top
        for a in range(self.n):
            if self.cap[a] > 0.0:
                acc += exp(self.log_weight[a] - top) * self.cap[a]
        return top + log(acc)

    def capitals(self):
        return list(np.asarray(self.cap))

    def staked_W(self):
        return list(np.asarray(self.Wa))


cdef class BlockBank:
    cdef public int n
    cdef public int round
    cdef int kind
    cdef double alpha
    cdef double[::1] eps, eps_star, delta, D_log, log_weight
    cdef double[::1] C_ln, L, sigma, sgn2, Sloc, Aloc, Wloc, log_kbs, N
    cdef double[:, ::1] kap, hk, thr, logL, den, unit
    cdef int[::1] dormant, k, frozen, mode, events, start_round
    cdef list blocks

    EV_PRICE = 1
    EV_VARIANCE = 2
    EV_MOVE = 4

    def __init__(self, eps, eps_star, delta, D_log, log_weight, hedge):
        n = len(eps)
        if not (len(eps_star) == len(delta) == len(D_log) == len(log_weight) == n):
            raise ValueError("BlockBank arrays must have equal length")
        self.kind, self.alpha = _hedge_code(hedge)
        self.n = n
        self.round = 0
        self.eps = np.asarray(eps, dtype=np.float64).copy()
        self.eps_star = np.asarray(eps_star, dtype=np.float64).copy()
        self.delta = np.asarray(delta, dtype=np.float64).copy()
        self.D_log = np.asarray(D_log, dtype=np.float64).copy()
        self.log_weight = np.asarray(log_weight, dtype=np.float64).copy()
        self.dormant = np.array([0 if np.isfinite(x) else 1 for x in self.D_log], dtype=np.intc)
        self.k = np.ones(n, dtype=np.intc)
        self.C_ln = np.zeros(n)
        self.L = np.zeros(n)
        self.sigma = np.zeros(n)
        self.kap = np.zeros((n, 3))
        self.hk = np.zeros((n, 3))
        self.thr = np.zeros((n, 4))
        self.logL = np.zeros((n, 3))
        self.sgn2 = np.ones(n)
        self.Sloc = np.zeros(n)
        self.Aloc = np.zeros(n)
        self.Wloc = np.zeros(n)
        self.log_kbs = np.zeros(n)
        self.N = np.ones(n)
        self.frozen = np.zeros(n, dtype=np.intc)
        self.mode = np.zeros(n, dtype=np.intc)
        self.den = np.ones((n, 3))
        self.unit = np.zeros((n, 3))
        self.events = np.zeros(n, dtype=np.intc)
        self.start_round = np.ones(n, dtype=np.intc)
        self.blocks = [[] for _ in range(n)]
        for a in range(n):
            if not self.dormant[a]:
                self._open_block(a, 1)

    cdef void _thresholds(self, int a, int k, double* out) noexcept:
        cdef double C_ln = k * self.D_log[a]
        cdef double L = log(C_ln)
        cdef double sigma = exp(0.5 * (C_ln - log(L)))
        cdef double d = self.delta[a]
        cdef double hs = h_eval(self.kind, self.alpha, sigma)
        out[0] = C_ln
        out[1] = L
        out[2] = sigma
        out[3] = d * d * sigma * sigma
        out[4] = d * hs
        out[5] = d * hs * L
        out[6] = d * sigma

    cdef void _open_block(self, int a, int k) noexcept:
        cdef double t[7]
        cdef double base, g
        cdef int i
        self._thresholds(a, k, t)
        self.k[a] = k
        self.C_ln[a] = t[0]
        self.L[a] = t[1]
        self.sigma[a] = t[2]
        for i in range(4):
            self.thr[a, i] = t[3 + i]
        base = (1.0 - self.eps[a]) * sqrt(2.0) / t[2]
        g = 1.0 + self.eps_star[a]
        self.kap[a, 0] = base
        self.kap[a, 1] = base * g
        self.kap[a, 2] = base * g * g
        for i in range(3):
            if self.kap[a, i] > 0.0:
                self.hk[a, i] = h_eval(self.kind, self.alpha, 1.0 / self.kap[a, i])
            else:
                self.hk[a, i] = INFINITY
            self.logL[a, i] = 0.0
        self.sgn2[a] = 1.0
        self.Sloc[a] = 0.0
        self.Aloc[a] = 0.0
        self.Wloc[a] = 0.0
        self.N[a] = 1.0
        self.frozen[a] = 0
        self.start_round[a] = self.round + 1

    cdef bint _price_ok(self, int a, int k, double v, double w) noexcept:
        cdef double t[7]
        self._thresholds(a, k, t)
        return v <= t[3] and w <= t[4] and w <= t[5]

    def stakes(self, double v, double w, double A_after):
        cdef int a, k
        cdef double ref = NEG_INF, dl, L1, L2, L3, fmin, M_max, c1, c2, c3
        cdef double Mc, Vc, Wc, scale, l, c, M = 0.0, V = 0.0, W = 0.0
        self.round += 1
        for a in range(self.n):
            self.mode[a] = 0
            self.events[a] = 0
            if self.dormant[a]:
                continue
            if v > self.thr[a, 0] or w > self.thr[a, 1] or self.Wloc[a] + w > self.thr[a, 2]:
                self.events[a] = 1
                self.mode[a] = 2
                k = self.k[a] + 1
                while not self._price_ok(a, k, v, w):
                    k += 1
                self.log_kbs[a] += log(self.N[a])
                self._open_block(a, k)
                continue
            if self.frozen[a]:
                continue
            dl = self.delta[a]
            self.den[a, 0] = 1.0 + 0.5 * (1.0 + dl) * self.kap[a, 0] * self.kap[a, 0] * v
            self.den[a, 1] = 1.0 + 0.5 * self.kap[a, 1] * self.kap[a, 1] * v - w / self.hk[a, 1]
            self.den[a, 2] = 1.0 + 0.5 * (1.0 + dl) * self.kap[a, 2] * self.kap[a, 2] * v
            # a negative upper process would flip the h-ticket to W < 0
            if not self.den[a, 1] > 0.0 or self.sgn2[a] < 0.0:
                self.frozen[a] = 1
                continue
            L1 = exp(self.logL[a, 0])
            L2 = self.sgn2[a] * exp(self.logL[a, 1])
            L3 = exp(self.logL[a, 2])
            fmin = (1.0 + 2.0 * dl) / (2.0 + 2.0 * dl)
            M_max = 6.0 * L2 / self.den[a, 1] - fmin * (L1 / self.den[a, 0] + L3 / self.den[a, 2])
            if not 1.0 + (1.0 - M_max) / self.C_ln[a] > 0.0:
                self.frozen[a] = 1
                continue
            c2 = 3.0 * L2 / self.den[a, 1]
            c1 = L1 / self.den[a, 0]
            c3 = L3 / self.den[a, 2]
            Mc = c2 * self.kap[a, 1] - c1 * self.kap[a, 0] - c3 * self.kap[a, 2]
            Vc = 0.5 * (c2 * self.kap[a, 1] * self.kap[a, 1]
                        - (1.0 + dl) * (c1 * self.kap[a, 0] * self.kap[a, 0] + c3 * self.kap[a, 2] * self.kap[a, 2]))
            Wc = -c2 / self.hk[a, 1]
            scale = -1.0 / (self.C_ln[a] * self.N[a])
            self.unit[a, 0] = scale * Mc
            self.unit[a, 1] = scale * Vc
            self.unit[a, 2] = scale * Wc
            self.mode[a] = 1
            l = self.log_weight[a] + self.log_kbs[a] + log(self.N[a])
            if l > ref:
                ref = l
        if ref == NEG_INF:
            return (NEG_INF, 0.0, 0.0, 0.0)
        for a in range(self.n):
            if self.mode[a] == 1:
                c = exp(self.log_weight[a] + self.log_kbs[a] + log(self.N[a]) - ref)
                M += c * self.unit[a, 0]
                V += c * self.unit[a, 1]
                W += c * self.unit[a, 2]
        return (ref, M, V, W)

    def settle(self, double d, double hd, double v, double w, double A_after):
        cdef int a, ended, k_next, m
        cdef double dl, t, x1, M, C_ln, L, s_cap
        for a in range(self.n):
            if self.dormant[a] or self.mode[a] == 2:
                continue
            self.Sloc[a] += d
            self.Aloc[a] += v
            self.Wloc[a] += w
            if self.mode[a] == 1:
                dl = self.delta[a]
                t = self.kap[a, 0] * d
                self.logL[a, 0] += log1p(t + 0.5 * (1.0 + dl) * t * t) - log(self.den[a, 0])
                t = self.kap[a, 2] * d
                self.logL[a, 2] += log1p(t + 0.5 * (1.0 + dl) * t * t) - log(self.den[a, 2])
                t = self.kap[a, 1] * d
                x1 = t + 0.5 * t * t - hd / self.hk[a, 1]
                if x1 > -1.0:
                    self.logL[a, 1] += log1p(x1) - log(self.den[a, 1])
                elif x1 < -1.0:
                    self.sgn2[a] = -self.sgn2[a]
                    self.logL[a, 1] += log(-1.0 - x1) - log(self.den[a, 1])
                else:
                    self.logL[a, 1] = NEG_INF
                M = 3.0 * self.sgn2[a] * exp(self.logL[a, 1]) - exp(self.logL[a, 0]) - exp(self.logL[a, 2])
                self.N[a] = 1.0 + (1.0 - M) / self.C_ln[a]
            ended = 0
            if A_after > 0.0 and log(A_after) >= self.C_ln[a]:
                ended |= 2
            if fabs(d) > self.thr[a, 3]:
                ended |= 4
            if ended:
                self.events[a] |= ended
                C_ln = self.C_ln[a]
                L = self.L[a]
                s_cap = (1.0 - self.eps[a]) * exp(0.5 * (C_ln + log(2.0 * L)))
                self.blocks[a].append((self.k[a], self.start_round[a], self.round, ended,
                                       self.N[a], self.Sloc[a], self.Aloc[a],
                                       1 if self.Sloc[a] <= s_cap else 0))
                self.log_kbs[a] += log(self.N[a])
                k_next = self.k[a] + 1
                if A_after > 0.0:
                    m = <int>floor(log(A_after) / self.D_log[a]) + 1
                    if m > k_next:
                        k_next = m
                self._open_block(a, k_next)

    def total_log(self):
        cdef int a
        cdef double top = NEG_INF, l, acc = 0.0
        for a in range(self.n):
            l = self.log_weight[a] + self.log_kbs[a] + log(self.N[a])
            if l > top:
                top = l
        for a in range(self.n):
            acc += exp(self.log_weight[a] + self.log_kbs[a] + log(self.N[a]) - top)
        return top + log(acc)

    def log_capitals(self):
        return [self.log_kbs[a] + log(self.N[a]) for a in range(self.n)]

    def block_log(self, int a):
        return list(self.blocks[a])

    def block_k(self, int a):
        return self.k[a]

    def event(self, int a):
        return self.events[a]


# ---------------------------------------------------------------------------

cdef inline double _g_obj(int kind, double alpha, double M, double V, double W,
                          double v, double w, double d) nogil:
    return M * d + V * (d * d - v) + W * (h_eval(kind, alpha, d) - w)


cdef inline double _phi1(int kind, double alpha, double s, double M, double V, double W, double y) nogil:
    return s * M + 2.0 * V * y + W * dh_eval(kind, alpha, y)


cdef double _branch_min(int kind, double alpha, double s, double M, double V, double W) nogil:
    cdef double c = -2.0 * V / W
    cdef double y0 = d2h_inv(kind, alpha, c) if c > 0.0 else 0.0
    cdef double hi, y, g1, g2, y_new
    cdef int it
    if _phi1(kind, alpha, s, M, V, W, y0) >= 0.0:
        return 0.0
    hi = 2.0 * y0
    if hi < 1.0:
        hi = 1.0
    while _phi1(kind, alpha, s, M, V, W, hi) <= 0.0:
        hi *= 2.0
        if hi > 1e300:
            return 0.0
    y = hi
    for it in range(200):
        g1 = _phi1(kind, alpha, s, M, V, W, y)
        g2 = 2.0 * V + W * d2h_eval(kind, alpha, y)
        if not g2 > 0.0:
            break
        y_new = y - g1 / g2
        if y_new <= y0:
            y_new = 0.5 * (y + y0)
        if fabs(y - y_new) <= 1e-15 * y:
            y = y_new
            break
        y = y_new
    return y


def best_response(hedge, double M, double V, double W, double v, double w, double budget):
    cdef int kind
    cdef double alpha, best, best_d, y, val, s, d
    cdef int i
    kind, alpha = _hedge_code(hedge)
    if W > 0.0:
        best_d = 0.0
        best = _g_obj(kind, alpha, M, V, W, v, w, 0.0)
        for s in (1.0, -1.0):
            y = _branch_min(kind, alpha, s, M, V, W)
            if y > 0.0:
                val = _g_obj(kind, alpha, M, V, W, v, w, s * y)
                if val < best:
                    best = val
                    best_d = s * y
        return best_d, best, MINIMUM
    if W == 0.0 and V > 0.0:
        d = -M / (2.0 * V)
        return d, _g_obj(kind, alpha, M, V, W, v, w, d), MINIMUM
    if W == 0.0 and V == 0.0 and M == 0.0:
        return 0.0, 0.0, MINIMUM
    if W == 0.0 and V == 0.0:
        d = -(budget + 1.0) / M
        return d, _g_obj(kind, alpha, M, V, W, v, w, d), UNBOUNDED_BELOW
    d = 1.0
    for i in range(4000):
        for s in (1.0, -1.0):
            val = _g_obj(kind, alpha, M, V, W, v, w, s * d)
            if val < -budget:
                return s * d, val, UNBOUNDED_BELOW
        d *= 2.0
        if not isfinite(d):
            break
    raise ArithmeticError("no unbounded witness before overflow")
