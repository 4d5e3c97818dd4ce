"""Pure-Python account banks and best response.

This is the fallback twin of ``_kernels.pyx``: same classes, same method
signatures, same arithmetic in the same order, so the two agree to rounding.
A bank holds many accounts of one kind in parallel lists. Each round it
reports its aggregate stakes as ``(log_scale, M, V, W)``, where
exp(log_scale) * (M, V, W) are the actual tickets, and then settles.
"""
from __future__ import annotations

import math

BACKEND = "python"
_NEG_INF = -math.inf
E_E = math.exp(math.e)

UNBOUNDED_BELOW = "UNBOUNDED_BELOW"
MINIMUM = "MINIMUM"


def _hedge_triplet(hedge):
    return hedge.h, hedge.dh, hedge.d2h


class ExpBank:
    """Prudent exponential accounts K <- K (1 + s k d + k^2 d^2) / (1 + k^2 v).

    ``sign`` s = +1 bets on S going up, -1 on it going down. Account a is open
    while A < C[a]; it freezes (keeps its capital, stops betting) the first
    time s*S >= (1 + level[a]) g with A >= C[a]/2.
    """

    def __init__(self, kappa, level, C, log_weight, sign=1):
        n = len(kappa)
        if not (len(level) == len(C) == len(log_weight) == n):
            raise ValueError("ExpBank arrays must have equal length")
        self.n = n
        self.sign = 1.0 if sign >= 0 else -1.0
        self.kappa = [float(k) for k in kappa]
        self.level = [float(e) for e in level]
        self.C = [float(c) for c in C]
        self.log_weight = [float(l) for l in log_weight]
        self.log_cap = [0.0] * n
        self.active = [1] * n
        self.staked = [0] * n
        self.den = [1.0] * n

    def stakes(self, v, A_after):
        ref = _NEG_INF
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
        if ref == _NEG_INF:
            return (_NEG_INF, 0.0, 0.0, 0.0)
        M = V = 0.0
        s = self.sign
        for a in range(self.n):
            if self.staked[a]:
                k = self.kappa[a]
                c = math.exp(self.log_weight[a] + self.log_cap[a] - ref) / self.den[a]
                M += c * s * k
                V += c * k * k
        return (ref, M, V, 0.0)

    def settle(self, d, S_after, A_after, g_after):
        s = self.sign
        for a in range(self.n):
            if not self.staked[a]:
                continue
            k = self.kappa[a]
            t = s * k * d
            self.log_cap[a] += math.log1p(t + k * k * d * d) - math.log(self.den[a])
            if g_after > 0 and A_after >= 0.5 * self.C[a] and s * S_after >= (1.0 + self.level[a]) * g_after:
                self.active[a] = 0

    def total_log(self):
        top = _NEG_INF
        for a in range(self.n):
            l = self.log_weight[a] + self.log_cap[a]
            if l > top:
                top = l
        if top == _NEG_INF:
            return top
        acc = 0.0
        for a in range(self.n):
            acc += math.exp(self.log_weight[a] + self.log_cap[a] - top)
        return top + math.log(acc)

    def log_capitals(self):
        return list(self.log_cap)

    def n_active(self):
        return sum(self.active)


class TruncBank:
    """Truncation accounts: W = 1 / (D h(eps b)) per unit of starting capital.

    Capital is normalised so each account starts at 1 (a D-capital account
    divided by D). An account goes flat when buying W could leave it negative.
    """

    def __init__(self, eps, D, log_weight, hedge):
        n = len(eps)
        if not (len(D) == len(log_weight) == n):
            raise ValueError("TruncBank arrays must have equal length")
        self.n = n
        self.eps = [float(e) for e in eps]
        self.D = [float(x) for x in D]
        self.log_weight = [float(l) for l in log_weight]
        self.cap = [1.0] * n
        self.Wa = [0.0] * n
        self.h = hedge.h

    def stakes(self, w, b_after):
        ref = _NEG_INF
        for a in range(self.n):
            self.Wa[a] = 0.0
        if not b_after > 0:
            return (_NEG_INF, 0.0, 0.0, 0.0)
        for a in range(self.n):
            Wa = 1.0 / (self.D[a] * self.h(self.eps[a] * b_after))
            if self.cap[a] - Wa * w < 0.0 or not self.cap[a] > 0.0:
                continue
            self.Wa[a] = Wa
            if self.log_weight[a] > ref:
                ref = self.log_weight[a]
        if ref == _NEG_INF:
            return (_NEG_INF, 0.0, 0.0, 0.0)
        W = 0.0
        for a in range(self.n):
            if self.Wa[a] > 0.0:
                W += math.exp(self.log_weight[a] - ref) * self.Wa[a]
        return (ref, 0.0, 0.0, W)

    def settle(self, hd, w):
        for a in range(self.n):
            if self.Wa[a] > 0.0:
                c = self.cap[a] + self.Wa[a] * (hd - w)
                self.cap[a] = c if c > 0.0 else 0.0

    def total_log(self):
        top = _NEG_INF
        for a in range(self.n):
            if self.cap[a] > 0.0 and self.log_weight[a] > top:
                top = self.log_weight[a]
        if top == _NEG_INF:
            return top
        acc = 0.0
        for a in range(self.n):
            if self.cap[a] > 0.0:
                acc += math.exp(self.log_weight[a] - top) * self.cap[a]
        return top + math.log(acc)

    def capitals(self):
        return list(self.cap)

    def staked_W(self):
        return list(self.Wa)


class BlockBank:
    """Lower-bound block accounts, one per epsilon.

    Within a block C = D^k the account holds 1 + (1 - M)/ln C units of its
    block-start capital, where M = 3 L2 - L1 - L3 combines one upper and two
    lower exponential processes. Blocks end after a round with A >= C or
    |x - m| > delta sqrt(C / ln ln C). A forecast that breaks the price
    thresholds makes the account sit the round out and restart at a larger k.
    An account whose worst-case next N could reach 0 freezes until the
    block ends.
    """

    EV_PRICE = 1  # condition (i) fired before staking
    EV_VARIANCE = 2  # condition (ii) ended the block
    EV_MOVE = 4  # condition (iii) ended the block

    def __init__(self, eps, eps_star, delta, D_log, log_weight, hedge):
        n = len(eps)
        if not (len(eps_star) == len(delta) == len(D_log) == len(log_weight) == n):
            raise ValueError("BlockBank arrays must have equal length")
        self.n = n
        self.eps = [float(x) for x in eps]
        self.eps_star = [float(x) for x in eps_star]
        self.delta = [float(x) for x in delta]
        self.D_log = [float(x) for x in D_log]
        self.log_weight = [float(x) for x in log_weight]
        self.h = hedge.h
        self.dormant = [0 if math.isfinite(x) else 1 for x in self.D_log]
        self.k = [1] * n
        self.C_ln = [0.0] * n
        self.L = [0.0] * n
        self.sigma = [0.0] * n
        self.kap = [[0.0, 0.0, 0.0] for _ in range(n)]
        self.hk = [[0.0, 0.0, 0.0] for _ in range(n)]
        self.thr = [[0.0, 0.0, 0.0, 0.0] for _ in range(n)]  # v, w, w_sum, x
        self.logL = [[0.0, 0.0, 0.0] for _ in range(n)]
        self.sgn2 = [1.0] * n
        self.Sloc = [0.0] * n
        self.Aloc = [0.0] * n
        self.Wloc = [0.0] * n
        self.log_kbs = [0.0] * n
        self.N = [1.0] * n
        self.frozen = [0] * n
        self.mode = [0] * n  # 0 flat, 1 staked, 2 skipped by (i)
        self.den = [[1.0, 1.0, 1.0] for _ in range(n)]
        self.unit = [[0.0, 0.0, 0.0] for _ in range(n)]
        self.events = [0] * n
        self.start_round = [1] * n
        self.round = 0
        self.blocks = [[] for _ in range(n)]
        for a in range(n):
            if not self.dormant[a]:
                self._open_block(a, 1)

    # -- block bookkeeping -------------------------------------------------
    def _block_constants(self, a, k):
        C_ln = k * self.D_log[a]
        L = math.log(C_ln)
        sigma = math.exp(0.5 * (C_ln - math.log(L)))
        d = self.delta[a]
        hs = self.h(sigma)
        return C_ln, L, sigma, (d * d * sigma * sigma, d * hs, d * hs * L, d * sigma)

    def _open_block(self, a, k):
        C_ln, L, sigma, thr = self._block_constants(a, k)
        self.k[a] = k
        self.C_ln[a] = C_ln
        self.L[a] = L
        self.sigma[a] = sigma
        self.thr[a] = list(thr)
        base = (1.0 - self.eps[a]) * math.sqrt(2.0) / sigma
        g = 1.0 + self.eps_star[a]
        kap = self.kap[a]
        kap[0], kap[1], kap[2] = base, base * g, base * g * g
        hk = self.hk[a]
        for i in range(3):
            hk[i] = self.h(1.0 / kap[i]) if kap[i] > 0.0 else math.inf
        lg = self.logL[a]
        lg[0] = lg[1] = lg[2] = 0.0
        self.sgn2[a] = 1.0
        self.Sloc[a] = self.Aloc[a] = self.Wloc[a] = 0.0
        self.N[a] = 1.0
        self.frozen[a] = 0
        self.start_round[a] = self.round + 1

    def _price_ok(self, a, k, v, w):
        _, _, _, thr = self._block_constants(a, k)
        return v <= thr[0] and w <= thr[1] and w <= thr[2]

    # -- per round ----------------------------------------------------------
    def stakes(self, v, w, A_after):
        self.round += 1
        ref = _NEG_INF
        for a in range(self.n):
            self.mode[a] = 0
            self.events[a] = 0
            if self.dormant[a]:
                continue
            thr = self.thr[a]
            if v > thr[0] or w > thr[1] or self.Wloc[a] + w > thr[2]:
                self.events[a] = self.EV_PRICE
                self.mode[a] = 2
                k = self.k[a] + 1
                while not self._price_ok(a, k, v, w):
                    k += 1
                self.log_kbs[a] += math.log(self.N[a])
                self._open_block(a, k)
                continue
            if self.frozen[a]:
                continue
            kap, hk, den, lg = self.kap[a], self.hk[a], self.den[a], self.logL[a]
            dl = self.delta[a]
            den[0] = 1.0 + 0.5 * (1.0 + dl) * kap[0] * kap[0] * v
            den[1] = 1.0 + 0.5 * kap[1] * kap[1] * v - w / hk[1]
            den[2] = 1.0 + 0.5 * (1.0 + dl) * kap[2] * kap[2] * v
            # a negative upper process would flip the h-ticket to W < 0
            if not den[1] > 0.0 or self.sgn2[a] < 0.0:
                self.frozen[a] = 1
                continue
            L1 = math.exp(lg[0])
            L2 = self.sgn2[a] * math.exp(lg[1])
            L3 = math.exp(lg[2])
            fmin = (1.0 + 2.0 * dl) / (2.0 + 2.0 * dl)
            M_max = 6.0 * L2 / den[1] - fmin * (L1 / den[0] + L3 / den[2])
            if not 1.0 + (1.0 - M_max) / self.C_ln[a] > 0.0:
                self.frozen[a] = 1
                continue
            # tickets of M per unit of each process value, combined
            c2 = 3.0 * L2 / den[1]
            c1 = L1 / den[0]
            c3 = L3 / den[2]
            Mc = c2 * kap[1] - c1 * kap[0] - c3 * kap[2]
            Vc = 0.5 * (c2 * kap[1] * kap[1] - (1.0 + dl) * (c1 * kap[0] * kap[0] + c3 * kap[2] * kap[2]))
            Wc = -c2 / hk[1]
            scale = -1.0 / (self.C_ln[a] * self.N[a])
            u = self.unit[a]
            u[0], u[1], u[2] = scale * Mc, scale * Vc, scale * Wc
            self.mode[a] = 1
            l = self.log_weight[a] + self.log_kbs[a] + math.log(self.N[a])
            if l > ref:
                ref = l
        if ref == _NEG_INF:
            return (_NEG_INF, 0.0, 0.0, 0.0)
        M = V = W = 0.0
        for a in range(self.n):
            if self.mode[a] == 1:
                c = math.exp(self.log_weight[a] + self.log_kbs[a] + math.log(self.N[a]) - ref)
                u = self.unit[a]
                M += c * u[0]
                V += c * u[1]
                W += c * u[2]
        return (ref, M, V, W)

    def settle(self, d, hd, v, w, A_after):
        for a in range(self.n):
            if self.dormant[a] or self.mode[a] == 2:
                continue
            self.Sloc[a] += d
            self.Aloc[a] += v
            self.Wloc[a] += w
            if self.mode[a] == 1:
                kap, hk, den, lg = self.kap[a], self.hk[a], self.den[a], self.logL[a]
                dl = self.delta[a]
                t = kap[0] * d
                lg[0] += math.log1p(t + 0.5 * (1.0 + dl) * t * t) - math.log(den[0])
                t = kap[2] * d
                lg[2] += math.log1p(t + 0.5 * (1.0 + dl) * t * t) - math.log(den[2])
                t = kap[1] * d
                x1 = t + 0.5 * t * t - hd / hk[1]
                if x1 > -1.0:
                    lg[1] += math.log1p(x1) - math.log(den[1])
                elif x1 < -1.0:
                    self.sgn2[a] = -self.sgn2[a]
                    lg[1] += math.log(-1.0 - x1) - math.log(den[1])
                else:
                    lg[1] = _NEG_INF
                M = 3.0 * self.sgn2[a] * math.exp(lg[1]) - math.exp(lg[0]) - math.exp(lg[2])
                self.N[a] = 1.0 + (1.0 - M) / self.C_ln[a]
            ended = 0
            if A_after > 0.0 and math.log(A_after) >= self.C_ln[a]:
                ended |= self.EV_VARIANCE
            if abs(d) > self.thr[a][3]:
                ended |= self.EV_MOVE
            if ended:
                self.events[a] |= ended
                C_ln, L = self.C_ln[a], self.L[a]
                s_cap = (1.0 - self.eps[a]) * math.exp(0.5 * (C_ln + math.log(2.0 * L)))
                self.blocks[a].append((self.k[a], self.start_round[a], self.round, ended,
                                       self.N[a], self.Sloc[a], self.Aloc[a],
                                       1 if self.Sloc[a] <= s_cap else 0))
                self.log_kbs[a] += math.log(self.N[a])
                k_next = self.k[a] + 1
                if A_after > 0.0:
                    m = int(math.floor(math.log(A_after) / self.D_log[a])) + 1
                    if m > k_next:
                        k_next = m
                self._open_block(a, k_next)

    def total_log(self):
        top = _NEG_INF
        for a in range(self.n):
            l = self.log_weight[a] + self.log_kbs[a] + math.log(self.N[a])
            if l > top:
                top = l
        acc = 0.0
        for a in range(self.n):
            acc += math.exp(self.log_weight[a] + self.log_kbs[a] + math.log(self.N[a]) - top)
        return top + math.log(acc)

    def log_capitals(self):
        return [self.log_kbs[a] + math.log(self.N[a]) for a in range(self.n)]

    def block_log(self, a):
        return list(self.blocks[a])

    def block_k(self, a):
        return self.k[a]

    def event(self, a):
        return self.events[a]


# ---------------------------------------------------------------------------
# Reality's best response

def _branch_min(h, dh, d2h, d2h_inv, s, M, V, W):
    """Stationary minimiser y > 0 of s M y + V y^2 + W h(y), or 0.0 if none."""
    c = -2.0 * V / W
    y0 = d2h_inv(c) if c > 0.0 else 0.0

    def phi1(y):
        return s * M + 2.0 * V * y + W * dh(y)

    if phi1(y0) >= 0.0:
        return 0.0
    hi = max(2.0 * y0, 1.0)
    while phi1(hi) <= 0.0:
        hi *= 2.0
        if hi > 1e300:
            return 0.0
    # phi1 is convex and increasing past y0: Newton from the right converges
    # monotonically to the root
    y = hi
    for _ in range(200):
        g1 = phi1(y)
        g2 = 2.0 * V + W * d2h(y)
        if not g2 > 0.0:
            break
        step = g1 / g2
        y_new = y - step
        if y_new <= y0:
            y_new = 0.5 * (y + y0)
        if abs(y - y_new) <= 1e-15 * y:
            y = y_new
            break
        y = y_new
    return y


def best_response(hedge, M, V, W, v, w, budget):
    """Minimise g(d) = M d + V (d^2 - v) + W (h(d) - w) over real d.

    Returns (d, g(d), status). ``budget`` is Skeptic's capital in the same
    units as the stakes; in unbounded cases the witness d has g(d) < -budget.
    """
    h, dh, d2h = hedge.h, hedge.dh, hedge.d2h

    def g(d):
        return M * d + V * (d * d - v) + W * (h(abs(d)) - w)

    if W > 0.0:
        inv = hedge.inverse_deriv2
        best_d = 0.0
        best = g(0.0)
        for s in (1.0, -1.0):
            y = _branch_min(h, dh, d2h, inv, s, M, V, W)
            if y > 0.0:
                val = g(s * y)
                if val < best:
                    best, best_d = val, s * y
        return best_d, best, MINIMUM
    if W == 0.0 and V > 0.0:
        d = -M / (2.0 * V)
        return d, g(d), MINIMUM
    if W == 0.0 and V == 0.0 and M == 0.0:
        return 0.0, 0.0, MINIMUM
    # unbounded below: walk outwards until the loss exceeds the budget
    target = -budget
    if W == 0.0 and V == 0.0:
        d = -(budget + 1.0) / M
        return d, g(d), UNBOUNDED_BELOW
    d = 1.0
    for _ in range(4000):
        for cand in (d, -d):
            val = g(cand)
            if val < target:
                return cand, val, UNBOUNDED_BELOW
        d *= 2.0
        if not math.isfinite(d):
            break
    raise ArithmeticError("no unbounded witness before overflow")
