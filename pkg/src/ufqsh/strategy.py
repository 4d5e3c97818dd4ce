"""Skeptic's strategies.

Production strategies are :class:`MixtureStrategy` objects: weighted sums of
account banks from :mod:`ufqsh.kernels`. The functional ``*_step`` helpers
below are slower single-account references with the same semantics, and
the test-suite cross-checks the banks against them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from .constants import ConstantBundle, demo_constants, select_constants
from .hedge import HedgeFunction
from .kernels import backend_for
from .martingale import (BlockScale, StoppingFlags, combine_M, l_lower_update, l_upper_update,
                         n_process, new_process, stakes_from_multiplicative)
from .numerics import E_E, SignedLogValue, logsumexp
from .protocol import ForecasterMove, GameState, TicketStakes, ZERO_STAKES

__all__ = [
    "DEFAULT_EPS_GRID",
    "MIRROR_SHARE",
    "Strategy",
    "ZeroStrategy",
    "MixtureStrategy",
    "truncation_strategy",
    "upper_forcer",
    "lower_block_strategy",
    "theorem2_forcer",
    "block_product_bound",
    "truncation_step",
    "TruncationAccount",
    "exceedance_accounting",
    "exceedance_profile",
    "AccountingViolation",
    "BlockState",
    "new_block_state",
    "lower_block_step",
    "lower_block_settle",
    "upper_forcer_step",
]

DEFAULT_EPS_GRID = tuple(2.0 ** -j for j in range(4, 11))
MIRROR_SHARE = 0.1
UPPER_K_MIN = 5
UPPER_K_MAX = 40


def _round_scales(A_after: float) -> tuple[float, float]:
    """(b, g) after this round's v is added; zeros while A <= e^e."""
    if A_after > E_E:
        L = math.log(math.log(A_after))
        return math.sqrt(A_after / L), math.sqrt(2.0 * A_after * L)
    return 0.0, 0.0


class Strategy:
    """Interface: ``stakes`` before Reality moves, ``settle`` after."""

    def stakes(self, state: GameState, f: ForecasterMove) -> TicketStakes:
        raise NotImplementedError

    def settle(self, state: GameState, f: ForecasterMove, x: float, hd: float | None = None) -> None:
        raise NotImplementedError

    def log_capital(self) -> float:
        raise NotImplementedError

    def round_info(self) -> tuple[int, int]:
        """(tau flag bits, block index k) of the first lower-bound account."""
        return 0, 0

    def report(self) -> dict:
        return {}


class ZeroStrategy(Strategy):
    def __init__(self, K0: float = 1.0):
        self._log = math.log(K0)

    def stakes(self, state, f):
        return ZERO_STAKES

    def settle(self, state, f, x, hd=None):
        pass

    def log_capital(self):
        return self._log

    def report(self):
        return {"strategy": "none"}


class MixtureStrategy(Strategy):
    """A weighted sum of account banks plus idle cash.

    Account log-weights already include the mixture weight, so the total
    capital is exp(cash_log) + sum over banks of exp(bank.total_log()).
    """

    def __init__(self, hedge: HedgeFunction, *, trunc=None, exp=(), block=None,
                 cash_log: float = -math.inf, label: str = "mixture", meta: dict | None = None):
        self.hedge = hedge
        self.trunc = trunc
        self.exp = list(exp)
        self.block = block
        self.cash_log = cash_log
        self.label = label
        self.meta = dict(meta or {})
        self._A_after = 0.0
        self._g_after = 0.0

    def stakes(self, state: GameState, f: ForecasterMove) -> TicketStakes:
        v, w = f.v, f.w
        A_after = state.A + v
        b, g = _round_scales(A_after)
        self._A_after, self._g_after = A_after, g
        parts = []
        if self.trunc is not None:
            parts.append(self.trunc.stakes(w, b))
        for bank in self.exp:
            parts.append(bank.stakes(v, A_after))
        if self.block is not None:
            parts.append(self.block.stakes(v, w, A_after))
        ref = -math.inf
        for p in parts:
            if p[0] > ref:
                ref = p[0]
        if ref == -math.inf:
            return ZERO_STAKES
        M = V = W = 0.0
        for l, m, vv, ww in parts:
            if l == -math.inf:
                continue
            c = math.exp(l - ref)
            M += c * m
            V += c * vv
            W += c * ww
        return TicketStakes(M, V, W, log_scale=ref)

    def settle(self, state: GameState, f: ForecasterMove, x: float, hd: float | None = None) -> None:
        d = x - f.m
        if hd is None and (self.trunc is not None or self.block is not None):
            hd = self.hedge.eval(d)
        if self.trunc is not None:
            self.trunc.settle(hd, f.w)
        S_after = state.S + d
        for bank in self.exp:
            bank.settle(d, S_after, self._A_after, self._g_after)
        if self.block is not None:
            self.block.settle(d, hd, f.v, f.w, self._A_after)

    def part_logs(self) -> dict[str, float]:
        out = {"cash": self.cash_log}
        if self.trunc is not None:
            out["truncation"] = self.trunc.total_log()
        for i, bank in enumerate(self.exp):
            out[f"exp{i}"] = bank.total_log()
        if self.block is not None:
            out["block"] = self.block.total_log()
        return out

    def log_capital(self) -> float:
        return logsumexp(list(self.part_logs().values()))

    def round_info(self) -> tuple[int, int]:
        if self.block is None or self.block.n == 0:
            return 0, 0
        return int(self.block.event(0)), int(self.block.block_k(0))

    def block_logs(self) -> list[list[tuple]]:
        if self.block is None:
            return []
        return [self.block.block_log(a) for a in range(self.block.n)]

    def report(self) -> dict:
        out = {"strategy": self.label, **self.meta,
               "log_capital_parts": {k: v for k, v in self.part_logs().items()}}
        if self.block is not None:
            out["blocks"] = [
                [dict(zip(("k", "start", "end", "events", "multiplier", "S", "A", "S_within_bound"), row))
                 for row in self.block.block_log(a)]
                for a in range(self.block.n)
            ]
        return out


# ---------------------------------------------------------------------------
# factories

def _normalise(ws: Sequence[float]) -> list[float]:
    total = float(sum(ws))
    return [w / total for w in ws]


def _grid_weights(eps_grid: Sequence[float]) -> list[float]:
    return _normalise([2.0 ** -(i + 1) for i in range(len(eps_grid))])


def _check_grid(eps_grid):
    eps_grid = tuple(float(e) for e in eps_grid)
    if not eps_grid:
        raise ValueError("epsilon grid is empty")
    if any(not (0 < e < 1) for e in eps_grid):
        raise ValueError("grid epsilons must lie in (0, 1)")
    return eps_grid


def _trunc_bank(hedge, eps_grid, max_D, weight, backend):
    eps, D, lw = [], [], []
    pw = _grid_weights(eps_grid)
    dw = _normalise([1.0 / (d * d) for d in range(1, max_D + 1)])
    for e, p in zip(eps_grid, pw):
        for d, q in zip(range(1, max_D + 1), dw):
            eps.append(e)
            D.append(float(d))
            lw.append(math.log(weight * p * q))
    return backend_for(hedge, backend).TruncBank(eps, D, lw, hedge)


def _exp_bank(hedge, eps_grid, k_min, k_max, weight, sign, backend):
    kappa, level, C, lw = [], [], [], []
    pw = _grid_weights(eps_grid)
    kw = _normalise([1.0 / (k - k_min + 1) ** 2 for k in range(k_min, k_max + 1)])
    for e, p in zip(eps_grid, pw):
        for k, q in zip(range(k_min, k_max + 1), kw):
            Ck = 2.0 ** k
            kappa.append((1.0 + e) * math.sqrt(2.0 * math.log(math.log(Ck)) / Ck))
            level.append(e)
            C.append(Ck)
            lw.append(math.log(weight * p * q))
    return backend_for(hedge, backend).ExpBank(kappa, level, C, lw, sign)


def truncation_strategy(hedge: HedgeFunction, eps_grid=DEFAULT_EPS_GRID, max_D: int = 32,
                        backend: str | None = None) -> MixtureStrategy:
    eps_grid = _check_grid(eps_grid)
    bank = _trunc_bank(hedge, eps_grid, max_D, 1.0, backend)
    return MixtureStrategy(hedge, trunc=bank, label="truncation",
                           meta={"eps_grid": list(eps_grid), "max_D": max_D})


def upper_forcer(hedge: HedgeFunction, eps_grid=DEFAULT_EPS_GRID, k_min: int = UPPER_K_MIN,
                 k_max: int = UPPER_K_MAX, sign: int = 1, backend: str | None = None) -> MixtureStrategy:
    """Mixture of epoch accounts: account (eps, k) bets with
    kappa = (1+eps) sqrt(2 lnln C_k / C_k), C_k = 2^k, until A reaches C_k or
    the path crosses (1+eps) sqrt(2 A lnln A) late in its epoch."""
    eps_grid = _check_grid(eps_grid)
    if not (k_min >= 5 and k_max >= k_min):
        raise ValueError("need 5 <= k_min <= k_max (C_k = 2^k must exceed e^e)")
    bank = _exp_bank(hedge, eps_grid, k_min, k_max, 1.0, sign, backend)
    return MixtureStrategy(hedge, exp=[bank], label="upper" if sign > 0 else "upper_mirrored",
                           meta={"eps_grid": list(eps_grid), "k_range": [k_min, k_max]})


def _bundles(eps_grid, mode, demo_delta, demo_lnlnC) -> list[ConstantBundle]:
    if mode == "proof":
        return [select_constants(e) for e in eps_grid]
    if mode == "demo":
        return [demo_constants(e, demo_delta, demo_lnlnC) for e in eps_grid]
    raise ValueError(f"skeptic.mode must be 'proof' or 'demo', got {mode!r}")


def _block_bank(hedge, bundles, weights, backend):
    return backend_for(hedge, backend).BlockBank(
        [b.eps for b in bundles], [b.eps_star for b in bundles], [b.delta for b in bundles],
        [b.D_log for b in bundles], [math.log(w) for w in weights], hedge)


def lower_block_strategy(hedge: HedgeFunction, bundles: Sequence[ConstantBundle],
                         mirror_share: float = MIRROR_SHARE, k_range=(UPPER_K_MIN, UPPER_K_MAX),
                         backend: str | None = None) -> MixtureStrategy:
    """Block accounts per epsilon, each lending ``mirror_share`` of its budget to
    a forcer of the upper bound for -S (the mirrored copies share one bank)."""
    if not bundles:
        raise ValueError("need at least one constant bundle")
    pw = _grid_weights([b.eps for b in bundles])
    block = _block_bank(hedge, bundles, [(1 - mirror_share) * p for p in pw], backend)
    exp = []
    if mirror_share > 0:
        exp.append(_exp_bank(hedge, [b.eps for b in bundles], k_range[0], k_range[1],
                             mirror_share, -1, backend))
    return MixtureStrategy(hedge, exp=exp, block=block, label="lower_block",
                           meta=_lower_meta(bundles, mirror_share))


def _lower_meta(bundles, mirror_share):
    return {
        "mirror_share": mirror_share,
        "constants": [b.as_dict() for b in bundles],
        "dormant_lower_accounts": [b.eps for b in bundles if not b.simulatable],
    }


def theorem2_forcer(hedge: HedgeFunction, eps_grid=DEFAULT_EPS_GRID, *, mode: str = "demo",
                    demo_delta: float = 0.05, demo_lnlnC: float = 3.0,
                    weights: dict | None = None, max_D: int = 32,
                    k_range=(UPPER_K_MIN, UPPER_K_MAX), mirror_share: float = MIRROR_SHARE,
                    backend: str | None = None) -> MixtureStrategy:
    """Truncation accounts + upper forcer + per-epsilon lower block accounts.

    Proof-mode lower accounts carry constants whose blocks cannot be reached
    by any simulation; they are kept as dormant cash and listed in the report.
    """
    eps_grid = _check_grid(eps_grid)
    if mode == "proof" and any(e >= 0.125 for e in eps_grid):
        raise ValueError("proof constants need every grid epsilon below 1/8")
    weights = dict(weights or {"truncation": 1 / 3, "upper": 1 / 3, "lower": 1 / 3})
    unknown = set(weights) - {"truncation", "upper", "lower"}
    if unknown:
        raise ValueError(f"unknown weight keys {sorted(unknown)}")
    wt, wu, wl = (float(weights.get(k, 0.0)) for k in ("truncation", "upper", "lower"))
    if min(wt, wu, wl) < 0:
        raise ValueError("weights must be nonnegative")
    total = wt + wu + wl
    if total > 1 + 1e-12:
        raise ValueError(f"weights sum to {total}, exceeding the unit budget")
    bundles = _bundles(eps_grid, mode, demo_delta, demo_lnlnC)
    trunc = _trunc_bank(hedge, eps_grid, max_D, wt, backend) if wt > 0 else None
    exp = []
    if wu > 0:
        exp.append(_exp_bank(hedge, eps_grid, k_range[0], k_range[1], wu, 1, backend))
    block = None
    if wl > 0:
        pw = _grid_weights(eps_grid)
        block = _block_bank(hedge, bundles, [wl * (1 - mirror_share) * p for p in pw], backend)
        if mirror_share > 0:
            exp.append(_exp_bank(hedge, eps_grid, k_range[0], k_range[1], wl * mirror_share, -1, backend))
    cash = 1.0 - total
    meta = {"eps_grid": list(eps_grid), "mode": mode,
            "weights": {"truncation": wt, "upper": wu, "lower": wl, "cash": cash},
            **_lower_meta(bundles, mirror_share)}
    return MixtureStrategy(hedge, trunc=trunc, exp=exp, block=block,
                           cash_log=math.log(cash) if cash > 1e-15 else -math.inf,
                           label="theorem2", meta=meta)


def block_product_bound(K: int, D_ln: float) -> float:
    """prod_{k=1}^{K} (1 + 1/(k ln D))."""
    if K < 1 or not D_ln > 0:
        raise ValueError("need K >= 1 and ln D > 0")
    return math.exp(math.fsum(math.log1p(1.0 / (k * D_ln)) for k in range(1, K + 1)))


# ---------------------------------------------------------------------------
# single-account references

def truncation_step(eps: float, D: float, state: GameState, f: ForecasterMove) -> TicketStakes:
    """One truncation account whose game capital is ``state.capital`` (started at D)."""
    b, _ = _round_scales(state.A + f.v)
    if b == 0.0:
        return ZERO_STAKES
    W = 1.0 / state.hedge.eval(eps * b)
    K = float(state.capital)
    if not K > 0 or K - W * f.w < 0:
        return ZERO_STAKES
    return TicketStakes(0.0, 0.0, W)


class TruncationAccount(Strategy):
    """A lone truncation account playing its own game with K0 = D."""

    def __init__(self, eps: float, D: float):
        self.eps, self.D = eps, D
        self._log = math.log(D)
        self._last = ZERO_STAKES

    def stakes(self, state, f):
        self._last = truncation_step(self.eps, self.D, state, f)
        return self._last

    def settle(self, state, f, x, hd=None):
        if self._last.W:
            d = x - f.m
            hd = state.hedge.eval(d) if hd is None else hd
            K = math.exp(self._log) + self._last.W * (hd - f.w)
            self._log = math.log(K) if K > 0 else -math.inf

    def log_capital(self):
        return self._log

    def report(self):
        return {"strategy": "truncation_account", "eps": self.eps, "D": self.D}


class AccountingViolation(ArithmeticError):
    pass


def exceedance_profile(trace, eps: float, D: float, hedge: HedgeFunction):
    """Per-round (count, bound, capital) for a single truncation account trace.

    Only rounds where the account bought the h-ticket enter the count and the
    price sum, since a flat round neither earns nor pays.
    """
    import numpy as np

    d = np.asarray(trace.x) - np.asarray(trace.m)
    A = np.cumsum(trace.v)
    staked = np.asarray(trace.W) > 0
    count = 0
    price = 0.0
    rows = []
    for i in range(len(d)):
        if staked[i] and A[i] > E_E:
            b = math.sqrt(A[i] / math.log(math.log(A[i])))
            if abs(d[i]) >= eps * b:
                count += 1
            price += trace.w[i] / hedge.eval(b)
        K = float(trace.K_sign[i]) * math.exp(trace.K_logmag[i]) if trace.K_sign[i] else 0.0
        rows.append((count, D + count - price / eps ** 3, K))
    return rows


def exceedance_accounting(trace, eps: float, D: float, hedge: HedgeFunction) -> tuple[int, float]:
    """(exceedance count, D + count - eps^-3 sum w_i/h(b_i)); raises if the
    account capital ever falls more than 1e-9 below the running bound."""
    rows = exceedance_profile(trace, eps, D, hedge)
    for i, (_, bound, K) in enumerate(rows, start=1):
        if K < bound - 1e-9 * max(1.0, abs(bound)):
            raise AccountingViolation(f"capital {K!r} below bound {bound!r} at round {i}")
    if not rows:
        return 0, float(D)
    return rows[-1][0], rows[-1][1]


def upper_forcer_step(forcer: MixtureStrategy, state: GameState, f: ForecasterMove) -> TicketStakes:
    return forcer.stakes(state, f)


@dataclass(frozen=True)
class BlockState:
    """Reference state of one lower-bound block account (raw units)."""

    bundle: ConstantBundle
    k: int
    scale: BlockScale
    l1: object
    l2: object
    l3: object
    K_bs: SignedLogValue
    N: SignedLogValue = SignedLogValue(1, 0.0)
    S: float = 0.0
    A: float = 0.0
    w_sum: float = 0.0
    frozen: bool = False
    mode: int = 0  # 0 flat, 1 staked, 2 skipped by the price condition
    flags: StoppingFlags = StoppingFlags()
    start_round: int = 1
    blocks: tuple = ()

    @property
    def capital(self) -> SignedLogValue:
        return self.K_bs * self.N


def _open_block(bundle: ConstantBundle, k: int, K_bs: SignedLogValue, start: int, blocks=()) -> BlockState:
    C_ln = k * bundle.D_log
    scale = BlockScale.raw(C_ln)
    sigma = scale.sigma
    base = (1 - bundle.eps) * math.sqrt(2.0) / sigma
    g = 1 + bundle.eps_star
    return BlockState(bundle, k, scale,
                      new_process("lower", base, bundle.delta, scale),
                      new_process("upper", base * g, 0.0, scale),
                      new_process("lower", base * g * g, bundle.delta, scale),
                      K_bs, start_round=start, blocks=blocks)


def new_block_state(bundle: ConstantBundle, K0: float = 1.0) -> BlockState:
    if not bundle.simulatable:
        raise ValueError("block accounts need a representable ln D (use demo constants)")
    return _open_block(bundle, 1, SignedLogValue.from_float(K0), 1)


def _price_thresholds(bundle, k, hedge):
    scale = BlockScale.raw(k * bundle.D_log)
    sigma, d, L = scale.sigma, bundle.delta, scale.C_lnln
    hs = hedge.eval(sigma)
    return d * d * sigma * sigma, d * hs, d * hs * L, d * sigma


def lower_block_step(bs: BlockState, state: GameState, f: ForecasterMove,
                     bundle: ConstantBundle) -> tuple[TicketStakes, BlockState]:
    """Stakes of one block account for the coming round, plus its updated state."""
    hedge = state.hedge
    n = state.round + 1
    tv, tw, tws, _ = _price_thresholds(bundle, bs.k, hedge)
    if f.v > tv or f.w > tw or bs.w_sum + f.w > tws:
        k = bs.k + 1
        while True:
            tv, tw, tws, _ = _price_thresholds(bundle, k, hedge)
            if f.v <= tv and f.w <= tw and f.w <= tws:
                break
            k += 1
        nb = _open_block(bundle, k, bs.capital, n + 1, bs.blocks)
        return ZERO_STAKES, replace(nb, mode=2, flags=StoppingFlags(tau1_hit=True, tau1_round=n))
    if bs.frozen:
        return ZERO_STAKES, replace(bs, mode=0, flags=StoppingFlags())
    k1, k2, k3 = bs.l1.kappa, bs.l2.kappa, bs.l3.kappa
    d_ = bundle.delta
    hk2 = hedge.eval(1.0 / k2)
    den1 = 1 + 0.5 * (1 + d_) * k1 * k1 * f.v
    den2 = 1 + 0.5 * k2 * k2 * f.v - f.w / hk2
    den3 = 1 + 0.5 * (1 + d_) * k3 * k3 * f.v
    if not den2 > 0 or bs.l2.value.sign < 0:
        return ZERO_STAKES, replace(bs, frozen=True, mode=0, flags=StoppingFlags())
    fmin = (1 + 2 * d_) / (2 + 2 * d_)
    L1, L2, L3 = float(bs.l1.value), float(bs.l2.value), float(bs.l3.value)
    M_max = 6 * L2 / den2 - fmin * (L1 / den1 + L3 / den3)
    if not 1 + (1 - M_max) / bs.scale.C_ln > 0:
        return ZERO_STAKES, replace(bs, frozen=True, mode=0, flags=StoppingFlags())
    s1 = stakes_from_multiplicative(bs.l1.value, "lower", k1, d_, f.v, f.w, hedge)
    s2 = stakes_from_multiplicative(bs.l2.value, "upper", k2, 0.0, f.v, f.w, hedge)
    s3 = stakes_from_multiplicative(bs.l3.value, "lower", k3, d_, f.v, f.w, hedge)
    # N = 1 + (1 - M)/ln C, so the account's tickets are -(K_bs/ln C) times M's
    coef = -bs.K_bs / bs.scale.C_ln
    parts = [(coef * 3, s2), (-coef, s1), (-coef, s3)]
    M = V = W = 0.0
    ref = max(c.logmag + s.log_scale for c, s in parts)
    for c, s in parts:
        mult = c.sign * math.exp(c.logmag + s.log_scale - ref)
        M += mult * s.M
        V += mult * s.V
        W += mult * s.W
    return TicketStakes(M, V, W, log_scale=ref), replace(bs, mode=1, flags=StoppingFlags())


def lower_block_settle(bs: BlockState, state: GameState, f: ForecasterMove, x: float,
                       bundle: ConstantBundle) -> BlockState:
    """Apply Reality's move; closes the block after a round with A >= C or a large move."""
    if bs.mode == 2:
        return bs
    hedge = state.hedge
    n = state.round + 1
    d = x - f.m
    bs = replace(bs, S=bs.S + d, A=bs.A + f.v, w_sum=bs.w_sum + f.w)
    if bs.mode == 1:
        l1 = l_lower_update(bs.l1, d, f.v)
        l2 = l_upper_update(bs.l2, d, f.v, f.w, hedge)
        l3 = l_lower_update(bs.l3, d, f.v)
        N = n_process(combine_M(l2, l1, l3), bs.scale.C_ln)
        bs = replace(bs, l1=l1, l2=l2, l3=l3, N=N)
    A_after = state.A + f.v
    _, _, _, tx = _price_thresholds(bundle, bs.k, hedge)
    flags = bs.flags
    if A_after > 0 and math.log(A_after) >= bs.scale.C_ln:
        flags = replace(flags, tau2_hit=True, tau2_round=n)
    if abs(d) > tx:
        flags = replace(flags, tau3_hit=True, tau3_round=n)
    if not (flags.tau2_hit or flags.tau3_hit):
        return replace(bs, flags=flags)
    ended = (2 if flags.tau2_hit else 0) | (4 if flags.tau3_hit else 0)
    C_ln, L = bs.scale.C_ln, bs.scale.C_lnln
    s_cap = (1 - bundle.eps) * math.exp(0.5 * (C_ln + math.log(2 * L)))
    row = (bs.k, bs.start_round, n, ended, float(bs.N), bs.S, bs.A, 1 if bs.S <= s_cap else 0)
    k_next = bs.k + 1
    if A_after > 0:
        k_next = max(k_next, int(math.floor(math.log(A_after) / bundle.D_log)) + 1)
    nb = _open_block(bundle, k_next, bs.capital, n + 1, bs.blocks + (row,))
    return replace(nb, flags=flags)
