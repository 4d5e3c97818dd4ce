import math

import numpy as np
import pytest

from ufqsh import _kernels_py as pyk
from ufqsh import kernels
from ufqsh.hedge import logsquare_hedge, power_hedge

needs_compiled = pytest.mark.skipif(not kernels.compiled_available(),
                                    reason="compiled extension not built")

HEDGES = [power_hedge(2.5), power_hedge(3.0), logsquare_hedge()]
HEDGE_IDS = ["p2.5", "cubic", "logsquare"]


@needs_compiled
@pytest.mark.parametrize("hedge", HEDGES, ids=HEDGE_IDS)
def test_hedge_eval_parity(hedge):
    comp = kernels.backend_for(hedge, "compiled")
    for x in np.concatenate([np.linspace(-50, 50, 1001), [1e-8, 1e5, -1e10]]):
        assert comp.hedge_eval(hedge, float(x)) == pytest.approx(hedge(float(x)), rel=1e-13, abs=1e-300)


def _path(seed, n):
    rng = np.random.default_rng(seed)
    v = rng.uniform(0.2, 3.0, n)
    d = rng.standard_t(5, n) * np.sqrt(v)
    return v, d


@needs_compiled
def test_expbank_parity():
    kappa, level = [0.01, 0.05, 0.2], [0.1, 0.2, 0.3]
    C, lw = [1e4, 1e6, 1e9], [-1.0, -2.0, -3.0]
    banks = [mod.ExpBank(kappa, level, C, lw, sign=-1) for mod in (pyk, kernels._compiled)]
    v, d = _path(1, 3000)
    S = A = 0.0
    for vi, di in zip(v, d):
        A += vi
        S += di
        g = math.sqrt(2 * A * math.log(math.log(A))) if A > math.exp(math.e) else 0.0
        st = [b.stakes(float(vi), A) for b in banks]
        assert st[0] == pytest.approx(st[1], rel=1e-12)
        for b in banks:
            b.settle(float(di), S, A, g)
    assert banks[0].total_log() == pytest.approx(banks[1].total_log(), rel=1e-11)


@needs_compiled
@pytest.mark.parametrize("hedge", HEDGES, ids=HEDGE_IDS)
def test_truncbank_parity(hedge):
    eps, D, lw = [0.0625, 0.125, 0.25], [1.0, 4.0, 32.0], [-1.0, -1.5, -2.0]
    banks = [pyk.TruncBank(eps, D, lw, hedge), kernels._compiled.TruncBank(eps, D, lw, hedge)]
    v, d = _path(2, 3000)
    A = 0.0
    for vi, di in zip(v, d):
        A += vi
        b = math.sqrt(A / math.log(math.log(A))) if A > math.exp(math.e) else 0.0
        w = 1.2 * hedge(math.sqrt(vi))
        st = [bk.stakes(w, b) for bk in banks]
        assert st[0] == pytest.approx(st[1], rel=1e-12)
        for bk in banks:
            bk.settle(hedge(float(di)), w)
    assert banks[0].capitals() == pytest.approx(banks[1].capitals(), rel=1e-11)


@needs_compiled
@pytest.mark.parametrize("hedge", HEDGES, ids=HEDGE_IDS)
def test_blockbank_parity(hedge):
    args = ([0.1, 0.2], [0.3, 0.3], [0.05, 0.05], [math.log(50.0), 3.0], [-0.5, -1.0])
    banks = [pyk.BlockBank(*args, hedge), kernels._compiled.BlockBank(*args, hedge)]
    v, d = _path(3, 5000)
    A = 0.0
    for vi, di in zip(v, d):
        A += vi
        w = hedge(math.sqrt(vi))
        st = [bk.stakes(float(vi), w, A) for bk in banks]
        assert st[0][0] == st[1][0] or st[0][0] == pytest.approx(st[1][0], rel=1e-12)
        assert st[0][1:] == pytest.approx(st[1][1:], rel=1e-10, abs=1e-300)
        for bk in banks:
            bk.settle(float(di), hedge(float(di)), float(vi), w, A)
    assert banks[0].total_log() == pytest.approx(banks[1].total_log(), rel=1e-10)
    for a in range(2):
        assert banks[0].block_k(a) == banks[1].block_k(a)
        assert len(banks[0].block_log(a)) == len(banks[1].block_log(a))


def _random_instances(n, seed, hedge):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        v = float(rng.uniform(0.1, 4.0))
        w = float(hedge(math.sqrt(v)) * rng.uniform(1.0, 2.0))  # coherent
        M = float(rng.normal())
        V = float(rng.normal())
        W = float(rng.exponential()) if rng.random() < 0.9 else 0.0
        if W == 0.0:
            V = abs(V)
        yield M, V, W, v, w


@pytest.mark.parametrize("hedge", HEDGES, ids=HEDGE_IDS)
@pytest.mark.parametrize("backend", ["python", "compiled"])
def test_best_response_matches_dense_grid(hedge, backend):
    if backend == "compiled" and not kernels.compiled_available():
        pytest.skip("compiled extension not built")
    mod = kernels.backend_for(hedge, backend)
    grid = np.concatenate([np.linspace(-60, 60, 240_001)])
    hg = hedge.eval_array(grid)
    for M, V, W, v, w in _random_instances(1000, 9, hedge):
        d, val, status = mod.best_response(hedge, M, V, W, v, w, 1.0)
        assert status == kernels.MINIMUM
        g = M * grid + V * (grid * grid - v) + W * (hg - w)
        ref = float(g.min())
        assert val <= ref + 1e-6 * max(1.0, abs(ref))
        assert val == pytest.approx(M * d + V * (d * d - v) + W * (hedge(d) - w), abs=1e-9)
        # coherent prices: Reality can always keep Skeptic from gaining
        assert val <= 1e-9


def test_best_response_unbounded_cases(cubic):
    d, val, status = pyk.best_response(cubic, 1.0, 0.0, -1.0, 1.0, 1.0, 5.0)
    assert status == kernels.UNBOUNDED_BELOW and val < -5.0
    d, val, status = pyk.best_response(cubic, 2.0, 0.0, 0.0, 1.0, 1.0, 5.0)
    assert status == kernels.UNBOUNDED_BELOW and val < -5.0
    assert pyk.best_response(cubic, 0.0, 0.0, 0.0, 1.0, 1.0, 5.0) == (0.0, 0.0, kernels.MINIMUM)
