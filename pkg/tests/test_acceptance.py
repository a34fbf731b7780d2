"""End-to-end acceptance checks. One test per criterion; see the summary
section printed at the end of the run for the pass/fail table."""

import math
import os
import time
from itertools import accumulate

import numpy as np
import pytest
from scipy import stats as sps

from conftest import PROFILE
from dpdetect.core import stream
from dpdetect.detector import DetectionConfig, epsilon_grid, sweep
from dpdetect.mechanisms import REGISTRY
from dpdetect.report import to_csv
from dpdetect.stats import hypergeom_cdf, pvalue, thin

N_DETECT = 100_000 if PROFILE == "fast" else 500_000
STRICT = 1e-2 if PROFILE == "fast" else 1e-3
ALPHA = 0.05

_runs = {}


def run(mechanism, epsilon0, grid, workers=1):
    """Sweep once per (mechanism, epsilon0, grid); later criteria reuse results."""
    key = (mechanism, epsilon0, tuple(grid), workers)
    if key not in _runs:
        cfg = DetectionConfig(mechanism, epsilon0, tuple(grid), n_detect=N_DETECT,
                              workers=workers)
        _runs[key] = sweep(mechanism, cfg)
    results = _runs[key]
    for r in results:
        assert r.ok, f"{mechanism} at {r.test_epsilon}: {r.error}"
    return {r.test_epsilon: r for r in results}


def curve(results):
    return ", ".join(f"{e:g}:{r.min_p:.2g}" for e, r in sorted(results.items()))


def first_crossing(results, above=ALPHA):
    return next((e for e, r in sorted(results.items()) if r.min_p > above), None)


def grid(lo, hi):
    return epsilon_grid(lo, hi, 0.1)


# -- statistics kernel -------------------------------------------------------

@pytest.mark.criterion(1, "hypergeom_cdf equals exact rational oracle (M <= 60), < 10 s")
def test_criterion_01_cdf_oracle():
    start = time.perf_counter()
    binom = [[math.comb(m, j) for j in range(m + 1)] for m in range(61)]
    worst = 0.0
    for M in range(1, 61):
        ks = np.arange(-1, M + 2)
        for K in range(M + 1):
            for s in range(M + 1):
                lo, hi = max(0, s - (M - K)), min(K, s)
                total = binom[M][s]
                partial = accumulate(binom[K][j] * binom[M - K][s - j] for j in range(lo, hi + 1))
                # int / int is the exact rational rounded once to the nearest double
                exact = [0.0] * (lo + 1) + [a / total for a in partial] + [1.0] * (M + 1 - hi)
                got = hypergeom_cdf(ks, M, K, s)
                worst = max(worst, float(np.max(np.abs(got - exact))))
    elapsed = time.perf_counter() - start
    assert worst <= 1e-9, f"max abs error {worst:.3g}"
    assert elapsed < 10, f"took {elapsed:.1f}s"


@pytest.mark.criterion(2, "binomial thinning chi-square p > 0.01, < 5 s")
def test_criterion_02_thinning_is_binomial():
    start = time.perf_counter()
    n, p1, eps, trials = 50, 0.6, 0.5, 100_000
    rng = stream(2024, 0)
    two_stage = thin(rng.binomial(n, p1, size=trials), eps, rng)
    direct = rng.binomial(n, p1 * math.exp(-eps), size=trials)
    support = np.arange(n + 1)
    table = np.array([np.bincount(two_stage, minlength=n + 1),
                      np.bincount(direct, minlength=n + 1)])
    # pool sparse tail cells so every expected count is at least 5
    keep = table.sum(axis=0) >= 10
    lo, hi = support[keep].min(), support[keep].max()
    pooled = np.column_stack([table[:, :lo + 1].sum(axis=1), table[:, lo + 1:hi],
                              table[:, hi:].sum(axis=1)])
    p = sps.chi2_contingency(pooled).pvalue
    elapsed = time.perf_counter() - start
    assert p > 0.01, f"chi-square p={p:.3g}"
    assert elapsed < 5, f"took {elapsed:.1f}s"


@pytest.mark.criterion(3, "type-I rate at the boundary null within alpha + 3 sd, < 60 s")
def test_criterion_03_type_one_calibration():
    start = time.perf_counter()
    n, p2, eps, reps = 1000, 0.1, 0.3, 2000
    p1 = math.exp(eps) * p2
    rng = stream(3, 0)
    c1 = rng.binomial(n, p1, size=reps)
    c2 = rng.binomial(n, p2, size=reps)
    pv = np.array([pvalue(int(a), int(b), n, eps, rng) for a, b in zip(c1, c2)])
    elapsed = time.perf_counter() - start
    for alpha in (0.01, 0.05):
        rate = np.mean(pv <= alpha)
        bound = alpha + 3 * math.sqrt(alpha * (1 - alpha) / reps)
        assert rate <= bound, f"alpha={alpha}: rejection rate {rate:.4f} > {bound:.4f}"
    assert elapsed < 60, f"took {elapsed:.1f}s"


# -- mechanism curves --------------------------------------------------------

@pytest.mark.criterion(4, "noisy_max_lap eps0=0.7: p < strict for eps <= 0.5, > 0.05 for eps >= 0.9")
def test_criterion_04_noisy_max_laplace():
    res = run("noisy_max_lap", 0.7, grid(0.1, 2.2))
    assert all(r.min_p < STRICT for e, r in res.items() if e <= 0.5), curve(res)
    assert all(r.min_p > ALPHA for e, r in res.items() if e >= 0.9), curve(res)


@pytest.mark.criterion(5, "noisy_max_lap_value eps0=0.2: p < strict at 0.2, crossing in [0.3, 0.6]")
def test_criterion_05_incorrect_noisy_max():
    res = run("noisy_max_lap_value", 0.2, grid(0.1, 1.0))
    assert res[0.2].min_p < STRICT, curve(res)
    crossing = first_crossing(res)
    assert crossing is not None and 0.3 <= crossing <= 0.6, curve(res)


@pytest.mark.criterion(6, "histogram_wrong_scale: eps0=1.5 crossing in [0.5, 0.8]; eps0=0.2 rejected")
def test_criterion_06_incorrect_histogram():
    res = run("histogram_wrong_scale", 1.5, grid(0.1, 1.2))
    assert all(r.min_p < STRICT for e, r in res.items() if e <= 0.4), curve(res)
    crossing = first_crossing(res)
    assert crossing is not None and 0.5 <= crossing <= 0.8, curve(res)
    low = run("histogram_wrong_scale", 0.2, [0.2])
    assert low[0.2].min_p < STRICT, curve(low)


@pytest.mark.criterion(7, "svt eps0 in {0.2, 0.7}: p > 0.05 at eps0+0.2, p < strict at eps0-0.1")
def test_criterion_07_correct_svt():
    failures = []
    for eps0 in (0.2, 0.7):
        below, above = round(eps0 - 0.1, 10), round(eps0 + 0.2, 10)
        res = run("svt", eps0, [below, above])
        if not res[above].min_p > ALPHA:
            failures.append(f"eps0={eps0}: min_p={res[above].min_p:.3g} at {above}")
        if not res[below].min_p < STRICT:
            failures.append(f"eps0={eps0}: min_p={res[below].min_p:.3g} at {below}")
    assert not failures, "; ".join(failures)


@pytest.mark.criterion(8, "isvt1 eps0=0.7 rejected on [0.1, 2.2]; isvt2 eps0=0.2 rejected for eps <= 0.5")
def test_criterion_08_isvt1_isvt2():
    res1 = run("isvt1", 0.7, grid(0.1, 2.2))
    assert all(r.min_p < STRICT for r in res1.values()), curve(res1)
    res2 = run("isvt2", 0.2, grid(0.1, 0.5))
    assert all(r.min_p < STRICT for r in res2.values()), curve(res2)


@pytest.mark.criterion(9, "isvt3 eps0=0.2: p < strict for eps <= 0.2, crossing in [0.3, 0.5]")
def test_criterion_09_isvt3():
    res = run("isvt3", 0.2, grid(0.1, 0.6))
    assert all(r.min_p < STRICT for e, r in res.items() if e <= 0.2), curve(res)
    crossing = first_crossing(res)
    assert crossing is not None and 0.3 <= crossing <= 0.5, curve(res)


@pytest.mark.criterion(10, "isvt4 eps0=0.7: p < 0.05 at 0.7")
def test_criterion_10_isvt4():
    res = run("isvt4", 0.7, [0.7])
    assert res[0.7].min_p < ALPHA, curve(res)


@pytest.mark.criterion(11, "counterexamples at eps0=1.5 match the expected witnesses")
def test_criterion_11_counterexample_fidelity():
    r = run("noisy_max_lap_value", 1.5, [1.5])[1.5]
    assert list(r.pair.d1) == [1] * 5 and list(r.pair.d2) == [0] * 5, (r.pair, r.event)
    assert str(r.event).startswith("coord[0]in(-inf,"), str(r.event)
    assert r.min_p < STRICT
    s = run("isvt2", 1.5, [1.5])[1.5]
    assert str(s.event).startswith("hamming="), str(s.event)
    assert s.min_p < STRICT


# -- engineering -------------------------------------------------------------

@pytest.mark.criterion(12, "identical config with 1 and 4 workers gives byte-identical CSV")
def test_criterion_12_determinism():
    grid_ = [0.5, 0.7, 0.9]
    one = run("svt", 0.7, grid_, workers=1)
    four = run("svt", 0.7, grid_, workers=4)
    to_text = lambda res: to_csv([res[e] for e in grid_], timing=False)  # noqa: E731
    assert to_text(one) == to_text(four)


@pytest.mark.criterion(13, "every (mechanism, eps) point completes within 60 s at full profile")
def test_criterion_13_runtime():
    if PROFILE == "fast":
        pytest.skip("the runtime budget is defined for the full profile")
    covered = {key[0] for key in _runs}
    for name in sorted(set(REGISTRY) - covered):
        run(name, 0.7, [0.7])
    points = [(key[0], r.test_epsilon, r.seconds) for key, rs in _runs.items() for r in rs]
    slowest = max(points, key=lambda p: p[2])
    threads = os.cpu_count()
    assert slowest[2] <= 60, (f"{slowest[0]} at eps={slowest[1]} took {slowest[2]:.1f}s "
                              f"on {threads} hardware thread(s)")
