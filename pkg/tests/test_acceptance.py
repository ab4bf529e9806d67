"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run under pytest (the lines appear in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""
import itertools
import math
import time

import numpy as np
import pytest
from scipy import stats

from unseen.bounds import gini_bound, kolmogorov_bound, moment_bound
from unseen.chain import (ChainParams, StateDistribution, equilibrium, rate, return_time_mean,
                          tail_matrix, tail_R, transition_matrix)
from unseen.infer import (asymptotic_se, consistency_bound, consistency_frequency, estimate_theta,
                          invert_link, phi_pmf, replicate_estimates, sample_magnitudes, variance)
from unseen.predict import (PredictionQuery, expected_unseen, magnitude_law, tail_unseen, weights)
from unseen.sim import NegJumpRecord, return_times, sample_path, states_at, windowed_post_states
from unseen.specfun import asym_coeffs, eval_L, eval_L_series

PRINTED_F = (1.25331, -0.66667, 0.10444, 0.02963, 0.00435, -0.00282)
PRINTED_K = (0.79788, 0.42441, 0.15926, -0.20968)


def _fmt(x):
    return f"{x:.3g}"


def check_1():
    start = time.perf_counter()
    worst_r0 = worst_sum = 0.0
    for theta, mu, t in itertools.product([0.2, 1.0, 5.0], [0.5, 2.0], [0.1, 1.0, 10.0]):
        p = ChainParams.from_theta(theta, mu)
        P, rem = transition_matrix(p, t, 10)
        worst_sum = max(worst_sum, np.abs(P.sum(axis=1) + rem - 1).max())
        for x in range(11):
            worst_r0 = max(worst_r0, abs(tail_R(p, x, 0, t) - 1))
    secs = time.perf_counter() - start
    ok = worst_r0 <= 1e-12 and worst_sum <= 1e-10 and secs < 10
    return ok, f"max|R(0)-1|={_fmt(worst_r0)} max|sum p-1|={_fmt(worst_sum)} time={secs:.2f}s"


def _kolmogorov_residuals(p, t, h, points, N=60):
    P = {s: transition_matrix(p, t + s * h, N, N + 40)[0] for s in (-1, 0, 1)}
    R = tail_matrix(p, t, N, N + 41)
    dP = (P[1] - P[-1]) / (2 * h)
    P0 = P[0]
    back, fwd = [], []
    for x, y in points:
        b = p.lam * P0[x + 1, y] + p.mu * P0[:x, y].sum() - p.exit_rate(x) * P0[x, y]
        f = (p.lam * P0[x, y - 1] if y else 0.0) + p.mu * R[x, y + 1] - p.exit_rate(y) * P0[x, y]
        back.append(dP[x, y] - b)
        fwd.append(dP[x, y] - f)
    return np.array(back), np.array(fwd)


def check_2():
    p = ChainParams.from_theta(1.5, 0.8)
    points = list(itertools.product([0, 2, 5, 9], [0, 1, 3, 6, 10]))
    b1, f1 = _kolmogorov_residuals(p, 0.7, 0.1, points)
    b2, f2 = _kolmogorov_residuals(p, 0.7, 0.05, points)
    ratios = np.concatenate([b1 / b2, f1 / f2])
    # Richardson on the one-sided quotient at t = 0
    h = 1e-4
    worst = 0.0
    for x, y in itertools.product(range(7), range(8)):
        d = [(transition_matrix(p, s, 6, 10)[0][x, y] - (x == y)) / s for s in (h, h / 2)]
        worst = max(worst, abs(2 * d[1] - d[0] - rate(p, x, y)))
    ok = bool(np.all(np.abs(ratios - 4) <= 0.5)) and worst <= 1e-6
    return ok, (f"{len(points)} points, halving ratios in [{ratios.min():.3f}, {ratios.max():.3f}], "
                f"max|p'(0)-q|={_fmt(worst)}")


def check_3():
    start = time.perf_counter()
    p = ChainParams.from_theta(2.0, 1.0)
    x = states_at(p, 0, 1.0, 100_000, seed=0)
    P, _ = transition_matrix(p, 1.0, 0)
    emp = np.bincount(x, minlength=P.shape[1]) / x.size
    k = max(emp.size, P.shape[1])
    tv = 0.5 * np.abs(np.pad(emp, (0, k - emp.size)) - np.pad(P[0], (0, k - P.shape[1]))).sum()
    secs = time.perf_counter() - start
    return tv < 0.01 and secs < 60, f"TV={_fmt(tv)} time={secs:.2f}s"


def check_4():
    worst = 0.0
    for theta, t in itertools.product([0.3, 1.0, 4.0], [0.5, 2.0]):
        p = ChainParams.from_theta(theta, 1.3)
        law = equilibrium(p)
        N = law.truncation(1e-16) + 10
        pi = law.pmf(np.arange(N + 1))
        P, _ = transition_matrix(p, t, N, N)
        worst = max(worst, np.abs(pi @ P - pi).max())
    tele = abs(math.fsum((n + 1) / math.factorial(n + 2) for n in range(170)) - 1)
    p = ChainParams.from_theta(1.0, 1.0)
    law = equilibrium(p)
    path = sample_path(p, StateDistribution.equilibrium(p, tol=1e-16), 2000.0, seed=0)
    states = [k for k in range(20) if law.pmf(k) > 1e-3]
    erg = max(abs(path.time_average(lambda y, k=k: (y == k).astype(float)) - law.pmf(k)) for k in states)
    ok = worst <= 1e-8 and tele <= 1e-12 and erg <= 0.02
    return ok, (f"max|pi P - pi|={_fmt(worst)} telescoping err={_fmt(tele)} "
                f"occupation err={_fmt(erg)} over states 0..{states[-1]}")


def _numeric_derivatives_at_zero(h1=1e-4, h2=1e-3):
    L = lambda th: eval_L_series(th).value
    d1 = (-3 * L(0.0) + 4 * L(h1) - L(2 * h1)) / (2 * h1)
    d2 = (2 * L(0.0) - 5 * L(h2) + 4 * L(2 * h2) - L(3 * h2)) / h2**2
    return L(0.0), d1, d2


def check_5():
    L0, d1, d2 = _numeric_derivatives_at_zero()
    c = asym_coeffs(5)
    f_err = max(abs(a - b) for a, b in zip(c.f, PRINTED_F))
    k_err = [abs(a - b) for a, b in zip(c.k, PRINTED_K)]
    parts = {
        "L(0)": L0 == 1.0,
        "L'(0)": abs(d1 - 0.5) <= 1e-6,
        "L''(0)": abs(d2 + 1 / 3) <= 1e-4,
        "f0..f5": f_err <= 5e-6,
        "k0..k2": max(k_err[:3]) <= 5e-6,
        "k3": k_err[3] <= 5e-6,
        "b2": c.b[2] == 1 / (2 * math.pi),
        "b3": c.b[3] == 0.0,
    }
    failed = [k for k, v in parts.items() if not v]
    detail = (f"L'(0)={d1:.9f} L''(0)={d2:.6f} max f err={_fmt(f_err)} "
              f"k3 recurrence={c.k[3]:.6f} vs printed {PRINTED_K[3]}")
    if failed:
        detail += f" | failing: {', '.join(failed)}"
    return not failed, detail, parts


def check_6():
    theta = 1e6
    r_mean = eval_L(theta).value / math.sqrt(2 * theta / math.pi)
    r_var = variance(theta) / ((math.pi - 2) * theta / math.pi)
    ok = abs(r_mean - 1) < 0.01 and abs(r_var - 1) < 0.01
    return ok, f"mean ratio={r_mean:.6f} variance ratio={r_var:.6f}"


def check_7():
    taus = {"delta0": StateDistribution.point(0), "delta5": StateDistribution.point(5),
            "geom": StateDistribution.geometric(0.5, 40)}
    n = bad = 0
    worst = 0.0
    for theta, mu in itertools.product([0.3, 1.0, 3.0], [0.5, 1.0, 2.0]):
        p = ChainParams.from_theta(theta, mu)
        for tau, t in itertools.product(taus.values(), [0.0, 0.25, 1.0, 4.0]):
            reps = [kolmogorov_bound(p, tau, t), gini_bound(p, tau, t)]
            reps += [moment_bound(p, tau, m, t) for m in (1, 2, 3)]
            for r in reps:
                n += 1
                bad += r.exact > r.bound + 1e-10
                worst = max(worst, r.ratio)
    return bad == 0, f"{n} cases, {bad} violations, max exact/bound={worst:.4f}"


def check_8():
    start = time.perf_counter()
    rt = max(abs(invert_link(eval_L(th).value)[0] - th) / max(1.0, th)
             for th in (0.05, 0.5, 1.0, 4.0, 30.0, 100.0, 1e3))
    theta0, n = 4.0, 10_000
    se = asymptotic_se(theta0, n)
    est = estimate_theta(sample_magnitudes(theta0, n, seed=0)).theta_hat
    in_band = abs(est - theta0) < stats.norm.ppf(0.9995) * se
    reps = replicate_estimates(theta0, n, 500, seed=1)
    ks = stats.kstest((reps - theta0) / se, "norm").pvalue
    sd_ratio = reps.std(ddof=1) / se
    secs = time.perf_counter() - start
    ok = rt <= 1e-8 and in_band and ks > 0.01 and abs(sd_ratio - 1) <= 0.1 and secs < 300
    return ok, (f"round trip={_fmt(rt)} theta_hat={est:.4f} (band +/-{3.29 * se:.4f}) "
                f"KS p={ks:.3f} SD ratio={sd_ratio:.4f} time={secs:.1f}s")


def check_9():
    theta0, eps, m, k_max = 1.0, 0.5, 10_000, 100_000
    bound = consistency_bound(theta0, m, eps)
    freq, _ = consistency_frequency(theta0, m, eps, 500, k_max, seed=0)
    return freq >= bound, f"frequency={freq:.4f} bound={bound:.5f} (k up to {k_max})"


def check_10():
    p1 = ChainParams.from_theta(1.0, 1.0)
    d0 = StateDistribution.point(0)
    recs = [NegJumpRecord([1.0], [1]), NegJumpRecord([0.5, 1.2, 2.0], [1, 2, 1]),
            NegJumpRecord([0.3, 0.9, 1.7, 2.2], [2, 1, 3, 1])]
    w_err = max(abs(weights(p1, d0, r).weights.sum() - 1) for r in recs)
    t0 = all(tail_unseen(PredictionQuery(p1, d0, r, 0)) == 1.0 for r in recs)
    e_err = 0.0
    for r in recs:
        tails = [tail_unseen(PredictionQuery(p1, d0, r, xi)) for xi in range(1, 80)]
        e_err = max(e_err, abs(expected_unseen(PredictionQuery(p1, d0, r)) - math.fsum(tails)))

    def z(values, want):
        return abs(values.mean() - want) / (values.std() / math.sqrt(values.size))

    post, _ = windowed_post_states(p1, 0, [(0.98, 1.02)], [1], 1_000_000, seed=7)
    q = PredictionQuery(p1, d0, NegJumpRecord([1.0], [1]), xi=2)
    zs = [z((post >= 2).astype(float), tail_unseen(q)), z(post.astype(float), expected_unseen(q))]
    p15 = ChainParams.from_theta(1.5, 1.0)
    post, _ = windowed_post_states(p15, 0, [(0.95, 1.05), (1.9, 2.1)], [1, 2], 2_000_000, seed=21)
    q = PredictionQuery(p15, d0, NegJumpRecord([1.0, 2.0], [1, 2]), xi=1)
    zs += [z((post >= 1).astype(float), tail_unseen(q)), z(post.astype(float), expected_unseen(q))]

    p2 = ChainParams.from_theta(2.0)
    lim = max(abs(magnitude_law(p2, d0, [60.0], [d]) - phi_pmf(2.0, d)) for d in range(1, 15))
    ok = w_err <= 1e-10 and t0 and e_err <= 1e-8 and max(zs) < 3 and lim <= 1e-8
    return ok, (f"weights err={_fmt(w_err)} tail(0)=1:{t0} E-sum err={_fmt(e_err)} "
                f"MC max z={max(zs):.2f} limit err={_fmt(lim)}")


def check_11():
    p = ChainParams.from_theta(1.0, 1.0)
    r = return_times(p, 1, 100_000, seed=0)
    rep = return_time_mean(p, 1)
    se = r.std(ddof=1) / math.sqrt(r.size)
    z = abs(r.mean() - rep.derived) / se
    return z < 3, (f"MC mean={r.mean():.4f} derived={rep.derived:.4f} z={z:.2f} printed={rep.printed:.4f} "
                   f"discrepancy factor={rep.discrepancy_factor:.4f}")


CHECKS = {1: check_1, 2: check_2, 3: check_3, 4: check_4, 5: check_5, 6: check_6,
          7: check_7, 8: check_8, 9: check_9, 10: check_10, 11: check_11}


def _line(n, ok, detail):
    return f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def _record(acceptance, n, ok, detail):
    acceptance[n] = (ok, detail)
    print(_line(n, ok, detail))


@pytest.mark.parametrize("n", [k for k in CHECKS if k != 5])
def test_criterion(n, acceptance):
    ok, detail = CHECKS[n]()
    _record(acceptance, n, ok, detail)
    assert ok, detail


def test_criterion_5(acceptance):
    ok, detail, parts = check_5()
    _record(acceptance, 5, ok, detail)
    held = {k: v for k, v in parts.items() if k != "k3"}
    assert all(held.values()), detail


@pytest.mark.xfail(strict=True, reason="printed k3 disagrees with the recurrence it is derived from")
def test_criterion_5_printed_k3():
    assert check_5()[2]["k3"]


if __name__ == "__main__":
    results = {}
    for n, fn in CHECKS.items():
        out = fn()
        print(_line(n, out[0], out[1]), flush=True)
        results[n] = out[0]
    print(f"{sum(results.values())}/{len(results)} criteria pass")
