"""Acceptance gate: one test per criterion, one printed verdict line each.

Run with ``pytest tests/test_acceptance.py -v -s``.  Exact claims are checked
in rational arithmetic; float claims carry the tolerance stated alongside
each check.  Expensive shared artifacts (the exact critical-d=1 sweep, the
long normalized series) are session fixtures.
"""

import math
import random
import time
from fractions import Fraction

import numpy as np
import pytest

from gridcast.chains import chain_hit_probabilities, poisson_tail_checks
from gridcast.combinat import (
    abelian_square_count,
    abelian_square_counts,
    asymptotic_normalizer_ratio,
    f3_by_recurrence,
    f3_envelope_report,
)
from gridcast.covariance import finite_layer_covariance, finite_layer_covariances
from gridcast.covpoly import closed_form_identity_check, flat_row_identity_check
from gridcast.estimators import (
    closed_form_critical_d1,
    critical_d1_ratio_seq,
    optimal_convex,
    optimal_linear,
    supercritical_certificate,
    unrestricted_ratio_trace,
)
from gridcast.halfspace import single_vertex_ratio_series
from gridcast.linalg import quadratic_form
from gridcast.poset import ModelSpec, Window
from gridcast.simulate import exact_reference_cov, sample_moments

PI_QUARTER = math.pi**0.25


def _report(num: int, name: str, ok: bool, detail: str = ""):
    verdict = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {num:02d} {name}: {verdict}  {detail}".rstrip(), flush=True)
    assert ok, f"criterion {num} ({name}) failed: {detail}"


@pytest.fixture(scope="module")
def critical_d1_sweep():
    m = ModelSpec.finite_critical(1)
    return list(finite_layer_covariances(m, 50))


def test_criterion_01_closed_form_exactness(critical_d1_sweep):
    start = time.time()
    for lc in critical_d1_sweep:
        res = optimal_linear(lc)
        ratio_sq, coeffs = closed_form_critical_d1(lc.t)
        assert res.ratio_sq == ratio_sq, f"ratio mismatch at t={lc.t}"
        scale = res.coefficients[-1] / coeffs[-1]
        assert scale > 0
        assert all(
            c == scale * b for c, b in zip(res.coefficients, coeffs)
        ), f"coefficients not proportional to binomials at t={lc.t}"
    elapsed = time.time() - start
    _report(
        1,
        "critical d=1 closed form, t<=50 exact",
        elapsed < 120,
        f"elapsed={elapsed:.1f}s",
    )


def test_criterion_02_quartic_rate():
    seq = critical_d1_ratio_seq(2000)
    grid = list(range(500, 2001, 100))
    devs = [abs(seq[t] * t**0.25 - PI_QUARTER) / PI_QUARTER for t in grid]
    monotone = all(a >= b for a, b in zip(devs, devs[1:]))
    _report(
        2,
        "S_t * t^(1/4) approaches pi^(1/4)",
        devs[-1] <= 0.02 and monotone,
        f"dev(2000)={devs[-1]:.4f} dev(500)={devs[0]:.4f} shrinking={monotone}",
    )


def test_criterion_03_generating_polynomial_identity():
    ok = True
    for lc in finite_layer_covariances(ModelSpec.finite_critical(1), 15):
        if lc.t == 0:
            continue
        ok &= closed_form_identity_check(lc.t, lc).matched
        ok &= flat_row_identity_check(lc.t, lc)
    _report(3, "covariance polynomial closed form, t=1..15", ok)


def test_criterion_04_abelian_squares():
    rec = f3_by_recurrence(2000)
    direct = abelian_square_counts(500, 3)
    recurrence_ok = rec[:501] == direct
    env = f3_envelope_report(2000)
    asym_ok = True
    details = []
    f_values = {
        2: math.comb(4000, 2000),
        3: rec[2000],
        4: abelian_square_count(2000, 4),
    }
    for i in (2, 3, 4):
        r = asymptotic_normalizer_ratio(2000, i, f_values[i])
        asym_ok &= abs(r - 1) <= 0.05
        details.append(f"i={i}:{r:.4f}")
    _report(
        4,
        "abelian squares: recurrence, envelope, asymptotics",
        recurrence_ok
        and env["lower_ok"]
        and env["upper_ok"]
        and env["monotone_ok"]
        and asym_ok,
        " ".join(details),
    )


def test_criterion_05_halfspace_phase_transition():
    oks = []
    details = []
    # (a) above criticality: Cauchy-stable positive limit
    for d, horizon in ((1, 2_000_000), (2, 100_000)):
        m = ModelSpec.halfspace(d, Fraction(1, d + 1) + Fraction(1, 10))
        s = single_vertex_ratio_series(m, horizon)
        window = s[horizon // 10 : horizon + 1]
        tail = float(np.max(np.abs(window - s[horizon])))
        oks.append(tail < 1e-3 and s[horizon] > 0.5)
        details.append(f"a:d={d} tail={tail:.2e} rho={s[horizon]:.4f}")
    # (b) below criticality: gone by t=100, halving per 10 layers
    for d in (1, 2):
        m = ModelSpec.halfspace(d, Fraction(1, d + 1) - Fraction(1, 10))
        s = single_vertex_ratio_series(m, 200)
        halving = all(s[t + 10] <= s[t] / 2 for t in range(50, 190))
        oks.append(s[100] < 1e-3 and halving)
        details.append(f"b:d={d} rho(100)={s[100]:.1e}")
    # (c) critical: d=1 quartic band, d=2 sqrt-log band, d=3 stable limit
    s1 = single_vertex_ratio_series(ModelSpec.halfspace_critical(1), 10_000)
    grid = list(range(1000, 10_001, 500))
    band1 = [s1[t] * t**0.25 for t in grid]
    oks.append(all(0.5 <= v <= 2.0 for v in band1))
    details.append(f"c:d=1 band=[{min(band1):.3f},{max(band1):.3f}]")
    s2 = single_vertex_ratio_series(ModelSpec.halfspace_critical(2), 10_000)
    band2 = [s2[t] * math.sqrt(math.log(t)) for t in grid]
    oks.append(all(0.1 <= v <= 2.0 for v in band2))
    details.append(f"c:d=2 band=[{min(band2):.3f},{max(band2):.3f}]")
    s3 = single_vertex_ratio_series(ModelSpec.halfspace_critical(3), 10_000)
    tail3 = abs(float(s3[10_000] - s3[5_000]))
    oks.append(tail3 < 1e-3 and s3[10_000] > 0.8)
    details.append(f"c:d=3 rho={s3[10_000]:.4f} tail={tail3:.1e}")
    _report(5, "half-space phase transition", all(oks), " ".join(details))


def test_criterion_06_impossibility_box_decay():
    rng = random.Random(20240815)
    oks = []
    details = []
    for d, t_max in ((1, 120), (2, 40)):
        for trial in range(5):
            alphas = tuple(
                Fraction(rng.randint(1, 9), 10 * i) for i in range(1, d + 2)
            )
            m = ModelSpec.finite(d, alphas)
            trace = [r.ratio for r in unrestricted_ratio_trace(m, t_max)][1:]
            decreasing = all(a > b for a, b in zip(trace, trace[1:]))
            plateau = (
                trace[-1] > 1e-2
                and trace[-1] / trace[-11] > 1 - 1e-3
            )
            oks.append(decreasing and not plateau)
            if trial == 0:
                details.append(f"d={d} S({t_max})={trace[-1]:.2e}")
    _report(6, "subcritical box: strict decay, no plateau", all(oks), " ".join(details))


def test_criterion_07_supercritical_certificates():
    oks = []
    details = []
    for d, alphas in ((1, (1, Fraction(3, 5))), (2, (1, Fraction(1, 2), Fraction(2, 5)))):
        m = ModelSpec.finite(d, alphas)
        cert = supercritical_certificate(m, 40)
        incs = [
            cert.rows[i + 1].variance - cert.rows[i].variance
            for i in range(len(cert.rows) - 1)
        ]
        tail_ok = incs[-1] < Fraction(1, 10_000)
        shrinking = all(a >= b for a, b in zip(incs[-10:], incs[-9:]))
        floor = cert.ratio_floor()
        oks.append(
            cert.cov_constant
            and cert.variance_nondecreasing
            and tail_ok
            and shrinking
            and floor > 0
        )
        details.append(f"d={d} inc(40)={float(incs[-1]):.1e} floor={floor:.3f}")
    _report(7, "supercritical certificate", all(oks), " ".join(details))


def test_criterion_08_convex_critical_rate(critical_d1_sweep):
    for lc in critical_d1_sweep:
        conv = optimal_convex(lc)
        assert conv.ratio_sq == closed_form_critical_d1(lc.t)[0], (
            f"convex != unrestricted at t={lc.t}"
        )
    seq = critical_d1_ratio_seq(100)
    band1 = [seq[t] * t**0.25 for t in range(10, 101)]
    ok1 = max(band1) / min(band1) <= 4.0
    band2 = []
    for lc in finite_layer_covariances(ModelSpec.finite_critical(2), 40, "float"):
        if lc.t < 10 or lc.t % 2:
            continue
        band2.append(optimal_convex(lc).ratio * lc.t**0.25)
    ok2 = max(band2) / min(band2) <= 4.0
    _report(
        8,
        "convex critical rate in a factor-4 band",
        ok1 and ok2,
        f"d=1 band ratio={max(band1)/min(band1):.3f} "
        f"d=2 band ratio={max(band2)/min(band2):.3f}",
    )


def test_criterion_09_negative_coefficient_witness():
    first = None
    for lc in finite_layer_covariances(ModelSpec.finite_critical(2), 12):
        res = optimal_linear(lc)
        if any(c < 0 for c in res.coefficients):
            first = lc.t
            break
    _report(
        9,
        "critical d=2 optimum needs a negative coefficient",
        first == 5,
        f"smallest such layer t={first}",
    )


def test_criterion_10_chain_variance_bound():
    rng = random.Random(20240816)
    violations = 0
    trials = 0
    for d in (1, 2):
        m = ModelSpec.finite_critical(d)
        layers = {t: finite_layer_covariance(m, t) for t in range(1, 11)}
        for _ in range(100):
            t = rng.randint(1, 10)
            lc = layers[t]
            raw = [Fraction(rng.randint(0, 9)) for _ in lc.vertices]
            if sum(raw) == 0:
                raw[0] = Fraction(1)
            total = sum(raw)
            weights = {v: w / total for v, w in zip(lc.vertices, raw)}
            dist = chain_hit_probabilities(weights, m)
            var = quadratic_form(lc.sigma, [weights[v] for v in lc.vertices])
            trials += 1
            if var < dist.variance_lower_bound():
                violations += 1
    _report(
        10,
        "descending-chain variance bound, 200 exact trials",
        trials == 200 and violations == 0,
        f"trials={trials} violations={violations}",
    )


def test_criterion_11_poisson_tails():
    results = poisson_tail_checks(200)
    ok = all(r.upper_half_ok and r.lower_tail_ok for r in results)
    _report(11, "Poisson tail bounds, T<=200 exact", ok)


MC_CONFIGS = [
    # (model, t, window) -- 20 configurations, both posets, d <= 2, t <= 8
    (ModelSpec.finite_critical(1), 8, None),
    (ModelSpec.finite_critical(1), 4, None),
    (ModelSpec.finite(1, (Fraction(3, 4), Fraction(2, 5))), 6, None),
    (ModelSpec.finite(1, (Fraction(11, 10), Fraction(1, 2))), 5, None),
    (ModelSpec.finite(1, (1, Fraction(3, 5))), 7, None),
    (ModelSpec.finite(0, (Fraction(6, 5),)), 8, None),
    (ModelSpec.finite(0, (Fraction(1, 2),)), 6, None),
    (ModelSpec.finite_critical(2), 5, None),
    (ModelSpec.finite(2, (Fraction(3, 4), Fraction(2, 5), Fraction(1, 4))), 5, None),
    (ModelSpec.finite(2, (1, Fraction(1, 2), Fraction(2, 5))), 4, None),
    (ModelSpec.halfspace_critical(1), 8, Window((0, 5), 4)),
    (ModelSpec.halfspace_critical(1), 5, Window((-1, 2), 3)),
    (ModelSpec.halfspace(1, Fraction(2, 5)), 6, Window((0, 3), 4)),
    (ModelSpec.halfspace(1, Fraction(7, 10)), 7, Window((2, 3), 3)),
    (ModelSpec.halfspace(0, Fraction(6, 5)), 8, Window((8,), 1)),
    (ModelSpec.halfspace(0, Fraction(1, 2)), 5, Window((5,), 1)),
    (ModelSpec.halfspace_critical(2), 5, Window((1, 1, 0), 3)),
    (ModelSpec.halfspace(2, Fraction(2, 5)), 6, Window((2, 2, -1), 3)),
    (ModelSpec.halfspace(2, Fraction(3, 10)), 4, Window((0, 1, 1), 2)),
    (ModelSpec.finite_critical(2), 3, None),
]


def test_criterion_12_monte_carlo_oracle():
    start = time.time()
    worst = 0.0
    ok = True
    inside_2se = 0
    entries = 0
    for idx, (model, t, window) in enumerate(MC_CONFIGS):
        summary = sample_moments(
            model, t, 1_000_000, seed=20240821 + idx, window=window, max_cells=10**9
        )
        exact = exact_reference_cov(model, t, window)
        z = np.abs(summary.sample_cov() - exact) / summary.standard_error(exact)
        iu = np.triu_indices(z.shape[0])
        zmax = float(np.max(z))
        worst = max(worst, zmax)
        inside_2se += int(np.sum(z[iu] <= 2.0))
        entries += len(iu[0])
        if zmax > 4.0:
            ok = False
    share = inside_2se / entries
    elapsed = time.time() - start
    _report(
        12,
        "Monte Carlo oracle, 20 configs x 1e6 samples within 4 SE",
        ok and elapsed < 600 and share >= 0.95,
        f"worst z={worst:.2f} within-2SE={share:.3f} elapsed={elapsed:.0f}s",
    )


def test_criterion_13_parameter_reduction_invariance():
    rng = random.Random(20240817)
    checked = 0
    for d in (1, 2):
        t_max = 6
        for _ in range(5):
            eps = Fraction(rng.randint(1, 12), 4)
            mu0 = Fraction(rng.randint(-6, 6), 2)
            s0 = Fraction(rng.randint(1, 12), 3)
            alphas = tuple(
                Fraction(rng.randint(1, 12), 10 * i) for i in range(1, d + 2)
            )
            t = rng.randint(1, t_max)
            general = ModelSpec.finite(d, alphas, epsilon=eps, mu0=mu0, sigma0_sq=s0)
            norm = ModelSpec.finite(d, alphas)
            s_gen = optimal_linear(finite_layer_covariance(general, t)).ratio_sq
            s_norm = optimal_linear(finite_layer_covariance(norm, t)).ratio_sq
            assert s0**2 / (eps**2 * s_gen) - s0 / eps**2 == 1 / s_norm - 1
            checked += 1
    _report(
        13,
        "nuisance parameters cancel in the normalized functional",
        checked == 10,
        f"instances={checked}",
    )
