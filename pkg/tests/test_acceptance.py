"""Acceptance gate: one check per criterion, each at its stated tolerance.

Run under pytest for the gate, or directly (``python tests/test_acceptance.py``)
for one PASS/FAIL line per criterion.
"""
import math
import sys

import numpy as np
import pytest
from scipy import optimize

from tiltcode import codec, nml, predictor, regret, synthetic
from tiltcode.regret import EnvelopeSpec, PartitionSpec
from tiltcode.stirling import LOG2E, build_tilted, solve_tilt

try:
    from conftest import ACCEPTANCE
except ImportError:  # run as a script from elsewhere
    ACCEPTANCE = {}

SEED = 20240611


def record(key, ok, detail):
    ACCEPTANCE[key] = (bool(ok), detail)
    return bool(ok), detail


# ---------------------------------------------------------------- 1


def check_regret_identity():
    rng = np.random.default_rng(SEED + 1)
    worst = 0.0
    for _ in range(1000):
        m = int(rng.integers(1, 11))
        N = int(rng.integers(0, 51))
        a = float(rng.uniform(0.05, 5.0))
        counts = rng.multinomial(N, np.full(m, 1.0 / m))
        diff = abs(regret.regret_fixed_tilt(m, counts, a) - regret.direct_regret(counts, a))
        worst = max(worst, diff)
    return record(1, worst <= 1e-10, f"max |formula - direct| = {worst:.3e} bits over 1000 instances")


# ---------------------------------------------------------------- 2


def check_optimal_tilt():
    grid = np.geomspace(1e-4, 20.0, 10_000)
    log_c = np.array([build_tilted(a).log_C_a for a in grid])
    worst_gain = -math.inf
    for m, n in [(2, 10), (5, 5), (10, 3), (50, 50), (100, 10), (10, 1000)]:
        a = solve_tilt(m, n).a_star
        R_star = a * n * LOG2E + m * build_tilted(a).log_C_a
        R_grid = grid * n * LOG2E + m * log_c
        worst_gain = max(worst_gain, R_star - float(R_grid.min()))
    return record(2, worst_gain <= 1e-6, f"max (R(a*) - grid min) = {worst_gain:.3e} bits")


# ---------------------------------------------------------------- 3


def check_normalizer_and_mean_bounds():
    bad = []
    for a in np.geomspace(1e-4, 20.0, 200):
        d = build_tilted(a)
        C, ex, EN = d.C_a, d.excess, d.mean
        s = math.sqrt(2 * a)
        ok = (
            max(1.0, 1 - math.sqrt(2 / math.pi) + 1 / s) < C < 1 + 1 / s
            # second pair compared on C_a - 1 so it stays resolvable when C_a is near 1
            and math.exp(-(a + 1)) < ex < math.exp(-(a + 1)) + math.exp(-2 * a) / (2 * math.sqrt(math.pi) * -math.expm1(-a))
            and math.exp(-(a + 1)) < EN < 1 / (2 * a)
        )
        if not ok:
            bad.append(float(a))
    return record(3, not bad, f"{200 - len(bad)}/200 tilts satisfy all six strict bounds")


# ---------------------------------------------------------------- 4


def check_bands():
    out = []
    for m, n, regime in [(10, 10 ** 5, "small_m"), (10 ** 5, 10, "large_m")]:
        r = regret.regret_optimal(m, n, regime)
        rem = r.regret_bits - r.main_term_bits
        out.append((r.band_holds(), f"{regime}: {r.remainder_lo_bits:.4f} <= {rem:.4f} <= {r.remainder_hi_bits:.4f}"))
    return record(4, all(o for o, _ in out), "; ".join(s for _, s in out))


# ---------------------------------------------------------------- 5


def check_nml_identities():
    worst = dict(dp=0.0, fac=0.0, cond=0.0, gap_id=0.0)
    min_gap = math.inf
    for m in range(1, 5):
        for n in range(0, 11):
            worst["dp"] = max(worst["dp"],
                              abs(nml.poisson_nml_normalizer(m, n) - nml.enumerate_poisson_normalizer(m, n)),
                              abs(nml.multinomial_shtarkov(m, n) - nml.enumerate_multinomial_shtarkov(m, n)))
            worst["fac"] = max(worst["fac"], abs(nml.shtarkov_table(m, n).factorization_gap))
            if n == 0:
                continue
            for a in (0.1, 1.0, 5.0):
                worst["cond"] = max(worst["cond"], nml.conditional_tilted_equals_nml(m, n, a))
            lhs, rhs, gap = nml.minimax_gap_identity(m, n)
            worst["gap_id"] = max(worst["gap_id"], abs(lhs - rhs))
            if m > 1:
                min_gap = min(min_gap, gap)
    e_mul = abs(nml.multinomial_shtarkov(2, 2) - math.log2(2.5))
    e_poi = abs(2.0 ** nml.poisson_nml_normalizer(2, 2) - 5 * math.exp(-2))
    ok = (worst["dp"] <= 1e-12 and worst["fac"] <= 1e-10 and worst["cond"] <= 1e-12
          and worst["gap_id"] <= 1e-10 and min_gap > 0 and e_mul <= 1e-10 and e_poi <= 1e-10)
    detail = (f"dp {worst['dp']:.1e}, factorization {worst['fac']:.1e}, conditional {worst['cond']:.1e}, "
              f"gap identity {worst['gap_id']:.1e}, min gap {min_gap:.3e}, (2,2) values {e_mul:.1e}/{e_poi:.1e}")
    return record(5, ok, detail)


# ---------------------------------------------------------------- 6


def check_pythagorean():
    worst = 0.0
    for m, n in [(2, 2), (3, 4), (4, 6)]:
        lhs, r1, r2 = regret.pythagorean_identity_check(m, n)
        worst = max(worst, abs(lhs - (r1 + r2)))
    return record(6, worst <= 1e-10, f"max |lhs - rhs| = {worst:.3e} bits")


# ---------------------------------------------------------------- 7


def _part_regret_oracle(size, total):
    """Minimum over a of a*total*log e + size*log C_a by bounded scalar minimization in log a."""
    if size == 0 or total == 0:
        return 0.0

    def f(t):
        a = math.exp(t)
        return a * total * LOG2E + size * build_tilted(a).log_C_a

    hint = math.log(solve_tilt(size, total).a_star)
    res = optimize.minimize_scalar(f, bounds=(hint - 1.0, hint + 1.0), method="bounded",
                                   options={"xatol": 1e-10})
    return float(res.fun)


def check_two_tilt_additivity():
    rng = np.random.default_rng(SEED + 7)
    worst = 0.0
    for _ in range(100):
        m = int(rng.integers(2, 300))
        n = int(rng.integers(2, 2000))
        L = int(rng.integers(1, m))
        nf = int(rng.integers(1, n))
        spec = PartitionSpec(L, nf / n)
        r = regret.two_tilt_regret(m, n, spec)
        parts = _part_regret_oracle(L, n - nf) + _part_regret_oracle(m - L, nf)
        worst = max(worst, abs(r.regret_bits - parts))
    return record(7, worst <= 1e-10, f"max |two-tilt - sum of parts| = {worst:.3e} bits over 100 partitions")


# ---------------------------------------------------------------- 8


def check_envelope():
    rng = np.random.default_rng(SEED + 8)
    cap_bad = 0
    for _ in range(50):
        a = float(np.exp(rng.uniform(math.log(0.01), math.log(10.0))))
        cap = float(rng.choice([rng.uniform(0.0, 2.0), rng.uniform(0.0, 60.0)]))
        C = math.exp(regret.envelope_log_normalizer(a, cap))
        if not (C <= 1 + 1 / math.sqrt(2 * a) and C <= math.exp(cap)):
            cap_bad += 1
    dom_bad = 0
    worst_margin = math.inf
    for i in range(20):
        m = int(rng.integers(20, 400))
        n = int(rng.integers(20, 3000))
        alpha = float(rng.uniform(1.2, 3.0))
        env = EnvelopeSpec.powerlaw(1.0, alpha, m)  # sum f >= 1, so theta = f / sum f respects f
        theta = env.f / env.f.sum()
        counts = rng.multinomial(n, theta)
        bound, L = regret.envelope_regret_upper(env, n)
        code = regret.envelope_code_regret(env, counts, regret.envelope_tilt(env, n, L))
        worst_margin = min(worst_margin, bound - code)
        if code > bound:
            dom_bad += 1
    ok = cap_bad == 0 and dom_bad == 0
    return record(8, ok, f"cap violations {cap_bad}/50; bound below code regret {dom_bad}/20 "
                         f"(smallest margin {worst_margin:.3f} bits)")


# ---------------------------------------------------------------- 9


def check_mixture():
    rng = np.random.default_rng(SEED + 9)
    rows = []
    for m, N in [(5, 3), (20, 15), (100, 80)]:
        vecs = [np.eye(m, dtype=np.int64)[0] * N]
        spread = np.zeros(m, dtype=np.int64)
        spread[:N] = 1  # N < m in every case: all-distinct counts
        vecs.append(spread)
        for _ in range(3):
            vecs.append(rng.multinomial(N, np.full(m, 1.0 / m)))
        worst = max(regret.mixture_regret(v) for v in vecs)
        bound = regret.mixture_regret_bound(m, N) + 2.0
        rows.append((worst <= bound, f"({m},{N}) {worst:.3f} <= {bound:.3f}"))
    return record(9, all(o for o, _ in rows), "; ".join(s for _, s in rows))


# ---------------------------------------------------------------- 10


def check_redundancy():
    m, lam = 10, 100.0
    a = solve_tilt(10, 1000).a_star
    lambdas = np.full(m, lam)
    mean, se = regret.redundancy_monte_carlo(lambdas, a, 100_000, np.random.default_rng(SEED + 10))
    main, (lo, hi) = regret.redundancy_main_term(m, m * lam, a, lambdas)
    lo_b, hi_b = main + lo - 3 * se, main + hi + 3 * se
    return record(10, lo_b <= mean <= hi_b, f"MC {mean:.4f} +- {se:.4f} in [{lo_b:.4f}, {hi_b:.4f}]")


# ---------------------------------------------------------------- 11


def check_codec():
    rng = np.random.default_rng(SEED + 11)
    cases = [(7, np.zeros(0, dtype=np.int64))]
    for m in (1, 2, 100, 10 ** 4):
        for N in (0, 1, 1000, 10 ** 5):
            for dist in ("uniform", "zipf", "poisson"):
                seed = int(rng.integers(1 << 30))
                if dist == "uniform":
                    tok = synthetic.uniform_tokens(m, N, seed=seed)
                elif dist == "zipf":
                    tok = synthetic.zipf_tokens(float(rng.uniform(0.8, 2.0)), m, N, seed=seed)
                else:
                    c = synthetic.poisson_counts(np.full(m, max(N, 1) / m), seed=seed)
                    tok = rng.permutation(np.repeat(np.arange(m), c))
                cases.append((m, tok))
    # escape: one count beyond the table of the chosen model
    m = 1000
    model = codec.quantized_model(codec.choose_tilt_index(m, 1000))
    counts = np.ones(m, dtype=np.int64)
    counts[17] = model.K_max + 7
    cases.append((m, rng.permutation(np.repeat(np.arange(m), counts))))

    fails, escapes, worst_slack = 0, 0, math.inf
    for m, tok in cases:
        stream, rep = codec.encode(tok, m)
        blob = stream.to_bytes()
        dec = codec.decompress(blob)
        exact = np.array_equal(dec.tokens, tok) and dec.m == m
        over = rep.achieved_bits - rep.ideal_bits
        allow = 64 + 0.01 * rep.ideal_bits + max(0.0, rep.escape_overage_bits)
        ledger_ok = sum(b for _, b in rep.ledger()[:4]) == 8 * len(blob)
        worst_slack = min(worst_slack, allow - over)
        escapes += rep.escapes
        if not (exact and 0 <= over <= allow and ledger_ok):
            fails += 1
    ok = fails == 0 and escapes > 0
    return record(11, ok, f"{len(cases) - fails}/{len(cases)} runs exact and in budget; "
                          f"{escapes} escaped counts; smallest budget slack {worst_slack:.2f} bits")


# ---------------------------------------------------------------- 12


def check_predictor():
    parts = {}
    p = predictor.snml_predict(predictor.PredictorState(2, counts=[1, 0]))
    parts["(0.8,0.2)"] = bool(np.max(np.abs(p - [0.8, 0.2])) < 1e-12)
    p = predictor.snml_predict(predictor.PredictorState(6))
    parts["uniform"] = bool(np.max(np.abs(p - 1 / 6)) < 1e-12)
    rng = np.random.default_rng(SEED + 12)
    sums_ok, b0_ok = True, True
    for _ in range(500):
        m = int(rng.integers(1, 40))
        counts = rng.integers(0, 1000, m) * rng.integers(0, 2, m)
        L = int(rng.integers(0, m + 1))
        b = float(rng.uniform(0, 6))
        s = predictor.PredictorState(m, L=L, b=b, counts=counts)
        for q in (predictor.snml_predict(s), predictor.two_tilt_predict(s)):
            sums_ok &= abs(q.sum() - 1) <= 1e-12
        s0 = predictor.PredictorState(m, L=L, b=0.0, counts=counts)
        b0_ok &= bool(np.array_equal(predictor.two_tilt_predict(s0), predictor.snml_predict(s0)))
    parts["sums"] = bool(sums_ok)
    parts["b=0"] = b0_ok
    disc = {n: predictor.horizon_dependence_demo(2, n) for n in (1, 2, 3)}
    for n, v in disc.items():
        parts[f"horizon n={n}"] = v > 0
    detail = ", ".join(f"{k} {'ok' if v else 'FAIL'}" for k, v in parts.items())
    detail += " | discrepancies " + ", ".join(f"{n}: {v:.3e}" for n, v in disc.items())
    return record(12, all(parts.values()), detail)


# ---------------------------------------------------------------- 13


def check_fig1():
    r = np.geomspace(0.01, 100.0, 200)
    a = np.array([solve_tilt(x, 1.0).a_star for x in r])
    inc = bool(np.all(np.diff(a) > 0))
    below = bool(np.all(a <= r / 2))
    return record(13, inc and below, f"strictly increasing: {inc}; a* <= (m/n)/2: {below}; "
                                     f"a* from {a[0]:.4g} to {a[-1]:.4g}")


# ---------------------------------------------------------------- 14


def check_skewness():
    m = n = 10 ** 4
    best = {}
    for s in (2.0, 1.2):
        counts = synthetic.zipf_counts(s, m, n, seed=SEED)
        _, b = regret.sweep_L(counts)
        best[s] = b.L
    return record(14, best[2.0] <= best[1.2], f"argmin L: s=2 -> {best[2.0]}, s=1.2 -> {best[1.2]}")


CHECKS = {
    1: check_regret_identity,
    2: check_optimal_tilt,
    3: check_normalizer_and_mean_bounds,
    4: check_bands,
    5: check_nml_identities,
    6: check_pythagorean,
    7: check_two_tilt_additivity,
    8: check_envelope,
    9: check_mixture,
    10: check_redundancy,
    11: check_codec,
    12: check_predictor,
    13: check_fig1,
    14: check_skewness,
}


@pytest.mark.parametrize("key", sorted(CHECKS), ids=lambda k: f"criterion_{k:02d}")
def test_criterion(key):
    ok, detail = CHECKS[key]()
    assert ok, detail


def main():
    failed = 0
    for key in sorted(CHECKS):
        ok, detail = CHECKS[key]()
        failed += not ok
        print(f"criterion {key:2d}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
