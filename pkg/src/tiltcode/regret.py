"""Regret and redundancy accounting for products of tilted Stirling-ratio codes.

All values are in bits.  The regret of ``Q_a`` on a count vector is the
log-ratio between the maximized Poisson likelihood ``prod M(N_j)`` and
``Q_a(N)``; it depends on the counts only through their total.
"""
from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy import integrate, special, stats

from .errors import InstanceTooLargeError
from .stirling import (
    LOG2E,
    TILT_FLOOR,
    build_tilted,
    ln_stirling_ratio,
    ln_stirling_ratio_array,
    solve_tilt,
)

SMALL_M_RATIO = 0.1
LARGE_M_RATIO = 0.1


@dataclass(frozen=True)
class CountVector:
    counts: np.ndarray
    m: int = field(init=False)
    total: int = field(init=False)

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if c.size and c.min() < 0:
            raise ValueError("counts must be nonnegative")
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "m", int(c.size))
        object.__setattr__(self, "total", int(c.sum()))

    @classmethod
    def from_tokens(cls, tokens, m):
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.size and (tokens.min() < 0 or tokens.max() >= m):
            raise ValueError("token outside the alphabet")
        return cls(np.bincount(tokens, minlength=m))


def _as_counts(counts):
    return counts if isinstance(counts, CountVector) else CountVector(counts)


@dataclass(frozen=True)
class RegretReport:
    """Regret with its analytic main term and remainder band.

    The band is ``None`` when the regime has no closed-form band.
    """

    regret_bits: float
    main_term_bits: float
    remainder_lo_bits: float | None
    remainder_hi_bits: float | None
    regime: str
    a_star: float = float("nan")
    b: float = 0.0

    @property
    def has_band(self):
        return self.remainder_lo_bits is not None and self.remainder_hi_bits is not None

    def band_holds(self, slack=0.0):
        if not self.has_band:
            return None
        r = self.regret_bits - self.main_term_bits
        return self.remainder_lo_bits - slack <= r <= self.remainder_hi_bits + slack


def regret_fixed_tilt(m, counts, a):
    """a N log e + m log C_a for the product code Q_a."""
    cv = _as_counts(counts)
    if cv.m != m:
        raise ValueError(f"count vector has {cv.m} symbols, expected {m}")
    d = build_tilted(a)
    return a * cv.total * LOG2E + m * d.log_C_a


def direct_regret(counts, a):
    """log2 prod M(N_j) / prod P_a(N_j), summing per-symbol log-ratios."""
    cv = _as_counts(counts)
    d = build_tilted(a)
    c = cv.counts
    ln_m = ln_stirling_ratio_array(c)
    return float(np.sum(ln_m - d.logpmf(c))) * LOG2E


def small_m_d1(m, n):
    """Concrete d_1 from the lower bound on a*; requires m/(2n) < 1."""
    at = m / (2.0 * n)
    if at >= 1.0:
        return None
    cube = at ** (1.0 / 3.0)
    r = cube / (12.0 * (1.0 - cube))
    return 1.0 - 1.0 / ((1.0 + math.sqrt(2.0 * at)) * math.exp(r) + 4.0 / (3.0 * math.sqrt(math.pi)) * at)


def large_m_d2(m, n):
    x = n / m
    if x >= 1.0:
        return None
    return 3.0 * x + 13.5 * x * x / (1.0 - x)


def large_m_d3(m, n):
    gap = m - n * math.e
    if gap <= 0.0:
        raise ValueError("d3 is undefined unless m > n e")
    return (n * math.e) ** 2 / (2.0 * math.sqrt(math.pi) * m * gap)


def small_m_band(m, n):
    """(main, lo, hi) for the m << n regime."""
    main = m / 2.0 * math.log2(n * math.e / m)
    hi = m * math.log2(1.0 + math.sqrt(m / n))
    d1 = small_m_d1(m, n)
    lo = None if d1 is None else -d1 * m / 2.0 * LOG2E
    return main, lo, hi


def large_m_band(m, n):
    """(main, lo, hi) for the n << m regime."""
    x = n / m
    main = n * math.log2(m / (n * math.e))
    d3 = large_m_d3(m, n)
    hi = m * math.log2(1.0 + x + d3)
    d2 = large_m_d2(m, n)
    inner = None if d2 is None else 1.0 + (1.0 - d2) * x
    lo = m * math.log2(inner) if inner is not None and inner > 0.0 else None
    return main, lo, hi


def classify_regime(m, n):
    if m / n <= SMALL_M_RATIO:
        return "small_m"
    if n * math.e / m <= LARGE_M_RATIO:
        return "large_m"
    return "linear"


def regret_optimal(m, n, regime=None):
    """R_{m,n} at the optimal tilt, with the regime's main term and band.

    >>> r = regret_optimal(10, 100000)
    >>> r.regime, r.band_holds()
    ('small_m', True)
    """
    m = int(m)
    if m < 1 or n < 1:
        raise ValueError("need m >= 1 and n >= 1")
    sol = solve_tilt(m, n)
    d = build_tilted(sol.a_star)
    R = sol.a_star * n * LOG2E + m * d.log_C_a
    regime = regime or classify_regime(m, n)
    if regime == "small_m":
        main, lo, hi = small_m_band(m, n)
    elif regime == "large_m":
        main, lo, hi = large_m_band(m, n)
    elif regime == "linear":
        main, lo, hi = R, None, None
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return RegretReport(R, main, lo, hi, regime, a_star=sol.a_star)


def multinomial_regret_upper(m, n):
    """Upper bound on the multinomial regret of Q_{a*}: R_{m,n} + 0.5 log2(2 pi n)."""
    return regret_optimal(m, n).regret_bits + 0.5 * math.log2(2.0 * math.pi * n)


# ---------------------------------------------------------------- two tilts


@dataclass(frozen=True)
class PartitionSpec:
    """First ``L`` symbols frequent; the rest carry a fraction ``f`` of the total."""

    L: int
    f: float

    def tail_total(self, n):
        t = n * self.f
        r = round(t)
        return r if abs(t - r) <= 1e-9 * max(1.0, abs(t)) else t


@dataclass(frozen=True)
class _Part:
    regret_bits: float
    tilt: float


def _part(size, total):
    """Optimal single-tilt code on ``size`` symbols carrying ``total`` counts."""
    if size == 0 or total == 0:
        # all counts zero: letting the tilt grow drives the regret to 0
        return _Part(0.0, math.inf)
    sol = solve_tilt(size, total)
    d = build_tilted(sol.a_star)
    return _Part(sol.a_star * total * LOG2E + size * d.log_C_a, sol.a_star)


def two_tilt_regret(m, n, spec):
    """Regret of the two-tilt code Q_{a,b} on S_{m,n,f,L}.

    Head symbols use tilt a, tail symbols a + b; each tilt solves its own
    moment condition.
    """
    m = int(m)
    L = int(spec.L)
    nf = spec.tail_total(n)
    if not 0 <= L <= m:
        raise ValueError("L must lie in 0..m")
    if not 0 <= nf <= n:
        raise ValueError("tail total must lie in 0..n")
    if L == 0 and nf < n:
        raise ValueError("empty head cannot carry counts")
    if L == m and nf > 0:
        raise ValueError("empty tail cannot carry counts")
    head_total = n - nf
    head = _part(L, head_total)
    tail = _part(m - L, nf)

    main = 0.0
    lo, hi = 0.0, 0.0
    if L and head_total:
        hm, hlo, hhi = small_m_band(L, head_total)
        main += hm
        lo = None if hlo is None else lo + hlo
        hi += hhi
    if m - L and nf:
        main += nf * math.log2((m - L) / (nf * math.e))
        try:
            _, tlo, thi = large_m_band(m - L, nf)
        except ValueError:
            tlo = thi = None
        lo = None if (lo is None or tlo is None) else lo + tlo
        hi = None if (hi is None or thi is None) else hi + thi
    b = tail.tilt - head.tilt if math.isfinite(tail.tilt) and math.isfinite(head.tilt) else float("nan")
    R = head.regret_bits + tail.regret_bits
    return RegretReport(R, main, lo, hi, "partitioned", a_star=head.tilt, b=b)


def two_tilt_direct_regret(counts, L, a_head, a_tail):
    """Direct log-ratio regret of Q_{a,b} on a count vector (tails at tilt a_tail)."""
    cv = _as_counts(counts)
    c = cv.counts
    total = 0.0
    for part, a in ((c[:L], a_head), (c[L:], a_tail)):
        if part.size == 0:
            continue
        if not math.isfinite(a):
            if part.sum():
                return math.inf
            continue
        total += direct_regret(part, a)
    return total


@dataclass(frozen=True)
class EmpiricalPartition:
    L: int
    tail_total: int
    code_regret_bits: float
    L_bits: float
    subset_bits: float

    @property
    def total_bits(self):
        return self.code_regret_bits + self.L_bits + self.subset_bits


def empirical_two_tilt(counts, L):
    """Two-tilt regret with the empirical tail fraction and the description of L and the subset.

    Counts are sorted descending; describing ``L`` costs log2(m+1) bits and
    the identity of the L largest symbols log2 C(m, L) bits.
    """
    cv = _as_counts(counts)
    m, n = cv.m, cv.total
    c = np.sort(cv.counts)[::-1]
    nf = int(c[L:].sum())
    if n == 0:
        code = 0.0
    else:
        code = two_tilt_regret(m, n, PartitionSpec(L, nf / n)).regret_bits
    subset = (special.gammaln(m + 1) - special.gammaln(L + 1) - special.gammaln(m - L + 1)) * LOG2E
    return EmpiricalPartition(L, nf, code, math.log2(m + 1), float(subset))


def sweep_L(counts, Ls=None):
    """Empirical two-tilt totals over the candidate L values; returns (rows, best)."""
    cv = _as_counts(counts)
    Ls = range(0, cv.m + 1) if Ls is None else Ls
    rows = [empirical_two_tilt(cv, L) for L in Ls]
    best = min(rows, key=lambda r: (r.total_bits, r.L))
    return rows, best


# ---------------------------------------------------------------- envelope


@dataclass(frozen=True)
class EnvelopeSpec:
    """Nonincreasing envelope f(1..m) on symbol probabilities."""

    f: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=np.float64).reshape(-1)
        if f.size == 0:
            raise ValueError("envelope needs at least one symbol")
        if np.any(f < 0) or np.any(np.diff(f) > 0):
            raise ValueError("envelope must be nonnegative and nonincreasing")
        f.flags.writeable = False
        object.__setattr__(self, "f", f)

    @property
    def m(self):
        return int(self.f.size)

    def tail_sum(self, L):
        """F-bar(L): mass of the envelope beyond rank L."""
        return float(self.f[L:].sum())

    def tail_sums(self):
        """F-bar(L) for L = 0..m."""
        rev = np.cumsum(self.f[::-1])[::-1]
        return np.append(rev, 0.0)

    @classmethod
    def powerlaw(cls, c, alpha, m):
        j = np.arange(1, m + 1, dtype=np.float64)
        return cls(np.minimum(1.0, c * j ** (-alpha)))


def envelope_log_normalizer(a, cap):
    """ln C_{a,cap}: head of the tilted Stirling ratio up to cap, capped-Poisson tail beyond."""
    if a <= 0:
        raise ValueError("tilt must be positive")
    if cap < 0:
        raise ValueError("cap must be nonnegative")
    d = build_tilted(a)
    kc = math.floor(cap)
    if kc >= d.K:
        # the cap never binds within the certified support
        head = d.C_a
    else:
        ks = np.arange(kc + 1)
        head = float(np.sum(np.exp(ln_stirling_ratio_array(ks) - a * ks)))
    if cap == 0.0:
        return math.log(head)
    # sum_{k > kc} cap^k e^{-cap} e^{-ak} / k! = e^{-cap(1 - e^{-a})} P(Poisson(cap e^{-a}) > kc)
    mu = cap * math.exp(-a)
    ln_tail = -cap * (-math.expm1(-a)) + stats.poisson.logsf(kc, mu)
    return float(np.logaddexp(math.log(head), ln_tail))


def envelope_tilted_pmf(a, cap, k):
    """Tilted pmf of the envelope code for a symbol whose Poisson mean is capped at ``cap``."""
    ln_c = envelope_log_normalizer(a, cap)
    return math.exp(_envelope_ln_weight(a, cap, k) - ln_c)


def _envelope_ln_weight(a, cap, k):
    if k <= cap:
        return ln_stirling_ratio(k) - a * k
    if cap == 0.0:
        return -math.inf
    return k * math.log(cap) - cap - math.lgamma(k + 1.0) - a * k


def envelope_max_loglik(cap, k):
    """ln of the capped maximum likelihood max_{lambda <= cap} Poisson(k; lambda)."""
    if k <= cap:
        return ln_stirling_ratio(k)
    if cap == 0.0:
        return -math.inf
    return k * math.log(cap) - cap - math.lgamma(k + 1.0)


def envelope_bound_terms(env, n):
    """Bound value for every L = 1..m (NaN where 1 - F-bar(L) <= 0)."""
    Fb = env.tail_sums()[1:]
    L = np.arange(1, env.m + 1, dtype=np.float64)
    head = 1.0 - Fb
    out = np.full(env.m, np.nan)
    ok = head > 0
    Lk, hk, Fk = L[ok], head[ok], Fb[ok]
    main = Lk / 2.0 * np.log2(n * hk / Lk) + n * Fk * LOG2E
    r3 = Lk / (2.0 * hk) * LOG2E + Lk * np.log2(1.0 + np.sqrt(Lk / (n * hk)))
    out[ok] = main + r3
    return out


def envelope_regret_upper(env, n):
    """Minimum over L of the envelope regret bound; returns (bits, L_opt)."""
    vals = envelope_bound_terms(env, n)
    if np.all(np.isnan(vals)):
        raise ValueError("no L has 1 - F-bar(L) > 0")
    i = int(np.nanargmin(vals))
    return float(vals[i]), i + 1


def envelope_tilt(env, n, L):
    """The tilt a = L / (2 n (1 - F-bar(L))) achieving the bound at L."""
    return L / (2.0 * n * (1.0 - env.tail_sum(L)))


def envelope_code_regret(env, counts, a):
    """Regret of the envelope-tilted product code on ``counts``.

    Equals a N log e + sum_j log C_{a, n f(j)} for any counts; computed here
    from the per-symbol log-ratios.
    """
    cv = _as_counts(counts)
    n = cv.total
    total = 0.0
    caps = n * env.f
    cache = {}
    for k, cap in zip(cv.counts.tolist(), caps.tolist()):
        if cap not in cache:
            cache[cap] = envelope_log_normalizer(a, cap)
        ln_c = cache[cap]
        total += envelope_max_loglik(cap, k) - (_envelope_ln_weight(a, cap, k) - ln_c)
    return total * LOG2E


# ---------------------------------------------------------------- mixture


def _ln_q_of_a(a, N, m):
    d = build_tilted(a)
    return -a * N - m * d.ln_C_a, d


def mixture_log_prob(counts, upper=None, epsrel=1e-11):
    """log2 of the mixture of Q_a under a uniform prior on (0, upper], default upper = m/2.

    The integrand is rescaled by its peak and integrated panel by panel; the
    sliver below the tilt floor is bounded and added.
    """
    cv = _as_counts(counts)
    m, N = cv.m, cv.total
    upper = m / 2.0 if upper is None else float(upper)
    ln_m = float(np.sum(ln_stirling_ratio_array(cv.counts)))
    lo = TILT_FLOOR

    if N > 0:
        sol = solve_tilt(m, N)
        peak = min(sol.a_star, upper)
        d = build_tilted(peak)
        var = max(d.second_moment - d.mean ** 2, 1e-300)
        width = 1.0 / math.sqrt(m * var)
    else:
        peak, width = upper, upper
    ln_peak, _ = _ln_q_of_a(peak, N, m)

    pts = set(np.geomspace(lo, upper, 24).tolist())
    for s in (-12, -6, -3, -1, 0, 1, 3, 6, 12):
        x = peak + s * width
        if lo < x < upper:
            pts.add(x)
    pts = sorted(pts | {lo, upper})

    def g(a):
        return math.exp(_ln_q_of_a(a, N, m)[0] - ln_peak)

    total = 0.0
    for x0, x1 in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(g, x0, x1, epsabs=0.0, epsrel=epsrel, limit=200)
        total += val
    # below the floor: Q_a <= (2a)^{m/2} e^{-aN} since C_a > 1/sqrt(2a); integrate the bound
    sliver = (2.0 * lo) ** (m / 2.0) * lo / (m / 2.0 + 1.0)
    total += sliver * math.exp(-ln_peak) if ln_peak > -700 else 0.0
    ln_mix = ln_m + ln_peak + math.log(total) - math.log(upper)
    return ln_mix * LOG2E


def mixture_pmf(counts, grid=None):
    """Alias taking an optional quadrature spec: a dict with ``upper`` and ``epsrel``."""
    grid = grid or {}
    return mixture_log_prob(counts, upper=grid.get("upper"), epsrel=grid.get("epsrel", 1e-11))


def mixture_regret(counts):
    """log2 prod M(N_j) minus the mixture log-probability."""
    cv = _as_counts(counts)
    ln_m = float(np.sum(ln_stirling_ratio_array(cv.counts)))
    return ln_m * LOG2E - mixture_log_prob(cv)


def mixture_regret_bound(m, N):
    """R_{m,N} + 1.5 log2 m + 2 log2 C_{a*_N}, the approximate overhead bound of the mixture."""
    rep = regret_optimal(m, N)
    d = build_tilted(rep.a_star)
    return rep.regret_bits + 1.5 * math.log2(m) + 2.0 * d.log_C_a


# ---------------------------------------------------------------- redundancy


def redundancy_main_term(m, lambda_sum, a, lambdas=None):
    """Main redundancy term and its error band, both in bits.

    Returns ``(main, (lo, hi))`` where the redundancy lies in
    ``[main + lo, main + hi]``.  ``lambdas`` defaults to equal means.
    """
    if a <= 0 or lambda_sum <= 0:
        raise ValueError("need a > 0 and lambda_sum > 0")
    lam = np.full(m, lambda_sum / m) if lambdas is None else np.asarray(lambdas, dtype=np.float64)
    if lam.size != m:
        raise ValueError("need one mean per symbol")
    if np.any(lam < 1.0):
        warnings.warn("some means are below 1; the redundancy band is loose", stacklevel=2)
    d = build_tilted(a)
    main = (-m / 2.0 + a * lambda_sum) * LOG2E + m * d.log_C_a
    lo = -float(np.sum(1.0 / (3.0 * lam ** 2) + 5.0 / (6.0 * lam))) * LOG2E
    hi = min(float(np.sum(1.0 / (6.0 * lam))), m / 2.0) * LOG2E
    return main, (lo, hi)


def redundancy_monte_carlo(lambdas, a, draws, rng):
    """Sample mean and standard error of log2 P_lambda(N) / Q_a(N) over Poisson draws."""
    lam = np.asarray(lambdas, dtype=np.float64)
    d = build_tilted(a)
    N = rng.poisson(lam, size=(draws, lam.size))
    ln_p = N * np.log(lam) - lam - special.gammaln(N + 1.0)
    ln_q = d.logpmf(N)
    x = np.sum(ln_p - ln_q, axis=1) * LOG2E
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(draws))


# ---------------------------------------------------------------- information projection


PYTHAGOREAN_MAX_M = 6
PYTHAGOREAN_MAX_N = 12


def pythagorean_identity_check(m, n, a_star=None):
    """Return (D(M_cond||M), D(M_cond||Q_a), D(Q_a||M)) in bits.

    The first two are summed over S_{m,n}; the third over all counts from
    the per-symbol pmf.  With a = a*, the first equals the sum of the others.
    """
    from .nml import compositions

    if m > PYTHAGOREAN_MAX_M or n > PYTHAGOREAN_MAX_N:
        raise InstanceTooLargeError(f"(m={m}, n={n}) is too large to enumerate")
    a = solve_tilt(m, n).a_star if a_star is None else a_star
    d = build_tilted(a)
    comps = compositions(n, m)
    ln_w = ln_stirling_ratio_array(comps).sum(axis=1)
    ln_ms = float(special.logsumexp(ln_w))
    p_cond = np.exp(ln_w - ln_ms)
    ln_q = d.logpmf(comps).sum(axis=1)
    lhs = float(np.sum(p_cond * (ln_w - ln_ms - ln_w))) * LOG2E
    rhs1 = float(np.sum(p_cond * (ln_w - ln_ms - ln_q))) * LOG2E
    k = np.arange(d.K + 1)
    lp = d.logpmf(k)
    per_symbol = float(np.sum(np.exp(lp) * (lp - ln_stirling_ratio_array(k))))
    rhs2 = m * per_symbol * LOG2E
    return lhs, rhs1, rhs2


def projection_divergence(m, n, a):
    """D(Q_a || M) in closed form: -(a E[N] log e + m log C_a)."""
    d = build_tilted(a)
    return -(a * m * d.mean * LOG2E + m * d.log_C_a)
