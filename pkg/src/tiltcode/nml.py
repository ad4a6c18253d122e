"""Exact Shtarkov normalizers and conditionals on small instances.

Dynamic programming over symbols is the shipped path; full enumeration of
compositions is kept as an independent oracle.
"""
from dataclasses import dataclass
from itertools import combinations
import math

import numpy as np
from scipy import special

from .errors import InstanceTooLargeError
from .stirling import LOG2E, build_tilted, ln_stirling_ratio, ln_stirling_ratio_array, solve_tilt

DP_MAX_M = 50
DP_MAX_N = 500
ENUM_MAX = 200_000


def _check_dp(m, n):
    if m < 1 or n < 0:
        raise ValueError("need m >= 1 and n >= 0")
    if m > DP_MAX_M or n > DP_MAX_N:
        raise InstanceTooLargeError(f"(m={m}, n={n}) exceeds the DP cap m <= {DP_MAX_M}, n <= {DP_MAX_N}")


def n_compositions(n, m):
    return math.comb(n + m - 1, m - 1)


def compositions(n, m):
    """All count vectors of m nonnegative parts summing to n, one per row."""
    if m < 1:
        raise ValueError("need m >= 1")
    size = n_compositions(n, m)
    if size > ENUM_MAX:
        raise InstanceTooLargeError(f"{size} compositions exceed the enumeration cap {ENUM_MAX}")
    if m == 1:
        return np.array([[n]], dtype=np.int64)
    bars = np.array(list(combinations(range(n + m - 1), m - 1)), dtype=np.int64).reshape(-1, m - 1)
    left = np.concatenate([np.full((bars.shape[0], 1), -1), bars], axis=1)
    right = np.concatenate([bars, np.full((bars.shape[0], 1), n + m - 1)], axis=1)
    return right - left - 1


def _log_convolve_power(w, m, n):
    """ln of the coefficient of x^n in (sum_k e^{w[k]} x^k)^m, by DP over symbols."""
    idx = np.arange(n + 1)
    diff = idx[:, None] - idx[None, :]  # row t, column k
    valid = diff >= 0
    shifted = np.where(valid, diff, 0)
    dp = np.full(n + 1, -np.inf)
    dp[0] = 0.0
    for _ in range(m):
        # new[t] = logsumexp_k dp[t - k] + w[k]
        terms = np.where(valid, dp[shifted] + w[None, :], -np.inf)
        dp = special.logsumexp(terms, axis=1)
    return float(dp[n])


def poisson_nml_normalizer(m, n):
    """log2 M(S_{m,n}) = log2 sum over S_{m,n} of prod M(N_j).

    >>> round(poisson_nml_normalizer(2, 2), 4)
    -0.5635
    """
    _check_dp(m, n)
    w = ln_stirling_ratio_array(np.arange(n + 1))
    return _log_convolve_power(w, m, n) * LOG2E


def multinomial_shtarkov(m, n):
    """log2 C(S_{m,n}), the multinomial Shtarkov sum.

    >>> round(multinomial_shtarkov(2, 2), 4)
    1.3219
    """
    _check_dp(m, n)
    k = np.arange(n + 1, dtype=np.float64)
    w = special.xlogy(k, k) - special.gammaln(k + 1.0)
    ln_fact = math.lgamma(n + 1.0) - (n * math.log(n) if n else 0.0)
    return (_log_convolve_power(w, m, n) + ln_fact) * LOG2E


@dataclass(frozen=True)
class ShtarkovTable:
    m: int
    n: int
    log_M_S: float
    log_C_mul: float

    @property
    def factorization_gap(self):
        """log_C_mul - (log_M_S - log2 M(n)); zero up to rounding."""
        return self.log_C_mul - (self.log_M_S - ln_stirling_ratio(self.n) * LOG2E)


def shtarkov_table(m, n):
    return ShtarkovTable(m, n, poisson_nml_normalizer(m, n), multinomial_shtarkov(m, n))


def enumerate_poisson_normalizer(m, n):
    """Oracle: log2 M(S_{m,n}) by summing over every composition."""
    comps = compositions(n, m)
    ln_w = ln_stirling_ratio_array(comps).sum(axis=1)
    return float(special.logsumexp(ln_w)) * LOG2E


def multinomial_ml_log(comps):
    """ln of the maximized multinomial probability of each count vector (rows)."""
    comps = np.asarray(comps)
    n = comps.sum(axis=1).astype(np.float64)
    c = comps.astype(np.float64)
    ln_coef = special.gammaln(n + 1.0) - special.gammaln(c + 1.0).sum(axis=1)
    ln_ml = special.xlogy(c, c).sum(axis=1) - special.xlogy(n, n)
    return ln_coef + ln_ml


def enumerate_multinomial_shtarkov(m, n):
    """Oracle: log2 C(S_{m,n}) by summing over every composition."""
    return float(special.logsumexp(multinomial_ml_log(compositions(n, m)))) * LOG2E


def multinomial_nml(m, n):
    """(compositions, NML probabilities of each count vector)."""
    comps = compositions(n, m)
    ln_q = multinomial_ml_log(comps)
    return comps, np.exp(ln_q - special.logsumexp(ln_q))


def tilted_conditional(m, n, a):
    """(compositions, Q_a(N | total = n)) for every count vector in S_{m,n}."""
    comps = compositions(n, m)
    d = build_tilted(a)
    ln_q = d.logpmf(comps).sum(axis=1)
    return comps, np.exp(ln_q - special.logsumexp(ln_q))


def conditional_tilted_equals_nml(m, n, a):
    """Largest absolute gap between Q_a conditioned on the total and multinomial NML."""
    _, q = tilted_conditional(m, n, a)
    _, nml = multinomial_nml(m, n)
    return float(np.max(np.abs(q - nml)))


def minimax_gap_identity(m, n):
    """Return (lhs, rhs, gap) in bits.

    lhs = log2 M(S_{m,n}); rhs = R(Q_{a*}) + log2 Q_{a*}(S_{m,n}) with
    Q_{a*}(S_{m,n}) summed over the slice; gap = -log2 Q_{a*}(S_{m,n}).
    """
    comps = compositions(n, m)
    lhs = float(special.logsumexp(ln_stirling_ratio_array(comps).sum(axis=1))) * LOG2E
    a = solve_tilt(m, n).a_star
    d = build_tilted(a)
    R = a * n * LOG2E + m * d.log_C_a
    log_q_s = float(special.logsumexp(d.logpmf(comps).sum(axis=1))) * LOG2E
    return lhs, R + log_q_s, -log_q_s


def enumerated_tilted_mass(m, n, a):
    """Q_a(S_{m,n}) in bits, by enumeration."""
    comps = compositions(n, m)
    return float(special.logsumexp(build_tilted(a).logpmf(comps).sum(axis=1))) * LOG2E
