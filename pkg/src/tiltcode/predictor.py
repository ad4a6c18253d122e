"""Sequential prediction from next-step NML, with an optional two-tilt discount.

The predictive weight of a symbol seen N times is (N+1)^{N+1} / N^N, kept in
log form as ln(N+1) + N ln(1 + 1/N); an unseen symbol has weight 1.
"""
from dataclasses import dataclass, field
from fractions import Fraction
import math

import numpy as np
from scipy import special

from .errors import InstanceTooLargeError, TiltcodeError
from .nml import compositions, multinomial_ml_log

HORIZON_MAX_M = 3
HORIZON_MAX_N = 5


def log_weights(counts):
    """ln((N+1)^{N+1} / N^N) per symbol, 0 for N = 0."""
    c = np.asarray(counts, dtype=np.float64)
    out = np.zeros_like(c)
    pos = c > 0
    cp = c[pos]
    out[pos] = np.log1p(cp) + cp * np.log1p(1.0 / cp)
    return out


def _normalize(lw):
    return np.exp(lw - special.logsumexp(lw))


@dataclass
class PredictorState:
    """Running counts; symbols with index >= L (zero-based) are discounted by e^{-b}."""

    m: int
    L: int = 0
    b: float = 0.0
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("alphabet size must be at least 1")
        if not 0 <= self.L <= self.m or self.b < 0:
            raise ValueError("need 0 <= L <= m and b >= 0")
        if self.counts is None:
            self.counts = np.zeros(self.m, dtype=np.int64)
        else:
            self.counts = np.array(self.counts, dtype=np.int64)
            if self.counts.size != self.m:
                raise ValueError("counts do not match the alphabet size")

    def update(self, x):
        self.counts[x] += 1

    @property
    def total(self):
        return int(self.counts.sum())


def snml_predict(state):
    """Next-symbol distribution of sequential NML; depends on the counts only.

    >>> snml_predict(PredictorState(2, counts=[1, 0])).round(3).tolist()
    [0.8, 0.2]
    """
    return _normalize(log_weights(state.counts))


def _discount(state):
    d = np.zeros(state.m)
    if state.b:
        d[state.L:] = state.b
    return d


def two_tilt_predict(state):
    """SNML weights with symbols past L discounted by e^{-b}."""
    return _normalize(log_weights(state.counts) - _discount(state))


@dataclass(frozen=True)
class LogLoss:
    total_bits: float
    per_symbol_bits: np.ndarray

    @property
    def mean_bits(self):
        return self.total_bits / self.per_symbol_bits.size if self.per_symbol_bits.size else 0.0


def _parse_rule(rule):
    if rule in (None, "snml"):
        return 0, 0.0
    if isinstance(rule, tuple) and rule[0] == "two-tilt":
        return int(rule[1]), float(rule[2])
    raise ValueError(f"unknown rule {rule!r}")


def log_loss(sequence, m, rule="snml"):
    """Cumulative log loss in bits of a prediction rule on ``sequence``.

    ``rule`` is "snml" or ("two-tilt", L, b).  Runs in O(1) per token by
    updating the normalizer incrementally.
    """
    L, b = _parse_rule(rule)
    seq = np.asarray(sequence, dtype=np.int64).reshape(-1)
    if seq.size and (seq.min() < 0 or seq.max() >= m):
        raise ValueError("symbol outside the alphabet")
    counts = np.zeros(m, dtype=np.int64)
    disc = np.zeros(m)
    disc[L:] = b
    # unseen symbols weigh e^{-disc}; keep the total in a compensated sum
    w_unseen = np.exp(-disc)
    Z = math.fsum(w_unseen.tolist())
    comp = 0.0
    out = np.empty(seq.size)
    for i, x in enumerate(seq.tolist()):
        c = int(counts[x])
        lw = 0.0 if c == 0 else math.log1p(c) + c * math.log1p(1.0 / c)
        lw -= disc[x]
        p = math.exp(lw) / Z
        if not p > 0.0:
            raise TiltcodeError(f"zero predictive probability at position {i}")
        out[i] = -math.log2(p)
        c1 = c + 1
        lw1 = math.log1p(c1) + c1 * math.log1p(1.0 / c1) - disc[x]
        delta = math.exp(lw1) - math.exp(lw)
        # Kahan update of the normalizer
        y = delta - comp
        t = Z + y
        comp = (t - Z) - y
        Z = t
        counts[x] = c1
    return LogLoss(float(math.fsum(out.tolist())), out)


def kt_log_loss(sequence, m):
    """Baseline: cumulative log loss of the add-1/2 rule."""
    seq = np.asarray(sequence, dtype=np.int64).reshape(-1)
    counts = np.zeros(m)
    out = np.empty(seq.size)
    for i, x in enumerate(seq.tolist()):
        out[i] = -math.log2((counts[x] + 0.5) / (i + m / 2.0))
        counts[x] += 1
    return LogLoss(float(math.fsum(out.tolist())), out)


# ---------------------------------------------------------------- horizon


def _seq_nml_fractions(m, n):
    """Exact NML probability of one sequence with each count vector, keyed by tuple."""
    comps = compositions(n, m)
    ml = {}
    for row in comps.tolist():
        t = tuple(row)
        p = Fraction(1)
        for k in row:
            if k:
                p *= Fraction(k, n) ** k
        ml[t] = p
    C = sum(Fraction(math.factorial(n)) / math.prod(math.factorial(k) for k in t) * p for t, p in ml.items())
    return {t: p / C for t, p in ml.items()}


def horizon_dependence_demo(m, n):
    """max over histories x^n of |sum_x P_{n+1}(x^n x) - P_n(x^n)|, exact.

    P_n spreads the multinomial NML of the counts uniformly over arrangements.
    """
    if m < 1 or n < 1:
        raise ValueError("need m >= 1 and n >= 1")
    if m > HORIZON_MAX_M or n > HORIZON_MAX_N:
        raise InstanceTooLargeError(f"(m={m}, n={n}) is too large to enumerate")
    pn = _seq_nml_fractions(m, n)
    pn1 = _seq_nml_fractions(m, n + 1)
    worst = Fraction(0)
    for t, p in pn.items():
        ext = Fraction(0)
        for x in range(m):
            u = list(t)
            u[x] += 1
            ext += pn1[tuple(u)]
        worst = max(worst, abs(ext - p))
    return float(worst)


def full_horizon_log_loss(sequence, m, n=None):
    """Log loss of the conditionals of the horizon-n joint P_n (small instances).

    Telescopes to -log2 P_n(x^n) when the sequence has length n.
    """
    seq = np.asarray(sequence, dtype=np.int64).reshape(-1)
    n = seq.size if n is None else n
    if seq.size > n:
        raise ValueError("sequence longer than the horizon")

    def ln_marginal(prefix_counts, i):
        # P_n(x^i): sum over completions, each arrangement of the rest equally weighted
        rest = compositions(n - i, m)
        full = rest + prefix_counts[None, :]
        ln_p = multinomial_ml_log(full) - (special.gammaln(n + 1.0) - special.gammaln(full + 1.0).sum(axis=1))
        ln_arr = special.gammaln(n - i + 1.0) - special.gammaln(rest + 1.0).sum(axis=1)
        return float(special.logsumexp(ln_p + ln_arr))

    from .nml import multinomial_shtarkov
    ln_c = multinomial_shtarkov(m, n) / math.log2(math.e)
    counts = np.zeros(m, dtype=np.int64)
    prev = ln_marginal(counts, 0) - ln_c
    out = np.empty(seq.size)
    for i, x in enumerate(seq.tolist()):
        counts[x] += 1
        cur = ln_marginal(counts, i + 1) - ln_c
        out[i] = (prev - cur) / math.log(2.0)
        prev = cur
    return LogLoss(float(out.sum()), out)
