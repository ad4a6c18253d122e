"""Stirling ratio, the tilted Stirling-ratio distribution and its optimal tilt.

The Stirling ratio ``M(k) = k^k e^{-k} / k!`` is the maximized Poisson
likelihood of a count ``k``.  Tilting it by ``e^{-ak}`` makes it summable;
``P_a(k) = M(k) e^{-ak} / C_a`` is the per-symbol coding distribution.

Internal arithmetic is in nats; functions named ``log_*`` or fields ending in
``_bits`` report base-2 values.
"""
from dataclasses import dataclass
from functools import cached_property
import math

import numpy as np
from scipy import special

from ._backend import kernels
from .errors import TiltFloorError

LN2 = math.log(2.0)
LOG2E = 1.0 / LN2
LN_2PI = math.log(2.0 * math.pi)

TILT_FLOOR = 1e-8
DEFAULT_TOL = 1e-15
DIRECT_MAX_K = 16
# counts k < HEAD_K are summed term by term; beyond, Euler-Maclaurin
HEAD_K = 2048
MAX_TABLE_K = 1 << 24

# coefficients of exp(-r(t)) in powers of 1/t, r the Stirling remainder
_EXP_NEG_R = (
    1.0,
    -1.0 / 12.0,
    1.0 / 288.0,
    139.0 / 51840.0,
    -571.0 / 2488320.0,
    -163879.0 / 209018880.0,
)


def _stirling_remainder(k):
    """Robbins remainder r_k = ln k! - (k ln k - k + 0.5 ln(2 pi k)), large k."""
    x = 1.0 / k
    x2 = x * x
    return x * (1.0 / 12.0 - x2 * (1.0 / 360.0 - x2 * (1.0 / 1260.0 - x2 * (1.0 / 1680.0 - x2 / 1188.0))))


def ln_stirling_ratio(k):
    """ln M(k) in nats, with M(0) = 1."""
    if k < 0:
        raise ValueError("count must be nonnegative")
    if k == 0:
        return 0.0
    if k < DIRECT_MAX_K:
        return k * math.log(k) - k - math.lgamma(k + 1.0)
    return -0.5 * (LN_2PI + math.log(k)) - _stirling_remainder(k)


def log_stirling_ratio(k):
    """log2 M(k) in bits.

    >>> log_stirling_ratio(0)
    0.0
    >>> round(log_stirling_ratio(1), 6)
    -1.442695
    """
    return ln_stirling_ratio(int(k)) * LOG2E


def ln_stirling_ratio_array(k):
    """Vectorized ln M(k) for a nonnegative integer array."""
    k = np.asarray(k)
    kf = k.astype(np.float64)
    out = np.zeros(kf.shape, dtype=np.float64)
    small = (k > 0) & (k < DIRECT_MAX_K)
    ks = kf[small]
    out[small] = ks * np.log(ks) - ks - special.gammaln(ks + 1.0)
    big = k >= DIRECT_MAX_K
    kb = kf[big]
    out[big] = -0.5 * (LN_2PI + np.log(kb)) - _stirling_remainder(kb)
    return out


_LN_M_HEAD = ln_stirling_ratio_array(np.arange(HEAD_K + 1))
_M_HEAD = np.exp(_LN_M_HEAD)


def _tail_bound_terms(a, K):
    """Upper bounds on sum_{k>K} k^j M(k) e^{-ak} for j = 0, 1, 2, or None if not yet decaying.

    Uses M(k) < (2 pi k)^{-1/2} and a geometric bound on consecutive terms.
    """
    k1 = K + 1.0
    rho = (1.0 + 1.0 / k1) ** 1.5 * math.exp(-a)
    if rho >= 1.0:
        return None
    base = math.exp(-a * k1) / math.sqrt(2.0 * math.pi * k1) / (1.0 - rho)
    return base, base * k1, base * k1 * k1


def truncation_index(a, tol=DEFAULT_TOL):
    """Smallest K such that the sums of k^j P_a(k) beyond K are below ``tol`` relative, j = 0, 1, 2."""
    floor_mean = math.exp(-(1.0 + a))  # lower bound on the first two moment sums

    def ok(K):
        b = _tail_bound_terms(a, K)
        if b is None:
            return False
        return b[0] <= tol and b[1] <= tol * floor_mean and b[2] <= tol * floor_mean

    hi = 1
    while not ok(hi):
        hi *= 2
    lo = hi // 2
    if ok(lo):
        return max(lo, 1) if lo else 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _upper_gamma_half_ladder(x, top, count):
    """Upper incomplete gamma at s = top - i + 1/2 for i = 0..count-1 (top >= 0)."""
    vals = {}
    g = math.sqrt(math.pi) * special.erfc(math.sqrt(x))
    vals[0] = g
    ex = math.exp(-x)
    # upward: Gamma(s+1, x) = s Gamma(s, x) + x^s e^{-x}
    s = 0.5
    for j in range(1, top + 1):
        g = s * g + x ** s * ex
        vals[j] = g
        s += 1.0
    # downward: Gamma(s, x) = (Gamma(s+1, x) - x^s e^{-x}) / s
    g = vals[0]
    s = -0.5
    for j in range(-1, top - count, -1):
        g = (g - x ** s * ex) / s
        vals[j] = g
        s -= 1.0
    return [vals[top - i] for i in range(count)]


def _em_tail(a, K0):
    """Sums over k >= K0 of k^j M(k) e^{-ak}, j = 0, 1, 2, by Euler-Maclaurin.

    The integral uses the asymptotic series of M(t); the endpoint corrections
    use exact M(K0).
    """
    x = a * K0
    sqrt2pi = math.sqrt(2.0 * math.pi)
    t = float(K0)
    gK = _M_HEAD[K0] * math.exp(-a * t)
    # derivatives of the Stirling remainder r(t) = 1/(12t) - 1/(360t^3)
    r1 = -1.0 / (12 * t ** 2) + 1.0 / (120 * t ** 4)
    r2 = 1.0 / (6 * t ** 3) - 1.0 / (30 * t ** 5)
    r3 = -1.0 / (2 * t ** 4) + 1.0 / (6 * t ** 6)
    out = []
    for j in range(3):
        gam = _upper_gamma_half_ladder(x, j, len(_EXP_NEG_R))
        integral = 0.0
        for i, c in enumerate(_EXP_NEG_R):
            s = j + 0.5 - i
            integral += c * a ** (-s) * gam[i]
        integral /= sqrt2pi
        g = gK * t ** j
        e = j - 0.5
        p1 = e / t - a - r1
        p2 = -e / t ** 2 - r2
        p3 = 2.0 * e / t ** 3 - r3
        d1 = g * p1
        d3 = g * (p3 + 3.0 * p1 * p2 + p1 ** 3)
        out.append(integral + 0.5 * g - d1 / 12.0 + d3 / 720.0)
    return out


def tilted_sums(a, tol=DEFAULT_TOL, backend=None):
    """Return (K, C_a - 1, sum k M(k)e^{-ak}, sum k^2 M(k)e^{-ak}).

    ``backend`` selects the head-sum kernel; the codec passes the pure-Python
    one so its tables never depend on which extension is installed.
    """
    kern = backend or kernels
    K = truncation_index(a, tol)
    if K < HEAD_K:
        s0, s1, s2 = kern.head_sums(_M_HEAD, a, K)
        return K, float(s0), float(s1), float(s2)
    h0, h1, h2 = kern.head_sums(_M_HEAD, a, HEAD_K - 1)
    t0, t1, t2 = _em_tail(a, HEAD_K)
    return K, float(h0 + t0), float(h1 + t1), float(h2 + t2)


@dataclass(frozen=True)
class TiltedStirling:
    """The tilted Stirling-ratio distribution P_a on counts 0, 1, 2, ...

    ``excess`` is C_a - 1, kept separately so that C_a close to 1 stays
    resolvable.  ``K`` is a certified truncation index: the mass beyond it
    is at most ``tail_mass``.
    """

    a: float
    log_C_a: float
    K: int
    tail_mass: float
    excess: float
    mean: float
    second_moment: float

    @property
    def C_a(self):
        return 1.0 + self.excess

    @property
    def ln_C_a(self):
        return math.log1p(self.excess)

    def logpmf(self, k):
        """ln P_a(k), vectorized over integer arrays."""
        k = np.asarray(k)
        return ln_stirling_ratio_array(k) - self.a * k - self.ln_C_a

    def pmf(self, k):
        if np.ndim(k) == 0:
            return math.exp(ln_stirling_ratio(int(k)) - self.a * int(k) - self.ln_C_a)
        return np.exp(self.logpmf(k))

    @cached_property
    def cum(self):
        """Cumulative probabilities over counts 0..K."""
        if self.K > MAX_TABLE_K:
            raise MemoryError(f"table of {self.K + 1} entries exceeds the cap of {MAX_TABLE_K + 1}")
        c = np.cumsum(np.exp(self.logpmf(np.arange(self.K + 1))))
        c.flags.writeable = False
        return c


def build_tilted(a, tol=DEFAULT_TOL, backend=None):
    """Normalize the tilted Stirling ratio at tilt ``a``.

    >>> d = build_tilted(1.0)
    >>> round(d.C_a, 5)
    1.18849
    """
    a = float(a)
    if not math.isfinite(a) or a <= 0.0:
        raise ValueError(f"tilt must be positive and finite, got {a}")
    if a < TILT_FLOOR:
        raise TiltFloorError(f"tilt {a:g} is below the floor {TILT_FLOOR:g}")
    if not 0.0 < tol <= 1e-9:
        raise ValueError("tol must lie in (0, 1e-9]")
    K, s0, s1, s2 = tilted_sums(a, tol, backend)
    C = 1.0 + s0
    b = _tail_bound_terms(a, K)
    return TiltedStirling(
        a=a,
        log_C_a=math.log1p(s0) * LOG2E,
        K=K,
        tail_mass=b[0] / C,
        excess=s0,
        mean=s1 / C,
        second_moment=s2 / C,
    )


def tilted_pmf(d, k):
    """P_a(k) for the distribution ``d``."""
    if k < 0:
        raise ValueError("count must be nonnegative")
    return d.pmf(k)


def expected_count(d):
    """E N_1 under P_a."""
    return d.mean


def expected_count_second_moment(d):
    """E N_1^2 under P_a (equals C_a''/C_a)."""
    return d.second_moment


@dataclass(frozen=True)
class TiltSolution:
    a_star: float
    expected_count: float
    iterations: int
    residual: float
    C_a: float = float("nan")


def _lower_start(m, n):
    """Initial lower end of the bisection bracket for the optimal tilt."""
    ratio = m / n
    a0 = math.log(ratio / math.e) if ratio > math.e else 0.0
    at = ratio / 2.0
    cand = a0
    if at < 1.0:
        cube = at ** (1.0 / 3.0)
        r = cube / (12.0 * (1.0 - cube))
        lb = at / ((1.0 + math.sqrt(2.0 * at)) * math.exp(r) + 4.0 / (3.0 * math.sqrt(math.pi)) * at)
        cand = max(cand, lb)
    if cand <= 0.0:
        cand = at / 2.0
    return cand


def solve_tilt(m, n, max_iter=200, backend=None):
    """Find a* with m E_{P_a*} N_1 = n by bisection in log a.

    >>> s = solve_tilt(10, 10)
    >>> 0 < s.a_star <= 0.5
    True
    """
    if not (m > 0 and n > 0):
        raise ValueError("solve_tilt needs positive m and n")
    target = n / m

    def g(a):
        d = build_tilted(a, backend=backend)
        return d.mean - target, d

    hi = m / (2.0 * n)
    if hi < TILT_FLOOR:
        raise TiltFloorError(f"optimal tilt for n/m = {target:g} is below the floor {TILT_FLOOR:g}")
    ghi, dhi = g(hi)
    while ghi > 0.0:
        hi *= 2.0
        ghi, dhi = g(hi)
    lo = min(_lower_start(m, n), hi)
    lo = max(lo, TILT_FLOOR)
    glo, dlo = g(lo)
    while glo < 0.0:
        if lo == TILT_FLOOR:
            raise TiltFloorError(f"optimal tilt for n/m = {target:g} is below the floor {TILT_FLOOR:g}")
        lo = max(lo / 4.0, TILT_FLOOR)
        glo, dlo = g(lo)

    best_a, best_g, best_d = (lo, glo, dlo) if abs(glo) <= abs(ghi) else (hi, ghi, dhi)
    it = 0
    while it < max_iter:
        if abs(best_g) <= 1e-14 * target:
            break
        mid = math.sqrt(lo * hi)
        if not lo < mid < hi:
            break
        it += 1
        gm, dm = g(mid)
        if abs(gm) < abs(best_g):
            best_a, best_g, best_d = mid, gm, dm
        if gm > 0.0:
            lo = mid
        elif gm < 0.0:
            hi = mid
        else:
            break
    return TiltSolution(
        a_star=best_a,
        expected_count=best_d.mean,
        iterations=it,
        residual=abs(best_g) / target,
        C_a=best_d.C_a,
    )
