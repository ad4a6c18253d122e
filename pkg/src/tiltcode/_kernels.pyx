# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: tilted moment sums and the range coder.

Must stay bit-compatible with ``_pykernels.py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

from .errors import CorruptStreamError

ctypedef unsigned long long u64
ctypedef long long i64

cdef int WINDOW_BITS = 56
cdef u64 MASK56 = (1ULL << 56) - 1
cdef u64 BOT = 1ULL << 48
cdef u64 BOT_MASK = (1ULL << 48) - 1
cdef u64 FF_TOP = 0xFFULL << 48
cdef int MAX_GAMMA_ZEROS = 62

NAME = "cython"


def head_sums(const double[::1] M, double a, Py_ssize_t K):
    """Return sums over k=1..K of M[k] e^{-ak} times 1, k and k^2."""
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0
    cdef double c0 = 0.0, c1 = 0.0, c2 = 0.0
    cdef double q = exp(-a), p = 1.0, w, y, t, kk
    cdef Py_ssize_t k
    for k in range(1, K + 1):
        # exact power every 32 steps bounds the drift of the running product
        if (k & 31) == 0:
            p = exp(-a * <double>k)
        else:
            p *= q
        w = M[k] * p
        kk = <double>k
        # Kahan-compensated accumulation
        y = w - c0
        t = s0 + y
        c0 = (t - s0) - y
        s0 = t
        y = w * kk - c1
        t = s1 + y
        c1 = (t - s1) - y
        s1 = t
        y = w * kk * kk - c2
        t = s2 + y
        c2 = (t - s2) - y
        s2 = t
    return s0, s1, s2


cdef class RangeEncoder:
    cdef public u64 low
    cdef public u64 range
    cdef u64 cache
    cdef u64 cache_size
    cdef bint skip_first
    cdef bytearray out

    def __cinit__(self):
        self.low = 0
        self.range = MASK56
        self.cache = 0
        self.cache_size = 1
        self.skip_first = True
        self.out = bytearray()

    cdef inline void _put(self, u64 byte):
        if self.skip_first:
            self.skip_first = False
            return
        self.out.append(<unsigned char>(byte & 0xFF))

    cdef inline void _shift_low(self):
        cdef u64 low = self.low
        cdef u64 carry, temp
        if (low & MASK56) < FF_TOP or (low >> WINDOW_BITS):
            carry = low >> WINDOW_BITS
            temp = self.cache
            while True:
                self._put((temp + carry) & 0xFF)
                temp = 0xFF
                self.cache_size -= 1
                if self.cache_size == 0:
                    break
            self.cache = (low >> 48) & 0xFF
        self.cache_size += 1
        self.low = (low & BOT_MASK) << 8

    cdef inline void _encode(self, u64 cum, u64 freq, u64 total):
        cdef u64 r = self.range // total
        self.low += r * cum
        self.range = r * freq
        while self.range < BOT:
            self.range <<= 8
            self._shift_low()

    def encode(self, cum, freq, total):
        self._encode(cum, freq, total)

    def encode_bits(self, u64 value, int nbits):
        cdef int i
        for i in range(nbits - 1, -1, -1):
            self._encode((value >> i) & 1, 1, 2)

    cdef void _encode_gamma(self, u64 x):
        cdef int n = 0, i
        cdef u64 y = x
        while y:
            n += 1
            y >>= 1
        for i in range(n - 1):
            self._encode(0, 1, 2)
        for i in range(n - 1, -1, -1):
            self._encode((x >> i) & 1, 1, 2)

    def encode_counts(self, const u64[::1] cum, Py_ssize_t esc, const i64[::1] counts):
        cdef u64 total = cum[esc + 1]
        cdef u64 f0 = cum[1]
        cdef Py_ssize_t i, n = counts.shape[0]
        cdef i64 c
        for i in range(n):
            c = counts[i]
            if c == 0:
                self.range = (self.range // total) * f0
                while self.range < BOT:
                    self.range <<= 8
                    self._shift_low()
            elif c < esc:
                self._encode(cum[c], cum[c + 1] - cum[c], total)
            else:
                self._encode(cum[esc], cum[esc + 1] - cum[esc], total)
                self._encode_gamma(<u64>(c - esc + 1))

    def encode_multiset(self, const i64[::1] ranks, const i64[::1] counts):
        cdef Py_ssize_t size = counts.shape[0], i, j, p
        cdef cnp.ndarray[i64, ndim=1] tree_a = np.zeros(size + 1, dtype=np.int64)
        cdef cnp.ndarray[i64, ndim=1] rem_a = np.array(counts, dtype=np.int64)
        cdef i64[::1] tree = tree_a
        cdef i64[::1] rem = rem_a
        cdef i64 total = 0, alive = 0, f, cum
        cdef Py_ssize_t x
        for i in range(size):
            j = i + 1
            tree[j] += rem[i]
            p = j + (j & -j)
            if p <= size:
                tree[p] += tree[j]
            total += rem[i]
            if rem[i]:
                alive += 1
        for i in range(ranks.shape[0]):
            x = ranks[i]
            if x < 0 or x >= size or rem[x] <= 0:
                raise ValueError("token sequence does not match counts")
            f = rem[x]
            if alive > 1:
                cum = 0
                j = x
                while j > 0:
                    cum += tree[j]
                    j -= j & -j
                self._encode(<u64>cum, <u64>f, <u64>total)
            j = x + 1
            while j <= size:
                tree[j] -= 1
                j += j & -j
            rem[x] = f - 1
            if f == 1:
                alive -= 1
            total -= 1

    def finish(self):
        cdef u64 low = self.low, rng = self.range
        cdef u64 g, v = low
        cdef int b, nbytes = 7
        for b in range(1, 8):
            g = 1ULL << (WINDOW_BITS - 8 * b)
            v = ((low + g - 1) // g) * g
            if v + g <= low + rng:
                nbytes = b
                break
        self.low = v
        for b in range(nbytes):
            self._shift_low()
        cdef u64 temp = self.cache
        while self.cache_size:
            self._put(temp)
            temp = 0xFF
            self.cache_size -= 1
        return bytes(self.out)


cdef class RangeDecoder:
    cdef const unsigned char[::1] buf
    cdef bytes data
    cdef public Py_ssize_t n
    cdef public Py_ssize_t pos
    cdef u64 range
    cdef u64 code
    cdef u64 r

    def __init__(self, data):
        self.data = bytes(data)
        self.n = len(self.data)
        if self.n:
            self.buf = self.data
        self.pos = 0
        self.range = MASK56
        self.code = 0
        self.r = 0
        cdef int i
        for i in range(7):
            self.code = (self.code << 8) | self._next()

    cdef inline u64 _next(self):
        cdef Py_ssize_t p = self.pos
        self.pos = p + 1
        if p < self.n:
            return self.buf[p]
        return 0

    cdef inline u64 _target(self, u64 total) except? 0xFFFFFFFFFFFFFFFF:
        self.r = self.range // total
        cdef u64 t = self.code // self.r
        if t >= total:
            raise CorruptStreamError("range decoder left the coding interval")
        return t

    cdef inline void _consume(self, u64 cum, u64 freq):
        self.code -= self.r * cum
        self.range = self.r * freq
        while self.range < BOT:
            self.code = (self.code << 8) | self._next()
            self.range <<= 8

    def decode_target(self, total):
        return self._target(total)

    def consume(self, cum, freq):
        self._consume(cum, freq)

    cdef u64 _bits(self, int nbits) except? 0xFFFFFFFFFFFFFFFF:
        cdef u64 v = 0, b
        cdef int i
        for i in range(nbits):
            b = self._target(2)
            self._consume(b, 1)
            v = (v << 1) | b
        return v

    def decode_bits(self, int nbits):
        return self._bits(nbits)

    cdef u64 _gamma(self) except? 0xFFFFFFFFFFFFFFFF:
        cdef int zeros = 0
        cdef u64 b
        while True:
            b = self._target(2)
            self._consume(b, 1)
            if b:
                break
            zeros += 1
            if zeros > MAX_GAMMA_ZEROS:
                raise CorruptStreamError("escape code too long")
        return (1ULL << zeros) | self._bits(zeros)

    def decode_counts(self, const u64[::1] cum, Py_ssize_t esc, Py_ssize_t m):
        cdef u64 total = cum[esc + 1]
        cdef u64 f0 = cum[1]
        cdef cnp.ndarray[i64, ndim=1] out_a = np.zeros(m, dtype=np.int64)
        cdef i64[::1] out = out_a
        cdef Py_ssize_t i, lo, hi, mid
        cdef u64 t
        for i in range(m):
            t = self._target(total)
            if t < f0:
                self._consume(0, f0)
                continue
            lo = 1
            hi = esc + 1
            # invariant: cum[lo] <= t < cum[hi]
            while hi - lo > 1:
                mid = (lo + hi) >> 1
                if cum[mid] <= t:
                    lo = mid
                else:
                    hi = mid
            self._consume(cum[lo], cum[lo + 1] - cum[lo])
            if lo == esc:
                out[i] = esc - 1 + <i64>self._gamma()
            else:
                out[i] = lo
        return out_a

    def decode_multiset(self, const i64[::1] counts, Py_ssize_t n):
        cdef Py_ssize_t size = counts.shape[0], i, j, p, x, q, step, top = 1, last = 0
        cdef cnp.ndarray[i64, ndim=1] tree_a = np.zeros(size + 1, dtype=np.int64)
        cdef cnp.ndarray[i64, ndim=1] rem_a = np.array(counts, dtype=np.int64)
        cdef cnp.ndarray[i64, ndim=1] out_a = np.empty(n, dtype=np.int64)
        cdef i64[::1] tree = tree_a
        cdef i64[::1] rem = rem_a
        cdef i64[::1] out = out_a
        cdef i64 total = 0, alive = 0, f
        cdef u64 t, rest
        for i in range(size):
            j = i + 1
            tree[j] += rem[i]
            p = j + (j & -j)
            if p <= size:
                tree[p] += tree[j]
            total += rem[i]
            if rem[i]:
                alive += 1
        while top * 2 <= size:
            top *= 2
        for i in range(n):
            if alive > 1:
                t = self._target(<u64>total)
                x = 0
                rest = t
                step = top
                while step:
                    q = x + step
                    if q <= size and <u64>tree[q] <= rest:
                        x = q
                        rest -= tree[q]
                    step >>= 1
                f = rem[x]
                self._consume(t - rest, <u64>f)
            else:
                while rem[last] == 0:
                    last += 1
                x = last
                f = rem[x]
            j = x + 1
            while j <= size:
                tree[j] -= 1
                j += j & -j
            rem[x] = f - 1
            if f == 1:
                alive -= 1
            total -= 1
            out[i] = x
        return out_a

    def check_end(self):
        if self.pos < self.n:
            raise CorruptStreamError("trailing bytes after coded data")
        if self.pos - self.n > 6:
            raise CorruptStreamError("coded block is truncated")
