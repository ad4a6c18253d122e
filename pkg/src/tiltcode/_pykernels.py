"""Pure-Python implementations of the hot kernels.

These mirror ``_kernels.pyx`` operation for operation.  The range coder uses
the same integer arithmetic, so both backends produce identical bytes.
"""
import numpy as np

from .errors import CorruptStreamError

WINDOW_BITS = 56
MASK56 = (1 << WINDOW_BITS) - 1
BOT = 1 << 48
BOT_MASK = BOT - 1
FF_TOP = 0xFF << 48
MAX_TOTAL = 1 << 31
MAX_GAMMA_ZEROS = 62

NAME = "python"


def head_sums(M, a, K):
    """Return sums over k=1..K of M[k] e^{-ak} times 1, k and k^2."""
    if K < 1:
        return 0.0, 0.0, 0.0
    k = np.arange(1, K + 1, dtype=np.float64)
    w = M[1:K + 1] * np.exp(-a * k)
    wk = w * k
    return float(w.sum()), float(wk.sum()), float((wk * k).sum())


class RangeEncoder:
    """Carry-propagating range encoder with a 56-bit low window."""

    def __init__(self):
        self.low = 0
        self.range = MASK56
        self.cache = 0
        self.cache_size = 1
        self.skip_first = True
        self.out = bytearray()

    def _put(self, byte):
        if self.skip_first:
            # leading cache byte is always zero: the interval never carries past 1
            self.skip_first = False
            return
        self.out.append(byte)

    def _shift_low(self):
        low = self.low
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

    def encode(self, cum, freq, total):
        r = self.range // total
        self.low += r * cum
        self.range = r * freq
        while self.range < BOT:
            self.range <<= 8
            self._shift_low()

    def encode_bits(self, value, nbits):
        for i in range(nbits - 1, -1, -1):
            self.encode((value >> i) & 1, 1, 2)

    def _encode_gamma(self, x):
        n = x.bit_length()
        for _ in range(n - 1):
            self.encode(0, 1, 2)
        self.encode_bits(x, n)

    def encode_counts(self, cum, esc, counts):
        """Code each count under the table ``cum``; counts >= esc take the escape path."""
        total = int(cum[esc + 1])
        f0 = int(cum[1])
        cum_l = cum.tolist() if len(cum) <= 1 << 16 else None
        for c in counts:
            c = int(c)
            if c == 0:
                # fast path: outcome 0 has cumulative frequency 0
                self.range = (self.range // total) * f0
                while self.range < BOT:
                    self.range <<= 8
                    self._shift_low()
            elif c < esc:
                if cum_l is not None:
                    lo, hi = cum_l[c], cum_l[c + 1]
                else:
                    lo, hi = int(cum[c]), int(cum[c + 1])
                self.encode(lo, hi - lo, total)
            else:
                lo, hi = int(cum[esc]), int(cum[esc + 1])
                self.encode(lo, hi - lo, total)
                self._encode_gamma(c - esc + 1)

    def encode_multiset(self, ranks, rem):
        """Code ranks sequentially under the sampling-without-replacement conditionals."""
        size = len(rem)
        tree = [0] * (size + 1)
        rem = [int(c) for c in rem]
        for i, c in enumerate(rem):
            j = i + 1
            tree[j] += c
            p = j + (j & -j)
            if p <= size:
                tree[p] += tree[j]
        total = sum(rem)
        alive = sum(1 for c in rem if c)
        for x in ranks:
            x = int(x)
            f = rem[x]
            if f <= 0:
                raise ValueError("token sequence does not match counts")
            if alive > 1:
                cum = 0
                j = x
                while j > 0:
                    cum += tree[j]
                    j -= j & -j
                self.encode(cum, f, total)
            j = x + 1
            while j <= size:
                tree[j] -= 1
                j += j & -j
            rem[x] = f - 1
            if f == 1:
                alive -= 1
            total -= 1

    def finish(self):
        low, rng = self.low, self.range
        nbytes = 7
        v = low
        for b in range(1, 8):
            g = 1 << (WINDOW_BITS - 8 * b)
            v = -(-low // g) * g
            if v + g <= low + rng:
                nbytes = b
                break
        self.low = v
        for _ in range(nbytes):
            self._shift_low()
        temp = self.cache
        while self.cache_size:
            self._put(temp)
            temp = 0xFF
            self.cache_size -= 1
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, data):
        self.data = bytes(data)
        self.n = len(self.data)
        self.pos = 0
        self.range = MASK56
        self.code = 0
        self.r = 0
        for _ in range(7):
            self.code = (self.code << 8) | self._next()

    def _next(self):
        p = self.pos
        self.pos = p + 1
        if p < self.n:
            return self.data[p]
        return 0

    def decode_target(self, total):
        self.r = self.range // total
        t = self.code // self.r
        if t >= total:
            raise CorruptStreamError("range decoder left the coding interval")
        return t

    def consume(self, cum, freq):
        self.code -= self.r * cum
        self.range = self.r * freq
        while self.range < BOT:
            self.code = (self.code << 8) | self._next()
            self.range <<= 8

    def decode_bits(self, nbits):
        v = 0
        for _ in range(nbits):
            b = self.decode_target(2)
            self.consume(b, 1)
            v = (v << 1) | b
        return v

    def _decode_gamma(self):
        zeros = 0
        while True:
            b = self.decode_target(2)
            self.consume(b, 1)
            if b:
                break
            zeros += 1
            if zeros > MAX_GAMMA_ZEROS:
                raise CorruptStreamError("escape code too long")
        return (1 << zeros) | self.decode_bits(zeros)

    def decode_counts(self, cum, esc, m):
        total = int(cum[esc + 1])
        f0 = int(cum[1])
        out = np.zeros(m, dtype=np.int64)
        for i in range(m):
            t = self.decode_target(total)
            if t < f0:
                self.consume(0, f0)
                continue
            s = int(np.searchsorted(cum, t, side="right")) - 1
            lo = int(cum[s])
            self.consume(lo, int(cum[s + 1]) - lo)
            if s == esc:
                out[i] = esc - 1 + self._decode_gamma()
            else:
                out[i] = s
        return out

    def decode_multiset(self, rem, n):
        size = len(rem)
        tree = [0] * (size + 1)
        rem = [int(c) for c in rem]
        for i, c in enumerate(rem):
            j = i + 1
            tree[j] += c
            p = j + (j & -j)
            if p <= size:
                tree[p] += tree[j]
        top = 1
        while top * 2 <= size:
            top *= 2
        total = sum(rem)
        alive = sum(1 for c in rem if c)
        out = np.empty(n, dtype=np.int64)
        last = 0
        for i in range(n):
            if alive > 1:
                t = self.decode_target(total)
                pos, rest, step = 0, t, top
                while step:
                    q = pos + step
                    if q <= size and tree[q] <= rest:
                        pos = q
                        rest -= tree[q]
                    step >>= 1
                x = pos
                f = rem[x]
                self.consume(t - rest, f)
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
        return out

    def check_end(self):
        if self.pos < self.n:
            raise CorruptStreamError("trailing bytes after coded data")
        if self.pos - self.n > 6:
            raise CorruptStreamError("coded block is truncated")
