"""Two-pass compressor: counts under a quantized tilted model, then the arrangement.

Stream layout (version 1, all multi-byte integers big-endian)::

    "TSRC" | version u8 | tokenizer u8 | varint m | tilt index u16
    | varint len | counts block | varint len | payload block | crc32 u32

The counts block range-codes N_1..N_m; counts past the table take an
escape outcome followed by an Elias-gamma code.  The payload block codes the
token sequence with the sampling-without-replacement conditionals given the
counts.  The CRC covers every preceding byte.
"""
from dataclasses import dataclass
from functools import lru_cache
import math
import zlib

import numpy as np
from scipy import special

from . import _pykernels
from ._backend import kernels
from .errors import CorruptStreamError, FormatError, InstanceTooLargeError, TiltFloorError
from .stirling import LOG2E, build_tilted, ln_stirling_ratio_array, solve_tilt

MAGIC = b"TSRC"
VERSION = 1
GRID_SIZE = 4096
GRID_LO = 1e-6
GRID_HI = 64.0
TILT_GRID = np.geomspace(GRID_LO, GRID_HI, GRID_SIZE)
TOTAL_BITS = 31
TOTAL = 1 << TOTAL_BITS
TAIL_CUTOFF = 2.0 ** -31
PMF_FLOOR = 2.0 ** -27
MAX_TABLE = 1 << 22
MAX_TOKENS = 1 << 31
MAX_ALPHABET = 1 << 24
VARINT_MAX_BYTES = 10

TOKENIZERS = {0: "int", 1: "byte", 2: "utf8", 3: "word"}


# ---------------------------------------------------------------- varints


def encode_varint(x):
    """Big-endian base-128 varint: high groups first, continuation bit on all but the last byte."""
    if x < 0:
        raise ValueError("varint must be nonnegative")
    groups = [x & 0x7F]
    x >>= 7
    while x:
        groups.append(x & 0x7F)
        x >>= 7
    groups.reverse()
    return bytes([g | 0x80 for g in groups[:-1]] + [groups[-1]])


def decode_varint(buf, pos):
    """Return (value, new position); rejects overlong, padded or truncated encodings."""
    value = 0
    for i in range(VARINT_MAX_BYTES):
        if pos >= len(buf):
            raise CorruptStreamError("truncated varint")
        b = buf[pos]
        pos += 1
        if i == 0 and b == 0x80:
            raise FormatError("non-canonical varint")
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            return value, pos
    raise FormatError("varint too long")


# ---------------------------------------------------------------- models


def grid_index(a):
    """Index of the grid tilt nearest to ``a`` in log scale, clamped to the grid."""
    if a <= GRID_LO:
        return 0
    if a >= GRID_HI:
        return GRID_SIZE - 1
    step = math.log(GRID_HI / GRID_LO) / (GRID_SIZE - 1)
    return min(GRID_SIZE - 1, max(0, int(round(math.log(a / GRID_LO) / step))))


def choose_tilt_index(m, N):
    """Grid index for a stream with m symbols and N tokens."""
    if N == 0:
        return GRID_SIZE - 1
    try:
        a = solve_tilt(m, N).a_star
    except TiltFloorError:
        return 0
    return grid_index(a)


def gamma_bits(x):
    """Length of the Elias-gamma code of x >= 1."""
    return 2 * (int(x).bit_length() - 1) + 1


@dataclass(frozen=True)
class QuantizedModel:
    """Integer frequencies for counts 0..K_max plus an escape outcome, summing to 2^31."""

    index: int
    a: float
    K_max: int
    freqs: np.ndarray
    cum: np.ndarray
    true_probs: np.ndarray  # P_a(0..K_max) and the tail mass beyond K_max

    @property
    def esc(self):
        return self.K_max + 1

    @property
    def total(self):
        return int(self.cum[-1])

    def kl_bits(self):
        """KL(P_a || quantized) with the tail beyond K_max lumped into the escape outcome."""
        p = self.true_probs
        q = self.freqs.astype(np.float64) / TOTAL
        return float(np.sum(special.rel_entr(p, q))) * LOG2E

    def outcome(self, counts):
        return np.minimum(np.asarray(counts, dtype=np.int64), self.esc)

    def ideal_bits(self, counts):
        """Codelength of the counts under the quantized model, gamma bits included."""
        c = np.asarray(counts, dtype=np.int64)
        o = np.minimum(c, self.esc)
        lp = np.log2(self.freqs.astype(np.float64)) - TOTAL_BITS
        bits = -float(np.sum(lp[o]))
        big = c[c > self.K_max]
        if big.size:
            bits += float(sum(gamma_bits(x - self.K_max) for x in big.tolist()))
        return bits

    def true_bits(self, counts):
        """Codelength -sum log2 P_a(N_j) under the unquantized model."""
        d = build_tilted(self.a, backend=_pykernels)
        return -float(np.sum(d.logpmf(np.asarray(counts, dtype=np.int64)))) * LOG2E

    def escape_overage(self, counts):
        """Extra bits spent on escaped counts relative to their P_a codelength."""
        c = np.asarray(counts, dtype=np.int64)
        big = c[c > self.K_max]
        if not big.size:
            return 0.0
        d = build_tilted(self.a, backend=_pykernels)
        esc_bits = TOTAL_BITS - math.log2(int(self.freqs[-1]))
        coded = big.size * esc_bits + sum(gamma_bits(x - self.K_max) for x in big.tolist())
        return float(coded + np.sum(d.logpmf(big)) * LOG2E)


def _quantize(p):
    """Integer frequencies >= 1 summing to TOTAL, by floor plus largest remainders."""
    scaled = p * TOTAL
    f = np.floor(scaled).astype(np.int64)
    f = np.maximum(f, 1)
    rem = TOTAL - int(f.sum())
    if rem > 0:
        frac = scaled - np.floor(scaled)
        order = np.lexsort((np.arange(p.size), -frac))
        reps, extra = divmod(rem, p.size)
        f += reps
        f[order[:extra]] += 1
    elif rem < 0:
        # floors pushed the sum over; take the excess from the mode
        f[int(np.argmax(f))] += rem
    return f


@lru_cache(maxsize=8)
def quantized_model(index):
    """Build the quantized model for grid index ``index`` (deterministic, backend-independent)."""
    if not 0 <= index < GRID_SIZE:
        raise FormatError(f"tilt index {index} outside the grid")
    a = float(TILT_GRID[index])
    d = build_tilted(a, backend=_pykernels)
    kc = min(d.K, MAX_TABLE + 1)
    p = np.exp(d.logpmf(np.arange(kc + 1)))
    rest = d.tail_mass if kc == d.K else max(0.0, 1.0 - math.fsum(p.tolist()))
    # beyond[k] = P(N > k)
    beyond = np.concatenate([np.cumsum(p[::-1])[::-1][1:], [0.0]]) + rest
    k_tail = int(np.argmax(beyond < TAIL_CUTOFF)) if np.any(beyond < TAIL_CUTOFF) else kc
    k_floor = int(np.count_nonzero(p >= PMF_FLOOR)) - 1
    K_max = max(0, min(k_tail, k_floor, MAX_TABLE))
    probs = np.append(p[:K_max + 1], beyond[K_max])
    freqs = _quantize(probs)
    cum = np.zeros(freqs.size + 1, dtype=np.uint64)
    cum[1:] = np.cumsum(freqs).astype(np.uint64)
    freqs = freqs.astype(np.uint64)
    for arr in (freqs, cum, probs):
        arr.flags.writeable = False
    return QuantizedModel(index, a, K_max, freqs, cum, probs)


# ---------------------------------------------------------------- container


@dataclass(frozen=True)
class CodedStream:
    version: int
    tokenizer_id: int
    m: int
    tilt_index: int
    counts_block: bytes
    payload_block: bytes

    def header_bytes(self):
        return MAGIC + bytes([self.version, self.tokenizer_id]) + encode_varint(self.m)

    def to_bytes(self):
        body = (
            self.header_bytes()
            + self.tilt_index.to_bytes(2, "big")
            + encode_varint(len(self.counts_block))
            + self.counts_block
            + encode_varint(len(self.payload_block))
            + self.payload_block
        )
        return body + zlib.crc32(body).to_bytes(4, "big")

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if len(data) < 4 or data[:4] != MAGIC:
            raise FormatError("not a TSRC stream (bad magic)")
        if len(data) < 6:
            raise CorruptStreamError("truncated header")
        version, tok = data[4], data[5]
        if version != VERSION:
            raise FormatError(f"unsupported stream version {version}")
        if tok not in TOKENIZERS:
            raise FormatError(f"unknown tokenizer id {tok}")
        if len(data) < 4 + 6:
            raise CorruptStreamError("truncated stream")
        body, crc = data[:-4], int.from_bytes(data[-4:], "big")
        if zlib.crc32(body) != crc:
            raise CorruptStreamError("checksum mismatch")
        m, pos = decode_varint(body, 6)
        if pos + 2 > len(body):
            raise CorruptStreamError("truncated tilt index")
        tilt = int.from_bytes(body[pos:pos + 2], "big")
        pos += 2
        if tilt >= GRID_SIZE:
            raise FormatError(f"tilt index {tilt} outside the grid")
        blocks = []
        for name in ("counts", "payload"):
            n, pos = decode_varint(body, pos)
            if pos + n > len(body):
                raise CorruptStreamError(f"truncated {name} block")
            blocks.append(body[pos:pos + n])
            pos += n
        if pos != len(body):
            raise CorruptStreamError("trailing bytes after payload block")
        return cls(version, tok, m, tilt, blocks[0], blocks[1])


# ---------------------------------------------------------------- reports


@dataclass(frozen=True)
class CompressionReport:
    m: int
    N: int
    tilt_index: int
    a: float
    file_bytes: int
    header_bits: int  # magic, version, tokenizer, m, block lengths, checksum
    tilt_bits: int
    counts_bits: int
    payload_bits: int
    counts_ideal_bits: float  # quantized model, gamma bits included
    counts_model_bits: float  # -sum log2 P_a(N_j)
    payload_ideal_bits: float  # log2 N! / prod N_j!
    log_ml_poisson_bits: float  # log2 prod M(N_j)
    ml_sequence_bits: float  # -log2 prod (N_j/N)^{N_j}
    escape_overage_bits: float
    escapes: int
    regret_formula_bits: float  # a N log e + m log C_a at the grid tilt

    @property
    def total_bits(self):
        return 8 * self.file_bytes

    @property
    def achieved_bits(self):
        """Bits of the two coded blocks."""
        return self.counts_bits + self.payload_bits

    @property
    def ideal_bits(self):
        return self.counts_ideal_bits + self.payload_ideal_bits

    @property
    def overhead_bits(self):
        return self.achieved_bits - self.ideal_bits

    @property
    def allowance_bits(self):
        """0.5 log2(2 pi N): the cost of fixing the total in the Poisson model."""
        return 0.5 * math.log2(2.0 * math.pi * self.N) if self.N else 0.0

    @property
    def counts_regret_bits(self):
        """Counts block length against the Poisson maximized likelihood prod M(N_j)."""
        return self.counts_bits + self.log_ml_poisson_bits

    @property
    def sequence_regret_bits(self):
        """Coded blocks against the maximized i.i.d. likelihood of the token sequence."""
        return self.achieved_bits - self.ml_sequence_bits

    def ledger(self):
        """(name, bits) lines; the first four sum to the file size."""
        return [
            ("header", self.header_bits),
            ("tilt_index", self.tilt_bits),
            ("counts", self.counts_bits),
            ("payload", self.payload_bits),
            ("total", self.total_bits),
            ("ideal_counts_quantized", self.counts_ideal_bits),
            ("ideal_counts_tilted", self.counts_model_bits),
            ("ideal_payload", self.payload_ideal_bits),
            ("ideal", self.ideal_bits),
            ("overhead", self.overhead_bits),
            ("escape_overage", self.escape_overage_bits),
            ("regret_formula", self.regret_formula_bits),
            ("regret_counts", self.counts_regret_bits),
            ("regret_sequence", self.sequence_regret_bits),
            ("allowance_half_log_2piN", self.allowance_bits),
        ]


def _ln_multinomial(counts):
    c = np.asarray(counts, dtype=np.float64)
    if np.count_nonzero(c) <= 1:
        # one arrangement; avoid lgamma rounding
        return 0.0
    N = float(c.sum())
    return math.lgamma(N + 1.0) - float(np.sum(special.gammaln(c + 1.0)))


def build_report(stream, counts):
    counts = np.asarray(counts, dtype=np.int64)
    model = quantized_model(stream.tilt_index)
    N = int(counts.sum())
    file_bytes = len(stream.to_bytes())
    counts_bits = 8 * len(stream.counts_block)
    payload_bits = 8 * len(stream.payload_block)
    tilt_bits = 16
    header_bits = 8 * file_bytes - counts_bits - payload_bits - tilt_bits
    d = build_tilted(model.a, backend=_pykernels)
    c = counts.astype(np.float64)
    ml_seq = -float(np.sum(special.xlogy(c, c / N))) * LOG2E if N else 0.0
    return CompressionReport(
        m=stream.m,
        N=N,
        tilt_index=stream.tilt_index,
        a=model.a,
        file_bytes=file_bytes,
        header_bits=header_bits,
        tilt_bits=tilt_bits,
        counts_bits=counts_bits,
        payload_bits=payload_bits,
        counts_ideal_bits=model.ideal_bits(counts),
        counts_model_bits=model.true_bits(counts),
        payload_ideal_bits=_ln_multinomial(counts) * LOG2E,
        log_ml_poisson_bits=float(np.sum(ln_stirling_ratio_array(counts))) * LOG2E,
        ml_sequence_bits=ml_seq,
        escape_overage_bits=model.escape_overage(counts),
        escapes=int(np.count_nonzero(counts > model.K_max)),
        regret_formula_bits=model.a * N * LOG2E + stream.m * d.log_C_a,
    )


# ---------------------------------------------------------------- coding


def encode_counts(counts, model, backend=None):
    """Range-code the counts under ``model``; returns the block bytes."""
    kern = backend or kernels
    enc = kern.RangeEncoder()
    enc.encode_counts(model.cum, model.esc, np.ascontiguousarray(counts, dtype=np.int64))
    return enc.finish()


def decode_counts(block, model, m, backend=None):
    kern = backend or kernels
    dec = kern.RangeDecoder(block)
    counts = np.asarray(dec.decode_counts(model.cum, model.esc, m), dtype=np.int64)
    dec.check_end()
    return counts


def _needs_payload(counts):
    return int(np.count_nonzero(counts)) > 1


def encode_string_given_counts(tokens, counts, backend=None):
    """Code the arrangement of ``tokens`` given their counts.

    Empty when at most one symbol occurs: the arrangement is then determined.
    """
    tokens = np.ascontiguousarray(tokens, dtype=np.int64)
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    if tokens.size != int(counts.sum()) or (tokens.size and not np.array_equal(
            np.bincount(tokens, minlength=counts.size)[:counts.size], counts)) or (
            tokens.size and (tokens.min() < 0 or tokens.max() >= counts.size)):
        raise ValueError("token sequence does not match counts")
    if not _needs_payload(counts):
        return b""
    kern = backend or kernels
    enc = kern.RangeEncoder()
    enc.encode_multiset(tokens, counts)
    return enc.finish()


def decode_string_given_counts(block, counts, backend=None):
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    N = int(counts.sum())
    if not _needs_payload(counts):
        if block:
            raise CorruptStreamError("unexpected payload for a determined arrangement")
        nz = np.flatnonzero(counts)
        return np.full(N, nz[0] if nz.size else 0, dtype=np.int64)
    kern = backend or kernels
    dec = kern.RangeDecoder(block)
    tokens = np.asarray(dec.decode_multiset(counts, N), dtype=np.int64)
    dec.check_end()
    return tokens


def encode(tokens, m, tokenizer_id=0, backend=None):
    """Compress integer tokens in [0, m); returns (CodedStream, CompressionReport)."""
    if tokenizer_id not in TOKENIZERS:
        raise ValueError(f"unknown tokenizer id {tokenizer_id}")
    m = int(m)
    if not 1 <= m <= MAX_ALPHABET:
        raise ValueError(f"alphabet size must lie in 1..{MAX_ALPHABET}")
    tokens = np.ascontiguousarray(tokens, dtype=np.int64).reshape(-1)
    if tokens.size > MAX_TOKENS:
        raise InstanceTooLargeError(f"more than {MAX_TOKENS} tokens")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= m):
        raise ValueError("token outside the declared alphabet")
    counts = np.bincount(tokens, minlength=m).astype(np.int64)
    N = int(tokens.size)
    index = choose_tilt_index(m, N)
    model = quantized_model(index)
    counts_block = encode_counts(counts, model, backend)
    payload = encode_string_given_counts(tokens, counts, backend)
    stream = CodedStream(VERSION, tokenizer_id, m, index, counts_block, payload)
    return stream, build_report(stream, counts)


def compress(tokens, m, tokenizer_id=0, backend=None):
    """Compress and serialize; see ``encode`` for the report."""
    return encode(tokens, m, tokenizer_id, backend)[0].to_bytes()


@dataclass(frozen=True)
class Decoded:
    tokens: np.ndarray
    m: int
    tokenizer_id: int
    counts: np.ndarray


def decompress(data, backend=None):
    """Parse and decode a stream; raises FormatError or CorruptStreamError on bad input."""
    stream = data if isinstance(data, CodedStream) else CodedStream.from_bytes(data)
    model = quantized_model(stream.tilt_index)
    if not 1 <= stream.m <= MAX_ALPHABET:
        raise FormatError(f"alphabet size {stream.m} outside 1..{MAX_ALPHABET}")
    counts = decode_counts(stream.counts_block, model, stream.m, backend)
    if counts.size and (counts.min() < 0 or counts.max() > MAX_TOKENS or int(counts.sum()) > MAX_TOKENS):
        raise CorruptStreamError("decoded token count exceeds the format limit")
    tokens = decode_string_given_counts(stream.payload_block, counts, backend)
    return Decoded(tokens, stream.m, stream.tokenizer_id, counts)
