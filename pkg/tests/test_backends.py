import os
import subprocess
import sys

import numpy as np
import pytest

from tiltcode import _pykernels, codec, stirling, synthetic

try:
    from tiltcode import _kernels
except ImportError:
    _kernels = None

needs_ext = pytest.mark.skipif(_kernels is None, reason="compiled kernels not built")


@needs_ext
def test_head_sums_agree_to_rounding():
    # summation order differs (compensated loop vs pairwise), so agreement is to rounding only;
    # coding tables are always built on the numpy path for that reason
    for a in (1e-5, 1e-3, 0.1, 2.0):
        M = stirling._M_HEAD
        K = stirling.HEAD_K - 1
        np.testing.assert_allclose(_kernels.head_sums(M, a, K), _pykernels.head_sums(M, a, K), rtol=1e-14)


@needs_ext
def test_models_ignore_active_backend():
    d_c = stirling.build_tilted(0.01, backend=_kernels)
    d_p = stirling.build_tilted(0.01, backend=_pykernels)
    assert abs(d_c.C_a - d_p.C_a) < 1e-14 * d_p.C_a
    m = codec.quantized_model(1500)
    assert m.a == codec.TILT_GRID[1500]


@needs_ext
@pytest.mark.parametrize("m,N,s", [(2, 0, 1.0), (50, 3000, 1.5), (1000, 20000, 1.1), (5000, 400, 0.0)])
def test_streams_bit_identical(m, N, s):
    tokens = synthetic.zipf_tokens(s, m, N, seed=m) if s else synthetic.uniform_tokens(m, N, seed=m)
    a = codec.compress(tokens, m, backend=_kernels)
    b = codec.compress(tokens, m, backend=_pykernels)
    assert a == b
    for kern in (_kernels, _pykernels):
        np.testing.assert_array_equal(codec.decompress(a, backend=kern).tokens, tokens)


@needs_ext
def test_escape_bit_identical():
    model = codec.quantized_model(codec.choose_tilt_index(100, 100))
    counts = np.ones(100, dtype=np.int64)
    counts[3] = model.K_max + 1000
    a = codec.encode_counts(counts, model, backend=_kernels)
    assert a == codec.encode_counts(counts, model, backend=_pykernels)


@needs_ext
def test_corrupt_errors_match():
    blob = codec.compress(synthetic.zipf_tokens(1.2, 40, 500, seed=1), 40)
    stream = codec.CodedStream.from_bytes(blob)
    bad = bytes(b ^ 0xA5 for b in stream.payload_block)
    results = []
    for kern in (_kernels, _pykernels):
        try:
            results.append(codec.decode_string_given_counts(bad, codec.decompress(blob).counts, kern).tolist())
        except codec.CorruptStreamError as exc:
            results.append(type(exc))
    assert results[0] == results[1]


def test_pure_python_switch():
    env = dict(os.environ, TILTCODE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import tiltcode; print(tiltcode.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
