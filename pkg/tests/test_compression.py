import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from oracles import quant_wire_bytes, topk_by_sort, topk_wire_bytes
from sparsepush.compression import (
    HEADER_BYTES,
    CompressedPayload,
    CompressionSpec,
    compress,
    decompress,
    empirical_snr,
    wire_bytes,
)
from sparsepush.errors import DecodeError, InvalidArgument

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False, width=32)
vectors = hnp.arrays(np.float32, st.integers(1, 300), elements=finite)


def test_spec_validation():
    with pytest.raises(InvalidArgument, match="isolated"):
        CompressionSpec.top_k(0.0)
    with pytest.raises(InvalidArgument):
        CompressionSpec.top_k(1.5)
    with pytest.raises(InvalidArgument):
        CompressionSpec.quant(3)
    with pytest.raises(InvalidArgument):
        CompressionSpec("identity", k_fraction=0.5)
    with pytest.raises(InvalidArgument):
        CompressionSpec("top_k", k_fraction=0.5, bits=4)
    with pytest.raises(InvalidArgument):
        CompressionSpec("gzip")
    assert CompressionSpec.quant(4).block_size == 1024
    spec = CompressionSpec.top_k(0.01)
    assert CompressionSpec.from_dict(spec.to_dict()) == spec


def test_kept_count():
    assert CompressionSpec.top_k(0.07).kept(100) == 7
    assert CompressionSpec.top_k(0.01).kept(268_346) == 2684
    assert CompressionSpec.top_k(0.25).kept(1) == 1


def test_topk_single_largest():
    p = compress(np.array([3.0, -1.0, 0.5, -4.0]), CompressionSpec.top_k(0.25))
    assert p.indices.tolist() == [3]
    assert p.values.tolist() == [-4.0]
    np.testing.assert_array_equal(decompress(p), [0.0, 0.0, 0.0, -4.0])


def test_topk_ties_lowest_index():
    p = compress(np.ones(4), CompressionSpec.top_k(0.5))
    assert p.indices.tolist() == [0, 1]


def test_identity_exact():
    v = np.random.default_rng(0).standard_normal(97)
    out = decompress(compress(v, CompressionSpec.identity()))
    assert out.dtype == v.dtype
    np.testing.assert_array_equal(out, v)


def test_empty_vector_rejected():
    with pytest.raises(InvalidArgument):
        compress(np.zeros(0), CompressionSpec.identity())


def test_quant_needs_rng():
    with pytest.raises(InvalidArgument):
        compress(np.ones(4), CompressionSpec.quant(4))


@given(v=vectors, k=st.floats(0.001, 1.0))
def test_topk_matches_sort_oracle(v, k):
    spec = CompressionSpec.top_k(k)
    p = compress(v, spec)
    assert p.indices.tolist() == topk_by_sort(v, spec.kept(v.shape[0]))
    out = decompress(p)
    kept = np.zeros(v.shape[0], dtype=bool)
    kept[p.indices] = True
    np.testing.assert_array_equal(out[kept], v[kept])
    assert np.all(out[~kept] == 0)
    if (~kept).any():
        assert np.abs(v[kept]).min() >= np.abs(v[~kept]).max()


@given(v=vectors, spec=st.sampled_from(
    [CompressionSpec.identity(), CompressionSpec.top_k(0.1), CompressionSpec.top_k(1.0),
     CompressionSpec.quant(1, 7), CompressionSpec.quant(2, 16), CompressionSpec.quant(4), CompressionSpec.quant(8, 5)]
), seed=st.integers(0, 2**32 - 1))
def test_serialization_round_trip(v, spec, seed):
    p = compress(v, spec, np.random.default_rng(seed))
    buf = p.to_bytes()
    assert len(buf) == wire_bytes(p)
    q = CompressedPayload.from_bytes(buf)
    np.testing.assert_array_equal(decompress(q), decompress(p))
    assert decompress(q).dtype == v.dtype


def test_wire_format_snapshot():
    v = np.array([0.0, 2.5, -1.0, 0.25], dtype=np.float32)
    tk = compress(v, CompressionSpec.top_k(0.5)).to_bytes()
    assert tk.hex() == (
        "0104040004000000000001000d000000"  # kind 1, width 4, d 4, block 65536, body 13
        "02"  # one block holding two entries
        "01000200"  # intra-block indices 1, 2
        "00002040" "000080bf"  # 2.5, -1.0
    )
    ident = compress(v, CompressionSpec.identity()).to_bytes()
    assert ident[:HEADER_BYTES].hex() == "00040400040000000000000010000000"
    assert ident[HEADER_BYTES:] == v.astype("<f4").tobytes()
    # Uniforms of 0.5 make stochastic rounding deterministic for this input.
    q = compress(v, CompressionSpec.quant(2, 4), _FixedRng(0.5)).to_bytes()
    assert q[:HEADER_BYTES].hex() == "02020400040000000400000005000000"
    assert len(q) == HEADER_BYTES + 4 + 1


class _FixedRng:
    def __init__(self, value):
        self.value = value

    def random(self, n):
        return np.full(n, self.value)


def test_decode_errors():
    v = np.arange(1, 9, dtype=np.float32)
    buf = compress(v, CompressionSpec.top_k(0.5)).to_bytes()
    with pytest.raises(DecodeError):
        CompressedPayload.from_bytes(buf[:10])
    with pytest.raises(DecodeError):
        CompressedPayload.from_bytes(buf[:-1])
    bad = bytearray(buf)
    bad[0] = 9
    with pytest.raises(DecodeError):
        CompressedPayload.from_bytes(bytes(bad))
    # Indices out of order.
    bad = bytearray(buf)
    off = HEADER_BYTES + 1
    bad[off : off + 4] = bad[off + 2 : off + 4] + bad[off : off + 2]
    with pytest.raises(DecodeError):
        CompressedPayload.from_bytes(bytes(bad))
    q = bytearray(compress(v, CompressionSpec.quant(4, 4), np.random.default_rng(0)).to_bytes())
    q[HEADER_BYTES : HEADER_BYTES + 4] = np.array([np.nan], dtype="<f4").tobytes()
    with pytest.raises(DecodeError):
        CompressedPayload.from_bytes(bytes(q))


def test_zero_scale_block_decodes_to_zero():
    p = compress(np.zeros(10, dtype=np.float32), CompressionSpec.quant(4, 10), np.random.default_rng(0))
    assert p.scales.tolist() == [0.0]
    p2 = CompressedPayload(
        "stochastic_quant", 10, np.dtype(np.float32), scales=p.scales,
        codes=np.arange(10, dtype=np.uint8) % 16, bits=4, block_size=10,
    )
    np.testing.assert_array_equal(decompress(p2), np.zeros(10))


@pytest.mark.parametrize("bits", [1, 2, 4, 8])
def test_quant_error_within_one_level(bits):
    rng = np.random.default_rng(bits)
    v = rng.standard_normal(1000)
    spec = CompressionSpec.quant(bits, 128)
    p = compress(v, spec, rng)
    err = np.abs(decompress(p) - v)
    spacing = 2 * np.repeat(p.scales.astype(np.float64), 128)[:1000] / (2**bits - 1)
    # Stochastic rounding moves each entry to one of its two neighbouring levels.
    assert np.all(err <= spacing * (1 + 1e-6))


@pytest.mark.parametrize("bits", [1, 2, 4])
def test_quant_unbiased(bits):
    rng = np.random.default_rng(100 + bits)
    v = rng.uniform(-1, 1, 64)
    spec = CompressionSpec.quant(bits, 16)
    trials = 10_000
    samples = np.array([decompress(compress(v, spec, rng)) for _ in range(trials)])
    se = samples.std(axis=0, ddof=1) / math.sqrt(trials)
    mean = samples.mean(axis=0)
    # Block maxima land on the top level almost surely; the float32 scale sits
    # a few ulps above the true value, hence the small absolute slack.
    outside = np.abs(mean - v) > 3 * se + 1e-6
    # 3-sigma exceedances are expected for about 0.3% of 64 entries.
    assert outside.sum() <= 2


def test_snr_examples():
    assert empirical_snr(np.ones(4), CompressionSpec.identity()) == 0.0
    assert empirical_snr(np.arange(1.0, 6.0), CompressionSpec.top_k(1.0)) == 0.0
    assert empirical_snr(np.ones(4), CompressionSpec.top_k(0.5)) == pytest.approx(0.5)
    with pytest.raises(InvalidArgument):
        empirical_snr(np.zeros(3), CompressionSpec.identity())


@pytest.mark.parametrize(
    "spec",
    [CompressionSpec.top_k(0.001), CompressionSpec.top_k(0.01), CompressionSpec.top_k(0.5),
     CompressionSpec.quant(8), CompressionSpec.quant(4)],
    ids=lambda s: s.label,
)
def test_snr_below_one(spec):
    rng = np.random.default_rng(7)
    worst = max(empirical_snr(rng.standard_normal(1000), spec, rng=rng) for _ in range(1000 if spec.kind == "top_k" else 200))
    assert worst < 1.0


@pytest.mark.xfail(strict=True, reason="unbiased max-scaled quantization at 1-2 bits is noisier than the signal")
@pytest.mark.parametrize("bits", [1, 2])
def test_snr_below_one_low_bits(bits):
    rng = np.random.default_rng(7)
    worst = max(empirical_snr(rng.standard_normal(1000), CompressionSpec.quant(bits), rng=rng) for _ in range(200))
    assert worst < 1.0


@pytest.mark.parametrize("p", [0.1, 0.01, 0.001])
def test_topk_byte_ratio_large_d(p):
    d = 200_000
    v = np.random.default_rng(1).standard_normal(d).astype(np.float32)
    sparse = compress(v, CompressionSpec.top_k(p))
    dense = compress(v, CompressionSpec.identity())
    assert wire_bytes(dense) == HEADER_BYTES + 4 * d
    assert wire_bytes(sparse) == topk_wire_bytes(d, sparse.indices)
    assert wire_bytes(sparse) / wire_bytes(dense) == pytest.approx(1.5 * p, rel=0.02)


@given(d=st.integers(1, 5000), bits=st.sampled_from([1, 2, 4, 8]), block=st.integers(1, 2048))
def test_quant_byte_formula(d, bits, block):
    v = np.linspace(-1, 1, d, dtype=np.float32)
    p = compress(v, CompressionSpec.quant(bits, block), np.random.default_rng(0))
    assert wire_bytes(p) == quant_wire_bytes(d, bits, block)
    assert len(p.to_bytes()) == wire_bytes(p)


def test_quant_factors_below_ideal():
    d = 268_346
    v = np.random.default_rng(3).standard_normal(d).astype(np.float32)
    dense = wire_bytes(compress(v, CompressionSpec.identity()))
    for bits in (1, 2, 4, 8):
        factor = dense / wire_bytes(compress(v, CompressionSpec.quant(bits), np.random.default_rng(0)))
        assert 0.95 * 32 / bits < factor < 32 / bits
