"""Compression operators, their wire format and byte accounting.

Wire format (little-endian)
---------------------------
Every payload starts with a 16-byte header::

    u8  kind         0 = identity, 1 = top_k, 2 = stochastic_quant
    u8  code         quant: bits per entry; otherwise value width in bytes
    u16 value_width  width of the decoded values (4 = float32, 8 = float64)
    u32 dense_len    length of the decompressed vector
    u32 block_size   quant: entries per scale block; top_k: index block size
    u32 payload_len  number of body bytes that follow

Bodies:

identity
    ``dense_len`` values.
top_k
    Indices are split into blocks of 65,536 so each fits a u16. The body is
    one LEB128 varint per block giving how many kept entries fall in it,
    then all kept intra-block indices as u16 (ascending), then all kept
    values. Each kept entry therefore costs 2 + value_width bytes, plus one
    or two bytes of count per 65,536 dense entries.
stochastic_quant
    One float32 scale per block, then the codes packed LSB-first at
    ``bits`` per entry.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import DecodeError, InvalidArgument

__all__ = [
    "CompressionSpec",
    "CompressedPayload",
    "compress",
    "decompress",
    "wire_bytes",
    "empirical_snr",
    "HEADER_BYTES",
    "TOPK_INDEX_BLOCK",
]

HEADER_BYTES = 16
TOPK_INDEX_BLOCK = 65_536
_HEADER = struct.Struct("<BBHIII")
_KIND_CODES = {"identity": 0, "top_k": 1, "stochastic_quant": 2}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}
_WIDTH_DTYPES = {4: np.dtype(np.float32), 8: np.dtype(np.float64)}
_VALID_BITS = (1, 2, 4, 8)


@dataclass(frozen=True)
class CompressionSpec:
    """Which operator to apply and its parameters.

    Only the fields relevant to ``kind`` may be set: ``k_fraction`` for
    ``top_k``; ``bits`` and ``block_size`` for ``stochastic_quant``.
    """

    kind: str
    k_fraction: float | None = None
    bits: int | None = None
    block_size: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KIND_CODES:
            raise InvalidArgument(f"unknown compression kind {self.kind!r}")
        if self.kind == "identity":
            if any(v is not None for v in (self.k_fraction, self.bits, self.block_size)):
                raise InvalidArgument("identity compression takes no parameters")
        elif self.kind == "top_k":
            if self.bits is not None or self.block_size is not None:
                raise InvalidArgument("top_k only takes k_fraction")
            if self.k_fraction is None or not (0.0 < self.k_fraction <= 1.0):
                raise InvalidArgument(
                    f"top_k needs k_fraction in (0, 1], got {self.k_fraction}; "
                    "use isolated mode for runs without communication"
                )
        else:
            if self.k_fraction is not None:
                raise InvalidArgument("stochastic_quant does not take k_fraction")
            if self.bits not in _VALID_BITS:
                raise InvalidArgument(f"bits must be one of {_VALID_BITS}, got {self.bits}")
            if self.block_size is None:
                object.__setattr__(self, "block_size", 1024)
            if self.block_size < 1:
                raise InvalidArgument(f"block_size must be >= 1, got {self.block_size}")

    @classmethod
    def identity(cls) -> "CompressionSpec":
        return cls("identity")

    @classmethod
    def top_k(cls, k_fraction: float) -> "CompressionSpec":
        return cls("top_k", k_fraction=float(k_fraction))

    @classmethod
    def quant(cls, bits: int, block_size: int = 1024) -> "CompressionSpec":
        return cls("stochastic_quant", bits=int(bits), block_size=int(block_size))

    def kept(self, d: int) -> int:
        """Number of entries top-k keeps out of ``d``: ``ceil(k_fraction * d)``."""
        if self.kind != "top_k":
            return d
        # round() absorbs representation error such as 0.07 * 100 = 7.000000000000001
        return max(1, math.ceil(round(self.k_fraction * d, 9)))

    @property
    def keep_fraction(self) -> float:
        """Nominal fraction of payload kept, used to look up default averaging rates."""
        if self.kind == "top_k":
            return float(self.k_fraction)
        if self.kind == "stochastic_quant":
            return self.bits / 32.0
        return 1.0

    @property
    def label(self) -> str:
        if self.kind == "top_k":
            return f"top_k:{self.k_fraction:g}"
        if self.kind == "stochastic_quant":
            return f"quant:{self.bits}b"
        return "identity"

    def to_dict(self) -> dict:
        data: dict = {"kind": self.kind}
        if self.kind == "top_k":
            data["k_fraction"] = self.k_fraction
        elif self.kind == "stochastic_quant":
            data["bits"] = self.bits
            data["block_size"] = self.block_size
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "CompressionSpec":
        known = {"kind", "k_fraction", "bits", "block_size"}
        extra = set(data) - known
        if extra:
            raise InvalidArgument(f"unknown compression fields {sorted(extra)}")
        return cls(
            str(data.get("kind", "identity")),
            k_fraction=None if data.get("k_fraction") is None else float(data["k_fraction"]),
            bits=None if data.get("bits") is None else int(data["bits"]),
            block_size=None if data.get("block_size") is None else int(data["block_size"]),
        )


def _varint(value: int) -> bytes:
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _varint_len(value: int) -> int:
    n = 1
    while value >= 0x80:
        value >>= 7
        n += 1
    return n


def _read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    value = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise DecodeError("truncated varint in top_k block table")
        byte = buf[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7
        if shift > 35:
            raise DecodeError("varint too long in top_k block table")


@dataclass(frozen=True, eq=False)
class CompressedPayload:
    """In-memory form of one compressed message.

    ``indices`` are global positions (ascending) for ``top_k``. ``values``
    hold the dense vector for ``identity`` or the kept entries for
    ``top_k``. ``scales`` and ``codes`` are set for ``stochastic_quant``.
    """

    kind: str
    dense_len: int
    dtype: np.dtype
    values: np.ndarray | None = None
    indices: np.ndarray | None = None
    scales: np.ndarray | None = None
    codes: np.ndarray | None = None
    bits: int = 0
    block_size: int = 0

    @property
    def value_width(self) -> int:
        return np.dtype(self.dtype).itemsize

    def _block_counts(self) -> np.ndarray:
        nblocks = -(-self.dense_len // TOPK_INDEX_BLOCK)
        return np.bincount(self.indices // TOPK_INDEX_BLOCK, minlength=nblocks)

    @property
    def body_bytes(self) -> int:
        if self.kind == "identity":
            return self.dense_len * self.value_width
        if self.kind == "top_k":
            table = sum(_varint_len(int(c)) for c in self._block_counts())
            return table + self.indices.shape[0] * (2 + self.value_width)
        nblocks = self.scales.shape[0]
        return 4 * nblocks + -(-self.dense_len * self.bits // 8)

    @property
    def wire_bytes(self) -> int:
        return HEADER_BYTES + self.body_bytes

    def to_bytes(self) -> bytes:
        width = self.value_width
        dtype = _WIDTH_DTYPES[width].newbyteorder("<")
        if self.kind == "identity":
            code, block, body = width, 0, self.values.astype(dtype).tobytes()
        elif self.kind == "top_k":
            table = b"".join(_varint(int(c)) for c in self._block_counts())
            intra = (self.indices % TOPK_INDEX_BLOCK).astype("<u2").tobytes()
            body = table + intra + self.values.astype(dtype).tobytes()
            code, block = width, TOPK_INDEX_BLOCK
        else:
            body = self.scales.astype("<f4").tobytes() + kernels.pack_codes(self.codes, self.bits)
            code, block = self.bits, self.block_size
        header = _HEADER.pack(_KIND_CODES[self.kind], code, width, self.dense_len, block, len(body))
        return header + body

    @classmethod
    def from_bytes(cls, buf: bytes) -> "CompressedPayload":
        if len(buf) < HEADER_BYTES:
            raise DecodeError(f"payload of {len(buf)} bytes is shorter than the header")
        kind_code, code, width, dense_len, block, payload_len = _HEADER.unpack_from(buf)
        if kind_code not in _KIND_NAMES:
            raise DecodeError(f"unknown kind code {kind_code}")
        if width not in _WIDTH_DTYPES:
            raise DecodeError(f"unsupported value width {width}")
        if payload_len != len(buf) - HEADER_BYTES:
            raise DecodeError(f"header says {payload_len} body bytes, found {len(buf) - HEADER_BYTES}")
        kind = _KIND_NAMES[kind_code]
        dtype = _WIDTH_DTYPES[width]
        body = memoryview(buf)[HEADER_BYTES:]
        le = dtype.newbyteorder("<")
        if kind == "identity":
            if code != width or payload_len != dense_len * width:
                raise DecodeError("identity body length does not match dense_len")
            values = np.frombuffer(body, dtype=le).astype(dtype)
            return cls(kind, dense_len, dtype, values=values)
        if kind == "top_k":
            if code != width or block != TOPK_INDEX_BLOCK:
                raise DecodeError("top_k header fields are inconsistent")
            nblocks = -(-dense_len // TOPK_INDEX_BLOCK)
            raw = bytes(body)
            pos = 0
            counts = []
            for _ in range(nblocks):
                c, pos = _read_varint(raw, pos)
                counts.append(c)
            kept = sum(counts)
            if len(raw) - pos != kept * (2 + width):
                raise DecodeError("top_k body length does not match its block table")
            intra = np.frombuffer(raw, dtype="<u2", count=kept, offset=pos).astype(np.int64)
            values = np.frombuffer(raw, dtype=le, count=kept, offset=pos + 2 * kept).astype(dtype)
            block_ids = np.repeat(np.arange(nblocks, dtype=np.int64), counts)
            indices = block_ids * TOPK_INDEX_BLOCK + intra
            if kept and (np.any(indices >= dense_len) or np.any(np.diff(indices) <= 0)):
                raise DecodeError("top_k indices are out of range or not strictly increasing")
            return cls(kind, dense_len, dtype, values=values, indices=indices)
        if code not in _VALID_BITS or block < 1:
            raise DecodeError(f"invalid quantization header (bits={code}, block_size={block})")
        nblocks = -(-dense_len // block)
        packed = -(-dense_len * code // 8)
        if payload_len != 4 * nblocks + packed:
            raise DecodeError("quantized body length does not match dense_len")
        scales = np.frombuffer(body, dtype="<f4", count=nblocks).astype(np.float32)
        if not np.all(np.isfinite(scales)) or np.any(scales < 0):
            raise DecodeError("quantization scales must be finite and non-negative")
        codes = kernels.unpack_codes(bytes(body[4 * nblocks :]), code, dense_len)
        return cls(kind, dense_len, dtype, scales=scales, codes=codes, bits=code, block_size=block)


def _as_vector(v: np.ndarray) -> np.ndarray:
    arr = np.asarray(v)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    arr = np.ascontiguousarray(arr)
    if arr.ndim != 1 or arr.shape[0] == 0:
        raise InvalidArgument("compression needs a non-empty 1-D vector")
    return arr


def compress(
    v: np.ndarray, spec: CompressionSpec, rng: np.random.Generator | None = None
) -> CompressedPayload:
    """Apply ``spec`` to ``v``.

    Values keep the dtype of ``v`` (float32 vectors go on the wire at four
    bytes per value). ``rng`` is only consumed by ``stochastic_quant``, which
    draws one uniform per entry.
    """
    x = _as_vector(v)
    d = x.shape[0]
    if spec.kind == "identity":
        return CompressedPayload("identity", d, x.dtype, values=x.copy())
    if spec.kind == "top_k":
        idx = kernels.topk_indices(x, spec.kept(d))
        return CompressedPayload("top_k", d, x.dtype, values=x[idx], indices=idx)
    if rng is None:
        raise InvalidArgument("stochastic_quant needs a random generator")
    if not np.all(np.isfinite(x)):
        raise InvalidArgument("cannot quantize non-finite values")
    scales = kernels.block_scales(x, spec.block_size)
    codes = kernels.quantize_codes(x, scales, spec.block_size, spec.bits, rng.random(d))
    return CompressedPayload(
        "stochastic_quant", d, x.dtype, scales=scales, codes=codes, bits=spec.bits, block_size=spec.block_size
    )


def decompress(p: CompressedPayload) -> np.ndarray:
    """Dense vector of length ``p.dense_len``; dropped entries are exactly zero."""
    if p.kind == "identity":
        if p.values is None or p.values.shape[0] != p.dense_len:
            raise DecodeError("identity payload length does not match dense_len")
        return p.values.copy()
    if p.kind == "top_k":
        if p.indices is None or p.values is None or p.indices.shape != p.values.shape:
            raise DecodeError("top_k payload has mismatched indices and values")
        out = np.zeros(p.dense_len, dtype=p.dtype)
        if p.indices.shape[0] and (p.indices[-1] >= p.dense_len or p.indices[0] < 0):
            raise DecodeError("top_k index outside the dense vector")
        out[p.indices] = p.values
        return out
    if p.kind == "stochastic_quant":
        if p.codes is None or p.codes.shape[0] != p.dense_len:
            raise DecodeError("quantized payload length does not match dense_len")
        if p.scales is None or p.scales.shape[0] != -(-p.dense_len // p.block_size):
            raise DecodeError("quantized payload has the wrong number of scales")
        return kernels.dequantize(p.codes, p.scales, p.block_size, p.bits, p.dtype)
    raise DecodeError(f"unknown payload kind {p.kind!r}")


def wire_bytes(p: CompressedPayload) -> int:
    """Exact serialized size of ``p`` in bytes (header included)."""
    return p.wire_bytes


def empirical_snr(
    v: np.ndarray, spec: CompressionSpec, trials: int = 1, rng: np.random.Generator | None = None
) -> float:
    """Mean of ``||C[v] - v||^2 / ||v||^2`` over ``trials`` draws of the compressor."""
    x = _as_vector(v)
    if trials < 1:
        raise InvalidArgument(f"trials must be >= 1, got {trials}")
    ref = x.astype(np.float64)
    energy = float(ref @ ref)
    if energy == 0.0:
        raise InvalidArgument("signal-to-noise ratio is undefined for the zero vector")
    if rng is None:
        rng = np.random.default_rng(0)
    total = 0.0
    for _ in range(trials):
        err = decompress(compress(x, spec, rng)).astype(np.float64) - ref
        total += float(err @ err) / energy
    return total / trials
