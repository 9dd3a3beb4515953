"""Pure-numpy implementations of the hot kernels.

These are the fallback when the compiled ``_ckernels`` extension is missing,
and the reference the extension is tested against. Element-wise kernels
(top-k, quantization, packing, mixing, the SGD update) perform the same
floating-point operations in the same order as the compiled versions, so the
two backends agree bit for bit on them. The softmax gradient sums in a
different order and agrees only to rounding.
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def topk_indices(values: np.ndarray, k: int) -> np.ndarray:
    """Ascending indices of the ``k`` largest ``|values|``; ties go to the lower index."""
    d = values.shape[0]
    if k >= d:
        return np.arange(d, dtype=np.int64)
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    mags = np.abs(values)
    threshold = np.partition(mags, d - k)[d - k]
    above = np.flatnonzero(mags > threshold)
    need = k - above.shape[0]
    ties = np.flatnonzero(mags == threshold)[:need]
    out = np.concatenate([above, ties])
    out.sort()
    return out.astype(np.int64, copy=False)


def block_scales(values: np.ndarray, block_size: int) -> np.ndarray:
    """Per-block max magnitude, rounded up to the nearest float32."""
    d = values.shape[0]
    nblocks = -(-d // block_size)
    mags = np.abs(values.astype(np.float64, copy=False))
    padded = np.zeros(nblocks * block_size)
    padded[:d] = mags
    scales64 = padded.reshape(nblocks, block_size).max(axis=1)
    scales = scales64.astype(np.float32)
    low = scales.astype(np.float64) < scales64
    scales[low] = np.nextafter(scales[low], np.float32(np.inf))
    return scales


def quantize_codes(
    values: np.ndarray, scales: np.ndarray, block_size: int, bits: int, uniforms: np.ndarray
) -> np.ndarray:
    """Stochastically round each entry onto ``2**bits`` levels spanning ``[-s, s]``."""
    top = float((1 << bits) - 1)
    half = top / 2.0
    x = values.astype(np.float64, copy=False)
    s = np.repeat(scales.astype(np.float64), block_size)[: x.shape[0]]
    safe = np.where(s > 0.0, s, 1.0)
    t = (x / safe + 1.0) * half
    t = np.minimum(np.maximum(t, 0.0), top)
    lo = np.floor(t)
    codes = lo + (uniforms < (t - lo))
    codes = np.minimum(codes, top)
    codes[s == 0.0] = 0.0
    return codes.astype(np.uint8)


def dequantize(
    codes: np.ndarray, scales: np.ndarray, block_size: int, bits: int, dtype: np.dtype
) -> np.ndarray:
    top = float((1 << bits) - 1)
    s = np.repeat(scales.astype(np.float64), block_size)[: codes.shape[0]]
    levels = codes.astype(np.float64) * 2.0 / top - 1.0
    return (levels * s).astype(dtype)


def pack_codes(codes: np.ndarray, bits: int) -> bytes:
    """Pack ``bits``-wide codes LSB-first into bytes."""
    per_byte = 8 // bits
    n = codes.shape[0]
    nbytes = -(-n * bits // 8)
    padded = np.zeros(nbytes * per_byte, dtype=np.uint8)
    padded[:n] = codes
    grid = padded.reshape(nbytes, per_byte).astype(np.uint16)
    shifts = (np.arange(per_byte, dtype=np.uint16) * bits)
    packed = (grid << shifts).sum(axis=1).astype(np.uint8)
    return packed.tobytes()


def unpack_codes(buf: bytes, bits: int, n: int) -> np.ndarray:
    per_byte = 8 // bits
    raw = np.frombuffer(buf, dtype=np.uint8)
    mask = np.uint8((1 << bits) - 1)
    shifts = (np.arange(per_byte, dtype=np.uint8) * bits)
    grid = (raw[:, None] >> shifts) & mask
    return grid.reshape(-1)[:n].copy()


def mix_rows(
    base: np.ndarray,
    msgs: np.ndarray,
    indptr: np.ndarray,
    indices: np.ndarray,
    coeffs: np.ndarray,
) -> np.ndarray:
    """``out[i] = base[i] + sum_k coeffs[k] * msgs[indices[k]]`` over row ``i``'s CSR slice.

    Terms are added in CSR order (ascending sender id).
    """
    out = base.copy()
    dtype = base.dtype.type
    for i in range(base.shape[0]):
        row = out[i]
        for k in range(indptr[i], indptr[i + 1]):
            row += dtype(coeffs[k]) * msgs[indices[k]]
    return out


def sgd_momentum(
    x: np.ndarray, grad: np.ndarray, buf: np.ndarray, lr: float, momentum: float, weight_decay: float
) -> np.ndarray:
    """Update ``buf`` in place and return ``x - lr * buf``."""
    t = x.dtype.type
    step = grad + t(weight_decay) * x
    buf *= t(momentum)
    buf += step
    return x - t(lr) * buf


def softmax_xent_grad(
    params: np.ndarray, features: np.ndarray, labels: np.ndarray, d_in: int, d_out: int
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of a linear softmax classifier and its gradient.

    ``params`` holds a row-major ``(d_in, d_out)`` weight matrix followed by
    ``d_out`` biases. Arithmetic is carried out in float64.
    """
    p = params.astype(np.float64, copy=False)
    w = p[: d_in * d_out].reshape(d_in, d_out)
    b = p[d_in * d_out :]
    x = features.astype(np.float64, copy=False)
    m = x.shape[0]
    logits = x @ w + b
    logits -= logits.max(axis=1, keepdims=True)
    expl = np.exp(logits)
    norm = expl.sum(axis=1)
    rows = np.arange(m)
    loss = float(np.mean(np.log(norm) - logits[rows, labels]))
    probs = expl / norm[:, None]
    probs[rows, labels] -= 1.0
    probs /= m
    grad = np.empty(d_in * d_out + d_out)
    grad[: d_in * d_out] = (x.T @ probs).reshape(-1)
    grad[d_in * d_out :] = probs.sum(axis=0)
    return loss, grad.astype(params.dtype, copy=False)
