# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Signatures and results mirror ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport exp, log, floor, fabs, nextafterf, INFINITY
from libc.stdint cimport int64_t, uint8_t, uint16_t

cnp.import_array()

NAME = "cython"


cdef void _swap(double* a, int64_t i, int64_t j) noexcept nogil:
    cdef double t = a[i]
    a[i] = a[j]
    a[j] = t


cdef double _select(double* a, int64_t n, int64_t kth) noexcept nogil:
    # Hoare quickselect with median-of-three pivots; returns the kth smallest.
    cdef int64_t lo = 0, hi = n - 1, i, j, mid
    cdef double pivot
    while hi > lo:
        mid = lo + (hi - lo) // 2
        if a[mid] < a[lo]:
            _swap(a, mid, lo)
        if a[hi] < a[lo]:
            _swap(a, hi, lo)
        if a[hi] < a[mid]:
            _swap(a, hi, mid)
        pivot = a[mid]
        i = lo
        j = hi
        while i <= j:
            while a[i] < pivot:
                i += 1
            while a[j] > pivot:
                j -= 1
            if i <= j:
                _swap(a, i, j)
                i += 1
                j -= 1
        if kth <= j:
            hi = j
        elif kth >= i:
            lo = i
        else:
            return a[kth]
    return a[kth]


def topk_indices(floating[::1] values, Py_ssize_t k):
    cdef Py_ssize_t d = values.shape[0], i, taken = 0, above = 0
    if k >= d:
        return np.arange(d, dtype=np.int64)
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    cdef double[::1] mags = np.empty(d, dtype=np.float64)
    for i in range(d):
        mags[i] = fabs(values[i])
    cdef double threshold = _select(&mags[0], d, d - k)
    out = np.empty(k, dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef double m
    for i in range(d):
        if fabs(values[i]) > threshold:
            above += 1
    cdef Py_ssize_t ties = k - above
    for i in range(d):
        m = fabs(values[i])
        if m > threshold:
            o[taken] = i
            taken += 1
        elif m == threshold and ties > 0:
            o[taken] = i
            taken += 1
            ties -= 1
    return out


def block_scales(floating[::1] values, Py_ssize_t block_size):
    cdef Py_ssize_t d = values.shape[0]
    cdef Py_ssize_t nblocks = (d + block_size - 1) // block_size
    out = np.empty(nblocks, dtype=np.float32)
    cdef float[::1] o = out
    cdef Py_ssize_t b, i, end
    cdef double best, m
    cdef float f
    for b in range(nblocks):
        best = 0.0
        end = min(d, (b + 1) * block_size)
        for i in range(b * block_size, end):
            m = fabs(<double>values[i])
            if m > best:
                best = m
        f = <float>best
        if <double>f < best:
            f = nextafterf(f, INFINITY)
        o[b] = f
    return out


def quantize_codes(floating[::1] values, float[::1] scales, Py_ssize_t block_size, int bits,
                   double[::1] uniforms):
    cdef Py_ssize_t d = values.shape[0], i
    cdef double top = <double>((1 << bits) - 1)
    cdef double half = top / 2.0
    cdef double s, t, lo, code
    out = np.empty(d, dtype=np.uint8)
    cdef uint8_t[::1] o = out
    for i in range(d):
        s = <double>scales[i // block_size]
        if s == 0.0:
            o[i] = 0
            continue
        t = (<double>values[i] / s + 1.0) * half
        if t < 0.0:
            t = 0.0
        if t > top:
            t = top
        lo = floor(t)
        code = lo + (1.0 if uniforms[i] < (t - lo) else 0.0)
        if code > top:
            code = top
        o[i] = <uint8_t>code
    return out


def dequantize(const uint8_t[::1] codes, float[::1] scales, Py_ssize_t block_size, int bits, dtype):
    cdef Py_ssize_t n = codes.shape[0], i
    cdef double top = <double>((1 << bits) - 1)
    cdef double[::1] o = np.empty(n, dtype=np.float64)
    for i in range(n):
        o[i] = (<double>codes[i] * 2.0 / top - 1.0) * <double>scales[i // block_size]
    return np.asarray(o).astype(dtype)


def pack_codes(const uint8_t[::1] codes, int bits):
    cdef Py_ssize_t n = codes.shape[0], i
    cdef Py_ssize_t nbytes = (n * bits + 7) // 8
    cdef int per_byte = 8 // bits
    out = np.zeros(nbytes, dtype=np.uint8)
    cdef uint8_t[::1] o = out
    for i in range(n):
        o[i // per_byte] |= <uint8_t>(codes[i] << ((i % per_byte) * bits))
    return out.tobytes()


def unpack_codes(const uint8_t[::1] buf, int bits, Py_ssize_t n):
    cdef int per_byte = 8 // bits
    cdef uint8_t mask = <uint8_t>((1 << bits) - 1)
    cdef Py_ssize_t i
    out = np.empty(n, dtype=np.uint8)
    cdef uint8_t[::1] o = out
    for i in range(n):
        o[i] = (buf[i // per_byte] >> ((i % per_byte) * bits)) & mask
    return out


def mix_rows(floating[:, ::1] base, floating[:, ::1] msgs, const int64_t[::1] indptr,
             const int64_t[::1] indices, const double[::1] coeffs):
    cdef Py_ssize_t n = base.shape[0], d = base.shape[1], i, j, k
    out_arr = np.array(base, copy=True)
    cdef floating[:, ::1] out = out_arr
    cdef floating c
    cdef int64_t src
    for i in range(n):
        for k in range(indptr[i], indptr[i + 1]):
            c = <floating>coeffs[k]
            src = indices[k]
            for j in range(d):
                out[i, j] += c * msgs[src, j]
    return out_arr


def sgd_momentum(floating[::1] x, floating[::1] grad, floating[::1] buf, double lr,
                 double momentum, double weight_decay):
    cdef Py_ssize_t d = x.shape[0], i
    cdef floating lr_ = <floating>lr
    cdef floating mom = <floating>momentum
    cdef floating wd = <floating>weight_decay
    cdef floating step
    out_arr = np.empty_like(np.asarray(x))
    cdef floating[::1] out = out_arr
    for i in range(d):
        step = grad[i] + wd * x[i]
        buf[i] = mom * buf[i] + step
        out[i] = x[i] - lr_ * buf[i]
    return out_arr


def softmax_xent_grad(floating[::1] params, floating[:, ::1] features, const int64_t[::1] labels,
                      Py_ssize_t d_in, Py_ssize_t d_out):
    cdef Py_ssize_t m = features.shape[0], r, a, c
    cdef Py_ssize_t nw = d_in * d_out
    cdef double[::1] g = np.zeros(nw + d_out, dtype=np.float64)
    cdef double[::1] z = np.empty(d_out, dtype=np.float64)
    cdef double total = 0.0, mx, norm, coef, inv_m = 1.0 / m, xa, picked
    for r in range(m):
        for c in range(d_out):
            z[c] = <double>params[nw + c]
        for a in range(d_in):
            xa = <double>features[r, a]
            for c in range(d_out):
                z[c] += xa * <double>params[a * d_out + c]
        mx = z[0]
        for c in range(1, d_out):
            if z[c] > mx:
                mx = z[c]
        picked = z[labels[r]] - mx
        norm = 0.0
        for c in range(d_out):
            z[c] = exp(z[c] - mx)
            norm += z[c]
        total += log(norm) - picked
        for c in range(d_out):
            coef = z[c] / norm
            if c == labels[r]:
                coef -= 1.0
            coef *= inv_m
            g[nw + c] += coef
            for a in range(d_in):
                g[a * d_out + c] += <double>features[r, a] * coef
    return total * inv_m, np.asarray(g).astype(np.asarray(params).dtype)
