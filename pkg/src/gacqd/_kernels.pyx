# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the dense-network hot path.

Semantics mirror ``_kernels_py`` exactly (same parameter layout, activation
codes, and averaging rules); that module is the readable reference. The BLAS
calls go through scipy's exported cython_blas symbols, so the matrix products
hit the same OpenBLAS numpy uses, minus the per-op Python overhead.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt, tanh
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

ACT_IDENTITY = 0
ACT_RELU = 1
ACT_TANH = 2

cdef long _RELU = 1, _TANH = 2


cdef void _gemm_abt(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c) noexcept nogil:
    # c (m,n) = a (m,k) @ b (n,k)^T, all row-major
    cdef int m = <int> a.shape[0]
    cdef int k = <int> a.shape[1]
    cdef int n = <int> b.shape[0]
    cdef double one = 1.0, zero = 0.0
    cdef char ct = b'T', cn = b'N'
    dgemm(&ct, &cn, &n, &m, &k, &one, &b[0, 0], &k, &a[0, 0], &k, &zero, &c[0, 0], &n)


cdef void _gemm_ab(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c) noexcept nogil:
    # c (m,n) = a (m,k) @ b (k,n), all row-major
    cdef int m = <int> a.shape[0]
    cdef int k = <int> a.shape[1]
    cdef int n = <int> b.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char cn = b'N'
    dgemm(&cn, &cn, &n, &m, &k, &one, &b[0, 0], &n, &a[0, 0], &k, &zero, &c[0, 0], &n)


cdef void _gemm_atb(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c) noexcept nogil:
    # c (m,n) = a (k,m)^T @ b (k,n), all row-major
    cdef int k = <int> a.shape[0]
    cdef int m = <int> a.shape[1]
    cdef int n = <int> b.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char ct = b'T', cn = b'N'
    dgemm(&cn, &ct, &n, &m, &k, &one, &b[0, 0], &n, &a[0, 0], &m, &zero, &c[0, 0], &n)


def mlp_forward(cnp.int64_t[::1] sizes, cnp.int64_t[::1] acts,
                cnp.uint8_t[::1] ln, double[::1] params, double[:, ::1] x,
                masks, double ln_eps, bint keep_cache):
    """See _kernels_py.mlp_forward."""
    cdef Py_ssize_t n_layers = sizes.shape[0] - 1
    cdef Py_ssize_t batch = x.shape[0]
    cdef Py_ssize_t layer, off = 0, i, j
    cdef Py_ssize_t n_in, n_out
    cdef double[:, ::1] h = x
    cdef double[:, ::1] w, z, mask
    cdef double[::1] bias, gain, offset, inv
    cdef double[:, ::1] zhat
    cdef double mu, var, d, val
    cdef long code
    cache = [] if keep_cache else None
    z_np = None

    for layer in range(n_layers):
        n_in = sizes[layer]
        n_out = sizes[layer + 1]
        w = <double[:n_out, :n_in]> &params[off]
        off += n_out * n_in
        bias = params[off : off + n_out]
        off += n_out
        z_np = np.empty((batch, n_out), dtype=np.float64)
        z = z_np
        _gemm_abt(h, w, z)
        with nogil:
            for i in range(batch):
                for j in range(n_out):
                    z[i, j] += bias[j]
        mask_np = masks[layer] if masks is not None else None
        if mask_np is not None:
            mask = mask_np
            with nogil:
                for i in range(batch):
                    for j in range(n_out):
                        z[i, j] *= mask[i, j]
        zhat_np = inv_np = None
        if ln[layer]:
            gain = params[off : off + n_out]
            off += n_out
            offset = params[off : off + n_out]
            off += n_out
            zhat_np = np.empty((batch, n_out), dtype=np.float64)
            inv_np = np.empty(batch, dtype=np.float64)
            zhat = zhat_np
            inv = inv_np
            with nogil:
                for i in range(batch):
                    mu = 0.0
                    for j in range(n_out):
                        mu += z[i, j]
                    mu /= n_out
                    var = 0.0
                    for j in range(n_out):
                        d = z[i, j] - mu
                        var += d * d
                    var /= n_out
                    inv[i] = 1.0 / sqrt(var + ln_eps)
                    for j in range(n_out):
                        zhat[i, j] = (z[i, j] - mu) * inv[i]
                        z[i, j] = gain[j] * zhat[i, j] + offset[j]
        code = acts[layer]
        if code != 0:
            with nogil:
                for i in range(batch):
                    for j in range(n_out):
                        val = z[i, j]
                        if code == _RELU:
                            z[i, j] = val if val > 0.0 else 0.0
                        else:
                            z[i, j] = tanh(val)
        h = z
        if keep_cache:
            cache.append((z_np, zhat_np, inv_np))
    return z_np, cache


def mlp_backward(cnp.int64_t[::1] sizes, cnp.int64_t[::1] acts,
                 cnp.uint8_t[::1] ln, double[::1] params, double[:, ::1] x,
                 double[:, ::1] upstream, masks, double ln_eps, cache):
    """See _kernels_py.mlp_backward."""
    cdef Py_ssize_t n_layers = sizes.shape[0] - 1
    cdef Py_ssize_t batch = x.shape[0]
    cdef Py_ssize_t layer, i, j
    cdef Py_ssize_t n_in, n_out, off
    cdef double[:, ::1] w, dz, da, h, mask, zhat, a_out
    cdef double[::1] gain, inv, dw_flat
    cdef double[:, ::1] dw
    cdef double m1, m2, val, scale
    cdef long code

    if cache is None:
        _, cache = mlp_forward(sizes, acts, ln, params, np.asarray(x), masks,
                               ln_eps, True)

    # Parameter offsets of each layer.
    offs = np.empty(n_layers, dtype=np.int64)
    off = 0
    for layer in range(n_layers):
        offs[layer] = off
        off += sizes[layer + 1] * (sizes[layer] + 1)
        if ln[layer]:
            off += 2 * sizes[layer + 1]

    pgrad_np = np.zeros(off, dtype=np.float64)
    cdef double[::1] pgrad = pgrad_np
    da = upstream
    da_np = None

    for layer in range(n_layers - 1, -1, -1):
        n_in = sizes[layer]
        n_out = sizes[layer + 1]
        off = offs[layer]
        w = <double[:n_out, :n_in]> &params[off]
        a_out = cache[layer][0]
        h = cache[layer - 1][0] if layer > 0 else x
        code = acts[layer]
        dz_np = np.empty((batch, n_out), dtype=np.float64)
        dz = dz_np
        with nogil:
            for i in range(batch):
                for j in range(n_out):
                    val = da[i, j]
                    if code == _RELU:
                        dz[i, j] = val if a_out[i, j] > 0.0 else 0.0
                    elif code == _TANH:
                        dz[i, j] = val * (1.0 - a_out[i, j] * a_out[i, j])
                    else:
                        dz[i, j] = val
        if ln[layer]:
            gain = params[off + n_out * (n_in + 1) : off + n_out * (n_in + 1) + n_out]
            zhat = cache[layer][1]
            inv = cache[layer][2]
            with nogil:
                # gain/offset grads live right after W and b in the layout
                for i in range(batch):
                    for j in range(n_out):
                        pgrad[off + n_out * (n_in + 1) + j] += dz[i, j] * zhat[i, j]
                        pgrad[off + n_out * (n_in + 2) + j] += dz[i, j]
                for i in range(batch):
                    m1 = 0.0
                    m2 = 0.0
                    for j in range(n_out):
                        val = dz[i, j] * gain[j]
                        dz[i, j] = val
                        m1 += val
                        m2 += val * zhat[i, j]
                    m1 /= n_out
                    m2 /= n_out
                    for j in range(n_out):
                        dz[i, j] = inv[i] * (dz[i, j] - m1 - zhat[i, j] * m2)
        mask_np = masks[layer] if masks is not None else None
        if mask_np is not None:
            mask = mask_np
            with nogil:
                for i in range(batch):
                    for j in range(n_out):
                        dz[i, j] *= mask[i, j]
        dw = <double[:n_out, :n_in]> &pgrad[off]
        _gemm_atb(dz, h, dw)
        with nogil:
            for i in range(batch):
                for j in range(n_out):
                    pgrad[off + n_out * n_in + j] += dz[i, j]
        da_np = np.empty((batch, n_in), dtype=np.float64)
        da = da_np
        _gemm_ab(dz, w, da)

    scale = 1.0 / batch
    with nogil:
        for i in range(pgrad.shape[0]):
            pgrad[i] *= scale
    return pgrad_np, da_np


def adam_update(double[::1] params, double[::1] grad, double[::1] m,
                double[::1] v, long t, double lr, double beta1, double beta2,
                double eps):
    """One bias-corrected Adam step, in place on params/m/v. ``t`` is 1-based."""
    cdef Py_ssize_t i, n = params.shape[0]
    cdef double c1 = 1.0 - beta1 ** t
    cdef double c2 = 1.0 - beta2 ** t
    cdef double g
    with nogil:
        for i in range(n):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            params[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)


def lerp(double[::1] target, double[::1] online, double tau):
    """target <- (1 - tau) * target + tau * online, in place."""
    cdef Py_ssize_t i, n = target.shape[0]
    with nogil:
        for i in range(n):
            target[i] = (1.0 - tau) * target[i] + tau * online[i]
