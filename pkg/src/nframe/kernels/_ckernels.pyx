# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; bit-compatible twin of _pykernels (see its note on
expression ordering). Compiled with -ffp-contract=off so FMA contraction
cannot change results relative to numpy."""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

cdef int _NEAREST = 0, _BILINEAR = 1, _BICUBIC = 2


cdef inline double _coord(Py_ssize_t j, Py_ssize_t src_len, Py_ssize_t out_len) noexcept nogil:
    if out_len > 1:
        return (j * (src_len - 1.0)) / (out_len - 1.0)
    return (src_len - 1.0) / 2.0


cdef inline double _cubic_edge(double t) noexcept nogil:
    return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0


cdef inline double _cubic_center(double t) noexcept nogil:
    return ((1.5 * t - 2.5) * t) * t + 1.0


cdef inline Py_ssize_t _clamp(Py_ssize_t i, Py_ssize_t hi) noexcept nogil:
    if i < 0:
        return 0
    if i > hi:
        return hi
    return i


cdef void _resize_rows(double[:, :, ::1] src, double[:, :, ::1] dst, int mode) noexcept nogil:
    # resample axis 0 of src into dst (same trailing dims)
    cdef Py_ssize_t src_len = src.shape[0], out_len = dst.shape[0]
    cdef Py_ssize_t w = src.shape[1], ch = src.shape[2]
    cdef Py_ssize_t i, j, c, i0, a0, a1, t0, t1, t2, t3
    cdef double sx, f, w0, w1, w2, w3
    for i in range(out_len):
        sx = _coord(i, src_len, out_len)
        if mode == _NEAREST:
            a0 = _clamp(<Py_ssize_t>floor(sx + 0.5), src_len - 1)
            for j in range(w):
                for c in range(ch):
                    dst[i, j, c] = src[a0, j, c]
        elif mode == _BILINEAR:
            i0 = <Py_ssize_t>floor(sx)
            f = sx - floor(sx)
            a0 = _clamp(i0, src_len - 1)
            a1 = _clamp(i0 + 1, src_len - 1)
            for j in range(w):
                for c in range(ch):
                    dst[i, j, c] = (1.0 - f) * src[a0, j, c] + f * src[a1, j, c]
        else:
            i0 = <Py_ssize_t>floor(sx)
            f = sx - floor(sx)
            w0 = _cubic_edge(1.0 + f)
            w1 = _cubic_center(f)
            w2 = _cubic_center(1.0 - f)
            w3 = _cubic_edge(2.0 - f)
            t0 = _clamp(i0 - 1, src_len - 1)
            t1 = _clamp(i0, src_len - 1)
            t2 = _clamp(i0 + 1, src_len - 1)
            t3 = _clamp(i0 + 2, src_len - 1)
            for j in range(w):
                for c in range(ch):
                    dst[i, j, c] = (
                        w0 * src[t0, j, c]
                        + w1 * src[t1, j, c]
                        + w2 * src[t2, j, c]
                        + w3 * src[t3, j, c]
                    )


def resize(cnp.ndarray[double, ndim=3] src, Py_ssize_t out_h, Py_ssize_t out_w, int mode):
    cdef cnp.ndarray[double, ndim=3] srcT = np.ascontiguousarray(src.transpose(1, 0, 2))
    cdef cnp.ndarray[double, ndim=3] tmpT = np.empty(
        (out_w, src.shape[0], src.shape[2]), dtype=np.float64
    )
    _resize_rows(srcT, tmpT, mode)
    cdef cnp.ndarray[double, ndim=3] tmp = np.ascontiguousarray(tmpT.transpose(1, 0, 2))
    cdef cnp.ndarray[double, ndim=3] out = np.empty(
        (out_h, out_w, src.shape[2]), dtype=np.float64
    )
    _resize_rows(tmp, out, mode)
    return out


def warp_affine(
    cnp.ndarray[double, ndim=3] src_arr,
    cnp.ndarray[double, ndim=2] m_arr,
    Py_ssize_t out_h,
    Py_ssize_t out_w,
    int mode,
):
    cdef double[:, :, ::1] src = src_arr
    cdef double[:, ::1] m = m_arr
    cdef cnp.ndarray[double, ndim=3] out_arr = np.zeros(
        (out_h, out_w, src_arr.shape[2]), dtype=np.float64
    )
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1], ch = src.shape[2]
    cdef Py_ssize_t r, c, k, r0, c0, ra, rb, ca, cb, i
    cdef Py_ssize_t rows[4]
    cdef Py_ssize_t cols[4]
    cdef double wr[4]
    cdef double wc[4]
    cdef double sr, sc, fr, fc, row0, row1, row, acc
    with nogil:
        for r in range(out_h):
            for c in range(out_w):
                sr = m[0, 0] * r + m[0, 1] * c + m[0, 2]
                sc = m[1, 0] * r + m[1, 1] * c + m[1, 2]
                if not (sr >= 0.0 and sr <= h - 1.0 and sc >= 0.0 and sc <= w - 1.0):
                    continue
                if mode == _NEAREST:
                    ra = _clamp(<Py_ssize_t>floor(sr + 0.5), h - 1)
                    ca = _clamp(<Py_ssize_t>floor(sc + 0.5), w - 1)
                    for k in range(ch):
                        out[r, c, k] = src[ra, ca, k]
                elif mode == _BILINEAR:
                    r0 = <Py_ssize_t>floor(sr)
                    c0 = <Py_ssize_t>floor(sc)
                    fr = sr - floor(sr)
                    fc = sc - floor(sc)
                    ra = _clamp(r0, h - 1)
                    rb = _clamp(r0 + 1, h - 1)
                    ca = _clamp(c0, w - 1)
                    cb = _clamp(c0 + 1, w - 1)
                    for k in range(ch):
                        row0 = (1.0 - fc) * src[ra, ca, k] + fc * src[ra, cb, k]
                        row1 = (1.0 - fc) * src[rb, ca, k] + fc * src[rb, cb, k]
                        out[r, c, k] = (1.0 - fr) * row0 + fr * row1
                else:
                    r0 = <Py_ssize_t>floor(sr)
                    c0 = <Py_ssize_t>floor(sc)
                    fr = sr - floor(sr)
                    fc = sc - floor(sc)
                    wr[0] = _cubic_edge(1.0 + fr)
                    wr[1] = _cubic_center(fr)
                    wr[2] = _cubic_center(1.0 - fr)
                    wr[3] = _cubic_edge(2.0 - fr)
                    wc[0] = _cubic_edge(1.0 + fc)
                    wc[1] = _cubic_center(fc)
                    wc[2] = _cubic_center(1.0 - fc)
                    wc[3] = _cubic_edge(2.0 - fc)
                    for i in range(4):
                        rows[i] = _clamp(r0 + i - 1, h - 1)
                        cols[i] = _clamp(c0 + i - 1, w - 1)
                    for k in range(ch):
                        acc = 0.0
                        for i in range(4):
                            row = (
                                wc[0] * src[rows[i], cols[0], k]
                                + wc[1] * src[rows[i], cols[1], k]
                                + wc[2] * src[rows[i], cols[2], k]
                                + wc[3] * src[rows[i], cols[3], k]
                            )
                            if i == 0:
                                acc = wr[0] * row
                            else:
                                acc = acc + wr[i] * row
                        out[r, c, k] = acc
    return out_arr


cdef inline Py_ssize_t _reflect(Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    # numpy-style reflect (no edge repeat), valid for single-pixel padding
    if i < 0:
        return -i
    if i >= n:
        return 2 * n - 2 - i
    return i


def conv3x3_reflect(cnp.ndarray[double, ndim=3] src_arr, cnp.ndarray[double, ndim=2] k_arr):
    cdef double[:, :, ::1] src = src_arr
    cdef double[:, ::1] kern = k_arr
    cdef cnp.ndarray[double, ndim=3] out_arr = np.empty_like(src_arr)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1], ch = src.shape[2]
    cdef Py_ssize_t r, c, k, dr, dc, rr, cc
    cdef double acc
    with nogil:
        for r in range(h):
            for c in range(w):
                for k in range(ch):
                    acc = 0.0
                    for dr in range(3):
                        rr = _reflect(r + dr - 1, h)
                        for dc in range(3):
                            cc = _reflect(c + dc - 1, w)
                            if dr == 0 and dc == 0:
                                acc = kern[0, 0] * src[rr, cc, k]
                            else:
                                acc = acc + kern[dr, dc] * src[rr, cc, k]
                    out[r, c, k] = acc
    return out_arr
