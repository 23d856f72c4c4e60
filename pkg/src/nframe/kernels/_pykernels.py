"""Pure-numpy reference kernels.

Expression orderings here are deliberately mirrored by the Cython backend
(left-associated adds, same Horner forms) so the two produce bit-identical
output; do not "simplify" arithmetic in one without the other.
"""

import numpy as np

_NEAREST, _BILINEAR, _BICUBIC = 0, 1, 2


def _coords(src_len: int, out_len: int) -> np.ndarray:
    idx = np.arange(out_len, dtype=np.float64)
    if out_len > 1:
        return (idx * (src_len - 1.0)) / (out_len - 1.0)
    return np.full(1, (src_len - 1.0) / 2.0)


def _cubic_edge(t):
    # Catmull-Rom kernel on [1, 2)
    return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0


def _cubic_center(t):
    # Catmull-Rom kernel on [0, 1]
    return ((1.5 * t - 2.5) * t) * t + 1.0


def _resize_axis0(arr: np.ndarray, out_len: int, mode: int) -> np.ndarray:
    src_len = arr.shape[0]
    sx = _coords(src_len, out_len)
    extra = (1,) * (arr.ndim - 1)
    if mode == _NEAREST:
        i = np.clip(np.floor(sx + 0.5).astype(np.intp), 0, src_len - 1)
        return arr[i].copy()
    i0 = np.floor(sx).astype(np.intp)
    f = (sx - i0).reshape((-1,) + extra)
    if mode == _BILINEAR:
        a0 = np.clip(i0, 0, src_len - 1)
        a1 = np.clip(i0 + 1, 0, src_len - 1)
        return (1.0 - f) * arr[a0] + f * arr[a1]
    w0 = _cubic_edge(1.0 + f)
    w1 = _cubic_center(f)
    w2 = _cubic_center(1.0 - f)
    w3 = _cubic_edge(2.0 - f)
    t0 = np.clip(i0 - 1, 0, src_len - 1)
    t1 = np.clip(i0, 0, src_len - 1)
    t2 = np.clip(i0 + 1, 0, src_len - 1)
    t3 = np.clip(i0 + 2, 0, src_len - 1)
    return w0 * arr[t0] + w1 * arr[t1] + w2 * arr[t2] + w3 * arr[t3]


def resize(src: np.ndarray, out_h: int, out_w: int, mode: int) -> np.ndarray:
    # horizontal pass, then vertical, matching the C implementation
    tmp = _resize_axis0(src.transpose(1, 0, 2), out_w, mode).transpose(1, 0, 2)
    out = _resize_axis0(np.ascontiguousarray(tmp), out_h, mode)
    return np.ascontiguousarray(out)


def _gather(src: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return src[rows, cols]


def warp_affine(src: np.ndarray, m: np.ndarray, out_h: int, out_w: int, mode: int) -> np.ndarray:
    h, w = src.shape[0], src.shape[1]
    r = np.arange(out_h, dtype=np.float64)[:, None]
    c = np.arange(out_w, dtype=np.float64)[None, :]
    sr = m[0, 0] * r + m[0, 1] * c + m[0, 2]
    sc = m[1, 0] * r + m[1, 1] * c + m[1, 2]
    valid = (sr >= 0.0) & (sr <= h - 1.0) & (sc >= 0.0) & (sc <= w - 1.0)

    if mode == _NEAREST:
        ri = np.clip(np.floor(sr + 0.5).astype(np.intp), 0, h - 1)
        ci = np.clip(np.floor(sc + 0.5).astype(np.intp), 0, w - 1)
        out = _gather(src, ri, ci)
        return np.where(valid[..., None], out, 0.0)

    r0 = np.floor(sr).astype(np.intp)
    c0 = np.floor(sc).astype(np.intp)
    fr = (sr - r0)[..., None]
    fc = (sc - c0)[..., None]

    if mode == _BILINEAR:
        ra = np.clip(r0, 0, h - 1)
        rb = np.clip(r0 + 1, 0, h - 1)
        ca = np.clip(c0, 0, w - 1)
        cb = np.clip(c0 + 1, 0, w - 1)
        row0 = (1.0 - fc) * _gather(src, ra, ca) + fc * _gather(src, ra, cb)
        row1 = (1.0 - fc) * _gather(src, rb, ca) + fc * _gather(src, rb, cb)
        out = (1.0 - fr) * row0 + fr * row1
        return np.where(valid[..., None], out, 0.0)

    wr = [_cubic_edge(1.0 + fr), _cubic_center(fr), _cubic_center(1.0 - fr), _cubic_edge(2.0 - fr)]
    wc = [_cubic_edge(1.0 + fc), _cubic_center(fc), _cubic_center(1.0 - fc), _cubic_edge(2.0 - fc)]
    rows = [np.clip(r0 + d, 0, h - 1) for d in (-1, 0, 1, 2)]
    cols = [np.clip(c0 + d, 0, w - 1) for d in (-1, 0, 1, 2)]
    out = None
    for i in range(4):
        row = (
            wc[0] * _gather(src, rows[i], cols[0])
            + wc[1] * _gather(src, rows[i], cols[1])
            + wc[2] * _gather(src, rows[i], cols[2])
            + wc[3] * _gather(src, rows[i], cols[3])
        )
        term = wr[i] * row
        out = term if out is None else out + term
    return np.where(valid[..., None], out, 0.0)


def conv3x3_reflect(src: np.ndarray, k: np.ndarray) -> np.ndarray:
    h, w = src.shape[0], src.shape[1]
    pad = np.pad(src, ((1, 1), (1, 1), (0, 0)), mode="reflect")
    out = None
    for dr in range(3):
        for dc in range(3):
            term = k[dr, dc] * pad[dr : dr + h, dc : dc + w]
            out = term if out is None else out + term
    return out
