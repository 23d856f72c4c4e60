"""Bundled baseline JPEG degradation with fixed quantization tables.

Implements the lossy core of a baseline codec (YCbCr transform, 8x8 DCT,
quality-scaled Annex-K quantization, inverse path) so the jpeg augmentation
is reproducible across platforms. Entropy coding is lossless and therefore
omitted from the encode->decode round trip; image file I/O lives in
image_ops.
"""

import numpy as np

from .errors import InvalidSpecError

_LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)

_CHROMA_TABLE = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.float64,
)


def _dct_basis() -> np.ndarray:
    u = np.arange(8).reshape(-1, 1)
    x = np.arange(8).reshape(1, -1)
    m = np.cos((2 * x + 1) * u * np.pi / 16.0) / 2.0
    m[0, :] /= np.sqrt(2.0)
    return m


_DCT = _dct_basis()


def quant_table(base: np.ndarray, quality: int) -> np.ndarray:
    """IJG quality scaling of a base table, clamped to [1, 255]."""
    if not 1 <= quality <= 100:
        raise InvalidSpecError(f"jpeg quality must be in [1, 100], got {quality}")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.clip(np.floor((base * scale + 50.0) / 100.0), 1.0, 255.0)


def _to_blocks(chan: np.ndarray) -> np.ndarray:
    h, w = chan.shape
    return chan.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)


def _from_blocks(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    return blocks.transpose(0, 2, 1, 3).reshape(h, w)


def _degrade_channel(chan: np.ndarray, table: np.ndarray) -> np.ndarray:
    blocks = _to_blocks(chan - 128.0)
    coeff = np.einsum("ux,nmxy,vy->nmuv", _DCT, blocks, _DCT)
    quantized = np.rint(coeff / table) * table
    back = np.einsum("ux,nmuv,vy->nmxy", _DCT, quantized, _DCT) + 128.0
    return _from_blocks(back, chan.shape[0], chan.shape[1])


def jpeg_roundtrip(img: np.ndarray, quality: int) -> np.ndarray:
    """Encode a [0,1] RGB image at ``quality`` and decode it again."""
    h, w = img.shape[0], img.shape[1]
    rgb = np.rint(np.clip(img, 0.0, 1.0) * 255.0)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b

    pad_h = (-h) % 8
    pad_w = (-w) % 8
    lum_q = quant_table(_LUMA_TABLE, quality)
    chr_q = quant_table(_CHROMA_TABLE, quality)
    out = []
    for chan, table in ((y, lum_q), (cb, chr_q), (cr, chr_q)):
        padded = np.pad(chan, ((0, pad_h), (0, pad_w)), mode="edge")
        out.append(_degrade_channel(padded, table)[:h, :w])
    y2, cb2, cr2 = out

    r2 = y2 + 1.402 * (cr2 - 128.0)
    g2 = y2 - 0.344136 * (cb2 - 128.0) - 0.714136 * (cr2 - 128.0)
    b2 = y2 + 1.772 * (cb2 - 128.0)
    decoded = np.stack([r2, g2, b2], axis=-1)
    return np.rint(np.clip(decoded, 0.0, 255.0)) / 255.0
