"""Baseline-JPEG-style lossy round trip without entropy coding.

4:4:4 YCbCr (BT.601 full range), 8x8 orthonormal DCT-II, quantisation with
the IJG quality-scaled standard tables.
"""

from __future__ import annotations

import numpy as np

from scaleform.errors import RangeError

LUMA_TABLE = np.array(
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

CHROMA_TABLE = np.full((8, 8), 99.0)
CHROMA_TABLE[:4, :4] = [
    [17, 18, 24, 47],
    [18, 21, 26, 66],
    [24, 26, 56, 99],
    [47, 66, 99, 99],
]

RGB_TO_YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
YCC_TO_RGB = np.linalg.inv(RGB_TO_YCC)
_CHROMA_OFFSET = np.array([0.0, 128.0, 128.0])


def dct_matrix(n: int = 8) -> np.ndarray:
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    mat[0] /= np.sqrt(2.0)
    return mat


DCT8 = dct_matrix(8)


def quality_scale(q: int) -> int:
    if not 1 <= q <= 100:
        raise RangeError(f"JPEG quality {q} outside [1, 100]")
    return 5000 // q if q < 50 else 200 - 2 * q


def quant_table(base: np.ndarray, q: int) -> np.ndarray:
    scaled = np.floor((base * quality_scale(q) + 50) / 100)
    return np.clip(scaled, 1, 255)


def _blocks(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)


def _unblocks(blocks: np.ndarray) -> np.ndarray:
    hb, wb = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3).reshape(hb * 8, wb * 8)


def block_dct(plane: np.ndarray) -> np.ndarray:
    """Per-8x8-block 2-D DCT-II of a plane whose sides are multiples of 8."""
    return np.einsum("ij,abjk,lk->abil", DCT8, _blocks(plane), DCT8)


def block_idct(coefs: np.ndarray) -> np.ndarray:
    return _unblocks(np.einsum("ji,abjk,kl->abil", DCT8, coefs, DCT8))


def jpeg_sim(img: np.ndarray, q: int) -> np.ndarray:
    """Lossy JPEG-style round trip of a (3, H, W) image in [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    tables = (quant_table(LUMA_TABLE, q), quant_table(CHROMA_TABLE, q), quant_table(CHROMA_TABLE, q))
    _, h, w = img.shape
    ph, pw = (-h) % 8, (-w) % 8
    rgb = np.pad(img, ((0, 0), (0, ph), (0, pw)), mode="edge") * 255.0
    ycc = np.einsum("ij,jhw->ihw", RGB_TO_YCC, rgb) + _CHROMA_OFFSET[:, None, None]
    out = np.empty_like(ycc)
    for c in range(3):
        coefs = block_dct(ycc[c] - 128.0)
        coefs = np.round(coefs / tables[c]) * tables[c]
        out[c] = block_idct(coefs) + 128.0
    rgb = np.einsum("ij,jhw->ihw", YCC_TO_RGB, out - _CHROMA_OFFSET[:, None, None])
    return np.clip(rgb[:, :h, :w] / 255.0, 0.0, 1.0)
