"""Image files: binary PPM (P6, 8-bit) and FTNS float tensors.

In memory an image is a float64 array of shape (3, H, W) in [0, 1].
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from scaleform.errors import FormatError
from scaleform.numerics import ftns

IMAGE_SUFFIXES = (".ppm", ".ftns")


def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    out: list[bytes] = []
    pos = 0
    while len(out) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PPM header")
        out.append(data[start:pos])
    return out, pos + 1


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), offset = _tokens(data, 4)
    if magic != b"P6":
        raise FormatError(f"{path}: not a binary PPM (magic {magic!r})")
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PPM is supported (maxval {maxval})")
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=offset)
    return pixels.reshape(h, w, 3).transpose(2, 0, 1).astype(np.float64) / 255.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] != 3:
        raise FormatError(f"expected a (3, H, W) image, got {img.shape}")
    _, h, w = img.shape
    header = f"P6\n{w} {h}\n255\n".encode()
    Path(path).write_bytes(header + to_uint8(img).transpose(1, 2, 0).tobytes())


def read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".ftns":
        return ftns.load(path).astype(np.float64)
    return read_ppm(path)


def write_image(path, img: np.ndarray) -> None:
    path = Path(path)
    if path.suffix == ".ftns":
        ftns.save(path, img)
    else:
        write_ppm(path, img)


def list_images(directory) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix in IMAGE_SUFFIXES and p.is_file())
