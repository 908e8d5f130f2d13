"""Datasets and the procedural toy face corpus."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from scaleform import rng as rngmod
from scaleform.degrade import DegradationRanges, DegradationSpec, degrade, gaussian_blur, sample_spec
from scaleform.errors import ConfigError, UsageError
from scaleform.harness.imageio import list_images, read_image, write_image

TOY_RANGES = DegradationRanges(sigma=(0.2, 1.5), r=(2.0, 2.0), delta=(0.0, 5.0), q=(80, 100))


def _ellipse(yy, xx, cy, cx, ry, rx, angle=0.0):
    c, s = np.cos(angle), np.sin(angle)
    dy, dx = yy - cy, xx - cx
    u = (dx * c + dy * s) / rx
    v = (-dx * s + dy * c) / ry
    return (u * u + v * v) <= 1.0


def synth_face(seed: int, index: int, size: int = 32, supersample: int = 4) -> np.ndarray:
    """A cartoon face: gradient background, skin ellipse, hair, eyes, mouth."""
    g = rngmod.stream(seed, "face", index)
    n = size * supersample
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    yy = (yy + 0.5) / n
    xx = (xx + 0.5) / n
    bg_a, bg_b = g.uniform(0.1, 0.9, 3), g.uniform(0.1, 0.9, 3)
    t = xx * g.uniform(0.2, 0.8) + yy * g.uniform(0.2, 0.8)
    img = bg_a[:, None, None] * (1 - t) + bg_b[:, None, None] * t

    def paint(mask, color):
        img[:, mask] = np.asarray(color)[:, None]

    cx, cy = g.uniform(0.42, 0.58), g.uniform(0.48, 0.58)
    fw, fh = g.uniform(0.24, 0.32), g.uniform(0.30, 0.38)
    tilt = g.uniform(-0.2, 0.2)
    skin = np.array([g.uniform(0.55, 0.95), g.uniform(0.4, 0.75), g.uniform(0.3, 0.6)])
    hair = g.uniform(0.0, 0.45, 3)
    paint(_ellipse(yy, xx, cy - fh * 0.35, cx, fh * 0.8, fw * 1.12, tilt), hair)
    paint(_ellipse(yy, xx, cy, cx, fh, fw, tilt), skin)
    eye_dx, eye_y = fw * g.uniform(0.35, 0.5), cy - fh * g.uniform(0.1, 0.3)
    eye_color = g.uniform(0.0, 0.3, 3)
    for side in (-1, 1):
        ex = cx + side * eye_dx
        paint(_ellipse(yy, xx, eye_y, ex, fh * 0.12, fw * 0.22), [0.95, 0.95, 0.95])
        paint(_ellipse(yy, xx, eye_y, ex, fh * 0.08, fw * 0.1), eye_color)
    mouth = np.array([g.uniform(0.5, 0.9), g.uniform(0.1, 0.3), g.uniform(0.15, 0.35)])
    paint(_ellipse(yy, xx, cy + fh * g.uniform(0.45, 0.6), cx, fh * 0.08, fw * g.uniform(0.3, 0.5)), mouth)
    img = img.reshape(3, size, supersample, size, supersample).mean(axis=(2, 4))
    return np.clip(gaussian_blur(img, 0.5), 0.0, 1.0)


@dataclass
class Pair:
    name: str
    lq: np.ndarray
    hq: np.ndarray
    spec: DegradationSpec | None = None


def make_toy_pairs(n: int = 8, seed: int = 7, size: int = 32, start: int = 0,
                   ranges: DegradationRanges = TOY_RANGES) -> list[Pair]:
    pairs = []
    for i in range(start, start + n):
        hq = synth_face(seed, i, size)
        spec = sample_spec(ranges, seed, i)
        pairs.append(Pair(f"face{i:03d}", degrade(hq, spec, jitter=False).image, hq, spec))
    return pairs


def write_pairs(directory, pairs: list[Pair], suffix: str = ".ppm") -> Path:
    directory = Path(directory)
    (directory / "hq").mkdir(parents=True, exist_ok=True)
    (directory / "lq").mkdir(parents=True, exist_ok=True)
    for p in pairs:
        write_image(directory / "hq" / f"{p.name}{suffix}", p.hq)
        write_image(directory / "lq" / f"{p.name}{suffix}", p.lq)
    return directory


class Dataset:
    """Either fixed (lq, hq) pairs or HQ images degraded on the fly."""

    def __init__(self, hq: list[np.ndarray], lq: list[np.ndarray] | None = None, names: list[str] | None = None):
        if not hq:
            raise UsageError("dataset is empty")
        self.hq = [np.asarray(h, dtype=np.float64) for h in hq]
        self.lq = None if lq is None else [np.asarray(x, dtype=np.float64) for x in lq]
        self.names = names or [f"img{i:04d}" for i in range(len(hq))]
        if len({h.shape for h in self.hq}) != 1:
            raise ConfigError("all HQ images must share one size")
        if self.lq is not None:
            if len(self.lq) != len(self.hq):
                raise ConfigError("LQ and HQ counts differ")
            if len({x.shape for x in self.lq}) != 1:
                raise ConfigError("all LQ images must share one size")

    @property
    def paired(self) -> bool:
        return self.lq is not None

    def __len__(self) -> int:
        return len(self.hq)

    @classmethod
    def from_pairs(cls, pairs: list[Pair]) -> "Dataset":
        return cls([p.hq for p in pairs], [p.lq for p in pairs], [p.name for p in pairs])

    @classmethod
    def from_dir(cls, directory) -> "Dataset":
        directory = Path(directory)
        if not directory.is_dir():
            raise UsageError(f"dataset directory {directory} does not exist")
        if (directory / "hq").is_dir() and (directory / "lq").is_dir():
            hq_files = list_images(directory / "hq")
            lq_files = list_images(directory / "lq")
            if [p.name for p in hq_files] != [p.name for p in lq_files]:
                raise ConfigError("hq/ and lq/ must contain the same file names")
            return cls([read_image(p) for p in hq_files], [read_image(p) for p in lq_files],
                       [p.stem for p in hq_files])
        files = list_images(directory)
        if not files:
            raise UsageError(f"no images in {directory}")
        return cls([read_image(p) for p in files], None, [p.stem for p in files])
