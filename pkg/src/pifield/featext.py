"""Pixel-aligned image features.

A fixed box-filter pyramid stands in for a learned convolutional encoder. Features
are bilinear samples of every pyramid level at the projected point, optionally
mapped through a linear projection that is trained together with the field.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class FeatureImage:
    """Row-major multi-channel image, ``data`` shaped [C, H, W]."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim == 2:
            self.data = self.data[None]
        if self.data.ndim != 3:
            raise ValueError("FeatureImage data must be [C, H, W]")

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]


def bilinear_sample(img, xy):
    """Sample ``img`` at continuous pixel coordinates ``xy`` [..., 2] -> [..., C].

    Pixel (i, j) has its center at x=i, y=j. Coordinates are clamped to the image.
    """
    xy = np.asarray(xy, dtype=np.float64)
    shape = xy.shape[:-1]
    xy = xy.reshape(-1, 2)
    w, h = img.width, img.height
    x = np.clip(xy[:, 0], 0.0, w - 1)
    y = np.clip(xy[:, 1], 0.0, h - 1)
    x0 = np.minimum(np.floor(x).astype(np.int64), max(w - 2, 0))
    y0 = np.minimum(np.floor(y).astype(np.int64), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    d = img.data
    top = d[:, y0, x0].T * (1 - fx) + d[:, y0, x1].T * fx
    bottom = d[:, y1, x0].T * (1 - fx) + d[:, y1, x1].T * fx
    out = top * (1 - fy) + bottom * fy
    return out.reshape(*shape, img.channels)


def downsample(img):
    """2x box average; an odd trailing row or column averages what is available."""
    d = img.data
    c, h, w = d.shape
    h2, w2 = (h + 1) // 2, (w + 1) // 2
    pad = np.pad(d, ((0, 0), (0, 2 * h2 - h), (0, 2 * w2 - w)))
    count = np.pad(np.ones((h, w)), ((0, 2 * h2 - h), (0, 2 * w2 - w)))
    s = pad.reshape(c, h2, 2, w2, 2).sum(axis=(2, 4))
    n = count.reshape(h2, 2, w2, 2).sum(axis=(1, 3))
    return FeatureImage(s / n)


def build_pyramid(rgb, levels):
    if levels < 1:
        raise ValueError("need at least one pyramid level")
    pyr = [rgb]
    for _ in range(levels - 1):
        pyr.append(downsample(pyr[-1]))
    return pyr


def level_coords(xy, level):
    """Map level-0 pixel coordinates onto pyramid ``level`` (pixel centers aligned)."""
    return (np.asarray(xy, dtype=np.float64) + 0.5) / (2 ** level) - 0.5


class PyramidExtractor:
    """Multi-scale bilinear features with an optional trainable projection ``W v + b``."""

    def __init__(self, levels=4, base_channels=3, projection_dim=None, seed=0):
        if levels < 1:
            raise ValueError("levels must be >= 1")
        self.levels = levels
        self.base_channels = base_channels
        self.raw_dim = base_channels * levels
        self.projection = None
        self.bias = None
        if projection_dim is not None:
            rng = np.random.default_rng(seed)
            limit = np.sqrt(6.0 / (self.raw_dim + projection_dim))
            self.projection = rng.uniform(-limit, limit, (projection_dim, self.raw_dim))
            self.bias = np.zeros(projection_dim)

    @property
    def feature_dim(self):
        return self.raw_dim if self.projection is None else self.projection.shape[0]

    @property
    def params(self):
        return [] if self.projection is None else [self.projection, self.bias]

    def set_identity_projection(self):
        self.projection = np.eye(self.raw_dim)
        self.bias = np.zeros(self.raw_dim)

    def pyramid(self, rgb):
        if rgb.channels != self.base_channels:
            raise ValueError(f"expected {self.base_channels} channels, got {rgb.channels}")
        return build_pyramid(rgb, self.levels)

    def raw(self, pyramid, xy):
        """Concatenated per-level samples [n, C * L]."""
        return np.concatenate([bilinear_sample(img, level_coords(xy, lvl))
                               for lvl, img in enumerate(pyramid)], axis=-1)

    def project(self, raw):
        if self.projection is None:
            return raw
        return raw @ self.projection.T + self.bias

    def extract(self, pyramid, xy):
        return self.project(self.raw(pyramid, xy))

    def backward(self, raw, grad_out):
        """Gradients of the projection parameters given d loss / d feature."""
        if self.projection is None:
            return []
        raw = raw.reshape(-1, self.raw_dim)
        g = grad_out.reshape(-1, self.projection.shape[0])
        return [g.T @ raw, g.sum(axis=0)]


def extract(extractor, rgb, xy):
    """Features at ``xy`` for an image (or a pyramid already built from one)."""
    pyr = rgb if isinstance(rgb, list) else extractor.pyramid(rgb)
    return extractor.extract(pyr, xy)


# --- image files --------------------------------------------------------------

def write_ppm(path, img):
    """Binary P6; values in [0, 1] are quantized to 8 bits."""
    d = img.data if isinstance(img, FeatureImage) else np.asarray(img)
    if d.shape[0] != 3:
        raise ValueError("PPM needs 3 channels")
    u8 = np.round(np.clip(d, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{d.shape[2]} {d.shape[1]}\n255\n".encode())
        fh.write(np.ascontiguousarray(u8.transpose(1, 2, 0)).tobytes())


def _read_header_tokens(fh, n):
    tokens = []
    while len(tokens) < n:
        line = fh.readline()
        if not line:
            raise ValueError("truncated image header")
        line = line.split(b"#")[0]
        tokens += line.split()
    return tokens


def read_ppm(path):
    with open(path, "rb") as fh:
        magic, w, h, maxval = _read_header_tokens(fh, 4)
        if magic != b"P6":
            raise ValueError(f"{path}: not a binary PPM")
        w, h, maxval = int(w), int(h), int(maxval)
        raw = np.frombuffer(fh.read(w * h * 3), dtype=np.uint8)
    if raw.size != w * h * 3:
        raise ValueError(f"{path}: truncated pixel data")
    return FeatureImage(raw.reshape(h, w, 3).transpose(2, 0, 1) / float(maxval))


def write_pfm(path, img):
    """Little-endian PFM ("PF" for 3 channels, "Pf" for 1); rows stored bottom-up."""
    d = img.data if isinstance(img, FeatureImage) else np.asarray(img)
    if d.shape[0] not in (1, 3):
        raise ValueError("PFM holds 1 or 3 channels")
    magic = "PF" if d.shape[0] == 3 else "Pf"
    rows = d.transpose(1, 2, 0)[::-1].astype("<f4")
    with open(path, "wb") as fh:
        fh.write(f"{magic}\n{d.shape[2]} {d.shape[1]}\n-1.0\n".encode())
        fh.write(np.ascontiguousarray(rows).tobytes())


def read_pfm(path):
    with open(path, "rb") as fh:
        magic, w, h, scale = _read_header_tokens(fh, 4)
        if magic not in (b"PF", b"Pf"):
            raise ValueError(f"{path}: not a PFM file")
        c = 3 if magic == b"PF" else 1
        w, h = int(w), int(h)
        dtype = "<f4" if float(scale) < 0 else ">f4"
        raw = np.frombuffer(fh.read(w * h * c * 4), dtype=dtype)
    if raw.size != w * h * c:
        raise ValueError(f"{path}: truncated pixel data")
    return FeatureImage(raw.reshape(h, w, c)[::-1].transpose(2, 0, 1).astype(np.float64))


def save_image_set(directory, stem, render):
    """Write a render's rgb (PPM) and normal/depth/mask (PFM) images."""
    directory = Path(directory)
    write_ppm(directory / f"{stem}_rgb.ppm", render.rgb)
    write_pfm(directory / f"{stem}_normal.pfm", render.normal)
    write_pfm(directory / f"{stem}_depth.pfm", render.depth)
    write_pfm(directory / f"{stem}_mask.pfm", render.mask)
