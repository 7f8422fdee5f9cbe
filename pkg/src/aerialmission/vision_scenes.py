"""Synthetic images with exact ground truth for the vision pipeline.

Shapes are rasterised by pixel centre: pixel (u, v) is inside when
(u + 0.5, v + 0.5) lies in the shape.  Colours get seeded Gaussian noise.
"""

from __future__ import annotations

import math

import cv2
import numpy as np

from .sensing import PixelPoint
from .vision import RasterImage, rgb_array, sort_corners

FACE_RED = (200, 35, 30)
PATCH_WHITE = (235, 235, 230)
GROUND_SAND = (150, 128, 95)
STRUCTURE_YELLOW = (225, 190, 35)
GROUND_GRAY = (90, 88, 86)


def _centres(width: int, height: int):
    v, u = np.mgrid[0:height, 0:width]
    return u + 0.5, v + 0.5


def rect_mask(width: int, height: int, center, size, angle: float = 0.0) -> np.ndarray:
    uu, vv = _centres(width, height)
    c, s = math.cos(angle), math.sin(angle)
    du, dv = uu - center[0], vv - center[1]
    return (np.abs(du * c + dv * s) <= size[0] / 2.0) & (np.abs(-du * s + dv * c) <= size[1] / 2.0)


def rect_corners(center, size, angle: float = 0.0) -> list:
    c, s = math.cos(angle), math.sin(angle)
    pts = [
        (center[0] + a * size[0] / 2 * c - b * size[1] / 2 * s, center[1] + a * size[0] / 2 * s + b * size[1] / 2 * c)
        for a, b in ((-1, -1), (1, -1), (1, 1), (-1, 1))
    ]
    return sort_corners(pts)


def _paint(shape, layers, noise: float, rng) -> RasterImage:
    img = np.zeros(shape + (3,), dtype=np.float64)
    for mask, colour in layers:
        img[mask] = colour
    img += rng.normal(0.0, noise, img.shape) if noise > 0 else 0.0
    return RasterImage.from_array(np.round(img))


def block_scene(seed: int, width: int = 160, height: int = 120, patch_size=(40.0, 20.0), angle: float = 0.0, noise: float = 4.0):
    """Red block face with a white patch on sand; returns (image, patch mask, patch corners)."""
    rng = np.random.default_rng(seed)
    centre = (width / 2 + rng.uniform(-8, 8), height / 2 + rng.uniform(-8, 8))
    face = rect_mask(width, height, centre, (patch_size[0] * 1.8, patch_size[1] * 2.2), angle)
    patch = rect_mask(width, height, centre, patch_size, angle)
    full = np.ones((height, width), dtype=bool)
    img = _paint((height, width), [(full, GROUND_SAND), (face, FACE_RED), (patch, PATCH_WHITE)], noise, rng)
    return img, patch, rect_corners(centre, patch_size, angle)


def w_polygon(origin=(30.0, 30.0), scale: float = 1.0) -> np.ndarray:
    """W outline, clockwise; the left arm top (vertices 0 and 1) is the highest edge."""
    base = np.array(
        [(0, 0), (22, 0), (32, 48), (42, 28), (54, 28), (64, 48), (74, 8), (96, 8), (78, 80), (60, 80), (48, 52), (36, 80), (18, 80)],
        dtype=np.float64,
    )
    return np.asarray(origin) + scale * base


def polygon_mask(width: int, height: int, poly) -> np.ndarray:
    m = np.zeros((height, width), dtype=np.uint8)
    cv2.fillPoly(m, [np.round(np.asarray(poly)).astype(np.int32)], 1)
    return m.astype(bool)


def structure_scene(seed: int, width: int = 160, height: int = 120, noise: float = 5.0):
    """Yellow W silhouette on gray; returns (image, mask, true top pair left-then-right)."""
    rng = np.random.default_rng(seed)
    origin = (rng.uniform(15, 45), rng.uniform(15, 25))
    poly = w_polygon(origin)
    mask = polygon_mask(width, height, poly)
    full = np.ones((height, width), dtype=bool)
    img = _paint((height, width), [(full, GROUND_GRAY), (mask, STRUCTURE_YELLOW)], noise, rng)
    top = [PixelPoint(float(p[0]), float(p[1])) for p in np.round(poly[:2])]
    return img, mask, top


def snowy_recolor(img: RasterImage, seed: int = 0) -> RasterImage:
    """Snow day under low sun: the ground becomes bright warm snow with a glare ramp.

    Low-saturation pixels (the ground) are replaced by snow whose
    saturation and brightness rise from left to right; saturated pixels
    (the structure) keep their hue but wash out towards white.
    """
    rng = np.random.default_rng(seed)
    a = img.array().astype(np.float64)
    mx = a.max(axis=2)
    ground = (mx - a.min(axis=2)) / np.maximum(mx, 1.0) < 0.35
    ramp = np.broadcast_to(np.linspace(0.0, 1.0, img.width)[None, :], ground.shape)
    snow = np.stack([np.full(ramp.shape, 40.0), 0.18 + 0.3 * ramp, 0.84 + 0.14 * ramp], axis=-1)
    snow[..., 1:] += rng.normal(0.0, 0.012, snow[..., 1:].shape)
    snow[..., 1:] = np.clip(snow[..., 1:], 0.0, 1.0)
    snow = rgb_array(snow)
    out = np.where(ground[..., None], snow, 0.75 * a + 0.25 * 255.0)
    out += rng.normal(0.0, 2.0, out.shape)
    return RasterImage.from_array(np.round(out))


def texture(seed: int, width: int, height: int) -> np.ndarray:
    """Smooth random gray texture in [0, 255]."""
    rng = np.random.default_rng(seed)
    t = cv2.GaussianBlur(rng.uniform(0, 255, (height, width)).astype(np.float32), (0, 0), 2.5)
    t -= t.min()
    return (255.0 * t / max(float(t.max()), 1e-6)).astype(np.float32)


def zoom_sequence(seed: int, frames: int = 20, zoom: float = 0.01, size=(200, 160), box=(80.0, 60.0, 24.0, 24.0), focus=(90.0, 75.0)):
    """Descent imagery: each frame is the base texture scaled by (1 + zoom)^k about ``focus``.

    Returns (frames, ground-truth box centres).
    """
    w, h = size
    base = texture(seed, w, h)
    out, centres = [], []
    c0 = np.array([box[0] + box[2] / 2, box[1] + box[3] / 2])
    f = np.asarray(focus, dtype=np.float64)
    for k in range(frames):
        s = (1.0 + zoom) ** k
        m = np.array([[s, 0.0, (1 - s) * f[0]], [0.0, s, (1 - s) * f[1]]])
        # warpAffine maps pixel centres at integer coordinates; shift by half a pixel
        m2 = m.copy()
        m2[:, 2] += 0.5 * (np.array([s, s]) - 1.0)
        out.append(cv2.warpAffine(base, m2, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT))
        centres.append(f + s * (c0 - f))
    return out, centres
