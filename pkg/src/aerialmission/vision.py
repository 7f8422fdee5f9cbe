"""Raster vision: patch segmentation, corner fitting, structure masks, tracking.

Images are plain RGB byte buffers (:class:`RasterImage`).  Colour work is
done in HSV with hue in degrees.  Clustering (k-means, DBSCAN) runs in the
HSV cylinder embedding ``(s cos h, s sin h, v)`` so hue wraps correctly and
greys collapse onto the axis regardless of their (meaningless) hue.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import cv2
import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .sensing import PixelPoint


class VisionError(Exception):
    """Pipeline failure carrying a short code (NO_PATCH, NO_STRUCTURE, ...)."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


@dataclass
class RasterImage:
    width: int
    height: int
    pixels: bytes  # RGB triples, row-major

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image must be non-empty")
        if len(self.pixels) != 3 * self.width * self.height:
            raise ValueError("buffer length must be 3*width*height")

    def array(self) -> np.ndarray:
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(self.height, self.width, 3)

    @classmethod
    def from_array(cls, a) -> "RasterImage":
        a = np.ascontiguousarray(np.clip(np.asarray(a), 0, 255).astype(np.uint8))
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError("expected an HxWx3 array")
        return cls(a.shape[1], a.shape[0], a.tobytes())

    def crop(self, u0: int, v0: int, u1: int, v1: int) -> "RasterImage":
        return RasterImage.from_array(self.array()[v0:v1, u0:u1])


@dataclass(frozen=True)
class HsvPixel:
    h: float  # degrees [0, 360)
    s: float
    v: float

    def __post_init__(self):
        if not (0.0 <= self.h < 360.0 and 0.0 <= self.s <= 1.0 and 0.0 <= self.v <= 1.0):
            raise ValueError("hsv out of range")


# -- colour ------------------------------------------------------------------------------


def hsv_array(rgb) -> np.ndarray:
    """(..., 3) RGB bytes -> (..., 3) float HSV, hue in degrees."""
    x = np.asarray(rgb, dtype=np.float64) / 255.0
    r, g, b = x[..., 0], x[..., 1], x[..., 2]
    mx = x.max(axis=-1)
    c = mx - x.min(axis=-1)
    safe = np.where(c > 0, c, 1.0)
    h = np.where(mx == r, np.mod((g - b) / safe, 6.0), np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0))
    h = np.where(c > 0, 60.0 * h, 0.0)
    h = np.where(h >= 360.0, h - 360.0, h)
    s = np.where(mx > 0, c / np.where(mx > 0, mx, 1.0), 0.0)
    return np.stack([h, s, mx], axis=-1)


def rgb_array(hsv) -> np.ndarray:
    """Inverse of :func:`hsv_array`; returns float RGB in [0, 255]."""
    hsv = np.asarray(hsv, dtype=np.float64)
    h, s, v = np.mod(hsv[..., 0], 360.0) / 60.0, hsv[..., 1], hsv[..., 2]
    c = v * s
    x = c * (1.0 - np.abs(np.mod(h, 2.0) - 1.0))
    z = np.zeros_like(c)
    i = np.floor(h).astype(int) % 6
    r = np.choose(i, [c, x, z, z, x, c])
    g = np.choose(i, [x, c, c, x, z, z])
    b = np.choose(i, [z, z, x, c, c, x])
    m = v - c
    return 255.0 * np.stack([r + m, g + m, b + m], axis=-1)


def rgb_to_hsv(pixel) -> HsvPixel:
    h, s, v = hsv_array(np.asarray(pixel, dtype=np.float64)[None])[0]
    return HsvPixel(float(h), float(s), float(v))


def hsv_to_rgb(p: HsvPixel) -> tuple:
    r, g, b = rgb_array(np.array([p.h, p.s, p.v]))
    return int(round(r)), int(round(g)), int(round(b))


def cylinder(hsv) -> np.ndarray:
    hsv = np.asarray(hsv, dtype=np.float64)
    a = np.radians(hsv[..., 0])
    return np.stack([hsv[..., 1] * np.cos(a), hsv[..., 1] * np.sin(a), hsv[..., 2]], axis=-1)


def from_cylinder(xyz) -> np.ndarray:
    xyz = np.asarray(xyz, dtype=np.float64)
    h = np.mod(np.degrees(np.arctan2(xyz[..., 1], xyz[..., 0])), 360.0)
    s = np.clip(np.hypot(xyz[..., 0], xyz[..., 1]), 0.0, 1.0)
    h = np.where(s > 1e-12, h, 0.0)
    return np.stack([h, s, np.clip(xyz[..., 2], 0.0, 1.0)], axis=-1)


def hsv_distance(a, b) -> np.ndarray:
    """Circular hue, unit weights on normalised axes (hue/180, s, v)."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    dh = np.abs(a[..., 0] - b[..., 0]) % 360.0
    dh = np.minimum(dh, 360.0 - dh) / 180.0
    return np.sqrt(dh**2 + (a[..., 1] - b[..., 1]) ** 2 + (a[..., 2] - b[..., 2]) ** 2)


# -- k-means patch segmentation ----------------------------------------------------------


@dataclass
class KMeansResult:
    labels: np.ndarray  # (H, W) int
    centers: list  # HsvPixel per cluster
    sse: list = field(default_factory=list)  # within-cluster SSE after each assignment
    iterations: int = 0


def _kmeans_pp(x: np.ndarray, k: int, rng) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        i = rng.choice(len(x), p=d2 / total) if total > 0 else rng.integers(len(x))
        centers.append(x[i])
        d2 = np.minimum(d2, ((x - x[i]) ** 2).sum(axis=1))
    return np.array(centers)


def kmeans_points(x: np.ndarray, k: int, seed: int = 0, max_iter: int = 50, tol: float = 1e-4):
    """Lloyd iterations from a seeded k-means++ start; returns (labels, centers, sse)."""
    x = np.asarray(x, dtype=np.float64)
    if k < 2:
        raise ValueError("k must be at least 2")
    if len(x) < k:
        raise ValueError("fewer points than clusters")
    c = _kmeans_pp(x, k, np.random.default_rng(seed))
    sse = []
    labels = None
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        sse.append(float(d2[np.arange(len(x)), labels].sum()))
        new = c.copy()
        for j in range(k):
            members = labels == j
            if members.any():  # an empty cluster keeps its centre
                new[j] = x[members].mean(axis=0)
        shift = float(np.abs(new - c).max())
        c = new
        if shift < tol:
            break
    return labels, c, sse


def kmeans_segment(roi: RasterImage, k: int = 3, seed: int = 0, max_iter: int = 50, tol: float = 1e-4) -> KMeansResult:
    if roi.width * roi.height < k:
        raise ValueError("ROI smaller than k pixels")
    hsv = hsv_array(roi.array()).reshape(-1, 3)
    labels, c, sse = kmeans_points(cylinder(hsv), k, seed, max_iter, tol)
    centers = [HsvPixel(*map(float, p)) for p in from_cylinder(c)]
    return KMeansResult(labels.reshape(roi.height, roi.width), centers, sse, len(sse))


def select_patch_cluster(centers, calibrated: HsvPixel) -> int:
    if not centers:
        raise ValueError("no centres")
    pts = np.array([[p.h, p.s, p.v] for p in centers])
    d = hsv_distance(pts, [calibrated.h, calibrated.s, calibrated.v])
    return int(np.argmin(d))  # argmin returns the lowest index on ties


# -- rectangle corners -------------------------------------------------------------------


def largest_component(mask) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    lab, n = ndimage.label(mask, structure=np.ones((3, 3)))
    if n == 0:
        return np.zeros_like(mask)
    sizes = ndimage.sum_labels(mask, lab, index=np.arange(1, n + 1))
    return lab == int(np.argmax(sizes)) + 1


def sort_corners(pts) -> list:
    """Clockwise (image frame, v down) from top-left = min u+v, ties by min v."""
    pts = np.asarray(pts, dtype=np.float64)
    c = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    order = list(np.argsort(ang, kind="stable"))
    start = min(range(len(pts)), key=lambda i: (round(pts[i, 0] + pts[i, 1], 9), pts[i, 1]))
    k = order.index(start)
    return [PixelPoint(float(pts[i, 0]), float(pts[i, 1])) for i in order[k:] + order[:k]]


def _side_tilt(e: np.ndarray, t: float, cov: np.ndarray, band: float = 1.0, frac: float = 0.9) -> float:
    """Weighted mean tilt of the four sides' boundary pixels relative to angle ``t``."""
    ax = np.array([math.cos(t), math.sin(t)])
    ay = np.array([-ax[1], ax[0]])
    a, b = e @ ax, e @ ay
    half_a, half_b = math.sqrt(3.0 * ax @ cov @ ax), math.sqrt(3.0 * ay @ cov @ ay)
    tilts, weights = [], []
    for along, across, half, reach, sign in ((a, b, half_b, half_a, 1.0), (b, a, half_a, half_b, -1.0)):
        for side in (-1.0, 1.0):
            sel = (np.abs(across - side * half) < band) & (np.abs(along) < frac * reach)
            if np.count_nonzero(sel) < 4 or np.ptp(along[sel]) == 0:
                continue
            tilts.append(sign * math.atan(np.polyfit(along[sel], across[sel], 1)[0]))
            weights.append(np.count_nonzero(sel))
    return float(np.average(tilts, weights=weights)) if tilts else 0.0


def fit_rectangle_corners(mask, refine: int = 3) -> list:
    """Rotated rectangle fitted to the largest component of ``mask``.

    The minimum-area rectangle of the pixel centres seeds the orientation,
    which is then refined by line fits through the middle of each side's
    boundary pixels.  Centre and side lengths come from second moments: a
    filled w x h rectangle has variance w^2/12 along its long axis, and each
    pixel square adds 1/12, so an axis-aligned block reports its outer pixel
    edges exactly.
    """
    comp = largest_component(mask)
    if not comp.any():
        raise VisionError("NO_PATCH", "empty mask")
    v, u = np.nonzero(comp)
    p = np.stack([u + 0.5, v + 0.5], axis=1)
    mu = p.mean(axis=0)
    q = p - mu
    cov = q.T @ q / len(q) + np.eye(2) / 12.0
    t = math.radians(cv2.minAreaRect(p.astype(np.float32))[2])
    edge = comp & ~ndimage.binary_erosion(comp, structure=np.ones((3, 3)))
    ev, eu = np.nonzero(edge)
    e = np.stack([eu + 0.5, ev + 0.5], axis=1) - mu
    for _ in range(refine):
        t += _side_tilt(e, t, cov)
    ax = np.array([math.cos(t), math.sin(t)])
    ay = np.array([-ax[1], ax[0]])
    hw, hh = math.sqrt(3.0 * ax @ cov @ ax), math.sqrt(3.0 * ay @ cov @ ay)
    return sort_corners([mu + sa * hw * ax + sb * hh * ay for sa, sb in ((-1, -1), (1, -1), (1, 1), (-1, 1))])


def ratio_check(corners, physical_ratio: float, tol: float = 0.25) -> bool:
    """Pixel long/short side ratio within a strict relative tolerance of the physical one.

    Valid for a camera looking perpendicular at a flat face, where the
    projection is a similarity and the ratio is scale invariant.
    """
    if physical_ratio <= 0:
        raise ValueError("physical ratio must be positive")
    p = np.array([[c.u, c.v] for c in corners], dtype=np.float64)
    a = float(np.linalg.norm(p[1] - p[0]))
    b = float(np.linalg.norm(p[2] - p[1]))
    lo, hi = min(a, b), max(a, b)
    if lo <= 1e-9:
        return False
    phys = max(physical_ratio, 1.0 / physical_ratio)
    return abs(hi / lo - phys) / phys < tol


# -- logistic regression segmentation ----------------------------------------------------


@dataclass
class SegModel:
    weights: np.ndarray  # (h/360, s, v, bias)
    threshold: float = 0.5

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (4,) or not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be a finite 4-vector")

    def proba(self, hsv) -> np.ndarray:
        return _sigmoid(_design(hsv) @ self.weights)

    def predict(self, hsv) -> np.ndarray:
        return self.proba(hsv) >= self.threshold


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _design(hsv) -> np.ndarray:
    hsv = np.asarray(hsv, dtype=np.float64).reshape(-1, 3)
    return np.column_stack([hsv[:, 0] / 360.0, hsv[:, 1], hsv[:, 2], np.ones(len(hsv))])


def cross_entropy(w, x, y) -> float:
    z = x @ w
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def lr_bound(hsv) -> float:
    """1/L for the mean cross-entropy: gradient steps at or below this never raise the loss."""
    x = _design(hsv)
    return 4.0 / float(np.linalg.eigvalsh(x.T @ x / len(x)).max())


def logreg_train(hsv, labels, epochs: int = 2000, lr: float | None = None, seed: int = 0, history: list | None = None) -> SegModel:
    """Full-batch gradient descent on mean cross-entropy over (h, s, v, 1).

    ``lr=None`` uses :func:`lr_bound`.  ``seed`` draws the small initial
    weights.  Per-epoch losses are appended to ``history`` when given.
    """
    y = np.asarray(labels, dtype=np.float64).ravel()
    x = _design(hsv)
    if len(x) != len(y):
        raise ValueError("samples and labels differ in length")
    if y.min() == y.max():
        raise ValueError("need both labels to train")
    step = lr_bound(hsv) if lr is None else float(lr)
    w = np.random.default_rng(seed).normal(0.0, 0.01, 4)
    for _ in range(epochs):
        if history is not None:
            history.append(cross_entropy(w, x, y))
        w = w - step * x.T @ (_sigmoid(x @ w) - y) / len(y)
    return SegModel(w)


def segment_structure(image: RasterImage, model: SegModel) -> np.ndarray:
    hsv = hsv_array(image.array()).reshape(-1, 3)
    return model.predict(hsv).reshape(image.height, image.width)


def polygon_corners(mask, angle_deg: float = 30.0, epsilon: float | None = None) -> np.ndarray:
    """Corners of the largest component's outline: polygon vertices turning by more than ``angle_deg``."""
    comp = largest_component(mask).astype(np.uint8)
    if not comp.any():
        raise VisionError("NO_STRUCTURE", "no component")
    contours, _ = cv2.findContours(comp, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE)
    cnt = max(contours, key=len)
    eps = epsilon if epsilon is not None else max(2.0, 0.01 * cv2.arcLength(cnt, True))
    poly = cv2.approxPolyDP(cnt, eps, True).reshape(-1, 2).astype(np.float64)
    keep = []
    n = len(poly)
    for i in range(n):
        a = poly[i] - poly[i - 1]
        b = poly[(i + 1) % n] - poly[i]
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0 or nb == 0:
            continue
        turn = math.degrees(math.acos(float(np.clip(a @ b / (na * nb), -1.0, 1.0))))
        if turn > angle_deg:
            keep.append(poly[i])
    return np.array(keep).reshape(-1, 2)


def extract_top_pair(mask, angle_deg: float = 30.0, min_sep: float = 10.0, offset=(0.0, 0.0)) -> list:
    """Top-most corner pair, left then right.

    ``offset`` shifts both returned corners; a nonzero value reproduces the
    wrong-desired-corners fault.
    """
    pts = polygon_corners(mask, angle_deg)
    if len(pts) < 2:
        raise VisionError("DEGENERATE", "fewer than two corners")
    order = sorted(range(len(pts)), key=lambda i: (pts[i, 1], pts[i, 0]))
    first = pts[order[0]]
    second = next((pts[i] for i in order[1:] if abs(pts[i, 0] - first[0]) > min_sep), None)
    if second is None:
        raise VisionError("DEGENERATE", "no horizontally separated pair")
    pair = sorted([first, second], key=lambda p: p[0])
    du, dv = offset
    return [PixelPoint(float(p[0]) + du, float(p[1]) + dv) for p in pair]


# -- DBSCAN self-supervised retraining ---------------------------------------------------


def dbscan_labels(points, eps: float, min_pts: int) -> np.ndarray:
    """Density clustering; noise is -1.  ``min_pts`` counts the point itself.

    Points are visited in input order and each cluster is grown fully before
    the next starts, so border points go to the lowest-numbered cluster that
    reaches them.
    """
    if eps <= 0 or min_pts < 1:
        raise ValueError("eps must be positive and min_pts at least 1")
    x = np.asarray(points, dtype=np.float64)
    n = len(x)
    labels = np.full(n, -1, dtype=int)
    if n == 0:
        return labels
    nbrs = cKDTree(x).query_ball_point(x, eps)
    core = np.array([len(nb) >= min_pts for nb in nbrs])
    visited = np.zeros(n, dtype=bool)
    cluster = 0
    for i in range(n):
        if visited[i] or not core[i]:
            continue
        queue = [i]
        visited[i] = True
        labels[i] = cluster
        while queue:
            j = queue.pop()
            for q in nbrs[j]:
                if labels[q] == -1:
                    labels[q] = cluster
                if core[q] and not visited[q]:
                    visited[q] = True
                    queue.append(q)
        cluster += 1
    return labels


@dataclass
class RetrainConfig:
    eps: float = 0.05  # in the HSV cylinder
    min_pts: int = 8
    samples: int = 1500
    epochs: int = 3000


def adaptive_retrain(image: RasterImage, prior: SegModel, seed: int = 0, cfg: RetrainConfig | None = None) -> SegModel:
    """Relabel sampled pixels with DBSCAN, pick the structure cluster with the prior, refit.

    The structure cluster is the one whose members the prior classifies
    positive most often; it must be majority positive.  Noise points are
    dropped and every other cluster becomes background.
    """
    cfg = cfg or RetrainConfig()
    hsv = hsv_array(image.array()).reshape(-1, 3)
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(hsv), size=min(cfg.samples, len(hsv)), replace=False)
    s = hsv[idx]
    labels = dbscan_labels(cylinder(s), cfg.eps, cfg.min_pts)
    ids = [c for c in np.unique(labels) if c >= 0]
    if len(ids) < 2:
        raise VisionError("RETRAIN_FAILED", "fewer than two clusters")
    pos = prior.predict(s)
    frac = [float(pos[labels == c].mean()) for c in ids]
    best = int(np.argmax(frac))
    if frac[best] <= 0.5:
        raise VisionError("RETRAIN_FAILED", "no majority-positive cluster")
    keep = labels >= 0
    y = (labels[keep] == ids[best]).astype(float)
    return logreg_train(s[keep], y, epochs=cfg.epochs, seed=seed)


def mask_iou(a, b) -> float:
    a, b = np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)
    union = np.count_nonzero(a | b)
    return np.count_nonzero(a & b) / union if union else 1.0


# -- template tracking -------------------------------------------------------------------


def _gray(frame) -> np.ndarray:
    if isinstance(frame, RasterImage):
        frame = frame.array()
    a = np.asarray(frame, dtype=np.float32)
    return a.mean(axis=2) if a.ndim == 3 else a


def _match(template: np.ndarray, frame: np.ndarray, center, search: int):
    """NCC peak of ``template`` around ``center``; returns (new centre, peak score)."""
    th, tw = template.shape
    ww, wh = tw + 2 * search, th + 2 * search
    win = cv2.getRectSubPix(frame, (ww, wh), (float(center[0]), float(center[1])))
    r = cv2.matchTemplate(win, template, cv2.TM_CCOEFF_NORMED)
    _, peak, _, (px, py) = cv2.minMaxLoc(r)
    dx, dy = float(px), float(py)
    # parabolic sub-pixel refinement
    if 0 < px < r.shape[1] - 1:
        a, b, c = r[py, px - 1], r[py, px], r[py, px + 1]
        den = a - 2 * b + c
        dx += 0.5 * (a - c) / den if den < 0 else 0.0
    if 0 < py < r.shape[0] - 1:
        a, b, c = r[py - 1, px], r[py, px], r[py + 1, px]
        den = a - 2 * b + c
        dy += 0.5 * (a - c) / den if den < 0 else 0.0
    return (center[0] + dx - search, center[1] + dy - search), float(peak)


def fb_track(bbox, prev_frame, next_frame, search: int = 12, fb_tol: float = 3.0, min_corr: float = 0.6):
    """Track ``bbox = (u, v, w, h)`` from prev to next; returns (bbox, failed).

    Normalised cross-correlation forward, then backward from the new box;
    the track fails if the round trip misses by more than ``fb_tol`` px or
    the forward peak correlation is below ``min_corr``.
    """
    prev, nxt = _gray(prev_frame), _gray(next_frame)
    u, v, w, h = map(float, bbox)
    w, h = int(round(w)), int(round(h))
    if w < 3 or h < 3 or u < 0 or v < 0 or u + w > prev.shape[1] or v + h > prev.shape[0]:
        raise ValueError("template out of bounds")
    c0 = (u + w / 2.0, v + h / 2.0)
    tmpl = cv2.getRectSubPix(prev, (w, h), c0)
    c1, peak = _match(tmpl, nxt, c0, search)
    back, _ = _match(cv2.getRectSubPix(nxt, (w, h), c1), prev, c1, search)
    fb = math.hypot(back[0] - c0[0], back[1] - c0[1])
    failed = fb > fb_tol or peak < min_corr or not np.isfinite(peak)
    return (float(c1[0]) - w / 2.0, float(c1[1]) - h / 2.0, float(w), float(h)), bool(failed)


@dataclass
class Tracker:
    """Frame-to-frame tracker re-seeded from a detection every ``reinit_every`` frames."""

    bbox: tuple
    reinit_every: int = 50
    frames: int = 0
    failed: bool = False
    prev: np.ndarray | None = None

    def step(self, frame, detection=None):
        g = _gray(frame)
        if self.prev is not None and not self.failed:
            self.bbox, self.failed = fb_track(self.bbox, self.prev, g)
        self.frames += 1
        if detection is not None and (self.failed or self.frames % self.reinit_every == 0):
            self.bbox, self.failed = tuple(map(float, detection)), False
        self.prev = g
        return self.bbox, self.failed


# -- netpbm I/O --------------------------------------------------------------------------


def _write_pnm(path, magic: bytes, w: int, h: int, data: bytes):
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h) + data)


def _read_pnm(path, magic: bytes):
    with open(path, "rb") as f:
        raw = f.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end : end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != magic or int(tokens[3]) != 255:
        raise ValueError(f"not an 8-bit {magic.decode()} file")
    return int(tokens[1]), int(tokens[2]), raw[pos + 1 :]


def write_ppm(path, img: RasterImage):
    _write_pnm(path, b"P6", img.width, img.height, img.pixels)


def read_ppm(path) -> RasterImage:
    w, h, data = _read_pnm(path, b"P6")
    return RasterImage(w, h, data[: 3 * w * h])


def write_pgm(path, mask):
    a = np.asarray(mask)
    a = np.where(a.astype(bool), 255, 0).astype(np.uint8) if a.dtype == bool else a.astype(np.uint8)
    _write_pnm(path, b"P5", a.shape[1], a.shape[0], a.tobytes())


def read_pgm(path) -> np.ndarray:
    w, h, data = _read_pnm(path, b"P5")
    return np.frombuffer(data[: w * h], dtype=np.uint8).reshape(h, w).copy()
