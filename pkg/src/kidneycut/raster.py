"""Grayscale image and binary mask primitives.

Pixel coordinates are (x, y) with origin at the top-left; arrays are
row-major ``(height, width)`` so ``data[y, x]`` addresses pixel (x, y).
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DegenerateContourError, FormatError

# Sub-pixel sampling step for contour rasterization (px).
CONTOUR_SAMPLE_STEP = 0.4
# Cardinal-spline tension; tangents are (1 - tension)/2 times the neighbor
# difference. Plain Catmull-Rom (tension 0) overshoots sparse clicks enough
# to inflate small shapes well past the clicked outline.
CONTOUR_TENSION = 0.9


@dataclass(frozen=True)
class GrayImage:
    """Normalized grayscale raster, values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("image data must be 2-D")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("image values must lie in [0, 1]")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class BinaryMask:
    """Boolean label raster; True marks foreground (S side)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValueError("mask data must be 2-D")
        object.__setattr__(self, "data", arr.astype(bool))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def area(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True)
class Contour:
    """Ordered sub-pixel (x, y) control points of an implicitly closed curve."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise ValueError("a contour needs at least 3 (x, y) points")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_json(cls, text: str) -> "Contour":
        return cls(np.asarray(json.loads(text), dtype=np.float64))

    def to_json(self) -> str:
        return json.dumps([[float(x), float(y)] for x, y in self.points])


def load_image(path_or_bytes) -> GrayImage:
    """Read an 8-bit grayscale PGM (P5) or PNG into a [0, 1] raster."""
    try:
        if isinstance(path_or_bytes, (bytes, bytearray)):
            img = Image.open(io.BytesIO(path_or_bytes))
        else:
            img = Image.open(path_or_bytes)
        img.load()
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise FormatError(f"unreadable image: {exc}") from exc
    if img.format not in ("PPM", "PNG"):  # Pillow reports PGM as PPM
        raise FormatError(f"unsupported format {img.format!r}; need 8-bit grayscale PGM or PNG")
    if img.mode != "L":
        raise FormatError(f"not 8-bit grayscale (mode {img.mode!r})")
    data = np.asarray(img, dtype=np.uint8).astype(np.float64) / 255.0
    return GrayImage(data)


def save_image_png(img: GrayImage, path) -> None:
    """Write a [0, 1] raster as 8-bit grayscale PNG (value = round(255*f))."""
    arr = np.round(img.data * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def save_mask_png(mask: BinaryMask, path) -> None:
    arr = np.where(mask.data, 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def load_mask(path_or_bytes) -> BinaryMask:
    """Read a {0, 255} PNG/PGM mask; any nonzero pixel counts as foreground."""
    img = load_image(path_or_bytes)
    return BinaryMask(img.data > 0.5)


def disk_offsets(radius: int) -> np.ndarray:
    """Integer (dy, dx) offsets with Euclidean norm <= radius."""
    r = int(radius)
    if r < 0:
        raise ValueError("radius must be >= 0")
    span = np.arange(-r, r + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    keep = dy * dy + dx * dx <= r * r
    return np.stack([dy[keep], dx[keep]], axis=1).astype(np.int64)


def _disk_footprint(radius: int) -> np.ndarray:
    r = int(radius)
    span = np.arange(-r, r + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    return (dy * dy + dx * dx) <= r * r


def dilate(mask: BinaryMask, radius: int) -> BinaryMask:
    """Euclidean-disk dilation; outside the image counts as background."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return BinaryMask(mask.data.copy())
    out = ndimage.binary_dilation(mask.data, structure=_disk_footprint(radius), border_value=0)
    return BinaryMask(out)


def erode(mask: BinaryMask, radius: int) -> BinaryMask:
    """Euclidean-disk erosion with neighborhoods clipped at the image border."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return BinaryMask(mask.data.copy())
    out = ndimage.binary_erosion(mask.data, structure=_disk_footprint(radius), border_value=1)
    return BinaryMask(out)


def mask_boundary(mask: BinaryMask) -> np.ndarray:
    """Foreground pixels with a background 4-neighbor, as (y, x) rows.

    The image border counts as background.
    """
    m = mask.data
    padded = np.zeros((m.shape[0] + 2, m.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = m
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    ys, xs = np.nonzero(m & ~interior)
    return np.stack([ys, xs], axis=1).astype(np.int64)


def sample_closed_catmull_rom(points: np.ndarray, step: float = CONTOUR_SAMPLE_STEP) -> np.ndarray:
    """Sample a closed periodic Catmull-Rom spline through control points.

    Each segment is pre-sampled to estimate its arc length, then resampled
    so consecutive samples are at most ``step`` px apart. The annotation UI
    replicates this rule so previews match server-side rasterization.
    """
    pts = np.asarray(points, dtype=np.float64)
    k = pts.shape[0]
    samples = []
    for seg in range(k):
        p0 = pts[(seg - 1) % k]
        p1 = pts[seg]
        p2 = pts[(seg + 1) % k]
        p3 = pts[(seg + 2) % k]
        coarse_t = np.linspace(0.0, 1.0, 17)
        coarse = _catmull_rom_point(p0, p1, p2, p3, coarse_t)
        seg_len = float(np.sum(np.hypot(*np.diff(coarse, axis=0).T)))
        n = max(2, int(np.ceil(seg_len / step)))
        t = np.arange(n, dtype=np.float64) / n  # t=1 is the next segment's t=0
        samples.append(_catmull_rom_point(p0, p1, p2, p3, t))
    return np.concatenate(samples, axis=0)


def _catmull_rom_point(p0, p1, p2, p3, t):
    t = np.asarray(t, dtype=np.float64)[:, None]
    s = (1.0 - CONTOUR_TENSION) / 2.0
    m1 = s * (p2 - p0)
    m2 = s * (p3 - p1)
    h00 = 2.0 * t**3 - 3.0 * t**2 + 1.0
    h10 = t**3 - 2.0 * t**2 + t
    h01 = -2.0 * t**3 + 3.0 * t**2
    h11 = t**3 - t**2
    return h00 * p1 + h10 * m1 + h01 * p2 + h11 * m2


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace area of a closed polygon given as (N, 2) x/y vertices."""
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def fill_polygon_even_odd(poly: np.ndarray, width: int, height: int) -> np.ndarray:
    """Scanline even-odd fill; pixel (x, y) is tested at its integer center."""
    mask = np.zeros((height, width), dtype=bool)
    x1 = poly[:, 0]
    y1 = poly[:, 1]
    x2 = np.roll(x1, -1)
    y2 = np.roll(y1, -1)
    lo = np.minimum(y1, y2)
    hi = np.maximum(y1, y2)
    for row in range(height):
        # half-open rule [min, max) avoids double-counting shared vertices
        hit = (lo <= row) & (row < hi)
        if not hit.any():
            continue
        xa, ya, xb, yb = x1[hit], y1[hit], x2[hit], y2[hit]
        xs = np.sort(xa + (row - ya) * (xb - xa) / (yb - ya))
        for i in range(0, len(xs) - 1, 2):
            left = int(np.ceil(xs[i]))
            right = int(np.floor(xs[i + 1]))
            if left <= right:
                mask[row, max(0, left) : min(width, right + 1)] = True
    return mask


def rasterize_contour(contour: Contour, width: int, height: int) -> BinaryMask:
    """Rasterize the closed spline through the contour points.

    Foreground = even-odd interior of the sampled curve plus the traced
    curve pixels themselves.
    """
    pts = contour.points
    if (
        pts[:, 0].min() < 0
        or pts[:, 1].min() < 0
        or pts[:, 0].max() > width - 1
        or pts[:, 1].max() > height - 1
    ):
        raise DegenerateContourError("contour points outside image bounds")
    curve = sample_closed_catmull_rom(pts)
    if polygon_area(curve) < 1.0:
        raise DegenerateContourError("contour encloses no area")
    mask = fill_polygon_even_odd(curve, width, height)
    # union with the pixels the curve passes through
    cx = np.clip(np.round(curve[:, 0]).astype(np.int64), 0, width - 1)
    cy = np.clip(np.round(curve[:, 1]).astype(np.int64), 0, height - 1)
    mask[cy, cx] = True
    # spline overshoot can pinch off slivers; keep the dominant component
    labels, n = ndimage.label(mask)
    if n == 0:
        raise DegenerateContourError("contour rasterized to an empty mask")
    if n > 1:
        largest = 1 + np.argmax(ndimage.sum_labels(mask, labels, index=range(1, n + 1)))
        mask = labels == largest
    return BinaryMask(mask)


def trace_boundary_chain(mask: BinaryMask) -> np.ndarray:
    """Ordered (x, y) chain around the largest foreground component.

    Moore-neighbor tracing, clockwise, starting from the lexicographically
    smallest boundary pixel. Returns an empty (0, 2) array for empty masks.
    """
    m = mask.data
    if not m.any():
        return np.zeros((0, 2), dtype=np.int64)
    labels, n = ndimage.label(m)
    if n > 1:
        largest = 1 + np.argmax(ndimage.sum_labels(m, labels, index=range(1, n + 1)))
        m = labels == largest
    ys, xs = np.nonzero(m)
    start = (int(ys[0]), int(xs[0]))  # topmost, then leftmost
    # clockwise Moore neighborhood: E, SE, S, SW, W, NW, N, NE (y grows down)
    dirs = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)]
    h, w = m.shape

    def fg(y, x):
        return 0 <= y < h and 0 <= x < w and m[y, x]

    chain = [start]
    cur = start
    back = 4  # came "from the west"; start has no western foreground neighbor
    first_move = None
    for _ in range(4 * m.size):
        move = -1
        for k in range(1, 9):
            d = (back + k) % 8
            if fg(cur[0] + dirs[d][0], cur[1] + dirs[d][1]):
                move = d
                break
        if move == -1:  # isolated pixel
            break
        if cur == start:
            if first_move is None:
                first_move = move
            elif move == first_move:
                break  # Jacob's criterion: about to retrace the first step
        nxt = (cur[0] + dirs[move][0], cur[1] + dirs[move][1])
        if nxt != start:
            chain.append(nxt)
        cur = nxt
        back = (move + 4) % 8
    return np.array([[x, y] for y, x in chain], dtype=np.int64)
