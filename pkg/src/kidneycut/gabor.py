"""Multi-scale multi-direction Gabor bank and dominant-direction fusion.

A bank kernel at offset (x, y), scale wavelength lam and direction theta is

    (1 / (2 pi sx sy)) * exp(-(x'^2/sx^2 + y'^2/sy^2)) * exp(i 2 pi x'/lam)
    x' = x cos(theta) + y sin(theta),  y' = -x sin(theta) + y cos(theta)

with sx = sy = sigma_ratio * lam. Because sx == sy the Gaussian is
rotation-invariant, so every kernel factors into an outer product of two
1-D complex profiles; convolution runs as two clamped-edge passes that are
algebraically identical to the dense 2-D correlation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._accel import njit, use_numba
from .errors import ConfigurationError
from .raster import GrayImage


def default_wavelengths(num_scales: int) -> tuple:
    """Dyadic schedule: 4, 8, 16, ... px."""
    return tuple(4.0 * 2.0**i for i in range(num_scales))


@dataclass(frozen=True)
class GaborParams:
    num_scales: int = 3
    num_directions: int = 8
    wavelengths: tuple = None
    sigma_ratio: float = 0.56
    kernel_halfwidth_sigmas: float = 3.0

    def __post_init__(self):
        if self.num_scales < 1 or self.num_directions < 1:
            raise ValueError("need at least one scale and one direction")
        if self.wavelengths is None:
            object.__setattr__(self, "wavelengths", default_wavelengths(self.num_scales))
        wl = tuple(float(w) for w in self.wavelengths)
        object.__setattr__(self, "wavelengths", wl)
        if len(wl) != self.num_scales:
            raise ValueError("need one wavelength per scale")
        if any(w < 2.0 for w in wl) or any(b <= a for a, b in zip(wl, wl[1:])):
            raise ValueError("wavelengths must be strictly increasing and >= 2 px")
        if self.sigma_ratio <= 0:
            raise ValueError("sigma_ratio must be positive")

    def sigma(self, scale: int) -> float:
        return self.sigma_ratio * self.wavelengths[scale]

    def kernel_side(self, scale: int) -> int:
        return 2 * int(np.ceil(self.kernel_halfwidth_sigmas * self.sigma(scale))) + 1

    def theta(self, direction: int) -> float:
        return direction * np.pi / self.num_directions


@dataclass(frozen=True)
class FilterBank:
    params: GaborParams
    kernels: list  # kernels[i][j]: complex 2-D array, odd side
    # separable factors: kernels[i][j] == outer(cols[i,j,:side], rows[i,j,:side])
    rows: np.ndarray = field(repr=False, default=None)
    cols: np.ndarray = field(repr=False, default=None)
    sides: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class ResponseStack:
    """Per-scale per-direction response magnitudes, shape (m, n, H, W)."""

    magnitudes: np.ndarray

    @property
    def num_scales(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def num_directions(self) -> int:
        return self.magnitudes.shape[1]


@dataclass(frozen=True)
class FeatureMap:
    """Fused texture map, min-max normalized to [0, 1]."""

    data: np.ndarray

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def build_bank(params: GaborParams) -> FilterBank:
    m, n = params.num_scales, params.num_directions
    max_side = params.kernel_side(m - 1)
    rows = np.zeros((m, n, max_side), dtype=np.complex128)
    cols = np.zeros((m, n, max_side), dtype=np.complex128)
    sides = np.zeros(m, dtype=np.int64)
    kernels = []
    for i in range(m):
        lam = params.wavelengths[i]
        sig = params.sigma(i)
        side = params.kernel_side(i)
        sides[i] = side
        hw = side // 2
        offs = np.arange(-hw, hw + 1, dtype=np.float64)
        envelope = np.exp(-(offs**2) / sig**2)
        norm = 1.0 / (2.0 * np.pi * sig * sig)
        per_dir = []
        for j in range(n):
            th = params.theta(j)
            row = norm * envelope * np.exp(1j * 2.0 * np.pi * np.cos(th) * offs / lam)
            col = envelope * np.exp(1j * 2.0 * np.pi * np.sin(th) * offs / lam)
            rows[i, j, :side] = row
            cols[i, j, :side] = col
            per_dir.append(np.outer(col, row))
        kernels.append(per_dir)
    return FilterBank(params=params, kernels=kernels, rows=rows, cols=cols, sides=sides)


@njit(cache=True)
def _bank_magnitudes_loops(img, rows, cols, sides, out):
    m, n, _ = rows.shape
    h, w = img.shape
    tmp = np.empty((h, w), np.complex128)
    for i in range(m):
        side = sides[i]
        hw = side // 2
        for j in range(n):
            row = rows[i, j]
            col = cols[i, j]
            for y in range(h):
                for x in range(w):
                    s = 0.0 + 0.0j
                    for k in range(side):
                        xx = x + k - hw
                        if xx < 0:
                            xx = 0
                        elif xx >= w:
                            xx = w - 1
                        s += img[y, xx] * row[k]
                    tmp[y, x] = s
            for y in range(h):
                for x in range(w):
                    s = 0.0 + 0.0j
                    for k in range(side):
                        yy = y + k - hw
                        if yy < 0:
                            yy = 0
                        elif yy >= h:
                            yy = h - 1
                        s += tmp[yy, x] * col[k]
                    out[i, j, y, x] = abs(s)


def _bank_magnitudes_numpy(img, rows, cols, sides, out):
    m, n, _ = rows.shape
    h, w = img.shape
    for i in range(m):
        side = int(sides[i])
        hw = side // 2
        xidx = np.clip(np.arange(w)[None, :] + np.arange(side)[:, None] - hw, 0, w - 1)
        yidx = np.clip(np.arange(h)[None, :] + np.arange(side)[:, None] - hw, 0, h - 1)
        for j in range(n):
            tmp = np.zeros((h, w), dtype=np.complex128)
            for k in range(side):
                tmp += img[:, xidx[k]] * rows[i, j, k]
            res = np.zeros((h, w), dtype=np.complex128)
            for k in range(side):
                res += tmp[yidx[k], :] * cols[i, j, k]
            out[i, j] = np.abs(res)


def convolve_bank(img: GrayImage, bank: FilterBank) -> ResponseStack:
    """Correlate the image with every bank kernel (replicate padding)."""
    h, w = img.data.shape
    worst = int(bank.sides.max())
    if worst > h or worst > w:
        raise ConfigurationError(
            f"kernel side {worst} exceeds image dimensions {w}x{h}"
        )
    m, n = bank.params.num_scales, bank.params.num_directions
    out = np.empty((m, n, h, w), dtype=np.float64)
    if use_numba():
        _bank_magnitudes_loops(img.data, bank.rows, bank.cols, bank.sides, out)
    else:
        _bank_magnitudes_numpy(img.data, bank.rows, bank.cols, bank.sides, out)
    return ResponseStack(out)


def direction_vote(mags_at_pixel: np.ndarray):
    """Per-scale winning directions and the cross-scale vote at one pixel.

    Returns (g, D, omega): g[i] is the lowest direction index attaining the
    per-scale magnitude maximum, D[j] counts scales where direction j ties
    that maximum, omega holds directions with D[j] >= half the top count.
    """
    mags = np.asarray(mags_at_pixel, dtype=np.float64)
    row_max = mags.max(axis=1)
    g = np.argmax(mags, axis=1)
    d = (mags == row_max[:, None]).sum(axis=0)
    omega = np.nonzero(d >= 0.5 * d.max())[0]
    return g, d, omega


def dominant_directions(stack: ResponseStack, p) -> frozenset:
    """Direction indices dominant across scales at pixel p = (x, y)."""
    x, y = int(p[0]), int(p[1])
    _, _, omega = direction_vote(stack.magnitudes[:, :, y, x])
    return frozenset(int(j) for j in omega)


@njit(cache=True)
def _fuse_loops(mags, out):
    m, n, h, w = mags.shape
    row_best = np.empty(m, np.float64)
    votes = np.empty(n, np.int64)
    for y in range(h):
        for x in range(w):
            for i in range(m):
                best = mags[i, 0, y, x]
                for j in range(1, n):
                    if mags[i, j, y, x] > best:
                        best = mags[i, j, y, x]
                row_best[i] = best
            dmax = 0
            for j in range(n):
                dj = 0
                for i in range(m):
                    if mags[i, j, y, x] == row_best[i]:
                        dj += 1
                votes[j] = dj
                if dj > dmax:
                    dmax = dj
            total = 0.0
            for j in range(n):
                if 2 * votes[j] >= dmax:
                    for i in range(m):
                        total += mags[i, j, y, x]
            out[y, x] = total / m


def _fuse_numpy(mags):
    m = mags.shape[0]
    row_max = mags.max(axis=1, keepdims=True)
    d = (mags == row_max).sum(axis=0)  # (n, H, W)
    dmax = d.max(axis=0, keepdims=True)
    omega = d >= 0.5 * dmax
    return (mags * omega[None, :, :, :]).sum(axis=(0, 1)) / m


def fuse_raw(stack: ResponseStack) -> np.ndarray:
    """Unnormalized fusion: mean over scales of magnitudes summed over the
    per-pixel dominant-direction set."""
    mags = stack.magnitudes
    if use_numba():
        out = np.empty(mags.shape[2:], dtype=np.float64)
        _fuse_loops(mags, out)
        return out
    return _fuse_numpy(mags)


def fuse(stack: ResponseStack) -> FeatureMap:
    raw = fuse_raw(stack)
    lo = raw.min()
    hi = raw.max()
    if hi - lo <= 0.0:
        return FeatureMap(np.zeros_like(raw))
    return FeatureMap((raw - lo) / (hi - lo))


def gabor_feature_map(img: GrayImage, params: GaborParams = None) -> FeatureMap:
    """One-call pipeline: bank, convolve, fuse."""
    bank = build_bank(params or GaborParams())
    return fuse(convolve_bank(img, bank))
