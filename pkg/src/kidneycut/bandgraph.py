"""Narrow band construction and the weighted pixel graph.

Edge weights combine a pixel similarity and a localized regional
similarity:

    w_p(p,q) = exp(-(mean_i (I_i(p) - I_i(q))^2) / sigma)
    w_r(p,q) = exp(-(1 / (mean_i K_i(p,q) + eps)) / sigma)

K_i compares each pixel against disk-neighborhood means of the current S
and T segments; a pair whose best label assignment keeps both pixels in
the same segment is penalized with the band-wide maximum K_i so the cut
avoids separating it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ._accel import njit, use_numba
from .errors import IllPosedBandError, InitializationTooSmallError
from .maxflow import INFINITE, FlowGraph
from .raster import BinaryMask, dilate, disk_offsets, erode

_LABEL_PAIRS = (("S", "T"), ("T", "S"), ("S", "S"), ("T", "T"))


@dataclass(frozen=True)
class WeightParams:
    sigma: float = 0.1
    neighborhood_radius: int = 10
    band_inflate: int = 15
    band_shrink: int = 3
    connectivity: int = 4
    epsilon: float = 1e-6
    weight_mode: str = "both"  # pixel | regional | both

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.neighborhood_radius < 1 or self.band_inflate < 0 or self.band_shrink < 0:
            raise ValueError("radii must be non-negative (neighborhood >= 1)")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.weight_mode not in ("pixel", "regional", "both"):
            raise ValueError("weight_mode must be pixel, regional or both")


@dataclass(frozen=True)
class FeatureStack:
    """N normalized feature rasters sharing one geometry, shape (N, H, W)."""

    maps: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.maps, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise ValueError("feature stack must be (N, H, W) with N >= 1")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("feature values must lie in [0, 1]")
        object.__setattr__(self, "maps", arr)

    @property
    def num_maps(self) -> int:
        return self.maps.shape[0]


@dataclass(frozen=True)
class NarrowBand:
    band: BinaryMask
    inner_seed: np.ndarray  # bool grid, subset of band
    outer_seed: np.ndarray
    node_index: np.ndarray  # int32 grid, -1 outside band
    node_ys: np.ndarray
    node_xs: np.ndarray

    @property
    def node_count(self) -> int:
        return self.node_ys.size


def _adjacent_to(region: np.ndarray, connectivity: int) -> np.ndarray:
    struct = ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)
    return ndimage.binary_dilation(region, structure=struct, border_value=0)


def build_band(current: BinaryMask, params: WeightParams) -> NarrowBand:
    """Annulus between the inflated and shrunk current mask, with seeds.

    Band pixels adjacent to the shrunk mask become S seeds; band pixels
    adjacent to the outside of the inflated mask (or lying on the image
    border, which counts as outside) become T seeds.
    """
    cur = current.data
    if not cur.any():
        raise InitializationTooSmallError("current mask is empty")
    if cur.all():
        raise IllPosedBandError("current mask covers the whole image")
    ero = erode(current, params.band_shrink).data
    if not ero.any():
        raise InitializationTooSmallError(
            f"shrinking by {params.band_shrink} px empties the initialization"
        )
    dil = dilate(current, params.band_inflate).data
    band = dil & ~ero
    if not band.any():
        raise IllPosedBandError("band is empty (inflate/shrink radii too small)")
    inner = band & _adjacent_to(ero, params.connectivity)
    outside = ~dil
    outer = band & _adjacent_to(outside, params.connectivity)
    border = np.zeros_like(band)
    border[0, :] = border[-1, :] = True
    border[:, 0] = border[:, -1] = True
    outer |= band & border
    if not inner.any():
        raise InitializationTooSmallError("no band pixels adjacent to the shrunk mask")
    if not outer.any():
        raise IllPosedBandError("no band pixels adjacent to the outside")
    if (inner & outer).any():
        raise IllPosedBandError("band too thin: S and T seed layers overlap")
    ys, xs = np.nonzero(band)
    node_index = np.full(band.shape, -1, dtype=np.int32)
    node_index[ys, xs] = np.arange(ys.size, dtype=np.int32)
    return NarrowBand(
        band=BinaryMask(band),
        inner_seed=inner,
        outer_seed=outer,
        node_index=node_index,
        node_ys=ys.astype(np.int64),
        node_xs=xs.astype(np.int64),
    )


def band_edges(band: NarrowBand, connectivity: int) -> tuple:
    """(u, v) node-index pairs for adjacent in-band pixels, each pair once."""
    idx = band.node_index
    shifts = [(0, 1), (1, 0)]
    if connectivity == 8:
        shifts += [(1, 1), (1, -1)]
    us, vs = [], []
    for dy, dx in shifts:
        if dx >= 0:
            a = idx[: idx.shape[0] - dy, : idx.shape[1] - dx]
            b = idx[dy:, dx:]
        else:
            a = idx[: idx.shape[0] - dy, -dx:]
            b = idx[dy:, : idx.shape[1] + dx]
        ok = (a >= 0) & (b >= 0)
        us.append(a[ok])
        vs.append(b[ok])
    return (
        np.concatenate(us).astype(np.int64),
        np.concatenate(vs).astype(np.int64),
    )


# ---------------------------------------------------------------------------
# local segment means


@njit(cache=True)
def _local_means_loops(maps, labels, node_ys, node_xs, offs, glob_s, glob_t, out_s, out_t):
    nmaps = maps.shape[0]
    h, w = labels.shape
    sum_s = np.empty(nmaps, np.float64)
    sum_t = np.empty(nmaps, np.float64)
    for k in range(node_ys.size):
        y = node_ys[k]
        x = node_xs[k]
        cnt_s = 0
        cnt_t = 0
        for i in range(nmaps):
            sum_s[i] = 0.0
            sum_t[i] = 0.0
        for o in range(offs.shape[0]):
            yy = y + offs[o, 0]
            xx = x + offs[o, 1]
            if yy < 0 or yy >= h or xx < 0 or xx >= w:
                continue
            if labels[yy, xx]:
                cnt_s += 1
                for i in range(nmaps):
                    sum_s[i] += maps[i, yy, xx]
            else:
                cnt_t += 1
                for i in range(nmaps):
                    sum_t[i] += maps[i, yy, xx]
        for i in range(nmaps):
            out_s[k, i] = sum_s[i] / cnt_s if cnt_s > 0 else glob_s[i]
            out_t[k, i] = sum_t[i] / cnt_t if cnt_t > 0 else glob_t[i]


def _global_segment_means(maps: np.ndarray, labels: np.ndarray):
    """Per-map fallback means: segment mean if present, else whole-image mean."""
    n_s = int(labels.sum())
    n_t = labels.size - n_s
    glob = maps.reshape(maps.shape[0], -1).mean(axis=1)
    if n_s > 0:
        glob_s = maps[:, labels].mean(axis=1)
    else:
        glob_s = glob
    if n_t > 0:
        glob_t = maps[:, ~labels].mean(axis=1)
    else:
        glob_t = glob
    return glob_s, glob_t


def segment_means_at(stack: FeatureStack, labels: BinaryMask, node_ys, node_xs, radius: int):
    """Disk-restricted S/T means of every map at the given pixels.

    Returns (f_s, f_t), each (n_pixels, N). A segment absent from a disk
    falls back to its global mean (or the whole-image mean if the segment
    is empty everywhere).
    """
    maps = stack.maps
    lab = labels.data
    glob_s, glob_t = _global_segment_means(maps, lab)
    node_ys = np.asarray(node_ys, dtype=np.int64)
    node_xs = np.asarray(node_xs, dtype=np.int64)
    out_s = np.empty((node_ys.size, maps.shape[0]), dtype=np.float64)
    out_t = np.empty_like(out_s)
    if use_numba():
        offs = disk_offsets(radius)
        _local_means_loops(maps, lab, node_ys, node_xs, offs, glob_s, glob_t, out_s, out_t)
        return out_s, out_t
    # fallback: whole-image disk sums via correlation, sampled at the pixels
    r = int(radius)
    span = np.arange(-r, r + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    disk = ((dy * dy + dx * dx) <= r * r).astype(np.float64)
    s_f = lab.astype(np.float64)
    cnt_s = ndimage.correlate(s_f, disk, mode="constant", cval=0.0)
    cnt_t = ndimage.correlate(1.0 - s_f, disk, mode="constant", cval=0.0)
    for i in range(maps.shape[0]):
        sum_s = ndimage.correlate(maps[i] * s_f, disk, mode="constant", cval=0.0)
        sum_t = ndimage.correlate(maps[i] * (1.0 - s_f), disk, mode="constant", cval=0.0)
        cs = cnt_s[node_ys, node_xs]
        ct = cnt_t[node_ys, node_xs]
        out_s[:, i] = np.where(cs > 0.5, sum_s[node_ys, node_xs] / np.maximum(cs, 1.0), glob_s[i])
        out_t[:, i] = np.where(ct > 0.5, sum_t[node_ys, node_xs] / np.maximum(ct, 1.0), glob_t[i])
    return out_s, out_t


def local_means(stack: FeatureStack, labels: BinaryMask, p, radius: int):
    """Per-pixel op: (f_i^S(p), f_i^T(p)) arrays at p = (x, y)."""
    x, y = int(p[0]), int(p[1])
    f_s, f_t = segment_means_at(stack, labels, np.array([y]), np.array([x]), radius)
    return f_s[0], f_t[0]


# ---------------------------------------------------------------------------
# regional difference measure and edge weights


def _k_candidates(i_u, i_v, fs_u, ft_u, fs_v, ft_v):
    """Stack Eq-candidate values in tie order (S,T), (T,S), (S,S), (T,T)."""
    du_s = (i_u - fs_u) ** 2
    du_t = (i_u - ft_u) ** 2
    dv_s = (i_v - fs_v) ** 2
    dv_t = (i_v - ft_v) ** 2
    return np.stack([du_s + dv_t, du_t + dv_s, du_s + dv_s, du_t + dv_t])


def regional_K(stack: FeatureStack, labels: BinaryMask, p, q, radius: int):
    """Raw per-map K values at an adjacent pair plus the implied labels.

    Substitution of same-label pairs with the band maximum happens at the
    band level (see ``edge_weights``); here the raw minimum and the
    minimizing (l_p, l_q) per map are returned.
    """
    f_s_p, f_t_p = local_means(stack, labels, p, radius)
    f_s_q, f_t_q = local_means(stack, labels, q, radius)
    x_p, y_p = int(p[0]), int(p[1])
    x_q, y_q = int(q[0]), int(q[1])
    i_p = stack.maps[:, y_p, x_p]
    i_q = stack.maps[:, y_q, x_q]
    cands = _k_candidates(i_p, i_q, f_s_p, f_t_p, f_s_q, f_t_q)  # (4, N)
    choice = np.argmin(cands, axis=0)
    k_raw = cands[choice, np.arange(cands.shape[1])]
    pairs = [_LABEL_PAIRS[c] for c in choice]
    return k_raw, pairs


def pixel_weight(i_u, i_v, sigma):
    """w_p for feature vectors of two adjacent pixels."""
    return np.exp(-np.mean((np.asarray(i_u) - np.asarray(i_v)) ** 2, axis=-1) / sigma)


def regional_weight(avg_k, sigma, epsilon):
    """w_r for an averaged (already substituted) regional difference."""
    return np.exp(-(1.0 / (avg_k + epsilon)) / sigma)


def edge_weight(stack: FeatureStack, labels: BinaryMask, p, q, params: WeightParams,
                band_max_k=None):
    """Per-pair op; ``band_max_k`` enables the same-label substitution."""
    x_p, y_p = int(p[0]), int(p[1])
    x_q, y_q = int(q[0]), int(q[1])
    i_p = stack.maps[:, y_p, x_p]
    i_q = stack.maps[:, y_q, x_q]
    w_p = float(pixel_weight(i_p, i_q, params.sigma))
    if params.weight_mode == "pixel":
        return w_p
    k_raw, pairs = regional_K(stack, labels, p, q, params.neighborhood_radius)
    if band_max_k is not None:
        same = np.array([a == b for a, b in pairs])
        k_raw = np.where(same, np.asarray(band_max_k, dtype=np.float64), k_raw)
    w_r = float(regional_weight(k_raw.mean(), params.sigma, params.epsilon))
    if params.weight_mode == "regional":
        return w_r
    return w_p + w_r


def edge_weights(band: NarrowBand, stack: FeatureStack, labels: BinaryMask,
                 params: WeightParams):
    """Vectorized weights for every in-band adjacency.

    Returns (us, vs, w, w_p, w_r). The same-label substitution uses the
    per-map maximum of the raw K over all band adjacencies, computed in a
    first pass exactly as the per-pair ops would.
    """
    us, vs = band_edges(band, params.connectivity)
    maps = stack.maps
    feat = maps[:, band.node_ys, band.node_xs].T  # (nodes, N)
    i_u = feat[us]
    i_v = feat[vs]
    w_p = np.exp(-np.mean((i_u - i_v) ** 2, axis=1) / params.sigma)
    if params.weight_mode == "pixel":
        return us, vs, w_p, w_p, np.zeros_like(w_p)
    f_s, f_t = segment_means_at(
        stack, labels, band.node_ys, band.node_xs, params.neighborhood_radius
    )
    cands = _k_candidates(i_u, i_v, f_s[us], f_t[us], f_s[vs], f_t[vs])  # (4, E, N)
    choice = np.argmin(cands, axis=0)
    k_raw = np.take_along_axis(cands, choice[None], axis=0)[0]  # (E, N)
    band_max = k_raw.max(axis=0) if k_raw.size else np.zeros(maps.shape[0])
    k_final = np.where(choice >= 2, band_max[None, :], k_raw)
    w_r = np.exp(-(1.0 / (k_final.mean(axis=1) + params.epsilon)) / params.sigma)
    if params.weight_mode == "regional":
        return us, vs, w_r, w_p, w_r
    return us, vs, w_p + w_r, w_p, w_r


def build_graph(band: NarrowBand, stack: FeatureStack, labels: BinaryMask,
                params: WeightParams) -> FlowGraph:
    """One node per band pixel; symmetric n-links; infinite seed t-links."""
    if not band.inner_seed.any() or not band.outer_seed.any():
        raise IllPosedBandError("band lacks a seed set")
    us, vs, w, _, _ = edge_weights(band, stack, labels, params)
    g = FlowGraph()
    g.add_nodes(band.node_count)
    g.add_nlinks(us, vs, w, w)
    inner_nodes = band.node_index[band.inner_seed]
    outer_nodes = band.node_index[band.outer_seed]
    for node in inner_nodes:
        g.add_tlink(int(node), INFINITE, 0.0)
    for node in outer_nodes:
        g.add_tlink(int(node), 0.0, INFINITE)
    return g


def dump_graph_csv(band: NarrowBand, stack: FeatureStack, labels: BinaryMask,
                   params: WeightParams, path) -> None:
    """Debug dump: one row per edge with p, q pixel coords and weights."""
    us, vs, w, w_p, w_r = edge_weights(band, stack, labels, params)
    ys, xs = band.node_ys, band.node_xs
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("p_x,p_y,q_x,q_y,w_p,w_r,w\n")
        for k in range(us.size):
            u, v = us[k], vs[k]
            fh.write(
                f"{xs[u]},{ys[u]},{xs[v]},{ys[v]},{w_p[k]!r},{w_r[k]!r},{w[k]!r}\n"
            )


def dump_seeds_json(band: NarrowBand, path) -> None:
    """Debug dump of the S/T seed pixel lists as JSON [x, y] pairs."""
    import json

    iy, ix = np.nonzero(band.inner_seed)
    oy, ox = np.nonzero(band.outer_seed)
    doc = {
        "inner_seed": [[int(x), int(y)] for y, x in zip(iy, ix)],
        "outer_seed": [[int(x), int(y)] for y, x in zip(oy, ox)],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
