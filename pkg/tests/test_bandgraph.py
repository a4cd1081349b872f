import numpy as np
import pytest

from kidneycut import bandgraph, raster
from kidneycut.bandgraph import (
    FeatureStack,
    NarrowBand,
    WeightParams,
    band_edges,
    build_band,
    build_graph,
    edge_weight,
    edge_weights,
    local_means,
    pixel_weight,
    regional_K,
    regional_weight,
    segment_means_at,
)
from kidneycut.errors import IllPosedBandError, InitializationTooSmallError
from kidneycut.raster import BinaryMask


def disk_mask(h, w, cy, cx, r):
    yy, xx = np.mgrid[0:h, 0:w]
    return BinaryMask((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r)


class TestBuildBand:
    def test_disk_band_is_set_difference(self):
        cur = disk_mask(40, 40, 20, 20, 12)
        params = WeightParams()
        band = build_band(cur, params)
        want = raster.dilate(cur, 15).data & ~raster.erode(cur, 3).data
        assert np.array_equal(band.band.data, want)
        assert band.inner_seed.any() and band.outer_seed.any()
        assert not (band.inner_seed & band.outer_seed).any()
        assert np.all(band.band.data[band.inner_seed])
        assert np.all(band.band.data[band.outer_seed])

    def test_inner_seed_adjacent_to_core(self):
        cur = disk_mask(40, 40, 20, 20, 12)
        band = build_band(cur, WeightParams())
        core = raster.erode(cur, 3).data
        ys, xs = np.nonzero(band.inner_seed)
        for y, x in zip(ys, xs):
            neighbors = [
                core[y + dy, x + dx]
                for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1))
                if 0 <= y + dy < 40 and 0 <= x + dx < 40
            ]
            assert any(neighbors)

    def test_zero_radii_error(self):
        cur = disk_mask(20, 20, 10, 10, 5)
        with pytest.raises(IllPosedBandError):
            build_band(cur, WeightParams(band_inflate=0, band_shrink=0))

    def test_erosion_empties_error(self):
        cur = disk_mask(20, 20, 10, 10, 2)
        with pytest.raises(InitializationTooSmallError):
            build_band(cur, WeightParams(band_shrink=3))

    def test_border_pixels_seed_to_t(self):
        # dilation covers the whole 16x16 image: no outside pixels remain,
        # so band pixels on the image border are seeded T by the border rule
        cur = disk_mask(16, 16, 8, 8, 5)
        band = build_band(cur, WeightParams(band_inflate=15, band_shrink=2))
        assert not (~raster.dilate(cur, 15).data).any()
        assert band.outer_seed.any()
        ys, xs = np.nonzero(band.outer_seed)
        on_border = (ys == 0) | (ys == 15) | (xs == 0) | (xs == 15)
        assert on_border.all()

    def test_empty_and_full_masks_rejected(self):
        with pytest.raises(InitializationTooSmallError):
            build_band(BinaryMask(np.zeros((8, 8), dtype=bool)), WeightParams())
        with pytest.raises(IllPosedBandError):
            build_band(BinaryMask(np.ones((8, 8), dtype=bool)), WeightParams())

    def test_node_index_bijection(self):
        cur = disk_mask(40, 40, 20, 20, 10)
        band = build_band(cur, WeightParams())
        idx = band.node_index[band.node_ys, band.node_xs]
        assert np.array_equal(np.sort(idx), np.arange(band.node_count))
        assert (band.node_index >= 0).sum() == band.node_count


class TestLocalMeans:
    def test_absent_segment_falls_back_to_image_mean(self):
        rng = np.random.default_rng(0)
        maps = rng.random((1, 8, 8))
        stack = FeatureStack(maps)
        labels = BinaryMask(np.ones((8, 8), dtype=bool))  # all S
        f_s, f_t = local_means(stack, labels, (4, 4), 2)
        assert f_t[0] == pytest.approx(maps[0].mean())

    def test_constant_map(self):
        stack = FeatureStack(np.full((2, 10, 10), 0.4))
        labels = BinaryMask(np.mgrid[0:10, 0:10][1] < 5)
        f_s, f_t = local_means(stack, labels, (5, 5), 3)
        assert np.allclose(f_s, 0.4) and np.allclose(f_t, 0.4)

    def test_half_plane_example(self):
        # 5x5, left half S with value 0.2, right half T with value 0.8
        vals = np.where(np.mgrid[0:5, 0:5][1] < 2, 0.2, 0.8)
        labels = BinaryMask(np.mgrid[0:5, 0:5][1] < 2)
        vals = np.where(labels.data, 0.2, 0.8)
        stack = FeatureStack(vals[None])
        f_s, f_t = local_means(stack, labels, (2, 2), 2)
        assert f_s[0] == pytest.approx(0.2)
        assert f_t[0] == pytest.approx(0.8)

    def test_backends_agree(self):
        rng = np.random.default_rng(5)
        maps = rng.random((2, 20, 20))
        labels = rng.random((20, 20)) > 0.5
        ys, xs = np.mgrid[2:18, 2:18]
        ys, xs = ys.ravel(), xs.ravel()
        glob_s, glob_t = bandgraph._global_segment_means(maps, labels)
        offs = raster.disk_offsets(4)
        a_s = np.empty((ys.size, 2))
        a_t = np.empty((ys.size, 2))
        bandgraph._local_means_loops(maps, labels, ys, xs, offs, glob_s, glob_t, a_s, a_t)
        # oracle: direct disk enumeration
        for k in range(0, ys.size, 37):
            y, x = ys[k], xs[k]
            sel_s, sel_t = [], []
            for dy in range(-4, 5):
                for dx in range(-4, 5):
                    if dy * dy + dx * dx > 16:
                        continue
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < 20 and 0 <= xx < 20:
                        (sel_s if labels[yy, xx] else sel_t).append((yy, xx))
            for i in range(2):
                want_s = np.mean([maps[i, p, q] for p, q in sel_s]) if sel_s else glob_s[i]
                assert a_s[k, i] == pytest.approx(want_s, abs=1e-12)


class TestRegionalK:
    def test_tie_order(self):
        # all candidates equal -> argmin picks (S, T) first
        cands = bandgraph._k_candidates(
            np.array([0.5]), np.array([0.5]),
            np.array([0.5]), np.array([0.5]), np.array([0.5]), np.array([0.5])
        )
        assert np.argmin(cands[:, 0]) == 0

    def test_cross_label_fit(self):
        cands = bandgraph._k_candidates(
            np.array([0.2]), np.array([0.8]),
            np.array([0.2]), np.array([0.8]),  # f_s(p), f_t(p)
            np.array([0.2]), np.array([0.8]),  # f_s(q), f_t(q)
        )
        assert np.argmin(cands[:, 0]) == 0
        assert cands[0, 0] == 0.0

    def test_same_label_minimizer_example(self):
        # I(p)=0.25, fS(p)=0.2, fT(p)=0.9; I(q)=0.3, fS(q)=0.25, fT(q)=0.85
        cands = bandgraph._k_candidates(
            np.array([0.25]), np.array([0.3]),
            np.array([0.2]), np.array([0.9]),
            np.array([0.25]), np.array([0.85]),
        )
        choice = int(np.argmin(cands[:, 0]))
        assert choice == 2  # (S, S)
        assert cands[2, 0] == pytest.approx(0.05**2 + 0.05**2)

    def test_regional_K_against_local_means(self):
        rng = np.random.default_rng(6)
        maps = rng.random((2, 12, 12))
        stack = FeatureStack(maps)
        labels = BinaryMask(rng.random((12, 12)) > 0.5)
        p, q = (5, 6), (6, 6)
        k_raw, pairs = regional_K(stack, labels, p, q, 3)
        f_s_p, f_t_p = local_means(stack, labels, p, 3)
        f_s_q, f_t_q = local_means(stack, labels, q, 3)
        i_p = maps[:, p[1], p[0]]
        i_q = maps[:, q[1], q[0]]
        for i in range(2):
            opts = {
                ("S", "T"): (i_p[i] - f_s_p[i]) ** 2 + (i_q[i] - f_t_q[i]) ** 2,
                ("T", "S"): (i_p[i] - f_t_p[i]) ** 2 + (i_q[i] - f_s_q[i]) ** 2,
                ("S", "S"): (i_p[i] - f_s_p[i]) ** 2 + (i_q[i] - f_s_q[i]) ** 2,
                ("T", "T"): (i_p[i] - f_t_p[i]) ** 2 + (i_q[i] - f_t_q[i]) ** 2,
            }
            assert k_raw[i] == pytest.approx(min(opts.values()), abs=1e-12)
            assert opts[pairs[i]] == pytest.approx(min(opts.values()), abs=1e-12)


class TestEdgeWeight:
    def test_identical_features_give_unit_pixel_weight(self):
        assert pixel_weight(np.array([0.3, 0.3]), np.array([0.3, 0.3]), 0.1) == 1.0

    def test_scalar_pixel_weight_example(self):
        w = pixel_weight(np.array([0.2]), np.array([0.8]), 0.1)
        assert w == pytest.approx(np.exp(-0.36 / 0.1), rel=1e-12)

    def test_scalar_regional_weight_example(self):
        w = regional_weight(0.04, 0.1, 1e-6)
        assert w == pytest.approx(np.exp(-(1.0 / 0.040001) / 0.1), rel=1e-9)
        assert w < 1e-100  # weak link, cuttable

    def test_weight_bounds_and_symmetry(self):
        rng = np.random.default_rng(8)
        maps = rng.random((2, 24, 24))
        stack = FeatureStack(maps)
        labels = disk_mask(24, 24, 12, 12, 7)
        band = build_band(labels, WeightParams(band_inflate=4, band_shrink=2))
        us, vs, w, w_p, w_r = edge_weights(band, stack, labels, WeightParams(band_inflate=4, band_shrink=2))
        assert np.all(w_p > 0) and np.all(w_p <= 1)
        assert np.all(w_r >= 0) and np.all(w_r < 1)  # w_r > 0 modulo float underflow
        # symmetric capacities by construction: graph stores w for both arcs
        g = build_graph(band, stack, labels, WeightParams(band_inflate=4, band_shrink=2))
        caps = np.asarray(g._caps)
        assert np.array_equal(caps[0 : 2 * len(us) : 2], caps[1 : 2 * len(us) : 2])

    def test_pixel_weight_monotone_in_difference(self):
        diffs = np.linspace(0, 1, 11)
        ws = [pixel_weight(np.array([0.0]), np.array([d]), 0.1) for d in diffs]
        assert all(a > b for a, b in zip(ws, ws[1:]))

    def test_same_label_pairs_get_band_max(self):
        # one map: a flat region (same-label minimizer) and a step (cross fit)
        vals = np.zeros((20, 20))
        vals[:, 10:] = 0.8
        vals[:, :10] = 0.2
        labels = BinaryMask(np.mgrid[0:20, 0:20][1] < 10)
        stack = FeatureStack(vals[None])
        band = NarrowBand(
            band=BinaryMask(np.ones((20, 20), dtype=bool)),
            inner_seed=np.zeros((20, 20), dtype=bool),
            outer_seed=np.zeros((20, 20), dtype=bool),
            node_index=np.arange(400, dtype=np.int32).reshape(20, 20),
            node_ys=np.repeat(np.arange(20), 20),
            node_xs=np.tile(np.arange(20), 20),
        )
        params = WeightParams(weight_mode="regional")
        us, vs, w, w_p, w_r = edge_weights(band, stack, labels, params)
        xs_u = band.node_xs[us]
        xs_v = band.node_xs[vs]
        crossing = ((xs_u == 9) & (xs_v == 10)) | ((xs_u == 10) & (xs_v == 9))
        same_region = (xs_u < 8) & (xs_v < 8)
        assert w_r[same_region].min() >= w_r[crossing].max()

    def test_edge_weight_modes(self):
        rng = np.random.default_rng(9)
        maps = rng.random((1, 10, 10))
        stack = FeatureStack(maps)
        labels = BinaryMask(rng.random((10, 10)) > 0.5)
        p, q = (4, 5), (5, 5)
        w_pix = edge_weight(stack, labels, p, q, WeightParams(weight_mode="pixel"))
        w_reg = edge_weight(stack, labels, p, q, WeightParams(weight_mode="regional"))
        w_both = edge_weight(stack, labels, p, q, WeightParams(weight_mode="both"))
        assert w_both == pytest.approx(w_pix + w_reg, rel=1e-12)


class TestBuildGraph:
    def ring_band(self):
        band = np.zeros((9, 9), dtype=bool)
        band[2, 2:7] = band[6, 2:7] = True
        band[2:7, 2] = band[2:7, 6] = True
        ys, xs = np.nonzero(band)
        idx = np.full((9, 9), -1, dtype=np.int32)
        idx[ys, xs] = np.arange(ys.size, dtype=np.int32)
        inner = np.zeros_like(band)
        inner[2, 2] = True
        outer = np.zeros_like(band)
        outer[6, 6] = True
        return NarrowBand(BinaryMask(band), inner, outer, idx, ys.astype(np.int64), xs.astype(np.int64))

    def test_one_pixel_ring_degree_two(self):
        band = self.ring_band()
        us, vs = band_edges(band, 4)
        assert band.node_count == 16
        assert len(us) == 16  # a cycle has as many edges as nodes
        degree = np.zeros(band.node_count, dtype=int)
        for u, v in zip(us, vs):
            degree[u] += 1
            degree[v] += 1
        assert np.all(degree == 2)

    def test_rectangular_band_edge_count(self):
        h, w = 6, 11
        band_mask = np.zeros((10, 15), dtype=bool)
        band_mask[2 : 2 + h, 2 : 2 + w] = True
        ys, xs = np.nonzero(band_mask)
        idx = np.full((10, 15), -1, dtype=np.int32)
        idx[ys, xs] = np.arange(ys.size, dtype=np.int32)
        inner = np.zeros_like(band_mask)
        inner[2, 2] = True
        outer = np.zeros_like(band_mask)
        outer[7, 12] = True
        band = NarrowBand(BinaryMask(band_mask), inner, outer, idx,
                          ys.astype(np.int64), xs.astype(np.int64))
        us, vs = band_edges(band, 4)
        assert len(us) == h * (w - 1) + w * (h - 1)
        us8, _ = band_edges(band, 8)
        assert len(us8) == h * (w - 1) + w * (h - 1) + 2 * (h - 1) * (w - 1)

    def test_constant_features_unit_pixel_weights(self):
        stack = FeatureStack(np.full((1, 9, 9), 0.5))
        labels = disk_mask(9, 9, 4, 4, 2)
        band = self.ring_band()
        us, vs, w, w_p, w_r = edge_weights(band, stack, labels, WeightParams())
        assert np.all(w_p == 1.0)

    def test_graph_counts_and_seeds(self):
        cur = disk_mask(40, 40, 20, 20, 10)
        params = WeightParams()
        band = build_band(cur, params)
        rng = np.random.default_rng(11)
        stack = FeatureStack(rng.random((2, 40, 40)))
        g = build_graph(band, stack, cur, params)
        us, vs = band_edges(band, params.connectivity)
        assert g.node_count == band.node_count
        assert g.arc_count == 2 * len(us)
        cut = g.max_flow()
        # seeds end on their forced sides
        assert np.all(cut.source_side[band.node_index[band.inner_seed]])
        assert not np.any(cut.source_side[band.node_index[band.outer_seed]])

    def test_dump_graph_csv(self, tmp_path):
        cur = disk_mask(30, 30, 15, 15, 8)
        params = WeightParams(band_inflate=5, band_shrink=2)
        band = build_band(cur, params)
        rng = np.random.default_rng(12)
        stack = FeatureStack(rng.random((1, 30, 30)))
        out = tmp_path / "graph.csv"
        bandgraph.dump_graph_csv(band, stack, cur, params, out)
        lines = out.read_text().strip().splitlines()
        us, _ = band_edges(band, params.connectivity)
        assert lines[0] == "p_x,p_y,q_x,q_y,w_p,w_r,w"
        assert len(lines) == 1 + len(us)


class TestWeightParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            WeightParams(sigma=0)
        with pytest.raises(ValueError):
            WeightParams(connectivity=6)
        with pytest.raises(ValueError):
            WeightParams(weight_mode="fancy")
        with pytest.raises(ValueError):
            WeightParams(epsilon=0)
