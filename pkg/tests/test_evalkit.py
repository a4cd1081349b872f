import numpy as np
import pytest
from scipy import ndimage

from kidneycut import evalkit
from kidneycut.errors import UndefinedMetricError
from kidneycut.evalkit import (
    Case,
    GridSpec,
    ablation_run,
    dice,
    grid_search,
    icc,
    init_points_from_truth,
    jaccard,
    make_phantom,
    mean_distance,
)
from kidneycut.raster import BinaryMask, mask_boundary


def square(h, w, y0, x0, side):
    m = np.zeros((h, w), dtype=bool)
    m[y0 : y0 + side, x0 : x0 + side] = True
    return BinaryMask(m)


def brute_force_mean_distance(e, f):
    be = mask_boundary(e).astype(float)
    bf = mask_boundary(f).astype(float)
    d = np.sqrt(((be[:, None, :] - bf[None, :, :]) ** 2).sum(axis=2))
    return d.min(axis=1).mean()


class TestOverlapMetrics:
    def test_identical(self):
        m = square(20, 20, 4, 4, 10)
        assert dice(m, m) == 1.0
        assert jaccard(m, m) == 1.0

    def test_disjoint(self):
        a = square(30, 30, 2, 2, 8)
        b = square(30, 30, 18, 18, 8)
        assert dice(a, b) == 0.0
        assert jaccard(a, b) == 0.0

    def test_half_overlap_squares(self):
        a = square(40, 40, 10, 10, 10)
        b = square(40, 40, 10, 15, 10)  # overlap is 10x5 = 50 px
        assert dice(a, b) == pytest.approx(2 * 50 / 200)
        assert jaccard(a, b) == pytest.approx(50 / 150)

    def test_dimension_mismatch(self):
        with pytest.raises(UndefinedMetricError):
            dice(square(10, 10, 1, 1, 3), square(12, 12, 1, 1, 3))

    def test_both_empty(self):
        e = BinaryMask(np.zeros((5, 5), dtype=bool))
        with pytest.raises(UndefinedMetricError):
            dice(e, e)
        with pytest.raises(UndefinedMetricError):
            jaccard(e, e)

    def test_dice_jaccard_identity_1000_pairs(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            a = BinaryMask(rng.random((12, 12)) > 0.5)
            b = BinaryMask(rng.random((12, 12)) > 0.5)
            if not (a.data.any() or b.data.any()) or not (a.data | b.data).any():
                continue
            d = dice(a, b)
            j = jaccard(a, b)
            assert abs(d - 2 * j / (1 + j)) < 1e-12


class TestMeanDistance:
    def test_identical_zero(self):
        m = square(20, 20, 5, 5, 8)
        assert mean_distance(m, m) == 0.0

    def test_shifted_square_matches_brute_force(self):
        a = square(30, 30, 8, 8, 10)
        b = square(30, 30, 8, 10, 10)
        assert mean_distance(a, b) == pytest.approx(brute_force_mean_distance(a, b), abs=1e-9)

    def test_directional_asymmetry(self):
        small = square(40, 40, 15, 15, 6)
        large = square(40, 40, 8, 8, 24)
        d_sl = mean_distance(small, large)
        d_ls = mean_distance(large, small)
        assert d_sl != d_ls
        assert d_sl == pytest.approx(brute_force_mean_distance(small, large), abs=1e-9)
        assert d_ls == pytest.approx(brute_force_mean_distance(large, small), abs=1e-9)

    def test_symmetric_variant_is_average(self):
        a = square(30, 30, 5, 5, 9)
        b = square(30, 30, 9, 7, 11)
        sym = mean_distance(a, b, symmetric=True)
        assert sym == pytest.approx(0.5 * (mean_distance(a, b) + mean_distance(b, a)), abs=1e-15)

    def test_translation_invariance(self):
        a = square(40, 40, 5, 5, 8)
        b = square(40, 40, 7, 9, 8)
        a2 = square(40, 40, 15, 15, 8)
        b2 = square(40, 40, 17, 19, 8)
        assert mean_distance(a, b) == pytest.approx(mean_distance(a2, b2), abs=1e-12)
        assert dice(a, b) == dice(a2, b2)

    def test_empty_boundary(self):
        with pytest.raises(UndefinedMetricError):
            mean_distance(BinaryMask(np.zeros((5, 5), dtype=bool)), square(5, 5, 1, 1, 2))


class TestICC:
    def test_identical_rows(self):
        rng = np.random.default_rng(1)
        row = rng.random(10)
        mat = np.tile(row, (3, 1))
        assert icc(mat) == pytest.approx(1.0)

    def test_constant_shift_invariance(self):
        rng = np.random.default_rng(2)
        mat = rng.random((4, 9))
        assert icc(mat + 5.0) == pytest.approx(icc(mat), abs=1e-12)

    def test_against_textbook_oracle(self):
        rng = np.random.default_rng(3)
        subjects = rng.normal(0, 1, 12)
        mat = np.array([subjects + rng.normal(0, 0.3, 12) for _ in range(4)])

        # independent reference: literal mean-square decomposition in loops
        x = mat.T
        n, k = x.shape
        grand = sum(sum(row) for row in x) / (n * k)
        row_means = [sum(row) / k for row in x]
        col_means = [sum(x[i][j] for i in range(n)) / n for j in range(k)]
        ss_total = sum((x[i][j] - grand) ** 2 for i in range(n) for j in range(k))
        ss_rows = k * sum((rm - grand) ** 2 for rm in row_means)
        ss_cols = n * sum((cm - grand) ** 2 for cm in col_means)
        msr = ss_rows / (n - 1)
        msc = ss_cols / (k - 1)
        mse = (ss_total - ss_rows - ss_cols) / ((n - 1) * (k - 1))
        want = (msr - mse) / (msr + (msc - mse) / n)
        assert icc(mat) == pytest.approx(want, abs=1e-9)

    def test_zero_between_subject_variance(self):
        with pytest.raises(UndefinedMetricError):
            icc(np.ones((3, 5)))

    def test_shape_validation(self):
        with pytest.raises(UndefinedMetricError):
            icc(np.ones((1, 5)))
        with pytest.raises(UndefinedMetricError):
            icc(np.ones((3, 1)))


class TestPhantom:
    def test_deterministic(self):
        a = make_phantom("weak-boundary", seed=7)
        b = make_phantom("weak-boundary", seed=7)
        assert a.image.data.tobytes() == b.image.data.tobytes()
        assert a.truth.data.tobytes() == b.truth.data.tobytes()

    def test_distinct_seeds_differ(self):
        a = make_phantom("clean-ellipse", seed=1)
        b = make_phantom("clean-ellipse", seed=2)
        assert a.image.data.tobytes() != b.image.data.tobytes()

    def test_noiseless_is_piecewise_constant(self):
        ph = make_phantom("clean-ellipse", seed=4, speckle=0.0)
        values = np.unique(ph.image.data)
        assert set(values.tolist()) == {0.35, 0.65}
        assert np.all((ph.image.data == 0.35) == ph.truth.data)

    def test_truth_single_connected_region(self):
        for preset in evalkit.PHANTOM_PRESETS:
            for seed in (0, 5):
                ph = make_phantom(preset, seed=seed)
                _, n = ndimage.label(ph.truth.data)
                assert n == 1

    def test_major_axis_in_spec_range(self):
        for seed in range(8):
            ph = make_phantom("clean-ellipse", seed=seed)
            assert 60 <= 2 * ph.meta["semi_axes"][0] <= 90

    def test_weak_boundary_gap_contrast(self):
        # arc-sampling oracle: near-boundary pixels inside the gap sector
        ph = make_phantom("weak-boundary", seed=3, speckle=0.0)
        meta = ph.meta
        cy, cx = meta["center"]
        a, b = meta["semi_axes"]
        tilt = meta["tilt"]
        yy, xx = np.mgrid[0 : meta["size"], 0 : meta["size"]].astype(np.float64)
        dx = xx - cx
        dy = yy - cy
        u = (dx * np.cos(tilt) + dy * np.sin(tilt)) / a
        v = (-dx * np.sin(tilt) + dy * np.cos(tilt)) / b
        phi = np.arctan2(v, u)
        in_arc = np.abs(np.angle(np.exp(1j * (phi - meta["gap_center"])))) <= np.deg2rad(
            meta["gap_arc_degrees"] / 2
        )
        dist_in = ndimage.distance_transform_edt(ph.truth.data)
        dist_out = ndimage.distance_transform_edt(~ph.truth.data)
        ring_in = ph.truth.data & (dist_in <= 3) & in_arc
        ring_out = ~ph.truth.data & (dist_out <= 3) & in_arc
        gap_diff = abs(ph.image.data[ring_in].mean() - ph.image.data[ring_out].mean())
        assert gap_diff < 0.05
        # sanity: away from the arc the contrast is intact
        far = np.abs(np.angle(np.exp(1j * (phi - meta["gap_center"])))) > np.deg2rad(60)
        out_diff = abs(
            ph.image.data[ph.truth.data & (dist_in <= 3) & far].mean()
            - ph.image.data[~ph.truth.data & (dist_out <= 3) & far].mean()
        )
        assert out_diff > 0.2

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            make_phantom("nope", seed=0)


class TestInitPoints:
    def test_deterministic_and_inside(self):
        ph = make_phantom("clean-ellipse", seed=6)
        a = init_points_from_truth(ph.truth, 8, 6)
        b = init_points_from_truth(ph.truth, 8, 6)
        assert np.array_equal(a, b)
        for x, y in a:
            assert ph.truth.data[int(round(y)), int(round(x))]

    def test_jitter_requires_rng(self):
        ph = make_phantom("clean-ellipse", seed=6)
        with pytest.raises(ValueError):
            init_points_from_truth(ph.truth, 8, 6, jitter=3.0)
        rng = np.random.default_rng(0)
        pts = init_points_from_truth(ph.truth, 8, 6, jitter=3.0, rng=rng)
        base = init_points_from_truth(ph.truth, 8, 6)
        assert np.all(np.abs(pts - base) <= 3.0)


class TestBatchRunners:
    @pytest.fixture(scope="class")
    def small_case(self):
        ph = make_phantom("clean-ellipse", seed=11, size=160)
        pts = init_points_from_truth(ph.truth, 8, 6)
        return Case(image=ph.image, init_points=pts, truth=ph.truth, case_id="c0")

    def test_grid_search_single_setting(self, small_case):
        spec = GridSpec(scales_options=(2,), directions_options=(4,), sigma_options=(0.1,))
        rows = grid_search([small_case], spec)
        assert len(rows) == 1
        assert rows[0]["scales"] == 2 and rows[0]["sigma"] == 0.1
        assert 0 <= rows[0]["mean_dice"] <= 1
        assert rows[0]["n_failed"] == 0

    def test_grid_search_ordering_deterministic(self, small_case):
        spec = GridSpec(scales_options=(2,), directions_options=(4, 8), sigma_options=(0.1,))
        a = grid_search([small_case], spec)
        b = grid_search([small_case], spec)
        assert [(r["scales"], r["directions"], r["sigma"]) for r in a] == [
            (r["scales"], r["directions"], r["sigma"]) for r in b
        ]
        assert a[0]["mean_dice"] >= a[-1]["mean_dice"]

    def test_grid_spec_validation(self):
        with pytest.raises(ValueError):
            GridSpec(scales_options=())
        with pytest.raises(ValueError):
            GridSpec(scales_options=(7,))
        with pytest.raises(ValueError):
            GridSpec(sigma_options=(0.5,))

    def test_ablation_feature_set(self, small_case):
        out = ablation_run([small_case], "feature_set")
        assert set(out["variants"]) == {"intensity", "gabor", "both"}
        assert out["summary"]["both"]["n"] == 1
        assert 0 <= out["summary"]["both"]["mean_dice"] <= 1

    def test_ablation_initialization_jitter_seeded(self, small_case):
        a = ablation_run([small_case], "initialization", seed=5)
        b = ablation_run([small_case], "initialization", seed=5)
        assert a["summary"] == b["summary"]

    def test_ablation_unknown_mode(self, small_case):
        with pytest.raises(ValueError):
            ablation_run([small_case], "bogus")

    def test_csv_writers(self, small_case, tmp_path):
        spec = GridSpec(scales_options=(2,), directions_options=(4,), sigma_options=(0.1,))
        rows = grid_search([small_case], spec)
        grid_csv = tmp_path / "grid.csv"
        evalkit.write_grid_csv(rows, grid_csv)
        lines = grid_csv.read_text().strip().splitlines()
        assert lines[0].startswith("scales,directions,sigma,mean_dice")
        assert len(lines) == 2

        outcome = ablation_run([small_case], "weight_mode")
        abl_csv = tmp_path / "abl.csv"
        evalkit.write_ablation_csv(outcome, abl_csv)
        lines = abl_csv.read_text().strip().splitlines()
        assert lines[0] == "variant,case_id,dice,jaccard,mean_distance"
        assert len(lines) == 4
