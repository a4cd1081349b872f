"""Evaluation harness: overlap metrics, ICC, synthetic speckle phantoms,
parameter grid search and ablation runners."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import UndefinedMetricError
from .raster import BinaryMask, GrayImage, erode, mask_boundary
from .segmenter import SegConfig, run_segmentation
from .gabor import GaborParams
from .bandgraph import WeightParams


@dataclass(frozen=True)
class MetricReport:
    dice: float
    jaccard: float
    mean_distance: float

    def to_dict(self) -> dict:
        return {"dice": self.dice, "jaccard": self.jaccard, "mean_distance": self.mean_distance}


def _check_pair(e: BinaryMask, f: BinaryMask):
    if e.data.shape != f.data.shape:
        raise UndefinedMetricError("mask dimensions differ")


def dice(e: BinaryMask, f: BinaryMask) -> float:
    """2|E∩F| / (|E|+|F|)."""
    _check_pair(e, f)
    total = int(e.data.sum()) + int(f.data.sum())
    if total == 0:
        raise UndefinedMetricError("dice undefined for two empty masks")
    return 2.0 * int((e.data & f.data).sum()) / total


def jaccard(e: BinaryMask, f: BinaryMask) -> float:
    """|E∩F| / |E∪F|."""
    _check_pair(e, f)
    union = int((e.data | f.data).sum())
    if union == 0:
        raise UndefinedMetricError("jaccard undefined for two empty masks")
    return int((e.data & f.data).sum()) / union


def mean_distance(e: BinaryMask, f: BinaryMask, symmetric: bool = False) -> float:
    """Mean over boundary(E) of the distance to the nearest boundary(F) pixel.

    Directional by default; ``symmetric=True`` averages both directions.
    """
    _check_pair(e, f)
    be = mask_boundary(e)
    bf = mask_boundary(f)
    if be.size == 0 or bf.size == 0:
        raise UndefinedMetricError("mean distance undefined for an empty boundary")
    d_ef = float(cKDTree(bf).query(be)[0].mean())
    if not symmetric:
        return d_ef
    d_fe = float(cKDTree(be).query(bf)[0].mean())
    return 0.5 * (d_ef + d_fe)


def metric_report(pred: BinaryMask, truth: BinaryMask) -> MetricReport:
    return MetricReport(
        dice=dice(pred, truth),
        jaccard=jaccard(pred, truth),
        mean_distance=mean_distance(pred, truth),
    )


def icc(measurements: np.ndarray) -> float:
    """Average-measures ICC, two-way random effects, absolute agreement.

    ``measurements`` is (k runs x n subjects). Computed from the standard
    two-way mean-square decomposition:

        ICC = (MSR - MSE) / (MSR + (MSC - MSE) / n)

    with MSR over subjects, MSC over runs, MSE the residual.
    """
    x = np.asarray(measurements, dtype=np.float64).T  # (n subjects, k runs)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise UndefinedMetricError("need k >= 2 runs and n >= 2 subjects")
    n, k = x.shape
    grand = x.mean()
    row_means = x.mean(axis=1)
    col_means = x.mean(axis=0)
    ss_total = float(((x - grand) ** 2).sum())
    ss_rows = k * float(((row_means - grand) ** 2).sum())
    ss_cols = n * float(((col_means - grand) ** 2).sum())
    ss_err = ss_total - ss_rows - ss_cols
    msr = ss_rows / (n - 1)
    msc = ss_cols / (k - 1)
    mse = ss_err / ((n - 1) * (k - 1))
    denom = msr + (msc - mse) / n
    if msr <= 0.0 or denom == 0.0:
        raise UndefinedMetricError("zero between-subject variance; ICC undefined")
    return (msr - mse) / denom


# ---------------------------------------------------------------------------
# synthetic speckle phantoms (stand-in for the unavailable clinical data)

PHANTOM_PRESETS = {
    # (interior, exterior) multiplicative speckle strength, echoing the
    # hypoechoic-parenchyma / echogenic-surroundings appearance of renal
    # ultrasound; weak-boundary additionally erases the intensity contrast
    # along a 40 degree arc of the boundary and bulges the truth outward
    # there, so only the texture statistics mark that part of the boundary
    "clean-ellipse": {"speckle": (0.06, 0.45), "gap": False},
    "weak-boundary": {"speckle": (0.05, 0.75), "gap": True},
    "high-speckle": {"speckle": (0.25, 1.50), "gap": False},
}

GAP_ARC_DEGREES = 40.0


@dataclass(frozen=True)
class Phantom:
    image: GrayImage
    truth: BinaryMask
    meta: dict = field(default_factory=dict)


def make_phantom(preset: str, seed: int, size: int = 256, speckle: float | None = None) -> Phantom:
    """Deterministic ellipse-ish phantom with multiplicative speckle.

    Interior/exterior base intensities are 0.35/0.65. Speckle multiplies
    the base with ``1 + s*(eta - 1)`` where eta is a squared-Rayleigh field
    smoothed by a 3x3 mean and normalized to unit mean.
    """
    if preset not in PHANTOM_PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PHANTOM_PRESETS)}")
    spec = PHANTOM_PRESETS[preset]
    if speckle is None:
        s_in, s_out = spec["speckle"]
    elif np.isscalar(speckle):
        s_in = s_out = float(speckle)
    else:
        s_in, s_out = (float(speckle[0]), float(speckle[1]))
    rng = np.random.default_rng(seed)

    cy = size / 2 + rng.uniform(-8, 8)
    cx = size / 2 + rng.uniform(-8, 8)
    # rounded shapes: the tip curvature radius stays large enough that the
    # cut's length bias cannot profitably clip the ends
    semi_major = rng.uniform(36.0, 45.0)  # major axis 72-90 px
    semi_minor = semi_major * rng.uniform(0.74, 0.88)
    tilt = rng.uniform(0.0, np.pi)
    lobe_amp = rng.uniform(0.015, 0.035)
    lobe_phase = rng.uniform(0.0, 2 * np.pi)
    # Place the gap on a stretch of boundary that is monotone in both image
    # axes. Under 4-connectivity a cut's cost scales with its L1 length, so
    # a contrast-free arc containing a horizontal/vertical tangent point
    # could be flattened by the cut at an actual saving.
    phi_x = np.arctan2(-semi_minor * np.sin(tilt), semi_major * np.cos(tilt))
    phi_y = np.arctan2(semi_minor * np.cos(tilt), semi_major * np.sin(tilt))
    extrema = np.sort(np.angle(np.exp(1j * np.array([phi_x, phi_x + np.pi, phi_y, phi_y + np.pi]))))
    order = rng.permutation(4)
    gap_center = 0.0
    best_margin = -1.0
    for k in order:
        lo = extrema[k]
        hi = extrema[(k + 1) % 4] + (2 * np.pi if k == 3 else 0.0)
        margin = (hi - lo) / 2.0
        if margin >= np.deg2rad(40.0):
            gap_center = float(np.angle(np.exp(1j * (lo + hi) / 2.0)))
            best_margin = margin
            break
        if margin > best_margin:
            best_margin = margin
            gap_center = float(np.angle(np.exp(1j * (lo + hi) / 2.0)))

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dx = xx - cx
    dy = yy - cy
    u = (dx * np.cos(tilt) + dy * np.sin(tilt)) / semi_major
    v = (-dx * np.sin(tilt) + dy * np.cos(tilt)) / semi_minor
    rho = np.hypot(u, v)
    phi = np.arctan2(v, u)
    boundary_rho = 1.0 + lobe_amp * np.cos(2.0 * phi + lobe_phase)
    truth = rho <= boundary_rho

    base = np.where(truth, 0.35, 0.65)
    if spec["gap"]:
        # full blend across the whole arc with a fast taper outside it; a
        # gradual taper would leave wide half-contrast flanks that the cut
        # erodes iteration by iteration
        dphi = np.abs(np.angle(np.exp(1j * (phi - gap_center))))
        half = np.deg2rad(GAP_ARC_DEGREES / 2.0)
        w_ang = np.where(
            dphi <= half, 1.0, np.exp(-0.5 * ((dphi - half) / np.deg2rad(4.0)) ** 2)
        )
        dist_in = ndimage.distance_transform_edt(truth)
        dist_out = ndimage.distance_transform_edt(~truth)
        d_boundary = np.where(truth, dist_in, dist_out)
        w_rad = np.exp(-0.5 * (d_boundary / 10.0) ** 2)
        base = base + (0.5 - base) * w_ang * w_rad

    eta = rng.rayleigh(scale=1.0, size=(size, size)) ** 2
    eta = ndimage.uniform_filter(eta, size=3, mode="nearest")
    eta /= eta.mean()
    scale_map = np.where(truth, s_in, s_out)
    field_ = 1.0 + scale_map * (eta - 1.0)
    img = np.clip(base * field_, 0.0, 1.0)

    meta = {
        "preset": preset,
        "seed": int(seed),
        "size": int(size),
        "speckle": [s_in, s_out],
        "contrast": [0.35, 0.65],
        "center": [cy, cx],
        "semi_axes": [semi_major, semi_minor],
        "tilt": tilt,
        "lobe": [lobe_amp, lobe_phase],
        "gap_arc_degrees": GAP_ARC_DEGREES if spec["gap"] else 0.0,
        "gap_center": gap_center if spec["gap"] else None,
    }
    return Phantom(image=GrayImage(img), truth=BinaryMask(truth), meta=meta)


def init_points_from_truth(truth: BinaryMask, num_points: int = 8, inset: int = 6,
                           jitter: float = 0.0, rng: np.random.Generator | None = None) -> np.ndarray:
    """Simulated user clicks: points on the truth boundary shrunk by ``inset``.

    Points are spread evenly by angle around the region centroid; optional
    jitter displaces each coordinate independently and uniformly by up to
    +-jitter px.
    """
    shrunk = truth
    ins = inset
    while ins > 0:
        shrunk = erode(truth, ins)
        if shrunk.data.any():
            break
        ins -= 1
    if not shrunk.data.any():
        shrunk = truth
    boundary = mask_boundary(shrunk)
    ys = boundary[:, 0].astype(np.float64)
    xs = boundary[:, 1].astype(np.float64)
    cy, cx = ys.mean(), xs.mean()
    angles = np.arctan2(ys - cy, xs - cx)
    pts = []
    for k in range(num_points):
        target = -np.pi + (k + 0.5) * 2.0 * np.pi / num_points
        gap = np.angle(np.exp(1j * (angles - target)))
        idx = int(np.argmin(np.abs(gap)))
        pts.append([xs[idx], ys[idx]])
    pts = np.asarray(pts, dtype=np.float64)
    if jitter > 0:
        if rng is None:
            raise ValueError("jitter requires an explicit rng for determinism")
        pts = pts + rng.uniform(-jitter, jitter, size=pts.shape)
    h, w = truth.data.shape
    pts[:, 0] = np.clip(pts[:, 0], 0, w - 1)
    pts[:, 1] = np.clip(pts[:, 1], 0, h - 1)
    return pts


# ---------------------------------------------------------------------------
# batch runners


@dataclass(frozen=True)
class GridSpec:
    scales_options: tuple = (2, 3, 4, 5)
    directions_options: tuple = (4, 8, 16)
    sigma_options: tuple = (1.0, 0.1, 0.01)

    def __post_init__(self):
        if not self.scales_options or not self.directions_options or not self.sigma_options:
            raise ValueError("every option list must be nonempty")
        if not set(self.scales_options) <= {2, 3, 4, 5}:
            raise ValueError("scales must come from {2, 3, 4, 5}")
        if not set(self.directions_options) <= {4, 8, 16}:
            raise ValueError("directions must come from {4, 8, 16}")
        if not set(self.sigma_options) <= {1.0, 0.1, 0.01}:
            raise ValueError("sigma must come from {1, 0.1, 0.01}")


@dataclass(frozen=True)
class Case:
    """One evaluation unit: an image, its init points and the truth mask."""

    image: GrayImage
    init_points: np.ndarray
    truth: BinaryMask
    case_id: str = ""


def _run_case(case: Case, cfg: SegConfig):
    result = run_segmentation(case.image, case.init_points, cfg)
    report = metric_report(result.mask, case.truth)
    return result, report


def grid_search(cases: list, spec: GridSpec) -> list:
    """Mean metrics for the full parameter product, best mean Dice first.

    A setting is dropped only when every case fails; individual failures
    are recorded in the row.
    """
    if not cases:
        raise ValueError("need at least one case")
    rows = []
    for scales in spec.scales_options:
        for directions in spec.directions_options:
            for sigma in spec.sigma_options:
                cfg = SegConfig(
                    gabor=GaborParams(num_scales=scales, num_directions=directions),
                    weights=WeightParams(sigma=sigma),
                )
                dices, dists, failures = [], [], []
                for case in cases:
                    try:
                        _, report = _run_case(case, cfg)
                        dices.append(report.dice)
                        dists.append(report.mean_distance)
                    except Exception as exc:  # per-case failure recorded
                        failures.append({"case_id": case.case_id, "error": str(exc)})
                if not dices:
                    continue
                rows.append(
                    {
                        "scales": scales,
                        "directions": directions,
                        "sigma": sigma,
                        "mean_dice": float(np.mean(dices)),
                        "mean_mean_distance": float(np.mean(dists)),
                        "n_cases": len(cases),
                        "n_failed": len(failures),
                        "failures": failures,
                    }
                )
    rows.sort(key=lambda r: (-r["mean_dice"], r["scales"], r["directions"], r["sigma"]))
    return rows


ABLATION_MODES = ("feature_set", "weight_mode", "initialization")


def _case_key(case_id: str) -> int:
    """Stable per-case seed component, independent of list order."""
    import hashlib

    return int.from_bytes(hashlib.sha256(case_id.encode()).digest()[:8], "big")


def summarize_variants(variants: dict) -> dict:
    summary = {}
    for name, entries in variants.items():
        if entries:
            dd = [e["report"].dice for e in entries]
            jj = [e["report"].jaccard for e in entries]
            mm = [e["report"].mean_distance for e in entries]
            summary[name] = {
                "mean_dice": float(np.mean(dd)),
                "std_dice": float(np.std(dd)),
                "mean_jaccard": float(np.mean(jj)),
                "mean_mean_distance": float(np.mean(mm)),
                "n": len(entries),
            }
    return summary


def ablation_run(cases: list, mode: str, jitter_px: float = 3.0, seed: int = 0) -> dict:
    """Vary one flag with everything else at defaults.

    feature_set: intensity / gabor / both image features.
    weight_mode: pixel / regional / both edge weights.
    initialization: three click sets jittered by +-jitter_px (seeded; the
    jitter stream is keyed by case id so chunked runs agree).
    """
    if mode not in ABLATION_MODES:
        raise ValueError(f"mode must be one of {ABLATION_MODES}")
    if not cases:
        raise ValueError("need at least one case")
    variants: dict[str, list] = {}
    failures: list = []
    if mode == "feature_set":
        names = ["intensity", "gabor", "both"]
    elif mode == "weight_mode":
        names = ["pixel", "regional", "both"]
    else:
        names = ["init-1", "init-2", "init-3"]
    for name in names:
        variants[name] = []
    for case in cases:
        for vi, name in enumerate(names):
            if mode == "feature_set":
                cfg = SegConfig(feature_set=name)
                points = case.init_points
            elif mode == "weight_mode":
                cfg = SegConfig(weights=WeightParams(weight_mode=name))
                points = case.init_points
            else:
                cfg = SegConfig()
                rng = np.random.default_rng((seed, _case_key(case.case_id), vi))
                points = case.init_points + rng.uniform(
                    -jitter_px, jitter_px, size=np.asarray(case.init_points).shape
                )
            try:
                _, report = _run_case(
                    Case(case.image, points, case.truth, case.case_id), cfg
                )
                variants[name].append({"case_id": case.case_id, "report": report})
            except Exception as exc:
                failures.append({"case_id": case.case_id, "variant": name, "error": str(exc)})
    return {"mode": mode, "variants": variants, "summary": summarize_variants(variants),
            "failures": failures}


def write_grid_csv(rows: list, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scales", "directions", "sigma", "mean_dice", "mean_mean_distance",
                         "n_cases", "n_failed"])
        for r in rows:
            writer.writerow([r["scales"], r["directions"], r["sigma"],
                             f"{r['mean_dice']:.6f}", f"{r['mean_mean_distance']:.6f}",
                             r["n_cases"], r["n_failed"]])


def write_ablation_csv(outcome: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "case_id", "dice", "jaccard", "mean_distance"])
        for name in sorted(outcome["variants"]):
            for entry in outcome["variants"][name]:
                rep = entry["report"]
                writer.writerow([name, entry["case_id"], f"{rep.dice:.6f}",
                                 f"{rep.jaccard:.6f}", f"{rep.mean_distance:.6f}"])
