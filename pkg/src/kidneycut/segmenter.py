"""Iterative narrow-band graph-cut segmentation.

One iteration rebuilds the band around the current contour, recomputes the
segment-conditioned regional weights from the current labels, solves
max-flow on the band graph and relabels the band pixels by cut side.
Pixels outside the band keep their labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bandgraph import FeatureStack, NarrowBand, WeightParams, build_band, build_graph
from .errors import DegenerateContourError, SegmentationCollapseError
from .gabor import GaborParams, gabor_feature_map
from .raster import BinaryMask, Contour, GrayImage, rasterize_contour, trace_boundary_chain

FEATURE_SETS = ("intensity", "gabor", "both")


@dataclass(frozen=True)
class SegConfig:
    gabor: GaborParams = field(default_factory=GaborParams)
    weights: WeightParams = field(default_factory=WeightParams)
    feature_set: str = "both"
    max_iterations: int = 20
    convergence_fraction: float = 0.001
    dynamic_band: bool = True  # False freezes the band built at iteration 1

    def __post_init__(self):
        if self.feature_set not in FEATURE_SETS:
            raise ValueError(f"feature_set must be one of {FEATURE_SETS}")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not 0 < self.convergence_fraction < 1:
            raise ValueError("convergence_fraction must be in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "gabor": {
                "num_scales": self.gabor.num_scales,
                "num_directions": self.gabor.num_directions,
                "wavelengths": list(self.gabor.wavelengths),
                "sigma_ratio": self.gabor.sigma_ratio,
                "kernel_halfwidth_sigmas": self.gabor.kernel_halfwidth_sigmas,
            },
            "weights": {
                "sigma": self.weights.sigma,
                "neighborhood_radius": self.weights.neighborhood_radius,
                "band_inflate": self.weights.band_inflate,
                "band_shrink": self.weights.band_shrink,
                "connectivity": self.weights.connectivity,
                "epsilon": self.weights.epsilon,
                "weight_mode": self.weights.weight_mode,
            },
            "feature_set": self.feature_set,
            "max_iterations": self.max_iterations,
            "convergence_fraction": self.convergence_fraction,
            "dynamic_band": self.dynamic_band,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SegConfig":
        gab = d.get("gabor", {})
        wts = d.get("weights", {})
        return cls(
            gabor=GaborParams(**gab) if gab else GaborParams(),
            weights=WeightParams(**wts) if wts else WeightParams(),
            feature_set=d.get("feature_set", "both"),
            max_iterations=d.get("max_iterations", 20),
            convergence_fraction=d.get("convergence_fraction", 0.001),
            dynamic_band=d.get("dynamic_band", True),
        )


@dataclass
class SegState:
    labels: BinaryMask
    iteration: int
    changed_pixels: list
    band: NarrowBand | None
    band_sizes: list = field(default_factory=list)
    cut_values: list = field(default_factory=list)


@dataclass(frozen=True)
class SegResult:
    mask: BinaryMask
    contour: np.ndarray  # ordered (x, y) boundary chain
    iterations_run: int
    converged: bool
    diagnostics: dict

    def to_dict(self) -> dict:
        return {
            "iterations_run": self.iterations_run,
            "converged": self.converged,
            "diagnostics": self.diagnostics,
            "contour": [[int(x), int(y)] for x, y in self.contour],
        }


def initialize(img: GrayImage, points, cfg: SegConfig):
    """Rasterize the clicked contour and assemble the feature stack.

    The Gabor map is computed once per image, before any iteration.
    Returns (SegState, FeatureStack).
    """
    contour = points if isinstance(points, Contour) else Contour(points)
    labels = rasterize_contour(contour, img.width, img.height)
    if not labels.data.any():
        raise DegenerateContourError("contour interior is empty after rasterization")
    maps = []
    if cfg.feature_set in ("intensity", "both"):
        maps.append(img.data)
    if cfg.feature_set in ("gabor", "both"):
        maps.append(gabor_feature_map(img, cfg.gabor).data)
    stack = FeatureStack(np.stack(maps))
    state = SegState(labels=labels, iteration=0, changed_pixels=[], band=None)
    return state, stack


def iterate(state: SegState, stack: FeatureStack, cfg: SegConfig) -> SegState:
    """One band-rebuild / reweight / cut / relabel step."""
    if cfg.dynamic_band or state.band is None:
        band = build_band(state.labels, cfg.weights)
    else:
        band = state.band
    graph = build_graph(band, stack, state.labels, cfg.weights)
    cut = graph.max_flow()
    new_labels = state.labels.data.copy()
    new_labels[band.node_ys, band.node_xs] = cut.source_side
    changed = int(np.count_nonzero(new_labels != state.labels.data))
    if not new_labels.any() or new_labels.all():
        raise SegmentationCollapseError(
            "segmentation collapsed to an empty or full mask",
            diagnostics={
                "iteration": state.iteration + 1,
                "changed_pixels": state.changed_pixels + [changed],
                "cut_value": cut.flow_value,
            },
        )
    return SegState(
        labels=BinaryMask(new_labels),
        iteration=state.iteration + 1,
        changed_pixels=state.changed_pixels + [changed],
        band=band,
        band_sizes=state.band_sizes + [band.node_count],
        cut_values=state.cut_values + [cut.flow_value],
    )


def run_segmentation(img: GrayImage, points, cfg: SegConfig | None = None) -> SegResult:
    """Iterate to convergence: changed fraction of the band below threshold."""
    cfg = cfg or SegConfig()
    state, stack = initialize(img, points, cfg)
    converged = False
    fractions = []
    for _ in range(cfg.max_iterations):
        state = iterate(state, stack, cfg)
        fraction = state.changed_pixels[-1] / state.band_sizes[-1]
        fractions.append(fraction)
        if fraction < cfg.convergence_fraction:
            converged = True
            break
    diagnostics = {
        "changed_pixels": state.changed_pixels,
        "band_sizes": state.band_sizes,
        "cut_values": state.cut_values,
        "changed_fractions": fractions,
        "feature_set": cfg.feature_set,
        "weight_mode": cfg.weights.weight_mode,
    }
    return SegResult(
        mask=state.labels,
        contour=trace_boundary_chain(state.labels),
        iterations_run=state.iteration,
        converged=converged,
        diagnostics=diagnostics,
    )
