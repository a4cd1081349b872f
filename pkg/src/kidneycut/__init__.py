"""Semi-automatic kidney ultrasound segmentation toolkit.

Narrow-band graph cuts over fused intensity + Gabor texture feature maps,
with a from-scratch max-flow solver, quantitative evaluation, and a local
annotation service.
"""

__version__ = "0.1.0"

from .raster import BinaryMask, Contour, GrayImage, load_image, rasterize_contour
from .gabor import FeatureMap, GaborParams, build_bank, convolve_bank, fuse, gabor_feature_map
from .maxflow import INFINITE, CutResult, FlowGraph
from .bandgraph import FeatureStack, NarrowBand, WeightParams, build_band, build_graph
from .segmenter import SegConfig, SegResult, run_segmentation
from .evalkit import MetricReport, dice, jaccard, make_phantom, mean_distance

__all__ = [
    "BinaryMask",
    "Contour",
    "CutResult",
    "FeatureMap",
    "FeatureStack",
    "FlowGraph",
    "GaborParams",
    "GrayImage",
    "INFINITE",
    "MetricReport",
    "NarrowBand",
    "SegConfig",
    "SegResult",
    "WeightParams",
    "build_band",
    "build_bank",
    "build_graph",
    "convolve_bank",
    "dice",
    "fuse",
    "gabor_feature_map",
    "jaccard",
    "load_image",
    "make_phantom",
    "mean_distance",
    "rasterize_contour",
    "run_segmentation",
    "__version__",
]
