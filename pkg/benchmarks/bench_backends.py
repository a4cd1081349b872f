#!/usr/bin/env python3
"""Benchmark the jitted kernels against the vectorized numpy fallbacks.

Runs each hot kernel through both code paths on realistic sizes and prints
the per-call timings and speedups. The numba path is what
``KIDNEYCUT_NO_NUMBA`` unset gives you; the fallback is what you get with
the flag set (or without numba installed).
"""

import time

import numpy as np

from kidneycut import gabor
from kidneycut._accel import HAVE_NUMBA
from kidneycut.bandgraph import WeightParams, _global_segment_means, _local_means_loops, build_band, segment_means_at
from kidneycut.evalkit import init_points_from_truth, make_phantom
from kidneycut.maxflow import FlowGraph
from kidneycut.raster import BinaryMask, disk_offsets
from kidneycut.segmenter import SegConfig, run_segmentation


def timed(fn, repeats=3, warmup=1):
    for _ in range(warmup):
        fn()
    best = min(time.perf_counter() * 0 + _once(fn) for _ in range(repeats))
    return best


def _once(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def bench_convolution():
    rng = np.random.default_rng(0)
    img = rng.random((256, 256))
    params = gabor.GaborParams()
    bank = gabor.build_bank(params)
    m, n = params.num_scales, params.num_directions
    out = np.empty((m, n, 256, 256))

    t_numba = timed(lambda: gabor._bank_magnitudes_loops(img, bank.rows, bank.cols, bank.sides, out))
    t_numpy = timed(lambda: gabor._bank_magnitudes_numpy(img, bank.rows, bank.cols, bank.sides, out))
    report("gabor bank convolution (256x256, 3 scales x 8 dirs)", t_numba, t_numpy)


def bench_fusion():
    rng = np.random.default_rng(1)
    mags = rng.random((3, 8, 256, 256))
    out = np.empty((256, 256))
    t_numba = timed(lambda: gabor._fuse_loops(mags, out))
    t_numpy = timed(lambda: gabor._fuse_numpy(mags))
    report("dominant-direction fusion (256x256)", t_numba, t_numpy)


def bench_local_means():
    rng = np.random.default_rng(2)
    maps = rng.random((2, 256, 256))
    labels = np.zeros((256, 256), dtype=bool)
    yy, xx = np.mgrid[0:256, 0:256]
    labels[(yy - 128) ** 2 + (xx - 128) ** 2 <= 40 * 40] = True
    band = build_band(BinaryMask(labels), WeightParams())
    glob_s, glob_t = _global_segment_means(maps, labels)
    offs = disk_offsets(10)
    out_s = np.empty((band.node_count, 2))
    out_t = np.empty_like(out_s)

    t_numba = timed(lambda: _local_means_loops(maps, labels, band.node_ys, band.node_xs,
                                               offs, glob_s, glob_t, out_s, out_t))

    from kidneycut import bandgraph as bg
    from kidneycut import _accel

    real = _accel.HAVE_NUMBA

    def numpy_path():
        # route segment_means_at through the correlation fallback
        _accel.HAVE_NUMBA = False
        bg.use_numba.__globals__["HAVE_NUMBA"] = False
        try:
            from kidneycut.bandgraph import FeatureStack
            segment_means_at(FeatureStack(maps), BinaryMask(labels),
                             band.node_ys, band.node_xs, 10)
        finally:
            _accel.HAVE_NUMBA = real
            bg.use_numba.__globals__["HAVE_NUMBA"] = real

    t_numpy = timed(numpy_path)
    report(f"segment local means ({band.node_count} band px, r=10)", t_numba, t_numpy)


def bench_maxflow():
    # a realistic band graph from an actual phantom iteration
    ph = make_phantom("clean-ellipse", seed=0)
    labels = ph.truth
    band = build_band(labels, WeightParams())
    from kidneycut.bandgraph import FeatureStack, build_graph

    stack = FeatureStack(ph.image.data[None])
    g = build_graph(band, stack, labels, WeightParams(weight_mode="pixel"))

    t_bk = timed(lambda: g.max_flow(method="bk"))
    t_bfs = timed(lambda: g.max_flow(method="bfs"), repeats=1, warmup=0)
    print(f"{'band-graph max flow (BK jit vs BFS reference)':55s} "
          f"bk {t_bk * 1e3:8.1f} ms   bfs {t_bfs * 1e3:8.1f} ms   x{t_bfs / t_bk:,.1f}")


def bench_end_to_end():
    ph = make_phantom("clean-ellipse", seed=1)
    pts = init_points_from_truth(ph.truth, 8, 4)
    cfg = SegConfig()
    t = timed(lambda: run_segmentation(ph.image, pts, cfg), repeats=2)
    print(f"{'full segmentation run (256x256, defaults)':55s} {t:8.2f} s per run")


def report(name, t_numba, t_numpy):
    print(f"{name:55s} numba {t_numba * 1e3:8.1f} ms   numpy {t_numpy * 1e3:8.1f} ms   "
          f"x{t_numpy / t_numba:,.1f}")


if __name__ == "__main__":
    print(f"numba available and active: {HAVE_NUMBA}\n")
    bench_convolution()
    bench_fusion()
    bench_local_means()
    bench_maxflow()
    bench_end_to_end()
