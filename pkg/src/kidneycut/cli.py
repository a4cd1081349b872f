"""Command-line interface.

Config precedence: built-in defaults < --config JSON file < explicit flags.
Every run writes a manifest with enough information (inputs, hashes, full
config, seed) to reproduce its outputs byte for byte via ``replay``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, evalkit
from .errors import KidneycutError
from .gabor import GaborParams, gabor_feature_map
from .bandgraph import WeightParams
from .raster import Contour, load_image, load_mask, save_image_png, save_mask_png
from .segmenter import SegConfig, run_segmentation


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def build_config(args) -> SegConfig:
    base = {}
    if getattr(args, "config", None):
        base = json.loads(Path(args.config).read_text())
    cfg = SegConfig.from_dict(base).to_dict()
    flag_map = {
        "scales": ("gabor", "num_scales"),
        "directions": ("gabor", "num_directions"),
        "sigma": ("weights", "sigma"),
        "feature_set": ("feature_set",),
        "weight_mode": ("weights", "weight_mode"),
        "band_inflate": ("weights", "band_inflate"),
        "band_shrink": ("weights", "band_shrink"),
        "radius": ("weights", "neighborhood_radius"),
        "max_iter": ("max_iterations",),
    }
    for flag, path in flag_map.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        node = cfg
        for key in path[:-1]:
            node = node[key]
        node[path[-1]] = value
    if cfg["gabor"].get("num_scales") and "wavelengths" in cfg["gabor"]:
        if len(cfg["gabor"]["wavelengths"]) != cfg["gabor"]["num_scales"]:
            cfg["gabor"].pop("wavelengths")  # re-derive the dyadic schedule
    return SegConfig.from_dict(cfg)


def _write_manifest(path, manifest) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _segment_to(image_path, points, cfg: SegConfig, out_mask, out_contour):
    img = load_image(image_path)
    result = run_segmentation(img, np.asarray(points, dtype=np.float64), cfg)
    save_mask_png(result.mask, out_mask)
    Path(out_contour).write_text(
        json.dumps([[int(x), int(y)] for x, y in result.contour]) + "\n", encoding="utf-8"
    )
    return result


def cmd_segment(args) -> int:
    cfg = build_config(args)
    points = json.loads(Path(args.init).read_text())
    out = Path(args.out)
    out_contour = args.contour_out or out.with_suffix(".contour.json")
    out_manifest = args.manifest_out or out.with_suffix(".manifest.json")
    result = _segment_to(args.image, points, cfg, out, out_contour)
    manifest = {
        "command": "segment",
        "toolkit_version": __version__,
        "inputs": {
            "image": str(args.image),
            "image_sha256": _sha256(args.image),
            "init_points": points,
        },
        "config": cfg.to_dict(),
        "seed": args.seed,
        "outputs": {"mask": str(out), "contour": str(out_contour)},
        "diagnostics": result.to_dict(),
    }
    _write_manifest(out_manifest, manifest)
    print(json.dumps({"iterations": result.iterations_run, "converged": result.converged,
                      "mask": str(out)}))
    return 0


def cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    if manifest["command"] != "segment":
        raise KidneycutError("only segment manifests can be replayed")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = SegConfig.from_dict(manifest["config"])
    image_path = manifest["inputs"]["image"]
    if _sha256(image_path) != manifest["inputs"]["image_sha256"]:
        raise KidneycutError("input image changed since the manifest was written")
    mask_name = Path(manifest["outputs"]["mask"]).name
    contour_name = Path(manifest["outputs"]["contour"]).name
    _segment_to(image_path, manifest["inputs"]["init_points"], cfg,
                out_dir / mask_name, out_dir / contour_name)
    print(json.dumps({"mask": str(out_dir / mask_name)}))
    return 0


def cmd_eval(args) -> int:
    pred = load_mask(args.pred)
    truth = load_mask(args.truth)
    report = evalkit.metric_report(pred, truth)
    doc = report.to_dict()
    doc["symmetric_mean_distance"] = evalkit.mean_distance(pred, truth, symmetric=True)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _load_cases(path):
    entries = json.loads(Path(path).read_text())
    cases = []
    for i, entry in enumerate(entries):
        cases.append(
            evalkit.Case(
                image=load_image(entry["image"]),
                init_points=np.asarray(json.loads(Path(entry["init"]).read_text()), dtype=np.float64),
                truth=load_mask(entry["truth"]),
                case_id=entry.get("id", f"case{i}"),
            )
        )
    return cases


def _grid_cell(case_files, setting):
    """Process-pool task: one grid setting over all cases (paths only)."""
    scales, directions, sigma = setting
    cfg = SegConfig(
        gabor=GaborParams(num_scales=scales, num_directions=directions),
        weights=WeightParams(sigma=sigma),
    )
    out = []
    for entry in case_files:
        img = load_image(entry["image"])
        pts = np.asarray(json.loads(Path(entry["init"]).read_text()), dtype=np.float64)
        truth = load_mask(entry["truth"])
        try:
            result = run_segmentation(img, pts, cfg)
            rep = evalkit.metric_report(result.mask, truth)
            out.append((entry.get("id", entry["image"]), rep.dice, rep.mean_distance, None))
        except Exception as exc:
            out.append((entry.get("id", entry["image"]), None, None, str(exc)))
    return setting, out


def cmd_gridsearch(args) -> int:
    spec_dict = json.loads(Path(args.grid).read_text()) if args.grid else {}
    spec = evalkit.GridSpec(
        scales_options=tuple(spec_dict.get("scales_options", (2, 3, 4, 5))),
        directions_options=tuple(spec_dict.get("directions_options", (4, 8, 16))),
        sigma_options=tuple(spec_dict.get("sigma_options", (1.0, 0.1, 0.01))),
    )
    case_files = json.loads(Path(args.cases).read_text())
    settings = [
        (s, d, g)
        for s in spec.scales_options
        for d in spec.directions_options
        for g in spec.sigma_options
    ]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            raw = list(pool.map(_grid_cell, [case_files] * len(settings), settings))
    else:
        raw = [_grid_cell(case_files, s) for s in settings]
    rows = []
    for setting, cells in sorted(raw, key=lambda r: r[0]):
        dices = [d for _, d, _, err in cells if err is None]
        dists = [m for _, _, m, err in cells if err is None]
        failures = [{"case_id": cid, "error": err} for cid, _, _, err in cells if err]
        if not dices:
            continue
        rows.append({
            "scales": setting[0], "directions": setting[1], "sigma": setting[2],
            "mean_dice": float(np.mean(dices)),
            "mean_mean_distance": float(np.mean(dists)),
            "n_cases": len(cells), "n_failed": len(failures), "failures": failures,
        })
    rows.sort(key=lambda r: (-r["mean_dice"], r["scales"], r["directions"], r["sigma"]))
    evalkit.write_grid_csv(rows, args.out)
    Path(args.out).with_suffix(".json").write_text(
        json.dumps(rows, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_manifest(Path(args.out).with_suffix(".manifest.json"), {
        "command": "gridsearch", "toolkit_version": __version__,
        "inputs": {"cases": str(args.cases), "grid": str(args.grid)},
        "seed": args.seed, "workers": args.workers,
        "outputs": {"table": str(args.out)},
    })
    print(json.dumps({"settings": len(rows), "out": str(args.out)}))
    return 0


def _ablate_cell(case_entry, mode, seed):
    """Process-pool task: one case through the requested ablation."""
    case = evalkit.Case(
        image=load_image(case_entry["image"]),
        init_points=np.asarray(json.loads(Path(case_entry["init"]).read_text()), dtype=np.float64),
        truth=load_mask(case_entry["truth"]),
        case_id=case_entry.get("id", case_entry["image"]),
    )
    return evalkit.ablation_run([case], mode, seed=seed)


def cmd_ablate(args) -> int:
    seed = args.seed or 0
    if args.workers > 1:
        case_files = json.loads(Path(args.cases).read_text())
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            pieces = list(pool.map(_ablate_cell, case_files,
                                   [args.mode] * len(case_files), [seed] * len(case_files)))
        variants: dict = {}
        failures: list = []
        for piece in pieces:
            for name, entries in piece["variants"].items():
                variants.setdefault(name, []).extend(entries)
            failures.extend(piece["failures"])
        for entries in variants.values():
            entries.sort(key=lambda e: e["case_id"])
        outcome = {"mode": args.mode, "variants": variants,
                   "summary": evalkit.summarize_variants(variants), "failures": failures}
    else:
        cases = _load_cases(args.cases)
        outcome = evalkit.ablation_run(cases, args.mode, seed=seed)
    evalkit.write_ablation_csv(outcome, args.out)
    summary_path = Path(args.out).with_suffix(".summary.json")
    summary_path.write_text(json.dumps(outcome["summary"], indent=2, sort_keys=True) + "\n",
                            encoding="utf-8")
    _write_manifest(Path(args.out).with_suffix(".manifest.json"), {
        "command": "ablate", "toolkit_version": __version__,
        "inputs": {"cases": str(args.cases)}, "mode": args.mode,
        "seed": args.seed, "outputs": {"table": str(args.out), "summary": str(summary_path)},
    })
    print(json.dumps({"mode": args.mode, "out": str(args.out)}))
    return 0


def cmd_phantom(args) -> int:
    phantom = evalkit.make_phantom(args.preset, args.seed, size=args.size)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"phantom_{args.preset}_{args.seed}"
    image_path = out_dir / f"{stem}.png"
    truth_path = out_dir / f"{stem}_truth.png"
    save_image_png(phantom.image, image_path)
    save_mask_png(phantom.truth, truth_path)
    _write_manifest(out_dir / f"{stem}.manifest.json", {
        "command": "phantom", "toolkit_version": __version__,
        "preset": args.preset, "seed": args.seed, "size": args.size,
        "meta": phantom.meta,
        "outputs": {"image": str(image_path), "truth": str(truth_path)},
    })
    print(json.dumps({"image": str(image_path), "truth": str(truth_path)}))
    return 0


def cmd_features(args) -> int:
    cfg = build_config(args)
    img = load_image(args.image)
    fmap = gabor_feature_map(img, cfg.gabor)
    from .raster import GrayImage

    save_image_png(GrayImage(fmap.data), args.out)
    if args.raw_out:
        raw = Path(args.raw_out)
        if raw.suffix == ".csv":
            np.savetxt(raw, fmap.data, fmt="%.12g", delimiter=",")
        else:
            raw.write_text(json.dumps([[float(v) for v in row] for row in fmap.data]))
    _write_manifest(Path(args.out).with_suffix(".manifest.json"), {
        "command": "features", "toolkit_version": __version__,
        "inputs": {"image": str(args.image), "image_sha256": _sha256(args.image)},
        "config": cfg.to_dict(), "seed": args.seed,
        "outputs": {"feature_map": str(args.out)},
    })
    print(json.dumps({"out": str(args.out)}))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.data_dir, workers=args.workers or 2)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def _add_config_flags(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--scales", type=int)
    p.add_argument("--directions", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--feature-set", dest="feature_set", choices=("intensity", "gabor", "both"))
    p.add_argument("--weight-mode", dest="weight_mode", choices=("pixel", "regional", "both"))
    p.add_argument("--band-inflate", dest="band_inflate", type=int)
    p.add_argument("--band-shrink", dest="band_shrink", type=int)
    p.add_argument("--radius", type=int)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--seed", type=int)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kidneycut",
                                     description="Narrow-band graph-cut kidney ultrasound segmentation")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment one image from init points")
    p.add_argument("--image", required=True)
    p.add_argument("--init", required=True, help="JSON [[x,y],...] init points")
    p.add_argument("--out", required=True, help="output mask PNG")
    p.add_argument("--contour-out", dest="contour_out")
    p.add_argument("--manifest-out", dest="manifest_out")
    _add_config_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("replay", help="re-run a segment manifest byte-exactly")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("eval", help="metrics between two masks")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gridsearch", help="parameter grid search over cases")
    p.add_argument("--cases", required=True, help="JSON list of {image, init, truth, id}")
    p.add_argument("--grid", help="JSON GridSpec")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("ablate", help="single-flag ablation over cases")
    p.add_argument("--cases", required=True)
    p.add_argument("--mode", required=True, choices=evalkit.ABLATION_MODES)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("phantom", help="generate a synthetic phantom pair")
    p.add_argument("--preset", required=True, choices=sorted(evalkit.PHANTOM_PRESETS))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--out-dir", dest="out_dir", default=".")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("features", help="export the fused texture feature map")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--raw-out", dest="raw_out", help="also dump the matrix as .json or .csv")
    _add_config_flags(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("serve", help="run the local annotation service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8750)
    p.add_argument("--data-dir", dest="data_dir", default="./kidneycut-data")
    p.add_argument("--workers", type=int, default=2)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KidneycutError as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2
    except FileNotFoundError as exc:
        sys.stderr.write(json.dumps({"error": "FileNotFound", "message": str(exc)}) + "\n")
        return 2
    except (ValueError, KeyError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
