"""Command line front-end: synth | trace | annotate | eval | render.

Exit codes: 0 clean, 2 partial success (some panoramas skipped as
degenerate), 1 fatal. Every artifact embeds the run configuration and
sha256 hashes of its inputs. ``GEOTAG_FACADE_WORKERS`` sets the worker
count for per-panorama fan-out.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import cocoio
from .config import RunConfig
from .errors import GeotagFacadeError
from .ingest import (load_category_mapping, load_detections,
                     load_footprints, load_panorama_meta)
from .matcher import generate_coarse_annotations
from .metrics import coarse_accuracy, coco_summary
from .projection import clip_scene
from .raytrace import intervals_from_sweep, intervals_to_pixel, trace_sweep
from .render import render_scene_svg
from .synth import NoiseConfig, SceneConfig, generate_scene, perturb_detections

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("GEOTAG_FACADE_WORKERS", "1")))
    except ValueError:
        return 1


def _add_trace_args(p):
    p.add_argument("--footprints", required=True)
    p.add_argument("--metas", required=True)
    p.add_argument("--mapping", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--radius", type=float, default=50.0)
    p.add_argument("--step-deg", type=float, default=1.0)
    p.add_argument("--flip-heading", action="store_true")


def _run_config(args) -> RunConfig:
    return RunConfig(
        radius_m=args.radius,
        step_deg=getattr(args, "step_deg", 1.0),
        iou_x_min=getattr(args, "iou_x", 0.3),
        threshold_mode=getattr(args, "threshold_mode", "adaptive"),
        fixed_threshold=getattr(args, "fixed_threshold", 0.5),
        batch_size=getattr(args, "batch_size", 64),
        seed=getattr(args, "seed", 17),
        flip_heading=getattr(args, "flip_heading", False),
        workers=_workers(),
    )


def cmd_synth(args) -> int:
    cfg = SceneConfig(n_buildings=args.n_buildings,
                      corridor_width=args.corridor_width,
                      category_count=args.category_count,
                      radius_m=args.radius,
                      n_cameras=args.n_cameras)
    noise = NoiseConfig(shift_frac=args.shift_frac, scale_frac=args.scale_frac,
                        fp_rate=args.fp_rate)
    scene = generate_scene(args.seed, cfg)
    dets = perturb_detections(scene, noise, seed=args.seed + 1)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    features = []
    for fp in scene.footprints:
        features.append({
            "type": "Feature",
            "properties": {"building_id": fp.building_id,
                           "label": fp.raw_label},
            "geometry": {"type": "Polygon",
                         "coordinates": [[[lon, lat] for lat, lon in fp.ring]]},
        })
    cocoio.write_json(out / "footprints.geojson",
                      {"type": "FeatureCollection", "features": features})
    with open(out / "metas.jsonl", "w", encoding="utf-8") as fh:
        for m in scene.metas:
            fh.write(cocoio.json_line(asdict(m)) + "\n")
    cocoio.write_json(out / "mapping.json", {
        "city": scene.mapping.city, "entries": scene.mapping.entries})
    cocoio.write_coco(out / "gt.json", scene.metas, scene.gt_boxes,
                      scene.mapping,
                      info={"seed": scene.seed, "origin": list(scene.origin),
                            "config": asdict(scene.config)})
    cocoio.write_detections(out / "detections.json", dets,
                            scene.config.category_count, seed=args.seed + 2)
    cocoio.write_json(out / "scene.json", {
        "seed": scene.seed,
        "origin": list(scene.origin),
        "config": asdict(scene.config),
        "noise": asdict(noise),
        "n_footprints": len(scene.footprints),
        "n_cameras": len(scene.metas),
        "n_gt_boxes": len(scene.gt_boxes),
    })
    print(f"scene {args.seed}: {len(scene.footprints)} footprints, "
          f"{len(scene.metas)} cameras, {len(scene.gt_boxes)} gt boxes, "
          f"{dets.n_boxes} detections -> {out}")
    return EXIT_OK


def cmd_trace(args) -> int:
    config = _run_config(args)
    mapping = load_category_mapping(args.mapping)
    footprints = load_footprints(args.footprints, mapping)
    panos = load_panorama_meta(args.metas)
    hashes = cocoio.hash_inputs({"footprints": args.footprints,
                                 "metas": args.metas,
                                 "mapping": args.mapping})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def trace_one(meta):
        scene = clip_scene(footprints, meta, config.radius_m)
        if scene.degenerate:
            return meta, None, scene.containing_building
        sweep = trace_sweep(scene, config.step_deg)
        ivs = intervals_to_pixel(intervals_from_sweep(sweep), meta,
                                 config.flip_heading)
        return meta, ivs, None

    if config.workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(trace_one, panos.metas))
    else:
        results = [trace_one(m) for m in panos.metas]

    skipped = []
    for meta, ivs, blocker in results:
        if ivs is None:
            skipped.append((meta.pano_id,
                            f"camera inside footprint {blocker}"))
            continue
        cocoio.write_json(out / f"intervals_{meta.pano_id}.json", {
            "pano_id": meta.pano_id,
            "config": config.to_dict(),
            "input_hashes": hashes,
            "intervals": [iv.to_dict() for iv in ivs],
        })
    cocoio.write_json(out / "trace_report.json", {
        "config": config.to_dict(),
        "input_hashes": hashes,
        "n_panoramas": len(panos.metas),
        "n_traced": len(panos.metas) - len(skipped),
        "skipped": [list(s) for s in skipped],
        "load_reports": {
            "footprints": footprints.report.to_dict(),
            "metas": panos.report.to_dict(),
        },
    })
    print(f"traced {len(panos.metas) - len(skipped)}/{len(panos.metas)} "
          f"panoramas -> {out}")
    return EXIT_PARTIAL if skipped else EXIT_OK


def cmd_annotate(args) -> int:
    config = _run_config(args)
    mapping = load_category_mapping(args.mapping)
    footprints = load_footprints(args.footprints, mapping)
    panos = load_panorama_meta(args.metas)
    dets = load_detections(args.detections)
    hashes = cocoio.hash_inputs({"footprints": args.footprints,
                                 "metas": args.metas,
                                 "mapping": args.mapping,
                                 "detections": args.detections})
    annotations, report = generate_coarse_annotations(
        panos.metas, footprints, dets, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    info = {"config": config.to_dict(), "input_hashes": hashes}
    cocoio.write_coco(out / "coarse_annotations.json", panos.metas,
                      annotations, mapping, info=info)
    run_report = report.to_dict()
    run_report["input_hashes"] = hashes
    run_report["load_reports"] = {
        "footprints": footprints.report.to_dict(),
        "metas": panos.report.to_dict(),
        "detections": dets.report.to_dict(),
    }
    cocoio.write_json(out / "run_report.json", run_report)
    tot = report.totals
    print(f"annotated {tot['annotated']}/{tot['input_boxes']} boxes "
          f"({tot['filtered_out']} filtered, {tot['unmatched']} unmatched, "
          f"{tot['dropped'] + tot['dropped_missing_meta']} dropped) -> {out}")
    return EXIT_PARTIAL if report.skipped_panoramas else EXIT_OK


def cmd_eval(args) -> int:
    gt_boxes, widths, _, _ = cocoio.read_coco(args.gt)
    pred_boxes, pw, _, _ = cocoio.read_coco(args.pred)
    widths.update({k: v for k, v in pw.items() if k not in widths})
    result = {"gt": str(args.gt), "pred": str(args.pred),
              "mode": args.mode, "iou_thr": args.iou_thr,
              "input_hashes": cocoio.hash_inputs({"gt": args.gt,
                                                  "pred": args.pred})}
    if args.mode in ("accuracy", "both"):
        rep = coarse_accuracy(pred_boxes, gt_boxes, iou_thr=args.iou_thr,
                              width_by_pano=widths)
        result["accuracy"] = rep.to_dict()
    if args.mode in ("ap", "both"):
        result["ap"] = coco_summary(pred_boxes, gt_boxes,
                                    width_by_pano=widths)
    text = cocoio.canonical_json(result)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_render(args) -> int:
    import json
    mapping = load_category_mapping(args.mapping)
    footprints = load_footprints(args.footprints, mapping)
    panos = load_panorama_meta(args.metas)
    doc = json.loads(Path(args.intervals).read_text(encoding="utf-8"))
    meta = next((m for m in panos.metas if m.pano_id == doc["pano_id"]), None)
    if meta is None:
        print(f"pano_id {doc['pano_id']!r} not found in {args.metas}",
              file=sys.stderr)
        return EXIT_FATAL
    from .raytrace import VisibilityInterval
    ivs = [VisibilityInterval(
        building_id=d["building_id"], category=d["category"],
        angle_lo=d["angle_lo"], angle_hi=d["angle_hi"],
        min_distance=d["min_distance"], px_lo=d.get("px_lo"),
        px_hi=d.get("px_hi")) for d in doc["intervals"]]
    radius = doc.get("config", {}).get("radius_m", 50.0)
    shown = {iv.building_id for iv in ivs}
    fps = [fp for fp in footprints if fp.building_id in shown] \
        if args.only_visible else list(footprints)
    provenance = cocoio.json_line({
        "config": doc.get("config", {}),
        "input_hashes": cocoio.hash_inputs({
            "footprints": args.footprints, "metas": args.metas,
            "intervals": args.intervals})})
    svg = render_scene_svg(fps, meta, ivs, radius, comment=provenance)
    Path(args.out).write_text(svg, encoding="utf-8")
    print(f"rendered {len(ivs)} intervals -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="geotag-facade",
        description="GIS-driven coarse annotation of street-view facades")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene directory")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--n-buildings", type=int, default=12)
    p.add_argument("--n-cameras", type=int, default=4)
    p.add_argument("--corridor-width", type=float, default=12.0)
    p.add_argument("--category-count", type=int, default=5)
    p.add_argument("--radius", type=float, default=50.0)
    p.add_argument("--shift-frac", type=float, default=0.0)
    p.add_argument("--scale-frac", type=float, default=0.0)
    p.add_argument("--fp-rate", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("trace", help="per-panorama visibility intervals")
    _add_trace_args(p)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("annotate", help="generate coarse annotations")
    _add_trace_args(p)
    p.add_argument("--detections", required=True)
    p.add_argument("--iou-x", type=float, default=0.3)
    p.add_argument("--threshold-mode", choices=("adaptive", "fixed"),
                   default="adaptive")
    p.add_argument("--fixed-threshold", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=17)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("eval", help="score annotations against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--mode", choices=("accuracy", "ap", "both"),
                   default="both")
    p.add_argument("--iou-thr", type=float, default=0.8,
                   help="IoU threshold for accuracy mode")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="SVG diagnostic of one trace")
    p.add_argument("--footprints", required=True)
    p.add_argument("--metas", required=True)
    p.add_argument("--mapping", required=True)
    p.add_argument("--intervals", required=True,
                   help="one intervals_<pano>.json from trace")
    p.add_argument("--only-visible", action="store_true",
                   help="draw only footprints that own an interval")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (GeotagFacadeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
