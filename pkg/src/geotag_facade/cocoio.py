"""COCO-style annotation files: deterministic writers and readers.

All writers emit canonical JSON (sorted keys, fixed separators, trailing
newline) so identical runs produce identical bytes. The ``info`` block
of every artifact carries the run configuration and sha256 hashes of
the inputs it came from.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .ingest import CategoryMapping, DetectionSet
from .metrics import EvalBox


def _plain(v):
    # numpy scalars arrive from vectorized code paths
    if hasattr(v, "item"):
        return v.item()
    raise TypeError(f"not JSON serializable: {type(v)}")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ": "),
                      indent=1, default=_plain) + "\n"


def json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      default=_plain)


def write_json(path, obj) -> None:
    Path(path).write_text(canonical_json(obj), encoding="utf-8")


def sha256_of(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def hash_inputs(paths: dict) -> dict:
    return {name: sha256_of(p) for name, p in sorted(paths.items())
            if p is not None}


def coco_images(metas) -> list:
    return [{
        "id": i + 1,
        "pano_id": m.pano_id,
        "file_name": f"{m.pano_id}.jpg",
        "width": m.width,
        "height": m.height,
    } for i, m in enumerate(metas)]


def coco_categories(mapping: CategoryMapping) -> list:
    return [{"id": c, "name": mapping.name_of(c)}
            for c in mapping.category_ids]


def write_coco(path, metas, annotations, mapping: CategoryMapping,
               info: dict | None = None) -> None:
    """Write boxes (anything with pano_id/x/y/w/h/category) as COCO JSON.

    Optional ``score``, ``building_id`` and ``iou_x`` attributes are
    carried through when present.
    """
    images = coco_images(metas)
    image_id = {img["pano_id"]: img["id"] for img in images}
    anns = []
    for j, a in enumerate(annotations):
        rec = {
            "id": j + 1,
            "image_id": image_id[a.pano_id],
            "bbox": [a.x, a.y, a.w, a.h],
            "area": a.w * a.h,
            "iscrowd": 0,
            "category_id": a.category,
        }
        for opt in ("score", "building_id", "iou_x"):
            v = getattr(a, opt, None)
            if v is not None:
                rec[opt] = v
        anns.append(rec)
    write_json(path, {
        "info": info or {},
        "images": images,
        "annotations": anns,
        "categories": coco_categories(mapping),
    })


def read_coco(path):
    """Read a COCO file into eval boxes plus per-panorama sizes.

    Returns (boxes, width_by_pano, height_by_pano, info).
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    pano_of = {}
    width_by_pano = {}
    height_by_pano = {}
    for img in doc.get("images", []):
        pano = img.get("pano_id") or Path(img.get("file_name", "")).stem
        pano_of[img["id"]] = pano
        width_by_pano[pano] = img.get("width")
        height_by_pano[pano] = img.get("height")
    boxes = []
    for a in doc.get("annotations", []):
        x, y, w, h = a["bbox"]
        boxes.append(EvalBox(pano_id=pano_of[a["image_id"]], x=x, y=y, w=w,
                             h=h, category=a["category_id"],
                             score=a.get("score")))
    return boxes, width_by_pano, height_by_pano, doc.get("info", {})


def write_detections(path, dets: DetectionSet, category_count: int,
                     seed: int = 0) -> None:
    """Write detector results with deliberately meaningless categories.

    A detector's predicted category is discarded on ingest, so the
    ``category_id`` written here is seeded noise; it exists to prove
    downstream output does not depend on it.
    """
    import random
    rng = random.Random(seed)
    records = []
    for pano_id in sorted(dets.by_pano):
        for b in dets.by_pano[pano_id]:
            records.append({
                "pano_id": b.pano_id,
                "bbox": [b.x, b.y, b.w, b.h],
                "score": b.score,
                "category_id": rng.randint(1, max(category_count, 1)),
            })
    write_json(path, records)
