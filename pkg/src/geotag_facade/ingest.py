"""Parsing and validation of all external inputs.

Four file formats enter the pipeline:

* building footprints: GeoJSON FeatureCollection, WGS84, with
  ``building_id`` and ``label`` properties per feature
* panorama metadata: JSON lines with ``pano_id, lat, lon, north_px,
  width, height``
* detections: a JSON array of ``{pano_id, bbox: [x, y, w, h], score}``
  (any category field is discarded on ingest)
* category mapping: JSON ``{city, default?, entries: {label: int}}``

Loaders are pure: same bytes in, same domain objects out, in the same
order. Invalid records are rejected per record and listed in a
:class:`LoadReport`; structural problems (malformed JSON, duplicate join
keys) raise instead.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import LoadError, ParseError

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BuildingFootprint:
    """One building outer ring in WGS84 with a resolved function category.

    ``ring`` is closed (first vertex equals last), simple, and has at
    least three distinct vertices. Vertices are (lat, lon) degrees.
    """

    building_id: str
    ring: tuple  # tuple of (lat, lon)
    raw_label: str
    category: int


@dataclass(frozen=True)
class PanoramaMeta:
    """Camera position plus the pixel geometry of one panorama.

    ``north_px`` is the (fractional) pixel column that looks at true
    north; it anchors the heading-to-pixel mapping.
    """

    pano_id: str
    lat: float
    lon: float
    north_px: float
    width: int
    height: int


@dataclass(frozen=True)
class DetectionBox:
    """A facade bounding box with its detector confidence.

    ``x + w`` may exceed the panorama width for boxes that wrap the
    horizontal seam; downstream arithmetic is mod width. The predicted
    category, if any, was discarded on ingest.
    """

    pano_id: str
    x: float
    y: float
    w: float
    h: float
    score: float


@dataclass(frozen=True)
class CategoryMapping:
    """City-specific mapping from raw GIS labels to category ids 1..K."""

    city: str
    entries: dict  # label -> int
    default: int | None = None
    names: dict = field(default_factory=dict)  # int -> display name

    @property
    def category_ids(self) -> list[int]:
        ids = set(self.entries.values())
        if self.default is not None:
            ids.add(self.default)
        return sorted(ids)

    def resolve(self, label: str) -> int | None:
        if label in self.entries:
            return self.entries[label]
        return self.default

    def name_of(self, category: int) -> str:
        return self.names.get(category, f"category_{category}")


@dataclass
class LoadReport:
    """Per-file accounting: every input record is accepted or listed here."""

    path: str
    n_input: int = 0
    n_accepted: int = 0
    rejected: list = field(default_factory=list)  # (key, reason)

    @property
    def n_rejected(self) -> int:
        return len(self.rejected)

    def reject(self, key, reason):
        self.rejected.append((str(key), reason))

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "n_input": self.n_input,
            "n_accepted": self.n_accepted,
            "n_rejected": self.n_rejected,
            "rejected": [{"key": k, "reason": r} for k, r in self.rejected],
        }


@dataclass
class FootprintSet:
    footprints: list
    report: LoadReport

    def __len__(self):
        return len(self.footprints)

    def __iter__(self):
        return iter(self.footprints)


@dataclass
class PanoramaSet:
    metas: list
    report: LoadReport

    def __len__(self):
        return len(self.metas)

    def __iter__(self):
        return iter(self.metas)


@dataclass
class DetectionSet:
    by_pano: dict  # pano_id -> list of DetectionBox, input order kept
    report: LoadReport

    @property
    def n_boxes(self) -> int:
        return sum(len(v) for v in self.by_pano.values())

    def boxes_for(self, pano_id: str) -> list:
        return self.by_pano.get(pano_id, [])


# ---------------------------------------------------------------------------
# Ring validation helpers
# ---------------------------------------------------------------------------

_MIN_RING_AREA_DEG2 = 1e-16


def _normalize_ring(coords):
    """GeoJSON [lon, lat] positions -> closed (lat, lon) ring, or reason."""
    pts = []
    for pos in coords:
        if not isinstance(pos, (list, tuple)) or len(pos) < 2:
            return None, "ring vertex is not a coordinate pair"
        lon, lat = float(pos[0]), float(pos[1])
        if not (math.isfinite(lat) and math.isfinite(lon)):
            return None, "non-finite coordinate"  # json.loads admits NaN
        if pts and pts[-1] == (lat, lon):
            continue  # drop consecutive duplicates
        pts.append((lat, lon))
    if len(pts) >= 2 and pts[0] == pts[-1]:
        pts.pop()
    if len(pts) < 3:
        return None, "ring has fewer than 3 distinct vertices"
    return pts, None


def _shoelace(pts):
    area2 = 0.0
    n = len(pts)
    for i in range(n):
        y1, x1 = pts[i]
        y2, x2 = pts[(i + 1) % n]
        area2 += x1 * y2 - x2 * y1
    return 0.5 * area2


def _orient(p, q, r):
    v = (q[1] - p[1]) * (r[0] - p[0]) - (q[0] - p[0]) * (r[1] - p[1])
    if v > 0:
        return 1
    if v < 0:
        return -1
    return 0


def _on_segment(p, q, r):
    return (min(p[0], q[0]) <= r[0] <= max(p[0], q[0])
            and min(p[1], q[1]) <= r[1] <= max(p[1], q[1]))


def _segments_intersect(a1, a2, b1, b2):
    o1 = _orient(a1, a2, b1)
    o2 = _orient(a1, a2, b2)
    o3 = _orient(b1, b2, a1)
    o4 = _orient(b1, b2, a2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and _on_segment(a1, a2, b1):
        return True
    if o2 == 0 and _on_segment(a1, a2, b2):
        return True
    if o3 == 0 and _on_segment(b1, b2, a1):
        return True
    if o4 == 0 and _on_segment(b1, b2, a2):
        return True
    return False


def _is_simple(pts):
    """True when no two non-adjacent ring edges intersect or touch."""
    n = len(pts)
    for i in range(n):
        a1, a2 = pts[i], pts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # adjacent edges share a vertex by construction
            b1, b2 = pts[j], pts[(j + 1) % n]
            if _segments_intersect(a1, a2, b1, b2):
                return False
    return True


def _validate_ring(coords):
    pts, reason = _normalize_ring(coords)
    if pts is None:
        return None, reason
    if abs(_shoelace(pts)) < _MIN_RING_AREA_DEG2:
        return None, "ring has zero area"
    if not _is_simple(pts):
        return None, "ring is self-intersecting"
    return tuple(pts + [pts[0]]), None


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------

def _read_json(path):
    raw = Path(path).read_bytes()
    try:
        return json.loads(raw)
    except json.JSONDecodeError as e:
        raise ParseError(path, e.msg, offset=e.pos) from e


def load_category_mapping(path) -> CategoryMapping:
    """Load a per-city label-to-category config and check id contiguity."""
    doc = _read_json(path)
    if not isinstance(doc, dict) or "entries" not in doc:
        raise LoadError(f"{path}: expected an object with an 'entries' key")
    entries = {str(k): int(v) for k, v in doc["entries"].items()}
    default = doc.get("default")
    default = int(default) if default is not None else None
    ids = set(entries.values())
    if default is not None:
        ids.add(default)
    if not ids:
        raise LoadError(f"{path}: mapping has no categories")
    if sorted(ids) != list(range(1, max(ids) + 1)):
        raise LoadError(
            f"{path}: category ids must form a contiguous 1..K set, got {sorted(ids)}")
    names = {int(k): str(v) for k, v in doc.get("names", {}).items()}
    return CategoryMapping(city=str(doc.get("city", "")), entries=entries,
                           default=default, names=names)


def _outer_rings(geometry):
    """Candidate outer rings of a feature: 1 for Polygon, k for MultiPolygon.

    Interior rings (holes) are ignored: street-facing walls lie on the
    outer ring.
    """
    gtype = geometry.get("type")
    coords = geometry.get("coordinates", [])
    if gtype == "Polygon":
        return [coords[0]] if coords else []
    if gtype == "MultiPolygon":
        return [poly[0] for poly in coords if poly]
    return None


def load_footprints(path, mapping: CategoryMapping) -> FootprintSet:
    """Load building footprints from a GeoJSON FeatureCollection.

    MultiPolygon features are split into one footprint per outer ring,
    ``building_id`` suffixed ``#1``, ``#2``, ... Records failing ring
    invariants or lacking a mappable label are rejected into the report.
    """
    doc = _read_json(path)
    report = LoadReport(path=str(path))
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise LoadError(f"{path}: expected a GeoJSON FeatureCollection")

    out = []
    for fidx, feat in enumerate(doc.get("features", [])):
        props = feat.get("properties") or {}
        building_id = props.get("building_id")
        label = props.get("label")
        key = building_id if building_id is not None else f"feature[{fidx}]"
        geometry = feat.get("geometry") or {}
        rings = _outer_rings(geometry)
        if rings is None:
            report.n_input += 1
            report.reject(key, f"unsupported geometry type {geometry.get('type')!r}")
            continue
        if not rings:
            report.n_input += 1
            report.reject(key, "feature has no coordinates")
            continue
        multi = len(rings) > 1
        for ridx, ring_coords in enumerate(rings, start=1):
            report.n_input += 1
            rkey = f"{key}#{ridx}" if multi else key
            if building_id is None or label is None:
                report.reject(rkey, "missing building_id or label property")
                continue
            ring, reason = _validate_ring(ring_coords)
            if ring is None:
                report.reject(rkey, reason)
                continue
            category = mapping.resolve(str(label))
            if category is None:
                report.reject(rkey, f"label {label!r} not in mapping and no default")
                continue
            out.append(BuildingFootprint(
                building_id=str(rkey) if multi else str(building_id),
                ring=ring, raw_label=str(label), category=category))
    report.n_accepted = report.n_input - report.n_rejected
    log.info("loaded %d footprints from %s (%d rejected)",
             len(out), path, report.n_rejected)
    return FootprintSet(footprints=out, report=report)


_META_FIELDS = ("pano_id", "lat", "lon", "north_px", "width", "height")


def load_panorama_meta(path) -> PanoramaSet:
    """Load panorama metadata from JSON lines, one record per panorama.

    Records with out-of-range fields are rejected with a diagnostic; a
    duplicate ``pano_id`` is an error because it is the join key for
    detections.
    """
    report = LoadReport(path=str(path))
    metas = []
    seen = set()
    with open(path, "rb") as fh:
        offset = 0
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            line_offset = offset
            offset += len(raw)
            if not line:
                continue
            report.n_input += 1
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(path, f"line {lineno}: {e.msg}",
                                 offset=line_offset + e.pos) from e
            missing = [f for f in _META_FIELDS if f not in rec]
            if missing:
                report.reject(rec.get("pano_id", f"line {lineno}"),
                              f"missing fields {missing}")
                continue
            pano_id = str(rec["pano_id"])
            try:
                lat, lon = float(rec["lat"]), float(rec["lon"])
                north_px = float(rec["north_px"])
                width, height = int(rec["width"]), int(rec["height"])
            except (TypeError, ValueError):
                report.reject(pano_id, "non-numeric field")
                continue
            if not all(math.isfinite(v) for v in (lat, lon, north_px)):
                report.reject(pano_id, "non-finite field")
                continue
            if width <= 0 or height <= 0:
                report.reject(pano_id, f"non-positive size {width}x{height}")
                continue
            if not (0.0 <= north_px < width):
                report.reject(pano_id,
                              f"north_px {north_px} outside [0, {width})")
                continue
            if abs(lat) > 90.0:
                report.reject(pano_id, f"latitude {lat} outside [-90, 90]")
                continue
            if pano_id in seen:
                raise LoadError(
                    f"{path}: duplicate pano_id {pano_id!r} (ambiguous join key)")
            if width != 2 * height:
                log.warning("%s: panorama %s is %dx%d, not equirectangular 2:1",
                            path, pano_id, width, height)
            seen.add(pano_id)
            metas.append(PanoramaMeta(pano_id=pano_id, lat=lat, lon=lon,
                                      north_px=north_px, width=width,
                                      height=height))
    report.n_accepted = report.n_input - report.n_rejected
    return PanoramaSet(metas=metas, report=report)


def load_detections(path) -> DetectionSet:
    """Load detector boxes from a COCO-results-style JSON array.

    Boxes are grouped by panorama with input order preserved. Any
    ``category_id`` is deliberately dropped: categories are assigned
    later from GIS, never taken from the detector.
    """
    doc = _read_json(path)
    report = LoadReport(path=str(path))
    if not isinstance(doc, list):
        raise LoadError(f"{path}: expected a JSON array of detection results")
    by_pano: dict = {}
    for idx, rec in enumerate(doc):
        report.n_input += 1
        key = f"result[{idx}]"
        if not isinstance(rec, dict):
            report.reject(key, "not an object")
            continue
        pano_id = rec.get("pano_id", rec.get("image_id"))
        bbox = rec.get("bbox")
        score = rec.get("score")
        if pano_id is None or bbox is None or score is None:
            report.reject(key, "missing pano_id/image_id, bbox, or score")
            continue
        if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
            report.reject(key, "bbox must be [x, y, w, h]")
            continue
        try:
            x, y, w, h = (float(v) for v in bbox)
            score = float(score)
        except (TypeError, ValueError):
            report.reject(key, "non-numeric bbox or score")
            continue
        if not all(math.isfinite(v) for v in (x, y, w, h, score)):
            report.reject(key, "non-finite bbox or score")
            continue
        if w <= 0 or h <= 0:
            report.reject(key, f"non-positive box size {w}x{h}")
            continue
        if not (0.0 <= score <= 1.0):
            report.reject(key, f"score {score} outside [0, 1]")
            continue
        if y < 0:
            report.reject(key, f"box top {y} above the image")
            continue
        box = DetectionBox(pano_id=str(pano_id), x=x, y=y, w=w, h=h,
                           score=score)
        by_pano.setdefault(box.pano_id, []).append(box)
    report.n_accepted = report.n_input - report.n_rejected
    return DetectionSet(by_pano=by_pano, report=report)
