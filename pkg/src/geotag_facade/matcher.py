"""Assign GIS categories to detector boxes via visibility intervals.

Detector output enters decoupled: only boxes and scores, any predicted
category was dropped at ingest. A box earns a category when

* its horizontal midpoint lies strictly inside a building's pixel
  interval, and
* the 1D IoU of box extent vs interval extent exceeds the floor
  (default 0.3, strict).

Score filtering runs per batch. In adaptive mode the threshold for
batch k is fit on the scores retained in batch k-1: a single Gaussian
(sample mean and std), thresholded at mu - 0.5 sigma and clamped; the
first batch uses 0.3. Batches are a deterministic seeded shuffle of the
panoramas, so a run is reproducible end to end.
"""
from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .config import RunConfig
from .ingest import DetectionBox, DetectionSet, FootprintSet
from .metrics import iou_1d
from .projection import clip_scene
from .raytrace import intervals_from_sweep, intervals_to_pixel, trace_sweep

DEFAULT_FIRST_THRESHOLD = 0.3
SIGMA_FACTOR = 0.5


@dataclass(frozen=True)
class ThresholdState:
    """Current score threshold plus the history of how it evolved."""

    mode: str = "adaptive"  # "adaptive" | "fixed"
    current: float = DEFAULT_FIRST_THRESHOLD
    batch_size: int = 64
    clip_lo: float = 0.05
    clip_hi: float = 0.9
    history: tuple = ()  # (batch_index, threshold) pairs

    def record(self, threshold: float) -> "ThresholdState":
        idx = len(self.history)
        return replace(self, current=threshold,
                       history=self.history + ((idx, threshold),))


@dataclass(frozen=True)
class CoarseAnnotation:
    """A detector box labeled with a GIS-derived category.

    ``category`` always comes from the matched visibility interval,
    never from the detector; ``building_id`` records the provenance.
    """

    pano_id: str
    x: float
    y: float
    w: float
    h: float
    category: int
    building_id: str
    iou_x: float
    score: float

    @property
    def bbox(self) -> tuple:
        return (self.x, self.y, self.w, self.h)

    def to_dict(self) -> dict:
        return {
            "pano_id": self.pano_id,
            "bbox": [self.x, self.y, self.w, self.h],
            "category": self.category,
            "building_id": self.building_id,
            "iou_x": self.iou_x,
            "score": self.score,
        }


def fit_threshold(scores, state: ThresholdState) -> ThresholdState:
    """Fit the next batch's threshold from the previous batch's scores.

    Empty history (first batch) or no scores falls back to the default.
    A single score fits with sigma 0, i.e. the threshold is the score
    itself, clamped.
    """
    if state.mode != "adaptive":
        raise ValueError("fit_threshold requires adaptive mode")
    if not state.history or len(scores) == 0:
        return state.record(DEFAULT_FIRST_THRESHOLD)
    mu = float(np.mean(scores))
    sigma = float(np.std(scores, ddof=1)) if len(scores) > 1 else 0.0
    thr = min(max(mu - SIGMA_FACTOR * sigma, state.clip_lo), state.clip_hi)
    return state.record(thr)


def filter_detections(boxes, state: ThresholdState) -> list:
    """Keep boxes scoring at or above the current threshold, order kept."""
    return [b for b in boxes if b.score >= state.current]


@dataclass(frozen=True)
class MatchResult:
    building_id: str
    category: int
    iou_x: float


def _midpoint_inside(lo: float, hi: float, mid: float, width: float) -> bool:
    """Strict containment on the wrapped pixel axis; empty spans hold nothing."""
    lo, hi = lo % width, hi % width
    if lo == hi:
        return False
    if lo < hi:
        return lo < mid < hi
    return mid > lo or mid < hi


def match_box(box: DetectionBox, intervals, iou_min: float,
              width: float) -> MatchResult | None:
    """Match one box against the panorama's visibility intervals.

    Candidates are intervals strictly containing the box midpoint; the
    winner is the candidate with the highest 1D IoU above ``iou_min``
    (strict), ties to the smaller building id. None when nothing
    qualifies.
    """
    mid = (box.x + box.w / 2.0) % width
    best = None
    best_key = None
    for iv in intervals:
        if not _midpoint_inside(iv.px_lo, iv.px_hi, mid, width):
            continue
        iou = iou_1d((box.x, box.x + box.w), (iv.px_lo, iv.px_hi), width)
        if iou <= iou_min:
            continue
        key = (-iou, iv.building_id)
        if best_key is None or key < best_key:
            best_key = key
            best = MatchResult(building_id=iv.building_id,
                               category=iv.category, iou_x=iou)
    return best


# ---------------------------------------------------------------------------
# Batch pipeline
# ---------------------------------------------------------------------------

@dataclass
class BatchReport:
    batch_index: int
    threshold: float
    n_panoramas: int
    input_boxes: int = 0
    filtered_out: int = 0
    unmatched: int = 0
    annotated: int = 0
    dropped: int = 0  # degenerate scene or invalid box

    def to_dict(self) -> dict:
        return self.__dict__.copy()


@dataclass
class RunReport:
    config: dict
    batches: list = field(default_factory=list)
    threshold_history: list = field(default_factory=list)
    skipped_panoramas: list = field(default_factory=list)  # (pano_id, reason)
    missing_meta: dict = field(default_factory=dict)  # pano_id -> n boxes

    @property
    def totals(self) -> dict:
        keys = ("input_boxes", "filtered_out", "unmatched", "annotated",
                "dropped")
        tot = {k: sum(getattr(b, k) for b in self.batches) for k in keys}
        tot["dropped_missing_meta"] = sum(self.missing_meta.values())
        return tot

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "totals": self.totals,
            "batches": [b.to_dict() for b in self.batches],
            "threshold_history": [list(t) for t in self.threshold_history],
            "skipped_panoramas": [list(s) for s in self.skipped_panoramas],
            "missing_meta": dict(sorted(self.missing_meta.items())),
        }


def _pano_intervals(footprints, meta, config: RunConfig):
    """Trace one panorama into pixel-space visibility intervals."""
    scene = clip_scene(footprints, meta, config.radius_m)
    if scene.degenerate:
        return None, scene.containing_building
    sweep = trace_sweep(scene, config.step_deg)
    ivs = intervals_from_sweep(sweep)
    return intervals_to_pixel(ivs, meta, config.flip_heading), None


def _chunks(items, size):
    for i in range(0, len(items), size):
        yield items[i:i + size]


def generate_coarse_annotations(metas, footprints: FootprintSet,
                                dets: DetectionSet, config: RunConfig):
    """Run the full per-batch pipeline; returns (annotations, run report).

    Panoramas are shuffled with the run seed and chunked into batches.
    Within a batch panoramas are independent (and may run on several
    workers); the threshold update is strictly sequential across
    batches. Detections whose panorama has no metadata are dropped and
    reported.
    """
    metas = list(metas)
    meta_ids = {m.pano_id for m in metas}
    report = RunReport(config=config.to_dict())
    for pano_id, boxes in sorted(dets.by_pano.items()):
        if pano_id not in meta_ids:
            report.missing_meta[pano_id] = len(boxes)

    order = list(metas)
    random.Random(config.seed).shuffle(order)

    state = ThresholdState(mode=config.threshold_mode,
                           batch_size=config.batch_size,
                           clip_lo=config.clip_lo, clip_hi=config.clip_hi)
    annotations = []
    prev_scores: list = []
    pool = (ThreadPoolExecutor(max_workers=config.workers)
            if config.workers > 1 else None)
    try:
        for k, batch in enumerate(_chunks(order, config.batch_size)):
            if config.threshold_mode == "adaptive":
                state = fit_threshold(prev_scores, state)
            else:
                state = state.record(config.fixed_threshold)
            br = BatchReport(batch_index=k, threshold=state.current,
                             n_panoramas=len(batch))
            if pool is not None:
                traced = list(pool.map(
                    lambda m: _pano_intervals(footprints, m, config), batch))
            else:
                traced = [_pano_intervals(footprints, m, config)
                          for m in batch]
            batch_scores: list = []
            for meta, (intervals, blocker) in zip(batch, traced):
                boxes = dets.boxes_for(meta.pano_id)
                br.input_boxes += len(boxes)
                if intervals is None:
                    report.skipped_panoramas.append(
                        (meta.pano_id, f"camera inside footprint {blocker}"))
                    br.dropped += len(boxes)
                    continue
                valid = []
                for b in boxes:
                    if b.y + b.h > meta.height + 1e-9:
                        br.dropped += 1  # vertical extent leaves the image
                    else:
                        valid.append(b)
                retained = filter_detections(valid, state)
                br.filtered_out += len(valid) - len(retained)
                for b in retained:
                    batch_scores.append(b.score)
                    m = match_box(b, intervals, config.iou_x_min, meta.width)
                    if m is None:
                        br.unmatched += 1
                        continue
                    br.annotated += 1
                    annotations.append(CoarseAnnotation(
                        pano_id=b.pano_id, x=b.x, y=b.y, w=b.w, h=b.h,
                        category=m.category, building_id=m.building_id,
                        iou_x=m.iou_x, score=b.score))
            prev_scores = batch_scores
            report.batches.append(br)
    finally:
        if pool is not None:
            pool.shutdown()
    report.threshold_history = list(state.history)
    return annotations, report
