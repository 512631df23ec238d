"""Geometry-driven coarse annotation of building facades in panoramas.

From GIS building footprints, panorama metadata and detector boxes,
derive function-category annotations in the street-view pixel domain:
trace walls per heading, merge visibility intervals, map them onto the
pixel axis, and label the detector boxes they explain.
"""

from .config import RunConfig
from .errors import (ConfigError, DegenerateSceneError, GeotagFacadeError,
                     LoadError, OutOfRangeError, ParseError)
from .ingest import (BuildingFootprint, CategoryMapping, DetectionBox,
                     DetectionSet, FootprintSet, PanoramaMeta, PanoramaSet,
                     load_category_mapping, load_detections, load_footprints,
                     load_panorama_meta)
from .matcher import (CoarseAnnotation, ThresholdState, filter_detections,
                      fit_threshold, generate_coarse_annotations, match_box)
from .metrics import (AccuracyReport, EvalBox, average_precision,
                      coarse_accuracy, coco_summary, iou_1d, iou_2d)
from .projection import (EARTH_RADIUS_KM, METERS_PER_DEGREE, LocalScene,
                         LocalXY, WallSegment, angle_to_pixel, clip_scene,
                         geodetic_to_local, local_to_geodetic,
                         normalize_angle, pixel_to_angle)
from .raytrace import (RayHit, RaySample, RaySweep, VisibilityInterval,
                       intervals_from_sweep, intervals_to_pixel,
                       ray_wall_distance, trace_sweep)
from .synth import (GroundTruthBox, NoiseConfig, SceneConfig, SyntheticScene,
                    generate_scene, oracle_hits, oracle_visibility,
                    perturb_detections)

__version__ = "0.1.0"
