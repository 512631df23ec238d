"""Run configuration shared by the pipeline driver and the CLI."""
from __future__ import annotations

from dataclasses import dataclass, asdict, fields


@dataclass(frozen=True)
class RunConfig:
    """Parameters of one annotation run, echoed into every output artifact.

    Defaults match the operating point used throughout: a 50 m field of
    view, 1 degree sweep step, 0.3 horizontal-IoU floor, and adaptive
    score thresholding.
    """

    radius_m: float = 50.0
    step_deg: float = 1.0
    iou_x_min: float = 0.3
    threshold_mode: str = "adaptive"  # "adaptive" | "fixed"
    fixed_threshold: float = 0.5
    batch_size: int = 64
    seed: int = 17
    flip_heading: bool = False
    clip_lo: float = 0.05
    clip_hi: float = 0.9
    workers: int = 1

    def __post_init__(self):
        if self.radius_m <= 0:
            raise ValueError("radius_m must be positive")
        if self.step_deg <= 0:
            raise ValueError("step_deg must be positive")
        if self.threshold_mode not in ("adaptive", "fixed"):
            raise ValueError(f"unknown threshold_mode {self.threshold_mode!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not (0.0 <= self.clip_lo <= self.clip_hi <= 1.0):
            raise ValueError("need 0 <= clip_lo <= clip_hi <= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})
