import math

import numpy as np
import pytest

from geotag_facade import PanoramaMeta
from geotag_facade.projection import LocalScene, WallSegment
from geotag_facade.raytrace import (RayHit, RaySample, RaySweep,
                                    intervals_from_sweep, intervals_to_pixel,
                                    ray_wall_distance, trace_sweep)
from geotag_facade.synth import oracle_hits


def seg(ax, ay, bx, by, building_id="B", category=1):
    return WallSegment(ax=ax, ay=ay, bx=bx, by=by, building_id=building_id,
                       category=category)


def scene_of(segments, radius=50.0, pano_id="p"):
    buildings = []
    seen = set()
    for s in segments:
        if s.building_id not in seen:
            seen.add(s.building_id)
            buildings.append((s.building_id, s.category))
    return LocalScene(pano_id=pano_id, origin=(0.0, 0.0), radius_m=radius,
                      segments=list(segments), buildings=tuple(buildings))


def square_building(cx, cy, side, building_id="B", category=1):
    h = side / 2.0
    corners = [(cx - h, cy - h), (cx + h, cy - h), (cx + h, cy + h),
               (cx - h, cy + h)]
    return [seg(*corners[i], *corners[(i + 1) % 4], building_id=building_id,
                category=category) for i in range(4)]


META = PanoramaMeta(pano_id="p", lat=0.0, lon=0.0, north_px=512.0,
                    width=2048, height=1024)


class TestRayWallDistance:
    def test_head_on(self):
        assert ray_wall_distance((0, 0), (0, 1), seg(-5, 15, 5, 15)) == 15.0

    def test_miss(self):
        assert ray_wall_distance((0, 0), (1, 0), seg(-5, 15, 5, 15)) is None

    def test_collinear_is_no_hit(self):
        assert ray_wall_distance((0, 0), (0, 1), seg(0, 10, 0, 20)) is None

    def test_behind_camera(self):
        assert ray_wall_distance((0, 0), (0, -1), seg(-5, 15, 5, 15)) is None

    def test_endpoint_hit_counts(self):
        # ray aimed exactly at segment endpoint (5, 15)
        d = math.hypot(5, 15)
        dirv = (5 / d, 15 / d)
        assert ray_wall_distance((0, 0), dirv, seg(-5, 15, 5, 15)) == \
            pytest.approx(d)

    def test_requires_unit_direction(self):
        with pytest.raises(ValueError):
            ray_wall_distance((0, 0), (0, 2), seg(-5, 15, 5, 15))

    def test_matches_oracle_on_random_rays(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            s = seg(*rng.uniform(-30, 30, 4))
            if s.length < 1e-6:
                continue
            theta = rng.uniform(0, 360)
            d = ray_wall_distance(
                (0, 0), (math.sin(math.radians(theta)),
                         math.cos(math.radians(theta))), s)
            sc = scene_of([s], radius=1000.0)
            _, od = oracle_hits(sc, np.array([theta]))
            if d is None:
                assert not np.isfinite(od[0])
            else:
                assert od[0] == pytest.approx(d, abs=1e-9)


class TestTraceSweep:
    def test_empty_scene_all_miss(self):
        sweep = trace_sweep(scene_of([]), 1.0)
        assert len(sweep) == 360
        assert (sweep.building_idx == -1).all()
        assert all(s.hit is None for s in sweep.samples)

    def test_square_due_north(self):
        # 10 m square centered 20 m north: true extent is atan(5/15)
        sweep = trace_sweep(scene_of(square_building(0, 20, 10)), 1.0)
        extent = math.degrees(math.atan(5 / 15))  # 18.4349
        hit_angles = {int(t) for t, b in zip(sweep.thetas, sweep.building_idx)
                      if b >= 0}
        expected = {a % 360 for a in range(-18, 19)}
        assert hit_angles == expected
        assert extent == pytest.approx(18.4349, abs=1e-3)
        assert sweep.distances[0] == pytest.approx(15.0)

    def test_near_building_occludes_far(self):
        segs = (square_building(0, 15, 6, "near") +
                square_building(0, 30, 6, "far"))
        sweep = trace_sweep(scene_of(segs), 1.0)
        near_idx = [i for i, (b, _) in enumerate(sweep.buildings)
                    if b == "near"][0]
        assert sweep.building_idx[0] == near_idx
        # every angle that sees anything in the shared cone sees "near"
        far_idx = 1 - near_idx
        far_angles = sweep.thetas[sweep.building_idx == far_idx]
        near_extent = math.degrees(math.atan(3 / 12))
        for a in far_angles:
            signed = a if a <= 180 else a - 360
            assert abs(signed) > near_extent - 1.0

    def test_step_must_divide_360(self):
        with pytest.raises(ValueError):
            trace_sweep(scene_of([]), 7.0)

    def test_hits_restricted_to_radius(self):
        sweep = trace_sweep(scene_of(square_building(0, 80, 10), radius=50.0))
        assert (sweep.building_idx == -1).all()

    def test_distance_tie_breaks_to_smaller_id(self):
        # two coincident walls from different buildings
        segs = [seg(-5, 10, 5, 10, "zz"), seg(-5, 10, 5, 10, "aa")]
        sweep = trace_sweep(scene_of(segs), 1.0)
        bid, _ = sweep.buildings[sweep.building_idx[0]]
        assert bid == "aa"

    def test_nearest_wall_by_exhaustive_scan(self):
        # every hit is minimal over a per-segment scalar scan
        from geotag_facade.synth import SceneConfig, generate_scene
        from geotag_facade.projection import clip_scene
        for s in range(5):
            sc = generate_scene(400 + s, SceneConfig(
                n_buildings=8, n_cameras=1, with_ground_truth=False))
            local = clip_scene(sc.footprint_set, sc.metas[0], 50.0)
            sweep = trace_sweep(local, 1.0)
            from geotag_facade.raytrace import heading_direction
            for i, theta in enumerate(sweep.thetas):
                dirv = heading_direction(theta)
                dists = [ray_wall_distance((0.0, 0.0), dirv, g)
                         for g in local.segments]
                within = [d for d in dists if d is not None and d <= 50.0]
                if sweep.building_idx[i] < 0:
                    assert not within
                else:
                    assert within
                    assert sweep.distances[i] == pytest.approx(
                        min(within), abs=1e-9)


def sample(theta, building=None, distance=0.0, category=1):
    hit = None if building is None else RayHit(building, category, distance)
    return RaySample(theta=float(theta), hit=hit)


class TestIntervals:
    def test_wrap_merge(self):
        samples = [sample(t) for t in range(360)]
        for t in list(range(342, 360)) + list(range(0, 19)):
            samples[t] = sample(t, "B", 16.0)
        sweep = RaySweep.from_samples(samples, 1.0)
        ivs = intervals_from_sweep(sweep)
        assert len(ivs) == 1
        iv = ivs[0]
        assert (iv.angle_lo, iv.angle_hi) == (342.0, 18.0)
        assert iv.width_deg == pytest.approx(36.0)

    def test_three_runs_two_owners(self):
        samples = [sample(t) for t in range(360)]
        for t in range(10, 20):
            samples[t] = sample(t, "B1", 10.0)
        for t in range(20, 30):
            samples[t] = sample(t, "B2", 12.0)
        for t in range(30, 40):
            samples[t] = sample(t, "B1", 11.0)
        ivs = intervals_from_sweep(RaySweep.from_samples(samples, 1.0))
        assert len(ivs) == 3
        assert [iv.building_id for iv in ivs] == ["B1", "B2", "B1"]
        assert ivs[0].min_distance == 10.0

    def test_all_miss(self):
        samples = [sample(t) for t in range(360)]
        assert intervals_from_sweep(RaySweep.from_samples(samples, 1.0)) == []

    def test_samples_roundtrip(self):
        samples = [sample(t) for t in range(360)]
        samples[5] = sample(5, "B", 12.5)
        samples[6] = sample(6, "B", 11.0)
        samples[10] = sample(10, "C", 30.0, category=3)
        sweep = RaySweep.from_samples(samples, 1.0)
        assert sweep.samples == samples

    def test_full_circle_single_building(self):
        samples = [sample(t, "B", 5.0) for t in range(360)]
        ivs = intervals_from_sweep(RaySweep.from_samples(samples, 1.0))
        assert len(ivs) == 1
        assert (ivs[0].angle_lo, ivs[0].angle_hi) == (0.0, 359.0)

    def test_partition_property(self):
        # hit angles = union of interval grid angles, intervals disjoint
        rng = np.random.default_rng(9)
        from geotag_facade.synth import SceneConfig, generate_scene
        from geotag_facade.projection import clip_scene
        for s in range(20):
            sc = generate_scene(100 + s, SceneConfig(
                n_buildings=int(rng.integers(1, 15)), n_cameras=1,
                with_ground_truth=False))
            local = clip_scene(sc.footprint_set, sc.metas[0], 50.0)
            sweep = trace_sweep(local, 1.0)
            ivs = intervals_from_sweep(sweep)
            hit = {(float(t), sweep.buildings[b][0])
                   for t, b in zip(sweep.thetas, sweep.building_idx) if b >= 0}
            covered = set()
            for iv in ivs:
                n_steps = int(round(iv.width_deg / 1.0))
                angles = [(iv.angle_lo + k) % 360.0 for k in range(n_steps + 1)]
                for a in angles:
                    key = (a, iv.building_id)
                    assert key not in covered  # disjoint runs
                    covered.add(key)
            assert hit == covered


class TestIntervalsToPixel:
    def iv(self, lo, hi, building="B"):
        samples = [sample(t) for t in range(360)]
        span = int((hi - lo) % 360)
        for k in range(span + 1):
            t = int((lo + k) % 360)
            samples[t] = sample(t, building, 10.0)
        ivs = intervals_from_sweep(RaySweep.from_samples(samples, 1.0))
        assert len(ivs) == 1
        return ivs[0]

    def test_quarter(self):
        out = intervals_to_pixel([self.iv(0, 90)], META)
        assert (out[0].px_lo, out[0].px_hi) == (512.0, 1024.0)

    def test_wrapping_angles_map_inside_image(self):
        out = intervals_to_pixel([self.iv(342, 18)], META)
        assert out[0].px_lo == pytest.approx(409.6)
        assert out[0].px_hi == pytest.approx(614.4)
        assert out[0].px_lo < out[0].px_hi  # wraps in angle, not pixels

    def test_high_north_px(self):
        meta = PanoramaMeta(pano_id="p", lat=0, lon=0, north_px=2040.0,
                            width=2048, height=1024)
        out = intervals_to_pixel([self.iv(170, 190)], meta)
        assert out[0].px_lo == pytest.approx((2040 + 170 / 360 * 2048) % 2048)
        assert out[0].px_hi == pytest.approx((2040 + 190 / 360 * 2048) % 2048)

    def test_seam_crossing_span(self):
        meta = PanoramaMeta(pano_id="p", lat=0, lon=0, north_px=2040.0,
                            width=2048, height=1024)
        out = intervals_to_pixel([self.iv(350, 10)], meta)
        assert out[0].px_lo > out[0].px_hi  # crosses the image seam

    def test_order_consistent_with_angles(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            lo = int(rng.integers(0, 360))
            hi = int((lo + rng.integers(1, 120)) % 360)
            iv = self.iv(lo, hi)
            out = intervals_to_pixel([iv], META)[0]
            span_px = (out.px_hi - out.px_lo) % META.width
            assert span_px == pytest.approx(
                iv.width_deg / 360.0 * META.width, abs=1e-6)

    def test_flip_heading_keeps_span_increasing(self):
        # flipped mapping reverses direction; the span is still lo -> hi
        # in increasing pixel x and keeps its angular width
        iv = self.iv(10, 30)
        out = intervals_to_pixel([iv], META, flip_heading=True)[0]
        span_px = (out.px_hi - out.px_lo) % META.width
        assert span_px == pytest.approx(20 / 360 * META.width)
        from geotag_facade import angle_to_pixel
        assert out.px_lo == angle_to_pixel(30.0, META, flip_heading=True)
        assert out.px_hi == angle_to_pixel(10.0, META, flip_heading=True)
