"""Masks, unprojection and manifest reading."""
from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dsmap.errors import EmptyFragment, MaskError, SequenceError
from dsmap.geometry import look_at
from dsmap.ingest.frames import (
    CameraIntrinsics,
    Detection2d,
    FrameRecord,
    read_sequence,
    save_color,
    save_depth,
    validate_pose,
    write_sequence,
)
from dsmap.ingest.masks import Mask2d, intersect_masks
from dsmap.ingest.unproject import project, unproject

dense_masks = arrays(np.bool_, st.tuples(st.integers(1, 12), st.integers(1, 12)))


def rect(w, h, x0, y0, x1, y1):
    d = np.zeros((h, w), bool)
    d[y0:y1, x0:x1] = True
    return Mask2d.from_dense(d)


class TestMask:
    @given(dense_masks)
    def test_dense_round_trip(self, dense):
        m = Mask2d.from_dense(dense)
        np.testing.assert_array_equal(m.to_dense(), dense)
        assert m.area == int(dense.sum())

    def test_intersect_self(self):
        m = rect(20, 10, 2, 3, 9, 8)
        assert intersect_masks(m, m) == m

    def test_intersect_empty(self):
        m = rect(20, 10, 2, 3, 9, 8)
        assert intersect_masks(m, Mask2d(20, 10)).is_empty()

    def test_rectangles_against_per_pixel(self):
        a = rect(32, 24, 3, 2, 20, 15)
        b = rect(32, 24, 10, 8, 30, 22)
        got = intersect_masks(a, b)
        expected = a.to_dense() & b.to_dense()
        np.testing.assert_array_equal(got.to_dense(), expected)
        assert got.bbox() == (10, 8, 10, 7)

    @given(st.data())
    def test_intersection_matches_and(self, data):
        a = data.draw(dense_masks)
        b = data.draw(arrays(np.bool_, a.shape))
        got = Mask2d.from_dense(a).intersect(Mask2d.from_dense(b))
        np.testing.assert_array_equal(got.to_dense(), a & b)

    def test_size_mismatch(self):
        with pytest.raises(MaskError):
            intersect_masks(Mask2d.full(4, 4), Mask2d.full(5, 4))

    def test_rejects_overlapping_runs(self):
        with pytest.raises(MaskError):
            Mask2d(10, 10, [(0, 5), (3, 2)])

    def test_rejects_out_of_bounds(self):
        with pytest.raises(MaskError):
            Mask2d(4, 4, [(10, 10)])

    def test_adjacent_runs_merge(self):
        assert Mask2d(10, 1, [(0, 2), (2, 3)]).runs.tolist() == [[0, 5]]

    def test_empty_bbox(self):
        with pytest.raises(MaskError):
            Mask2d(3, 3).bbox()


INTR = CameraIntrinsics(500.0, 400.0, 32.0, 24.0, 64, 48)


def one_pixel(u, v, w=64, h=48):
    d = np.zeros((h, w), bool)
    d[v, u] = True
    return Mask2d.from_dense(d)


class TestUnproject:
    def test_principal_ray(self):
        depth = np.full((48, 64), 1000, np.uint16)
        intr = CameraIntrinsics(500.0, 500.0, 32.0, 24.0, 64, 48)
        cloud = unproject(depth, intr, np.eye(4), one_pixel(32, 24))
        np.testing.assert_allclose(cloud.points, [[0, 0, 1]])

    def test_translated_pose(self):
        depth = np.full((48, 64), 1000, np.uint16)
        intr = CameraIntrinsics(500.0, 500.0, 32.0, 24.0, 64, 48)
        pose = np.eye(4)
        pose[0, 3] = 1.0
        cloud = unproject(depth, intr, pose, one_pixel(32, 24))
        np.testing.assert_allclose(cloud.points, [[1, 0, 1]])

    def test_three_pixels_against_scalar_formula(self):
        pix = [(3, 5, 800), (40, 10, 1234), (63, 47, 2500)]
        depth = np.zeros((48, 64), np.uint16)
        dense = np.zeros((48, 64), bool)
        for u, v, d in pix:
            depth[v, u] = d
            dense[v, u] = True
        pose = look_at((0.3, -1.0, 0.8), (0, 0, 0))
        cloud = unproject(depth, INTR, pose, Mask2d.from_dense(dense))
        expected = []
        # row-major pixel order
        for u, v, d in sorted(pix, key=lambda p: (p[1], p[0])):
            z = d / 1000.0
            x = (u - INTR.cx) * z / INTR.fx
            y = (v - INTR.cy) * z / INTR.fy
            expected.append(pose[:3, :3] @ np.array([x, y, z]) + pose[:3, 3])
        np.testing.assert_allclose(cloud.points, np.array(expected), atol=1e-12)

    def test_zero_and_far_depth_skipped(self):
        depth = np.zeros((48, 64), np.uint16)
        depth[0, 0] = 500
        depth[0, 1] = 20000
        cloud = unproject(depth, INTR, np.eye(4), rect(64, 48, 0, 0, 3, 1), max_depth=10.0)
        assert len(cloud) == 1

    def test_empty_fragment(self):
        with pytest.raises(EmptyFragment):
            unproject(np.zeros((48, 64), np.uint16), INTR, np.eye(4), rect(64, 48, 0, 0, 5, 5))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            unproject(np.zeros((10, 10), np.uint16), INTR, np.eye(4), rect(64, 48, 0, 0, 5, 5))

    def test_colors_follow_pixels(self):
        depth = np.full((48, 64), 1000, np.uint16)
        color = np.zeros((48, 64, 3), np.uint8)
        color[24, 32] = (10, 20, 30)
        cloud = unproject(depth, INTR, np.eye(4), one_pixel(32, 24), color)
        assert cloud.colors.tolist() == [[10, 20, 30]]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 63), st.integers(0, 47), st.integers(1, 9000),
           st.floats(-2, 2), st.floats(-2, 2), st.floats(0.5, 3))
    def test_project_inverts_unproject(self, u, v, d, ex, ey, ez):
        depth = np.full((48, 64), d, np.uint16)
        pose = look_at((ex, ey, ez), (0, 0, 0))
        cloud = unproject(depth, INTR, pose, one_pixel(u, v), max_depth=100)
        pu, pv, pz = project(cloud.points, INTR, pose)
        np.testing.assert_allclose([pu[0], pv[0], pz[0]], [u, v, d / 1000.0], atol=1e-6)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_rigid_motion_preserves_distances(self, seed):
        rng = np.random.default_rng(seed)
        depth = rng.integers(300, 5000, size=(48, 64)).astype(np.uint16)
        mask = Mask2d.from_dense(rng.random((48, 64)) < 0.05)
        if mask.is_empty():
            return
        a = unproject(depth, INTR, np.eye(4), mask).points
        b = unproject(depth, INTR, look_at(rng.normal(size=3) * 3 + 5, rng.normal(size=3)), mask).points
        da = np.linalg.norm(a[:, None] - a[None], axis=2)
        db = np.linalg.norm(b[:, None] - b[None], axis=2)
        np.testing.assert_allclose(da, db, atol=1e-9)


class TestPose:
    def test_rejects_non_rigid(self):
        pose = np.eye(4)
        pose[0, 0] = 2
        with pytest.raises(ValueError):
            validate_pose(pose)

    def test_rejects_bad_bottom_row(self):
        pose = np.eye(4)
        pose[3, 0] = 1
        with pytest.raises(ValueError):
            validate_pose(pose)


def _write_frames(tmp_path, ids):
    frames = []
    (tmp_path / "img").mkdir(exist_ok=True)
    for fid in ids:
        c, d = tmp_path / "img" / f"c{fid}.png", tmp_path / "img" / f"d{fid}.png"
        save_color(c, np.zeros((48, 64, 3), np.uint8))
        save_depth(d, np.full((48, 64), 1000, np.uint16))
        det = Detection2d("cup", (2, 3, 5, 5), rect(64, 48, 2, 3, 7, 8))
        frames.append(FrameRecord(fid, fid * 0.1, INTR, np.eye(4), c, d, [det]))
    return frames


class TestReadSequence:
    def test_two_lines(self, tmp_path):
        write_sequence(tmp_path / "m.jsonl", _write_frames(tmp_path, [0, 1]))
        recs = list(read_sequence(tmp_path / "m.jsonl"))
        assert [r.frame_id for r in recs] == [0, 1]
        assert recs[1].detections[0].seg_c == rect(64, 48, 2, 3, 7, 8)
        assert recs[0].load_depth()[0, 0] == 1000

    def test_out_of_order(self, tmp_path):
        write_sequence(tmp_path / "m.jsonl", _write_frames(tmp_path, [1, 0]))
        with pytest.raises(SequenceError, match=":2:"):
            list(read_sequence(tmp_path / "m.jsonl"))

    def test_dangling_depth(self, tmp_path):
        write_sequence(tmp_path / "m.jsonl", _write_frames(tmp_path, [0]))
        (tmp_path / "img" / "d0.png").unlink()
        with pytest.raises(SequenceError, match="d0.png"):
            list(read_sequence(tmp_path / "m.jsonl"))

    def test_malformed_line(self, tmp_path):
        write_sequence(tmp_path / "m.jsonl", _write_frames(tmp_path, [0]))
        with open(tmp_path / "m.jsonl", "a") as fh:
            fh.write("{not json\n")
        with pytest.raises(SequenceError, match=":2:"):
            list(read_sequence(tmp_path / "m.jsonl"))

    def test_depth_mask_intersection(self, tmp_path):
        write_sequence(tmp_path / "m.jsonl", _write_frames(tmp_path, [0]))
        line = json.loads((tmp_path / "m.jsonl").read_text())
        line["detections"][0]["seg_d"] = {"runs": rect(64, 48, 5, 0, 64, 48).runs.tolist()}
        (tmp_path / "m.jsonl").write_text(json.dumps(line) + "\n")
        det = next(read_sequence(tmp_path / "m.jsonl")).detections[0]
        assert det.segmentation() == rect(64, 48, 5, 3, 7, 8)

    def test_detection_bbox_outside_image(self):
        with pytest.raises(ValueError):
            Detection2d("cup", (60, 0, 10, 5), rect(64, 48, 0, 0, 2, 2))
