"""Command-line entry point, configuration precedence and the map builder."""
from __future__ import annotations

import json

import numpy as np
import pytest

from dsmap.builder import BuildReport, MapBuilder
from dsmap.cli import main
from dsmap.config import PipelineConfig, load_config, merge
from dsmap.errors import ConfigError, DsmError, FrameError
from dsmap.evalgen.suites import single_object_spec, two_object_spec
from dsmap.evalgen.synth import synth_scene
from dsmap.mapio import load_map
from dsmap.perception.backends import make_backend


@pytest.fixture(scope="module")
def five_frames(tmp_path_factory):
    return synth_scene(single_object_spec(5), tmp_path_factory.mktemp("five"))


@pytest.fixture(scope="module")
def pair_map(tmp_path_factory):
    d = tmp_path_factory.mktemp("pairmap")
    res = synth_scene(two_object_spec(6), d / "scene")
    assert main(["build-map", "--manifest", str(res.manifest), "--out", str(d / "pair.dsm"),
                 "--report", str(d / "report.json")]) == 0
    return d / "pair.dsm", res


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


class TestBuildMap:
    def test_single_object(self, tmp_path, capsys, five_frames):
        code, out, _ = run(capsys, "build-map", "--manifest", five_frames.manifest, "--out", tmp_path / "m.dsm")
        assert code == 0
        report = json.loads(out)
        assert report["objects"] == 1 and report["frames"] == 5
        assert report["merges"] == 4
        assert report["config"]["fusion"]["t_v"] == 0.4
        dsm = load_map(tmp_path / "m.dsm")
        assert len(dsm.objects) == 1
        assert dsm.config_snapshot == report["config"]

    def test_empty_manifest(self, tmp_path, capsys):
        (tmp_path / "empty.jsonl").write_text("")
        code, _, err = run(capsys, "build-map", "--manifest", tmp_path / "empty.jsonl", "--out", tmp_path / "m.dsm")
        assert code == 1
        assert err.startswith("error: DsmError:") and err.count("\n") == 1

    def test_rerun_byte_identical(self, tmp_path, capsys, five_frames):
        for sub in ("a", "b"):
            (tmp_path / sub).mkdir()
            assert run(capsys, "build-map", "--manifest", five_frames.manifest,
                       "--out", tmp_path / sub / "m.dsm", "--seed", 3)[0] == 0
        assert (tmp_path / "a/m.dsm").read_bytes() == (tmp_path / "b/m.dsm").read_bytes()

    def test_assoc_report(self, tmp_path, capsys, five_frames):
        run(capsys, "build-map", "--manifest", five_frames.manifest, "--out", tmp_path / "m.dsm",
            "--assoc-report", tmp_path / "assoc.jsonl")
        lines = [json.loads(l) for l in (tmp_path / "assoc.jsonl").read_text().splitlines()]
        assert [l["frame_id"] for l in lines] == list(range(5))
        assert lines[0]["new_objects"] == [{"candidate": 0, "object": 0}]

    def test_missing_manifest(self, tmp_path, capsys):
        code, _, err = run(capsys, "build-map", "--manifest", tmp_path / "nope.jsonl", "--out", tmp_path / "m.dsm")
        assert code == 1 and err.startswith("error: ")

    def test_bad_frame_names_frame_id(self, tmp_path, capsys, five_frames):
        lines = five_frames.manifest.read_text().splitlines()
        rec = json.loads(lines[2])
        depth = rec["depth"]
        rec["depth"] = rec["color"]
        lines[2] = json.dumps(rec)
        (five_frames.manifest.parent / "broken.jsonl").write_text("\n".join(lines) + "\n")
        code, _, err = run(capsys, "build-map", "--manifest", five_frames.manifest.parent / "broken.jsonl",
                           "--out", tmp_path / "m.dsm")
        assert code == 1 and "frame 2" in err
        assert depth != rec["depth"]


class TestConfig:
    def test_precedence(self, tmp_path, capsys, five_frames):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"fusion": {"t_v": 0.2, "t_g": 0.25}, "window": {"window_len": 3}}))
        code, out, _ = run(capsys, "build-map", "--manifest", five_frames.manifest, "--out", tmp_path / "m.dsm",
                           "--config", cfg_file, "--t-v", 0.35)
        cfg = json.loads(out)["config"]
        assert code == 0
        assert cfg["fusion"]["t_v"] == 0.35
        assert cfg["fusion"]["t_g"] == 0.25
        assert cfg["window"]["window_len"] == 3
        assert cfg["fusion"]["t_x"] == 0.8

    def test_defaults(self):
        cfg = PipelineConfig()
        assert (cfg.fusion.t_v, cfg.fusion.t_x, cfg.fusion.t_g, cfg.fusion.total_threshold) == (0.4, 0.8, 0.3, 1.5)
        assert cfg.grounding.k == 3

    def test_round_trip(self):
        cfg = merge(PipelineConfig(), {"seed": 4, "grounding": {"k": 5}})
        assert PipelineConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("bad", [
        {"fusion": {"t_q": 1}},
        {"colour": 1},
        {"fusion": 3},
        {"window": {"window_len": 0}},
        {"backend": "psychic"},
    ])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            merge(PipelineConfig(), bad)

    def test_unreadable_file(self, tmp_path):
        (tmp_path / "c.json").write_text("{oops")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "c.json")

    def test_bad_config_exits_nonzero(self, tmp_path, capsys, five_frames):
        (tmp_path / "c.json").write_text('{"fusion": {"nope": 1}}')
        code, _, err = run(capsys, "build-map", "--manifest", five_frames.manifest, "--out", tmp_path / "m.dsm",
                           "--config", tmp_path / "c.json")
        assert code == 1 and "ConfigError" in err


class TestBuilder:
    def test_report_counts(self, single_build):
        dsm, rep = single_build
        assert isinstance(rep, BuildReport)
        assert rep.frames == 10 and rep.detections == 10
        assert rep.new_objects == 1 and rep.merges == 9
        assert "associations" not in rep.to_dict(len(dsm.objects))

    def test_no_frames(self):
        with pytest.raises(DsmError):
            MapBuilder(PipelineConfig(), make_backend("mock")).build([])

    def test_frame_error_wraps(self, five_frames):
        frame = five_frames.frames[0]
        frame.depth_ref = frame.color_ref.with_name("missing.png")
        with pytest.raises(FrameError, match="frame 0"):
            MapBuilder(PipelineConfig(), make_backend("mock")).process_frame(frame)

    def test_fragment_sphere_padding(self, five_frames):
        from dsmap.ingest.unproject import unproject
        frame = five_frames.frames[1]
        cloud = unproject(frame.load_depth(), frame.intrinsics, frame.pose, frame.detections[0].segmentation())
        padded = MapBuilder(PipelineConfig(), make_backend("mock")).fragment_sphere(cloud, frame, 0)
        bare = MapBuilder(merge(PipelineConfig(), {"window": {"pixel_margin": 0.0}}),
                          make_backend("mock")).fragment_sphere(cloud, frame, 0)
        depth = np.linalg.norm(np.asarray(bare.center) - frame.viewpoint)
        assert padded.radius - bare.radius == pytest.approx(depth / frame.intrinsics.fx)

    def test_objects_finalize_after_window(self, single_build):
        dsm, _ = single_build
        # the last fragment is the final frame, so nothing has aged out of the window yet
        assert not dsm.objects[0].finalized


class TestGroundAndQueries:
    def test_ground_report(self, tmp_path, capsys, pair_map):
        path, _ = pair_map
        code, out, _ = run(capsys, "ground", "--map", path, "--query", "the ball", "--k", 2,
                           "--dump-views", tmp_path / "views")
        rep = json.loads(out)
        assert code == 0
        assert load_map(path).objects[rep["predicted_object_id"]].name == "ball"
        assert rep["config"]["grounding"]["k"] == 2
        assert sorted(p.name for p in (tmp_path / "views").iterdir()) == ["object.png", "place.png", "scene.png"]

    def test_ground_no_candidate(self, capsys, pair_map):
        code, _, err = run(capsys, "ground", "--map", pair_map[0], "--query", "the zorblax")
        assert code == 1 and "NoCandidateError" in err

    def test_gen_and_eval(self, tmp_path, capsys, pair_map):
        path, scene = pair_map
        assert run(capsys, "gen-queries", "--map", scene.gt_path, "--out", tmp_path / "q.jsonl",
                   "--n-unique", 3, "--n-multiple", 0)[0] == 0
        assert len((tmp_path / "q.jsonl").read_text().splitlines()) == 3
        code, out, _ = run(capsys, "eval-grounding", "--map", path, "--queries", tmp_path / "q.jsonl",
                           "--gt", scene.gt_path)
        rep = json.loads(out)
        assert code == 0 and rep["unique"]["acc_at_05"] == 100.0
        assert len(rep["queries"]) == 3

    def test_eval_seg(self, capsys, pair_map):
        path, scene = pair_map
        code, out, _ = run(capsys, "eval-seg", "--pred", path, "--gt", scene.gt_path)
        rep = json.loads(out)
        assert code == 0 and rep["mAcc"] == 100.0 and rep["F_mIoU"] == 100.0

    def test_synth_suite_and_file(self, tmp_path, capsys):
        code, out, _ = run(capsys, "synth-scene", "--spec", "single", "--out", tmp_path / "s")
        assert code == 0 and json.loads(out)["frames"] == 10
        (tmp_path / "spec.json").write_text(json.dumps(single_object_spec(2)))
        code, out, _ = run(capsys, "synth-scene", "--spec", tmp_path / "spec.json", "--out", tmp_path / "f")
        assert code == 0 and json.loads(out)["frames"] == 2

    def test_synth_bad_spec(self, tmp_path, capsys):
        code, _, err = run(capsys, "synth-scene", "--spec", tmp_path / "none.json", "--out", tmp_path / "x")
        assert code == 1 and err.startswith("error: DsmError")


class TestExport:
    def test_two_objects(self, tmp_path, capsys, pair_map):
        path, _ = pair_map
        assert run(capsys, "export", "--map", path, "--out", tmp_path / "ex")[0] == 0
        files = sorted(p.name for p in (tmp_path / "ex").iterdir())
        assert files == ["object_0000.ply", "object_0001.ply", "summary.json"]
        summary = json.loads((tmp_path / "ex/summary.json").read_text())
        assert [o["caption"]["name"] for o in summary["objects"]] == ["storage box", "ball"]

    def test_point_conservation(self, tmp_path, capsys, pair_map):
        path, _ = pair_map
        run(capsys, "export", "--map", path, "--out", tmp_path / "ex")
        dsm = load_map(path)
        for oid, obj in dsm.objects.items():
            lines = (tmp_path / f"ex/object_{oid:04d}.ply").read_text().splitlines()
            header_end = lines.index("end_header")
            assert f"element vertex {len(obj.cloud)}" in lines[:header_end]
            assert len(lines) - header_end - 1 == len(obj.cloud)
            first = np.array(lines[header_end + 1].split()[:3], float)
            np.testing.assert_allclose(first, obj.cloud.points[0], atol=1e-6)

    def test_unknown_format(self, tmp_path, capsys, pair_map):
        code, _, err = run(capsys, "export", "--map", pair_map[0], "--format", "xyz9", "--out", tmp_path / "ex")
        assert code == 1 and "ply" in err and "xyz9" in err
