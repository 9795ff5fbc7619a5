"""Query generation, metrics, label mapping and synthetic scenes."""
from __future__ import annotations

import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from dsmap.errors import SceneSpecError
from dsmap.evalgen import (
    GeneratedQuery,
    QueryGenConfig,
    acc_at,
    confusion_scores,
    generate_queries,
    ground_report,
    map_labels,
    read_queries,
    seg_metrics,
    write_queries,
)
from dsmap.evalgen.evaluate import evaluate_grounding, evaluate_segmentation
from dsmap.evalgen.metrics import UNLABELED, transfer_labels
from dsmap.evalgen.suites import single_object_spec, two_object_spec
from dsmap.evalgen.synth import parse_objects, synth_scene
from dsmap.geometry import Aabb3
from dsmap.grounding import GroundingConfig
from dsmap.perception.backends import make_backend
from dsmap.scene import DsmMap, PointCloud, SemanticCaption

from conftest import box_object

MOCK = make_backend("mock")


def gates(mu, sigma):
    return dict(mu_a=mu, sigma_a=sigma, mu_p=mu, sigma_p=sigma, mu_o=mu, sigma_o=sigma)


class TestQueryGen:
    def test_always_include(self, ambiguity_scene):
        qs = generate_queries(ambiguity_scene.gt, QueryGenConfig(**gates(1.0, 0.0)))
        assert len(qs) == 40
        assert all(q.included_attrs == ["a_a", "a_p", "a_o"] for q in qs)

    def test_never_include(self, ambiguity_scene):
        qs = generate_queries(ambiguity_scene.gt, QueryGenConfig(**gates(0.0, 0.0)))
        assert all(q.included_attrs == [] for q in qs)
        multi = [q for q in qs if q.kind == "multiple"]
        assert all(q.text == f"the {ambiguity_scene.gt.objects[q.gt_object_id].name} that is "
                   f"{q.relation} the {ambiguity_scene.gt.objects[q.anchor_id].name}" for q in multi)

    def test_inclusion_rate_matches_normal_cdf(self, ambiguity_scene):
        cfg = QueryGenConfig(n_unique=5000, n_multiple=5000, seed=11)
        qs = generate_queries(ambiguity_scene.gt, cfg)
        expected = 1.0 - norm.cdf(cfg.gate_cutoff, loc=cfg.mu_a, scale=cfg.sigma_a)
        for key in ("a_a", "a_p", "a_o"):
            rate = np.mean([key in q.included_attrs for q in qs])
            assert abs(rate - expected) <= 0.02

    def test_kinds_and_targets(self, ambiguity_scene):
        gt = ambiguity_scene.gt
        qs = generate_queries(gt, QueryGenConfig())
        names = [o.name for o in gt.objects.values()]
        for q in qs:
            count = names.count(gt.objects[q.gt_object_id].name)
            assert (count == 1) == (q.kind == "unique")
        assert sum(q.kind == "multiple" for q in qs) == 30

    def test_seeded(self, ambiguity_scene):
        a = generate_queries(ambiguity_scene.gt, QueryGenConfig(seed=4))
        b = generate_queries(ambiguity_scene.gt, QueryGenConfig(seed=4))
        c = generate_queries(ambiguity_scene.gt, QueryGenConfig(seed=5))
        assert [q.to_dict() for q in a] == [q.to_dict() for q in b]
        assert [q.to_dict() for q in a] != [q.to_dict() for q in c]

    def test_no_relations_drops_multiple(self, caplog):
        dsm = DsmMap([box_object(0, (0, 0, 0), (1, 1, 1), "mug"), box_object(1, (2, 0, 0), (3, 1, 1), "mug")])
        qs = generate_queries(dsm, QueryGenConfig(n_unique=3, n_multiple=3))
        assert qs == []
        assert "multiple" in caplog.text

    def test_empty_map(self):
        with pytest.raises(ValueError):
            generate_queries(DsmMap())

    def test_jsonl_round_trip(self, tmp_path, ambiguity_scene):
        qs = generate_queries(ambiguity_scene.gt)
        write_queries(tmp_path / "q.jsonl", qs)
        assert [q.to_dict() for q in read_queries(tmp_path / "q.jsonl")] == [q.to_dict() for q in qs]

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            GeneratedQuery("x", 0, "several")


def shifted(dx):
    return Aabb3((dx, 0, 0), (1 + dx, 1, 1))


class TestAccAt:
    def test_identical(self):
        assert acc_at([(shifted(0), shifted(0))], 0.25) == 1.0
        assert acc_at([(shifted(0), shifted(0))], 0.5) == 1.0

    def test_iou_point_three(self):
        # iou 0.3 at shift d: (1 - d) / (1 + d) = 0.3
        d = 0.7 / 1.3
        pair = [(shifted(d), shifted(0))]
        assert acc_at(pair, 0.25) == 1.0
        assert acc_at(pair, 0.5) == 0.0

    def test_mixed_batch(self):
        d = 0.7 / 1.3
        batch = [(shifted(0), shifted(0)), (shifted(d), shifted(0)), (shifted(5), shifted(0))]
        assert acc_at(batch, 0.25) == pytest.approx(2 / 3)
        assert acc_at(batch, 0.5) == pytest.approx(1 / 3)

    def test_empty(self):
        with pytest.raises(ValueError):
            acc_at([], 0.5)

    @given(st.lists(st.floats(0, 2), min_size=1, max_size=20), st.floats(0.01, 1), st.floats(0.01, 1))
    def test_monotone_in_threshold(self, shifts, t1, t2):
        lo, hi = sorted((t1, t2))
        pairs = [(shifted(s), shifted(0)) for s in shifts]
        assert acc_at(pairs, lo) >= acc_at(pairs, hi)

    def test_report_by_kind(self):
        rep = ground_report([("unique", shifted(0), shifted(0)), ("multiple", shifted(5), shifted(0))])
        d = rep.to_dict()
        assert d["unique"]["acc_at_05"] == 100.0
        assert d["multiple"]["acc_at_025"] == 0.0
        assert d["overall"] == {"count": 2, "acc_at_025": 50.0, "acc_at_05": 50.0}


def line_cloud(labels):
    pts = np.column_stack([np.arange(len(labels), dtype=float), np.zeros(len(labels)), np.zeros(len(labels))])
    return PointCloud(pts, labels=np.asarray(labels))


class TestSegMetrics:
    def test_perfect(self):
        gt = line_cloud([0, 0, 1, 1, 2])
        rep = seg_metrics(gt, gt)
        assert rep.mAcc == 1.0 and rep.F_mIoU == 1.0

    def test_half_mislabeled(self):
        gt = line_cloud([0, 0, 1, 1])
        rep = seg_metrics(line_cloud([0, 0, 0, 0]), gt)
        assert rep.mAcc == 0.5

    def test_hand_confusion(self):
        gt = [0, 0, 0, 0, 1, 1, 1, 1, 2, 2]
        pred = [0, 0, 0, 1, 1, 1, 1, 1, 2, 0]
        rep = seg_metrics(line_cloud(pred), line_cloud(gt))
        assert rep.per_class_acc == pytest.approx({0: 0.75, 1: 1.0, 2: 0.5}, abs=1e-12)
        assert rep.per_class_iou == pytest.approx({0: 0.6, 1: 0.8, 2: 0.5}, abs=1e-12)
        assert abs(rep.mAcc - 0.75) <= 1e-9
        assert abs(rep.F_mIoU - 0.66) <= 1e-9

    def test_unmatched_points_count_as_wrong(self):
        gt = line_cloud([0, 0])
        pred = PointCloud(np.array([[0.0, 0, 0.01]]), labels=[0])
        assert transfer_labels(pred, gt).tolist() == [0, UNLABELED]
        rep = seg_metrics(pred, gt)
        assert rep.mAcc == 0.5 and rep.matched_fraction == 0.5

    def test_empty_gt(self):
        with pytest.raises(ValueError):
            seg_metrics(line_cloud([0]), PointCloud(np.zeros((0, 3)), labels=np.zeros(0)))

    @settings(max_examples=40)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(-1, 3)), min_size=1, max_size=50))
    def test_scores_against_confusion_matrix(self, pairs):
        gt = np.array([g for g, _ in pairs])
        pred = np.array([p for _, p in pairs])
        rep = confusion_scores(gt, pred)
        classes = sorted(set(gt.tolist()))
        cm = np.zeros((4, 5))
        for g, p in zip(gt, pred):
            cm[g, p + 1] += 1
        for c in classes:
            tp = cm[c, c + 1]
            assert rep.per_class_acc[c] == pytest.approx(tp / cm[c].sum())
            fp = cm[:, c + 1].sum() - tp
            assert rep.per_class_iou[c] == pytest.approx(tp / (cm[c].sum() + fp))
        assert 0.0 <= rep.mAcc <= 1.0 and 0.0 <= rep.F_mIoU <= 1.0


class TestLabels:
    def test_exact(self):
        assert map_labels([SemanticCaption("sofa")], ["sofa", "table"], MOCK) == [("sofa", False)]

    def test_synonym_via_attributes(self):
        cap = SemanticCaption("couch", "a long sofa with grey cushions")
        assert map_labels([cap], ["sofa", "table"], MOCK)[0][0] == "sofa"

    def test_empty_classes(self):
        with pytest.raises(ValueError):
            map_labels([SemanticCaption("sofa")], [], MOCK)

    def test_remote_out_of_list_falls_back(self):
        from test_grounding import FakeRemote
        be = FakeRemote(map_label=['{"category": "divan"}', '{"category": "divan"}'])
        assert map_labels([SemanticCaption("sofa")], ["sofa", "table"], be) == [("sofa", True)]


def three_in_a_row():
    spec = copy.deepcopy(single_object_spec(4))
    spec["image"] = {"width": 96, "height": 72, "vfov_deg": 60}
    base = spec["objects"][0]
    spec["objects"] = [
        dict(base, name="box", center=[0, 0, 0.15], size=[0.3, 0.3, 0.3], color=[200, 0, 0]),
        dict(base, name="ball", shape="sphere", center=[0.45, 0.1, 0.15], radius=0.12, color=[0, 200, 0]),
        dict(base, name="crate", center=[-0.4, -0.2, 0.1], size=[0.2, 0.2, 0.2], color=[0, 0, 200]),
    ]
    return spec


class TestSynth:
    def test_single_object_five_frames(self, tmp_path):
        res = synth_scene(single_object_spec(5), tmp_path)
        assert len(res.frames) == 5 and len(res.gt.objects) == 1
        assert all(len(f.detections) == 1 for f in res.frames)

    def test_masks_respect_occlusion(self, tmp_path):
        spec = three_in_a_row()
        res = synth_scene(spec, tmp_path / "all")
        alone = []
        for k, obj in enumerate(spec["objects"]):
            solo = dict(spec, objects=[dict(obj, relations=[])])
            alone.append(synth_scene(solo, tmp_path / f"solo{k}").frames)
        for fid, frame in enumerate(res.frames):
            depth = frame.load_depth().astype(float)
            solo_depth = np.stack([alone[k][fid].load_depth().astype(float) for k in range(3)])
            solo_depth[solo_depth == 0] = np.inf
            nearest = np.where(np.isinf(solo_depth.min(axis=0)), -1, solo_depth.argmin(axis=0))
            for det in frame.detections:
                k = [o["name"] for o in spec["objects"]].index(det.label)
                mask = det.seg_c.to_dense()
                np.testing.assert_array_equal(mask, nearest == k)
                np.testing.assert_array_equal(depth[mask], solo_depth[k][mask])

    def test_deterministic(self, tmp_path):
        a = synth_scene(two_object_spec(4), tmp_path / "a", seed=3)
        b = synth_scene(two_object_spec(4), tmp_path / "b", seed=3)
        assert a.manifest.read_bytes() == b.manifest.read_bytes()
        assert (tmp_path / "a/frames/depth_0002.png").read_bytes() == (tmp_path / "b/frames/depth_0002.png").read_bytes()
        assert a.gt_path.read_bytes() == b.gt_path.read_bytes()

    def test_overlap_rejected(self):
        spec = two_object_spec()
        spec["objects"][1]["center"] = [-0.3, 0, 0.15]
        with pytest.raises(SceneSpecError, match="overlap"):
            parse_objects(spec)

    def test_touching_allowed(self):
        spec = two_object_spec()
        spec["objects"][1]["center"] = [0.0, 0, 0.15]
        spec["objects"][1]["radius"] = 0.15
        spec["objects"][0]["center"] = [-0.35, 0, 0.15]
        assert len(parse_objects(spec)) == 2

    @pytest.mark.parametrize("mutate", [
        lambda s: s["objects"][0].update(shape="cone"),
        lambda s: s["objects"][0].update(size=[0, 1, 1]),
        lambda s: s["objects"][0].update(color=[300, 0, 0]),
        lambda s: s["objects"][0].update(relations=[{"anchor": 0}]),
        lambda s: s.update(objects=[]),
    ])
    def test_invalid_specs(self, mutate):
        spec = two_object_spec()
        mutate(spec)
        with pytest.raises(SceneSpecError):
            parse_objects(spec)

    def test_depth_noise_is_seeded(self, tmp_path):
        spec = dict(single_object_spec(2), depth_noise_mm=3.0)
        a = synth_scene(spec, tmp_path / "a", seed=1).frames[0].load_depth()
        b = synth_scene(spec, tmp_path / "b", seed=1).frames[0].load_depth()
        c = synth_scene(single_object_spec(2), tmp_path / "c").frames[0].load_depth()
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_gt_map_relations(self, ambiguity_scene):
        gt = ambiguity_scene.gt
        assert len(gt.objects) == 13 and len(gt.relations) == 6
        assert gt.config_snapshot["synthetic"] is True


class TestEvaluate:
    def test_segmentation_single(self, single_build, single_scene):
        dsm, _ = single_build
        rep = evaluate_segmentation(dsm, single_scene.gt, MOCK)
        assert rep.mAcc == 1.0 and rep.F_mIoU == 1.0

    def test_grounding_pair(self, pair_build, pair_scene):
        dsm, _ = pair_build
        qs = generate_queries(pair_scene.gt, QueryGenConfig(n_unique=4, n_multiple=0))
        rep, records = evaluate_grounding(dsm, pair_scene.gt, qs, MOCK, GroundingConfig(image_size=64))
        assert rep.acc_05["unique"] == 1.0
        assert len(records) == 4

    def test_unground_query_is_a_miss(self, pair_build, pair_scene):
        dsm, _ = pair_build
        qs = [GeneratedQuery("the zorblax", 0, "unique")]
        rep, records = evaluate_grounding(dsm, pair_scene.gt, qs, MOCK, GroundingConfig(image_size=64))
        assert rep.acc_025["unique"] == 0.0
        assert records[0]["predicted_object_id"] is None
