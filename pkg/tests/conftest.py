"""Shared fixtures: small hand-built maps and synthetic scenes built once per session."""
from __future__ import annotations

import numpy as np
import pytest

from dsmap.builder import build_map
from dsmap.config import PipelineConfig
from dsmap.evalgen.suites import ambiguity_spec, single_object_spec, two_object_spec
from dsmap.evalgen.synth import synth_scene
from dsmap.ingest.frames import read_sequence
from dsmap.perception.backends import make_backend
from dsmap.perception.encoders import embed_text
from dsmap.scene import DsmMap, PointCloud, SceneObject, SemanticCaption


def unit_vec(dim: int, seed: int) -> np.ndarray:
    v = np.random.default_rng(seed).standard_normal(dim)
    return v / np.linalg.norm(v)


def box_object(obj_id: int, lo, hi, name: str = "thing", n: int = 64, seed: int = 0, **caption) -> SceneObject:
    """Object with ``n`` uniform points inside the box plus its two extreme corners."""
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    pts = np.vstack([lo, hi, rng.uniform(lo, hi, size=(n, 3))])
    cap = SemanticCaption(name, **caption)
    return SceneObject(obj_id, cap, PointCloud(pts), unit_vec(256, seed + 1000), embed_text(cap.text()))


def build(manifest, cfg=None):
    return build_map(read_sequence(manifest), cfg or PipelineConfig(), make_backend("mock"))


@pytest.fixture(scope="session")
def mock_backend():
    return make_backend("mock")


@pytest.fixture(scope="session")
def single_scene(tmp_path_factory):
    return synth_scene(single_object_spec(10), tmp_path_factory.mktemp("single"), seed=0)


@pytest.fixture(scope="session")
def pair_scene(tmp_path_factory):
    return synth_scene(two_object_spec(10), tmp_path_factory.mktemp("pair"), seed=0)


@pytest.fixture(scope="session")
def ambiguity_scene(tmp_path_factory):
    return synth_scene(ambiguity_spec(), tmp_path_factory.mktemp("ambiguity"), seed=0)


@pytest.fixture(scope="session")
def single_build(single_scene):
    return build(single_scene.manifest)


@pytest.fixture(scope="session")
def pair_build(pair_scene):
    return build(pair_scene.manifest)


@pytest.fixture(scope="session")
def ambiguity_build(ambiguity_scene):
    return build(ambiguity_scene.manifest)


@pytest.fixture
def three_object_map():
    objs = [
        box_object(0, (0, 0, 0), (1, 1, 1), "sofa", seed=1),
        box_object(1, (0.2, 0.2, 1.0), (0.6, 0.6, 1.2), "pillow", seed=2),
        box_object(2, (3, 0, 0), (3.5, 0.5, 0.5), "stool", seed=3),
    ]
    return DsmMap(objs, config_snapshot={"seed": 0})


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(verdicts):
        terminalreporter.write_line(verdicts[n])
