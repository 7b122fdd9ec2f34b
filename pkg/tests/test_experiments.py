import numpy as np
import pytest

from handxfer.demos import FrameOfReference, synth_generate
from handxfer.demos.synth import nominal_world_shift
from handxfer.experiments import RECIPES, training_set
from handxfer.scene import TaskSpec


@pytest.fixture(scope="module")
def data():
    spec = TaskSpec(task="reach")
    return spec, synth_generate(spec, 4, 2)


def test_every_recipe_is_robot_frame(data):
    spec, ds = data
    sizes = {"full": 4, "wild_only": 3, "wild_shifted": 3, "in_scene_only": 1, "aligned_wild_only": 3}
    for recipe in RECIPES:
        out = training_set(ds, recipe, spec)
        assert len(out) == sizes[recipe]
        assert all(t.frame_of_reference == FrameOfReference.ROBOT_BASE for t in out)


def test_wild_only_keeps_recorded_coordinates(data):
    spec, ds = data
    for raw, got in zip(ds.in_the_wild, training_set(ds, "wild_only", spec)):
        assert np.array_equal(raw.objects, got.objects)
    for raw, got in zip(ds.in_the_wild, training_set(ds, "wild_shifted", spec)):
        assert np.allclose(got.objects - raw.objects, nominal_world_shift(spec), atol=1e-15)


def test_full_anchors_on_scene(data):
    spec, ds = data
    c = ds.in_scene.objects[0].mean(axis=0)
    for t in training_set(ds, "full", spec):
        assert np.abs(t.objects[0].mean(axis=0) - c).max() < 1e-9
    with pytest.raises(ValueError):
        training_set(ds, "everything", spec)
