"""Synthetic end-to-end runs: generate, transfer to the robot frame, train, deploy.

A *recipe* decides how in-the-wild demonstrations reach the robot frame and
whether the in-scene demonstration joins the training set:

``full``
    Anchor every wild demo on the in-scene demo (pivoted alignment) and
    co-train with the in-scene demo.
``wild_only``
    No in-scene transform: wild demos are used in the frame they were
    recorded in, as if it were the robot frame, without the in-scene demo.
``wild_shifted``
    Like ``wild_only`` but with the fixed nominal head-to-robot offset added,
    a hand-measured calibration instead of an anchor demo.
``in_scene_only``
    Train on the single in-scene demo.
``aligned_wild_only``
    Anchor the wild demos but leave the in-scene demo out.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .align import align_trajectory, shift_trajectory
from .demos.model import Dataset
from .demos.synth import nominal_world_shift, synth_generate
from .rollout import EvaluationResult, ModelPolicy, evaluate
from .scene import TaskSpec
from .vnpolicy.config import PolicyConfig, desk_config
from .vnpolicy.model import PolicyModel
from .vnpolicy.train import TrainingLog, train

log = logging.getLogger(__name__)

RECIPES = ("full", "wild_only", "wild_shifted", "in_scene_only", "aligned_wild_only")


def training_set(dataset: Dataset, recipe: str, spec: TaskSpec):
    """Robot-frame trajectories for ``recipe``."""
    if recipe not in RECIPES:
        raise ValueError(f"recipe must be one of {RECIPES}")
    scene = dataset.in_scene
    if recipe == "in_scene_only":
        return [scene.replace()]
    if recipe in ("wild_only", "wild_shifted"):
        shift = nominal_world_shift(spec) if recipe == "wild_shifted" else np.zeros(3)
        return [shift_trajectory(w, shift) for w in dataset.in_the_wild]
    aligned = [align_trajectory(w, scene).aligned for w in dataset.in_the_wild]
    return aligned + [scene] if recipe == "full" else aligned


@dataclass
class RecipeResult:
    recipe: str
    model: PolicyModel
    log: TrainingLog
    evaluation: EvaluationResult

    def to_dict(self) -> dict:
        return {"recipe": self.recipe, "final_loss": self.log.epoch_loss[-1],
                "success_rate": self.evaluation.success_rate,
                "evaluation": self.evaluation.to_dict()}


def run_recipe(dataset: Dataset, recipe: str, spec: TaskSpec, config: PolicyConfig,
               episodes: int, eval_seed: int, exec_prefix: int = 10) -> RecipeResult:
    model, tlog = train(training_set(dataset, recipe, spec), config)
    result = evaluate(ModelPolicy(model), spec, episodes, eval_seed, exec_prefix)
    log.info("recipe %s: success %.2f", recipe, result.success_rate)
    return RecipeResult(recipe, model, tlog, result)


def data_mixing_experiment(spec: TaskSpec | None = None, demos: int = 51, seed: int = 0,
                           config: PolicyConfig | None = None, episodes: int = 20,
                           recipes=("full", "wild_only")) -> dict[str, RecipeResult]:
    """Train one policy per recipe on the same generated demos and score them
    on the same evaluation episodes.

    ``demos`` counts the in-scene demo, so the default is 50 wild + 1 in-scene.
    Evaluation episodes use ``seed + 1`` to stay disjoint from generation.
    """
    spec = spec or TaskSpec(task="reach")
    config = config or desk_config(seed=seed)
    dataset = synth_generate(spec, demos, seed)
    return {r: run_recipe(dataset, r, spec, config, episodes, seed + 1) for r in recipes}


def report_json(results: dict[str, RecipeResult]) -> str:
    return json.dumps({k: v.to_dict() for k, v in results.items()}, indent=1, sort_keys=True)
