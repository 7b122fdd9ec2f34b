"""Closed-loop kinematic deployment of a fingertip policy.

Every 0.1 s tick the robot observes fingertips through forward kinematics and
object points from the scene. Every ``exec_prefix`` ticks the policy predicts
``T_p`` future fingertip frames; the first ``exec_prefix`` of them are
tightened by the grasp heuristic, converted to joint states by IK and
executed one per tick.
"""
from __future__ import annotations

import json
import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .demos.fileio import save_trajectory
from .demos.model import FrameOfReference, Source, Trajectory
from .demos.synth import DT, expert_fingertips
from .errors import IKDiverged
from .kin import IKOptions, KinematicChain, fk, grasp_adjust, ik, reference_chain, rms_error
from .scene import Layout, SimScene, TaskSpec, build_scene, sample_layout
from .vnpolicy.model import PolicyModel, predict

log = logging.getLogger(__name__)

IK_ABORT = 0.05


@dataclass
class Observation:
    fingertips: np.ndarray  # (T_o, 5, 3), oldest first
    objects: np.ndarray     # (T_o, N, 3)
    tick: int


@dataclass
class Episode:
    index: int
    layout: Layout
    expert: np.ndarray  # (T, 5, 3) scripted reference from the robot's home pose


class ModelPolicy:
    def __init__(self, model: PolicyModel):
        self.model = model
        self.T_o = model.config.T_o
        self.T_p = model.config.T_p

    def __call__(self, obs: Observation) -> np.ndarray:
        return predict(self.model, obs.fingertips, obs.objects)


class ReplayPolicy:
    """Oracle that plays back the episode's scripted expert by tick."""

    def __init__(self, T_o: int = 10, T_p: int = 30, expert=None):
        self.T_o, self.T_p = T_o, T_p
        self.expert = expert

    def for_episode(self, episode: Episode) -> "ReplayPolicy":
        return ReplayPolicy(self.T_o, self.T_p, episode.expert)

    def __call__(self, obs: Observation) -> np.ndarray:
        idx = np.clip(obs.tick + np.arange(1, self.T_p + 1), 0, len(self.expert) - 1)
        return self.expert[idx]


class HoldPolicy:
    """Predicts the current fingertips for the whole horizon."""

    def __init__(self, T_o: int = 10, T_p: int = 30):
        self.T_o, self.T_p = T_o, T_p

    def __call__(self, obs: Observation) -> np.ndarray:
        return np.repeat(obs.fingertips[-1:], self.T_p, axis=0)


@dataclass
class RolloutReport:
    success: bool
    steps: int
    final_rms_to_expert: float
    ik_residuals: list[float] = field(default_factory=list)
    trace_path: str | None = None
    aborted: str | None = None
    layout: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "steps": self.steps,
            "final_rms_to_expert": self.final_rms_to_expert,
            "ik_residuals": self.ik_residuals,
            "trace_path": self.trace_path,
            "aborted": self.aborted,
            "layout": self.layout,
        }


class History:
    """Fixed-length observation buffer, warm-started by repeating the rest frame."""

    def __init__(self, T_o: int, fingertips, objects):
        self.f = deque([np.array(fingertips)] * T_o, maxlen=T_o)
        self.o = deque([np.array(objects)] * T_o, maxlen=T_o)

    def push(self, fingertips, objects) -> None:
        self.f.append(np.array(fingertips))
        self.o.append(np.array(objects))

    def observation(self, tick: int) -> Observation:
        return Observation(np.stack(self.f), np.stack(self.o), tick)


@dataclass
class StepResult:
    joints: list
    fingertips: list
    objects: list
    residuals: list
    success: bool


def step(policy, scene: SimScene, J_current, history: History, exec_prefix: int,
         chain: KinematicChain, tick: int = 0, max_ticks: int | None = None,
         ik_opts: IKOptions | None = None):
    """One plan-and-execute cycle.

    Returns a :class:`StepResult` with the executed joint states, observed
    frames, IK residuals and whether the task predicate became true
    (execution stops at that tick). ``scene`` and ``history`` are advanced in
    place.

    Raises
    ------
    IKDiverged
        If IK leaves a fingertip residual above 5 cm.
    """
    plan = np.asarray(policy(history.observation(tick)), dtype=float)
    n = min(exec_prefix, len(plan))
    if max_ticks is not None:
        n = min(n, max_ticks)
    J = np.asarray(J_current, dtype=float)
    out = StepResult([], [], [], [], False)
    for k in range(n):
        target = grasp_adjust(plan[k])
        J, rep = ik(chain, target, J, ik_opts)
        if not chain.within_limits(J):
            raise AssertionError("IK produced joints outside the chain limits")
        out.residuals.append(rep.residual_rms)
        if rep.residual_rms > IK_ABORT:
            raise IKDiverged(f"IK residual {rep.residual_rms:.3f} m exceeds {IK_ABORT} m")
        F = fk(chain, J)
        scene.update(F)
        objects = scene.pooled_points()
        history.push(F, objects)
        out.joints.append(J)
        out.fingertips.append(F)
        out.objects.append(objects)
        if scene.success(F):
            out.success = True
            break
    return out


def make_episode(spec: TaskSpec, rng: np.random.Generator, index: int,
                 chain: KinematicChain) -> Episode:
    layout = sample_layout(spec, rng)
    expert = expert_fingertips(spec, layout, fk(chain, chain.home))
    return Episode(index, layout, expert)


def run_episode(policy, spec: TaskSpec, episode: Episode, chain: KinematicChain | None = None,
                exec_prefix: int = 10, trace_dir=None) -> RolloutReport:
    chain = chain or reference_chain()
    if hasattr(policy, "for_episode"):
        policy = policy.for_episode(episode)
    J = chain.home.copy()
    F = fk(chain, J)
    scene = build_scene(spec, episode.layout)
    scene.update(F)
    history = History(policy.T_o, F, scene.pooled_points())
    frames_f, frames_o = [F], [scene.pooled_points()]
    tick = 0
    success = scene.success(F)
    residuals: list[float] = []
    aborted = None
    while tick < spec.max_steps and not success:
        try:
            res = step(policy, scene, J, history, exec_prefix, chain, tick,
                       max_ticks=spec.max_steps - tick)
        except IKDiverged as exc:
            aborted = f"IKDiverged: {exc}"
            success = False
            break
        if not res.joints:
            break
        success = res.success
        residuals += res.residuals
        tick += len(res.joints)
        J = res.joints[-1]
        frames_f += res.fingertips
        frames_o += res.objects
    final = frames_f[-1]
    report = RolloutReport(bool(success), tick, rms_error(final, episode.expert[-1]), residuals,
                           aborted=aborted, layout=episode.layout.to_dict())
    if trace_dir is not None:
        trace_dir = Path(trace_dir)
        trace_dir.mkdir(parents=True, exist_ok=True)
        times = np.arange(len(frames_f)) * DT
        traj = Trajectory(times, np.stack(frames_o), np.stack(frames_f), Source.IN_SCENE,
                          FrameOfReference.ROBOT_BASE, spec.task, spec.prompts)
        path = trace_dir / f"episode_{episode.index:03d}.aina"
        save_trajectory(traj, path)
        report.trace_path = path.name
        (trace_dir / f"episode_{episode.index:03d}.json").write_text(
            json.dumps(report.to_dict(), indent=1, sort_keys=True))
    return report


@dataclass
class EvaluationResult:
    success_rate: float
    reports: list[RolloutReport]
    seed: int
    task: dict

    def to_dict(self) -> dict:
        return {"success_rate": self.success_rate, "episodes": len(self.reports),
                "seed": self.seed, "task": self.task,
                "reports": [r.to_dict() for r in self.reports]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def evaluate(policy, spec: TaskSpec, episodes: int, seed: int, exec_prefix: int = 10,
             chain: KinematicChain | None = None, trace_dir=None, threads: int = 1
             ) -> EvaluationResult:
    """Success rate over independently randomised episodes.

    Episode ``i`` is built from the ``i``-th child of ``SeedSequence(seed)``,
    so results do not depend on ``threads``.
    """
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    chain = chain or reference_chain()
    children = np.random.SeedSequence(seed).spawn(episodes)
    eps = [make_episode(spec, np.random.default_rng(c), i, chain) for i, c in enumerate(children)]

    def run(ep):
        return run_episode(policy, spec, ep, chain, exec_prefix, trace_dir)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(run, eps))
    else:
        reports = [run(ep) for ep in eps]
    rate = sum(r.success for r in reports) / episodes
    return EvaluationResult(rate, reports, seed, spec.to_dict())
