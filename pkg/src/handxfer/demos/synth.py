"""Scripted synthetic demonstrations used as ground truth throughout the test suite.

A demonstration is produced in the robot base frame by a scripted expert that
moves the hand between keyframes along minimum-jerk segments while the scene
rules carry the objects. In-the-wild copies are then re-expressed in a
gravity-aligned world frame anchored at a simulated head position with a
random heading, which is what the alignment step has to undo.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidWorkspace
from ..geom3d import rot_z
from ..kin import fk, reference_chain
from ..scene import Layout, TaskSpec, build_scene, sample_layout
from .fileio import GENERATOR_VERSION
from .model import Dataset, FrameOfReference, Source, Trajectory

DT = 0.1
REST = 1.0  # seconds of stillness at the start, one full observation history
CLOSED_HAND = (1.5, 1.4, 1.4, 1.4, 1.4, 1.4)


@functools.lru_cache(maxsize=1)
def hand_templates() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Home fingertips plus open and closed hand shapes relative to the thumb."""
    chain = reference_chain()
    home = fk(chain, chain.home)
    closed_q = chain.home.copy()
    closed_q[7:] = CLOSED_HAND
    closed = fk(chain, closed_q)
    return home, home - home[0], closed - closed[0]


def min_jerk(tau):
    """Minimum-jerk blend ``10 s^3 - 15 s^4 + 6 s^5`` on ``s`` clipped to [0, 1]."""
    s = np.clip(tau, 0.0, 1.0)
    return s ** 3 * (10.0 + s * (-15.0 + 6.0 * s))


@dataclass(frozen=True)
class Keyframe:
    duration: float
    thumb: np.ndarray
    closure: float = 0.0


def keyframes(spec: TaskSpec, layout: Layout, start: np.ndarray) -> list[Keyframe]:
    """Expert waypoints for one episode; ``start`` is the initial 5x3 hand."""
    _, open_rel, _ = hand_templates()
    scene = build_scene(spec, layout)
    target = scene.objects[0].rest_points.mean(axis=0)
    up = np.array([0.0, 0.0, 1.0])
    thumb0 = start[0]
    kf = [Keyframe(REST, thumb0)]
    if spec.task == "reach":
        kf += [Keyframe(1.5, target + 0.08 * up), Keyframe(1.0, target), Keyframe(0.5, target)]
    elif spec.task == "pick_place":
        goal = scene.goal_point
        kf += [
            Keyframe(1.5, target + 0.08 * up),
            Keyframe(1.0, target),
            Keyframe(0.8, target, 1.0),
            Keyframe(1.0, target + 0.10 * up, 1.0),
            Keyframe(1.5, goal + 0.10 * up, 1.0),
            Keyframe(1.0, goal, 1.0),
            Keyframe(0.8, goal, 0.0),
            Keyframe(1.0, goal + 0.10 * up, 0.0),
        ]
    else:
        top = scene.button_top
        press_to = top - np.array([0.0, 0.0, spec.button_travel - 0.005])
        # place the index fingertip, not the thumb, over the button
        offset = -open_rel[1]
        kf += [
            Keyframe(1.5, top + 0.06 * up + offset),
            Keyframe(1.0, press_to + offset),
            Keyframe(0.3, press_to + offset),
            Keyframe(1.0, top + 0.06 * up + offset),
        ]
    return kf


def expert_fingertips(spec: TaskSpec, layout: Layout, start) -> np.ndarray:
    """Fingertip trajectory (T, 5, 3) sampled at 10 Hz."""
    _, open_rel, closed_rel = hand_templates()
    start = np.asarray(start, dtype=float)
    offset0 = start - (start[0] + open_rel)
    kf = keyframes(spec, layout, start)
    total = sum(k.duration for k in kf)
    n = int(round(total / DT)) + 1
    times = np.arange(n) * DT
    thumb = np.empty((n, 3))
    closure = np.empty(n)
    # first keyframe is a hold at the start pose
    bounds = np.cumsum([k.duration for k in kf])
    prev_thumb, prev_c = kf[0].thumb, kf[0].closure
    seg_start = 0.0
    for k, end in zip(kf, bounds):
        mask = (times >= seg_start - 1e-9) & (times <= end + 1e-9)
        s = min_jerk((times[mask] - seg_start) / k.duration)[:, None]
        thumb[mask] = prev_thumb + s * (k.thumb - prev_thumb)
        closure[mask] = prev_c + s[:, 0] * (k.closure - prev_c)
        prev_thumb, prev_c, seg_start = k.thumb, k.closure, end
    shape = (1 - closure)[:, None, None] * open_rel + closure[:, None, None] * closed_rel
    # any start-pose deviation from the template fades out over the first motion segment
    fade = 1.0 - min_jerk((times - REST) / kf[1].duration)
    return thumb[:, None, :] + shape + fade[:, None, None] * offset0


def rollout_scene(spec: TaskSpec, layout: Layout, fingertips: np.ndarray) -> np.ndarray:
    """Object points (T, N, 3) produced by driving the scene with ``fingertips``."""
    scene = build_scene(spec, layout)
    out = np.empty((len(fingertips), scene.N, 3))
    for t, F in enumerate(fingertips):
        scene.update(F)
        out[t] = scene.pooled_points()
    return out


def to_world(points, yaw: float, head) -> np.ndarray:
    """Robot-frame points into a gravity-aligned world frame with heading ``yaw`` at ``head``.

    The world frame satisfies ``p_robot = Rz(yaw) p_world + head``.
    """
    return (np.asarray(points, dtype=float) - head) @ rot_z(yaw)


def from_world(points, yaw: float, head) -> np.ndarray:
    return np.asarray(points, dtype=float) @ rot_z(yaw).T + head


@dataclass
class Demo:
    """One generated demonstration together with the values used to create it."""

    trajectory: Trajectory
    layout: Layout
    world_yaw: float
    head: np.ndarray
    start: np.ndarray

    def params(self) -> dict:
        return {**self.layout.to_dict(), "world_yaw": self.world_yaw,
                "head": self.head.tolist(), "hand_start_thumb": self.start[0].tolist()}


def generate_demo(spec: TaskSpec, rng: np.random.Generator, in_scene: bool) -> Demo:
    home, _, _ = hand_templates()
    if in_scene:
        layout = sample_layout(spec, rng, height_range=(0.0, 0.0))
    else:
        layout = sample_layout(spec, rng)
    jitter = rng.uniform(-spec.hand_jitter, spec.hand_jitter, size=3)
    start = home + np.array([0.0, 0.0, layout.surface_height]) + jitter
    tips = expert_fingertips(spec, layout, start)
    objects = rollout_scene(spec, layout, tips)
    times = np.arange(len(tips)) * DT
    yaw = float(rng.uniform(*spec.world_yaw_range))
    head_jitter = rng.uniform([-0.05, -0.05, -0.1], [0.05, 0.05, 0.1])
    ws_centre = (np.asarray(spec.workspace_lo) + np.asarray(spec.workspace_hi)) / 2
    head = np.array([ws_centre[0] - 0.4, ws_centre[1],
                     layout.surface_height + spec.head_height]) + head_jitter
    if in_scene:
        traj = Trajectory(times, objects, tips, Source.IN_SCENE, FrameOfReference.ROBOT_BASE,
                          spec.task, spec.prompts)
        return Demo(traj, layout, 0.0, np.zeros(3), start)
    traj = Trajectory(times, to_world(objects, yaw, head), to_world(tips, yaw, head),
                      Source.IN_THE_WILD, FrameOfReference.WORLD_GRAVITY_ALIGNED,
                      spec.task, spec.prompts)
    return Demo(traj, layout, yaw, head, start)


def nominal_world_shift(spec: TaskSpec) -> np.ndarray:
    """Translation a fixed camera-to-workspace measurement would apply to world points."""
    ws_centre = (np.asarray(spec.workspace_lo) + np.asarray(spec.workspace_hi)) / 2
    return np.array([ws_centre[0] - 0.4, ws_centre[1], spec.head_height])


def synth_generate(task: TaskSpec, count: int, seed: int) -> Dataset:
    """One in-scene plus ``count - 1`` in-the-wild scripted demonstrations.

    Demo ``i`` draws from the ``i``-th child of ``SeedSequence(seed)``, so the
    result is a pure function of ``(task, count, seed)``.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if not isinstance(task, TaskSpec):
        raise TypeError("task must be a TaskSpec")
    ws = np.asarray(task.workspace_hi) - np.asarray(task.workspace_lo)
    if np.any(ws <= 0):
        raise InvalidWorkspace("degenerate workspace")
    children = np.random.SeedSequence(seed).spawn(count)
    demos = [generate_demo(task, np.random.default_rng(children[0]), in_scene=True)]
    for i in range(1, count):
        demos.append(generate_demo(task, np.random.default_rng(children[i]), in_scene=False))
    meta = {
        "seed": seed,
        "generator_version": GENERATOR_VERSION,
        "task": task.to_dict(),
        "demos": [d.params() for d in demos],
    }
    return Dataset(demos[0].trajectory, [d.trajectory for d in demos[1:]], meta)


__all__ = [
    "Demo", "Keyframe", "DT", "REST", "expert_fingertips", "from_world", "generate_demo",
    "hand_templates", "keyframes", "min_jerk", "nominal_world_shift", "rollout_scene",
    "synth_generate", "to_world",
]
