"""Kinematic desk scene shared by the demonstration generator and the rollout simulator.

There is no contact physics. An object attaches to the hand when the grasp
condition holds and its centroid is near the thumb, then follows the thumb's
translation until the grasp opens. A button sinks under any fingertip that
presses below its top face within its footprint.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import InvalidWorkspace
from .kin import grasp_condition

TASKS = ("reach", "pick_place", "press")


@dataclass(frozen=True)
class TaskSpec:
    """Parameters of a scripted desk task, shared by generation and evaluation.

    ``workspace_lo``/``workspace_hi`` bound the object centroid in x and y of
    the robot base frame; ``height_range`` is the surface height offset.
    """

    task: str = "reach"
    N: int = 32
    workspace_lo: tuple[float, float] = (0.36, -0.10)
    workspace_hi: tuple[float, float] = (0.52, 0.10)
    height_range: tuple[float, float] = (-0.15, 0.15)
    world_yaw_range: tuple[float, float] = (-math.pi, math.pi)
    object_yaw_range: tuple[float, float] = (-math.pi, math.pi)
    shape: str = "box"
    size: tuple[float, ...] = (0.05, 0.05, 0.05)
    hand_jitter: float = 0.03
    max_steps: int = 60
    reach_tol: float = 0.03
    place_tol: float = 0.05
    press_tol: float = 0.02
    goal_lift: float = 0.04
    min_goal_separation: float = 0.12
    button_travel: float = 0.035
    head_height: float = 0.5
    prompts: tuple[str, ...] = ()

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.shape not in ("box", "sphere"):
            raise ValueError(f"unknown shape {self.shape!r}")
        lo, hi = np.asarray(self.workspace_lo, float), np.asarray(self.workspace_hi, float)
        if lo.shape != (2,) or hi.shape != (2,) or not np.all(hi > lo):
            raise InvalidWorkspace("workspace box must have hi > lo in x and y")
        if not self.height_range[1] >= self.height_range[0]:
            raise InvalidWorkspace("height range must satisfy lo <= hi")
        if self.N < (8 if self.task == "pick_place" else 1):
            raise ValueError("too few object points for this task")
        if self.task == "pick_place":
            span = np.linalg.norm(hi - lo)
            if span < self.min_goal_separation:
                raise InvalidWorkspace("workspace too small to separate object and goal")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: dict) -> "TaskSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown task spec keys: {sorted(unknown)}")
        clean = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        return cls(**clean)

    @classmethod
    def load(cls, path) -> "TaskSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    def point_split(self) -> list[int]:
        if self.task == "pick_place":
            goal = self.N // 4
            return [self.N - goal, goal]
        return [self.N]


def sample_surface(shape: str, size, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points uniform on a centred box (full extents ``size``) or sphere (radius ``size[0]``)."""
    if shape == "sphere":
        v = rng.normal(size=(n, 3))
        return size[0] * v / np.linalg.norm(v, axis=1, keepdims=True)
    ext = np.asarray(size, dtype=float)
    half = ext / 2
    areas = np.array([ext[1] * ext[2], ext[0] * ext[2], ext[0] * ext[1]])
    face_p = np.repeat(areas, 2) / (2 * areas.sum())
    faces = rng.choice(6, size=n, p=face_p)
    pts = rng.uniform(-half, half, size=(n, 3))
    axis = faces // 2
    sign = np.where(faces % 2 == 0, -1.0, 1.0)
    pts[np.arange(n), axis] = sign * half[axis]
    return pts


def half_height(shape: str, size) -> float:
    return size[0] if shape == "sphere" else size[2] / 2


@dataclass
class SceneObject:
    name: str
    role: str  # "target", "goal" or "button"
    rest_points: np.ndarray
    points: np.ndarray = None

    def __post_init__(self):
        self.rest_points = np.array(self.rest_points, dtype=float)
        if self.points is None:
            self.points = self.rest_points.copy()

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


@dataclass
class SimScene:
    objects: list[SceneObject]
    surface_height: float
    spec: TaskSpec
    attached: tuple[int, np.ndarray] | None = None
    button_top: np.ndarray | None = None
    _pressed: float = field(default=0.0, repr=False)

    @property
    def N(self) -> int:
        return sum(len(o.points) for o in self.objects)

    def pooled_points(self) -> np.ndarray:
        return np.concatenate([o.points for o in self.objects], axis=0)

    def role(self, role: str) -> SceneObject:
        return next(o for o in self.objects if o.role == role)

    @property
    def goal_point(self) -> np.ndarray:
        goal = self.role("goal")
        return goal.rest_points.mean(axis=0) + np.array([0.0, 0.0, self.spec.goal_lift])

    @property
    def press_depth(self) -> float:
        return self._pressed

    def copy(self) -> "SimScene":
        objs = [SceneObject(o.name, o.role, o.rest_points.copy(), o.points.copy()) for o in self.objects]
        att = None if self.attached is None else (self.attached[0], self.attached[1].copy())
        top = None if self.button_top is None else self.button_top.copy()
        return SimScene(objs, self.surface_height, self.spec, att, top, self._pressed)

    def update(self, fingertips) -> None:
        """Advance object states to the new fingertip positions."""
        F = np.asarray(fingertips, dtype=float).reshape(5, 3)
        thumb = F[0]
        grasping = grasp_condition(F)
        if self.attached is not None and not grasping:
            self.attached = None
        if self.attached is None and grasping:
            for i, obj in enumerate(self.objects):
                if obj.role == "target" and np.linalg.norm(obj.centroid - thumb) < 0.04:
                    self.attached = (i, obj.points - thumb)
                    break
        if self.attached is not None:
            i, rel = self.attached
            self.objects[i].points = rel + thumb
        if self.button_top is not None:
            btn = self.role("button")
            near = np.linalg.norm(F[:, :2] - self.button_top[:2], axis=1) < self._button_radius()
            depth = 0.0
            if np.any(near):
                depth = self.button_top[2] - F[near, 2].min()
            self._pressed = float(np.clip(depth, 0.0, self.spec.button_travel))
            btn.points = btn.rest_points - np.array([0.0, 0.0, self._pressed])

    def _button_radius(self) -> float:
        s = self.spec.size
        return s[0] if self.spec.shape == "sphere" else 0.5 * math.hypot(s[0], s[1])

    def success(self, fingertips) -> bool:
        F = np.asarray(fingertips, dtype=float).reshape(5, 3)
        task = self.spec.task
        if task == "reach":
            return bool(np.linalg.norm(F[0] - self.role("target").centroid) < self.spec.reach_tol)
        if task == "pick_place":
            return bool(np.linalg.norm(self.role("target").centroid - self.goal_point) < self.spec.place_tol)
        return self._pressed >= self.spec.press_tol


@dataclass(frozen=True)
class Layout:
    """Sampled placement of one episode in the robot base frame."""

    surface_height: float
    object_xy: tuple[float, float]
    object_yaw: float
    goal_xy: tuple[float, float] | None
    local_points: tuple[np.ndarray, ...]

    def to_dict(self) -> dict:
        return {"surface_height": self.surface_height, "object_xy": list(self.object_xy),
                "object_yaw": self.object_yaw,
                "goal_xy": None if self.goal_xy is None else list(self.goal_xy)}


def sample_layout(spec: TaskSpec, rng: np.random.Generator, height_range=None) -> Layout:
    lo, hi = np.asarray(spec.workspace_lo), np.asarray(spec.workspace_hi)
    hr = spec.height_range if height_range is None else height_range
    h = float(rng.uniform(hr[0], hr[1])) if hr[1] > hr[0] else float(hr[0])
    xy = rng.uniform(lo, hi)
    yaw = float(rng.uniform(*spec.object_yaw_range))
    goal = None
    if spec.task == "pick_place":
        for _ in range(1000):
            g = rng.uniform(lo, hi)
            if np.linalg.norm(g - xy) >= spec.min_goal_separation:
                goal = g
                break
        else:
            raise InvalidWorkspace("could not place goal away from the object")
    split = spec.point_split()
    local = [sample_surface(spec.shape, spec.size, split[0], rng)]
    if spec.task == "pick_place":
        plate = (0.10, 0.10, 0.01)
        local.append(sample_surface("box", plate, split[1], rng))
    return Layout(h, (float(xy[0]), float(xy[1])), yaw,
                  None if goal is None else (float(goal[0]), float(goal[1])),
                  tuple(local))


def build_scene(spec: TaskSpec, layout: Layout) -> SimScene:
    c, s = math.cos(layout.object_yaw), math.sin(layout.object_yaw)
    Rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    h = layout.surface_height
    centre = np.array([*layout.object_xy, h + half_height(spec.shape, spec.size)])
    main = layout.local_points[0] @ Rz.T + centre
    role = {"reach": "target", "pick_place": "target", "press": "button"}[spec.task]
    objects = [SceneObject("object", role, main)]
    top = None
    if spec.task == "pick_place":
        plate_centre = np.array([*layout.goal_xy, h + 0.005])
        objects.append(SceneObject("goal", "goal", layout.local_points[1] + plate_centre))
    if spec.task == "press":
        top = centre + np.array([0.0, 0.0, half_height(spec.shape, spec.size)])
    return SimScene(objects, h, spec, button_top=top)
