"""Bring in-the-wild demonstrations into the robot base frame using the in-scene anchor.

The translation comes from the first-frame object centroids and the heading
from a Kabsch fit between the two initial hand poses, reduced to its
rotation about gravity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .demos.model import FrameOfReference, Source, Trajectory
from .errors import NMismatch
from .geom3d import RigidTransform, extract_z_rotation, kabsch

MODES = ("pivoted", "literal")


@dataclass(frozen=True)
class AlignmentResult:
    delta_o: np.ndarray
    theta_z: float
    mode: str
    aligned: Trajectory
    transform: RigidTransform


def centroid_offset(scene_first, wild_first) -> np.ndarray:
    """``centroid(scene_first) - centroid(wild_first)``."""
    scene_first = np.asarray(scene_first, dtype=float)
    wild_first = np.asarray(wild_first, dtype=float)
    if scene_first.size == 0 or wild_first.size == 0:
        raise ValueError("object point sets must be non-empty")
    return scene_first.mean(axis=0) - wild_first.mean(axis=0)


def hand_yaw(scene_hand0, wild_hand0) -> tuple[float, RigidTransform]:
    """Heading that rotates the wild hand onto the scene hand."""
    T = kabsch(wild_hand0, scene_hand0)
    return extract_z_rotation(T)


def alignment_transform(wild: Trajectory, scene: Trajectory, mode: str = "pivoted"
                        ) -> tuple[RigidTransform, np.ndarray, float]:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if wild.n_points != scene.n_points:
        raise NMismatch(f"wild trajectory has N={wild.n_points}, scene has N={scene.n_points}")
    delta = centroid_offset(scene.objects[0], wild.objects[0])
    theta, Rz = hand_yaw(scene.fingertips[0], wild.fingertips[0])
    if mode == "literal":
        T = RigidTransform(Rz.rotation, delta)
    else:
        c_w = wild.objects[0].mean(axis=0)
        c_s = scene.objects[0].mean(axis=0)
        T = RigidTransform(Rz.rotation, c_s - Rz.rotation @ c_w)
    return T, delta, theta


def align_trajectory(wild: Trajectory, scene: Trajectory, mode: str = "pivoted") -> AlignmentResult:
    """Map ``wild`` into ``scene``'s robot base frame.

    ``literal`` rotates about the world origin and then adds the centroid
    offset. ``pivoted`` rotates about the wild first-frame object centroid and
    places it on the scene's, so the first-frame centroids always coincide.
    The same rigid map is applied to object points and fingertips of every
    frame.
    """
    if wild.source != Source.IN_THE_WILD:
        raise ValueError("wild trajectory must be an in-the-wild capture")
    if scene.source != Source.IN_SCENE:
        raise ValueError("anchor trajectory must be the in-scene capture")
    T, delta, theta = alignment_transform(wild, scene, mode)
    aligned = wild.replace(
        objects=T.apply(wild.objects),
        fingertips=T.apply(wild.fingertips),
        frame_of_reference=FrameOfReference.ROBOT_BASE,
    )
    return AlignmentResult(delta, theta, mode, aligned, T)


def shift_trajectory(traj: Trajectory, offset) -> Trajectory:
    """Translate a world-frame capture into the robot frame without any anchor.

    A zero offset simply relabels the frame; the wild-only baselines use it.
    """
    offset = np.asarray(offset, dtype=float)
    return traj.replace(objects=traj.objects + offset, fingertips=traj.fingertips + offset,
                        frame_of_reference=FrameOfReference.ROBOT_BASE)
