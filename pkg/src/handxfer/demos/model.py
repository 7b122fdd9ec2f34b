"""In-memory demonstration types.

Arrays are float64 and frozen (read-only) once a :class:`Trajectory` exists.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InvalidTrajectory, ShapeMismatch

FINGERTIPS = 5
DEFAULT_RATE_HZ = 10.0


class Source(enum.IntEnum):
    IN_THE_WILD = 0
    IN_SCENE = 1


class FrameOfReference(enum.IntEnum):
    WORLD_GRAVITY_ALIGNED = 0
    ROBOT_BASE = 1


FRAME_FOR_SOURCE = {
    Source.IN_THE_WILD: FrameOfReference.WORLD_GRAVITY_ALIGNED,
    Source.IN_SCENE: FrameOfReference.ROBOT_BASE,
}
# raw captures use FRAME_FOR_SOURCE; aligned wild data moves into the robot base frame
ALLOWED_FRAMES = {
    Source.IN_THE_WILD: (FrameOfReference.WORLD_GRAVITY_ALIGNED, FrameOfReference.ROBOT_BASE),
    Source.IN_SCENE: (FrameOfReference.ROBOT_BASE,),
}


def _frozen(a, dtype=np.float64) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Trajectory:
    """Timestamped object points (T, N, 3) and fingertips (T, 5, 3).

    Structural invariants (shapes, frame count, source/frame pairing, strictly
    increasing timestamps) are enforced here. Numeric sanity such as
    finiteness is left to :func:`handxfer.demos.validate` so that corrupt data
    can still be loaded and reported on.
    """

    timestamps: np.ndarray
    objects: np.ndarray
    fingertips: np.ndarray
    source: Source
    frame_of_reference: FrameOfReference
    task_name: str = ""
    prompts: tuple[str, ...] = ()
    rate_hz: float = DEFAULT_RATE_HZ

    def __post_init__(self):
        ts = _frozen(self.timestamps)
        obj = _frozen(self.objects)
        tips = _frozen(self.fingertips)
        if ts.ndim != 1:
            raise ShapeMismatch("timestamps must be one-dimensional")
        T = ts.shape[0]
        if T < 2:
            raise InvalidTrajectory("a trajectory needs at least 2 frames")
        if obj.ndim != 3 or obj.shape[0] != T or obj.shape[2] != 3 or obj.shape[1] < 1:
            raise ShapeMismatch(f"objects must be ({T}, N, 3), got {obj.shape}")
        if tips.shape != (T, FINGERTIPS, 3):
            raise ShapeMismatch(f"fingertips must be ({T}, 5, 3), got {tips.shape}")
        if np.any(np.diff(ts) <= 0):
            raise InvalidTrajectory("timestamps must be strictly increasing")
        source = Source(self.source)
        frame = FrameOfReference(self.frame_of_reference)
        if frame not in ALLOWED_FRAMES[source]:
            raise InvalidTrajectory(f"{source.name} data cannot be in {frame.name}")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "objects", obj)
        object.__setattr__(self, "fingertips", tips)
        object.__setattr__(self, "source", source)
        object.__setattr__(self, "frame_of_reference", frame)
        object.__setattr__(self, "prompts", tuple(str(p) for p in self.prompts))
        object.__setattr__(self, "rate_hz", float(self.rate_hz))

    @property
    def n_frames(self) -> int:
        return self.timestamps.shape[0]

    @property
    def n_points(self) -> int:
        return self.objects.shape[1]

    @property
    def aligned(self) -> bool:
        return self.frame_of_reference == FrameOfReference.ROBOT_BASE

    def replace(self, **changes) -> "Trajectory":
        return replace(self, **changes)

    def equals(self, other: "Trajectory") -> bool:
        """Exact equality, including every array bit."""
        return (
            self.source == other.source
            and self.frame_of_reference == other.frame_of_reference
            and self.task_name == other.task_name
            and self.prompts == other.prompts
            and self.rate_hz == other.rate_hz
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.objects, other.objects, equal_nan=True)
            and np.array_equal(self.fingertips, other.fingertips, equal_nan=True)
        )


@dataclass
class Dataset:
    """One in-scene anchor plus any number of in-the-wild demonstrations."""

    in_scene: Trajectory
    in_the_wild: list[Trajectory] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.in_scene.n_points

    @property
    def trajectories(self) -> list[Trajectory]:
        return [self.in_scene, *self.in_the_wild]

    def __len__(self) -> int:
        return 1 + len(self.in_the_wild)
