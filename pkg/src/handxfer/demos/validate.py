"""Dataset sanity checks that report violations instead of raising."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ALLOWED_FRAMES, Dataset, Source, Trajectory

HAND_SPAN_LIMIT = 0.4


@dataclass(frozen=True)
class Violation:
    trajectory: str  # "in_scene" or "in_the_wild[i]"
    frame: int | None
    kind: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> list[str]:
        return [v.kind for v in self.violations]

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": [v.__dict__ for v in self.violations]}


def _check_trajectory(label: str, traj: Trajectory, expected_source: Source, N: int,
                      out: list[Violation]) -> None:
    if traj.source != expected_source:
        out.append(Violation(label, None, "source", f"expected {expected_source.name}, got {traj.source.name}"))
    if traj.frame_of_reference not in ALLOWED_FRAMES[traj.source]:
        out.append(Violation(label, None, "frame_of_reference",
                             f"{traj.source.name} paired with {traj.frame_of_reference.name}"))
    if traj.n_frames < 2:
        out.append(Violation(label, None, "frame_count", "fewer than 2 frames"))
    if traj.n_points != N:
        out.append(Violation(label, None, "n_consistency", f"N={traj.n_points}, dataset N={N}"))
    if not np.all(np.isfinite(traj.timestamps)):
        out.append(Violation(label, None, "finiteness", "non-finite timestamp"))
    elif np.any(np.diff(traj.timestamps) <= 0):
        bad = int(np.argmax(np.diff(traj.timestamps) <= 0)) + 1
        out.append(Violation(label, bad, "timestamps", "timestamps not strictly increasing"))
    finite = np.isfinite(traj.objects).all(axis=(1, 2)) & np.isfinite(traj.fingertips).all(axis=(1, 2))
    for t in np.flatnonzero(~finite):
        out.append(Violation(label, int(t), "finiteness", "non-finite point coordinates"))
    tips = traj.fingertips
    span = np.linalg.norm(tips[:, :, None, :] - tips[:, None, :, :], axis=-1).max(axis=(1, 2))
    for t in np.flatnonzero(finite & (span >= HAND_SPAN_LIMIT)):
        out.append(Violation(label, int(t), "hand_span",
                             f"fingertips {span[t]:.3f} m apart (limit {HAND_SPAN_LIMIT} m)"))


def validate(dataset: Dataset) -> ValidationReport:
    """Check every type invariant of a dataset; the report lists what failed and where."""
    out: list[Violation] = []
    N = dataset.in_scene.n_points
    _check_trajectory("in_scene", dataset.in_scene, Source.IN_SCENE, N, out)
    for i, traj in enumerate(dataset.in_the_wild):
        _check_trajectory(f"in_the_wild[{i}]", traj, Source.IN_THE_WILD, N, out)
    return ValidationReport(out)
