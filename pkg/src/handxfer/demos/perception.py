"""Ingestion of externally produced perception outputs into 3D trajectories.

A bundle directory holds::

    bundle.json           frame_count, timestamps, rate_hz, task_name, prompts
    tracks.csv            frame,id,u,v,visible   (pixels of the tracking camera)
    grid.json             kind (depth|disparity), width, height, fx, fy, cx, cy[, baseline]
    grid_0000.f32 ...     raw little-endian float32 grids, row-major height x width
    pose_0000.json ...    {"matrix": 4x4 row-major camera-to-reference transform}
    hands.json            {"kind": "fingertips_3d", "fingertips": T x 5 x 3}
                          or {"kind": "two_view", "cameras": [cam, cam], "pixels": [T x 5 x 2, T x 5 x 2]}

:func:`render_bundle` goes the other way and is used to build noise-free
bundles from known trajectories.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import AllPointsInvisible, BundleError, FrameCountMismatch, MissingDepth
from ..geom3d import (
    PinholeCamera,
    RigidTransform,
    depth_to_disparity,
    disparity_to_depth,
    project,
    project_reference,
    transform_points,
    triangulate,
    unproject,
)
from .model import DEFAULT_RATE_HZ, FrameOfReference, Source, Trajectory

MODES = ("stereo_disparity", "direct_depth")


@dataclass
class PerceptionBundle:
    timestamps: np.ndarray            # (T,)
    tracks_uv: np.ndarray             # (T, N, 2)
    visible: np.ndarray               # (T, N) bool
    grid_kind: str                    # "depth" or "disparity"
    grids: np.ndarray                 # (T, H, W)
    camera: PinholeCamera             # intrinsics of the tracking camera; pose unused
    camera_poses: list[RigidTransform]
    baseline: float | None = None
    fingertips_3d: np.ndarray | None = None        # (T, 5, 3)
    hand_cameras: tuple[PinholeCamera, PinholeCamera] | None = None
    hand_pixels: tuple[np.ndarray, np.ndarray] | None = None  # 2 x (T, 5, 2)
    rate_hz: float = DEFAULT_RATE_HZ
    task_name: str = ""
    prompts: tuple[str, ...] = ()

    @property
    def frame_count(self) -> int:
        return len(self.timestamps)

    def check_consistent(self) -> None:
        T = self.frame_count
        counts = {
            "tracks": self.tracks_uv.shape[0],
            "visibility": self.visible.shape[0],
            "grids": self.grids.shape[0],
            "poses": len(self.camera_poses),
        }
        if self.fingertips_3d is not None:
            counts["hands"] = len(self.fingertips_3d)
        if self.hand_pixels is not None:
            counts["hand_view_a"] = len(self.hand_pixels[0])
            counts["hand_view_b"] = len(self.hand_pixels[1])
        bad = {k: v for k, v in counts.items() if v != T}
        if bad:
            raise FrameCountMismatch(f"bundle has {T} frames but {bad}")
        if self.fingertips_3d is None and self.hand_pixels is None:
            raise BundleError("bundle carries no hand observations")


def _bilinear_depth(grid: np.ndarray, u: float, v: float, to_depth) -> float:
    H, W = grid.shape
    if not (0.0 <= u <= W - 1 and 0.0 <= v <= H - 1):
        raise MissingDepth(f"track pixel ({u:.2f}, {v:.2f}) outside {W}x{H} grid")
    x0 = min(int(np.floor(u)), W - 2) if W > 1 else 0
    y0 = min(int(np.floor(v)), H - 2) if H > 1 else 0
    ax, ay = u - x0, v - y0
    total = 0.0
    for dy, wy in ((0, 1 - ay), (1, ay)):
        for dx, wx in ((0, 1 - ax), (1, ax)):
            w = wx * wy
            if w == 0.0:
                continue
            raw = float(grid[y0 + dy, x0 + dx])
            if not np.isfinite(raw):
                raise MissingDepth(f"no depth near pixel ({u:.2f}, {v:.2f})")
            total += w * to_depth(raw)
    return total


def ingest(bundle: PerceptionBundle, mode: str = "direct_depth",
           frame_of_reference: FrameOfReference = FrameOfReference.ROBOT_BASE) -> Trajectory:
    """Lift 2D tracks to 3D and attach hand poses, one frame at a time.

    Points hidden in a frame keep their last visible 3D position; points
    hidden from the start take their first visible position.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    bundle.check_consistent()
    if bundle.frame_count < 2:
        raise BundleError("a trajectory needs at least 2 frames")
    cam = bundle.camera
    if mode == "stereo_disparity":
        if bundle.grid_kind != "disparity" or bundle.baseline is None:
            raise BundleError("stereo_disparity mode needs a disparity grid and a baseline")

        def to_depth(d):
            return disparity_to_depth(cam.fx, bundle.baseline, d)
    else:
        if bundle.grid_kind != "depth":
            raise BundleError("direct_depth mode needs a depth grid")

        def to_depth(z):
            if not z > 0:
                raise MissingDepth("non-positive depth in grid")
            return z

    T, N = bundle.visible.shape
    points = np.full((T, N, 3), np.nan)
    seen = np.zeros(N, dtype=bool)
    for t in range(T):
        vis = np.asarray(bundle.visible[t], dtype=bool)
        if np.any(vis):
            uv = bundle.tracks_uv[t, vis]
            Z = np.array([_bilinear_depth(bundle.grids[t], u, v, to_depth) for u, v in uv])
            cam_pts = unproject(cam, uv, Z)
            points[t, vis] = transform_points(bundle.camera_poses[t], cam_pts)
        carry = ~vis & seen
        if t > 0:
            points[t, carry] = points[t - 1, carry]
        seen |= vis
    if not np.all(seen):
        missing = np.flatnonzero(~seen)
        raise AllPointsInvisible(f"tracks {missing.tolist()} are never visible")
    for n in range(N):
        first = int(np.argmax(bundle.visible[:, n]))
        points[:first, n] = points[first, n]

    if bundle.fingertips_3d is not None:
        hands = np.asarray(bundle.fingertips_3d, dtype=float)
    else:
        camA, camB = bundle.hand_cameras
        pa, pb = bundle.hand_pixels
        hands = np.array([[triangulate(camA, camB, pa[t, k], pb[t, k]) for k in range(5)]
                          for t in range(T)])
    frame = FrameOfReference(frame_of_reference)
    source = Source.IN_SCENE if frame == FrameOfReference.ROBOT_BASE else Source.IN_THE_WILD
    return Trajectory(bundle.timestamps, points, hands, source, frame,
                      bundle.task_name, bundle.prompts, bundle.rate_hz)


def render_bundle(traj: Trajectory, camera: PinholeCamera, camera_poses, width: int, height: int,
                  kind: str = "depth", baseline: float | None = None, hand_cameras=None,
                  visible=None) -> PerceptionBundle:
    """Synthesise noise-free perception outputs for a known trajectory.

    Each visible track writes its depth (or disparity) into the 2x2 pixel
    block that bilinear lookup reads, so ingestion recovers it exactly up to
    float32 storage. Raises ``ValueError`` when two tracks claim one pixel
    with different values or a point leaves the image.
    """
    T, N = traj.n_frames, traj.n_points
    grids = np.full((T, height, width), np.nan, dtype=np.float32)
    uvs = np.empty((T, N, 2))
    vis = np.ones((T, N), dtype=bool) if visible is None else np.asarray(visible, dtype=bool)
    for t in range(T):
        pose = camera_poses[t]
        cam_pts = transform_points(pose.inverse(), traj.objects[t])
        uv = project(camera, cam_pts)
        uvs[t] = uv
        for n in np.flatnonzero(vis[t]):
            u, v = uv[n]
            if not (0 <= u < width - 1 and 0 <= v < height - 1):
                raise ValueError(f"frame {t} point {n} projects outside the image")
            Z = cam_pts[n, 2]
            value = Z if kind == "depth" else depth_to_disparity(camera.fx, baseline, Z)
            x0, y0 = int(np.floor(u)), int(np.floor(v))
            block = grids[t, y0:y0 + 2, x0:x0 + 2]
            taken = np.isfinite(block) & (block != np.float32(value))
            if np.any(taken):
                raise ValueError(f"frame {t} point {n} collides with another track")
            block[...] = value
    if hand_cameras is None:
        return PerceptionBundle(traj.timestamps.copy(), uvs, vis, kind, grids, camera,
                                list(camera_poses), baseline, fingertips_3d=traj.fingertips.copy(),
                                rate_hz=traj.rate_hz, task_name=traj.task_name, prompts=traj.prompts)
    camA, camB = hand_cameras
    pa = np.stack([project_reference(camA, f) for f in traj.fingertips])
    pb = np.stack([project_reference(camB, f) for f in traj.fingertips])
    return PerceptionBundle(traj.timestamps.copy(), uvs, vis, kind, grids, camera,
                            list(camera_poses), baseline, hand_cameras=(camA, camB),
                            hand_pixels=(pa, pb), rate_hz=traj.rate_hz,
                            task_name=traj.task_name, prompts=traj.prompts)


def _camera_dict(cam: PinholeCamera) -> dict:
    return {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
            "pose": cam.pose.as_matrix().tolist()}


def _camera_from(d: dict) -> PinholeCamera:
    pose = RigidTransform.from_matrix(d["pose"]) if "pose" in d else RigidTransform()
    return PinholeCamera(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]), pose)


def save_bundle(bundle: PerceptionBundle, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    T, N = bundle.visible.shape
    (out / "bundle.json").write_text(json.dumps({
        "frame_count": T, "timestamps": bundle.timestamps.tolist(), "rate_hz": bundle.rate_hz,
        "task_name": bundle.task_name, "prompts": list(bundle.prompts)}, indent=1))
    with open(out / "tracks.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "id", "u", "v", "visible"])
        for t in range(T):
            for n in range(N):
                u, v = bundle.tracks_uv[t, n]
                w.writerow([t, n, repr(float(u)), repr(float(v)), int(bundle.visible[t, n])])
    H, W = bundle.grids.shape[1:]
    header = {"kind": bundle.grid_kind, "width": W, "height": H, "fx": bundle.camera.fx,
              "fy": bundle.camera.fy, "cx": bundle.camera.cx, "cy": bundle.camera.cy}
    if bundle.baseline is not None:
        header["baseline"] = bundle.baseline
    (out / "grid.json").write_text(json.dumps(header, indent=1))
    for t in range(T):
        (out / f"grid_{t:04d}.f32").write_bytes(bundle.grids[t].astype("<f4").tobytes())
        (out / f"pose_{t:04d}.json").write_text(
            json.dumps({"matrix": bundle.camera_poses[t].as_matrix().tolist()}))
    if bundle.fingertips_3d is not None:
        hands = {"kind": "fingertips_3d", "fingertips": np.asarray(bundle.fingertips_3d).tolist()}
    else:
        hands = {"kind": "two_view", "cameras": [_camera_dict(c) for c in bundle.hand_cameras],
                 "pixels": [np.asarray(p).tolist() for p in bundle.hand_pixels]}
    (out / "hands.json").write_text(json.dumps(hands))
    return out


def _read_json(path: Path, what: str) -> dict:
    if not path.exists():
        raise BundleError(f"missing {what} ({path.name})")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise BundleError(f"unreadable {what} ({path.name}): {exc}") from exc


def load_bundle(bundle_dir) -> PerceptionBundle:
    """Read a bundle directory. Frame-count disagreements surface at :func:`ingest`."""
    root = Path(bundle_dir)
    if not root.is_dir():
        raise BundleError(f"bundle directory {root} does not exist")
    meta = _read_json(root / "bundle.json", "bundle metadata")
    header = _read_json(root / "grid.json", "depth header")
    T = int(meta["frame_count"])
    W, H = int(header["width"]), int(header["height"])
    camera = PinholeCamera(float(header["fx"]), float(header["fy"]),
                           float(header["cx"]), float(header["cy"]))

    if not (root / "tracks.csv").exists():
        raise BundleError("missing tracks.csv")
    rows = []
    with open(root / "tracks.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((int(row["frame"]), int(row["id"]), float(row["u"]), float(row["v"]),
                         bool(int(row["visible"]))))
    track_frames = 1 + max((r[0] for r in rows), default=-1)
    N = 1 + max((r[1] for r in rows), default=-1)
    uv = np.full((track_frames, N, 2), np.nan)
    vis = np.zeros((track_frames, N), dtype=bool)
    for f, i, u, v, visible in rows:
        uv[f, i] = (u, v)
        vis[f, i] = visible

    grid_files = sorted(root.glob("grid_*.f32"))
    grids = np.empty((len(grid_files), H, W), dtype=np.float32)
    for k, path in enumerate(grid_files):
        raw = np.frombuffer(path.read_bytes(), dtype="<f4")
        if raw.size != W * H:
            raise BundleError(f"{path.name} holds {raw.size} values, header says {W}x{H}")
        grids[k] = raw.reshape(H, W)
    poses = [RigidTransform.from_matrix(json.loads(p.read_text())["matrix"])
             for p in sorted(root.glob("pose_*.json"))]

    hands = _read_json(root / "hands.json", "hand observations")
    tips = cams = pix = None
    if hands["kind"] == "fingertips_3d":
        tips = np.asarray(hands["fingertips"], dtype=float)
    elif hands["kind"] == "two_view":
        cams = tuple(_camera_from(c) for c in hands["cameras"])
        pix = tuple(np.asarray(p, dtype=float) for p in hands["pixels"])
    else:
        raise BundleError(f"unknown hand observation kind {hands['kind']!r}")

    timestamps = np.asarray(meta.get("timestamps", np.arange(T) / DEFAULT_RATE_HZ), dtype=float)
    if len(timestamps) != T:
        raise FrameCountMismatch(f"bundle.json lists {len(timestamps)} timestamps for {T} frames")
    return PerceptionBundle(timestamps, uv, vis, header["kind"], grids, camera, poses,
                            header.get("baseline"), tips, cams, pix,
                            float(meta.get("rate_hz", DEFAULT_RATE_HZ)),
                            meta.get("task_name", ""), tuple(meta.get("prompts", ())))
