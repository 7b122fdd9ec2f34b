"""Arm and hand kinematics: chain description, forward kinematics, IK and grasp tightening.

The chain is a tree of revolute joints. Each joint carries a fixed
parent-to-joint transform and a rotation axis in its own frame; fingertips are
fixed frames hung off hand joints. Joint order in a :class:`KinematicChain`
is the order of the angle vector.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import JointLimitViolation, ShapeMismatch
from .geom3d import axis_angle_matrix

CHAIN_FORMAT_VERSION = 1
FINGER_NAMES = ("thumb", "index", "middle", "ring", "pinky")


@dataclass(frozen=True)
class Joint:
    name: str
    parent: str | None
    axis: np.ndarray
    origin: np.ndarray
    limits: tuple[float, float]


@dataclass(frozen=True)
class KinematicChain:
    joints: tuple[Joint, ...]
    fingertips: tuple[tuple[str, str, np.ndarray], ...]
    home: np.ndarray
    arm_dof: int = 7
    hand_dof: int = 6
    name: str = "chain"
    _paths: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = [j.name for j in self.joints]
        if len(set(names)) != len(names):
            raise ValueError("joint names must be unique")
        if len(self.joints) != self.arm_dof + self.hand_dof:
            raise ValueError(f"expected {self.arm_dof + self.hand_dof} joints, got {len(self.joints)}")
        index = {n: i for i, n in enumerate(names)}
        for i, j in enumerate(self.joints):
            lo, hi = j.limits
            if not lo < hi:
                raise ValueError(f"joint {j.name}: limits must satisfy lo < hi")
            if j.parent is not None and index.get(j.parent, len(names)) >= i:
                raise ValueError(f"joint {j.name}: parent must be declared earlier")
        if [f[0] for f in self.fingertips] != list(FINGER_NAMES):
            raise ValueError(f"fingertips must be {FINGER_NAMES} in order")
        paths = []
        for _, parent, _ in self.fingertips:
            path = []
            cur = parent
            while cur is not None:
                k = index[cur]
                path.append(k)
                cur = self.joints[k].parent
            paths.append(tuple(reversed(path)))
        object.__setattr__(self, "_paths", tuple(paths))
        object.__setattr__(self, "home", np.asarray(self.home, dtype=float))

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def lower(self) -> np.ndarray:
        return np.array([j.limits[0] for j in self.joints])

    @property
    def upper(self) -> np.ndarray:
        return np.array([j.limits[1] for j in self.joints])

    def finger_joints(self, finger: str) -> tuple[int, ...]:
        """Indices of the joints that only move ``finger``."""
        k = FINGER_NAMES.index(finger)
        others = set()
        for i, p in enumerate(self._paths):
            if i != k:
                others.update(p)
        return tuple(j for j in self._paths[k] if j not in others)

    def clamp(self, J) -> np.ndarray:
        return np.clip(np.asarray(J, dtype=float), self.lower, self.upper)

    def within_limits(self, J, tol: float = 0.0) -> bool:
        J = np.asarray(J, dtype=float)
        return bool(np.all(J >= self.lower - tol) and np.all(J <= self.upper + tol))

    # -- serialisation -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "version": CHAIN_FORMAT_VERSION,
            "name": self.name,
            "arm_dof": self.arm_dof,
            "hand_dof": self.hand_dof,
            "joints": [
                {"name": j.name, "parent": j.parent, "axis": j.axis.tolist(),
                 "origin": j.origin.tolist(), "limits": list(j.limits)}
                for j in self.joints
            ],
            "fingertips": [
                {"name": n, "parent": p, "origin": o.tolist()} for n, p, o in self.fingertips
            ],
            "home": self.home.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KinematicChain":
        if data.get("version") != CHAIN_FORMAT_VERSION:
            raise ValueError(f"unsupported chain file version {data.get('version')!r}")
        joints = []
        for j in data["joints"]:
            axis = np.asarray(j["axis"], dtype=float)
            axis = axis / np.linalg.norm(axis)
            origin = np.asarray(j["origin"], dtype=float)
            if origin.shape != (4, 4):
                raise ValueError(f"joint {j['name']}: origin must be 4x4")
            lo, hi = j["limits"]
            joints.append(Joint(j["name"], j["parent"], axis, origin, (float(lo), float(hi))))
        tips = tuple((f["name"], f["parent"], np.asarray(f["origin"], dtype=float))
                     for f in data["fingertips"])
        return cls(tuple(joints), tips, np.asarray(data["home"], dtype=float),
                   data.get("arm_dof", 7), data.get("hand_dof", 6), data.get("name", "chain"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "KinematicChain":
        return cls.from_dict(json.loads(Path(path).read_text()))


def reference_chain() -> KinematicChain:
    """The bundled 7-DOF arm + 6-DOF five-finger hand description."""
    text = resources.files("handxfer").joinpath("data/reference_chain.json").read_text()
    return KinematicChain.from_dict(json.loads(text))


def _check_state(chain: KinematicChain, J) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    if J.shape != (chain.dof,):
        raise ShapeMismatch(f"joint state must have {chain.dof} entries, got {J.shape}")
    return J


def joint_frames(chain: KinematicChain, J) -> np.ndarray:
    """World 4x4 frame of every joint after applying its rotation."""
    J = _check_state(chain, J)
    frames = np.empty((chain.dof, 4, 4))
    index = {}
    for i, joint in enumerate(chain.joints):
        parent = np.eye(4) if joint.parent is None else frames[index[joint.parent]]
        local = joint.origin.copy()
        local[:3, :3] = local[:3, :3] @ axis_angle_matrix(joint.axis, J[i])
        frames[i] = parent @ local
        index[joint.name] = i
    return frames


def fk(chain: KinematicChain, J, strict: bool = False) -> np.ndarray:
    """Fingertip positions (5x3, thumb first) in the robot base frame."""
    J = _check_state(chain, J)
    if strict and not chain.within_limits(J):
        raise JointLimitViolation("joint state outside chain limits")
    frames = joint_frames(chain, J)
    names = [j.name for j in chain.joints]
    out = np.empty((5, 3))
    for k, (_, parent, origin) in enumerate(chain.fingertips):
        out[k] = (frames[names.index(parent)] @ origin)[:3, 3]
    return out


def jacobian(chain: KinematicChain, J) -> tuple[np.ndarray, np.ndarray]:
    """Fingertip positions and the analytic 15x13 position Jacobian.

    For a revolute joint with world axis ``w`` through point ``o``, a tip at
    ``p`` on its subtree moves with ``w x (p - o)``.
    """
    frames = joint_frames(chain, J)
    names = [j.name for j in chain.joints]
    axes = np.einsum("jab,jb->ja", frames[:, :3, :3], np.array([j.axis for j in chain.joints]))
    tips = np.empty((5, 3))
    Jac = np.zeros((15, chain.dof))
    for k, (_, parent, origin) in enumerate(chain.fingertips):
        p = (frames[names.index(parent)] @ origin)[:3, 3]
        tips[k] = p
        path = list(chain._paths[k])
        w, r = axes[path], p - frames[path, :3, 3]
        Jac[3 * k:3 * k + 3, path] = np.stack([
            w[:, 1] * r[:, 2] - w[:, 2] * r[:, 1],
            w[:, 2] * r[:, 0] - w[:, 0] * r[:, 2],
            w[:, 0] * r[:, 1] - w[:, 1] * r[:, 0],
        ])
    return tips, Jac


def numeric_jacobian(chain: KinematicChain, J, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of :func:`fk`, used to cross-check the analytic one."""
    J = _check_state(chain, J)
    Jac = np.empty((15, chain.dof))
    for j in range(chain.dof):
        e = np.zeros(chain.dof)
        e[j] = h
        Jac[:, j] = (fk(chain, J + e) - fk(chain, J - e)).ravel() / (2 * h)
    return Jac


def rms_error(a, b) -> float:
    """Root mean square of per-fingertip distances."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.sqrt(np.mean(np.sum(d * d, axis=-1))))


@dataclass(frozen=True)
class IKOptions:
    tol_rms: float = 1e-4
    max_iters: int = 200
    regularization: float = 1e-3
    damping_init: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 2.0
    damping_max: float = 1e8


@dataclass
class IKReport:
    converged: bool
    residual_rms: float
    iterations: int
    residual_history: list[float]


def ik(chain: KinematicChain, F_target, J_current, opts: IKOptions | None = None
       ) -> tuple[np.ndarray, IKReport]:
    """Damped least-squares IK for all five fingertips at once.

    Each iteration solves ``(A^T A + lam I) dq = A^T e`` on the stacked
    fingertip Jacobian, adds a pull toward ``J_current`` projected into the
    (damped) null space of the Jacobian, and clamps to joint limits. A step is
    accepted only if it lowers the fingertip residual; otherwise the damping
    grows and the step is retried, so accepted residuals never increase.
    Non-convergence is reported, never raised; the best iterate is returned.
    """
    opts = opts or IKOptions()
    target = np.asarray(F_target, dtype=float).reshape(5, 3)
    J0 = chain.clamp(_check_state(chain, J_current))
    q = J0.copy()
    tips, A = jacobian(chain, q)
    err = (target - tips).ravel()
    cost = float(err @ err)
    history = [np.sqrt(cost / 5)]
    lam = opts.damping_init
    n = chain.dof
    iters = 0
    while history[-1] >= opts.tol_rms and iters < opts.max_iters:
        iters += 1
        AtA = A.T @ A
        M = AtA + lam * np.eye(n)
        step = np.linalg.solve(M, A.T @ err)
        if opts.regularization > 0:
            # null-space pull toward the warm start; vanishes where A has full column rank
            null = np.eye(n) - np.linalg.solve(M, AtA)
            step = step + null @ (opts.regularization * (J0 - q))
        q_new = chain.clamp(q + step)
        tips_new, A_new = jacobian(chain, q_new)
        err_new = (target - tips_new).ravel()
        cost_new = float(err_new @ err_new)
        if cost_new < cost:
            q, A, err, cost = q_new, A_new, err_new, cost_new
            history.append(np.sqrt(cost / 5))
            lam = max(lam / opts.damping_down, 1e-12)
        else:
            lam *= opts.damping_up
            if lam > opts.damping_max:
                break
    rms = history[-1]
    return q, IKReport(rms < opts.tol_rms, rms, iters, history)


def grasp_adjust(F_pred, threshold: float = 0.05, pull: float = 0.4) -> np.ndarray:
    """Tighten a predicted grasp when fingers come close to the thumb.

    Every non-thumb tip closer than ``threshold`` to the thumb moves ``pull``
    of the thumb-finger gap toward the thumb; the thumb moves by the mean of
    the matching pulls toward those fingers. Tips at or beyond the threshold
    are untouched.
    """
    F = np.array(F_pred, dtype=float).reshape(5, 3)
    thumb = F[0].copy()
    shifts = []
    for k in range(1, 5):
        gap = F[k] - thumb
        if np.linalg.norm(gap) < threshold:
            F[k] = F[k] - pull * gap
            shifts.append(pull * gap)
    if shifts:
        F[0] = thumb + np.mean(shifts, axis=0)
    return F


def grasp_condition(F, threshold: float = 0.05) -> bool:
    """True when any finger is within ``threshold`` of the thumb."""
    F = np.asarray(F, dtype=float).reshape(5, 3)
    return bool(np.any(np.linalg.norm(F[1:] - F[0], axis=1) < threshold))
