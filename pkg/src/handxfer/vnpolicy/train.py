"""Windowing, augmentation, loss and the supervised training loop."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch

from ..demos.model import Dataset, FrameOfReference, Trajectory
from ..errors import EmptyDataset, NonAlignedInput, ShapeMismatch
from ..geom3d import rot_z
from .config import PolicyConfig
from .model import PolicyModel, build_model, single_thread

log = logging.getLogger(__name__)

TRANSLATION_RANGE = 0.30
SCALE_RANGE = (0.8, 1.2)
YAW_RANGE = math.radians(60.0)
NOISE_SIGMA = 0.01
NOISE_CLIP = 0.02


@dataclass
class TrainingSample:
    input_objects: np.ndarray     # (T_o, N, 3)
    input_fingertips: np.ndarray  # (T_o, 5, 3)
    target_fingertips: np.ndarray  # (T_p, 5, 3)


@dataclass(frozen=True)
class AugmentationSample:
    translation: np.ndarray
    scale: float
    yaw: float
    fingertip_noise: np.ndarray  # (T_o, 5, 3)

    @classmethod
    def draw(cls, rng: np.random.Generator, T_o: int) -> "AugmentationSample":
        t = rng.uniform(-TRANSLATION_RANGE, TRANSLATION_RANGE, size=3)
        s = float(rng.uniform(*SCALE_RANGE))
        yaw = float(rng.uniform(-YAW_RANGE, YAW_RANGE))
        noise = np.clip(rng.normal(0.0, NOISE_SIGMA, size=(T_o, 5, 3)), -NOISE_CLIP, NOISE_CLIP)
        return cls(t, s, yaw, noise)

    @classmethod
    def identity(cls, T_o: int) -> "AugmentationSample":
        return cls(np.zeros(3), 1.0, 0.0, np.zeros((T_o, 5, 3)))


def windows(traj: Trajectory, T_o: int, T_p: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All stride-1 windows of one trajectory.

    Window ``t`` (for ``t = 0 .. T-2``) observes frames ``t-T_o+1 .. t`` and
    targets frames ``t+1 .. t+T_p``. Indices before the first frame repeat
    frame 0 and indices past the end repeat the final frame.
    """
    T = traj.n_frames
    t = np.arange(T - 1)[:, None]
    hist = np.clip(t + np.arange(-T_o + 1, 1), 0, T - 1)
    fut = np.clip(t + np.arange(1, T_p + 1), 0, T - 1)
    return traj.objects[hist], traj.fingertips[hist], traj.fingertips[fut]


def dataset_windows(trajectories, T_o: int, T_p: int):
    parts = [windows(tr, T_o, T_p) for tr in trajectories]
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


def _similarity(aug: AugmentationSample, pivot) -> tuple[np.ndarray, np.ndarray]:
    """Matrix ``A`` and offset ``b`` of ``p -> A p + b``."""
    A = aug.scale * rot_z(aug.yaw)
    pivot = np.zeros(3) if pivot is None else np.asarray(pivot, dtype=float)
    return A, aug.translation + pivot - A @ pivot


def augment(sample: TrainingSample, rng: np.random.Generator | None = None,
            draw: AugmentationSample | None = None, pivot: str = "origin") -> TrainingSample:
    """Apply one random similarity to inputs and targets, then noise the input fingertips.

    The map is translate . scale . yaw (about the robot-frame origin, or the
    centroid of the latest observed object points when ``pivot="centroid"``).
    Target fingertips are transformed but never noised.
    """
    T_o = sample.input_fingertips.shape[0]
    aug = draw if draw is not None else AugmentationSample.draw(rng, T_o)
    centre = sample.input_objects[-1].mean(axis=0) if pivot == "centroid" else None
    A, b = _similarity(aug, centre)
    return TrainingSample(
        sample.input_objects @ A.T + b,
        sample.input_fingertips @ A.T + b + aug.fingertip_noise,
        sample.target_fingertips @ A.T + b,
    )


def augment_batch(obj, tips, target, rng: np.random.Generator, pivot: str = "origin"):
    """Vectorised :func:`augment` with an independent draw per sample."""
    B, T_o = tips.shape[:2]
    t = rng.uniform(-TRANSLATION_RANGE, TRANSLATION_RANGE, size=(B, 3))
    s = rng.uniform(*SCALE_RANGE, size=B)
    yaw = rng.uniform(-YAW_RANGE, YAW_RANGE, size=B)
    noise = np.clip(rng.normal(0.0, NOISE_SIGMA, size=(B, T_o, 5, 3)), -NOISE_CLIP, NOISE_CLIP)
    c, sn = np.cos(yaw), np.sin(yaw)
    A = np.zeros((B, 3, 3))
    A[:, 0, 0] = c
    A[:, 0, 1] = -sn
    A[:, 1, 0] = sn
    A[:, 1, 1] = c
    A[:, 2, 2] = 1.0
    A *= s[:, None, None]
    if pivot == "centroid":
        centre = obj[:, -1].mean(axis=1)
        b = t + centre - np.einsum("bij,bj->bi", A, centre)
    else:
        b = t
    At = A.transpose(0, 2, 1)[:, None]
    bb = b[:, None, None, :]
    return obj @ At + bb, tips @ At + bb + noise, target @ At + bb


def mse_loss(pred, target):
    """Mean of squared differences over every scalar element."""
    if tuple(pred.shape) != tuple(target.shape):
        raise ShapeMismatch(f"prediction {tuple(pred.shape)} vs target {tuple(target.shape)}")
    if isinstance(pred, torch.Tensor):
        return ((pred - target) ** 2).mean()
    d = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return float(np.mean(d * d))


def _tensor(a) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(a, dtype=np.float64))


def batch_loss(model: PolicyModel, batch) -> torch.Tensor:
    obj, tips, target = batch
    return mse_loss(model(_tensor(tips), _tensor(obj)), _tensor(target))


def gradients(model: PolicyModel, batch, scale: float = 1.0) -> dict[str, np.ndarray]:
    """Exact gradients of ``scale`` times the mean batch loss, keyed by parameter name."""
    model.zero_grad(set_to_none=True)
    with single_thread():
        loss = scale * batch_loss(model, batch)
        loss.backward()
    grads = {n: (p.grad.detach().numpy().copy() if p.grad is not None else np.zeros(tuple(p.shape)))
             for n, p in model.named_parameters()}
    model.zero_grad(set_to_none=True)
    return grads


def loss_value(model: PolicyModel, batch) -> float:
    with torch.no_grad(), single_thread():
        return float(batch_loss(model, batch))


def check_aligned(trajectories) -> None:
    for tr in trajectories:
        if tr.frame_of_reference != FrameOfReference.ROBOT_BASE:
            raise NonAlignedInput("training data must be in the robot base frame; align it first")


@dataclass
class TrainingLog:
    epoch_loss: list[float]

    def to_dict(self) -> dict:
        return {"epoch_loss": self.epoch_loss}


def train(data, config: PolicyConfig, callback=None) -> tuple[PolicyModel, TrainingLog]:
    """Fit a policy by minibatch Adam on windowed, freshly augmented samples.

    ``data`` is an aligned :class:`Dataset` or a list of robot-frame
    trajectories. All randomness (initialisation, shuffling, augmentation)
    derives from ``config.seed``; the computation is single-threaded so the
    loss log is reproducible bit for bit.
    """
    trajectories = data.trajectories if isinstance(data, Dataset) else list(data)
    if not trajectories:
        raise EmptyDataset("no trajectories to train on")
    check_aligned(trajectories)
    if any(tr.n_points != config.N for tr in trajectories):
        raise ShapeMismatch(f"every trajectory must have N={config.N} object points")
    obj, tips, target = dataset_windows(trajectories, config.T_o, config.T_p)
    M = len(obj)
    model = build_model(config)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    with single_thread():
        opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
        history = []
        for epoch in range(config.epochs):
            order = rng.permutation(M)
            total = 0.0
            for start in range(0, M, config.batch_size):
                idx = order[start:start + config.batch_size]
                b_obj, b_tips, b_tgt = obj[idx], tips[idx], target[idx]
                if config.augment:
                    b_obj, b_tips, b_tgt = augment_batch(b_obj, b_tips, b_tgt, rng, config.augment_pivot)
                opt.zero_grad(set_to_none=True)
                loss = batch_loss(model, (b_obj, b_tips, b_tgt))
                loss.backward()
                opt.step()
                total += loss.item() * len(idx)
            history.append(total / M)
            if callback is not None:
                callback(epoch, history[-1])
            if epoch % 50 == 0 or epoch == config.epochs - 1:
                log.info("epoch %d loss %.6g", epoch, history[-1])
    model.eval()
    return model, TrainingLog(history)


def evaluate_mse(model: PolicyModel, trajectories, batch_size: int = 256) -> float:
    """Mean squared error over every window, without augmentation."""
    c = model.config
    obj, tips, target = dataset_windows(list(trajectories), c.T_o, c.T_p)
    total = 0.0
    with torch.no_grad(), single_thread():
        for s in range(0, len(obj), batch_size):
            sl = slice(s, s + batch_size)
            pred = model(_tensor(tips[sl]), _tensor(obj[sl]))
            total += float(((pred - _tensor(target[sl])) ** 2).sum())
    return total / target.size
