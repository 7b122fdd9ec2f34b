"""The point policy: per-point history tokens, transformer encoder, fingertip head."""
from __future__ import annotations

import contextlib

import numpy as np
import torch
from torch import nn

from ..errors import ShapeMismatch
from .config import PolicyConfig
from .layers import EncoderBlock, VNEncoder, mlp


@contextlib.contextmanager
def single_thread():
    """Pin torch to one intra-op thread so reductions run in a fixed order."""
    prev = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.set_num_threads(prev)


class PolicyModel(nn.Module):
    """Maps fingertip and object histories to a future fingertip trajectory.

    Inputs are ``fingertips`` (B, T_o, 5, 3) and ``objects`` (B, T_o, N, 3);
    the output is (B, T_p, 5, 3). Each of the N + 5 points becomes one token
    from its own history; only the five fingertip tokens get learned position
    embeddings, and a shared MLP reads the five fingertip output tokens.
    """

    def __init__(self, config: PolicyConfig):
        super().__init__()
        self.config = config
        c = config
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(c.seed)
            self.encoder = VNEncoder(c.T_o, c.vn_channels, c.token_dim)
            self.finger_pos = nn.Parameter(0.02 * torch.randn(5, c.token_dim))
            self.blocks = nn.ModuleList(
                EncoderBlock(c.token_dim, c.transformer.heads, c.transformer.feedforward_dim)
                for _ in range(c.transformer.layers))
            self.norm = nn.LayerNorm(c.token_dim)
            self.head = mlp([c.token_dim, *c.head_hidden, 3 * c.T_p])
        self.double()

    def tokens(self, fingertips, objects):
        # (B, T_o, P, 3) -> (B, P, T_o, 3): each point's history becomes its channels
        f = self.encoder(fingertips.transpose(1, 2)) + self.finger_pos
        o = self.encoder(objects.transpose(1, 2))
        return torch.cat([f, o], dim=1)

    def forward(self, fingertips, objects):
        c = self.config
        if fingertips.shape[1:] != (c.T_o, 5, 3):
            raise ShapeMismatch(f"fingertips must be (B, {c.T_o}, 5, 3), got {tuple(fingertips.shape)}")
        if objects.shape[1] != c.T_o or objects.shape[3] != 3 or objects.shape[0] != fingertips.shape[0]:
            raise ShapeMismatch(f"objects must be (B, {c.T_o}, N, 3), got {tuple(objects.shape)}")
        x = self.tokens(fingertips, objects)
        for block in self.blocks:
            x = block(x)
        x = self.norm(x[:, :5])
        out = self.head(x).reshape(-1, 5, c.T_p, 3).transpose(1, 2)
        if c.residual_head:
            out = out + fingertips[:, -1:, :, :]
        return out

    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_model(config: PolicyConfig) -> PolicyModel:
    return PolicyModel(config)


def encode_point_history(model: PolicyModel, history) -> np.ndarray:
    """Token for one point history of shape (T_o, 3)."""
    h = np.asarray(history, dtype=np.float64)
    if h.shape != (model.config.T_o, 3):
        raise ShapeMismatch(f"history must be ({model.config.T_o}, 3), got {h.shape}")
    with torch.no_grad():
        return model.encoder(torch.from_numpy(h)).numpy()


def vn_features(model: PolicyModel, history) -> np.ndarray:
    """Vector-neuron features of a history before the flatten, (C, 3)."""
    with torch.no_grad():
        return model.encoder.features(torch.as_tensor(np.asarray(history, dtype=np.float64))).numpy()


def predict(model: PolicyModel, input_fingertips, input_objects) -> np.ndarray:
    """Future fingertips (T_p, 5, 3) for one observation history.

    Batched inputs (B, T_o, ...) are also accepted and give (B, T_p, 5, 3).
    """
    f = np.asarray(input_fingertips, dtype=np.float64)
    o = np.asarray(input_objects, dtype=np.float64)
    single = f.ndim == 3
    if single:
        f, o = f[None], o[None]
    if f.ndim != 4 or o.ndim != 4:
        raise ShapeMismatch("expected (T_o, 5, 3) and (T_o, N, 3) histories")
    with torch.no_grad(), single_thread():
        out = model(torch.from_numpy(f), torch.from_numpy(o)).numpy()
    return out[0] if single else out
