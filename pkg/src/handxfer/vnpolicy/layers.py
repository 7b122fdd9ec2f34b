"""Vector-neuron layers and a small pre-norm transformer encoder.

Vector-neuron features are tensors of shape ``(..., C, 3)``: ``C`` channels,
each a 3D vector. Mixing only across channels commutes with any rotation
applied on the last axis, which is what makes these layers SO(3)-equivariant.
"""
from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from ..errors import ShapeMismatch

EPS_K = 1e-12  # on |k|


def _as_tensor(x):
    if isinstance(x, torch.Tensor):
        return x, False
    return torch.as_tensor(np.asarray(x, dtype=np.float64)), True


def _vn_linear(W: torch.Tensor, V: torch.Tensor) -> torch.Tensor:
    if W.shape[-1] != V.shape[-2] or V.shape[-1] != 3:
        raise ShapeMismatch(f"weights {tuple(W.shape)} do not match feature {tuple(V.shape)}")
    # (..., 3, C) @ (C, C') folds every leading axis into one plain matrix product
    return torch.matmul(V.transpose(-1, -2), W.transpose(0, 1)).transpose(-1, -2)


def _vn_activation(V: torch.Tensor, W_q: torch.Tensor, W_k: torch.Tensor) -> torch.Tensor:
    C = V.shape[-2]
    if W_q.shape != (C, C) or W_k.shape != (C, C) or V.shape[-1] != 3:
        raise ShapeMismatch(f"activation weights must be {C}x{C} for feature {tuple(V.shape)}")
    qk = _vn_linear(torch.cat([W_q, W_k]), V)
    q, k = qk[..., :C, :], qk[..., C:, :]
    dot = (q * k).sum(-1, keepdim=True)
    knorm2 = (k * k).sum(-1, keepdim=True)
    tiny = knorm2 < EPS_K * EPS_K
    # q - min(<q,k>, 0) / |k|^2 k is q on the positive side and the projection otherwise
    coef = dot.clamp(max=0.0) / torch.where(tiny, torch.ones_like(knorm2), knorm2)
    out = q - coef * k
    return torch.where(tiny & (dot < 0), torch.zeros_like(q), out)


def vn_linear(weights, V):
    """Channel mixing ``V' = W V`` for a feature ``V`` of shape (..., C, 3)."""
    W, _ = _as_tensor(weights)
    V, was_np = _as_tensor(V)
    out = _vn_linear(W.to(V.dtype), V)
    return out.detach().numpy() if was_np else out


def vn_activation(V, W_q, W_k):
    """Direction-gated activation.

    Per channel, ``q = W_q V`` and ``k = W_k V`` (one 3D vector each). The
    output is ``q`` when ``<q, k> >= 0`` and otherwise ``q`` with its
    component along ``k`` removed; a vanishing ``k`` with ``<q, k> < 0``
    gives the zero vector.
    """
    V, was_np = _as_tensor(V)
    Wq, _ = _as_tensor(W_q)
    Wk, _ = _as_tensor(W_k)
    out = _vn_activation(V, Wq.to(V.dtype), Wk.to(V.dtype))
    return out.detach().numpy() if was_np else out


def _uniform_(t: torch.Tensor, fan_in: int) -> torch.Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    with torch.no_grad():
        return t.uniform_(-bound, bound)


class VNLinear(nn.Module):
    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.weight = nn.Parameter(_uniform_(torch.empty(c_out, c_in), c_in))

    def forward(self, V):
        return _vn_linear(self.weight, V)


class VNActivation(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.w_q = nn.Parameter(_uniform_(torch.empty(channels, channels), channels))
        self.w_k = nn.Parameter(_uniform_(torch.empty(channels, channels), channels))

    def forward(self, V):
        return _vn_activation(V, self.w_q, self.w_k)


class VNEncoder(nn.Module):
    """Point history (..., T_o, 3) -> token (..., token_dim).

    The history is read as a T_o-channel vector-neuron feature, passed through
    linear + activation pairs, flattened row-major and mapped by an ordinary
    affine layer. Everything before the flatten is rotation-equivariant.
    """

    def __init__(self, T_o: int, channels, token_dim: int):
        super().__init__()
        layers = []
        c_in = T_o
        for c in channels:
            layers += [VNLinear(c_in, c), VNActivation(c)]
            c_in = c
        self.vn = nn.Sequential(*layers)
        self.out = nn.Linear(3 * c_in, token_dim)

    def features(self, history):
        return self.vn(history)

    def forward(self, history):
        f = self.features(history)
        return self.out(f.flatten(-2))


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        B, L, D = x.shape
        h = self.heads
        q, k, v = self.qkv(x).reshape(B, L, 3, h, D // h).permute(2, 0, 3, 1, 4)
        att = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(D // h), dim=-1)
        y = (att @ v).transpose(1, 2).reshape(B, L, D)
        return self.proj(y)


class EncoderBlock(nn.Module):
    """Pre-norm block: ``x + attn(ln(x))`` then ``x + ff(ln(x))``."""

    def __init__(self, dim: int, heads: int, ff: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads)
        self.ln2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, ff), nn.GELU(), nn.Linear(ff, dim))

    def forward(self, x):
        x = x + self.attn(self.ln1(x))
        return x + self.ff(self.ln2(x))


def mlp(sizes) -> nn.Sequential:
    mods = []
    for i in range(len(sizes) - 1):
        mods.append(nn.Linear(sizes[i], sizes[i + 1]))
        if i < len(sizes) - 2:
            mods.append(nn.GELU())
    return nn.Sequential(*mods)
