# %% [markdown]
# # Vector-neuron encoder and the point policy
#
# The encoder sees object points as lists of 3D vectors. Rotating the input
# rotates every vector feature the same way, which we check numerically.

# %%
import numpy as np
import torch

from handxfer.vnpolicy import build_model, desk_config, predict, vn_activation, vn_linear

torch.set_default_dtype(torch.float64)
rng = np.random.default_rng(0)

W = torch.tensor(rng.normal(size=(4, 4)))
U = torch.tensor(rng.normal(size=(4, 4)))
V = torch.tensor(rng.normal(size=(32, 4, 3)))
Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
R = torch.tensor(Q * np.sign(np.linalg.det(Q)))  # proper rotation

lhs = vn_activation(V @ R.T, W, U)
rhs = vn_activation(V, W, U) @ R.T
print("activation equivariance error:", float((lhs - rhs).abs().max()))
print("linear equivariance error:", float((vn_linear(W, V @ R.T) - vn_linear(W, V) @ R.T).abs().max()))

# %% [markdown]
# The desk-scale model is small enough to train on a laptop CPU.

# %%
cfg = desk_config(seed=0)
model = build_model(cfg)
print("parameters:", sum(p.numel() for p in model.parameters()))

F_hist = rng.normal(0, 0.05, size=(cfg.T_o, 5, 3)) + [0.42, 0.0, 0.2]
O_hist = rng.normal(0, 0.03, size=(cfg.T_o, cfg.N, 3)) + [0.45, 0.0, 0.03]
plan = predict(model, F_hist, O_hist)
print("predicted plan:", plan.shape, "(T_p, fingers, xyz)")
