"""Policy hyperparameters and their JSON form."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


@dataclass(frozen=True)
class TransformerConfig:
    layers: int = 4
    heads: int = 4
    feedforward_dim: int | None = None  # None means 4 * token_dim


@dataclass(frozen=True)
class PolicyConfig:
    T_o: int = 10
    T_p: int = 30
    N: int = 500
    vn_channels: tuple[int, ...] = (16, 32)
    token_dim: int = 96
    transformer: TransformerConfig = field(default_factory=TransformerConfig)
    head_hidden: tuple[int, ...] = (256, 256)
    epochs: int = 2000
    batch_size: int = 64
    learning_rate: float = 1e-4
    seed: int = 0
    # pivot for augmentation scale and yaw: "origin" of the robot frame or the sample "centroid"
    augment_pivot: str = "origin"
    augment: bool = True
    # add each fingertip's latest observed position to its predicted trajectory
    residual_head: bool = False

    def __post_init__(self):
        tr = self.transformer
        if isinstance(tr, dict):
            tr = TransformerConfig(**tr)
        if tr.feedforward_dim is None:
            tr = TransformerConfig(tr.layers, tr.heads, 4 * self.token_dim)
        object.__setattr__(self, "transformer", tr)
        object.__setattr__(self, "vn_channels", tuple(int(c) for c in self.vn_channels))
        object.__setattr__(self, "head_hidden", tuple(int(c) for c in self.head_hidden))
        if self.T_o < 1 or self.T_p < 1:
            raise ValueError("T_o and T_p must be at least 1")
        if self.token_dim % tr.heads:
            raise ValueError("token_dim must be divisible by the number of heads")
        if not self.vn_channels:
            raise ValueError("need at least one vector-neuron layer")
        if self.augment_pivot not in ("origin", "centroid"):
            raise ValueError("augment_pivot must be 'origin' or 'centroid'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["vn_channels"] = list(self.vn_channels)
        d["head_hidden"] = list(self.head_hidden)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown policy config keys: {sorted(unknown)}")
        data = dict(data)
        if "transformer" in data:
            tr = data["transformer"]
            bad = set(tr) - {f.name for f in fields(TransformerConfig)}
            if bad:
                raise ValueError(f"unknown transformer keys: {sorted(bad)}")
            data["transformer"] = TransformerConfig(**tr)
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def load(cls, path) -> "PolicyConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **changes) -> "PolicyConfig":
        d = self.to_dict()
        d.update(changes)
        return PolicyConfig.from_dict(d)


def paper_config(**overrides) -> PolicyConfig:
    """Full-size settings: 500 points, 10-frame history, 30-frame horizon, 2000 epochs."""
    return PolicyConfig().replace(**overrides) if overrides else PolicyConfig()


def desk_config(**overrides) -> PolicyConfig:
    """Small settings that train on a desktop CPU in minutes."""
    base = PolicyConfig(
        N=32,
        token_dim=32,
        transformer=TransformerConfig(layers=2, heads=4, feedforward_dim=64),
        head_hidden=(64, 64),
        epochs=300,
        learning_rate=1e-3,
    )
    return base.replace(**overrides) if overrides else base


def tiny_config(**overrides) -> PolicyConfig:
    """Downsized model used for finite-difference gradient checks."""
    base = PolicyConfig(
        T_o=3, T_p=2, N=4, vn_channels=(4,), token_dim=8,
        transformer=TransformerConfig(layers=1, heads=1, feedforward_dim=8),
        head_hidden=(8,), epochs=1, batch_size=4,
    )
    return base.replace(**overrides) if overrides else base
