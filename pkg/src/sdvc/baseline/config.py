from __future__ import annotations

from dataclasses import asdict, dataclass, fields

POOLING_KINDS = ("NetVLAD", "NetRVLAD", "NetVLAD++", "NetRVLAD++")


@dataclass
class ModelConfig:
    feature_dim: int = 512
    pool: str = "NetVLAD"
    clusters: int = 64
    hidden: int = 512  # FC width and LSTM hidden size
    embed: int = 256
    layers: int = 4
    dropout: float = 0.4
    max_len: int = 60

    def __post_init__(self) -> None:
        if self.pool not in POOLING_KINDS:
            raise ValueError(f"unknown pooling {self.pool!r}, expected one of {POOLING_KINDS}")
        if self.clusters < 1:
            raise ValueError("clusters must be >= 1")
        if self.pool.endswith("++") and self.clusters % 2:
            raise ValueError("++ pooling needs an even number of clusters")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in raw.items() if k in names})


@dataclass
class TrainConfig:
    lr_init: float = 1e-3
    lr_factor: float = 10.0
    plateau_patience: int = 10
    lr_stop: float = 1e-6
    max_epochs: int = 1000
    batch_size: int = 32
    chunk_seconds: float = 15.0
    caption_window_seconds: float = 45.0
    nms_seconds: float = 30.0
    min_confidence: float = 0.0
    teacher_forcing_ratio: float = 1.0
    target_loss: float | None = None  # stop once the monitored loss drops below this
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lr_init < 0:
            raise ValueError("lr_init must be >= 0")
        for name in ("lr_factor", "lr_stop", "chunk_seconds", "caption_window_seconds", "nms_seconds"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.plateau_patience < 0 or self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("plateau_patience >= 0, max_epochs >= 1 and batch_size >= 1 required")
        if not 0.0 <= self.teacher_forcing_ratio <= 1.0:
            raise ValueError("teacher_forcing_ratio must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in raw.items() if k in names})
