"""Run configuration: one flat record driving model shape, serialization
depth, and quantizer overrides. JSON round-trippable; unknown keys are
rejected rather than ignored so config typos fail loudly."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

from .errors import ConfigError
from .zformer import AttentionConfig


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    n_blocks: int = 2
    block_len: int = 32
    select_k: int = 0  # 0 = half the blocks
    model_width: int = 96
    head_width: int = 32
    n_heads: int = 1
    pool_levels: int = 2
    serialize_depth: int = 16
    head_hidden: int = 128
    position_mode: str = "cell_center"
    cell: float | None = None  # explicit quantizer cell; None fits the bbox
    origin: tuple | None = None  # explicit quantizer origin (used with cell)
    offset_scale: float | None = None  # None = 2 coarse cells per level

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ConfigError(f"n_blocks must be >= 1, got {self.n_blocks}")
        if not 1 <= self.serialize_depth <= 21:
            raise ConfigError(
                f"serialize_depth must be in [1, 21], got {self.serialize_depth}"
            )
        if self.head_hidden < 1:
            raise ConfigError(f"head_hidden must be >= 1, got {self.head_hidden}")
        if self.n_blocks * self.pool_levels >= self.serialize_depth:
            raise ConfigError(
                f"{self.n_blocks} blocks of {self.pool_levels} pooling levels "
                f"exhaust serialize_depth {self.serialize_depth}"
            )
        if self.cell is not None and self.cell <= 0:
            raise ConfigError(f"cell must be positive, got {self.cell}")
        if self.origin is not None:
            origin = tuple(float(v) for v in self.origin)
            if len(origin) != 3:
                raise ConfigError(f"origin must have 3 components, got {len(origin)}")
            object.__setattr__(self, "origin", origin)
        # delegate attention-shape validation
        self.attention_config()

    def attention_config(self) -> AttentionConfig:
        return AttentionConfig(
            block_len=self.block_len,
            select_k=self.select_k,
            model_width=self.model_width,
            head_width=self.head_width,
            n_heads=self.n_heads,
            pool_levels=self.pool_levels,
            position_mode=self.position_mode,
        )

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2)
            fh.write("\n")
