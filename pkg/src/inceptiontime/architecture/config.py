"""Architecture genome: everything needed to rebuild a network's shape table."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

from ..errors import ConfigError

RESIDUAL_PERIOD = 3


@dataclass(frozen=True)
class InceptionModuleConfig:
    use_bottleneck: bool = True
    bottleneck_size: int = 32
    filter_lengths: tuple[int, ...] = (10, 20, 40)
    filters_per_branch: int = 32
    use_maxpool_branch: bool = True
    maxpool_window: int = 3

    def __post_init__(self):
        object.__setattr__(self, "filter_lengths", tuple(int(k) for k in self.filter_lengths))

    @property
    def n_branches(self) -> int:
        return len(self.filter_lengths) + int(self.use_maxpool_branch)

    @property
    def out_channels(self) -> int:
        return self.filters_per_branch * self.n_branches

    def validate(self) -> None:
        if not self.filter_lengths and not self.use_maxpool_branch:
            raise ConfigError("a module needs at least one branch")
        if any(k < 1 for k in self.filter_lengths):
            raise ConfigError(f"filter lengths must be >= 1, got {self.filter_lengths}")
        if self.filters_per_branch < 1:
            raise ConfigError("filters_per_branch must be >= 1")
        if self.bottleneck_size < 1:
            raise ConfigError("bottleneck_size must be >= 1")
        if self.maxpool_window < 1:
            raise ConfigError("maxpool_window must be >= 1")


@dataclass(frozen=True)
class NetworkConfig:
    num_classes: int
    input_channels: int = 1
    depth: int = 6
    residual: bool = True
    module: InceptionModuleConfig = field(default_factory=InceptionModuleConfig)

    @property
    def residual_period(self) -> int:
        return RESIDUAL_PERIOD

    def validate(self) -> None:
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.input_channels < 1:
            raise ConfigError(f"input_channels must be >= 1, got {self.input_channels}")
        self.module.validate()
        if self.module.use_bottleneck and self.depth > 1:
            inner = self.module.out_channels
            if self.module.bottleneck_size > inner:
                raise ConfigError(
                    f"bottleneck_size {self.module.bottleneck_size} exceeds the "
                    f"{inner} channels it is meant to reduce")

    def shortcut_points(self) -> list[int]:
        """0-based module indices after which a residual shortcut is added.

        One shortcut closes every complete group of three modules; a trailing
        partial group gets its own shortcut at the network end.
        """
        if not self.residual:
            return []
        points = [i for i in range(self.depth) if (i + 1) % RESIDUAL_PERIOD == 0]
        if self.depth % RESIDUAL_PERIOD:
            points.append(self.depth - 1)
        return points

    def to_dict(self) -> dict:
        d = asdict(self)
        d["module"]["filter_lengths"] = list(self.module.filter_lengths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        try:
            module = InceptionModuleConfig(**d.get("module", {}))
            rest = {k: v for k, v in d.items() if k != "module"}
            return cls(module=module, **rest)
        except TypeError as exc:
            raise ConfigError(f"invalid network config: {exc}") from exc

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_module(self, **changes) -> "NetworkConfig":
        return replace(self, module=replace(self.module, **changes))
