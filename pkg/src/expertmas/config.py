"""Scenario configuration: one flat, JSON-serializable record."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .center_agent import MIXINGS, DispatchPolicy
from .errors import ConfigError
from .expert_agent import AgentParams
from .feature_model import Thresholds
from .protocol import MODES

DISPATCH_MODES = ("selective", "broadcast")


@dataclass(frozen=True)
class ScenarioConfig:
    tau_k: float = 0.7
    tau_m: float = 0.3
    alpha_r: float = 0.05
    alpha_d: float = 0.05
    theta: int = 5
    window: int = 50
    epoch: Optional[int] = None
    # selective: top_k (default min(3, M)) or min_conf; broadcast: every agent
    dispatch: str = "selective"
    top_k: Optional[int] = None
    min_conf: Optional[float] = None
    mode: str = "lookup"
    round_cap: int = 20
    eps_fb: float = 0.01
    mixing: str = "product"
    seed: int = 0
    # probability per scheduler step of admitting the next query while
    # messages are still in flight; 0 drains each query before the next
    interleave: float = 0.0
    capacity: Optional[int] = None
    num_classes: Optional[int] = None

    def __post_init__(self):
        self.thresholds  # validates
        self.agent_params
        if self.dispatch not in DISPATCH_MODES:
            raise ConfigError(f"dispatch must be one of {DISPATCH_MODES}, got {self.dispatch!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mixing not in MIXINGS:
            raise ConfigError(f"mixing must be one of {MIXINGS}, got {self.mixing!r}")
        if self.top_k is not None and self.min_conf is not None:
            raise ConfigError("set at most one of top_k and min_conf")
        if self.top_k is not None and self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.min_conf is not None and not (0 < self.min_conf <= 1):
            raise ConfigError("min_conf must lie in (0, 1]")
        if not (0 <= self.eps_fb <= 1):
            raise ConfigError("eps_fb must lie in [0, 1]")
        if not (0 <= self.interleave < 1):
            raise ConfigError("interleave must lie in [0, 1)")
        if self.alpha_r > round(self.tau_k - self.tau_m, 12):
            raise ConfigError("alpha_r must not exceed tau_k - tau_m")

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds(self.tau_k, self.tau_m)

    @property
    def agent_params(self) -> AgentParams:
        return AgentParams(
            alpha_r=self.alpha_r,
            alpha_d=self.alpha_d,
            theta=self.theta,
            window=self.window,
            epoch=self.epoch,
            mode=self.mode,
            round_cap=self.round_cap,
            capacity=self.capacity,
        )

    @property
    def epoch_length(self) -> int:
        return self.epoch if self.epoch is not None else self.window

    def policy(self, num_classes: int) -> DispatchPolicy:
        if self.dispatch == "broadcast":
            return DispatchPolicy(broadcast=True)
        if self.min_conf is not None:
            return DispatchPolicy(min_conf=self.min_conf)
        top_k = self.top_k if self.top_k is not None else min(3, num_classes)
        return DispatchPolicy(top_k=max(1, top_k))

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path, **overrides) -> "ScenarioConfig":
        """Read a JSON config file; non-None ``overrides`` win over file values."""
        data = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: expected a JSON object")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)
