"""Stop-restart strategy for the Mask-generator."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class MgState(enum.Enum):
    ACTIVE = "active"
    STOPPED = "stopped"


class MgReason(enum.Enum):
    DEPTH_JUMP_LOW_SCORE = "depth_jump_low_score"
    VERY_LOW_SCORE = "very_low_score"
    RESTART = "restart"
    UNCHANGED = "unchanged"


@dataclass(frozen=True)
class StrategyParams:
    mu1: float = 0.65
    mu2: float = 0.55
    mu3: float = 0.92
    gamma_frac: float = 0.01

    def __post_init__(self):
        for name in ("mu1", "mu2", "mu3"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not self.mu2 < self.mu1 < self.mu3:
            raise ValueError("need mu2 < mu1 < mu3")
        if not self.gamma_frac > 0:
            raise ValueError("gamma_frac must be positive")


@dataclass(frozen=True)
class MgStatus:
    state: MgState = MgState.ACTIVE
    reason: MgReason = MgReason.UNCHANGED

    @property
    def active(self):
        return self.state is MgState.ACTIVE


def step(status, score, dt_now, dt_prev, frame_max_depth, params=StrategyParams()):
    """One transition. Stop rules are checked before the restart rule."""
    if not dt_prev > 0:
        raise ValueError("previous target depth must be positive")
    gamma = params.gamma_frac * frame_max_depth
    if abs(dt_now - dt_prev) > gamma and score < params.mu1:
        return MgStatus(MgState.STOPPED, MgReason.DEPTH_JUMP_LOW_SCORE)
    if score < params.mu2:
        return MgStatus(MgState.STOPPED, MgReason.VERY_LOW_SCORE)
    if score > params.mu3:
        return MgStatus(MgState.ACTIVE, MgReason.RESTART)
    return MgStatus(status.state, MgReason.UNCHANGED)
