"""Two-stage training controller.

The run starts in the edit stage with the residual gate closed. Once the
generator loss and every editing-parameter batch mean are simultaneously
stable over a sliding window (relative standard deviation below threshold)
and the minimum iteration count has passed, the controller switches to the
free stage, ramps the gate to 1, and swaps the per-loss stage multipliers.
The transition is monotone: edit -> free, never back.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import TrainingDivergenceError

STAGE_EDIT = "edit"
STAGE_FREE = "free"


class Multipliers(NamedTuple):
    m_gan: float
    m_nce: float
    m_id: float
    m_edit: float
    m_low: float


EDIT_MULTIPLIERS = Multipliers(1.0, 0.0, 0.0, 1.0, 0.0)
FREE_MULTIPLIERS = Multipliers(1.0, 1.0, 1.0, 0.0, 1.0)


@dataclass(frozen=True)
class StageState:
    stage: str
    g_res: float
    multipliers: Multipliers
    switch_iteration: int | None = None


@dataclass
class SchedulerConfig:
    window: int = 200
    eps_loss: float = 0.1
    eps_param: float = 0.05
    min_iterations: int = 1000
    ramp_len: int = 500

    def __post_init__(self):
        if self.window < 1 or self.min_iterations < 0 or self.ramp_len < 1:
            raise ValueError("window and ramp_len must be >= 1, min_iterations >= 0")


@dataclass
class StabilityWindow:
    """Ring buffers over recent generator losses and parameter batch means."""

    capacity: int
    losses: deque = field(default_factory=deque)
    params: dict[str, deque] = field(default_factory=dict)

    def __post_init__(self):
        self.losses = deque(self.losses, maxlen=self.capacity)
        self.params = {k: deque(v, maxlen=self.capacity) for k, v in self.params.items()}

    def push(self, g_loss: float, param_means: dict[str, float]):
        self.losses.append(g_loss)
        for key, value in param_means.items():
            self.params.setdefault(key, deque(maxlen=self.capacity)).append(value)

    def full(self) -> bool:
        return len(self.losses) == self.capacity

    @staticmethod
    def _relative_std(values: deque) -> float:
        arr = np.asarray(values, dtype=np.float64)
        return float(arr.std() / max(abs(arr.mean()), 1e-6))

    def stable(self, eps_loss: float, eps_param: float) -> bool:
        if not self.full():
            return False
        if self._relative_std(self.losses) > eps_loss:
            return False
        return all(self._relative_std(buf) <= eps_param for buf in self.params.values())


def gate_value(state: StageState, iteration: int, ramp_len: int) -> float:
    """0 in the edit stage; a linear 0 -> 1 ramp after the switch iteration."""
    if state.stage == STAGE_EDIT or state.switch_iteration is None:
        return 0.0
    frac = (iteration - state.switch_iteration) / ramp_len
    return min(max(frac, 0.0), 1.0)


@dataclass(frozen=True)
class UpdateAllocation:
    """Which sample the discriminator treats as fake, which adversarial
    objective applies, and which generator parameters receive updates."""

    fake_source: str   # "edit" (y_edit) or "final" (composed y)
    gan_kind: str      # "hinge" or "logistic"
    trainable: str     # "edit" branch or "free" branch + projection heads


def update_allocation(state: StageState) -> UpdateAllocation:
    if state.stage == STAGE_EDIT:
        return UpdateAllocation(fake_source="edit", gan_kind="hinge", trainable="edit")
    return UpdateAllocation(fake_source="final", gan_kind="logistic", trainable="free")


class StageController:
    """Owns the stage state machine; mutated by exactly one training loop."""

    MAX_CONSECUTIVE_REJECTIONS = 10

    def __init__(self, config: SchedulerConfig):
        self.config = config
        self.stage = STAGE_EDIT
        self.switch_iteration: int | None = None
        self.window = StabilityWindow(capacity=config.window)
        self.consecutive_rejections = 0

    def state(self, iteration: int) -> StageState:
        mult = EDIT_MULTIPLIERS if self.stage == STAGE_EDIT else FREE_MULTIPLIERS
        base = StageState(self.stage, 0.0, mult, self.switch_iteration)
        return StageState(self.stage, gate_value(base, iteration, self.config.ramp_len),
                          mult, self.switch_iteration)

    def gate(self, iteration: int) -> float:
        return self.state(iteration).g_res

    def observe(self, iteration: int, g_loss: float,
                param_means: dict[str, float]) -> StageState:
        """Record one iteration's observations; may fire the edit -> free switch."""
        values = [g_loss, *param_means.values()]
        if not all(math.isfinite(v) for v in values):
            self.consecutive_rejections += 1
            if self.consecutive_rejections >= self.MAX_CONSECUTIVE_REJECTIONS:
                raise TrainingDivergenceError(
                    "observations",
                    f"{self.consecutive_rejections} consecutive non-finite observations")
            return self.state(iteration)
        self.consecutive_rejections = 0

        if self.stage == STAGE_EDIT:
            self.window.push(g_loss, param_means)
            if (iteration >= self.config.min_iterations
                    and self.window.stable(self.config.eps_loss, self.config.eps_param)):
                self.stage = STAGE_FREE
                self.switch_iteration = iteration
        return self.state(iteration)
