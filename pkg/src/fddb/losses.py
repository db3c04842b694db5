"""Objective terms and their stage-dependent composition.

Every expectation is an arithmetic mean over batch and spatial positions
(and over layers for the contrastive term). Discriminator logits arrive raw;
no sigmoid is applied anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .exceptions import TrainingDivergenceError
from .imaging import EditParams, FrequencyConfig, ParamSpec, low_pass
from .scheduler import StageState

GAN_KINDS = ("hinge", "logistic")


@dataclass
class LossWeights:
    lambda_gan: float = 1.0
    lambda_nce: float = 1.0
    lambda_id: float = 5.0
    lambda_edit: float = 0.1
    lambda_low: float = 10.0

    def as_dict(self) -> dict[str, float]:
        return {"gan": self.lambda_gan, "nce": self.lambda_nce, "id": self.lambda_id,
                "edit": self.lambda_edit, "low": self.lambda_low}


TERM_ORDER = ("gan", "nce", "id", "edit", "low")


@dataclass
class LossReport:
    """Per-iteration record of every term, raw and weighted."""

    iteration: int
    stage: str
    g_res: float
    raw: dict[str, float]
    weighted: dict[str, float]
    total_g: float
    loss_d: float
    param_means: dict[str, float] = field(default_factory=dict)
    event: str = ""


def gan_loss_d(kind: str, real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    """Discriminator objective on patch logit maps.

    hinge:    E[max(0, 1 - real)] + E[max(0, 1 + fake)]
    logistic: E[softplus(-real)] + E[softplus(fake)]
    """
    if kind == "hinge":
        return F.relu(1.0 - real_logits).mean() + F.relu(1.0 + fake_logits).mean()
    if kind == "logistic":
        return F.softplus(-real_logits).mean() + F.softplus(fake_logits).mean()
    raise ValueError(f"unknown gan kind {kind!r}")


def gan_loss_g(kind: str, fake_logits: torch.Tensor) -> torch.Tensor:
    """Generator objective: hinge -E[fake]; logistic (non-saturating) E[softplus(-fake)]."""
    if kind == "hinge":
        return -fake_logits.mean()
    if kind == "logistic":
        return F.softplus(-fake_logits).mean()
    raise ValueError(f"unknown gan kind {kind!r}")


def patch_nce(queries: list[torch.Tensor], keys: list[torch.Tensor],
              tau: float) -> torch.Tensor:
    """Contrastive patch loss over per-layer embedding matrices (B, P, D).

    The positive for query i is key i of the same sample and layer; every
    other key in that sample/layer is a negative. Keys are detached so
    gradients reach the query path only. Averaged over queries, then layers.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if len(queries) != len(keys):
        raise ValueError("queries and keys must pair per layer")
    per_layer = []
    for q, k in zip(queries, keys):
        if q.shape != k.shape:
            raise ValueError("query/key shape mismatch")
        b, p, _ = q.shape
        if p < 2:
            raise ValueError("at least 2 patches per layer required (no negatives otherwise)")
        logits = torch.bmm(q, k.detach().transpose(1, 2)) / tau
        targets = torch.arange(p, device=q.device).repeat(b)
        per_layer.append(F.cross_entropy(logits.reshape(b * p, p), targets))
    return torch.stack(per_layer).mean()


def identity_l1(x_real: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Mean absolute deviation of the free branch's output on real inputs."""
    if x_real.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x_real.shape)} vs {tuple(x_hat.shape)}")
    return (x_real - x_hat).abs().mean()


def low_freq_anchor(y: torch.Tensor, y_edit: torch.Tensor,
                    cfg: FrequencyConfig) -> torch.Tensor:
    """Multi-scale low-pass L1 consistency, evaluated in the [0, 1] domain."""
    if y.shape != y_edit.shape:
        raise ValueError(f"shape mismatch: {tuple(y.shape)} vs {tuple(y_edit.shape)}")
    uy = (y + 1.0) / 2.0
    ue = (y_edit + 1.0) / 2.0
    total = None
    for sigma, weight in zip(cfg.anchor_sigmas, cfg.anchor_weights):
        term = weight * (low_pass(uy, sigma) - low_pass(ue, sigma)).abs().mean()
        total = term if total is None else total + term
    return total


def edit_reg(params: EditParams, specs: list[ParamSpec]) -> torch.Tensor:
    """L1 deviation of each enabled parameter from its identity reference,
    plus extra penalties on the high-risk blur and grain terms.

    White-balance deviation is measured in log space (|ln g|) so gains g and
    1/g are penalized equally. The grain-size extra uses the 0-centered
    pre-range value so the identity setting contributes exactly zero.
    """
    by_id = {s.operator_id: s for s in specs}
    zero = params.ev.new_zeros(())
    total = zero

    def dev(op: str, value: torch.Tensor) -> torch.Tensor:
        spec = by_id[op]
        if not spec.enabled:
            return zero
        if op == "wb":
            return value.log().abs().mean()
        return (value - spec.identity_ref).abs().mean()

    total = total + dev("wb", params.wb_gain)
    total = total + dev("exposure", params.ev)
    total = total + dev("contrast", params.contrast)
    total = total + dev("saturation", params.saturation)
    total = total + dev("blur", params.blur_sigma)
    total = total + dev("grain_amp", params.grain_amp)
    total = total + dev("grain_sigma", params.grain_sigma)

    if by_id["blur"].enabled:
        total = total + params.blur_sigma.abs().mean()
    if by_id["grain_amp"].enabled:
        total = total + params.grain_amp.abs().mean()
    gs = by_id["grain_sigma"]
    if gs.enabled:
        centered = (params.grain_sigma - gs.range_lo) / (gs.range_hi - gs.range_lo) - 0.5
        total = total + centered.abs().mean()
    return total


def total_generator_loss(parts: dict[str, torch.Tensor | float], weights: LossWeights,
                         state: StageState, iteration: int,
                         d_loss: float) -> tuple[torch.Tensor, LossReport]:
    """Weighted sum of the five terms with the stage multipliers applied.

    ``parts`` maps term name -> scalar (tensor for active terms, 0.0 for
    stage-masked ones). Raises TrainingDivergenceError naming any non-finite
    term.
    """
    lam = weights.as_dict()
    mult = dict(zip(TERM_ORDER, state.multipliers))
    raw: dict[str, float] = {}
    weighted: dict[str, float] = {}
    total = None
    for name in TERM_ORDER:
        term = parts.get(name, 0.0)
        value = float(term)
        if not math.isfinite(value):
            raise TrainingDivergenceError(name)
        raw[name] = value
        contrib = lam[name] * mult[name] * term
        weighted[name] = float(contrib)
        total = contrib if total is None else total + contrib
    if not torch.is_tensor(total):
        total = torch.tensor(float(total))
    report = LossReport(iteration=iteration, stage=state.stage, g_res=state.g_res,
                        raw=raw, weighted=weighted, total_g=float(total), loss_d=d_loss)
    return total, report
