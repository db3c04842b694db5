"""Differentiable imaging operators, Gaussian low-pass, and frequency split.

All editing operators act on unit-domain ([0, 1]) tensors shaped B x C x H x W
and stay differentiable w.r.t. both pixels and the per-sample parameters so
that gradients reach the parameter predictor. The edit chain converts from the
signed [-1, 1] domain, runs the operators in a fixed order, clips, and
converts back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

# Gaussian kernels stay defined as sigma -> 0 by flooring sigma; off-center
# weights underflow to a delta kernel, so blur_sigma = 0 is still the identity.
SIGMA_FLOOR = 1e-3

# Rec.601 RGB-to-luminance weights.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

OPERATOR_IDS = ("wb", "exposure", "contrast", "saturation", "blur", "grain_amp", "grain_sigma")
MAPPINGS = ("sigmoid", "tanh", "log_tanh")


@dataclass
class ImageBatch:
    """B x C x H x W image tensor tagged with its intensity domain.

    ``signed`` means values lie in [-1, 1]; ``unit`` means [0, 1]. The range
    invariant is only enforced at clip points, so intermediate operator
    outputs may temporarily exceed it.
    """

    data: torch.Tensor
    domain: str = "signed"

    def validate(self) -> "ImageBatch":
        if self.data.ndim != 4:
            raise ValueError(f"expected B x C x H x W tensor, got shape {tuple(self.data.shape)}")
        if self.domain not in ("signed", "unit"):
            raise ValueError(f"unknown domain tag {self.domain!r}")
        lo, hi = (-1.0, 1.0) if self.domain == "signed" else (0.0, 1.0)
        if self.data.numel() and (self.data.min() < lo or self.data.max() > hi):
            raise ValueError(f"{self.domain} image outside [{lo}, {hi}]")
        return self

    @property
    def shape(self):
        return tuple(self.data.shape)


@dataclass
class ParamSpec:
    """Declares one editing parameter: its mapping, range, and identity value."""

    operator_id: str
    mapping: str
    range_lo: float
    range_hi: float
    identity_ref: float
    enabled: bool = True

    def __post_init__(self):
        if self.operator_id not in OPERATOR_IDS:
            raise ValueError(f"unknown operator_id {self.operator_id!r}")
        if self.mapping not in MAPPINGS:
            raise ValueError(f"unknown mapping {self.mapping!r}")
        if not self.range_lo < self.range_hi:
            raise ValueError(f"{self.operator_id}: range_lo must be < range_hi")
        if not self.range_lo <= self.identity_ref <= self.range_hi:
            raise ValueError(f"{self.operator_id}: identity_ref outside range")
        if self.mapping == "log_tanh":
            if self.range_lo <= 0 or abs(self.range_lo * self.range_hi - 1.0) > 1e-9:
                raise ValueError(f"{self.operator_id}: log_tanh needs range_lo = 1/range_hi > 0")

    @property
    def n_raw(self) -> int:
        """Raw entries consumed from the predictor output (3 for white balance)."""
        return 3 if self.operator_id == "wb" else 1


def default_specs(
    wb_gain_max: float = 2.0,
    ev_max: float = 1.5,
    contrast_lo: float = 0.5,
    contrast_hi: float = 1.5,
    saturation_max: float = 2.0,
    blur_sigma_max: float = 3.0,
    grain_amp_max: float = 0.15,
    grain_sigma_lo: float = 0.5,
    grain_sigma_hi: float = 3.0,
    disabled: tuple[str, ...] = (),
) -> list[ParamSpec]:
    """Parameter specification set in chain order with the default ranges."""
    specs = [
        ParamSpec("wb", "log_tanh", 1.0 / wb_gain_max, wb_gain_max, 1.0),
        ParamSpec("exposure", "tanh", -ev_max, ev_max, 0.0),
        ParamSpec("contrast", "sigmoid", contrast_lo, contrast_hi, 1.0),
        ParamSpec("saturation", "sigmoid", 0.0, saturation_max, 1.0),
        ParamSpec("blur", "sigmoid", 0.0, blur_sigma_max, 0.0),
        ParamSpec("grain_amp", "sigmoid", 0.0, grain_amp_max, 0.0),
        ParamSpec("grain_sigma", "sigmoid", grain_sigma_lo, grain_sigma_hi,
                  0.5 * (grain_sigma_lo + grain_sigma_hi)),
    ]
    for spec in specs:
        if spec.operator_id in disabled:
            spec.enabled = False
    unknown = set(disabled) - set(OPERATOR_IDS)
    if unknown:
        raise ValueError(f"cannot disable unknown operators: {sorted(unknown)}")
    return specs


@dataclass
class EditParams:
    """Per-sample editing parameters in their physical (mapped) ranges."""

    wb_gain: torch.Tensor       # (B, 3) positive channel gains
    ev: torch.Tensor            # (B,) log2 exposure
    contrast: torch.Tensor      # (B,) factor around 0.5
    saturation: torch.Tensor    # (B,) >= 0
    blur_sigma: torch.Tensor    # (B,) pixels
    grain_amp: torch.Tensor     # (B,) >= 0
    grain_sigma: torch.Tensor   # (B,) pixels, > 0

    FIELDS = ("wb_gain", "ev", "contrast", "saturation", "blur_sigma", "grain_amp", "grain_sigma")

    def batch_means(self) -> dict[str, float]:
        """Mean of each parameter over the batch (and channels for wb_gain)."""
        return {name: float(getattr(self, name).detach().mean()) for name in self.FIELDS}


def identity_params(batch_size: int, specs: list[ParamSpec], dtype=torch.float32,
                    device=None) -> EditParams:
    """EditParams holding every spec's identity reference."""
    by_id = {s.operator_id: s for s in specs}

    def col(op, n=1):
        v = torch.full((batch_size, n) if n > 1 else (batch_size,), by_id[op].identity_ref,
                       dtype=dtype, device=device)
        return v

    return EditParams(col("wb", 3), col("exposure"), col("contrast"), col("saturation"),
                      col("blur"), col("grain_amp"), col("grain_sigma"))


def map_raw_params(r: torch.Tensor, specs: list[ParamSpec]) -> EditParams:
    """Map raw predictor outputs into physical parameter ranges.

    ``r`` is (B, n_raw) where n_raw sums the enabled specs' raw widths in spec
    order (white balance consumes 3 entries). Mappings:

      sigmoid:  lo + (hi - lo) * sigmoid(r)
      tanh:     midpoint + halfwidth * tanh(r)
      log_tanh: exp(ln(hi) * tanh(r))   (symmetric in the log domain)

    Disabled specs yield their identity reference.
    """
    if r.ndim != 2:
        raise ValueError(f"raw parameter tensor must be (B, n), got {tuple(r.shape)}")
    expected = sum(s.n_raw for s in specs if s.enabled)
    if r.shape[1] != expected:
        raise ValueError(f"raw parameter width {r.shape[1]} != {expected} required by enabled specs")

    batch = r.shape[0]
    out: dict[str, torch.Tensor] = {}
    cursor = 0
    for spec in specs:
        if not spec.enabled:
            shape = (batch, spec.n_raw) if spec.n_raw > 1 else (batch,)
            out[spec.operator_id] = torch.full(shape, spec.identity_ref, dtype=r.dtype,
                                               device=r.device)
            continue
        raw = r[:, cursor:cursor + spec.n_raw]
        cursor += spec.n_raw
        if spec.mapping == "sigmoid":
            mapped = spec.range_lo + (spec.range_hi - spec.range_lo) * torch.sigmoid(raw)
        elif spec.mapping == "tanh":
            mid = 0.5 * (spec.range_lo + spec.range_hi)
            half = 0.5 * (spec.range_hi - spec.range_lo)
            mapped = mid + half * torch.tanh(raw)
        else:  # log_tanh
            mapped = torch.exp(math.log(spec.range_hi) * torch.tanh(raw))
        out[spec.operator_id] = mapped if spec.n_raw > 1 else mapped.squeeze(1)

    return EditParams(out["wb"], out["exposure"], out["contrast"], out["saturation"],
                      out["blur"], out["grain_amp"], out["grain_sigma"])


# --------------------------------------------------------------------------
# Editing operators (unit domain, unclipped outputs)
# --------------------------------------------------------------------------

def apply_white_balance(x: torch.Tensor, gain: torch.Tensor) -> torch.Tensor:
    """Channel-wise gain; ``gain`` is (B, 3) and must be positive."""
    if x.shape[1] != 3:
        raise ValueError("white balance needs 3 channels")
    if bool((gain <= 0).any()):
        raise ValueError("white-balance gains must be positive")
    return x * gain.view(gain.shape[0], 3, 1, 1)


def apply_exposure(x: torch.Tensor, ev: torch.Tensor) -> torch.Tensor:
    """Scale by 2**EV per sample."""
    return x * torch.exp2(ev).view(-1, 1, 1, 1)


def apply_contrast(x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
    """(x - 0.5) * c + 0.5 per sample."""
    return (x - 0.5) * c.view(-1, 1, 1, 1) + 0.5


def apply_saturation(x: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
    """Blend toward per-pixel luminance: ell + s * (x - ell)."""
    if x.shape[1] != 3:
        raise ValueError("saturation needs 3 channels")
    w = torch.tensor(LUMA_WEIGHTS, dtype=x.dtype, device=x.device).view(1, 3, 1, 1)
    luma = (x * w).sum(dim=1, keepdim=True)
    return luma + s.view(-1, 1, 1, 1) * (x - luma)


def kernel_size_for(sigma_max: float) -> int:
    """Odd kernel support K = 2*ceil(3*sigma_max) + 1."""
    return 2 * math.ceil(3 * sigma_max) + 1


def gaussian_kernel_1d(sigma, size: int, dtype=torch.float32, device=None) -> torch.Tensor:
    """Normalized 1D Gaussian weights of odd length ``size``.

    ``sigma`` may be a float, a scalar tensor, or a (B,) tensor (one kernel
    per sample). Non-positive sigmas are floored to SIGMA_FLOOR instead of
    erroring so the kernel stays on the differentiable path.
    """
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    if not torch.is_tensor(sigma):
        sigma = torch.tensor(float(sigma), dtype=dtype, device=device)
    sigma = torch.clamp(sigma, min=SIGMA_FLOOR)
    offsets = torch.arange(size, dtype=sigma.dtype, device=sigma.device) - (size - 1) / 2
    if sigma.ndim == 0:
        weights = torch.exp(-(offsets * offsets) / (2.0 * sigma * sigma))
        return weights / weights.sum()
    weights = torch.exp(-(offsets.view(1, -1) ** 2) / (2.0 * sigma.view(-1, 1) ** 2))
    return weights / weights.sum(dim=1, keepdim=True)


def reflect_indices(n: int, pad: int, device=None) -> torch.Tensor:
    """Gather indices implementing mirror padding without edge duplication.

    Folds the reflection when ``pad`` exceeds the axis length, so padding is a
    total function for any image size (n = 1 degenerates to repetition).
    """
    if n == 1:
        return torch.zeros(n + 2 * pad, dtype=torch.long, device=device)
    idx = torch.arange(-pad, n + pad, device=device)
    period = 2 * (n - 1)
    idx = idx % period
    return torch.where(idx >= n, period - idx, idx)


def _conv_separable(x: torch.Tensor, kernels: torch.Tensor) -> torch.Tensor:
    """Reflection-padded separable convolution, horizontal then vertical.

    ``kernels`` is (K,) for one shared kernel or (B, K) for per-sample
    kernels; gradients flow through the kernel weights.
    """
    b, c, h, w = x.shape
    size = kernels.shape[-1]
    r = size // 2
    if kernels.ndim == 1:
        weight_h = kernels.view(1, 1, 1, size)
        weight_v = kernels.view(1, 1, size, 1)
        groups = 1
        flat = x.reshape(b * c, 1, h, w)
    else:
        per_channel = kernels.repeat_interleave(c, dim=0)
        weight_h = per_channel.view(b * c, 1, 1, size)
        weight_v = per_channel.view(b * c, 1, size, 1)
        groups = b * c
        flat = x.reshape(1, b * c, h, w)

    flat = flat.index_select(-1, reflect_indices(w, r, x.device))
    flat = F.conv2d(flat, weight_h, groups=groups)
    flat = flat.index_select(-2, reflect_indices(h, r, x.device))
    flat = F.conv2d(flat, weight_v, groups=groups)
    return flat.reshape(b, c, h, w)


def low_pass(x: torch.Tensor, sigma: float) -> torch.Tensor:
    """Gaussian low-pass LP(x; sigma) with reflection padding.

    Kernel support follows K = 2*ceil(3*sigma) + 1. Constant images are fixed
    points up to float rounding.
    """
    size = kernel_size_for(float(sigma))
    kernel = gaussian_kernel_1d(sigma, size, dtype=x.dtype, device=x.device)
    return _conv_separable(x, kernel)


def apply_blur(x: torch.Tensor, blur_sigma: torch.Tensor, sigma_max: float) -> torch.Tensor:
    """Per-sample separable Gaussian blur with fixed support from ``sigma_max``.

    Gradients reach ``blur_sigma`` through the kernel weights; sigma = 0 gives
    a delta kernel (identity).
    """
    size = kernel_size_for(sigma_max)
    kernels = gaussian_kernel_1d(blur_sigma.reshape(-1), size, dtype=x.dtype, device=x.device)
    return _conv_separable(x, kernels)


def apply_grain(x: torch.Tensor, grain_amp: torch.Tensor, grain_sigma: torch.Tensor,
                rng: torch.Generator, sigma_max: float = 3.0) -> torch.Tensor:
    """Add smoothed monochrome noise: x + amp * LP(eps; grain_sigma).

    One N(0, 1) field is drawn per sample and shared across channels.
    Deterministic given the generator state.
    """
    b, _, h, w = x.shape
    eps = torch.randn(b, 1, h, w, generator=rng, dtype=x.dtype, device=x.device)
    size = kernel_size_for(sigma_max)
    kernels = gaussian_kernel_1d(grain_sigma.reshape(-1), size, dtype=x.dtype, device=x.device)
    smoothed = _conv_separable(eps, kernels)
    return x + grain_amp.view(-1, 1, 1, 1) * smoothed


def edit_chain(x: torch.Tensor, params: EditParams, rng: torch.Generator,
               blur_sigma_max: float = 3.0, grain_sigma_max: float = 3.0) -> torch.Tensor:
    """Full editing operator chain on a signed-domain image.

    Converts to the unit domain, applies WB -> exposure -> contrast ->
    saturation -> blur -> grain, clips to [0, 1], and converts back. The
    result is the editing-branch output.
    """
    u = (x + 1.0) / 2.0
    u = apply_white_balance(u, params.wb_gain)
    u = apply_exposure(u, params.ev)
    u = apply_contrast(u, params.contrast)
    u = apply_saturation(u, params.saturation)
    u = apply_blur(u, params.blur_sigma, blur_sigma_max)
    u = apply_grain(u, params.grain_amp, params.grain_sigma, rng, grain_sigma_max)
    u = torch.clamp(u, 0.0, 1.0)
    return 2.0 * u - 1.0


# --------------------------------------------------------------------------
# Frequency decomposition / reconstruction
# --------------------------------------------------------------------------

@dataclass
class FrequencyConfig:
    """High-pass strength for the residual split and the anchoring scales."""

    hp_sigma: float = 8.0
    anchor_sigmas: tuple[float, ...] = (2.0, 4.0, 8.0)
    anchor_weights: tuple[float, ...] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.hp_sigma <= 0:
            raise ValueError("hp_sigma must be positive")
        if len(self.anchor_sigmas) != len(self.anchor_weights):
            raise ValueError("anchor_sigmas and anchor_weights must have equal length")
        if any(s <= 0 for s in self.anchor_sigmas) or any(w <= 0 for w in self.anchor_weights):
            raise ValueError("anchor sigmas and weights must be positive")
        total = sum(self.anchor_weights)
        self.anchor_weights = tuple(w / total for w in self.anchor_weights)


def decompose_high_frequency(y_free: torch.Tensor, hp_sigma: float):
    """Split into (y_L, y_H) with y_H = y_free - LP(y_free; sigma).

    The returned low part is the exact complement y_free - y_H so that
    y_L + y_H reconstructs y_free bitwise.
    """
    y_h = y_free - low_pass(y_free, hp_sigma)
    y_l = y_free - y_h
    return y_l, y_h


def recompose(y_edit: torch.Tensor, y_h: torch.Tensor, g_res) -> torch.Tensor:
    """Gated fusion clip(y_edit + g_res * y_H, -1, 1)."""
    if y_edit.shape != y_h.shape:
        raise ValueError(f"shape mismatch: {tuple(y_edit.shape)} vs {tuple(y_h.shape)}")
    return torch.clamp(y_edit + g_res * y_h, -1.0, 1.0)
