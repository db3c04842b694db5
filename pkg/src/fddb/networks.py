"""Learnable networks: parameter predictor, free residual generator,
patch discriminator, and the shared contrastive projection head."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn


def init_gaussian(module: nn.Module, generator: torch.Generator, std: float = 0.02):
    """Zero-mean Gaussian init for every conv/linear weight; biases zeroed."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            m.weight.data.normal_(0.0, std, generator=generator)
            if m.bias is not None:
                m.bias.data.zero_()


@dataclass
class FeatureStack:
    """The five tapped feature maps used by PatchNCE, keyed by layer id."""

    ids: tuple[str, ...]
    maps: list[torch.Tensor]

    def __post_init__(self):
        if len(self.ids) != 5 or len(self.maps) != 5:
            raise ValueError("feature stack must hold exactly 5 tapped maps")

    def spatial_sizes(self) -> list[tuple[int, int]]:
        return [(m.shape[2], m.shape[3]) for m in self.maps]

    def channel_dims(self) -> list[int]:
        return [m.shape[1] for m in self.maps]


class ParamPredictor(nn.Module):
    """Lightweight regressor for the raw editing parameters.

    Three stride-2 3x3 convs (32 -> 64 -> 128) with InstanceNorm + ReLU,
    global average pooling, then a two-layer MLP (hidden 128). The final
    layer starts at zero so training begins at the identity edit.
    """

    def __init__(self, out_dim: int, in_channels: int = 3,
                 widths: tuple[int, int, int] = (32, 64, 128), mlp_hidden: int = 128):
        super().__init__()
        layers = []
        prev = in_channels
        for w in widths:
            layers += [nn.Conv2d(prev, w, 3, stride=2, padding=1),
                       nn.InstanceNorm2d(w), nn.ReLU(inplace=True)]
            prev = w
        self.features = nn.Sequential(*layers)
        self.head = nn.Sequential(nn.Linear(prev, mlp_hidden), nn.ReLU(inplace=True),
                                  nn.Linear(mlp_hidden, out_dim))
        self.out_dim = out_dim

    def reset_parameters(self, generator: torch.Generator, zero_final: bool = True):
        init_gaussian(self, generator)
        if zero_final:
            final = self.head[-1]
            final.weight.data.zero_()
            final.bias.data.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = self.features(x)
        pooled = feats.mean(dim=(2, 3))
        return self.head(pooled)


class ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm1 = nn.InstanceNorm2d(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = nn.InstanceNorm2d(channels)

    def forward(self, x):
        h = F.relu(self.norm1(self.conv1(x)))
        return x + self.norm2(self.conv2(h))


class FreeGenerator(nn.Module):
    """CUT-style encoder / 9 residual blocks / decoder residual generator.

    Outputs a signed-domain image via tanh. ``forward`` can also return the
    five tapped feature maps: the input-level conv, both encoder
    downsampling outputs, the middle residual block, and the first decoder
    stage.
    """

    DOWNSAMPLE = 4  # two stride-2 encoder stages

    def __init__(self, base_width: int = 32, res_blocks: int = 9, in_channels: int = 3):
        super().__init__()
        w = base_width
        self.enc0 = nn.Sequential(nn.Conv2d(in_channels, w, 7, padding=3),
                                  nn.InstanceNorm2d(w), nn.ReLU(inplace=True))
        self.enc1 = nn.Sequential(nn.Conv2d(w, 2 * w, 3, stride=2, padding=1),
                                  nn.InstanceNorm2d(2 * w), nn.ReLU(inplace=True))
        self.enc2 = nn.Sequential(nn.Conv2d(2 * w, 4 * w, 3, stride=2, padding=1),
                                  nn.InstanceNorm2d(4 * w), nn.ReLU(inplace=True))
        self.res = nn.ModuleList(ResBlock(4 * w) for _ in range(res_blocks))
        self.mid_tap = res_blocks // 2
        self.dec0 = nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"),
                                  nn.Conv2d(4 * w, 2 * w, 3, padding=1),
                                  nn.InstanceNorm2d(2 * w), nn.ReLU(inplace=True))
        self.dec1 = nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"),
                                  nn.Conv2d(2 * w, w, 3, padding=1),
                                  nn.InstanceNorm2d(w), nn.ReLU(inplace=True))
        self.out = nn.Conv2d(w, in_channels, 7, padding=3)
        self.tap_ids = ("enc_0", "enc_1", "enc_2", f"res_{self.mid_tap}", "dec_0")

    def reset_parameters(self, generator: torch.Generator):
        init_gaussian(self, generator)

    def forward(self, x: torch.Tensor, want_features: bool = False):
        h, w = x.shape[2], x.shape[3]
        if h % self.DOWNSAMPLE or w % self.DOWNSAMPLE:
            raise ValueError(
                f"input spatial size {h}x{w} must be divisible by {self.DOWNSAMPLE}")
        f0 = self.enc0(x)
        f1 = self.enc1(f0)
        f2 = self.enc2(f1)
        h_mid = f2
        mid = None
        for i, block in enumerate(self.res):
            h_mid = block(h_mid)
            if i == self.mid_tap:
                mid = h_mid
        d0 = self.dec0(h_mid)
        d1 = self.dec1(d0)
        y = torch.tanh(self.out(d1))
        if not want_features:
            return y, None
        return y, FeatureStack(self.tap_ids, [f0, f1, f2, mid, d0])


class PatchDiscriminator(nn.Module):
    """Patch-level realism critic emitting a 2D logit map (no sigmoid).

    Stride plan: four 4x4 conv blocks with strides 2, 2, 2, 1 (InstanceNorm +
    LeakyReLU 0.2), then a 1x1 conv to one channel. A 64x64 input yields a
    7x7 logit map.
    """

    def __init__(self, base_width: int = 32, in_channels: int = 3):
        super().__init__()
        widths = [base_width, 2 * base_width, 4 * base_width, 8 * base_width]
        strides = [2, 2, 2, 1]
        layers = []
        prev = in_channels
        for w, s in zip(widths, strides):
            layers += [nn.Conv2d(prev, w, 4, stride=s, padding=1),
                       nn.InstanceNorm2d(w), nn.LeakyReLU(0.2, inplace=True)]
            prev = w
        layers.append(nn.Conv2d(prev, 1, 1))
        self.body = nn.Sequential(*layers)

    def reset_parameters(self, generator: torch.Generator):
        init_gaussian(self, generator)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


class PatchProjector(nn.Module):
    """Per-layer two-layer projection shared between query and key paths.

    Gathers the selected spatial positions from each tapped map, projects
    them with Linear + ReLU + Linear, and L2-normalizes every embedding.
    """

    def __init__(self, channel_dims: list[int], embed_dim: int = 64):
        super().__init__()
        self.heads = nn.ModuleList(
            nn.Sequential(nn.Linear(c, embed_dim), nn.ReLU(inplace=True),
                          nn.Linear(embed_dim, embed_dim))
            for c in channel_dims)
        self.embed_dim = embed_dim

    def reset_parameters(self, generator: torch.Generator):
        init_gaussian(self, generator)

    def forward(self, features: FeatureStack, patch_indices: list[torch.Tensor]):
        if len(patch_indices) != len(self.heads):
            raise ValueError("one index set per tapped layer required")
        embeds = []
        for head, fmap, idx in zip(self.heads, features.maps, patch_indices):
            b, c, h, w = fmap.shape
            total = h * w
            if idx.numel() and (int(idx.min()) < 0 or int(idx.max()) >= total):
                raise ValueError(f"patch index out of range for {h}x{w} feature map")
            flat = fmap.reshape(b, c, total).permute(0, 2, 1)
            picked = flat[:, idx, :]
            emb = head(picked)
            embeds.append(F.normalize(emb, p=2, dim=-1))
        return embeds


def sample_patch_indices(spatial_sizes: list[tuple[int, int]], n_patches: int,
                         rng: torch.Generator) -> list[torch.Tensor]:
    """Uniform spatial positions per layer; with replacement when fewer exist."""
    out = []
    for h, w in spatial_sizes:
        total = h * w
        if total >= n_patches:
            idx = torch.randperm(total, generator=rng)[:n_patches]
        else:
            idx = torch.randint(0, total, (n_patches,), generator=rng)
        out.append(idx)
    return out
