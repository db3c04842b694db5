"""Unpaired dataset ingestion and balanced 1:1 batch sampling."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .exceptions import ConfigurationError
from .imaging import ImageBatch

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


class DomainDataset:
    """Lazily decoded image directory for one domain.

    Files are indexed recursively in lexicographic order; pixels are decoded
    on access, resized bilinearly to the target size, and normalized to the
    signed [-1, 1] domain. Sampling cycles a shuffled permutation so every
    file appears exactly once per epoch.
    """

    def __init__(self, root: str | Path, size: tuple[int, int], domain: str = "synthetic"):
        self.root = Path(root)
        self.size = (int(size[0]), int(size[1]))  # (H, W)
        self.domain = domain
        if not self.root.is_dir():
            raise ConfigurationError(f"dataset directory does not exist: {self.root}")
        self.files = sorted(p for p in self.root.rglob("*")
                            if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())
        if not self.files:
            raise ConfigurationError(f"no PNG/JPEG images under {self.root}")
        # epoch state: current permutation and cursor, advanced by take()
        self._perm: list[int] = []
        self._pos = 0

    def __len__(self) -> int:
        return len(self.files)

    def load(self, index: int) -> torch.Tensor:
        path = self.files[index]
        try:
            with Image.open(path) as img:
                rgb = img.convert("RGB")
                h, w = self.size
                if rgb.size != (w, h):
                    rgb = rgb.resize((w, h), Image.BILINEAR)
                arr = np.asarray(rgb, dtype=np.float32) / 255.0
        except Exception as exc:
            raise RuntimeError(f"failed to decode image {path}: {exc}") from exc
        tensor = torch.from_numpy(arr).permute(2, 0, 1)
        return 2.0 * tensor - 1.0

    def take(self, n: int, rng: torch.Generator) -> list[int]:
        """Next ``n`` indices from the shuffled epoch cycle."""
        out: list[int] = []
        while len(out) < n:
            if self._pos >= len(self._perm):
                self._perm = torch.randperm(len(self.files), generator=rng).tolist()
                self._pos = 0
            out.append(self._perm[self._pos])
            self._pos += 1
        return out

    def sampler_state(self) -> tuple[list[int], int]:
        return list(self._perm), self._pos

    def set_sampler_state(self, perm: list[int], pos: int):
        self._perm = list(perm)
        self._pos = int(pos)


def load_dataset(root: str | Path, size: tuple[int, int],
                 domain: str = "synthetic") -> DomainDataset:
    return DomainDataset(root, size, domain)


@dataclass
class BatchPair:
    """One synthetic and one real mini-batch of equal size."""

    x_s: ImageBatch
    x_r: ImageBatch
    syn_indices: list[int]
    real_indices: list[int]


def next_batch_pair(syn: DomainDataset, real: DomainDataset, batch: int,
                    rng: torch.Generator) -> BatchPair:
    """Sample one mini-batch per domain (1:1 ratio) with independent epochs."""
    if batch < 1:
        raise ValueError("batch size must be >= 1")
    syn_idx = syn.take(batch, rng)
    real_idx = real.take(batch, rng)
    x_s = torch.stack([syn.load(i) for i in syn_idx])
    x_r = torch.stack([real.load(i) for i in real_idx])
    return BatchPair(ImageBatch(x_s, "signed"), ImageBatch(x_r, "signed"),
                     syn_idx, real_idx)
