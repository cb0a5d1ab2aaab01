"""Image encoders.

``toy:rp-<dim>[-<seed>]`` is a dependency-free deterministic encoder: the
image is resized to a fixed thumbnail and pushed through a seeded random
projection. It exists so exports (and their tests) run without model
weights, while exercising the exact same pipeline as the real backbones.

``torchvision:<name>``, ``timm:<name>``, and ``open_clip:<name>:<tag>``
load pretrained checkpoints when the corresponding library is installed;
each uses the checkpoint's canonical preprocessing and pooled output.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np
from PIL import Image

THUMB = 32  # toy-encoder thumbnail side


class EncoderError(ValueError):
    pass


class ToyRandomProjection:
    """Thumbnail pixels through a seeded Gaussian projection."""

    def __init__(self, dim: int, seed: int):
        self.dim = dim
        self.name = f"toy:rp-{dim}-{seed}"
        rng = np.random.default_rng(seed)
        self._projection = rng.normal(
            0.0, 1.0, size=(THUMB * THUMB * 3, dim)
        ).astype(np.float32) / np.sqrt(THUMB * THUMB * 3)
        self.preprocessing = f"RGB, bilinear resize to {THUMB}x{THUMB}, scale 1/255"

    def encode_batch(self, images: list[Image.Image]) -> np.ndarray:
        flat = np.stack([
            np.asarray(
                img.convert("RGB").resize((THUMB, THUMB), Image.BILINEAR),
                dtype=np.float32,
            ).reshape(-1) / 255.0
            for img in images
        ])
        return flat @ self._projection


class TorchEncoder:
    """Wraps a torch module + preprocessing callable (frozen, eval mode)."""

    def __init__(self, name, module, preprocess, device, preprocessing_desc):
        import torch

        self.name = name
        self.device = device
        self._torch = torch
        self._module = module.eval().to(device)
        for p in self._module.parameters():
            p.requires_grad_(False)
        self._preprocess = preprocess
        self.preprocessing = preprocessing_desc

    def encode_batch(self, images: list[Image.Image]) -> np.ndarray:
        batch = self._torch.stack(
            [self._preprocess(img.convert("RGB")) for img in images]
        ).to(self.device)
        with self._torch.no_grad():
            feats = self._module(batch)
        if feats.ndim > 2:
            feats = feats.mean(dim=tuple(range(2, feats.ndim)))
        return feats.cpu().numpy().astype(np.float32)


def _seed_from_name(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "little")


def build_encoder(model_name: str, device: str = "cpu"):
    """Resolve a model_name string to an encoder instance."""
    if model_name.startswith("toy:"):
        match = re.fullmatch(r"toy:rp-(\d+)(?:-(\d+))?", model_name)
        if not match:
            raise EncoderError(
                f"bad toy encoder id {model_name!r}; use toy:rp-<dim>[-<seed>]"
            )
        dim = int(match.group(1))
        seed = int(match.group(2)) if match.group(2) else _seed_from_name(model_name)
        return ToyRandomProjection(dim, seed)

    if model_name.startswith("torchvision:"):
        try:
            from torchvision.models import get_model, get_model_weights
        except ImportError as exc:
            raise EncoderError("torchvision is not installed") from exc
        arch = model_name.split(":", 1)[1]
        weights = get_model_weights(arch).DEFAULT
        module = get_model(arch, weights=weights)
        if hasattr(module, "fc"):
            import torch.nn as nn
            module.fc = nn.Identity()
        elif hasattr(module, "classifier"):
            import torch.nn as nn
            module.classifier = nn.Identity()
        return TorchEncoder(model_name, module, weights.transforms(), device,
                            f"torchvision default transforms for {arch}")

    if model_name.startswith("timm:"):
        try:
            import timm
        except ImportError as exc:
            raise EncoderError("timm is not installed") from exc
        arch = model_name.split(":", 1)[1]
        module = timm.create_model(arch, pretrained=True, num_classes=0)
        cfg = timm.data.resolve_model_data_config(module)
        preprocess = timm.data.create_transform(**cfg, is_training=False)
        return TorchEncoder(model_name, module, preprocess, device,
                            f"timm transform {cfg}")

    if model_name.startswith("open_clip:"):
        try:
            import open_clip
        except ImportError as exc:
            raise EncoderError("open_clip is not installed") from exc
        parts = model_name.split(":")[1:]
        arch = parts[0]
        pretrained = parts[1] if len(parts) > 1 else None
        module, _, preprocess = open_clip.create_model_and_transforms(
            arch, pretrained=pretrained)
        return TorchEncoder(model_name, module.visual, preprocess, device,
                            f"open_clip preprocess for {arch}")

    raise EncoderError(
        f"unknown model {model_name!r}; expected a toy:, torchvision:, "
        f"timm:, or open_clip: identifier"
    )
