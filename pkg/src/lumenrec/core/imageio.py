"""PNG I/O: 16-bit grayscale depth and 8-bit RGB.

Depth encoding follows the TUM convention: stored integer / depth_scale =
meters, stored 0 = invalid pixel.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from ..errors import DepthFormatError
from .types import DepthMap

_U16_MAX = 65535


def write_depth_png(depth: DepthMap, path, depth_scale: float) -> None:
    if depth_scale <= 0:
        raise ValueError(f"depth_scale must be positive, got {depth_scale}")
    values = depth.values
    if np.any(values[depth.valid_mask] < 0):
        raise ValueError("negative depth cannot be encoded")
    scaled = np.clip(np.rint(values * depth_scale), 0, _U16_MAX)
    stored = np.where(depth.valid_mask, scaled, 0).astype(np.uint16)
    # A valid pixel that quantizes to 0 would alias the invalid sentinel;
    # bump it to the smallest encodable depth instead.
    stored[depth.valid_mask & (stored == 0)] = 1
    Image.fromarray(stored).save(path, format="PNG")


def read_depth_png(path, depth_scale: float) -> DepthMap:
    if depth_scale <= 0:
        raise ValueError(f"depth_scale must be positive, got {depth_scale}")
    img = Image.open(path)
    if img.mode not in ("I;16", "I;16B", "I"):
        raise DepthFormatError(f"{path}: expected 16-bit single-channel PNG, got mode {img.mode!r}")
    stored = np.asarray(img)
    if stored.dtype == np.int32:
        if stored.min() < 0 or stored.max() > _U16_MAX:
            raise DepthFormatError(f"{path}: stored values exceed the 16-bit range")
        stored = stored.astype(np.uint16)
    mask = stored > 0
    values = stored.astype(np.float64) / float(depth_scale)
    return DepthMap(np.where(mask, values, 0.0), mask)


def write_rgb_png(rgb: np.ndarray, path) -> None:
    """rgb: (H, W, 3) floats in [0, 1]."""
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected HxWx3 array, got shape {arr.shape}")
    quantized = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(path, format="PNG")


def read_rgb_png(path) -> np.ndarray:
    img = Image.open(path).convert("RGB")
    return np.asarray(img).astype(np.float64) / 255.0
