"""Fusing the two per-frame depth predictions into one map.

The prediction made on the original target-style image is the scale anchor;
the prediction made on the translated image is median-rescaled onto it, then
the two are averaged pixel-wise. Where only one map is valid, its value is
kept as-is.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..core.types import DepthMap

FUSE_MODES = ("median_avg", "min", "max", "target_only")


@dataclass(frozen=True)
class FuseResult:
    depth: DepthMap
    aligned: bool  # False when the joint mask was empty (no rescaling applied)
    scale: float  # factor applied to the source-style map


def fuse_depths(
    d_target_style: DepthMap, d_source_style: DepthMap, mode: str = "median_avg"
) -> FuseResult:
    if mode not in FUSE_MODES:
        raise ValueError(f"mode must be one of {FUSE_MODES}, got {mode!r}")
    if d_target_style.shape != d_source_style.shape:
        raise ValueError(
            f"shape mismatch: {d_target_style.shape} vs {d_source_style.shape}"
        )
    if not d_target_style.valid_mask.any() and not d_source_style.valid_mask.any():
        raise ValueError("both depth maps are fully invalid")

    if mode == "target_only":
        return FuseResult(d_target_style, aligned=False, scale=1.0)

    tgt = d_target_style.values
    src = d_source_style.values
    m_tgt = d_target_style.valid_mask
    m_src = d_source_style.valid_mask
    joint = m_tgt & m_src

    scale = 1.0
    aligned = False
    if joint.any():
        scale = float(np.median(tgt[joint]) / np.median(src[joint]))
        aligned = True
    else:
        warnings.warn("no jointly valid pixels; fusing the union without alignment")
    src_aligned = src * scale

    union = m_tgt | m_src
    if mode == "median_avg":
        both = np.where(joint, 0.5 * (tgt + src_aligned), 0.0)
    elif mode == "min":
        both = np.where(joint, np.minimum(tgt, src_aligned), 0.0)
    else:  # max
        both = np.where(joint, np.maximum(tgt, src_aligned), 0.0)
    fused = both + np.where(m_tgt & ~joint, tgt, 0.0) + np.where(m_src & ~joint, src_aligned, 0.0)
    return FuseResult(DepthMap(np.where(union, fused, 0.0), union), aligned=aligned, scale=scale)
