"""Shared domain types: camera intrinsics, images, depth maps, frame samples.

Conventions used throughout the package:

* pixel coordinates are (u, v) with u = column index and v = row index;
  arrays are indexed [v, u]
* camera axes: x right, y down, z forward (optical axis)
* depth maps store z-depth in meters (distance along the optical axis)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera parameters with optional radial distortion."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    k1: float = 0.0
    k2: float = 0.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width):
            raise ValueError(f"cx={self.cx} outside [0, {self.width})")
        if not (0 <= self.cy < self.height):
            raise ValueError(f"cy={self.cy} outside [0, {self.height})")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel metric depth with a validity mask.

    values: (H, W) float array, meters. Entries where valid_mask is False
    carry no meaning. All valid entries must be finite and > 0.
    """

    values: np.ndarray
    valid_mask: np.ndarray

    def __post_init__(self):
        values = _freeze(np.asarray(self.values, dtype=np.float64))
        mask = _freeze(np.asarray(self.valid_mask, dtype=bool))
        if values.ndim != 2:
            raise ValueError(f"depth values must be HxW, got shape {values.shape}")
        if mask.shape != values.shape:
            raise ValueError(f"mask shape {mask.shape} != values shape {values.shape}")
        sel = values[mask]
        if sel.size and (not np.all(np.isfinite(sel)) or np.any(sel <= 0)):
            raise ValueError("valid depth entries must be finite and > 0")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid_mask", mask)

    @classmethod
    def from_values(cls, values: np.ndarray) -> "DepthMap":
        """Build a map whose mask marks finite, positive entries as valid."""
        values = np.asarray(values, dtype=np.float64)
        mask = np.isfinite(values) & (values > 0)
        return cls(np.where(mask, values, 0.0), mask)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class Frame:
    """RGB image with a timestamp. Channel values live in [0, 1]."""

    rgb: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        rgb = _freeze(np.asarray(self.rgb, dtype=np.float64))
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise ValueError(f"rgb must be HxWx3, got shape {rgb.shape}")
        if rgb.size and (rgb.min() < 0.0 or rgb.max() > 1.0):
            raise ValueError("rgb channel values must lie in [0, 1]")
        object.__setattr__(self, "rgb", rgb)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rgb.shape[:2]


@dataclass(frozen=True)
class FrameSample:
    """A frame plus its ground-truth depth and camera-to-world pose."""

    frame: Frame
    depth: DepthMap
    pose: "Pose" = field(repr=False, default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.depth.shape != self.frame.shape:
            raise ValueError(
                f"depth shape {self.depth.shape} != frame shape {self.frame.shape}"
            )
