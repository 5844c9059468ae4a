"""Dataset manifest: one human-readable file describing a rendered sequence.

Layout of a dataset directory::

    <root>/
      manifest            key/value header + frame table (this module)
      rgb/000000.png      8-bit RGB
      depth/000000.png    16-bit depth, stored / depth_scale = meters
      groundtruth.txt     TUM-format camera-to-world trajectory
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ManifestError
from .imageio import read_depth_png, read_rgb_png
from .se3 import Pose
from .tum import read_tum_trajectory
from .types import CameraIntrinsics, DepthMap, Frame, FrameSample

MANIFEST_NAME = "manifest"
_HEADER = "# lumenrec dataset manifest v1"


@dataclass(frozen=True)
class FrameRecord:
    timestamp: float
    rgb: str  # path relative to the dataset root
    depth: str

    def __post_init__(self):
        if not self.rgb or not self.depth:
            raise ManifestError("frame record requires rgb and depth paths")


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    intrinsics: CameraIntrinsics
    depth_scale: int
    frames: tuple[FrameRecord, ...]
    trajectory: str
    style: str

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))
        object.__setattr__(self, "frames", tuple(self.frames))
        if len(self.frames) < 1:
            raise ManifestError("manifest must list at least one frame")
        if self.depth_scale <= 0:
            raise ManifestError(f"depth_scale must be positive, got {self.depth_scale}")
        if self.style not in ("A", "B", "target"):
            raise ManifestError(f"style must be A, B, or target, got {self.style!r}")

    # -- persistence ----------------------------------------------------------

    def save(self) -> Path:
        k = self.intrinsics
        lines = [
            _HEADER,
            f"style: {self.style}",
            f"width: {k.width}",
            f"height: {k.height}",
            f"fx: {k.fx:.17g}",
            f"fy: {k.fy:.17g}",
            f"cx: {k.cx:.17g}",
            f"cy: {k.cy:.17g}",
            f"k1: {k.k1:.17g}",
            f"k2: {k.k2:.17g}",
            f"depth_scale: {self.depth_scale}",
            f"trajectory: {self.trajectory}",
            f"frames: {len(self.frames)}",
            "# timestamp rgb depth",
        ]
        for fr in self.frames:
            lines.append(f"{fr.timestamp:.17g} {fr.rgb} {fr.depth}")
        path = self.root / MANIFEST_NAME
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, root) -> "DatasetManifest":
        root = Path(root)
        path = root / MANIFEST_NAME if root.is_dir() else root
        root = path.parent
        if not path.exists():
            raise ManifestError(f"manifest not found: {path}")
        keys: dict[str, str] = {}
        records: list[FrameRecord] = []
        in_table = False
        for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not in_table:
                if ":" not in line:
                    raise ManifestError(f"{path}:{lineno}: expected 'key: value', got {line!r}")
                key, _, value = line.partition(":")
                keys[key.strip()] = value.strip()
                if key.strip() == "frames":
                    in_table = True
            else:
                parts = line.split()
                if len(parts) != 3:
                    raise ManifestError(f"{path}:{lineno}: expected 'timestamp rgb depth'")
                records.append(FrameRecord(float(parts[0]), parts[1], parts[2]))
        required = ("style", "width", "height", "fx", "fy", "cx", "cy", "depth_scale", "trajectory", "frames")
        missing = [k for k in required if k not in keys]
        if missing:
            raise ManifestError(f"{path}: missing keys {missing}")
        if len(records) != int(keys["frames"]):
            raise ManifestError(
                f"{path}: frame table has {len(records)} rows, header says {keys['frames']}"
            )
        intr = CameraIntrinsics(
            fx=float(keys["fx"]),
            fy=float(keys["fy"]),
            cx=float(keys["cx"]),
            cy=float(keys["cy"]),
            width=int(keys["width"]),
            height=int(keys["height"]),
            k1=float(keys.get("k1", "0")),
            k2=float(keys.get("k2", "0")),
        )
        manifest = cls(
            root=root,
            intrinsics=intr,
            depth_scale=int(keys["depth_scale"]),
            frames=tuple(records),
            trajectory=keys["trajectory"],
            style=keys["style"],
        )
        manifest.validate_paths()
        return manifest

    def validate_paths(self) -> None:
        missing = [p for p in self._all_paths() if not p.exists()]
        if missing:
            raise ManifestError(f"manifest references missing files: {missing[:5]}")

    def _all_paths(self):
        yield self.root / self.trajectory
        for fr in self.frames:
            yield self.root / fr.rgb
            yield self.root / fr.depth

    # -- data access ----------------------------------------------------------

    def __len__(self) -> int:
        return len(self.frames)

    def timestamps(self) -> np.ndarray:
        return np.array([fr.timestamp for fr in self.frames])

    def poses(self) -> list[Pose]:
        """Per-frame poses, matched to the trajectory by timestamp."""
        entries = read_tum_trajectory(self.root / self.trajectory)
        by_ts = {ts: pose for ts, pose in entries}
        poses = []
        for fr in self.frames:
            if fr.timestamp not in by_ts:
                raise ManifestError(
                    f"trajectory {self.trajectory} has no pose at timestamp {fr.timestamp!r}"
                )
            poses.append(by_ts[fr.timestamp])
        return poses

    def load_rgb(self, index: int) -> np.ndarray:
        return read_rgb_png(self.root / self.frames[index].rgb)

    def load_depth(self, index: int) -> DepthMap:
        return read_depth_png(self.root / self.frames[index].depth, self.depth_scale)

    def load_sample(self, index: int, pose: Pose | None = None) -> FrameSample:
        fr = self.frames[index]
        if pose is None:
            pose = self.poses()[index]
        return FrameSample(
            frame=Frame(self.load_rgb(index), fr.timestamp),
            depth=self.load_depth(index),
            pose=pose,
        )
