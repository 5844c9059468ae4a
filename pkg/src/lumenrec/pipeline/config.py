"""Run and generation configuration: presets, JSON files, env overrides.

Every config key can be overridden through the environment with the
LUMENREC_ prefix; nested keys join with double underscores, e.g.
``LUMENREC_STAGE1__EPOCHS=2`` or ``LUMENREC_SEED=7``. Values are parsed as
JSON when possible, otherwise taken as strings.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..core.types import CameraIntrinsics
from ..errors import ConfigError
from ..geometry import LossWeights
from ..synthcolon import RenderConfig, STYLE_A, STYLE_B, TextureStyle, random_colon
from ..synthcolon.shapes import ColonSpec
from ..training import PAPER_EPOCHS, PAPER_LEARNING_RATES, StageConfig

ENV_PREFIX = "LUMENREC_"


# -- dataset generation -----------------------------------------------------------


@dataclass(frozen=True)
class GenConfig:
    """Everything generate-data needs for one style of one dataset pair."""

    style: str  # "A" or "B"
    out_dir: str
    seed: int = 0
    width: int = 96
    height: int = 96
    n_train: int = 200
    n_test_sets: int = 2
    n_test: int = 50
    radius: float = 1.0
    fold_amplitude: float = 0.3
    fold_frequency: float = 10.0
    n_control: int = 7
    light_intensity: float = 1.5
    max_ray_distance: float = 12.0
    vignetting: bool = True
    blur_taps: int = 1
    distortion: bool = False
    k1: float = 0.0
    k2: float = 0.0
    jitter_deg: float = 5.0
    offset_frac: float = 0.15
    depth_scale: int = 5000

    def __post_init__(self):
        if self.style not in ("A", "B"):
            raise ConfigError("style", f"must be A or B, got {self.style!r}")
        if self.n_train < 2 or self.n_test < 2:
            raise ConfigError("n_train/n_test", "each split needs at least 2 frames")
        if self.n_test_sets < 0:
            raise ConfigError("n_test_sets", "must be non-negative")

    def colon_spec(self) -> ColonSpec:
        return random_colon(
            seed=self.seed,
            n_control=self.n_control,
            radius=self.radius,
            fold_amplitude=self.fold_amplitude,
            fold_frequency=self.fold_frequency,
        )

    def texture_style(self) -> TextureStyle:
        return STYLE_A if self.style == "A" else STYLE_B

    def render_config(self) -> RenderConfig:
        k = CameraIntrinsics(
            fx=0.57 * self.width,
            fy=0.57 * self.width,
            cx=(self.width - 1) / 2,
            cy=(self.height - 1) / 2,
            width=self.width,
            height=self.height,
            k1=self.k1,
            k2=self.k2,
        )
        return RenderConfig(
            intrinsics=k,
            light_intensity=self.light_intensity,
            max_ray_distance=self.max_ray_distance,
            vignetting=self.vignetting,
            blur_taps=self.blur_taps,
            distortion=self.distortion,
        )


def toy_gen_config(style: str, out_dir, seed: int = 0, **overrides) -> GenConfig:
    return GenConfig(style=style, out_dir=str(out_dir), seed=seed, **overrides)


def paper_gen_config(style: str, out_dir, seed: int = 0, **overrides) -> GenConfig:
    """Published data scale: 640x480, 3000 train frames, 4 test sets of 200."""
    defaults = dict(
        width=640, height=480, n_train=3000, n_test_sets=4, n_test=200, blur_taps=3
    )
    defaults.update(overrides)
    return GenConfig(style=style, out_dir=str(out_dir), seed=seed, **defaults)


# -- training runs ----------------------------------------------------------------


@dataclass(frozen=True)
class ReconOptions:
    voxel_size: float | None = None
    truncation_voxels: float = 4.0
    frame_stride: int = 1
    fuse_mode: str = "median_avg"
    split: str = "test_0"


@dataclass(frozen=True)
class RunConfig:
    source_data: str
    target_data: str
    run_dir: str
    seed: int = 0
    image_size: int | tuple[int, int] = 96  # square, or (height, width)
    base_channels: int = 16
    depth_min: float = 0.01
    depth_max: float = 20.0
    stage1: StageConfig = field(
        default_factory=lambda: StageConfig(stage=1, epochs=5, learning_rate=2e-4)
    )
    stage2: StageConfig = field(
        default_factory=lambda: StageConfig(stage=2, epochs=5, learning_rate=8e-4)
    )
    stage3: StageConfig = field(
        default_factory=lambda: StageConfig(stage=3, epochs=5, learning_rate=3e-4)
    )
    eval_align: str = "median"
    bidirectional: bool = True
    recon: ReconOptions = field(default_factory=ReconOptions)

    def __post_init__(self):
        for name, cfg in (("stage1", self.stage1), ("stage2", self.stage2), ("stage3", self.stage3)):
            if cfg.stage != int(name[-1]):
                raise ConfigError(name, f"holds a StageConfig for stage {cfg.stage}")
        if self.eval_align not in ("median", "none"):
            raise ConfigError("eval_align", f"must be median or none, got {self.eval_align!r}")
        if isinstance(self.image_size, list):
            object.__setattr__(self, "image_size", tuple(self.image_size))
        for dim in self.frame_shape:
            if dim % 16:
                raise ConfigError("image_size", f"{dim} is not divisible by 16")

    @property
    def frame_shape(self) -> tuple[int, int]:
        """(height, width) of the training frames."""
        if isinstance(self.image_size, tuple):
            return self.image_size
        return (self.image_size, self.image_size)

    @property
    def stages(self) -> tuple[StageConfig, StageConfig, StageConfig]:
        return (self.stage1, self.stage2, self.stage3)


def toy_run_config(source_data, target_data, run_dir, seed: int = 0, **overrides) -> RunConfig:
    overrides.setdefault("base_channels", 8)  # desk-budget widths for the toy schedule
    return RunConfig(
        source_data=str(source_data),
        target_data=str(target_data),
        run_dir=str(run_dir),
        seed=seed,
        **overrides,
    )


def paper_run_config(source_data, target_data, run_dir, seed: int = 0, **overrides) -> RunConfig:
    stages = tuple(
        StageConfig(stage=i + 1, epochs=PAPER_EPOCHS[i], learning_rate=PAPER_LEARNING_RATES[i])
        for i in range(3)
    )
    defaults = dict(
        image_size=(480, 640),
        stage1=stages[0],
        stage2=stages[1],
        stage3=stages[2],
    )
    defaults.update(overrides)
    return RunConfig(
        source_data=str(source_data),
        target_data=str(target_data),
        run_dir=str(run_dir),
        seed=seed,
        **defaults,
    )


PRESETS = {"toy": toy_run_config, "paper": paper_run_config}
GEN_PRESETS = {"toy": toy_gen_config, "paper": paper_gen_config}


# -- JSON + env plumbing -------------------------------------------------------------


def _to_jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _to_jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


def run_config_to_dict(cfg: RunConfig) -> dict:
    return _to_jsonable(cfg)


def run_config_from_dict(blob: dict) -> RunConfig:
    blob = dict(blob)
    for name in ("stage1", "stage2", "stage3"):
        if name in blob and isinstance(blob[name], dict):
            stage_blob = dict(blob[name])
            if isinstance(stage_blob.get("weights"), dict):
                stage_blob["weights"] = LossWeights(**stage_blob["weights"])
            blob[name] = StageConfig(**stage_blob)
    if isinstance(blob.get("recon"), dict):
        blob["recon"] = ReconOptions(**blob["recon"])
    try:
        return RunConfig(**blob)
    except TypeError as exc:
        raise ConfigError("run config", str(exc)) from exc


def load_run_config(path, environ=None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"file not found: {path}")
    try:
        blob = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path}: invalid JSON ({exc})") from exc
    blob = apply_env_overrides(blob, environ)
    return run_config_from_dict(blob)


def save_run_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(run_config_to_dict(cfg), indent=2) + "\n")


def apply_env_overrides(blob: dict, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = json.loads(json.dumps(blob))  # deep copy
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX) :].lower().split("__")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        for part in path[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[path[-1]] = value
    return out
