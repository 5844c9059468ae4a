"""Three-stage training: style translators, depth supervision, joint
geometric refinement.

Stage 1 trains the two style translators adversarially with cycle
consistency. Stage 2 trains the two depth estimators: supervised L1 on
source frames (raw and translated) plus cross-network self-supervision on
target frames. Stage 3 fine-tunes the depth nets together with the pose net
using the photometric and depth-consistency losses on consecutive target
frames while retaining the stage-2 terms on source batches.

Determinism: every stage reseeds torch and the batch shuffler from
(seed, stage), so a resumed run continues bit-identically to an
uninterrupted one on the same platform.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import rng as rng_mod
from .core.manifest import DatasetManifest
from .core.types import CameraIntrinsics, DepthMap
from .errors import CheckpointMismatchError, ConfigError
from .geometry import (
    LossWeights,
    bilinear_sample,
    depth_consistency_loss,
    photometric_loss,
    rotation_from_axis_angle,
    warp,
)
from .models import (
    DepthNetSpec,
    TNetSpec,
    TranslatorSpec,
    build_depthnet,
    build_tnet,
    build_translator,
    spec_hash,
)
from .recon.fuse import fuse_depths

PAPER_EPOCHS = (200, 110, 110)
PAPER_LEARNING_RATES = (5e-5, 1e-4, 1e-4)

# term name -> LossWeights attribute, per stage
TERM_WEIGHTS = {
    1: {
        "gen_adv_s2t": "w_gan",
        "gen_adv_t2s": "w_gan",
        "cycle_src": "w_cycle",
        "cycle_tgt": "w_cycle",
        "disc_tgt": "w_gan",
        "disc_src": "w_gan",
    },
    2: {"sup_src": "w_sup", "sup_tgt": "w_sup", "self_sup": "w_self"},
    3: {
        "sup_src": "w_sup",
        "sup_tgt": "w_sup",
        "self_sup": "w_self",
        "photo": "w_photo",
        "cons": "w_cons",
    },
}


@dataclass(frozen=True)
class StageConfig:
    stage: int
    epochs: int
    learning_rate: float
    batch_size: int = 8
    weights: LossWeights = field(default_factory=LossWeights)
    cons_mode: str = "warped_z"
    refine_translators: bool = False

    def __post_init__(self):
        if self.stage not in (1, 2, 3):
            raise ConfigError("stage", f"must be 1, 2, or 3, got {self.stage}")
        if self.epochs < 1:
            raise ConfigError("epochs", f"must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate", f"must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError("batch_size", f"must be >= 1, got {self.batch_size}")
        if self.cons_mode not in ("warped_z", "raw"):
            raise ConfigError("cons_mode", f"must be warped_z or raw, got {self.cons_mode}")


def paper_stage_configs() -> tuple[StageConfig, StageConfig, StageConfig]:
    """The published schedule: epochs 200/110/110, lr 5e-5/1e-4/1e-4."""
    return tuple(
        StageConfig(stage=i + 1, epochs=PAPER_EPOCHS[i], learning_rate=PAPER_LEARNING_RATES[i])
        for i in range(3)
    )


# -- data ------------------------------------------------------------------------


class FrameDataset:
    """In-memory view of a rendered split: float32 tensors per frame."""

    def __init__(self, manifest: DatasetManifest, cache: bool = True):
        self.manifest = manifest
        self.intrinsics = manifest.intrinsics
        self.style = manifest.style
        ts = manifest.timestamps()
        if len(ts) >= 2 and np.any(np.diff(ts) <= 0):
            raise ValueError(f"{manifest.root}: timestamps are not strictly increasing")
        self._rgb_cache: dict[int, torch.Tensor] = {}
        self._depth_cache: dict[int, tuple[torch.Tensor, torch.Tensor]] = {}
        self._cache = cache
        if cache:
            for i in range(len(manifest)):
                self.rgb(i)
                self.depth(i)

    def __len__(self) -> int:
        return len(self.manifest)

    def rgb(self, i: int) -> torch.Tensor:
        if i not in self._rgb_cache:
            t = torch.from_numpy(
                self.manifest.load_rgb(i).astype(np.float32)
            ).permute(2, 0, 1)
            if not self._cache:
                return t
            self._rgb_cache[i] = t
        return self._rgb_cache[i]

    def depth(self, i: int) -> tuple[torch.Tensor, torch.Tensor]:
        if i not in self._depth_cache:
            d = self.manifest.load_depth(i)
            pair = (
                torch.from_numpy(d.values.astype(np.float32)),
                torch.from_numpy(d.valid_mask.copy()),
            )
            if not self._cache:
                return pair
            self._depth_cache[i] = pair
        return self._depth_cache[i]

    def rgb_batch(self, idx) -> torch.Tensor:
        return torch.stack([self.rgb(int(i)) for i in idx])

    def depth_batch(self, idx) -> tuple[torch.Tensor, torch.Tensor]:
        vals, masks = zip(*(self.depth(int(i)) for i in idx))
        return torch.stack(vals), torch.stack(masks)


def _epoch_batches(n: int, batch_size: int, gen: np.random.Generator):
    order = gen.permutation(n)
    for start in range(0, n - batch_size + 1, batch_size):
        yield order[start : start + batch_size]


def _pair_batches(n: int, batch_size: int, gen: np.random.Generator):
    starts = gen.permutation(n - 1)
    for i in range(0, len(starts) - batch_size + 1, batch_size):
        chunk = starts[i : i + batch_size]
        yield chunk, chunk + 1


# -- state -----------------------------------------------------------------------


@dataclass
class TrainState:
    nets: dict
    specs: dict
    seed: int
    step: int = 0
    stages_done: tuple[int, ...] = ()
    loss_history: list = field(default_factory=list)
    opt_states: dict = field(default_factory=dict)
    stage_seconds: dict = field(default_factory=dict)

    def record(self, stage: int, terms: dict[str, float], weights: LossWeights) -> float:
        table = TERM_WEIGHTS[stage]
        total = sum(getattr(weights, table[name]) * value for name, value in terms.items())
        self.loss_history.append(
            {"stage": stage, "step": self.step, "terms": dict(terms), "total": float(total)}
        )
        return float(total)


def init_state(
    seed: int,
    image_size: tuple[int, int] = (96, 96),
    base_channels: int = 16,
    depth_range: tuple[float, float] = (0.01, 20.0),
) -> TrainState:
    h, w = image_size
    depth_spec = DepthNetSpec(
        height=h, width=w, base_channels=base_channels,
        depth_min=depth_range[0], depth_max=depth_range[1],
    )
    trans_spec = TranslatorSpec(height=h, width=w, base_channels=base_channels)
    tnet_spec = TNetSpec(height=h, width=w, base_channels=base_channels)
    gen_s2t, disc_tgt = build_translator(trans_spec, rng_mod.child_seed(seed, "gen_s2t"))
    gen_t2s, disc_src = build_translator(trans_spec, rng_mod.child_seed(seed, "gen_t2s"))
    nets = {
        "gen_s2t": gen_s2t,
        "gen_t2s": gen_t2s,
        "disc_tgt": disc_tgt,
        "disc_src": disc_src,
        "depth_src": build_depthnet(depth_spec, rng_mod.child_seed(seed, "depth_src")),
        "depth_tgt": build_depthnet(depth_spec, rng_mod.child_seed(seed, "depth_tgt")),
        "tnet": build_tnet(tnet_spec, rng_mod.child_seed(seed, "tnet")),
    }
    specs = {"depth": depth_spec, "translator": trans_spec, "tnet": tnet_spec}
    return TrainState(nets=nets, specs=specs, seed=seed)


def param_hash(module: torch.nn.Module) -> str:
    h = hashlib.sha256()
    for name, p in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()[:16]


def save_state(state: TrainState, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "nets": {k: v.state_dict() for k, v in state.nets.items()},
            "spec_hashes": {k: v.spec_hash for k, v in state.nets.items()},
            "specs": {k: dataclasses.asdict(v) for k, v in state.specs.items()},
            "seed": state.seed,
            "step": state.step,
            "stages_done": state.stages_done,
            "loss_history": state.loss_history,
            "opt_states": state.opt_states,
            "stage_seconds": state.stage_seconds,
        },
        path,
    )


def load_state(path) -> TrainState:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    specs = {
        "depth": DepthNetSpec(**blob["specs"]["depth"]),
        "translator": TranslatorSpec(**blob["specs"]["translator"]),
        "tnet": TNetSpec(**blob["specs"]["tnet"]),
    }
    state = init_state(
        blob["seed"],
        image_size=(specs["depth"].height, specs["depth"].width),
        base_channels=specs["depth"].base_channels,
        depth_range=(specs["depth"].depth_min, specs["depth"].depth_max),
    )
    for name, net in state.nets.items():
        if blob["spec_hashes"][name] != net.spec_hash:
            raise CheckpointMismatchError(f"{path}: spec hash mismatch for {name}")
        net.load_state_dict(blob["nets"][name])
    state.step = blob["step"]
    state.stages_done = tuple(blob["stages_done"])
    state.loss_history = blob["loss_history"]
    state.opt_states = blob["opt_states"]
    state.stage_seconds = blob.get("stage_seconds", {})
    return state


# -- loss helpers -----------------------------------------------------------------


def _lsgan_real(scores: torch.Tensor) -> torch.Tensor:
    return ((scores - 1.0) ** 2).mean()


def _lsgan_fake(scores: torch.Tensor) -> torch.Tensor:
    return (scores**2).mean()


def _masked_l1(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    diff = (pred - target).abs()
    denom = mask.sum().clamp(min=1)
    return (diff * mask).sum() / denom


def _stage_rngs(seed: int, stage: int):
    torch.manual_seed(rng_mod.child_seed(seed, f"stage{stage}", "torch"))
    return rng_mod.generator(seed, f"stage{stage}", "shuffle")


def _set_trainable(module: torch.nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


# -- stage 1: style translators ----------------------------------------------------


def stage1_train(
    src_data: FrameDataset,
    tgt_data: FrameDataset,
    cfg: StageConfig,
    state: TrainState | None = None,
    bidirectional: bool = True,
    seed: int = 0,
) -> TrainState:
    """Adversarial + cycle training of the style translators."""
    if len(src_data) == 0 or len(tgt_data) == 0:
        raise ValueError("both datasets must be non-empty")
    if src_data.style == tgt_data.style:
        raise ValueError(
            f"source and target datasets share style {src_data.style!r}: no domain gap to bridge"
        )
    if state is None:
        state = init_state(seed, image_size=src_data.rgb(0).shape[1:])
    w = cfg.weights
    shuffle = _stage_rngs(state.seed, 1)

    nets = state.nets
    for name in ("gen_s2t", "gen_t2s", "disc_tgt", "disc_src"):
        _set_trainable(nets[name], True)
        nets[name].train()

    if bidirectional:
        gen_params = list(nets["gen_s2t"].parameters()) + list(nets["gen_t2s"].parameters())
        disc_params = list(nets["disc_tgt"].parameters()) + list(nets["disc_src"].parameters())
    else:
        gen_params = list(nets["gen_s2t"].parameters())
        disc_params = list(nets["disc_tgt"].parameters())
    opt_gen = torch.optim.Adam(gen_params, lr=cfg.learning_rate, betas=(0.9, 0.999))
    opt_disc = torch.optim.Adam(disc_params, lr=cfg.learning_rate, betas=(0.9, 0.999))
    if "stage1" in state.opt_states:
        opt_gen.load_state_dict(state.opt_states["stage1"]["gen"])
        opt_disc.load_state_dict(state.opt_states["stage1"]["disc"])

    t0 = time.time()
    for _epoch in range(cfg.epochs):
        src_iter = _epoch_batches(len(src_data), cfg.batch_size, shuffle)
        tgt_iter = _epoch_batches(len(tgt_data), cfg.batch_size, shuffle)
        for src_idx, tgt_idx in zip(src_iter, tgt_iter):
            x_src = src_data.rgb_batch(src_idx)
            x_tgt = tgt_data.rgb_batch(tgt_idx)

            fake_tgt = nets["gen_s2t"](x_src)
            terms: dict[str, float] = {}
            adv_s2t = _lsgan_real(nets["disc_tgt"](fake_tgt))
            gen_loss = w.w_gan * adv_s2t
            terms["gen_adv_s2t"] = adv_s2t.item()
            if bidirectional:
                fake_src = nets["gen_t2s"](x_tgt)
                adv_t2s = _lsgan_real(nets["disc_src"](fake_src))
                cycle_src = (nets["gen_t2s"](fake_tgt) - x_src).abs().mean()
                cycle_tgt = (nets["gen_s2t"](fake_src) - x_tgt).abs().mean()
                gen_loss = gen_loss + w.w_gan * adv_t2s + w.w_cycle * (cycle_src + cycle_tgt)
                terms["gen_adv_t2s"] = adv_t2s.item()
                terms["cycle_src"] = cycle_src.item()
                terms["cycle_tgt"] = cycle_tgt.item()
            opt_gen.zero_grad()
            gen_loss.backward()
            opt_gen.step()

            disc_tgt_loss = 0.5 * (
                _lsgan_real(nets["disc_tgt"](x_tgt))
                + _lsgan_fake(nets["disc_tgt"](fake_tgt.detach()))
            )
            disc_loss = w.w_gan * disc_tgt_loss
            terms["disc_tgt"] = disc_tgt_loss.item()
            if bidirectional:
                disc_src_loss = 0.5 * (
                    _lsgan_real(nets["disc_src"](x_src))
                    + _lsgan_fake(nets["disc_src"](fake_src.detach()))
                )
                disc_loss = disc_loss + w.w_gan * disc_src_loss
                terms["disc_src"] = disc_src_loss.item()
            opt_disc.zero_grad()
            disc_loss.backward()
            opt_disc.step()

            state.step += 1
            state.record(1, terms, w)

    state.opt_states["stage1"] = {"gen": opt_gen.state_dict(), "disc": opt_disc.state_dict()}
    state.stage_seconds["stage1"] = state.stage_seconds.get("stage1", 0.0) + time.time() - t0
    state.stages_done = tuple(sorted(set(state.stages_done) | {1}))
    for name in ("gen_s2t", "gen_t2s", "disc_tgt", "disc_src"):
        _set_trainable(nets[name], False)
        nets[name].eval()
    return state


# -- stage 2: depth supervision -----------------------------------------------------


def _source_supervision(nets, src_data, src_idx, w: LossWeights, bidirectional: bool):
    x_src = src_data.rgb_batch(src_idx)
    y, y_mask = src_data.depth_batch(src_idx)
    y = y.unsqueeze(1)
    y_mask = y_mask.unsqueeze(1)
    terms = {}
    loss = x_src.new_zeros(())
    if bidirectional:
        sup_src = _masked_l1(nets["depth_src"](x_src), y, y_mask)
        loss = loss + w.w_sup * sup_src
        terms["sup_src"] = sup_src.item()
    with torch.no_grad():
        x_s2t = nets["gen_s2t"](x_src)
    sup_tgt = _masked_l1(nets["depth_tgt"](x_s2t), y, y_mask)
    loss = loss + w.w_sup * sup_tgt
    terms["sup_tgt"] = sup_tgt.item()
    return loss, terms


def _cross_network_self_supervision(nets, tgt_data, tgt_idx, w: LossWeights):
    x_tgt = tgt_data.rgb_batch(tgt_idx)
    with torch.no_grad():
        x_t2s = nets["gen_t2s"](x_tgt)
    pred_tgt = nets["depth_tgt"](x_tgt)
    pred_src = nets["depth_src"](x_t2s)
    self_sup = (pred_tgt - pred_src).abs().mean()
    return w.w_self * self_sup, {"self_sup": self_sup.item()}


def stage2_train(
    state: TrainState,
    src_data: FrameDataset,
    tgt_data: FrameDataset,
    cfg: StageConfig,
    bidirectional: bool = True,
) -> TrainState:
    """Supervised depth on source frames + cross-network self-supervision."""
    if 1 not in state.stages_done:
        raise ValueError("stage 2 requires stage-1 translators")
    if not bool(src_data.depth(0)[1].any()):
        raise ValueError("source dataset has no ground-truth depth")
    w = cfg.weights
    shuffle = _stage_rngs(state.seed, 2)
    nets = state.nets

    frozen_hashes = {n: param_hash(nets[n]) for n in ("gen_s2t", "gen_t2s")}
    for name in ("gen_s2t", "gen_t2s", "disc_tgt", "disc_src"):
        _set_trainable(nets[name], False)
        nets[name].eval()
    depth_nets = ["depth_tgt"] + (["depth_src"] if bidirectional else [])
    for name in depth_nets:
        _set_trainable(nets[name], True)
        nets[name].train()
    params = [p for n in depth_nets for p in nets[n].parameters()]
    opt = torch.optim.Adam(params, lr=cfg.learning_rate, betas=(0.9, 0.999))
    if "stage2" in state.opt_states:
        opt.load_state_dict(state.opt_states["stage2"])

    t0 = time.time()
    for _epoch in range(cfg.epochs):
        src_iter = _epoch_batches(len(src_data), cfg.batch_size, shuffle)
        tgt_iter = _epoch_batches(len(tgt_data), cfg.batch_size, shuffle)
        for src_idx, tgt_idx in zip(src_iter, tgt_iter):
            loss, terms = _source_supervision(nets, src_data, src_idx, w, bidirectional)
            opt.zero_grad()
            loss.backward()
            opt.step()
            state.step += 1
            state.record(2, terms, w)

            if bidirectional:
                loss, terms = _cross_network_self_supervision(nets, tgt_data, tgt_idx, w)
                opt.zero_grad()
                loss.backward()
                opt.step()
                state.step += 1
                state.record(2, terms, w)

    state.opt_states["stage2"] = opt.state_dict()
    state.stage_seconds["stage2"] = state.stage_seconds.get("stage2", 0.0) + time.time() - t0
    state.stages_done = tuple(sorted(set(state.stages_done) | {2}))
    for name, before in frozen_hashes.items():
        after = param_hash(nets[name])
        if after != before:
            raise RuntimeError(f"stage 2 mutated frozen translator {name}")
    return state


# -- stage 3: joint geometric refinement --------------------------------------------


def _pose_pair_losses_reference(nets, tgt_data, idx_a, idx_b, cfg: StageConfig, K: CameraIntrinsics):
    """Per-sample reference path built from the geometry module's primitives.

    Kept as the oracle the batched implementation below is tested against.
    """
    x_a = tgt_data.rgb_batch(idx_a)
    x_b = tgt_data.rgb_batch(idx_b)
    pose = nets["tnet"](torch.cat([x_a, x_b], dim=1))  # (B, 6)
    depth_a = nets["depth_tgt"](x_a)[:, 0]
    depth_b = nets["depth_tgt"](x_b)[:, 0]

    photo_terms = []
    cons_terms = []
    full = torch.ones_like(depth_a[0], dtype=torch.bool)
    for i in range(x_a.shape[0]):
        img_a = x_a[i].permute(1, 2, 0)
        img_b = x_b[i].permute(1, 2, 0)
        R_ab = rotation_from_axis_angle(pose[i, :3])
        t_ab = pose[i, 3:]
        R_ba = R_ab.transpose(0, 1)
        t_ba = -(R_ba @ t_ab)
        for d_src, d_dst, img_src, img_dst, rel in (
            (depth_a[i], depth_b[i], img_a, img_b, (R_ab, t_ab)),
            (depth_b[i], depth_a[i], img_b, img_a, (R_ba, t_ba)),
        ):
            wr = warp((d_src, full), rel, K)
            sampled, inb = bilinear_sample(img_dst, wr.coords)
            valid = wr.valid & inb
            filled = torch.where(valid.unsqueeze(-1), sampled, img_src.detach())
            photo_terms.append(
                photometric_loss(
                    img_src, filled, valid, cfg.weights.lambda_i, cfg.weights.lambda_s
                )
            )
            cons_terms.append(
                depth_consistency_loss((d_src, full), (d_dst, full), wr, mode=cfg.cons_mode)
            )
    photo = torch.stack(photo_terms).mean()
    cons = torch.stack(cons_terms).mean()
    return photo, cons


def _batched_bilinear(images: torch.Tensor, cu: torch.Tensor, cv: torch.Tensor):
    """images (B, H, W, C) sampled at per-batch coords (B, H, W)."""
    b, h, w, _ = images.shape
    cu = cu.clamp(0, w - 1)
    cv = cv.clamp(0, h - 1)
    u0 = cu.detach().floor().clamp(0, w - 2)
    v0 = cv.detach().floor().clamp(0, h - 2)
    du = (cu - u0).unsqueeze(-1)
    dv = (cv - v0).unsqueeze(-1)
    u0 = u0.long()
    v0 = v0.long()
    bi = torch.arange(b, device=images.device)[:, None, None]
    tl = images[bi, v0, u0]
    tr = images[bi, v0, u0 + 1]
    bl = images[bi, v0 + 1, u0]
    br = images[bi, v0 + 1, u0 + 1]
    top = tl + du * (tr - tl)
    bottom = bl + du * (br - bl)
    return top + dv * (bottom - top)


def _batched_ssim(a: torch.Tensor, b: torch.Tensor, window: int = 7) -> torch.Tensor:
    """Per-pixel SSIM for (B, C, H, W) pairs; channel-averaged (B, H, W)."""
    c1, c2 = 0.01**2, 0.03**2
    pad = window // 2
    channels = a.shape[1]
    kernel = torch.ones(channels, 1, window, window, dtype=a.dtype, device=a.device) / (
        window * window
    )

    def box(x):
        x = torch.nn.functional.pad(x, (pad, pad, pad, pad), mode="reflect")
        return torch.nn.functional.conv2d(x, kernel, groups=channels)

    mu_a = box(a)
    mu_b = box(b)
    var_a = box(a * a) - mu_a * mu_a
    var_b = box(b * b) - mu_b * mu_b
    cov = box(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return (num / den).mean(dim=1)


def _pose_pair_losses(nets, tgt_data, idx_a, idx_b, cfg: StageConfig, K: CameraIntrinsics):
    """Photometric and consistency losses over a batch of consecutive pairs.

    Both warp directions are processed in one fused batch of size 2B; the
    per-direction means match _pose_pair_losses_reference within float
    tolerance (asserted by tests).
    """
    x_a = tgt_data.rgb_batch(idx_a)
    x_b = tgt_data.rgb_batch(idx_b)
    pose = nets["tnet"](torch.cat([x_a, x_b], dim=1))  # (B, 6)
    depth_a = nets["depth_tgt"](x_a)[:, 0]
    depth_b = nets["depth_tgt"](x_b)[:, 0]
    n = x_a.shape[0]

    rot_fwd = [rotation_from_axis_angle(pose[i, :3]) for i in range(n)]
    R_fwd = torch.stack(rot_fwd)
    t_fwd = pose[:, 3:]
    R_rev = R_fwd.transpose(1, 2)
    t_rev = -torch.einsum("bij,bj->bi", R_rev, t_fwd)

    depth_src = torch.cat([depth_a, depth_b])  # (2B, H, W)
    depth_dst = torch.cat([depth_b, depth_a])
    img_src = torch.cat([x_a, x_b])  # (2B, 3, H, W)
    img_dst = torch.cat([x_b, x_a])
    R = torch.cat([R_fwd, R_rev])
    t = torch.cat([t_fwd, t_rev])

    b2, h, w = depth_src.shape
    dtype = depth_src.dtype
    u = torch.arange(w, dtype=dtype)
    v = torch.arange(h, dtype=dtype)
    vv, uu = torch.meshgrid(v, u, indexing="ij")
    x_ray = (uu - K.cx) / K.fx
    y_ray = (vv - K.cy) / K.fy
    pts = torch.stack(
        [x_ray * depth_src, y_ray * depth_src, depth_src], dim=-1
    )  # (2B, H, W, 3)
    pts_dst = torch.einsum("bij,bhwj->bhwi", R, pts) + t[:, None, None, :]
    z = pts_dst[..., 2]
    safe_z = torch.where(z.abs() < 1e-12, torch.full_like(z, 1e-12), z)
    cu = K.fx * pts_dst[..., 0] / safe_z + K.cx
    cv = K.fy * pts_dst[..., 1] / safe_z + K.cy
    inb = (cu >= 0) & (cu <= w - 1) & (cv >= 0) & (cv <= h - 1)
    valid = inb & (z > 0)
    if not bool(valid.flatten(1).any(dim=1).all()):
        raise ValueError("a frame pair projected with no valid pixels")

    sampled_img = _batched_bilinear(img_dst.permute(0, 2, 3, 1), cu, cv)  # (2B, H, W, 3)
    sampled_depth = _batched_bilinear(depth_dst.unsqueeze(-1), cu, cv)[..., 0]

    src_hwc = img_src.permute(0, 2, 3, 1)
    filled = torch.where(valid.unsqueeze(-1), sampled_img, src_hwc.detach())
    l1 = (src_hwc - filled).abs().mean(dim=-1)
    dssim = (1.0 - _batched_ssim(img_src, filled.permute(0, 3, 1, 2))) / 2.0
    per_pixel = cfg.weights.lambda_i * l1 + cfg.weights.lambda_s * dssim
    counts = valid.sum(dim=(1, 2)).clamp(min=1)
    photo = ((per_pixel * valid).sum(dim=(1, 2)) / counts).mean()

    if cfg.cons_mode == "warped_z":
        m_src = z
    else:
        m_src = depth_src
    v_cons = valid & (sampled_depth > 0)
    # Clamp keeps the unselected branch finite; where() blocks its gradient.
    denom = (m_src + sampled_depth).clamp(min=1e-12)
    s_cons = torch.where(
        v_cons, (m_src - sampled_depth).abs() / denom, torch.zeros_like(denom)
    )
    cons_counts = v_cons.sum(dim=(1, 2)).clamp(min=1)
    cons = (s_cons.sum(dim=(1, 2)) / cons_counts).mean()
    return photo, cons


def stage3_train(
    state: TrainState,
    src_data: FrameDataset,
    tgt_data: FrameDataset,
    cfg: StageConfig,
    bidirectional: bool = True,
) -> TrainState:
    """Joint fine-tuning of depth nets and the pose net with geometric
    losses on consecutive target frames; stage-2 terms are retained."""
    if 2 not in state.stages_done:
        raise ValueError("stage 3 requires stage-2 depth nets")
    if len(tgt_data) < cfg.batch_size + 1:
        raise ValueError("target dataset too small for consecutive-frame batches")
    w = cfg.weights
    shuffle = _stage_rngs(state.seed, 3)
    nets = state.nets
    K = tgt_data.intrinsics

    frozen = [] if cfg.refine_translators else ["gen_s2t", "gen_t2s"]
    frozen_hashes = {n: param_hash(nets[n]) for n in frozen}
    for name in ("gen_s2t", "gen_t2s"):
        _set_trainable(nets[name], cfg.refine_translators)
        nets[name].train(cfg.refine_translators)
    for name in ("disc_tgt", "disc_src"):
        _set_trainable(nets[name], False)
        nets[name].eval()
    live = ["depth_tgt", "tnet"] + (["depth_src"] if bidirectional else [])
    if cfg.refine_translators:
        live += ["gen_s2t", "gen_t2s"]
    for name in live:
        _set_trainable(nets[name], True)
        nets[name].train()
    opt = torch.optim.Adam(
        [p for n in live for p in nets[n].parameters()],
        lr=cfg.learning_rate,
        betas=(0.9, 0.999),
    )
    if "stage3" in state.opt_states:
        opt.load_state_dict(state.opt_states["stage3"])

    geometric_on = w.w_photo > 0 or w.w_cons > 0
    probe_pending = geometric_on
    t0 = time.time()
    for _epoch in range(cfg.epochs):
        src_iter = _epoch_batches(len(src_data), cfg.batch_size, shuffle)
        pair_iter = _pair_batches(len(tgt_data), cfg.batch_size, shuffle)
        for src_idx, (idx_a, idx_b) in zip(src_iter, pair_iter):
            loss, terms = _source_supervision(nets, src_data, src_idx, w, bidirectional)
            opt.zero_grad()
            loss.backward()
            opt.step()
            state.step += 1
            state.record(3, terms, w)

            terms = {}
            loss = torch.zeros(())
            if geometric_on:
                photo, cons = _pose_pair_losses(nets, tgt_data, idx_a, idx_b, cfg, K)
                loss = loss + w.w_photo * photo + w.w_cons * cons
                terms["photo"] = photo.item()
                terms["cons"] = cons.item()
            if bidirectional and w.w_self > 0:
                self_loss, self_terms = _cross_network_self_supervision(
                    nets, tgt_data, idx_a, w
                )
                loss = loss + self_loss
                terms.update(self_terms)
            if terms:
                opt.zero_grad()
                loss.backward()
                if probe_pending:
                    head_grads = [
                        p.grad for p in nets["tnet"].head[-1].parameters() if p.grad is not None
                    ]
                    if not head_grads or all(g.abs().sum() == 0 for g in head_grads):
                        raise RuntimeError("pose net received no gradient from the geometric losses")
                    probe_pending = False
                opt.step()
                state.step += 1
                state.record(3, terms, w)

    state.opt_states["stage3"] = opt.state_dict()
    state.stage_seconds["stage3"] = state.stage_seconds.get("stage3", 0.0) + time.time() - t0
    state.stages_done = tuple(sorted(set(state.stages_done) | {3}))
    for name, before in frozen_hashes.items():
        if param_hash(nets[name]) != before:
            raise RuntimeError(f"stage 3 mutated frozen translator {name}")
    return state


# -- inference and orchestration -----------------------------------------------------


def depth_predictor(state: TrainState, route: str = "target"):
    """rgb (H, W, 3) in [0,1] -> DepthMap.

    route "target": depth_tgt on the image as-is. route "source": depth_src.
    route "fused": median-scale fusion of depth_tgt(x) and
    depth_src(gen_t2s(x)).
    """
    if route not in ("target", "source", "fused"):
        raise ValueError(f"unknown route {route!r}")
    nets = state.nets

    def predict(rgb: np.ndarray) -> DepthMap:
        x = torch.from_numpy(np.ascontiguousarray(rgb, dtype=np.float32)).permute(2, 0, 1)
        x = x.unsqueeze(0)
        with torch.no_grad():
            if route == "source":
                d = nets["depth_src"](x)[0, 0]
                return DepthMap.from_values(d.numpy().astype(np.float64))
            d_tgt = nets["depth_tgt"](x)[0, 0]
            if route == "target":
                return DepthMap.from_values(d_tgt.numpy().astype(np.float64))
            translated = nets["gen_t2s"](x)
            d_src = nets["depth_src"](translated)[0, 0]
        fused = fuse_depths(
            DepthMap.from_values(d_tgt.numpy().astype(np.float64)),
            DepthMap.from_values(d_src.numpy().astype(np.float64)),
        )
        return fused.depth

    return predict


def run_stages(
    state: TrainState,
    src_data: FrameDataset,
    tgt_data: FrameDataset,
    stage_configs,
    run_dir=None,
    bidirectional: bool = True,
) -> TrainState:
    """Execute stages 1..3, checkpointing after each; resumes completed ones."""
    stage_fns = {1: stage1_train, 2: stage2_train, 3: stage3_train}
    for cfg in stage_configs:
        ckpt = Path(run_dir) / f"stage{cfg.stage}" / "checkpoint" if run_dir else None
        if ckpt is not None and ckpt.exists():
            resumed = load_state(ckpt)
            state.nets = resumed.nets
            state.specs = resumed.specs
            state.step = resumed.step
            state.stages_done = resumed.stages_done
            state.loss_history = resumed.loss_history
            state.opt_states = resumed.opt_states
            state.stage_seconds = resumed.stage_seconds
            continue
        try:
            if cfg.stage == 1:
                state = stage1_train(
                    src_data, tgt_data, cfg, state=state, bidirectional=bidirectional
                )
            else:
                state = stage_fns[cfg.stage](
                    state, src_data, tgt_data, cfg, bidirectional=bidirectional
                )
        except Exception as exc:
            raise RuntimeError(f"stage {cfg.stage} failed: {exc}") from exc
        if ckpt is not None:
            save_state(state, ckpt)
    return state


def write_losses_csv(state: TrainState, path) -> None:
    lines = ["stage,step,term,value"]
    for row in state.loss_history:
        for term, value in row["terms"].items():
            lines.append(f"{row['stage']},{row['step']},{term},{value!r}")
        lines.append(f"{row['stage']},{row['step']},total,{row['total']!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def term_curve(state: TrainState, stage: int, term: str) -> list[float]:
    return [r["terms"][term] for r in state.loss_history if r["stage"] == stage and term in r["terms"]]


def pose_quality(state: TrainState, manifest: DatasetManifest, max_pairs: int = 40) -> dict:
    """Pose-net predictions vs ground-truth relative poses on consecutive frames.

    Returns median rotation error (degrees) and median angle between the
    predicted and true translation directions (degrees).
    """
    from .core.se3 import (
        SixDof,
        pose_compose,
        pose_from_6dof,
        pose_inverse,
        quat_to_axis_angle,
        relative_pose,
    )

    data = FrameDataset(manifest, cache=False)
    poses = manifest.poses()
    tnet = state.nets["tnet"]
    rot_errs, dir_errs = [], []
    step = max(1, (len(manifest) - 1) // max_pairs)
    for i in range(0, len(manifest) - 1, step):
        x = torch.cat([data.rgb(i), data.rgb(i + 1)], dim=0).unsqueeze(0)
        with torch.no_grad():
            v6 = tnet(x)[0].numpy().astype(np.float64)
        pred = pose_from_6dof(SixDof(v6[:3], v6[3:]))
        gt_rel = relative_pose(poses[i], poses[i + 1])
        err = pose_compose(pose_inverse(pred), gt_rel)
        rot_errs.append(np.rad2deg(np.linalg.norm(quat_to_axis_angle(err.rotation))))
        gt_t = gt_rel.translation
        pred_t = pred.translation
        denom = np.linalg.norm(gt_t) * np.linalg.norm(pred_t)
        if denom > 1e-12:
            cosang = np.clip(np.dot(gt_t, pred_t) / denom, -1.0, 1.0)
            dir_errs.append(np.rad2deg(np.arccos(cosang)))
        else:
            dir_errs.append(90.0)
    return {
        "rot_err_deg_median": float(np.median(rot_errs)),
        "trans_dir_deg_median": float(np.median(dir_errs)),
        "n_pairs": len(rot_errs),
    }


def evaluation_report(state: TrainState, config) -> dict:
    """Depth evaluation over the held-out test sets of both domains."""
    from .evaluation import PAPER_BASELINE, evaluate_testsets
    from .synthcolon.dataset import test_set_manifests

    tgt_tests = test_set_manifests(config.target_data)
    if not tgt_tests:
        raise ValueError(f"no test sets found under {config.target_data}")
    per_frame_csv = Path(config.run_dir) / "per_frame_metrics.csv" if config.run_dir else None
    report = evaluate_testsets(
        depth_predictor(state, "target"),
        tgt_tests,
        align=config.eval_align,
        per_frame_csv=per_frame_csv,
    )
    routes = {"target": {"per_set": report["per_set"], "mean": report["mean"]}}
    fused = evaluate_testsets(depth_predictor(state, "fused"), tgt_tests, align=config.eval_align)
    routes["fused"] = {"per_set": fused["per_set"], "mean": fused["mean"]}
    if getattr(config, "bidirectional", True):
        src_tests = test_set_manifests(config.source_data)
        if src_tests:
            src_report = evaluate_testsets(
                depth_predictor(state, "source"), src_tests, align=config.eval_align
            )
            routes["source"] = {"per_set": src_report["per_set"], "mean": src_report["mean"]}
    report["routes"] = routes
    report["paper_baseline"] = PAPER_BASELINE
    report["stage_seconds"] = dict(state.stage_seconds)
    return report


def run_all(config, config_echo: dict | None = None) -> tuple[TrainState, dict]:
    """Full schedule: stages 1-3 with per-stage checkpoints, loss curves, and
    a final evaluation report, all under config.run_dir."""
    run_dir = Path(config.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    src_manifest = DatasetManifest.load(Path(config.source_data) / "train")
    tgt_manifest = DatasetManifest.load(Path(config.target_data) / "train")
    src = FrameDataset(src_manifest)
    tgt = FrameDataset(tgt_manifest)
    h, w = src_manifest.intrinsics.height, src_manifest.intrinsics.width
    if (h, w) != config.frame_shape:
        raise ConfigError(
            "image_size",
            f"config expects frames of {config.frame_shape} but dataset frames are ({h}, {w})",
        )
    state = init_state(
        config.seed,
        image_size=(h, w),
        base_channels=config.base_channels,
        depth_range=(config.depth_min, config.depth_max),
    )
    state = run_stages(
        state,
        src,
        tgt,
        config.stages,
        run_dir=run_dir,
        bidirectional=getattr(config, "bidirectional", True),
    )
    write_losses_csv(state, run_dir / "losses.csv")
    report = evaluation_report(state, config)
    if config_echo is not None:
        report["config"] = config_echo
    (run_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    return state, report
