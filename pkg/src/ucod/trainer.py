"""Teacher-student training with adaptive pseudo-label mixing.

Every batch runs one generator step (student trained on the mixed
pseudo-label, discriminator frozen, teacher follows by EMA) and then one
discriminator step on the same batch (everything else frozen).
"""
from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from . import checkpoint
from .apm import Discriminator, mix, mixing_weights
from .backbone import ImageTensor, extract_features
from .config import TrainConfig
from .decoder import DBADecoder, decode, ema_update, make_teacher, teacher_pseudo_label
from .errors import InputError, TrainingError
from .fixed_strategy import generate_label
from .look_twice import emit_training_patches, refine
from .losses import DISCRIMINATOR, GENERATOR, dis_loss, orth_loss, seg_loss, seg_loss_logits, total_loss
from .masks import IMAGE, SoftMask, resize_array

log = logging.getLogger(__name__)

DTYPE = torch.float64


@dataclass
class Sample:
    image: ImageTensor
    features: torch.Tensor  # (c, n, m)
    fs_label: torch.Tensor  # (n, m)
    augmented: bool = False


@dataclass
class TrainState:
    student: DBADecoder
    teacher: DBADecoder
    disc: torch.nn.Module
    opt_student: torch.optim.Optimizer | None
    opt_disc: torch.optim.Optimizer | None
    generator: torch.Generator
    epoch: int = 0
    step: int = 0
    history: list[dict] = field(default_factory=list)
    timings: dict = field(default_factory=dict)


def init_state(config: TrainConfig, disc: torch.nn.Module | None = None) -> TrainState:
    gen = torch.Generator().manual_seed(config.seed)
    student = DBADecoder(config.backbone.channels, generator=gen, dtype=DTYPE)
    teacher = make_teacher(student)
    if disc is None:
        disc = Discriminator(config.disc_input_size, generator=gen, dtype=DTYPE)
    opt_s = torch.optim.Adam(student.parameters(), lr=config.lr_student)
    disc_params = [p for p in disc.parameters() if p.requires_grad]
    opt_d = torch.optim.Adam(disc_params, lr=config.lr_disc) if disc_params else None
    return TrainState(student, teacher, disc, opt_s, opt_d, gen)


def prepare_image(image: ImageTensor, config: TrainConfig) -> ImageTensor:
    """Resize to the square training size (bilinear, aligned corners)."""
    size = (config.image_size, config.image_size)
    if image.size == size:
        return image
    return ImageTensor(np.clip(resize_array(image.pixels, size), 0.0, 1.0), image.source_id)


def make_sample(image: ImageTensor, config: TrainConfig, index: int, augmented: bool = False) -> Sample:
    image = prepare_image(image, config)
    feats = extract_features(image, config.backbone)
    label = generate_label(config.fixed_strategy, feats, seed=config.seed * 1_000_003 + index,
                           null_value=config.null_value, perlin_threshold=config.perlin_threshold,
                           similarity_threshold=config.similarity_threshold)
    return Sample(image, torch.from_numpy(feats.data).to(DTYPE),
                  torch.from_numpy(label.values).to(DTYPE), augmented)


def _stack(batch: Sequence[Sample]):
    return (torch.stack([s.features for s in batch]), torch.stack([s.fs_label for s in batch]))


def _check_finite(bundle, state, phase):
    if not math.isfinite(bundle.as_dict()["l_total"]):
        raise TrainingError(f"non-finite {phase} loss at step {state.step}: {bundle.as_dict()}")


def train_step_generator(batch: Sequence[Sample], state: TrainState, config: TrainConfig,
                         t: int | None = None):
    """Student update on the mixed pseudo-label, then the EMA teacher update."""
    feats, p_fs = _stack(batch)
    t = state.epoch if t is None else t
    with torch.no_grad():
        p_t = teacher_pseudo_label(state.teacher(feats))
    out = state.student(feats)
    with torch.no_grad():
        y_p1 = state.disc(p_fs).numpy()
        y_p2 = state.disc(out.y_fg.detach()).numpy()
    w = mixing_weights(config.mixing, y_p1, y_p2, t, config.epochs)
    target = mix(p_t, p_fs, torch.from_numpy(w).to(DTYPE)).detach()
    if config.decoder_output == "logits":
        l_seg = seg_loss_logits(out.logit_fg, out.logit_bg, target)
    else:
        l_seg = seg_loss(out.y_fg, out.y_bg, target)
    l_orth = orth_loss(out.q_fg, out.q_bg)
    bundle = total_loss(l_seg, l_orth, phase=GENERATOR, weights=config.loss_weights)
    _check_finite(bundle, state, GENERATOR)
    state.opt_student.zero_grad(set_to_none=True)
    bundle.l_total.backward()
    state.opt_student.step()
    ema_update(state.teacher, state.student, config.ema_momentum)
    record = {"step": state.step, "epoch": t, "T": config.epochs, **bundle.as_dict(),
              "w": float(np.mean(w)), "w_per_image": w.tolist(),
              "y_p1": y_p1.tolist(), "y_p2": y_p2.tolist()}
    state.step += 1
    state.history.append(record)
    return state, bundle


def train_step_discriminator(batch: Sequence[Sample], state: TrainState, config: TrainConfig):
    """BCE step: fixed-strategy masks labelled 1, detached student masks labelled 0."""
    feats, p_fs = _stack(batch)
    with torch.no_grad():
        y_fg = state.student(feats).y_fg
    probs = torch.cat([state.disc(p_fs), state.disc(y_fg)])
    labels = torch.cat([torch.ones(len(batch), dtype=probs.dtype), torch.zeros(len(batch), dtype=probs.dtype)])
    l_dis = dis_loss(probs, labels)
    bundle = total_loss(l_dis=l_dis, phase=DISCRIMINATOR, weights=config.loss_weights)
    _check_finite(bundle, state, DISCRIMINATOR)
    if state.opt_disc is not None:
        state.opt_disc.zero_grad(set_to_none=True)
        bundle.l_total.backward()
        state.opt_disc.step()
    accuracy = float(((probs.detach() >= 0.5).to(labels.dtype) == labels).to(DTYPE).mean())
    record = {"step": state.step, "epoch": state.epoch, **bundle.as_dict(), "accuracy": accuracy}
    state.step += 1
    state.history.append(record)
    return state, bundle


@torch.no_grad()
def predict_coarse(model: DBADecoder, image: ImageTensor, config: TrainConfig) -> np.ndarray:
    """Student foreground mask at the image's own resolution."""
    prepared = prepare_image(image, config)
    out = decode(extract_features(prepared, config.backbone), model)
    grid = out.y_fg.numpy()
    return np.clip(resize_array(grid, image.size), 0.0, 1.0)


def infer(image: ImageTensor, state: TrainState, config: TrainConfig,
          look_twice: bool | None = None) -> SoftMask:
    coarse = predict_coarse(state.student, image, config)
    if not (config.look_twice if look_twice is None else look_twice):
        return SoftMask(coarse, IMAGE, {"look_twice": False})

    def model(crop: ImageTensor) -> SoftMask:
        return SoftMask(predict_coarse(state.student, crop, config), IMAGE)

    refined = refine(image, coarse, model, config.tau, (config.image_size, config.image_size),
                     config.cc_threshold)
    refined.meta["look_twice"] = True
    return refined


def augmentation_samples(base: Sequence[Sample], state: TrainState, config: TrainConfig) -> list[Sample]:
    extra = []
    for sample in base:
        coarse = predict_coarse(state.student, sample.image, config)
        patches = emit_training_patches(sample.image, coarse, config.tau,
                                        (config.image_size, config.image_size), config.cc_threshold)
        for patch in patches:
            extra.append(make_sample(patch, config, len(base) + len(extra), augmented=True))
    return extra


class RunWriter:
    """Writes ``metrics.log`` (JSON lines) and per-epoch checkpoints under ``run_dir``."""

    def __init__(self, run_dir: str):
        self.run_dir = run_dir
        self.ckpt_dir = os.path.join(run_dir, "checkpoints")
        os.makedirs(self.ckpt_dir, exist_ok=True)
        self.log_path = os.path.join(run_dir, "metrics.log")
        self._fh = open(self.log_path, "w", encoding="utf-8")

    def log(self, record: dict):
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")

    def checkpoint(self, state: TrainState) -> str:
        path = os.path.join(self.ckpt_dir, f"epoch_{state.epoch:03d}.npz")
        checkpoint.save_checkpoint(path, state)
        checkpoint.save_checkpoint(os.path.join(self.ckpt_dir, "final.npz"), state)
        return path

    def close(self):
        self._fh.close()


def fit(images: Sequence[ImageTensor], config: TrainConfig, run_dir: str | None = None,
        disc: torch.nn.Module | None = None,
        on_epoch: Callable[[TrainState], None] | None = None) -> TrainState:
    """Train for ``config.epochs`` epochs on unlabeled images.

    Only images reach this function; ground truth never does.
    """
    if not images:
        raise InputError("training set is empty")
    torch.manual_seed(config.seed)
    timings = {}
    t0 = time.perf_counter()
    base = [make_sample(img, config, i) for i, img in enumerate(images)]
    timings["prepare"] = time.perf_counter() - t0
    state = init_state(config, disc)
    writer = RunWriter(run_dir) if run_dir else None
    try:
        for epoch in range(config.epochs):
            state.epoch = epoch
            pool = list(base)
            if config.look_twice_train:
                pool += augmentation_samples(base, state, config)
            order = torch.randperm(len(pool), generator=state.generator).tolist()
            n_before = len(state.history)
            for start in range(0, len(order), config.batch_size):
                batch = [pool[i] for i in order[start:start + config.batch_size]]
                state, _ = train_step_generator(batch, state, config)
                state, _ = train_step_discriminator(batch, state, config)
            if writer:
                for record in state.history[n_before:]:
                    writer.log(record)
                writer.log({"phase": "epoch", "epoch": epoch, "pool_size": len(pool),
                            "augmented": len(pool) - len(base)})
                state.epoch = epoch + 1
                writer.checkpoint(state)
                state.epoch = epoch
            if on_epoch:
                on_epoch(state)
        state.epoch = config.epochs
    finally:
        if writer:
            writer.close()
    timings["train"] = time.perf_counter() - t0 - timings["prepare"]
    state.timings.update(timings)
    return state


def load_state(path: str, config: TrainConfig) -> TrainState:
    return checkpoint.load_into(init_state(config), path)
