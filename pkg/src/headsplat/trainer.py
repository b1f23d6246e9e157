"""Desk-scale training: the flow objective, supervision renders, the image head and AdamW.

A training *subject* bundles everything one identity contributes: the
conditioned portrait, the clean canonical-view state and a pool of
supervision cameras with their ground-truth images.
"""

from __future__ import annotations

import json
import math
import time
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import flow
from . import tensor as T
from .camera import CameraRig, RandomBounds, circular_rig, random_rig
from .dataset import CorpusIndex, SyntheticScene, load_entries
from .imgdecode import PREFIX as VAE_PREFIX
from .losses import LossWeights, metric_report, total_loss
from .pipeline import HeadModel, ModelConfig, config_from_checkpoint
from .tensor import AdamWConfig, adamw_step, cosine_lr


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    mode: str = "one-step"
    avas: bool = True
    render_views: int = 4
    avas_views: int = 4
    resample_views: bool = True
    l2_weight: float = 1.0
    perceptual_weight: float = 0.5
    lr: float = 2e-3
    lr_floor: float = 0.01
    schedule: str = "cosine"
    steps: int = 1000
    batch_size: int = 1
    seed: int = 0
    log_every: int = 1

    def __post_init__(self):
        if self.mode not in ("one-step", "multi-step"):
            raise ValueError(f"mode must be 'one-step' or 'multi-step', got {self.mode!r}")
        if self.render_views < 1 or self.avas_views < 1:
            raise ValueError("supervision view counts must be at least 1")
        if self.avas_views > 4:
            raise ValueError(f"the image head decodes 4 canonical views; avas_views={self.avas_views}")
        if self.avas and not self.model.avas:
            raise ValueError("image-head supervision requested but the model has no image head")
        if self.schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch size must be positive")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.l2_weight, self.perceptual_weight)

    def lr_at(self, step: int) -> float:
        if self.schedule == "constant":
            return self.lr
        return cosine_lr(step, self.steps, self.lr, self.lr_floor)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"unknown training config keys: {unknown}")
        doc = dict(doc)
        if "model" in doc:
            doc["model"] = ModelConfig.from_dict(doc["model"])
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class Subject:
    """One identity's training data in model precision."""

    name: str
    portrait: np.ndarray          # (H, W, 3)
    canonical: np.ndarray         # (4, H, W, 3) clean state signal
    rig: CameraRig                # supervision camera pool
    images: np.ndarray            # (len(rig), H, W, 3)

    def check(self, cfg: ModelConfig) -> None:
        hw = (cfg.height, cfg.width)
        if self.rig.resolution != hw or self.portrait.shape[:2] != hw:
            raise TrainingError(f"{self.name}: resolution {self.rig.resolution} does not match the model {hw}")


def default_train_rig(cfg: ModelConfig) -> CameraRig:
    return circular_rig(40, cfg.radius, (-20.0, 0.0, 20.0), cfg.height, cfg.width, cfg.fov_deg)


def default_heldout_rig(cfg: ModelConfig, n: int = 8, seed: int = 1000) -> CameraRig:
    """Novel orbit poses at the training distance, none on the training rings."""
    bounds = RandomBounds(cfg.radius, cfg.radius, -15.0, 15.0, 0.0)
    return random_rig(n, seed, bounds, cfg.height, cfg.width, cfg.fov_deg)


def subject_from_scene(scene: SyntheticScene, model: HeadModel, rig: CameraRig | None = None) -> Subject:
    rig = rig or default_train_rig(model.cfg)
    dt = model.cfg.dtype
    tile = model.cfg.tile
    canonical = scene.render_rig(model.rig, tile).astype(dt)
    return Subject(f"synthetic-{scene.seed}", canonical[0], canonical, rig, scene.render_rig(rig, tile).astype(dt))


def _nearest_views(rig: CameraRig, targets: CameraRig) -> list[int]:
    dirs = np.stack([c.center / np.linalg.norm(c.center) for c in rig])
    return [int(np.argmax(dirs @ (t.center / np.linalg.norm(t.center)))) for t in targets]


def subjects_from_corpus(index: CorpusIndex, model: HeadModel) -> list[Subject]:
    """Corpus records with cameras; canonical targets are the views closest to each canonical pose."""
    out = []
    for e in load_entries(index):
        if e.rig is None:
            raise TrainingError(f"{e.head_id}: record has no camera file; training needs posed views")
        images = np.stack(e.images).astype(model.cfg.dtype)
        near = _nearest_views(e.rig, model.rig)
        name = e.head_id if e.group_id is None else f"{e.head_id}/{e.group_id}"
        s = Subject(name, images[near[0]], images[near], e.rig, images)
        s.check(model.cfg)
        out.append(s)
    return out


def _view_indices(cfg: TrainConfig, subject: Subject, rng: np.random.Generator) -> np.ndarray:
    """Supervision views for one step: fresh each step, or drawn once per identity and reused."""
    n_pool = len(subject.rig)
    k = min(cfg.render_views, n_pool)
    if not cfg.resample_views:
        rng = np.random.default_rng([cfg.seed, zlib.crc32(subject.name.encode())])
    return np.sort(rng.choice(n_pool, size=k, replace=False))


def subject_loss(model: HeadModel, subject: Subject, cfg: TrainConfig, rng: np.random.Generator):
    """Forward one subject; returns (loss Tensor, parts dict)."""
    g_t, _, t = flow.make_training_pair(subject.canonical, model.plucker, rng, cfg.mode)
    x_cond = model.condition(subject.portrait, model.input_camera)
    z = model.tokens(g_t, t, x_cond)
    cloud = model.decode(z)
    idx = _view_indices(cfg, subject, rng)
    renders = T.stack([model.render(cloud, subject.rig[int(i)]) for i in idx])
    avas = avas_truth = None
    if cfg.avas:
        avas = model.decode_images(z)[: cfg.avas_views]
        avas_truth = subject.canonical[: cfg.avas_views]
    loss, parts = total_loss(renders, subject.images[idx], avas, avas_truth, cfg.weights)
    parts["t"] = t
    return loss, parts


def train_step(model: HeadModel, batch: list[Subject], cfg: TrainConfig, step: int,
               rng: np.random.Generator) -> dict:
    """Forward, backward and one AdamW update; returns the loss parts averaged over the batch."""
    store = model.store
    store.zero_grad()
    total, parts = None, {}
    for subject in batch:
        loss, p = subject_loss(model, subject, cfg, rng)
        total = loss if total is None else total + loss
        for k, v in p.items():
            parts[k] = parts.get(k, 0.0) + v / len(batch)
    total = total * (1.0 / len(batch))
    value = total.item()
    if not math.isfinite(value):
        raise TrainingError(f"non-finite loss {value} at step {step}")
    total.backward()
    lr = cfg.lr_at(step)
    adamw_step(store, lr, AdamWConfig(), skip_missing=() if cfg.avas else (VAE_PREFIX,))
    parts.update(loss=value, lr=lr)
    return parts


def train(model: HeadModel, subjects: list[Subject], cfg: TrainConfig, log_path=None,
          callback=None) -> list[dict]:
    """Run ``cfg.steps`` steps; returns the logged records (one JSON line each in ``log_path``)."""
    for s in subjects:
        s.check(model.cfg)
    rng = np.random.default_rng(cfg.seed)
    history = []
    log = open(log_path, "w") if log_path else None
    start = time.perf_counter()
    try:
        for step in range(cfg.steps):
            pick = rng.choice(len(subjects), size=min(cfg.batch_size, len(subjects)), replace=False)
            parts = train_step(model, [subjects[int(i)] for i in pick], cfg, step, rng)
            rec = {"step": step, "loss": parts["loss"], "lr": parts["lr"],
                   "wall": time.perf_counter() - start,
                   "parts": {k: v for k, v in parts.items() if k not in ("loss", "lr")}}
            history.append(rec)
            if log and step % cfg.log_every == 0:
                log.write(json.dumps(rec, sort_keys=True) + "\n")
                log.flush()
            if callback is not None:
                callback(rec)
    finally:
        if log:
            log.close()
    return history


# -- evaluation ----------------------------------------------------------------

def predict_views(model: HeadModel, portrait: np.ndarray, rig: CameraRig, steps: int = 1,
                  seed: int = 0) -> np.ndarray:
    """Reconstruct from the portrait (one-step or ``steps``-step) and render every camera of ``rig``."""
    if rig.resolution != (model.cfg.height, model.cfg.width):
        raise TrainingError(f"evaluation rig resolution {rig.resolution} does not match the model "
                            f"{(model.cfg.height, model.cfg.width)}")
    cloud = model.infer(portrait, seed) if steps == 1 else model.denoise(portrait, steps, seed)
    with T.no_grad():
        return np.stack([model.render(cloud, cam).data for cam in rig]).astype(np.float64)


def evaluate_subject(model: HeadModel, subject: Subject, rig: CameraRig | None = None,
                     truth: np.ndarray | None = None, steps: int = 1, seed: int = 0) -> dict:
    rig = rig or subject.rig
    truth = subject.images if truth is None else truth
    pred = predict_views(model, subject.portrait, rig, steps, seed)
    return metric_report((f"{subject.name}/{vid}", p, g) for vid, p, g in zip(rig.view_ids, pred, truth))


def evaluate(model: HeadModel, subjects: list[Subject], steps: int = 1, seed: int = 0) -> dict:
    """Metric report over every supervision view of every subject."""
    pairs = []
    for s in subjects:
        pred = predict_views(model, s.portrait, s.rig, steps, seed)
        pairs += [(f"{s.name}/{vid}", p, g) for vid, p, g in zip(s.rig.view_ids, pred, s.images)]
    report = metric_report(pairs)
    report["steps"] = steps
    return report


# -- checkpoints -----------------------------------------------------------------

def save_checkpoint(model: HeadModel, cfg: TrainConfig, path) -> None:
    model.save(path, extra={"train": {k: v for k, v in cfg.to_dict().items() if k != "model"}})


def load_checkpoint(path, drop_image_head: bool = False) -> tuple[HeadModel, TrainConfig | None]:
    model = HeadModel.load(path, drop_image_head)
    doc = config_from_checkpoint(path)
    train_doc = doc.get("train")
    cfg = None
    if train_doc is not None:
        cfg = TrainConfig.from_dict({**train_doc, "model": doc["model"]})
    return model, cfg
