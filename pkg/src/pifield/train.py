"""Losses, optimizers and training loops for the surface and texture fields."""
from __future__ import annotations

import hashlib
import json
import logging
import time
import zlib
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .parallel import map_chunks
from .sampler import SamplingConfig, sample_occupancy, sample_texture

log = logging.getLogger(__name__)

POINT_CHUNK = 2048


class TrainingDiverged(RuntimeError):
    pass


# --- losses -------------------------------------------------------------------

def loss_surface(pred, labels):
    """Mean squared error between predicted and ground-truth occupancy."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if pred.size == 0:
        raise ValueError("empty batch")
    if pred.shape != labels.shape:
        raise ValueError("pred and labels differ in length")
    return float(np.mean((pred - labels) ** 2))


def loss_surface_grad(pred, labels):
    pred = np.asarray(pred, dtype=np.float64)
    return 2.0 * (pred - np.asarray(labels, dtype=np.float64).reshape(pred.shape)) / pred.shape[0]


def loss_texture(pred, labels):
    """Per-sample L1 over RGB, averaged over samples."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    labels = np.asarray(labels, dtype=np.float64)
    if pred.shape[0] == 0:
        raise ValueError("empty batch")
    if labels.shape != pred.shape:
        raise ValueError("pred and labels differ in shape")
    return float(np.abs(pred - labels).sum(axis=1).mean())


def loss_texture_grad(pred, labels):
    return np.sign(pred - labels) / pred.shape[0]


# --- optimizers -----------------------------------------------------------------

def step_rmsprop(params, grads, state, lr, alpha=0.99, eps=1e-8):
    """One RMSProp update; returns (new_params, new_state). ``state`` may be None."""
    _check_shapes(params, grads)
    sq = state["square_avg"] if state else [np.zeros_like(p) for p in params]
    new_sq = [alpha * s + (1.0 - alpha) * g * g for s, g in zip(sq, grads)]
    new_params = [p - lr * g / (np.sqrt(s) + eps) for p, g, s in zip(params, grads, new_sq)]
    return new_params, {"square_avg": new_sq}


def step_adam(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns (new_params, new_state)."""
    _check_shapes(params, grads)
    if not state:
        state = {"step": 0, "m": [np.zeros_like(p) for p in params],
                 "v": [np.zeros_like(p) for p in params]}
    t = state["step"] + 1
    m = [beta1 * m_ + (1.0 - beta1) * g for m_, g in zip(state["m"], grads)]
    v = [beta2 * v_ + (1.0 - beta2) * g * g for v_, g in zip(state["v"], grads)]
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    new_params = [p - lr * (m_ / c1) / (np.sqrt(v_ / c2) + eps)
                  for p, m_, v_ in zip(params, m, v)]
    return new_params, {"step": t, "m": m, "v": v}


def _check_shapes(params, grads):
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ValueError("parameter and gradient shapes differ")


class Optimizer:
    """Applies a functional step to a list of arrays in place."""

    def __init__(self, kind, lr):
        if kind not in ("rmsprop", "adam"):
            raise ValueError(f"unknown optimizer {kind!r}")
        self.kind = kind
        self.lr = lr
        self.state = None

    def step(self, params, grads):
        fn = step_rmsprop if self.kind == "rmsprop" else step_adam
        new, self.state = fn(params, grads, self.state, self.lr)
        for p, q in zip(params, new):
            p[...] = q


# --- configuration and reporting --------------------------------------------------

@dataclass
class TrainConfig:
    optimizer: str = "rmsprop"
    learning_rate: float = 1e-3
    lr_decay_factor: float = 0.1
    lr_decay_epoch: int | None = None  # None: 10/12 of the run, as in the full schedule
    epochs: int = 12
    points_per_object: int = 5000
    batch_objects: int = 1
    seed: int = 0
    resample_each_epoch: bool = True
    finetune_lr: float = 1e-4
    finetune_views: int = 3

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_objects < 1:
            raise ValueError("batch_objects must be >= 1")
        if self.optimizer not in ("rmsprop", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    @classmethod
    def surface(cls, **kw):
        return cls(**{"optimizer": "rmsprop", "points_per_object": 5000, **kw})

    @classmethod
    def texture(cls, **kw):
        return cls(**{"optimizer": "adam", "points_per_object": 10000,
                      "lr_decay_factor": 1.0, **kw})

    def decay_epoch(self):
        if self.lr_decay_epoch is not None:
            return self.lr_decay_epoch
        return max(1, int(round(self.epochs * 10 / 12)))

    def lr_at(self, epoch, base=None):
        lr = self.learning_rate if base is None else base
        return lr * self.lr_decay_factor if epoch >= self.decay_epoch() else lr

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    epoch_losses: list = field(default_factory=list)
    epoch_lrs: list = field(default_factory=list)
    epoch_checksums: list = field(default_factory=list)
    seed_trail: list = field(default_factory=list)
    wall_time_s: float = 0.0
    checksum: str = ""

    def records(self):
        """One deterministic record per epoch; wall time is kept out of these."""
        return [{"epoch": i, "loss": l, "lr": lr, "seed": s, "checksum": c}
                for i, (l, lr, s, c) in enumerate(zip(self.epoch_losses, self.epoch_lrs,
                                                      self.seed_trail, self.epoch_checksums))]

    def to_jsonl(self):
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())


def derive_rng(seed, tag, *keys):
    """Independent stream for ``tag`` (e.g. "points") at position ``keys``."""
    return np.random.default_rng(np.random.SeedSequence(
        [int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(tag.encode()), *[int(k) for k in keys]]))


def params_checksum(arrays):
    h = hashlib.sha256()
    for p in arrays:
        h.update(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return h.hexdigest()


# --- tasks ------------------------------------------------------------------------

class SurfaceTask:
    """Occupancy regression: features from one trainable extractor."""

    def __init__(self, extractor):
        self.extractor = extractor

    @property
    def extractors(self):
        return [self.extractor]

    def sample(self, subject, sampling, rng):
        return sample_occupancy(subject.mesh, subject.oracle, sampling, rng)

    def view_inputs(self, view, points):
        xy, z = view.camera.project(points)
        raw = self.extractor.raw(view.pyramid(self.extractor), xy)
        return self.extractor.project(raw), z, [raw]

    def loss(self, out, labels):
        return loss_surface(out[:, 0], labels), loss_surface_grad(out[:, 0], labels)[:, None]

    def extractor_grads(self, raws, grad_input):
        k = self.extractor.feature_dim
        return self.extractor.backward(raws[0], grad_input[:, :k])


class TextureTask:
    """Color regression conditioned on a frozen surface-feature extractor."""

    def __init__(self, extractor_c, extractor_v):
        self.extractor = extractor_c
        self.frozen = extractor_v

    @property
    def extractors(self):
        return [self.extractor]

    def sample(self, subject, sampling, rng):
        return sample_texture(subject.mesh, sampling, rng)

    def view_inputs(self, view, points):
        xy, z = view.camera.project(points)
        raw = self.extractor.raw(view.pyramid(self.extractor), xy)
        fv = self.frozen.extract(view.pyramid(self.frozen), xy)
        return np.concatenate([self.extractor.project(raw), fv], axis=1), z, [raw]

    def loss(self, out, labels):
        return loss_texture(out, labels), loss_texture_grad(out, labels)

    def extractor_grads(self, raws, grad_input):
        k = self.extractor.feature_dim
        return self.extractor.backward(raws[0], grad_input[:, :k])


def batch_loss_and_grads(task, net, views, points, labels, fused):
    """Loss and gradients (net params then extractor params) over one sample batch.

    Points are processed in fixed chunks and reduced in chunk order, so the result
    does not depend on the worker count.
    """
    n = len(points)

    def run(s, e):
        feats, zs, raws = [], [], []
        for v in views:
            f, z, r = task.view_inputs(v, points[s:e])
            feats.append(f)
            zs.append(z)
            raws.append(r)
        cache = []
        if fused:
            out = net.fuse_forward(feats, zs, cache=cache)
        else:
            out = net.forward(feats[0], zs[0], cache=cache)
        loss, upstream = task.loss(out, labels[s:e])
        # chunk losses are means over the chunk; rescale to the full-batch mean
        w = (e - s) / n
        if fused:
            grads, g_in = net.fuse_backward(cache, out, upstream * w)
        else:
            grads, g_in = net.backward(cache, out, upstream * w)
            g_in = g_in[None]
        ext = None
        for raw, g in zip(raws, g_in):
            eg = task.extractor_grads(raw, g)
            ext = eg if ext is None else [a + b for a, b in zip(ext, eg)]
        return loss * w, grads + (ext or [])

    parts = map_chunks(run, n, POINT_CHUNK)
    loss = 0.0
    total = None
    for l, g in parts:
        loss += l
        total = g if total is None else [a + b for a, b in zip(total, g)]
    return loss, total


def _trainable(net, task):
    return net.params + [p for ex in task.extractors for p in ex.params]


def _fit(task, subjects, net, cfg, sampling, n_views, lr, per_view_items, decay=True):
    if sampling is None:
        sampling = SamplingConfig(n_points=cfg.points_per_object, seed=cfg.seed)
    else:
        sampling = replace(sampling, n_points=cfg.points_per_object)
    for s in subjects:
        if len(s.views) < n_views:
            raise ValueError(f"subject has {len(s.views)} views, need {n_views}")
    fused = n_views > 1 or (not per_view_items and net.spec.embed_layer is not None)
    if per_view_items:
        items = [(si, vi) for si, s in enumerate(subjects) for vi in range(len(s.views))]
    else:
        items = [(si, None) for si in range(len(subjects))]
    params = _trainable(net, task)
    opt = Optimizer(cfg.optimizer, lr)
    report = TrainReport()
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        opt.lr = cfg.lr_at(epoch, lr) if decay else lr
        order = derive_rng(cfg.seed, "order", epoch).permutation(len(items))
        point_epoch = epoch if cfg.resample_each_epoch else 0
        losses = []
        for start in range(0, len(order), cfg.batch_objects):
            batch = order[start:start + cfg.batch_objects]
            total, batch_loss = None, 0.0
            for pos, k in enumerate(batch, start=start):
                si, vi = items[k]
                subject = subjects[si]
                prng = derive_rng(cfg.seed, "points", point_epoch, pos if cfg.resample_each_epoch else k)
                sb = task.sample(subject, sampling, prng)
                if vi is None:
                    vrng = derive_rng(cfg.seed, "views", epoch, pos)
                    picks = vrng.choice(len(subject.views), size=n_views, replace=False)
                    views = [subject.views[i] for i in sorted(picks)]
                else:
                    views = [subject.views[vi]]
                loss, grads = batch_loss_and_grads(task, net, views, sb.points, sb.labels, fused)
                if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                    raise TrainingDiverged(
                        f"non-finite loss/gradient at epoch {epoch}, item {k} "
                        f"(subject {si}, loss={loss})")
                batch_loss += loss
                total = grads if total is None else [a + b for a, b in zip(total, grads)]
            scale = 1.0 / len(batch)
            opt.step(params, [g * scale for g in total])
            losses.append(batch_loss * scale)
        report.epoch_losses.append(float(np.mean(losses)))
        report.epoch_lrs.append(opt.lr)
        report.seed_trail.append([int(cfg.seed), epoch])
        report.epoch_checksums.append(params_checksum(params))
        log.info("epoch %d loss %.6f lr %.2e", epoch, report.epoch_losses[-1], opt.lr)
    report.wall_time_s = time.perf_counter() - t0
    report.checksum = params_checksum(params)
    return report


def train_surface(subjects, extractor, net, cfg, sampling=None):
    """Single-view occupancy training; every (subject, view) pair is one item per epoch."""
    return _fit(SurfaceTask(extractor), subjects, net, cfg, sampling, 1, cfg.learning_rate,
                per_view_items=True)


def train_texture(subjects, extractor_c, extractor_v, net_c, cfg, sampling=None):
    """Color training; ``extractor_v`` supplies surface features and is never updated."""
    return _fit(TextureTask(extractor_c, extractor_v), subjects, net_c, cfg, sampling, 1,
                cfg.learning_rate, per_view_items=True)


def finetune_multiview(net, extractor, subjects, cfg, sampling=None, n_views=None):
    """Continue training through the fused path with ``n_views`` random views per step."""
    if net.spec.embed_layer is None:
        raise ValueError("multi-view fine-tuning needs embed_layer set")
    n_views = cfg.finetune_views if n_views is None else n_views
    return _fit(SurfaceTask(extractor), subjects, net, cfg, sampling, n_views, cfg.finetune_lr,
                per_view_items=False, decay=False)
