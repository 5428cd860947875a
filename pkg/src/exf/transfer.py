"""Source training, knowledge extraction, and target training by embedding transfer."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import losses, numcore
from .data import AugmentConfig, Batch, Dataset, make_batches
from .errors import ConfigError, DivergenceError, ExfError
from .model import MlpModel, backward, forward, init, param_count
from .optim import AdamWState, Schedule, adamw_step, lr_at

MODES = ("self", "dim_reduction", "compression", "classifier_distill")
TRANSFER_LOSSES = ("relaxed_contrastive", "relaxed_contrastive_abs", "relaxed_ms", "unrelaxed_relative")


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    warmup_epochs: int = 0
    min_lr: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TransferConfig:
    mode: str = "self"
    loss: str = "relaxed_contrastive"
    loss_cfg: losses.LossConfig = losses.LossConfig()
    source_dims: tuple = (16, 64, 32)
    target_dims: tuple = (16, 64, 32)
    epochs: int = 40
    batch_size: int = 32
    seed: int = 0
    optim: OptimConfig = OptimConfig()
    augment: AugmentConfig = AugmentConfig(noise_std=0.1, views=2)
    lambda_hkd: float = 1.0
    lambda_rc: float = 1.0

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.loss not in TRANSFER_LOSSES:
            raise ConfigError(f"unknown loss {self.loss!r}; expected one of {TRANSFER_LOSSES}")
        if self.epochs < 0 or self.batch_size < 3:
            raise ConfigError("need epochs >= 0 and batch_size >= 3")
        src, tgt = tuple(self.source_dims), tuple(self.target_dims)
        if len(src) < 2 or len(tgt) < 2:
            raise ConfigError("source_dims and target_dims need at least two entries")
        if src[0] != tgt[0]:
            raise ConfigError(f"source input width {src[0]} differs from target input width {tgt[0]}")
        if self.mode == "self" and src != tgt:
            raise ConfigError("self-transfer requires identical source and target architectures")
        if self.mode == "dim_reduction" and tgt[-1] > src[-1]:
            raise ConfigError(
                f"dim_reduction target output {tgt[-1]} exceeds source output {src[-1]}"
            )
        if self.mode == "compression" and param_count(tgt) >= param_count(src):
            raise ConfigError(
                f"compression target has {param_count(tgt)} parameters, "
                f"not fewer than the source's {param_count(src)}"
            )
        return self


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def append(self, epoch, loss, lr, wall_time, metrics=None):
        rec = {"epoch": epoch, "loss": loss, "lr": lr, "wall_time": wall_time}
        if metrics:
            rec["metrics"] = metrics
        self.records.append(rec)

    @property
    def losses(self) -> list:
        return [r["loss"] for r in self.records]

    def to_jsonl(self, include_wall_time=True) -> str:
        lines = []
        for r in self.records:
            r = dict(r)
            if not include_wall_time:
                r["wall_time"] = None
            lines.append(json.dumps(r, sort_keys=True))
        return "".join(line + "\n" for line in lines)

    def write(self, path, include_wall_time=True):
        Path(path).write_text(self.to_jsonl(include_wall_time), encoding="utf-8")


def _streams(seed, count):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def _normalize_backward(E, grad_unit):
    """Gradient through row-wise l2 normalization ``u = e / ||e||``."""
    norms = np.sqrt(np.einsum("ij,ij->i", E, E))[:, None]
    U = E / norms
    return (grad_unit - U * np.einsum("ij,ij->i", U, grad_unit)[:, None]) / norms


def _fit(model: MlpModel, ds: Dataset, epochs, batch_size, optim: OptimConfig, augment, rng,
         step_fn, log: TrainLog, eval_fn=None, what="training"):
    """Generic epoch loop: batches -> ``step_fn`` -> AdamW under the cosine schedule."""
    if epochs == 0:
        return model
    schedule = Schedule(epochs, optim.lr, optim.warmup_epochs, optim.min_lr)
    state = AdamWState(
        base_lr=optim.lr, beta1=optim.beta1, beta2=optim.beta2, eps=optim.eps,
        weight_decay=optim.weight_decay,
    )
    n_batches = len(ds) // batch_size
    for epoch in range(epochs):
        t0 = time.perf_counter()
        total, count = 0.0, 0
        lr = schedule.base_lr
        for b, batch in enumerate(make_batches(ds, batch_size, rng, augment)):
            lr = lr_at(schedule, epoch + b / n_batches)
            try:
                with np.errstate(over="raise", invalid="raise"):
                    value, grads = step_fn(model, batch)
            except FloatingPointError as exc:
                raise DivergenceError(
                    f"{what} diverged at epoch {epoch}, batch {b}: {exc}, lr={lr:.3g}"
                ) from exc
            except ExfError as exc:
                raise type(exc)(f"{what}, epoch {epoch}, batch {b}: {exc}") from exc
            if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads):
                raise DivergenceError(
                    f"{what} diverged at epoch {epoch}, batch {b}: loss={value}, lr={lr:.3g}"
                )
            with np.errstate(invalid="ignore", over="ignore"):
                params, state = adamw_step(model.params(), grads, state, lr)
            if not all(np.all(np.isfinite(p)) for p in params):
                raise DivergenceError(
                    f"{what} diverged at epoch {epoch}, batch {b}: non-finite parameters "
                    f"after the update, lr={lr:.3g}"
                )
            model.set_params(params)
            total += value
            count += 1
        metrics = eval_fn(model) if eval_fn else None
        log.append(epoch + 1, total / max(count, 1), lr, time.perf_counter() - t0, metrics)
    return model


def train_source(ds_train: Dataset, dims, epochs=40, seed=0, batch_size=32, delta=1.0,
                 optim: OptimConfig = OptimConfig(), augment=AugmentConfig(views=1),
                 eval_fn=None):
    """Train a source embedding model with the contrastive loss on l2-normalized outputs.

    Returns ``(model, log)``.  With ``epochs == 0`` the freshly initialized
    model is returned.
    """
    if dims[0] != ds_train.dim:
        raise ConfigError(f"source input width {dims[0]} != dataset width {ds_train.dim}")
    init_rng, batch_rng = _streams(seed, 2)
    model = init(dims, init_rng)
    log = TrainLog()

    def step(m, batch: Batch):
        X, y = batch.stacked()
        out, trace = forward(m, X)
        res = losses.contrastive(numcore.l2_normalize_rows(out), losses.class_equivalence(y), delta)
        g = backward(m, trace, _normalize_backward(out, res.grad))
        return res.value, g.params()

    _fit(model, ds_train, epochs, batch_size, optim, augment, batch_rng, step, log, eval_fn,
         "source training")
    return model, log


@dataclass(frozen=True)
class KnowledgeBatch:
    W: np.ndarray


def extract_knowledge(source: MlpModel, views, sigma=1.0) -> KnowledgeBatch:
    """Relaxed relation labels from l2-normalized source embeddings of a batch.

    ``views`` is a :class:`Batch` (its views are stacked) or a feature matrix.
    """
    X = views.stacked()[0] if isinstance(views, Batch) else numcore.as_matrix(views)
    emb = numcore.l2_normalize_rows(source.embed(X))
    return KnowledgeBatch(numcore.gaussian_weights(numcore.pairwise_distances(emb), sigma))


def transfer_loss(name, emb, W, y, cfg: losses.LossConfig):
    """Evaluate one of the transfer losses on target embeddings; returns (value, dL/demb)."""
    if name == "relaxed_contrastive":
        res = losses.relaxed_contrastive(emb, W, cfg.delta)
    elif name == "unrelaxed_relative":
        res = losses.unrelaxed_relative(emb, losses.class_equivalence(y), cfg.delta)
    elif name == "relaxed_ms":
        res = losses.relaxed_ms(emb, W, cfg)
    elif name == "relaxed_contrastive_abs":
        # absolute-distance form needs normalized embeddings to keep the margin meaningful
        res = losses.relaxed_contrastive_abs(numcore.l2_normalize_rows(emb), W, cfg.delta)
        return res.value, _normalize_backward(emb, res.grad)
    else:
        raise ConfigError(f"unknown loss {name!r}")
    return res.value, res.grad


def train_target(source: MlpModel, ds_train: Dataset, cfg: TransferConfig, eval_fn=None):
    """Train a fresh target model solely from the source's pairwise knowledge.

    Returns ``(target, log)``.  The source is only read.
    """
    cfg.validate()
    if cfg.mode == "classifier_distill":
        raise ConfigError("classifier_distill runs go through distill_classifier")
    if tuple(source.layer_dims) != tuple(cfg.source_dims):
        raise ConfigError(
            f"source checkpoint dims {source.layer_dims} differ from config {tuple(cfg.source_dims)}"
        )
    init_rng, batch_rng = _streams(cfg.seed, 2)
    target = init(cfg.target_dims, init_rng)
    log = TrainLog()

    def step(m, batch: Batch):
        X, y = batch.stacked()
        W = extract_knowledge(source, X, cfg.loss_cfg.sigma).W
        out, trace = forward(m, X)
        value, g_out = transfer_loss(cfg.loss, out, W, y, cfg.loss_cfg)
        return value, backward(m, trace, g_out).params()

    _fit(target, ds_train, cfg.epochs, cfg.batch_size, cfg.optim, cfg.augment, batch_rng, step,
         log, eval_fn, "target training")
    return target, log


def classifier_features(model: MlpModel, X) -> np.ndarray:
    """Penultimate activations: the input to the classifier head."""
    return forward(model, X)[1].penultimate


def train_classifier(ds: Dataset, dims, epochs=40, seed=0, batch_size=32,
                     optim: OptimConfig = OptimConfig(), augment=AugmentConfig(views=1)):
    """Plain cross-entropy classifier (the distillation teacher)."""
    if dims[-1] != ds.class_count:
        raise ConfigError(f"classifier head width {dims[-1]} != class count {ds.class_count}")
    init_rng, batch_rng = _streams(seed, 2)
    model = init(dims, init_rng)
    log = TrainLog()

    def step(m, batch):
        X, y = batch.stacked()
        logits, trace = forward(m, X)
        res = losses.cross_entropy(logits, y)
        return res.value, backward(m, trace, res.grad).params()

    _fit(model, ds, epochs, batch_size, optim, augment, batch_rng, step, log, None,
         "classifier training")
    return model, log


def _unit_rows_or_zero(F):
    """Row-normalize ReLU features; an all-zero row (every unit inactive) stays zero."""
    norms = np.sqrt(np.einsum("ij,ij->i", F, F))[:, None]
    return np.divide(F, norms, out=np.zeros_like(F), where=norms > 0)


def distill_classifier(source_cls: MlpModel, ds: Dataset, cfg: TransferConfig, eval_fn=None):
    """Train a student classifier with cross-entropy + HKD + relaxed contrastive.

    The relaxed contrastive term acts on the student's penultimate features,
    with weights from the teacher's l2-normalized penultimate features.
    Returns ``(student, log)``.
    """
    if cfg.target_dims[-1] != ds.class_count or source_cls.out_dim != ds.class_count:
        raise ConfigError("teacher and student heads must both match the class count")
    if cfg.target_dims[0] != source_cls.in_dim:
        raise ConfigError("teacher and student input widths differ")
    if len(cfg.target_dims) < 3 and cfg.lambda_rc:
        raise ConfigError("student needs a hidden layer to carry the feature-level loss")
    init_rng, batch_rng = _streams(cfg.seed, 2)
    student = init(cfg.target_dims, init_rng)
    log = TrainLog()
    T = cfg.loss_cfg.temperature

    def step(m, batch):
        X, y = batch.stacked()
        logits, trace = forward(m, X)
        res = losses.cross_entropy(logits, y)
        value, g_logits = res.value, res.grad
        hidden = None
        if cfg.lambda_hkd or cfg.lambda_rc:
            t_logits, t_trace = forward(source_cls, X)
        if cfg.lambda_hkd:
            kd = losses.hkd_kl(logits, t_logits, T)
            value += cfg.lambda_hkd * kd.value
            g_logits = g_logits + cfg.lambda_hkd * kd.grad
        if cfg.lambda_rc:
            emb = _unit_rows_or_zero(t_trace.penultimate)
            W = numcore.gaussian_weights(numcore.pairwise_distances(emb), cfg.loss_cfg.sigma)
            rc = losses.relaxed_contrastive(trace.penultimate, W, cfg.loss_cfg.delta)
            value += cfg.lambda_rc * rc.value
            hidden = {m.n_layers - 2: cfg.lambda_rc * rc.grad}
        return value, backward(m, trace, g_logits, hidden).params()

    _fit(student, ds, cfg.epochs, cfg.batch_size, cfg.optim, cfg.augment, batch_rng, step, log,
         eval_fn, "classifier distillation")
    return student, log


def accuracy(model: MlpModel, ds: Dataset) -> float:
    return float(np.mean(model.embed(ds.features).argmax(axis=1) == ds.labels))


def with_overrides(cfg: TransferConfig, **kw) -> TransferConfig:
    return replace(cfg, **kw)
