"""The supervised training loop: augment, forward, per-stack loss,
backprop, rmsprop, and plateau-triggered learning-rate decay.

Determinism contract: every random draw derives from counter-seeded
generators (epoch index for the shuffle, iteration index for
augmentation), so a run is a pure function of (seed, iteration range)
and an interrupted run resumed from a checkpoint replays bit-identical
batches.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .evaluation import pck, predict_dataset
from .heatmaps import render_targets
from .model import named_parameters, stacked_forward
from .optim import RMSprop
from .tensor import Graph, Tensor, add, backward, mse_loss
from .transforms import AugmentConfig, augment

logger = logging.getLogger(__name__)

# Seed-stream tags keeping the shuffle and augmentation draws disjoint.
_SHUFFLE_TAG = 17
_AUGMENT_TAG = 23


@dataclass
class TrainConfig:
    learning_rate: float = 2.5e-4
    lr_drop_factor: float = 5.0
    plateau_patience: int = 5
    rotation_max_deg: float = 30.0
    scale_jitter: tuple = (0.75, 1.25)
    flip_prob: float = 0.5
    sigma_px: float = 1.0
    batch_size: int = 4
    max_iterations: int = 2000
    eval_every: int = 250
    pck_threshold: float = 0.5
    intermediate_supervision: bool = True
    seed: int = 0

    def validate(self):
        positive = {
            "learning_rate": self.learning_rate,
            "lr_drop_factor": self.lr_drop_factor,
            "plateau_patience": self.plateau_patience,
            "sigma_px": self.sigma_px,
            "batch_size": self.batch_size,
            "max_iterations": self.max_iterations,
            "eval_every": self.eval_every,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        lo, hi = self.scale_jitter
        if not (0 < lo <= 1.0 <= hi):
            raise ValueError("scale_jitter must contain 1.0")
        if self.rotation_max_deg < 0:
            raise ValueError("rotation_max_deg must be nonnegative")

    def to_dict(self):
        d = dict(self.__dict__)
        d["scale_jitter"] = list(self.scale_jitter)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "scale_jitter" in d:
            d["scale_jitter"] = tuple(d["scale_jitter"])
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class TrainState:
    """Mutable loop state; checkpointing it makes training resumable."""

    iteration: int = 0
    lr: float = 2.5e-4
    lr_dropped: bool = False
    best_val: float = float("-inf")
    evals_since_best: int = 0

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class LogRecord:
    iteration: int
    lr: float
    train_loss: float
    val_acc: list  # one accuracy per stack, final stack last


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def to_csv(self):
        if not self.records:
            return "iteration,lr,train_loss\n"
        stacks = len(self.records[0].val_acc)
        header = "iteration,lr,train_loss," + ",".join(f"val_acc_stack{i}" for i in range(stacks))
        lines = [header]
        for r in self.records:
            accs = ",".join(f"{a:.6g}" for a in r.val_acc)
            lines.append(f"{r.iteration},{r.lr:.6g},{r.train_loss:.6g},{accs}")
        return "\n".join(lines) + "\n"


def multi_stack_loss(predictions, target):
    """Sum over stacks of per-stack mean squared error against one target."""
    if not predictions:
        raise ValueError("multi_stack_loss needs at least one stack prediction")
    total = mse_loss(predictions[0], target)
    for p in predictions[1:]:
        total = add(total, mse_loss(p, target))
    return total


def _epoch_permutation(seed, epoch, n):
    return np.random.default_rng([seed, _SHUFFLE_TAG, epoch]).permutation(n)


def _batch_indices(seed, iteration, n, batch_size):
    per_epoch = math.ceil(n / batch_size)
    epoch, pos = divmod(iteration, per_epoch)
    perm = _epoch_permutation(seed, epoch, n)
    return perm[pos * batch_size : (pos + 1) * batch_size]


def build_batch(aset, images, indices, rng, aug_cfg, model_cfg, sigma_px):
    """Augment and render one minibatch: (images, targets) tensors."""
    ratio = model_cfg.input_resolution / model_cfg.output_resolution
    crops, targets = [], []
    for i in indices:
        ann = aset.samples[i]
        img = np.asarray(images[i], dtype=np.float32) / 255.0
        sample = augment(img, ann, rng, aug_cfg, model_cfg.input_resolution, aset.flip_pairs)
        hs = render_targets(
            sample.joints / ratio, sample.present, model_cfg.output_resolution, sigma_px
        )
        crops.append(sample.image.transpose(2, 0, 1))
        targets.append(hs.values)
    return Tensor(np.stack(crops)), Tensor(np.stack(targets))


def validation_accuracy(params, aset, images, threshold, batch_size=8):
    """Pooled PCK per stack on a dataset, plain (non-flip) inference."""
    preds = predict_dataset(params, aset.samples, images, batch_size=batch_size)
    return [
        pck(preds.positions[s], aset.samples, threshold).mean
        for s in range(preds.positions.shape[0])
    ]


@dataclass
class TrainCallbacks:
    """Optional hooks; on_eval returning True stops training early."""

    on_iteration: object = None  # fn(iteration, loss)
    on_eval: object = None  # fn(LogRecord) -> bool | None
    on_checkpoint: object = None  # fn(iteration) used by the CLI wrapper


def train(params, train_data, config, val_data=None, callbacks=None, state=None, optimizer=None, log=None):
    """Run the optimization loop from state.iteration to max_iterations.

    train_data / val_data are (AnnotationSet, images) pairs; validation
    defaults to the training set. Returns (TrainLog, TrainState,
    RMSprop); passing back the same params/state/optimizer continues an
    interrupted run bit-identically.
    """
    config.validate()
    aset, images = train_data
    if not aset.samples:
        raise ValueError("training dataset is empty")
    val_aset, val_images = val_data if val_data is not None else train_data
    callbacks = callbacks or TrainCallbacks()
    state = state or TrainState(lr=config.learning_rate)
    log = log or TrainLog()
    if optimizer is None:
        optimizer = RMSprop([t for _, t in named_parameters(params)], lr=state.lr)
    aug_cfg = AugmentConfig(
        rotation_max_deg=config.rotation_max_deg,
        scale_jitter=config.scale_jitter,
        flip_prob=config.flip_prob,
    )
    model_cfg = params.config
    n = len(aset.samples)
    losses = []
    for iteration in range(state.iteration, config.max_iterations):
        indices = _batch_indices(config.seed, iteration, n, config.batch_size)
        rng = np.random.default_rng([config.seed, _AUGMENT_TAG, iteration])
        batch, target = build_batch(aset, images, indices, rng, aug_cfg, model_cfg, config.sigma_px)
        with Graph() as graph:
            stacked = stacked_forward(batch, params, "train")
            outs = stacked if config.intermediate_supervision else stacked[-1:]
            loss = multi_stack_loss(outs, target)
            loss_value = loss.item()
            if not math.isfinite(loss_value):
                raise RuntimeError(
                    f"non-finite loss {loss_value} at iteration {iteration} "
                    f"(batch indices {list(map(int, indices))})"
                )
            backward(loss, graph)
        optimizer.lr = state.lr
        optimizer.step()
        optimizer.zero_grad()
        losses.append(loss_value)
        state.iteration = iteration + 1
        if callbacks.on_iteration:
            callbacks.on_iteration(state.iteration, loss_value)
        is_eval = state.iteration % config.eval_every == 0 or state.iteration == config.max_iterations
        if not is_eval:
            continue
        accs = validation_accuracy(params, val_aset, val_images, config.pck_threshold)
        record = LogRecord(
            iteration=state.iteration,
            lr=state.lr,
            train_loss=float(np.mean(losses)),
            val_acc=accs,
        )
        losses = []
        log.records.append(record)
        final_acc = accs[-1]
        if math.isfinite(final_acc) and final_acc > state.best_val:
            state.best_val = final_acc
            state.evals_since_best = 0
        else:
            state.evals_since_best += 1
            if not state.lr_dropped and state.evals_since_best >= config.plateau_patience:
                state.lr = state.lr / config.lr_drop_factor
                state.lr_dropped = True
                logger.info(
                    "validation accuracy plateaued; learning rate dropped to %g", state.lr
                )
        stop = callbacks.on_eval(record) if callbacks.on_eval else None
        if callbacks.on_checkpoint:
            callbacks.on_checkpoint(state.iteration)
        if stop:
            break
    return log, state, optimizer
