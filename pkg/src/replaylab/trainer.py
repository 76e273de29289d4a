"""Training strategies over a stream: batch-level replay with review,
naive fine-tuning, and independent per-task models.

The replay strategy, per incoming batch t:

  for each epoch:
      if t > 1: draw D_M (size replay_sz, fresh draw every epoch, capped at
                the buffer size, without replacement) and train one shuffled
                SGD pass over D_M concatenated with D_t
      else:     train one pass over D_t alone
  after the last epoch, insert the batch's quota sample into memory

After the whole stream a review pass draws review_sz examples from memory
(with replacement when the request exceeds the buffer) and runs
``review_epochs`` SGD passes at the decayed learning rate.

Raster examples are turned into vectors by a caller-supplied ``vectorizer``
immediately before each SGD pass, so augmentation (when enabled) re-randomizes
every epoch for both current and replayed data.
"""

from __future__ import annotations

import json
import warnings as _warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import RoutingError
from .learner import (
    FrozenFeaturizer,
    LearnerParams,
    SgdConfig,
    checkpoint_nbytes,
    evaluate,
    forward_batch,
    mean_cross_entropy,
    sgd_epoch,
    stack_examples,
    to_checkpoint_bytes,
)
from .memory import ReplayMemory
from .metrics import BatchRecord, MetricsLog
from .streams import LabeledExample, StreamBatch, payload_nbytes

__all__ = [
    "TrainerConfig",
    "RunResult",
    "MultiTaskModel",
    "train_ber",
    "train_finetune_baseline",
    "train_multitask_nc",
    "review",
    "evaluate_multitask",
]

# maps a list of examples to vector examples; second arg is training mode
Vectorizer = Callable[[Sequence[LabeledExample], bool], list[LabeledExample]]


def _identity_vectorizer(examples: Sequence[LabeledExample], training: bool
                         ) -> list[LabeledExample]:
    return list(examples)


@dataclass(frozen=True)
class TrainerConfig:
    mem_sz: int
    replay_sz: int
    review_sz: int
    batch_sz: int
    lr_replay: float
    review_lr_decay: float = 0.5
    epochs: int = 1
    review_epochs: int = 1
    momentum: float = 0.0

    def __post_init__(self) -> None:
        for name in ("mem_sz", "replay_sz", "review_sz", "batch_sz", "epochs",
                     "review_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lr_replay <= 0:
            raise ValueError("lr_replay must be > 0")
        if not 0.0 < self.review_lr_decay <= 1.0:
            raise ValueError("review_lr_decay must be in (0, 1]")

    @property
    def lr_review(self) -> float:
        return self.lr_replay * self.review_lr_decay

    def sgd(self, lr: float) -> SgdConfig:
        return SgdConfig(lr=lr, batch_sz=self.batch_sz, momentum=self.momentum)


@dataclass
class RunResult:
    params: "LearnerParams | MultiTaskModel"
    featurizer: FrozenFeaturizer
    metrics: MetricsLog
    memory: ReplayMemory | None = None
    replay_draws: list[int] = field(default_factory=list)  # per-batch replayed examples


def _featurizer_nbytes(feat: FrozenFeaturizer) -> int:
    return 8 * (feat.weights.size + feat.bias.size)


def _data_nbytes(examples: Sequence[LabeledExample]) -> int:
    return sum(payload_nbytes(ex) for ex in examples)


class _Checkpointer:
    """Writes per-batch checkpoints and the memory snapshot for resumability."""

    def __init__(self, out_dir: str | Path | None) -> None:
        self.dir = Path(out_dir) if out_dir is not None else None
        if self.dir is not None:
            (self.dir / "checkpoints").mkdir(parents=True, exist_ok=True)

    def after_batch(self, t: int, params: LearnerParams,
                    memory: ReplayMemory | None) -> None:
        if self.dir is None:
            return
        (self.dir / "checkpoints" / f"batch_{t:04d}.bin").write_bytes(
            to_checkpoint_bytes(params))
        if memory is not None:
            (self.dir / "memory.bin").write_bytes(memory.to_snapshot())
        (self.dir / "state.json").write_text(
            json.dumps({"completed_batches": t}) + "\n")


def _run_stream(stream: Sequence[StreamBatch], cfg: TrainerConfig,
                featurizer: FrozenFeaturizer, params: LearnerParams,
                memory: ReplayMemory | None,
                val_set: Sequence[LabeledExample],
                test_set: Sequence[LabeledExample], *,
                sgd_rng: np.random.Generator,
                memory_rng: np.random.Generator | None,
                vectorizer: Vectorizer,
                run_review: bool,
                checkpoint_dir: str | Path | None) -> RunResult:
    if not stream:
        raise ValueError("stream must be non-empty")
    log = MetricsLog()
    ckpt = _Checkpointer(checkpoint_dir)
    val_vec = vectorizer(val_set, False)
    test_vec = vectorizer(test_set, False)
    eval_bytes = _data_nbytes(val_set) + _data_nbytes(test_set)
    param_bytes = checkpoint_nbytes(params.classes, params.width) + _featurizer_nbytes(featurizer)
    draws: list[int] = []

    for batch in stream:
        batch_draws = 0
        loss = float("nan")
        with log.phase("train"):
            for _ in range(cfg.epochs):
                if memory is not None and batch.index > 1 and len(memory) > 0:
                    # fresh replay draw every epoch; capped without replacement
                    d_m = memory.sample(min(cfg.replay_sz, len(memory)), memory_rng)
                    batch_draws += len(d_m)
                    d_train: list[LabeledExample] = d_m + list(batch.examples)
                else:
                    d_train = list(batch.examples)
                train_vec = vectorizer(d_train, True)
                params = sgd_epoch(params, featurizer, train_vec, cfg.sgd(cfg.lr_replay),
                                   sgd_rng)
                log.record_ram(
                    (memory.footprint() if memory is not None else 0)
                    + param_bytes + _data_nbytes(d_train) + eval_bytes)
                loss = mean_cross_entropy(params, featurizer, train_vec)
            if memory is not None:
                memory.update(batch, memory_rng)
        log.record_checkpoint(checkpoint_nbytes(params.classes, params.width))
        ckpt.after_batch(batch.index, params, memory)
        with log.phase("eval"):
            acc = evaluate(params, featurizer, val_vec)
        draws.append(batch_draws)
        log.add_record(BatchRecord(
            index=batch.index, phase="train", val_acc=acc, train_loss=loss,
            elapsed_ms=log.elapsed_ms(),
            ram_bytes=log.ram_samples[-1] if log.ram_samples else 0,
            disk_bytes=sum(log.checkpoint_bytes)
            + (memory.footprint() if memory is not None else 0)))

    if run_review and memory is not None:
        with log.phase("review"):
            params = review(params, featurizer, memory, cfg, memory_rng,
                            sgd_rng=sgd_rng, vectorizer=vectorizer)
        with log.phase("eval"):
            acc = evaluate(params, featurizer, val_vec)
        log.add_record(BatchRecord(
            index=len(stream), phase="review", val_acc=acc,
            train_loss=float("nan"), elapsed_ms=log.elapsed_ms(),
            ram_bytes=log.ram_samples[-1] if log.ram_samples else 0,
            disk_bytes=sum(log.checkpoint_bytes) + memory.footprint()))

    if memory is not None:
        log.memory_snapshot_bytes = memory.footprint()
    with log.phase("eval"):
        log.test_acc = evaluate(params, featurizer, test_vec)
    return RunResult(params=params, featurizer=featurizer, metrics=log,
                     memory=memory, replay_draws=draws)


def train_ber(stream: Sequence[StreamBatch], cfg: TrainerConfig,
              featurizer: FrozenFeaturizer, params: LearnerParams,
              memory: ReplayMemory,
              val_set: Sequence[LabeledExample],
              test_set: Sequence[LabeledExample], *,
              sgd_rng: np.random.Generator,
              memory_rng: np.random.Generator,
              vectorizer: Vectorizer | None = None,
              run_review: bool = True,
              checkpoint_dir: str | Path | None = None) -> RunResult:
    """Batch-level experience replay over the stream, optional review pass."""
    if memory.n_batches != len(stream):
        raise ValueError(
            f"memory declared n={memory.n_batches} but stream has {len(stream)} batches"
        )
    return _run_stream(stream, cfg, featurizer, params, memory, val_set, test_set,
                       sgd_rng=sgd_rng, memory_rng=memory_rng,
                       vectorizer=vectorizer or _identity_vectorizer,
                       run_review=run_review, checkpoint_dir=checkpoint_dir)


def train_finetune_baseline(stream: Sequence[StreamBatch], cfg: TrainerConfig,
                            featurizer: FrozenFeaturizer, params: LearnerParams,
                            val_set: Sequence[LabeledExample],
                            test_set: Sequence[LabeledExample], *,
                            sgd_rng: np.random.Generator,
                            vectorizer: Vectorizer | None = None,
                            checkpoint_dir: str | Path | None = None) -> RunResult:
    """The no-defenses baseline: the same loop without memory, replay, or review."""
    return _run_stream(stream, cfg, featurizer, params, None, val_set, test_set,
                       sgd_rng=sgd_rng, memory_rng=None,
                       vectorizer=vectorizer or _identity_vectorizer,
                       run_review=False, checkpoint_dir=checkpoint_dir)


def review(params: LearnerParams, featurizer: FrozenFeaturizer, memory: ReplayMemory,
           cfg: TrainerConfig, rng: np.random.Generator, *,
           sgd_rng: np.random.Generator | None = None,
           vectorizer: Vectorizer | None = None) -> LearnerParams:
    """Final review: one memory draw of review_sz, trained at the decayed lr."""
    if len(memory) == 0:
        _warnings.warn("review skipped: replay memory is empty", stacklevel=2)
        return params
    vectorizer = vectorizer or _identity_vectorizer
    sgd_rng = sgd_rng if sgd_rng is not None else rng
    d_r = memory.sample(cfg.review_sz, rng)
    for _ in range(cfg.review_epochs):
        params = sgd_epoch(params, featurizer, vectorizer(d_r, True),
                           cfg.sgd(cfg.lr_review), sgd_rng)
    return params


# ---------------------------------------------------------------------------
# Multi-Task-NC: one fresh model per task
# ---------------------------------------------------------------------------


@dataclass
class _TaskHead:
    classes: tuple[int, ...]  # global class ids, sorted
    params: LearnerParams


@dataclass
class MultiTaskModel:
    """Shared frozen featurizer with one class-restricted head per task."""

    featurizer: FrozenFeaturizer
    heads: dict[int, _TaskHead] = field(default_factory=dict)

    def class_to_task(self) -> dict[int, int]:
        return {c: t for t, head in self.heads.items() for c in head.classes}

    def predict_batch(self, x: np.ndarray, task_label: int) -> np.ndarray:
        """Global class predictions for feature rows routed to one task head."""
        if task_label not in self.heads:
            raise RoutingError(f"no model trained for task label {task_label}")
        head = self.heads[task_label]
        probs = forward_batch(head.params, self.featurizer, x)
        return np.asarray(head.classes, dtype=np.intp)[probs.argmax(axis=1)]


def evaluate_multitask(model: MultiTaskModel, dataset: Sequence[LabeledExample]) -> float:
    """Accuracy with task routing by class group; unseen tasks count as wrong."""
    if not dataset:
        raise ValueError("cannot evaluate on an empty dataset")
    c2t = model.class_to_task()
    by_task: dict[int, list[LabeledExample]] = {}
    unseen = 0
    for ex in dataset:
        task = c2t.get(ex.label)
        if task is None:
            unseen += 1
        else:
            by_task.setdefault(task, []).append(ex)
    correct = 0
    for task, examples in by_task.items():
        x, y = stack_examples(examples)
        correct += int((model.predict_batch(x, task) == y).sum())
    return correct / len(dataset)


def train_multitask_nc(stream: Sequence[StreamBatch], cfg: TrainerConfig,
                       val_set: Sequence[LabeledExample],
                       test_set: Sequence[LabeledExample], *,
                       input_dim: int,
                       sgd_rng: np.random.Generator,
                       width: int = 64,
                       featurizer_seed: int | None = None,
                       vectorizer: Vectorizer | None = None,
                       checkpoint_dir: str | Path | None = None) -> RunResult:
    """One fresh class-restricted head per task batch; no replay, no review.

    Every head shares the same seeded featurizer (the pretrained-weights
    analog) and is trained only on its own batch, so there is no interference
    between tasks; prediction routes by task label.
    """
    if not stream:
        raise ValueError("stream must be non-empty")
    for batch in stream:
        if batch.task_label is None:
            raise ValueError(f"batch {batch.index} lacks a task label")
    vectorizer = vectorizer or _identity_vectorizer
    log = MetricsLog()
    ckpt = _Checkpointer(checkpoint_dir)
    val_vec = vectorizer(val_set, False)
    test_vec = vectorizer(test_set, False)
    eval_bytes = _data_nbytes(val_set) + _data_nbytes(test_set)

    kwargs = {} if featurizer_seed is None else {"seed": featurizer_seed}
    featurizer = FrozenFeaturizer.create(input_dim, width, **kwargs)
    model = MultiTaskModel(featurizer=featurizer)

    for batch in stream:
        classes = tuple(sorted(batch.labels()))
        local = {c: i for i, c in enumerate(classes)}
        head = _TaskHead(classes=classes, params=LearnerParams.zeros(len(classes), width))
        loss = float("nan")
        with log.phase("train"):
            for _ in range(cfg.epochs):
                train_vec = vectorizer(list(batch.examples), True)
                localized = [
                    LabeledExample(label=local[ex.label], session=ex.session,
                                   features=ex.features)
                    for ex in train_vec
                ]
                head.params = sgd_epoch(head.params, featurizer, localized,
                                        cfg.sgd(cfg.lr_replay), sgd_rng)
                head_bytes = sum(
                    checkpoint_nbytes(h.params.classes, h.params.width)
                    for h in model.heads.values()
                ) + checkpoint_nbytes(head.params.classes, head.params.width)
                log.record_ram(head_bytes + _featurizer_nbytes(featurizer)
                               + _data_nbytes(batch.examples) + eval_bytes)
                loss = mean_cross_entropy(head.params, featurizer, localized)
        model.heads[batch.task_label] = head
        log.record_checkpoint(checkpoint_nbytes(head.params.classes, head.params.width))
        ckpt.after_batch(batch.index, head.params, None)
        with log.phase("eval"):
            acc = evaluate_multitask(model, val_vec)
        log.add_record(BatchRecord(
            index=batch.index, phase="train", val_acc=acc, train_loss=loss,
            elapsed_ms=log.elapsed_ms(),
            ram_bytes=log.ram_samples[-1] if log.ram_samples else 0,
            disk_bytes=sum(log.checkpoint_bytes)))

    with log.phase("eval"):
        log.test_acc = evaluate_multitask(model, test_vec)
    return RunResult(params=model, featurizer=featurizer, metrics=log, memory=None)
