"""Frozen random featurizer plus a trainable linear-softmax head.

The featurizer is a fixed seeded ReLU projection standing in for shared
pretrained backbone weights: every fresh learner built from the same seed
gets bit-identical features. Only the head (W: (C, h), b: (C,)) trains, by
plain minibatch SGD on mean cross-entropy.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import LoadError, NumericsError
from .streams import LabeledExample

__all__ = [
    "DEFAULT_FEATURIZER_SEED",
    "FrozenFeaturizer",
    "LearnerParams",
    "SgdConfig",
    "forward",
    "forward_batch",
    "gradient",
    "mean_cross_entropy",
    "sgd_epoch",
    "evaluate",
    "fresh_learner",
    "stack_examples",
    "checkpoint_nbytes",
    "to_checkpoint_bytes",
    "from_checkpoint_bytes",
]

# shared "pretrained weights" analog: one seed for every fresh learner
DEFAULT_FEATURIZER_SEED = 101

_CKPT_MAGIC = b"LPRM"
_CKPT_HEADER = struct.Struct("<4sIQQ")  # magic, version, classes, width
_CKPT_VERSION = 1


@dataclass(frozen=True)
class FrozenFeaturizer:
    """Immutable ReLU projection phi(x) = max(0, W_f x + b_f)."""

    weights: np.ndarray  # (h, d)
    bias: np.ndarray     # (h,)
    seed: int

    def __post_init__(self) -> None:
        self.weights.setflags(write=False)
        self.bias.setflags(write=False)

    @classmethod
    def create(cls, input_dim: int, width: int = 64,
               seed: int = DEFAULT_FEATURIZER_SEED) -> "FrozenFeaturizer":
        # i.i.d. Gaussian entries at scale 1/sqrt(d) keep activations O(1)
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        weights = rng.normal(0.0, 1.0 / np.sqrt(input_dim), (width, input_dim))
        return cls(weights=weights, bias=np.zeros(width), seed=seed)

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def width(self) -> int:
        return self.weights.shape[0]

    def transform(self, x: np.ndarray) -> np.ndarray:
        """Featurize one vector (d,) or a stack (N, d)."""
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise NumericsError("non-finite featurizer input")
        return np.maximum(x @ self.weights.T + self.bias, 0.0)


@dataclass
class LearnerParams:
    """Trainable head: weights (C, h) and bias (C,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"head shapes mismatch: W {self.weights.shape}, b {self.bias.shape}"
            )

    @classmethod
    def zeros(cls, classes: int, width: int) -> "LearnerParams":
        return cls(weights=np.zeros((classes, width)), bias=np.zeros(classes))

    @property
    def classes(self) -> int:
        return self.weights.shape[0]

    @property
    def width(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "LearnerParams":
        return LearnerParams(weights=self.weights.copy(), bias=self.bias.copy())


@dataclass(frozen=True)
class SgdConfig:
    lr: float
    batch_sz: int
    momentum: float = 0.0

    def __post_init__(self) -> None:
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.batch_sz < 1:
            raise ValueError("batch_sz must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def stack_examples(data: list[LabeledExample] | tuple[LabeledExample, ...]
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Stack vector examples into (X (N, d), y (N,)); raster payloads must be
    vectorized upstream."""
    if not data:
        raise ValueError("empty example list")
    feats = []
    for ex in data:
        if ex.features is None:
            raise ValueError("example holds a raster; vectorize before training")
        feats.append(ex.features)
    return np.stack(feats), np.array([ex.label for ex in data], dtype=np.intp)


def forward_batch(params: LearnerParams, feat: FrozenFeaturizer, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a stack (N, d) -> (N, C)."""
    phi = feat.transform(x)
    return _softmax(phi @ params.weights.T + params.bias)


def forward(params: LearnerParams, feat: FrozenFeaturizer, x: np.ndarray) -> np.ndarray:
    """Class probabilities for one input vector (d,) -> (C,)."""
    return forward_batch(params, feat, np.asarray(x)[None, :])[0]


def gradient(params: LearnerParams, feat: FrozenFeaturizer,
             minibatch: list[LabeledExample]) -> tuple[np.ndarray, np.ndarray]:
    """Analytic mean cross-entropy gradient: dW = (p - y) phi^T / N, db likewise."""
    x, y = stack_examples(minibatch)
    phi = feat.transform(x)
    return _gradient_arrays(params, phi, y)


def _gradient_arrays(params: LearnerParams, phi: np.ndarray, y: np.ndarray
                     ) -> tuple[np.ndarray, np.ndarray]:
    n = phi.shape[0]
    p = _softmax(phi @ params.weights.T + params.bias)
    g = p.copy()
    g[np.arange(n), y] -= 1.0
    g /= n
    return g.T @ phi, g.sum(axis=0)


def mean_cross_entropy(params: LearnerParams, feat: FrozenFeaturizer,
                       data: list[LabeledExample] | tuple[LabeledExample, ...]) -> float:
    """Mean negative log-likelihood, computed via logsumexp for stability."""
    x, y = stack_examples(data)
    phi = feat.transform(x)
    logits = phi @ params.weights.T + params.bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-log_probs[np.arange(len(y)), y].mean())


def sgd_epoch(params: LearnerParams, feat: FrozenFeaturizer,
              data: list[LabeledExample] | tuple[LabeledExample, ...],
              cfg: SgdConfig, rng: np.random.Generator) -> LearnerParams:
    """One shuffled pass of minibatch SGD over ``data``; returns new params.

    Momentum velocity starts at zero each epoch (plain SGD when momentum=0).
    """
    x, y = stack_examples(data)
    perm = rng.permutation(len(y))
    x, y = x[perm], y[perm]
    phi = feat.transform(x)

    new = params.copy()
    vel_w = np.zeros_like(new.weights)
    vel_b = np.zeros_like(new.bias)
    for i, start in enumerate(range(0, len(y), cfg.batch_sz)):
        phi_b = phi[start : start + cfg.batch_sz]
        y_b = y[start : start + cfg.batch_sz]
        dw, db = _gradient_arrays(new, phi_b, y_b)
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise NumericsError(f"non-finite gradient in minibatch {i}")
        if cfg.momentum:
            vel_w = cfg.momentum * vel_w + dw
            vel_b = cfg.momentum * vel_b + db
            dw, db = vel_w, vel_b
        new.weights -= cfg.lr * dw
        new.bias -= cfg.lr * db
    if not (np.all(np.isfinite(new.weights)) and np.all(np.isfinite(new.bias))):
        raise NumericsError("non-finite parameters after epoch")
    return new


def evaluate(params: LearnerParams, feat: FrozenFeaturizer,
             dataset: list[LabeledExample] | tuple[LabeledExample, ...]) -> float:
    """Fraction of argmax-correct predictions; ties resolve to the lowest class id."""
    if not dataset:
        raise ValueError("cannot evaluate on an empty dataset")
    x, y = stack_examples(dataset)
    probs = forward_batch(params, feat, x)
    return float((probs.argmax(axis=1) == y).mean())


def fresh_learner(input_dim: int, classes: int, width: int = 64,
                  seed: int = DEFAULT_FEATURIZER_SEED
                  ) -> tuple[FrozenFeaturizer, LearnerParams]:
    """Shared-seed featurizer plus a zero head (uniform initial predictions)."""
    return FrozenFeaturizer.create(input_dim, width, seed), LearnerParams.zeros(classes, width)


# -- checkpoint format -------------------------------------------------------


def checkpoint_nbytes(classes: int, width: int) -> int:
    return _CKPT_HEADER.size + 8 * (classes * width + classes)


def to_checkpoint_bytes(params: LearnerParams) -> bytes:
    head = _CKPT_HEADER.pack(_CKPT_MAGIC, _CKPT_VERSION, params.classes, params.width)
    return head + params.weights.astype(np.float64).tobytes() + \
        params.bias.astype(np.float64).tobytes()


def from_checkpoint_bytes(data: bytes) -> LearnerParams:
    magic, version, classes, width = _CKPT_HEADER.unpack_from(data, 0)
    if magic != _CKPT_MAGIC or version != _CKPT_VERSION:
        raise LoadError("bad parameter checkpoint magic/version")
    offset = _CKPT_HEADER.size
    w = np.frombuffer(data, dtype=np.float64, count=classes * width, offset=offset)
    offset += 8 * classes * width
    b = np.frombuffer(data, dtype=np.float64, count=classes, offset=offset)
    return LearnerParams(weights=w.reshape(classes, width).copy(), bias=b.copy())
