"""Dataset model and the three scenario stream generators.

Scenario contracts:

  * NI     -- ``n`` batches, each covering every class, one session per batch
              (requires ``n == sessions`` so every condition is trained);
  * MT-NC  -- disjoint class groups with a first-batch-larger split
              (``[2g, g, g, ...]`` with ``g = classes / (n + 1)``), each batch
              mixing all sessions and carrying its task label;
  * NIC    -- one batch per (class, session) pair, single class per batch,
              pair order shuffled by seed.

Streams can be generated from a synthetic drift model or partitioned out of a
manifest-backed corpus. Validation and test sets always cover every
(class, session) pair with the same per-pair count; no session is held out.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import read_ppm
from .errors import ConfigError, LoadError

SCENARIO_KINDS = ("NI", "MT-NC", "NIC")

__all__ = [
    "LabeledExample",
    "StreamBatch",
    "ScenarioSpec",
    "SyntheticDriftModel",
    "Dataset",
    "generate_scenario",
    "scenario_from_dataset",
    "load_corpus",
    "mt_nc_class_groups",
    "payload_nbytes",
    "SCENARIO_KINDS",
]


@dataclass(frozen=True)
class LabeledExample:
    """One labeled example: either a feature vector or a raster (eager or lazy)."""

    label: int
    session: int
    features: np.ndarray | None = None
    image: np.ndarray | None = None
    image_path: str | None = None
    image_shape: tuple[int, int] | None = None  # (H, W), known for lazy refs

    def __post_init__(self) -> None:
        payloads = sum(x is not None for x in (self.features, self.image, self.image_path))
        if payloads != 1:
            raise ValueError("exactly one of features, image, image_path required")
        if self.image_path is not None and self.image_shape is None:
            raise ValueError("lazy raster reference requires image_shape")

    def raster(self) -> np.ndarray:
        """The raster payload, loading lazy references on demand."""
        if self.image is not None:
            return self.image
        if self.image_path is not None:
            return read_ppm(self.image_path)
        raise ValueError("example holds a feature vector, not a raster")

    @property
    def is_raster(self) -> bool:
        return self.features is None


def payload_nbytes(example: LabeledExample) -> int:
    """Serialized payload size: 8 bytes per feature, or H*W*3 raster bytes."""
    if example.features is not None:
        return 8 * example.features.size
    if example.image is not None:
        h, w = example.image.shape[:2]
    else:
        h, w = example.image_shape  # type: ignore[misc]
    return h * w * 3


@dataclass(frozen=True)
class StreamBatch:
    """One batch D_t of the stream, 1-based index, optional task label."""

    index: int
    examples: tuple[LabeledExample, ...]
    task_label: int | None = None

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError("batch index starts at 1")
        if not self.examples:
            raise ValueError("stream batch must be non-empty")

    def __len__(self) -> int:
        return len(self.examples)

    def labels(self) -> set[int]:
        return {ex.label for ex in self.examples}


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    n_batches: int
    classes: int
    sessions: int
    batch_size: int
    seed: int
    eval_per_pair: int = 5

    def __post_init__(self) -> None:
        if self.kind not in SCENARIO_KINDS:
            raise ConfigError(f"scenario.kind must be one of {SCENARIO_KINDS}, got {self.kind!r}")
        for name in ("n_batches", "classes", "sessions", "batch_size", "eval_per_pair"):
            if getattr(self, name) < 1:
                raise ConfigError(f"scenario.{name} must be >= 1")


def _validate_scenario(spec: ScenarioSpec) -> None:
    if spec.kind == "NI":
        if spec.n_batches != spec.sessions:
            raise ConfigError(
                f"NI requires n_batches == sessions (one session per batch, all "
                f"sessions trained); got n={spec.n_batches}, sessions={spec.sessions}"
            )
        if spec.batch_size < spec.classes:
            raise ConfigError(
                f"NI batch_size {spec.batch_size} cannot cover all {spec.classes} classes"
            )
    elif spec.kind == "MT-NC":
        groups = mt_nc_class_groups(spec.classes, spec.n_batches)
        if spec.batch_size < max(len(g) for g in groups):
            raise ConfigError(
                f"MT-NC batch_size {spec.batch_size} cannot cover the largest "
                f"class group ({max(len(g) for g in groups)})"
            )
    elif spec.kind == "NIC":
        if spec.n_batches != spec.classes * spec.sessions:
            raise ConfigError(
                f"NIC requires n_batches == classes * sessions; got "
                f"n={spec.n_batches}, classes*sessions={spec.classes * spec.sessions}"
            )


def mt_nc_class_groups(classes: int, n_batches: int) -> list[list[int]]:
    """First-batch-larger class partition: ``[2g, g, ..., g]`` over ``n`` batches."""
    if n_batches < 2:
        raise ConfigError("MT-NC needs at least 2 batches")
    g, rem = divmod(classes, n_batches + 1)
    if rem or g < 1:
        raise ConfigError(
            f"MT-NC class partition needs classes divisible by n_batches + 1; "
            f"got classes={classes}, n_batches={n_batches}"
        )
    sizes = [2 * g] + [g] * (n_batches - 1)
    out, start = [], 0
    for size in sizes:
        out.append(list(range(start, start + size)))
        start += size
    return out


def _spread(total: int, bins: int) -> list[int]:
    """Split ``total`` into ``bins`` near-equal counts, earlier bins larger."""
    base, rem = divmod(total, bins)
    return [base + (1 if i < rem else 0) for i in range(bins)]


@dataclass(frozen=True)
class SyntheticDriftModel:
    """Gaussian class means plus per-session offsets plus isotropic noise."""

    class_means: np.ndarray      # (C, d)
    session_offsets: np.ndarray  # (S, d)
    noise: float

    def __post_init__(self) -> None:
        if self.noise <= 0:
            raise ConfigError("drift noise must be > 0")
        if self.class_means.ndim != 2 or self.session_offsets.ndim != 2 \
                or self.class_means.shape[1] != self.session_offsets.shape[1]:
            raise ConfigError("class_means and session_offsets must share the feature dim")

    @property
    def classes(self) -> int:
        return self.class_means.shape[0]

    @property
    def sessions(self) -> int:
        return self.session_offsets.shape[0]

    @property
    def dim(self) -> int:
        return self.class_means.shape[1]

    @classmethod
    def generate(cls, classes: int, sessions: int, dim: int, seed: int,
                 class_scale: float = 1.0, session_scale: float = 1.0,
                 noise: float = 0.4) -> "SyntheticDriftModel":
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        means = rng.normal(0.0, class_scale, (classes, dim))
        offsets = rng.normal(0.0, session_scale, (sessions, dim))
        return cls(class_means=means, session_offsets=offsets, noise=noise)

    def draw(self, label: int, session: int, count: int,
             rng: np.random.Generator) -> list[LabeledExample]:
        """Sample ``count`` examples of (label, session): mean + offset + noise."""
        center = self.class_means[label] + self.session_offsets[session]
        feats = center + rng.normal(0.0, self.noise, (count, self.dim))
        return [LabeledExample(label=label, session=session, features=feats[i])
                for i in range(count)]


def _check_model(spec: ScenarioSpec, model: SyntheticDriftModel) -> None:
    if model.classes != spec.classes or model.sessions != spec.sessions:
        raise ConfigError(
            f"drift model shape ({model.classes} classes, {model.sessions} sessions) "
            f"does not match spec ({spec.classes}, {spec.sessions})"
        )


def _eval_set(spec: ScenarioSpec, model: SyntheticDriftModel,
              rng: np.random.Generator) -> list[LabeledExample]:
    out: list[LabeledExample] = []
    for c in range(spec.classes):
        for s in range(spec.sessions):
            out.extend(model.draw(c, s, spec.eval_per_pair, rng))
    return out


def generate_scenario(spec: ScenarioSpec, model: SyntheticDriftModel
                      ) -> tuple[list[StreamBatch], list[LabeledExample], list[LabeledExample]]:
    """Build (stream, validation set, test set) as a pure function of the seed.

    Draw order is pinned: stream batches in order, then validation, then test.
    """
    _validate_scenario(spec)
    _check_model(spec, model)
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    batches: list[StreamBatch] = []

    if spec.kind == "NI":
        counts = _spread(spec.batch_size, spec.classes)
        for t in range(spec.n_batches):
            examples: list[LabeledExample] = []
            for c in range(spec.classes):
                examples.extend(model.draw(c, t, counts[c], rng))
            batches.append(StreamBatch(index=t + 1, examples=tuple(examples)))
    elif spec.kind == "MT-NC":
        groups = mt_nc_class_groups(spec.classes, spec.n_batches)
        for t, group in enumerate(groups):
            cells = [(c, s) for c in group for s in range(spec.sessions)]
            counts = _spread(spec.batch_size, len(cells))
            examples = []
            for (c, s), k in zip(cells, counts):
                if k:
                    examples.extend(model.draw(c, s, k, rng))
            batches.append(StreamBatch(index=t + 1, examples=tuple(examples), task_label=t))
    else:  # NIC
        pairs = [(c, s) for c in range(spec.classes) for s in range(spec.sessions)]
        order = rng.permutation(len(pairs))
        for t, idx in enumerate(order):
            c, s = pairs[idx]
            examples = model.draw(c, s, spec.batch_size, rng)
            batches.append(StreamBatch(index=t + 1, examples=tuple(examples)))

    val = _eval_set(spec, model, rng)
    test = _eval_set(spec, model, rng)
    return batches, val, test


# ---------------------------------------------------------------------------
# Manifest-backed corpora
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Examples in manifest order plus the declared label/session ranges."""

    examples: tuple[LabeledExample, ...]
    classes: int
    sessions: int
    feature_dim: int | None = None          # set for vector corpora
    image_shape: tuple[int, int] | None = None  # set for raster corpora
    warnings: tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.examples)


def _read_feature_csv(path: Path) -> np.ndarray:
    try:
        rows = [row for row in csv.reader(path.read_text().splitlines()) if row]
    except OSError as exc:
        raise LoadError(f"{path}: {exc}") from exc
    if len(rows) != 1:
        raise LoadError(f"{path}: feature file must hold exactly one CSV row")
    try:
        return np.array([float(v) for v in rows[0]], dtype=np.float64)
    except ValueError as exc:
        raise LoadError(f"{path}: non-numeric feature value ({exc})") from exc


def _ppm_shape(path: Path) -> tuple[int, int]:
    # header-only parse so lazy loads can validate dimensions cheaply
    img_head = path.open("rb").read(128)
    fields = img_head.split()
    if len(fields) < 3 or fields[0] != b"P6":
        raise LoadError(f"{path}: not a binary P6 PPM")
    return int(fields[2]), int(fields[1])


def load_corpus(root: str | Path, manifest: str | Path, preload: bool = True) -> Dataset:
    """Load a ``path,label,session`` manifest of PPM rasters or CSV feature rows.

    Comment lines ``# classes = C`` / ``# sessions = S`` before the header
    declare the valid ranges; otherwise they are inferred from the data.
    With ``preload=False`` raster payloads stay on disk and examples keep
    only the path and shape.
    """
    root = Path(root)
    manifest = Path(manifest)
    try:
        raw_lines = manifest.read_text().splitlines()
    except OSError as exc:
        raise LoadError(f"{manifest}: {exc}") from exc

    declared: dict[str, int] = {}
    header_seen = False
    rows: list[tuple[int, list[str]]] = []
    for lineno, line in enumerate(raw_lines, 1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped.lstrip("#").strip()
            if "=" in body:
                key, _, value = body.partition("=")
                if key.strip() in ("classes", "sessions"):
                    try:
                        declared[key.strip()] = int(value)
                    except ValueError:
                        raise LoadError(f"{manifest}:{lineno}: bad declaration {stripped!r}")
            continue
        cells = next(csv.reader([stripped]))
        if not header_seen:
            if [c.strip() for c in cells] != ["path", "label", "session"]:
                raise LoadError(
                    f"{manifest}:{lineno}: expected header 'path,label,session', got {stripped!r}"
                )
            header_seen = True
            continue
        rows.append((lineno, cells))
    if not header_seen:
        raise LoadError(f"{manifest}: missing 'path,label,session' header")

    examples: list[LabeledExample] = []
    feature_dim: int | None = None
    image_shape: tuple[int, int] | None = None
    for lineno, cells in rows:
        if len(cells) != 3:
            raise LoadError(f"{manifest}:{lineno}: expected 3 columns, got {len(cells)}")
        rel, label_s, session_s = (c.strip() for c in cells)
        try:
            label, session = int(label_s), int(session_s)
        except ValueError:
            raise LoadError(f"{manifest}:{lineno}: non-integer label/session")
        if label < 0 or session < 0:
            raise LoadError(f"{manifest}:{lineno}: negative label/session")
        if "classes" in declared and label >= declared["classes"]:
            raise LoadError(
                f"{manifest}:{lineno}: label {label} >= declared classes {declared['classes']}"
            )
        if "sessions" in declared and session >= declared["sessions"]:
            raise LoadError(
                f"{manifest}:{lineno}: session {session} >= declared sessions {declared['sessions']}"
            )
        path = root / rel
        if not path.exists():
            raise LoadError(f"{manifest}:{lineno}: missing file {path}")
        if path.suffix.lower() == ".ppm":
            shape = _ppm_shape(path)
            if image_shape is None:
                image_shape = shape
            elif shape != image_shape:
                raise LoadError(
                    f"{manifest}:{lineno}: raster {shape} != first raster {image_shape}"
                )
            if feature_dim is not None:
                raise LoadError(f"{manifest}:{lineno}: mixes rasters with feature rows")
            if preload:
                examples.append(LabeledExample(label=label, session=session,
                                               image=read_ppm(path)))
            else:
                examples.append(LabeledExample(label=label, session=session,
                                               image_path=str(path), image_shape=shape))
        else:
            feats = _read_feature_csv(path)
            if feature_dim is None:
                feature_dim = feats.size
            elif feats.size != feature_dim:
                raise LoadError(
                    f"{manifest}:{lineno}: feature length {feats.size} != first row {feature_dim}"
                )
            if image_shape is not None:
                raise LoadError(f"{manifest}:{lineno}: mixes feature rows with rasters")
            examples.append(LabeledExample(label=label, session=session, features=feats))

    labels = [ex.label for ex in examples]
    sessions = [ex.session for ex in examples]
    classes = declared.get("classes", max(labels) + 1 if labels else 0)
    n_sessions = declared.get("sessions", max(sessions) + 1 if sessions else 0)
    return Dataset(examples=tuple(examples), classes=classes, sessions=n_sessions,
                   feature_dim=feature_dim, image_shape=image_shape)


def scenario_from_dataset(spec: ScenarioSpec, dataset: Dataset
                          ) -> tuple[list[StreamBatch], list[LabeledExample], list[LabeledExample]]:
    """Partition a corpus into the scenario's stream plus eval sets.

    Each (class, session) pool is shuffled by seed; ``eval_per_pair`` examples
    go to validation and test first, the rest fill stream batches under the
    same contracts as the synthetic generator.
    """
    _validate_scenario(spec)
    if dataset.classes != spec.classes or dataset.sessions != spec.sessions:
        raise ConfigError(
            f"corpus declares ({dataset.classes} classes, {dataset.sessions} sessions), "
            f"spec wants ({spec.classes}, {spec.sessions})"
        )
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    pools: dict[tuple[int, int], list[LabeledExample]] = {
        (c, s): [] for c in range(spec.classes) for s in range(spec.sessions)
    }
    for ex in dataset.examples:
        pools[(ex.label, ex.session)].append(ex)

    val: list[LabeledExample] = []
    test: list[LabeledExample] = []
    for key in sorted(pools):
        pool = pools[key]
        need = 2 * spec.eval_per_pair
        if len(pool) < need + 1:
            raise ConfigError(
                f"corpus pool {key} has {len(pool)} examples; needs more than "
                f"{need} to fill eval sets and the stream"
            )
        order = rng.permutation(len(pool))
        shuffled = [pool[i] for i in order]
        val.extend(shuffled[: spec.eval_per_pair])
        test.extend(shuffled[spec.eval_per_pair : need])
        pools[key] = shuffled[need:]

    def take(c: int, s: int, k: int) -> list[LabeledExample]:
        pool = pools[(c, s)]
        if len(pool) < k:
            raise ConfigError(
                f"corpus pool ({c}, {s}) exhausted: need {k} more examples"
            )
        picked, pools[(c, s)] = pool[:k], pool[k:]
        return picked

    batches: list[StreamBatch] = []
    if spec.kind == "NI":
        counts = _spread(spec.batch_size, spec.classes)
        for t in range(spec.n_batches):
            examples: list[LabeledExample] = []
            for c in range(spec.classes):
                examples.extend(take(c, t, counts[c]))
            batches.append(StreamBatch(index=t + 1, examples=tuple(examples)))
    elif spec.kind == "MT-NC":
        groups = mt_nc_class_groups(spec.classes, spec.n_batches)
        for t, group in enumerate(groups):
            cells = [(c, s) for c in group for s in range(spec.sessions)]
            counts = _spread(spec.batch_size, len(cells))
            examples = []
            for (c, s), k in zip(cells, counts):
                if k:
                    examples.extend(take(c, s, k))
            batches.append(StreamBatch(index=t + 1, examples=tuple(examples), task_label=t))
    else:  # NIC
        pairs = [(c, s) for c in range(spec.classes) for s in range(spec.sessions)]
        order = rng.permutation(len(pairs))
        for t, idx in enumerate(order):
            c, s = pairs[idx]
            batches.append(StreamBatch(index=t + 1, examples=tuple(take(c, s, spec.batch_size))))
    return batches, val, test
