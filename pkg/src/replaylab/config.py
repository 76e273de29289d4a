"""Run configuration: flat ``key = value`` text with dotted keys.

Key names mirror the reference hyper-parameter table (``replay.examples`` is
the memory capacity, ``replay.used`` the per-epoch replay draw,
``review.size`` / ``review.epochs`` / ``review.lr_decay_factor`` the review
settings). Parsing is line-based so errors carry line numbers, and
``parse_run_config(serialize_run_config(cfg))`` round-trips exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .streams import ScenarioSpec
from .trainer import TrainerConfig

STRATEGIES = ("baseline", "ber", "ber_review", "ber_review_preproc",
              "ind_model", "ind_model_preproc")

# spawn-key index per named seed stream, derived from the master seed
SEED_STREAMS = {"data": 0, "memory": 1, "sgd": 2, "augment": 3}

__all__ = [
    "RunConfig",
    "DriftParams",
    "Seeds",
    "CorpusRef",
    "STRATEGIES",
    "SEED_STREAMS",
    "parse_config_text",
    "serialize_config_dict",
    "parse_run_config",
    "serialize_run_config",
    "load_run_config",
]


@dataclass(frozen=True)
class DriftParams:
    class_scale: float = 1.0
    session_scale: float = 1.0
    noise: float = 0.4


@dataclass(frozen=True)
class Seeds:
    """Master seed plus optional per-stream overrides (data/memory/sgd/augment)."""

    master: int = 0
    data: int | None = None
    memory: int | None = None
    sgd: int | None = None
    augment: int | None = None

    def entropy(self, stream: str) -> object:
        override = getattr(self, stream)
        if override is not None:
            return override
        return (self.master, SEED_STREAMS[stream])


@dataclass(frozen=True)
class CorpusRef:
    root: str
    manifest: str
    embed_grid: int = 4


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioSpec
    strategy: str
    trainer: TrainerConfig
    drift: DriftParams = DriftParams()
    seeds: Seeds = Seeds()
    feature_dim: int | None = None  # declared for synthetic data, derived for corpora
    learner_width: int = 64
    featurizer_seed: int | None = None
    preload_data: bool = False
    corpus: CorpusRef | None = None

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.strategy.startswith("ind_model") and self.scenario.kind != "MT-NC":
            raise ConfigError(
                f"strategy {self.strategy} requires scenario.kind = MT-NC, "
                f"got {self.scenario.kind}"
            )
        if self.corpus is None and self.feature_dim is None:
            raise ConfigError("synthetic runs require key scenario.dim")

    @property
    def dim(self) -> int:
        if self.corpus is not None:
            return 3 * self.corpus.embed_grid**2
        return self.feature_dim  # type: ignore[return-value]

    @property
    def uses_memory(self) -> bool:
        return self.strategy in ("ber", "ber_review", "ber_review_preproc")

    @property
    def uses_review(self) -> bool:
        return self.strategy in ("ber_review", "ber_review_preproc")

    @property
    def uses_augment(self) -> bool:
        return self.strategy.endswith("_preproc")


# ---------------------------------------------------------------------------
# flat text parsing
# ---------------------------------------------------------------------------


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment; blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def serialize_config_dict(values: dict[str, str]) -> str:
    return "\n".join(f"{k} = {values[k]}" for k in sorted(values)) + "\n"


def _conv_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"key {key}: expected integer, got {value!r}")


def _conv_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"key {key}: expected number, got {value!r}")


def _conv_bool(key: str, value: str) -> bool:
    lowered = value.lower()
    if lowered in ("yes", "true", "1", "on"):
        return True
    if lowered in ("no", "false", "0", "off"):
        return False
    raise ConfigError(f"key {key}: expected yes/no, got {value!r}")


_KNOWN_KEYS = {
    "scenario.kind", "scenario.batches", "scenario.classes", "scenario.sessions",
    "scenario.dim", "scenario.batch_size", "scenario.eval_per_pair",
    "drift.class_scale", "drift.session_scale", "drift.noise",
    "strategy", "optimizer", "batch_size", "preload_data", "epochs", "lr",
    "momentum",
    "replay.examples", "replay.used",
    "review.size", "review.epochs", "review.lr_decay_factor",
    "learner.width", "learner.featurizer_seed",
    "seed", "seed.data", "seed.memory", "seed.sgd", "seed.augment",
    "corpus.root", "corpus.manifest", "corpus.embed_grid",
}


def parse_run_config(text: str, overrides: dict[str, str] | None = None) -> RunConfig:
    values = parse_config_text(text)
    if overrides:
        values.update(overrides)
    unknown = set(values) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    def require(key: str) -> str:
        if key not in values:
            raise ConfigError(f"missing required key {key}")
        return values[key]

    strategy = require("strategy")
    if strategy not in STRATEGIES:
        raise ConfigError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")

    optimizer = values.get("optimizer", "sgd").lower()
    if optimizer != "sgd":
        raise ConfigError(f"only optimizer = sgd is supported, got {optimizer!r}")

    scenario = ScenarioSpec(
        kind=require("scenario.kind"),
        n_batches=_conv_int("scenario.batches", require("scenario.batches")),
        classes=_conv_int("scenario.classes", require("scenario.classes")),
        sessions=_conv_int("scenario.sessions", require("scenario.sessions")),
        batch_size=_conv_int("scenario.batch_size", require("scenario.batch_size")),
        seed=0,  # replaced below once seeds are parsed
        eval_per_pair=_conv_int("scenario.eval_per_pair",
                                values.get("scenario.eval_per_pair", "5")),
    )

    seeds = Seeds(
        master=_conv_int("seed", values.get("seed", "0")),
        data=_conv_int("seed.data", values["seed.data"]) if "seed.data" in values else None,
        memory=_conv_int("seed.memory", values["seed.memory"]) if "seed.memory" in values else None,
        sgd=_conv_int("seed.sgd", values["seed.sgd"]) if "seed.sgd" in values else None,
        augment=_conv_int("seed.augment", values["seed.augment"]) if "seed.augment" in values else None,
    )

    uses_memory = strategy in ("ber", "ber_review", "ber_review_preproc")
    if uses_memory:
        mem_sz = _conv_int("replay.examples", require("replay.examples"))
        replay_sz = _conv_int("replay.used", require("replay.used"))
    else:
        mem_sz = _conv_int("replay.examples", values.get("replay.examples", "1"))
        replay_sz = _conv_int("replay.used", values.get("replay.used", "1"))
    trainer = TrainerConfig(
        mem_sz=mem_sz,
        replay_sz=replay_sz,
        review_sz=_conv_int("review.size", values.get("review.size", str(mem_sz))),
        batch_sz=_conv_int("batch_size", values.get("batch_size", "32")),
        lr_replay=_conv_float("lr", require("lr")),
        review_lr_decay=_conv_float("review.lr_decay_factor",
                                    values.get("review.lr_decay_factor", "0.5")),
        epochs=_conv_int("epochs", values.get("epochs", "1")),
        review_epochs=_conv_int("review.epochs", values.get("review.epochs", "1")),
        momentum=_conv_float("momentum", values.get("momentum", "0.0")),
    )

    drift = DriftParams(
        class_scale=_conv_float("drift.class_scale", values.get("drift.class_scale", "1.0")),
        session_scale=_conv_float("drift.session_scale", values.get("drift.session_scale", "1.0")),
        noise=_conv_float("drift.noise", values.get("drift.noise", "0.4")),
    )

    corpus = None
    feature_dim: int | None = None
    if "corpus.root" in values or "corpus.manifest" in values:
        corpus = CorpusRef(
            root=require("corpus.root"),
            manifest=require("corpus.manifest"),
            embed_grid=_conv_int("corpus.embed_grid", values.get("corpus.embed_grid", "4")),
        )
    else:
        feature_dim = _conv_int("scenario.dim", require("scenario.dim"))

    scenario = ScenarioSpec(
        kind=scenario.kind, n_batches=scenario.n_batches, classes=scenario.classes,
        sessions=scenario.sessions, batch_size=scenario.batch_size,
        seed=seeds.data if seeds.data is not None else seeds.master,
        eval_per_pair=scenario.eval_per_pair,
    )

    return RunConfig(
        scenario=scenario,
        strategy=strategy,
        trainer=trainer,
        drift=drift,
        seeds=seeds,
        feature_dim=feature_dim,
        learner_width=_conv_int("learner.width", values.get("learner.width", "64")),
        featurizer_seed=_conv_int("learner.featurizer_seed", values["learner.featurizer_seed"])
        if "learner.featurizer_seed" in values else None,
        preload_data=_conv_bool("preload_data", values.get("preload_data", "no")),
        corpus=corpus,
    )


def serialize_run_config(cfg: RunConfig) -> str:
    values: dict[str, str] = {
        "scenario.kind": cfg.scenario.kind,
        "scenario.batches": str(cfg.scenario.n_batches),
        "scenario.classes": str(cfg.scenario.classes),
        "scenario.sessions": str(cfg.scenario.sessions),
        "scenario.batch_size": str(cfg.scenario.batch_size),
        "scenario.eval_per_pair": str(cfg.scenario.eval_per_pair),
        "drift.class_scale": repr(cfg.drift.class_scale),
        "drift.session_scale": repr(cfg.drift.session_scale),
        "drift.noise": repr(cfg.drift.noise),
        "strategy": cfg.strategy,
        "optimizer": "sgd",
        "batch_size": str(cfg.trainer.batch_sz),
        "preload_data": "yes" if cfg.preload_data else "no",
        "epochs": str(cfg.trainer.epochs),
        "lr": repr(cfg.trainer.lr_replay),
        "momentum": repr(cfg.trainer.momentum),
        "replay.examples": str(cfg.trainer.mem_sz),
        "replay.used": str(cfg.trainer.replay_sz),
        "review.size": str(cfg.trainer.review_sz),
        "review.epochs": str(cfg.trainer.review_epochs),
        "review.lr_decay_factor": repr(cfg.trainer.review_lr_decay),
        "learner.width": str(cfg.learner_width),
        "seed": str(cfg.seeds.master),
    }
    if cfg.corpus is not None:
        values["corpus.root"] = cfg.corpus.root
        values["corpus.manifest"] = cfg.corpus.manifest
        values["corpus.embed_grid"] = str(cfg.corpus.embed_grid)
    else:
        values["scenario.dim"] = str(cfg.dim)
    if cfg.featurizer_seed is not None:
        values["learner.featurizer_seed"] = str(cfg.featurizer_seed)
    for stream in SEED_STREAMS:
        override = getattr(cfg.seeds, stream)
        if override is not None:
            values[f"seed.{stream}"] = str(override)
    return serialize_config_dict(values)


def load_run_config(path: str | Path, overrides: dict[str, str] | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_run_config(text, overrides)
