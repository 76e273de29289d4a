"""Experiment orchestration: execute one configured run or an ablation matrix.

Artifacts per run: ``metrics.csv``, ``run.json``, ``accuracy_over_time.png``,
``config.resolved.txt``, per-batch checkpoints, and the memory snapshot.
Every artifact is a pure function of (config, seeds); re-running into a clean
directory reproduces it byte-for-byte apart from wall-clock fields.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .augment import AugmentPlan, apply_plan, embed_raster, normalize, resize_bilinear
from .config import RunConfig, Seeds, parse_config_text, serialize_run_config
from .errors import ConfigError
from .learner import LearnerParams, fresh_learner, to_checkpoint_bytes
from .memory import ReplayMemory
from .metrics import avg_val_acc, final_acc, write_metrics_csv, write_run_json
from .streams import (
    LabeledExample,
    generate_scenario,
    load_corpus,
    scenario_from_dataset,
    SyntheticDriftModel,
)
from .trainer import (
    RunResult,
    train_ber,
    train_finetune_baseline,
    train_multitask_nc,
    Vectorizer,
)

logger = logging.getLogger(__name__)

__all__ = ["RunSummary", "execute_run", "execute_ablation", "AblationRow", "parse_matrix"]


@dataclass(frozen=True)
class RunSummary:
    strategy: str
    seed: int
    avg_val_acc: float
    final_acc: float
    out_dir: str | None


def _rng(seeds: Seeds, stream: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seeds.entropy(stream)))


def _data_seeds(seeds: Seeds) -> tuple[int, int]:
    """Distinct integer seeds for the drift model and the scenario draws."""
    ss = np.random.SeedSequence(seeds.entropy("data"))
    model_seed, scen_seed = (int(x) for x in ss.generate_state(2))
    return model_seed, scen_seed


def build_data(cfg: RunConfig) -> tuple[list, list, list]:
    """Materialize (stream, validation set, test set) for a config."""
    model_seed, scen_seed = _data_seeds(cfg.seeds)
    spec = replace(cfg.scenario, seed=scen_seed)
    if cfg.corpus is not None:
        dataset = load_corpus(cfg.corpus.root, cfg.corpus.manifest,
                              preload=cfg.preload_data)
        return scenario_from_dataset(spec, dataset)
    model = SyntheticDriftModel.generate(
        cfg.scenario.classes, cfg.scenario.sessions, cfg.dim, model_seed,
        class_scale=cfg.drift.class_scale, session_scale=cfg.drift.session_scale,
        noise=cfg.drift.noise)
    return generate_scenario(spec, model)


def build_vectorizer(cfg: RunConfig) -> Vectorizer:
    """Raster-to-vector bridge; identity for feature-vector examples.

    With augmentation on, training calls re-randomize every example from the
    augment seed stream; evaluation always takes the deterministic path.
    Without augmentation, rasters are resized, normalized, and pooled.
    """
    if cfg.corpus is None:
        if cfg.uses_augment:
            logger.warning("strategy %s enables preprocessing but the data is "
                           "synthetic feature vectors; augmentation has no effect",
                           cfg.strategy)
        return lambda examples, training: list(examples)
    grid = cfg.corpus.embed_grid
    plan = AugmentPlan()
    rng = _rng(cfg.seeds, "augment")
    use_plan = cfg.uses_augment

    def vectorize(examples: Sequence[LabeledExample], training: bool
                  ) -> list[LabeledExample]:
        out = []
        for ex in examples:
            if not ex.is_raster:
                out.append(ex)
                continue
            if use_plan:
                img = apply_plan(ex.raster(), plan, rng if training else None,
                                 training=training)
            else:
                img = normalize(resize_bilinear(ex.raster(), plan.resize_to[0],
                                                plan.resize_to[1]))
            out.append(LabeledExample(label=ex.label, session=ex.session,
                                      features=embed_raster(img, grid)))
        return out

    return vectorize


def _dispatch(cfg: RunConfig, stream, val, test,
              checkpoint_dir: Path | None) -> RunResult:
    vectorizer = build_vectorizer(cfg)
    sgd_rng = _rng(cfg.seeds, "sgd")
    memory_rng = _rng(cfg.seeds, "memory")
    feat_kwargs = {} if cfg.featurizer_seed is None else {"seed": cfg.featurizer_seed}

    if cfg.strategy.startswith("ind_model"):
        return train_multitask_nc(
            stream, cfg.trainer, val, test, input_dim=cfg.dim,
            sgd_rng=sgd_rng, width=cfg.learner_width,
            featurizer_seed=cfg.featurizer_seed, vectorizer=vectorizer,
            checkpoint_dir=checkpoint_dir)

    featurizer, params = fresh_learner(cfg.dim, cfg.scenario.classes,
                                       cfg.learner_width, **feat_kwargs)
    if cfg.strategy == "baseline":
        return train_finetune_baseline(
            stream, cfg.trainer, featurizer, params, val, test,
            sgd_rng=sgd_rng, vectorizer=vectorizer, checkpoint_dir=checkpoint_dir)

    memory = ReplayMemory(cfg.trainer.mem_sz, len(stream))
    return train_ber(
        stream, cfg.trainer, featurizer, params, memory, val, test,
        sgd_rng=sgd_rng, memory_rng=memory_rng, vectorizer=vectorizer,
        run_review=cfg.uses_review, checkpoint_dir=checkpoint_dir)


def execute_run(cfg: RunConfig, out_dir: str | Path | None = None,
                render_figure: bool = True) -> tuple[RunSummary, RunResult]:
    """Run one strategy end to end, writing artifacts when out_dir is given."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.resolved.txt").write_text(serialize_run_config(cfg))

    logger.info("run: scenario=%s strategy=%s seed=%d", cfg.scenario.kind,
                cfg.strategy, cfg.seeds.master)
    stream, val, test = build_data(cfg)
    result = _dispatch(cfg, stream, val, test, out)
    log = result.metrics
    if result.memory is not None and result.memory.warnings:
        for message in result.memory.warnings:
            logger.warning("replay memory: %s", message)

    if out is not None:
        write_metrics_csv(log, out / "metrics.csv")
        write_run_json(log, out / "run.json",
                       extra={"strategy": cfg.strategy, "seed": cfg.seeds.master,
                              "scenario": cfg.scenario.kind})
        if isinstance(result.params, LearnerParams):
            (out / "params.bin").write_bytes(to_checkpoint_bytes(result.params))
        if result.memory is not None:
            (out / "memory.bin").write_bytes(result.memory.to_snapshot())
        if render_figure:
            from .figures import accuracy_over_time_figure

            accuracy_over_time_figure(log, out / "accuracy_over_time.png",
                                      title=f"{cfg.scenario.kind} / {cfg.strategy}")
    summary = RunSummary(strategy=cfg.strategy, seed=cfg.seeds.master,
                         avg_val_acc=avg_val_acc(log), final_acc=final_acc(log),
                         out_dir=str(out) if out is not None else None)
    return summary, result


# ---------------------------------------------------------------------------
# ablation matrix
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AblationRow:
    method: str
    avg_val_acc_mean: float
    avg_val_acc_std: float
    final_val_acc_mean: float
    final_val_acc_std: float
    seeds: int


def parse_matrix(text: str) -> tuple[list[str], list[int], dict[str, str]]:
    """Split a matrix file into (strategies, seeds, base config keys)."""
    values = parse_config_text(text)
    strategies_raw = values.pop("matrix.strategies", "")
    seeds_raw = values.pop("matrix.seeds", "")
    strategies = [s.strip() for s in strategies_raw.split(",") if s.strip()]
    try:
        seeds = [int(s) for s in seeds_raw.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"matrix.seeds must be integers, got {seeds_raw!r}")
    return strategies, seeds, values


def _one_arm(args: tuple[RunConfig, str | None]) -> RunSummary:
    cfg, arm_dir = args
    summary, _ = execute_run(cfg, arm_dir, render_figure=False)
    return summary


def execute_ablation(base: dict[str, str], strategies: list[str], seeds: list[int],
                     out_dir: str | Path | None = None, workers: int = 1,
                     keep_runs: bool = False) -> tuple[list[AblationRow], list[RunSummary]]:
    """Run strategies x seeds and aggregate mean +/- std per method.

    Arms are independent; results are merged in (method, seed) key order no
    matter the execution order.
    """
    from .config import parse_run_config, serialize_config_dict

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    jobs: list[tuple[RunConfig, str | None]] = []
    for strategy in strategies:
        for seed in seeds:
            values = dict(base)
            values["strategy"] = strategy
            values["seed"] = str(seed)
            cfg = parse_run_config(serialize_config_dict(values))
            arm_dir = str(out / "runs" / f"{strategy}_seed{seed}") \
                if (out is not None and keep_runs) else None
            jobs.append((cfg, arm_dir))

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_one_arm, jobs))
    else:
        summaries = [_one_arm(job) for job in jobs]
    summaries.sort(key=lambda s: (strategies.index(s.strategy), s.seed))

    rows: list[AblationRow] = []
    for strategy in strategies:
        arm = [s for s in summaries if s.strategy == strategy]
        if not arm:
            continue
        avgs = np.array([s.avg_val_acc for s in arm])
        finals = np.array([s.final_acc for s in arm])
        rows.append(AblationRow(
            method=strategy,
            avg_val_acc_mean=float(avgs.mean()),
            avg_val_acc_std=float(avgs.std(ddof=0)),
            final_val_acc_mean=float(finals.mean()),
            final_val_acc_std=float(finals.std(ddof=0)),
            seeds=len(arm)))

    if out is not None:
        lines = ["method,avg_val_acc_mean,avg_val_acc_std,final_val_acc_mean,"
                 "final_val_acc_std,seeds"]
        for r in rows:
            lines.append(f"{r.method},{r.avg_val_acc_mean:.6f},{r.avg_val_acc_std:.6f},"
                         f"{r.final_val_acc_mean:.6f},{r.final_val_acc_std:.6f},{r.seeds}")
        (out / "ablation.csv").write_text("\n".join(lines) + "\n")
        detail = ["method,seed,avg_val_acc,final_val_acc"]
        for s in summaries:
            detail.append(f"{s.strategy},{s.seed},{s.avg_val_acc:.6f},{s.final_acc:.6f}")
        (out / "runs.csv").write_text("\n".join(detail) + "\n")
        if rows:
            from .figures import ablation_figure

            ablation_figure(rows, out / "ablation.png")
    return rows, summaries


def format_ablation_table(rows: list[AblationRow]) -> str:
    """Plain-text comparison table: method, avg_val_acc, final_val_acc."""
    header = f"{'Method':<24} {'avg_val_acc':>18} {'final_val_acc':>18}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.method:<24} {100 * r.avg_val_acc_mean:>10.1f}% ± {100 * r.avg_val_acc_std:<4.1f}"
            f" {100 * r.final_val_acc_mean:>10.1f}% ± {100 * r.final_val_acc_std:<4.1f}")
    return "\n".join(lines)
