"""Run metrics: accuracy over time, final accuracy, time, RAM, and disk.

RAM and disk figures are an accounting model (buffer bytes + parameter bytes
+ resident data bytes, checkpoint and snapshot record sizes), not OS probes,
so they are exact functions of counts and record layouts and reproduce
byte-identically. An optional OS RSS probe can be layered on top but never
enters the deterministic outputs.
"""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

__all__ = [
    "BatchRecord",
    "MetricsLog",
    "ResourceReport",
    "avg_val_acc",
    "final_acc",
    "resource_report",
    "write_metrics_csv",
    "write_run_json",
    "TIMING_KEYS",
]

METRICS_CSV_COLUMNS = ("t", "phase", "val_acc", "elapsed_ms", "ram_bytes", "disk_bytes")

# keys excluded from reproducibility comparisons (wall-clock dependent)
TIMING_KEYS = ("train_seconds", "review_seconds", "eval_seconds", "total_seconds",
               "ram_rss_peak_bytes")


@dataclass
class BatchRecord:
    index: int
    phase: str  # "train" or "review"
    val_acc: float
    train_loss: float
    elapsed_ms: float
    ram_bytes: int
    disk_bytes: int


@dataclass
class PhaseSpan:
    phase: str
    start: float
    end: float


@dataclass
class MetricsLog:
    """Append-only run log owned by the trainer."""

    records: list[BatchRecord] = field(default_factory=list)
    spans: list[PhaseSpan] = field(default_factory=list)
    ram_samples: list[int] = field(default_factory=list)
    checkpoint_bytes: list[int] = field(default_factory=list)
    memory_snapshot_bytes: int = 0
    test_acc: float | None = None
    rss_samples: list[int] = field(default_factory=list)
    _origin: float = field(default_factory=time.perf_counter)

    def add_record(self, record: BatchRecord) -> None:
        self.records.append(record)

    def record_ram(self, nbytes: int) -> None:
        self.ram_samples.append(nbytes)

    def record_checkpoint(self, nbytes: int) -> None:
        self.checkpoint_bytes.append(nbytes)

    @contextmanager
    def phase(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.spans.append(PhaseSpan(phase=name, start=start, end=time.perf_counter()))

    def elapsed_ms(self) -> float:
        return (time.perf_counter() - self._origin) * 1000.0

    def phase_seconds(self, name: str) -> float:
        return sum(s.end - s.start for s in self.spans if s.phase == name)

    def train_accuracies(self) -> list[float]:
        return [r.val_acc for r in self.records if r.phase == "train"]

    def disk_total(self) -> int:
        return sum(self.checkpoint_bytes) + self.memory_snapshot_bytes


def avg_val_acc(log: MetricsLog) -> float:
    """Mean per-batch validation accuracy; the post-review entry is excluded."""
    accs = log.train_accuracies()
    if not accs:
        raise ValueError("no per-batch accuracies recorded")
    return sum(accs) / len(accs)


def final_acc(log: MetricsLog) -> float:
    """Test accuracy of the final (post-review) parameters."""
    if log.test_acc is None:
        raise ValueError("no final test evaluation recorded")
    return log.test_acc


@dataclass(frozen=True)
class ResourceReport:
    ram_peak_bytes: int
    ram_mean_bytes: float
    disk_bytes: int
    train_seconds: float
    review_seconds: float
    eval_seconds: float
    total_seconds: float


def resource_report(log: MetricsLog) -> ResourceReport:
    ram_peak = max(log.ram_samples, default=0)
    ram_mean = sum(log.ram_samples) / len(log.ram_samples) if log.ram_samples else 0.0
    train_s = log.phase_seconds("train")
    review_s = log.phase_seconds("review")
    eval_s = log.phase_seconds("eval")
    return ResourceReport(
        ram_peak_bytes=ram_peak,
        ram_mean_bytes=ram_mean,
        disk_bytes=log.disk_total(),
        train_seconds=train_s,
        review_seconds=review_s,
        eval_seconds=eval_s,
        total_seconds=train_s + review_s + eval_s,
    )


def write_metrics_csv(log: MetricsLog, path: str | Path) -> None:
    lines = [",".join(METRICS_CSV_COLUMNS)]
    for r in log.records:
        lines.append(
            f"{r.index},{r.phase},{r.val_acc:.6f},{r.elapsed_ms:.3f},"
            f"{r.ram_bytes},{r.disk_bytes}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_run_json(log: MetricsLog, path: str | Path, extra: dict | None = None) -> dict:
    """Write the five-metric summary; returns the payload that was written."""
    report = resource_report(log)
    payload: dict = {
        "final_acc": round(final_acc(log), 6),
        "avg_val_acc": round(avg_val_acc(log), 6),
        "train_seconds": round(report.train_seconds, 6),
        "review_seconds": round(report.review_seconds, 6),
        "eval_seconds": round(report.eval_seconds, 6),
        "total_seconds": round(report.total_seconds, 6),
        "ram_peak_bytes": report.ram_peak_bytes,
        "ram_mean_bytes": round(report.ram_mean_bytes, 3),
        "disk_bytes": report.disk_bytes,
    }
    if log.rss_samples:
        payload["ram_rss_peak_bytes"] = max(log.rss_samples)
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return payload
