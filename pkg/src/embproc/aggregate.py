"""Pooling occurrence vectors into one vector per word.

A word's aggregated vector is the arithmetic mean of its occurrence
vectors, with the context count clamped to a [min_contexts,
max_contexts] band: words seen fewer than min_contexts times are
dropped, words seen more than max_contexts times have exactly
max_contexts occurrences sampled without replacement.

Determinism rules, both independent of input record order:

* Sampling is driven by an RNG keyed on (config seed, sha256 of the
  word), so a word keeps its sample across runs and across shards.
* Occurrences are put in a canonical order (sentence id, then raw
  vector bytes) before sampling and before summation, and summed with
  Kahan compensation, so the mean is bit-for-bit identical under any
  permutation of the input stream.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embstore import OccurrenceShard, WordVectorTable
from .errors import DataError

DEFAULT_MIN_CONTEXTS = 50
DEFAULT_MAX_CONTEXTS = 200
DEFAULT_SEED = 42

REPORT_HEADER = ("word", "n_total", "n_used", "dropped")


@dataclass(frozen=True)
class AggregationConfig:
    min_contexts: int = DEFAULT_MIN_CONTEXTS
    max_contexts: int = DEFAULT_MAX_CONTEXTS
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.min_contexts < 1:
            raise DataError(f"min_contexts must be >= 1, got {self.min_contexts}")
        if self.max_contexts < self.min_contexts:
            raise DataError(
                f"max_contexts={self.max_contexts} is below min_contexts={self.min_contexts}"
            )


@dataclass(frozen=True)
class WordReportRow:
    """Per-word accounting: occurrences seen, occurrences pooled, dropped flag."""

    word: str
    n_total: int
    n_used: int
    dropped: bool


@dataclass
class AggregationReport:
    rows: list[WordReportRow]

    @property
    def dropped_count(self) -> int:
        return sum(1 for r in self.rows if r.dropped)

    @property
    def word_count(self) -> int:
        return len(self.rows)


def _word_rng(seed: int, word: str) -> np.random.Generator:
    digest = hashlib.sha256(word.encode("utf-8")).digest()
    keys = [int.from_bytes(digest[i : i + 8], "little") for i in range(0, 32, 8)]
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *keys]))


def _kahan_mean(vectors: list[np.ndarray], dim: int) -> np.ndarray:
    total = np.zeros(dim)
    comp = np.zeros(dim)
    for vec in vectors:
        y = vec - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total / len(vectors)


def aggregate(
    shard: OccurrenceShard, cfg: AggregationConfig | None = None
) -> tuple[WordVectorTable, AggregationReport]:
    """Pool an occurrence shard into per-word mean vectors.

    Returns the word-vector table (words with at least ``min_contexts``
    occurrences, keyed in sorted word order) and a report with one row
    per distinct word, dropped words included.
    """
    if cfg is None:
        cfg = AggregationConfig()
    groups: dict[str, list[tuple[int, np.ndarray]]] = {}
    for rec in shard.records:
        vec = np.asarray(rec.vector, dtype=np.float64)
        if vec.shape != (shard.dim,):
            raise DataError(
                f"occurrence of {rec.word!r} has dim {vec.shape}, expected ({shard.dim},)"
            )
        groups.setdefault(rec.word, []).append((rec.sentence_id, vec))
    if not groups:
        raise DataError("cannot aggregate an empty shard")

    entries: dict[str, np.ndarray] = {}
    rows: list[WordReportRow] = []
    for word in sorted(groups):
        group = sorted(groups[word], key=lambda item: (item[0], item[1].tobytes()))
        n_total = len(group)
        if n_total < cfg.min_contexts:
            rows.append(WordReportRow(word=word, n_total=n_total, n_used=0, dropped=True))
            continue
        if n_total > cfg.max_contexts:
            picked = _word_rng(cfg.seed, word).choice(
                n_total, size=cfg.max_contexts, replace=False
            )
            picked.sort()
            chosen = [group[i][1] for i in picked]
        else:
            chosen = [vec for _, vec in group]
        entries[word] = _kahan_mean(chosen, shard.dim)
        rows.append(
            WordReportRow(word=word, n_total=n_total, n_used=len(chosen), dropped=False)
        )
    table = WordVectorTable(dim=shard.dim, entries=entries)
    return table, AggregationReport(rows=rows)


def write_report(report: AggregationReport, path: str | Path) -> None:
    """Write the per-word report as CSV (dropped encoded as 0/1)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for row in report.rows:
            writer.writerow([row.word, row.n_total, row.n_used, int(row.dropped)])
