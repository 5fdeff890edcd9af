"""Word-similarity and word-analogy evaluation of a word-vector table.

Similarity: cosine between each pair's vectors, compared to the human
scores by Spearman rank correlation (average ranks on ties). Analogy:
3CosAdd — the predicted word maximizes cosine with the unit-normalized
target b - a + c over the vocabulary, excluding a, b and c themselves.

Pairs or questions with an out-of-vocabulary word are skipped and
counted, never zero-scored, so results stay comparable across
normalizers applied to the same vocabulary.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embstore import WordVectorTable
from .errors import DataError, UndefinedSimilarityError

METRIC_RANGES = {"spearman": (-1.0, 1.0), "accuracy": (0.0, 1.0)}

RESULTS_HEADER = ("dataset", "metric", "value", "n_used", "n_skipped")


@dataclass
class SimilarityDataset:
    name: str
    pairs: list[tuple[str, str, float]]

    def __post_init__(self):
        if not self.pairs:
            raise DataError(f"similarity dataset {self.name!r} has no pairs")
        for w1, w2, score in self.pairs:
            if not np.isfinite(score):
                raise DataError(f"non-finite score for pair ({w1!r}, {w2!r})")

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass
class AnalogyDataset:
    name: str
    questions: list[tuple[str, str, str, str]]
    sections: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.questions:
            raise DataError(f"analogy dataset {self.name!r} has no questions")
        if not self.sections:
            self.sections = [""] * len(self.questions)
        if len(self.sections) != len(self.questions):
            raise DataError("section labels do not align with questions")

    def __len__(self) -> int:
        return len(self.questions)


@dataclass(frozen=True)
class EvalResult:
    dataset: str
    metric: str
    value: float
    n_used: int
    n_skipped_oov: int

    def __post_init__(self):
        if self.metric not in METRIC_RANGES:
            raise DataError(f"unknown metric {self.metric!r}")
        lo, hi = METRIC_RANGES[self.metric]
        if not lo <= self.value <= hi:
            raise DataError(f"{self.metric} value {self.value} outside [{lo}, {hi}]")
        if self.n_used < 0 or self.n_skipped_oov < 0:
            raise DataError("negative count in evaluation result")


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity, clamped to [-1, 1] against rounding.

    Undefined (raises) when either vector has zero norm.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DataError(f"cosine of mismatched shapes {u.shape} and {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise UndefinedSimilarityError("cosine undefined for a zero vector")
    if np.array_equal(u, v):
        return 1.0
    return float(np.clip(float(u @ v) / (nu * nv), -1.0, 1.0))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for pos in range(i, j + 1):
            ranks[order[pos]] = avg
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks on ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"spearman needs two equal-length lists, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise DataError("spearman needs at least 2 observations")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        raise DataError("spearman undefined: zero rank variance")
    return float(dx @ dy) / float(np.sqrt(vx * vy))


def eval_similarity(table: WordVectorTable, ds: SimilarityDataset) -> EvalResult:
    """Spearman correlation of model cosines against human scores.

    Pairs with an out-of-vocabulary word, or whose cosine is undefined
    (zero vector), are skipped and counted.
    """
    model: list[float] = []
    gold: list[float] = []
    skipped = 0
    for w1, w2, score in ds.pairs:
        if w1 not in table.entries or w2 not in table.entries:
            skipped += 1
            continue
        try:
            sim = cosine(table.entries[w1], table.entries[w2])
        except UndefinedSimilarityError:
            skipped += 1
            continue
        model.append(sim)
        gold.append(score)
    if len(model) < 2:
        raise DataError(
            f"dataset {ds.name!r}: only {len(model)} usable pairs (need at least 2)"
        )
    rho = spearman(model, gold)
    return EvalResult(
        dataset=ds.name, metric="spearman", value=rho, n_used=len(model), n_skipped_oov=skipped
    )


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    return np.where(norms == 0.0, mat, mat / np.where(norms == 0.0, 1.0, norms))


def analogy_predictions(
    table: WordVectorTable, questions: list[tuple[str, str, str, str]], threads: int = 1
) -> list[str | None]:
    """3CosAdd prediction for each question, or None where undefined.

    The predicted word maximizes cosine with the unit-normalized target
    b - a + c over the vocabulary's unit-normalized vectors, excluding
    a, b and c themselves; the argmax runs over words in lexicographic
    order, so equal cosines resolve to the lowest word. A question maps
    to None when a, b or c is out of vocabulary or no candidate is
    left after exclusion.
    """
    words = sorted(table.entries)
    index = {w: i for i, w in enumerate(words)}
    mat = _unit_rows(np.stack([table.entries[w] for w in words])) if words else None

    def predict_range(lo: int, hi: int) -> list[str | None]:
        out: list[str | None] = []
        for a, b, c, _d in questions[lo:hi]:
            if not all(w in index for w in (a, b, c)):
                out.append(None)
                continue
            target = mat[index[b]] - mat[index[a]] + mat[index[c]]
            norm = float(np.linalg.norm(target))
            if norm > 0.0:
                target = target / norm
            scores = mat @ target
            for w in (a, b, c):
                scores[index[w]] = -np.inf
            best = int(np.argmax(scores))
            out.append(words[best] if np.isfinite(scores[best]) else None)
        return out

    threads = max(1, threads)
    if threads == 1 or len(questions) < 2 * threads:
        return predict_range(0, len(questions))
    bounds = np.linspace(0, len(questions), threads + 1, dtype=int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(predict_range, bounds[:-1], bounds[1:])
    merged: list[str | None] = []
    for part in parts:
        merged.extend(part)
    return merged


def eval_analogy(table: WordVectorTable, ds: AnalogyDataset, threads: int = 1) -> EvalResult:
    """3CosAdd analogy accuracy over the table's vocabulary.

    A question counts correct when the prediction matches d case-folded;
    questions with any OOV word among a, b, c, d are skipped and counted.
    """
    usable = [q for q in ds.questions if all(w in table.entries for w in q)]
    skipped = len(ds.questions) - len(usable)
    if not usable:
        raise DataError(f"dataset {ds.name!r}: every question has an OOV word")
    predictions = analogy_predictions(table, usable, threads=threads)
    correct = sum(
        1
        for (_, _, _, d), pred in zip(usable, predictions)
        if pred is not None and pred.casefold() == d.casefold()
    )
    return EvalResult(
        dataset=ds.name,
        metric="accuracy",
        value=correct / len(usable),
        n_used=len(usable),
        n_skipped_oov=skipped,
    )


def load_similarity(path: str | Path) -> SimilarityDataset:
    """Read pairs from lines of "word1 word2 score"; '#' starts a comment."""
    path = Path(path)
    pairs: list[tuple[str, str, float]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            tokens = stripped.split()
            if len(tokens) != 3:
                raise DataError(
                    f"{path}:{lineno}: expected 'word1 word2 score', got {len(tokens)} tokens"
                )
            try:
                score = float(tokens[2])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad score {tokens[2]!r}") from None
            if not np.isfinite(score):
                raise DataError(f"{path}:{lineno}: non-finite score")
            pairs.append((tokens[0].casefold(), tokens[1].casefold(), score))
    if not pairs:
        raise DataError(f"{path}: no similarity pairs found")
    return SimilarityDataset(name=path.stem, pairs=pairs)


def load_analogy(path: str | Path) -> AnalogyDataset:
    """Read 4-token analogy questions; lines starting with ':' label sections."""
    path = Path(path)
    questions: list[tuple[str, str, str, str]] = []
    sections: list[str] = []
    current = ""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith(":"):
                current = stripped[1:].strip()
                continue
            tokens = stripped.split()
            if len(tokens) != 4:
                raise DataError(
                    f"{path}:{lineno}: expected 4 words per question, got {len(tokens)}"
                )
            questions.append(tuple(t.casefold() for t in tokens))
            sections.append(current)
    if not questions:
        raise DataError(f"{path}: no analogy questions found")
    return AnalogyDataset(name=path.stem, questions=questions, sections=sections)


def average_report(results) -> float:
    """Unweighted mean of metric values; items may be EvalResult or floats."""
    values = [r.value if isinstance(r, EvalResult) else float(r) for r in results]
    if not values:
        raise DataError("cannot average an empty result list")
    return float(sum(values) / len(values))


def write_results(results: list[EvalResult], path: str | Path) -> None:
    """Write evaluation rows as CSV with stable float formatting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULTS_HEADER)
        for r in results:
            writer.writerow([r.dataset, r.metric, repr(float(r.value)), r.n_used, r.n_skipped_oov])
