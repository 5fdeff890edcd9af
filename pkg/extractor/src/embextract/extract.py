"""Dump per-layer occurrence vectors from a transformer encoder.

The extractor scans a pre-tokenized corpus (one sentence per line,
whitespace-separated tokens), picks up to a configured number of
sentences per target word with seeded reservoir sampling, runs the
encoder once over the selected sentences, and appends one record per
(word, sentence) to a shard file per requested layer. Layer 0 is the
embedding layer; layer L is the output of encoder block L.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

from embproc import OccurrenceRecord, ShardWriter

from .errors import ConfigError

_BATCH_SENTENCES = 16
_MASK64 = 2**64 - 1


@dataclass
class ExtractionConfig:
    """Everything one extraction run needs.

    model: checkpoint directory or hub identifier.
    corpus: text file, one pre-tokenized sentence per line.
    vocabulary: text file, one target word per line.
    out_dir: directory for shard files and coverage.csv.
    max_per_word: cap on sentences kept per target word.
    layers: hidden-state indices to dump, 0 for the embedding layer.
    seed: drives the per-word sentence sampling.
    """

    model: str
    corpus: str
    vocabulary: str
    out_dir: str
    max_per_word: int = 200
    layers: tuple[int, ...] = (0,)
    seed: int = 0

    def __post_init__(self):
        if self.max_per_word < 1:
            raise ConfigError(f"max_per_word must be >= 1, got {self.max_per_word}")
        layers = tuple(int(layer) for layer in self.layers)
        if not layers:
            raise ConfigError("layers must not be empty")
        if len(set(layers)) != len(layers):
            raise ConfigError(f"duplicate layer in {layers}")
        for layer in layers:
            if layer < 0:
                raise ConfigError(f"layer must be >= 0, got {layer}")
        self.layers = layers


@dataclass
class CoverageRow:
    """Per-word accounting: sentences seen vs records written."""

    word: str
    n_found: int
    n_written: int


@dataclass
class ExtractionResult:
    shard_paths: dict[int, Path]
    coverage_path: Path
    coverage: list[CoverageRow]
    n_records: int
    n_truncated: int


def _word_key(word: str) -> list[int]:
    digest = hashlib.sha256(word.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 8], "little") for i in range(0, 32, 8)]


def _read_vocabulary(path: str) -> list[str]:
    words = []
    seen = set()
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            word = line.strip()
            if not word:
                continue
            if word in seen:
                raise ConfigError(f"{path}:{lineno}: duplicate target word {word!r}")
            seen.add(word)
            words.append(word)
    if not words:
        raise ConfigError(f"{path}: no target words")
    return words


def _sample_sentences(cfg: ExtractionConfig, targets: list[str]):
    """First corpus pass: per-word reservoir of containing sentence ids."""
    target_set = set(targets)
    found = {word: 0 for word in targets}
    reservoirs = {word: [] for word in targets}
    rngs = {
        word: np.random.default_rng(
            np.random.SeedSequence([cfg.seed & _MASK64, *_word_key(word)])
        )
        for word in targets
    }
    with open(cfg.corpus, "r", encoding="utf-8") as handle:
        for sentence_id, line in enumerate(handle):
            for word in target_set.intersection(line.split()):
                found[word] += 1
                reservoir = reservoirs[word]
                if len(reservoir) < cfg.max_per_word:
                    reservoir.append(sentence_id)
                else:
                    slot = int(rngs[word].integers(0, found[word]))
                    if slot < cfg.max_per_word:
                        reservoir[slot] = sentence_id
    return found, reservoirs


def _collect_sentences(corpus: str, wanted: set[int]) -> dict[int, list[str]]:
    """Second corpus pass: tokens for the selected sentence ids only."""
    sentences = {}
    with open(corpus, "r", encoding="utf-8") as handle:
        for sentence_id, line in enumerate(handle):
            if sentence_id in wanted:
                sentences[sentence_id] = line.split()
    return sentences


def extract(cfg: ExtractionConfig) -> ExtractionResult:
    """Run the model over sampled sentences and write one shard per layer."""
    targets = _read_vocabulary(cfg.vocabulary)
    found, reservoirs = _sample_sentences(cfg, targets)

    by_sentence = {}
    for word, reservoir in reservoirs.items():
        for sentence_id in reservoir:
            by_sentence.setdefault(sentence_id, []).append(word)
    ordered_ids = sorted(by_sentence)
    for sentence_id in ordered_ids:
        by_sentence[sentence_id].sort()
    sentences = _collect_sentences(cfg.corpus, set(ordered_ids))

    tokenizer = AutoTokenizer.from_pretrained(cfg.model)
    model = AutoModel.from_pretrained(cfg.model)
    model.eval()
    n_layers = int(model.config.num_hidden_layers)
    for layer in cfg.layers:
        if layer > n_layers:
            raise ConfigError(
                f"layer {layer} outside model range 0..{n_layers}"
            )
    dim = int(model.config.hidden_size)
    max_length = int(
        getattr(model.config, "max_position_embeddings", tokenizer.model_max_length)
    )
    batch_size = _BATCH_SENTENCES if tokenizer.pad_token is not None else 1

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    shard_paths = {layer: out_dir / f"l{layer}.ceb" for layer in sorted(cfg.layers)}

    written = {word: 0 for word in targets}
    n_records = 0
    n_truncated = 0
    writers = {
        layer: ShardWriter(path, dim=dim, layer=layer)
        for layer, path in shard_paths.items()
    }
    try:
        for start in range(0, len(ordered_ids), batch_size):
            batch_ids = ordered_ids[start : start + batch_size]
            batch_tokens = [sentences[sid] for sid in batch_ids]
            encoded = tokenizer(
                batch_tokens,
                is_split_into_words=True,
                padding=len(batch_ids) > 1,
                truncation=True,
                max_length=max_length,
                return_tensors="pt",
            )
            with torch.no_grad():
                hidden = model(**encoded, output_hidden_states=True).hidden_states
            for row, sentence_id in enumerate(batch_ids):
                word_ids = encoded.word_ids(row)
                covered = {wid for wid in word_ids if wid is not None}
                tokens = batch_tokens[row]
                if len(covered) < len(tokens):
                    n_truncated += 1
                for word in by_sentence[sentence_id]:
                    index = tokens.index(word)
                    positions = [
                        pos for pos, wid in enumerate(word_ids) if wid == index
                    ]
                    if not positions:
                        continue
                    for layer in cfg.layers:
                        pooled = hidden[layer][row, positions].mean(dim=0)
                        vector = np.asarray(pooled.numpy(), dtype=np.float32)
                        writers[layer].append(
                            OccurrenceRecord(
                                word=word, sentence_id=sentence_id, vector=vector
                            )
                        )
                    written[word] += 1
                    n_records += len(cfg.layers)
    finally:
        for writer in writers.values():
            writer.close()

    coverage = [CoverageRow(word, found[word], written[word]) for word in targets]
    coverage_path = out_dir / "coverage.csv"
    with open(coverage_path, "w", encoding="utf-8", newline="") as handle:
        out = csv.writer(handle)
        out.writerow(("word", "n_found", "n_written"))
        for row in coverage:
            out.writerow((row.word, row.n_found, row.n_written))

    return ExtractionResult(
        shard_paths=shard_paths,
        coverage_path=coverage_path,
        coverage=coverage,
        n_records=n_records,
        n_truncated=n_truncated,
    )
