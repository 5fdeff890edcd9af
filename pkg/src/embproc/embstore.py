"""On-disk formats for occurrence shards (.ceb) and aggregated word vectors.

Shard layout (all integers little-endian):

    magic "CEB1" (4 bytes) | version u32 = 1 | dim u32 | layer u32
    then records until EOF, each:
    word_len u32 | word UTF-8 bytes | sentence_id u32 | dim x float32

Vectors are stored as float32 for storage economy; computation elsewhere
happens in float64. Word-vector tables use the word2vec text convention:
first line ``N d``, then ``N`` lines ``word v1 ... vd``, LF endings.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import CorruptionError, DataError, FormatError

SHARD_MAGIC = b"CEB1"
SHARD_VERSION = 1
_HEADER = struct.Struct("<4sIII")
_U32 = struct.Struct("<I")


@dataclass(frozen=True)
class OccurrenceRecord:
    """One contextual embedding: a word, its context id, and the vector."""

    word: str
    sentence_id: int
    vector: np.ndarray

    def __post_init__(self):
        if not self.word:
            raise DataError("occurrence record has an empty word")
        if self.sentence_id < 0 or self.sentence_id > 0xFFFFFFFF:
            raise DataError(
                f"sentence_id {self.sentence_id} for {self.word!r} out of u32 range"
            )
        vec = np.asarray(self.vector)
        if vec.ndim != 1:
            raise DataError(f"vector for {self.word!r} is not 1-dimensional")
        if not np.all(np.isfinite(vec)):
            raise DataError(f"non-finite value in vector for word {self.word!r}")
        object.__setattr__(self, "vector", vec)


@dataclass
class OccurrenceShard:
    """Per-layer collection of occurrence records with a fixed dimension."""

    layer: int
    dim: int
    records: list[OccurrenceRecord] = field(default_factory=list)

    def __post_init__(self):
        if self.dim <= 0:
            raise DataError(f"shard dim must be positive, got {self.dim}")
        if self.layer < 0:
            raise DataError(f"shard layer must be non-negative, got {self.layer}")
        for rec in self.records:
            if rec.vector.shape[0] != self.dim:
                raise DataError(
                    f"record for {rec.word!r} has dim {rec.vector.shape[0]}, "
                    f"shard dim is {self.dim}"
                )

    def __len__(self) -> int:
        return len(self.records)

    def matrix(self) -> np.ndarray:
        """All record vectors stacked as an (n, dim) float64 array."""
        if not self.records:
            return np.empty((0, self.dim), dtype=np.float64)
        return np.stack([r.vector for r in self.records]).astype(np.float64)


class ShardReader:
    """Streaming reader over one shard file.

    Iterating yields records in file order without loading the whole
    file. Single-consumer; distinct files may be read from distinct
    threads. Use as a context manager or call :meth:`close`.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "rb")
        header = self._fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            self._fh.close()
            raise FormatError(f"{self.path}: file too short for a shard header")
        magic, version, dim, layer = _HEADER.unpack(header)
        if magic != SHARD_MAGIC:
            self._fh.close()
            raise FormatError(f"{self.path}: bad magic {magic!r}, expected {SHARD_MAGIC!r}")
        if version != SHARD_VERSION:
            self._fh.close()
            raise FormatError(f"{self.path}: unsupported shard version {version}")
        if dim == 0:
            self._fh.close()
            raise FormatError(f"{self.path}: shard header declares dim 0")
        self.dim = int(dim)
        self.layer = int(layer)
        self._offset = _HEADER.size

    def __enter__(self) -> "ShardReader":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        self._fh.close()

    def __iter__(self) -> Iterator[OccurrenceRecord]:
        return self

    def __next__(self) -> OccurrenceRecord:
        start = self._offset
        head = self._fh.read(_U32.size)
        if not head:
            raise StopIteration
        if len(head) < _U32.size:
            raise CorruptionError(f"{self.path}: truncated word length", offset=start)
        (word_len,) = _U32.unpack(head)
        body_len = word_len + _U32.size + 4 * self.dim
        body = self._fh.read(body_len)
        if len(body) < body_len:
            raise CorruptionError(f"{self.path}: truncated record", offset=start)
        self._offset = start + _U32.size + body_len
        try:
            word = body[:word_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptionError(
                f"{self.path}: record word is not valid UTF-8: {exc}", offset=start
            ) from None
        if not word:
            raise DataError(f"{self.path}: record with empty word at offset {start}")
        (sentence_id,) = _U32.unpack(body[word_len : word_len + _U32.size])
        vec = np.frombuffer(body[word_len + _U32.size :], dtype="<f4").copy()
        if not np.all(np.isfinite(vec)):
            raise DataError(f"{self.path}: non-finite value in vector for word {word!r}")
        return OccurrenceRecord(word=word, sentence_id=sentence_id, vector=vec)


def open_shard(path: str | Path) -> ShardReader:
    """Open ``path`` for streaming record access."""
    return ShardReader(path)


def read_shard(path: str | Path) -> OccurrenceShard:
    """Read a whole shard file into memory, records in file order."""
    with open_shard(path) as reader:
        records = list(reader)
        return OccurrenceShard(layer=reader.layer, dim=reader.dim, records=records)


class ShardWriter:
    """Incremental shard writer; records append after a fixed header."""

    def __init__(self, path: str | Path, dim: int, layer: int):
        if dim <= 0:
            raise DataError(f"shard dim must be positive, got {dim}")
        if layer < 0 or layer > 0xFFFFFFFF:
            raise DataError(f"shard layer {layer} out of u32 range")
        self.path = Path(path)
        self.dim = int(dim)
        self.layer = int(layer)
        self._fh = open(self.path, "wb")
        self._fh.write(_HEADER.pack(SHARD_MAGIC, SHARD_VERSION, self.dim, self.layer))

    def __enter__(self) -> "ShardWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def append(self, record: OccurrenceRecord) -> None:
        if record.vector.shape[0] != self.dim:
            raise DataError(
                f"record for {record.word!r} has dim {record.vector.shape[0]}, "
                f"writer dim is {self.dim}"
            )
        word_bytes = record.word.encode("utf-8")
        self._fh.write(_U32.pack(len(word_bytes)))
        self._fh.write(word_bytes)
        self._fh.write(_U32.pack(record.sentence_id))
        self._fh.write(np.ascontiguousarray(record.vector, dtype="<f4").tobytes())

    def close(self) -> None:
        self._fh.close()


def write_shard(shard: OccurrenceShard, path: str | Path) -> None:
    """Write ``shard`` to ``path`` in the binary .ceb layout.

    Vectors are stored as little-endian float32; float64 inputs are
    rounded. ``read_shard(write_shard(x))`` reproduces ``x`` bit-for-bit
    when the vectors are float32.
    """
    try:
        with ShardWriter(path, dim=shard.dim, layer=shard.layer) as writer:
            for rec in shard.records:
                writer.append(rec)
    except OSError as exc:
        raise OSError(f"writing shard {path}: {exc}") from exc


@dataclass
class WordVectorTable:
    """Aggregated word vectors: one d-dimensional vector per unique word."""

    dim: int
    entries: dict[str, np.ndarray]
    meta: str = ""

    def __post_init__(self):
        if self.dim <= 0:
            raise DataError(f"table dim must be positive, got {self.dim}")
        for word, vec in self.entries.items():
            if not word:
                raise DataError("table contains an empty word")
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (self.dim,):
                raise DataError(
                    f"vector for {word!r} has shape {vec.shape}, expected ({self.dim},)"
                )
            if not np.all(np.isfinite(vec)):
                raise DataError(f"non-finite value in vector for word {word!r}")
            self.entries[word] = vec

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: str) -> bool:
        return word in self.entries


def write_word_vectors(table: WordVectorTable, path: str | Path) -> None:
    """Write ``table`` as word2vec-style text.

    Floats are written with :func:`repr`, the shortest form that parses
    back to the exact float64 (well past 9 significant digits of
    precision), so the round-trip is lossless.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(table.entries)} {table.dim}\n")
        for word, vec in table.entries.items():
            comps = " ".join(repr(float(x)) for x in vec)
            fh.write(f"{word} {comps}\n")


def read_word_vectors(path: str | Path) -> WordVectorTable:
    """Read a word2vec-style text file written by :func:`write_word_vectors`."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 2:
            raise FormatError(f"{path}: first line must be 'N d', got {header!r}")
        try:
            count, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise FormatError(f"{path}: first line must be 'N d', got {header!r}") from None
        if dim <= 0:
            raise DataError(f"{path}: dimension must be positive, got {dim}")
        entries: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            tokens = line.split()
            word = tokens[0]
            if len(tokens) != dim + 1:
                raise DataError(
                    f"{path}:{lineno}: expected {dim} components for {word!r}, "
                    f"got {len(tokens) - 1}"
                )
            if word in entries:
                raise DataError(f"{path}:{lineno}: duplicate word {word!r}")
            try:
                vec = np.array([float(t) for t in tokens[1:]], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad float: {exc}") from None
            if not np.all(np.isfinite(vec)):
                raise DataError(f"{path}:{lineno}: non-finite value for word {word!r}")
            entries[word] = vec
        if len(entries) != count:
            raise DataError(
                f"{path}: header declares {count} entries, file has {len(entries)}"
            )
    return WordVectorTable(dim=dim, entries=entries)
