"""The four post-processing methods and their compositions.

Every method follows fit-then-apply: statistics are fitted over an
occurrence set (a stream of d-dimensional vectors, float64 internally)
and the fitted model transforms individual vectors or whole matrices.
Fitting is a single streaming reduction; partial moments from stream
partitions merge exactly (Chan's parallel update), so chunked and serial
fits agree to float64 roundoff.

Methods:

* ``zscore``  - per-feature centering and scaling by the population
  standard deviation.
* ``minmax``  - per-feature affine rescale of the fitted set to [0, 1].
* ``ulen``    - per-vector division by the L2 norm.
* ``abtt``    - mean-centering followed by removal of projections onto
  the top-k principal directions of the fitted set.

Compositions are expressed as a :class:`Pipeline` ("abtt:7,zscore");
each step is fitted on the data as transformed by all previous steps.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import CorruptionError, DataError, FormatError

EPS = 1e-12
_FIT_BATCH = 4096

STEP_KINDS = ("zscore", "minmax", "ulen", "abtt")

NPF_MAGIC = b"NPF1"
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


def default_k(dim: int) -> int:
    """Default removed-direction count: floor(dim / 100), so 768 -> 7."""
    return dim // 100


@dataclass
class DegeneracyDiag:
    """Counts degenerate inputs seen while applying normalizers."""

    zero_vectors: int = 0


@dataclass
class FeatureStats:
    """Per-feature mean/std/min/max over an occurrence set.

    ``std`` uses the population denominator (1/N, not 1/(N-1)).
    """

    dim: int
    mean: np.ndarray
    std: np.ndarray
    min: np.ndarray
    max: np.ndarray
    count: int

    def __post_init__(self):
        for name in ("mean", "std", "min", "max"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (self.dim,):
                raise DataError(f"stats field {name} has shape {arr.shape}, expected ({self.dim},)")
            setattr(self, name, arr)
        if self.count < 1:
            raise DataError("stats count must be >= 1")
        if np.any(self.std < 0):
            raise DataError("negative standard deviation in stats")
        slack = 1e-9 * np.maximum(1.0, np.abs(self.mean))
        if np.any(self.min > self.mean + slack) or np.any(self.mean > self.max + slack):
            raise DataError("stats violate min <= mean <= max")


@dataclass
class AbttModel:
    """Mean vector plus top-k principal directions of an occurrence set."""

    dim: int
    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    k: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.components = np.asarray(self.components, dtype=np.float64).reshape(self.k, self.dim)
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=np.float64).reshape(self.k)
        if not 0 <= self.k <= self.dim:
            raise DataError(f"k={self.k} outside [0, dim={self.dim}]")
        if self.mean.shape != (self.dim,):
            raise DataError("abtt mean has wrong shape")
        if np.any(self.eigenvalues < 0):
            raise DataError("abtt eigenvalues must be non-negative")
        if np.any(np.diff(self.eigenvalues) > 0):
            raise DataError("abtt eigenvalues must be non-increasing")
        gram = self.components @ self.components.T
        if self.k and np.max(np.abs(gram - np.eye(self.k))) > 1e-8:
            raise DataError("abtt components are not orthonormal within 1e-8")


class _MomentAccum:
    """Streaming per-feature count/mean/M2/min/max with exact batch merges."""

    def __init__(self, dim: int):
        self.dim = dim
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)
        self.min = np.full(dim, np.inf)
        self.max = np.full(dim, -np.inf)

    def update(self, batch: np.ndarray) -> None:
        n_b = batch.shape[0]
        if n_b == 0:
            return
        bmean = batch.mean(axis=0)
        bm2 = np.square(batch - bmean).sum(axis=0)
        n_a = self.count
        n = n_a + n_b
        delta = bmean - self.mean
        self.mean = self.mean + delta * (n_b / n)
        self.m2 = self.m2 + bm2 + np.square(delta) * (n_a * n_b / n)
        self.count = n
        np.minimum(self.min, batch.min(axis=0), out=self.min)
        np.maximum(self.max, batch.max(axis=0), out=self.max)

    def stats(self) -> FeatureStats:
        if self.count < 1:
            raise DataError("cannot compute statistics of an empty occurrence stream")
        std = np.sqrt(np.maximum(self.m2, 0.0) / self.count)
        return FeatureStats(
            dim=self.dim, mean=self.mean, std=std, min=self.min, max=self.max, count=self.count
        )


class _CovAccum:
    """Streaming mean and centered scatter matrix (d x d) via Chan merges."""

    def __init__(self, dim: int):
        self.dim = dim
        self.count = 0
        self.mean = np.zeros(dim)
        self.scatter = np.zeros((dim, dim))

    def update(self, batch: np.ndarray) -> None:
        n_b = batch.shape[0]
        if n_b == 0:
            return
        bmean = batch.mean(axis=0)
        centered = batch - bmean
        bscatter = centered.T @ centered
        n_a = self.count
        n = n_a + n_b
        delta = bmean - self.mean
        self.mean = self.mean + delta * (n_b / n)
        self.scatter = self.scatter + bscatter + np.outer(delta, delta) * (n_a * n_b / n)
        self.count = n


def _iter_batches(occurrences, batch_size: int = _FIT_BATCH) -> Iterable[np.ndarray]:
    """Yield float64 (m, d) batches from an array or a vector stream."""
    if isinstance(occurrences, np.ndarray):
        if occurrences.ndim != 2:
            raise DataError(f"occurrence array must be 2-dimensional, got ndim={occurrences.ndim}")
        for start in range(0, occurrences.shape[0], batch_size):
            yield np.asarray(occurrences[start : start + batch_size], dtype=np.float64)
        return
    buf: list[np.ndarray] = []
    shape: tuple[int, ...] | None = None
    for vec in occurrences:
        arr = np.asarray(vec, dtype=np.float64)
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise DataError(f"inconsistent occurrence dim: {arr.shape} vs {shape}")
        buf.append(arr)
        if len(buf) >= batch_size:
            yield np.stack(buf)
            buf = []
    if buf:
        yield np.stack(buf)


def _check_batch(batch: np.ndarray, dim: int | None) -> int:
    if batch.ndim != 2:
        raise DataError("occurrence vectors must be 1-dimensional")
    if dim is None:
        dim = batch.shape[1]
    elif batch.shape[1] != dim:
        raise DataError(f"inconsistent occurrence dim: {batch.shape[1]} vs {dim}")
    if not np.all(np.isfinite(batch)):
        raise DataError("non-finite value in occurrence stream")
    return dim


def fit_stats(occurrences) -> FeatureStats:
    """Fit per-feature mean, population std, min and max over a stream.

    ``occurrences`` is an (n, d) array or an iterable of d-dim vectors.
    """
    accum: _MomentAccum | None = None
    dim: int | None = None
    for batch in _iter_batches(occurrences):
        dim = _check_batch(batch, dim)
        if accum is None:
            accum = _MomentAccum(dim)
        accum.update(batch)
    if accum is None:
        raise DataError("cannot fit statistics on an empty occurrence stream")
    return accum.stats()


def apply_zscore(v: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Center and scale the last axis of ``v``; degenerate features map to 0."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != stats.dim:
        raise DataError(f"vector dim {v.shape[-1]} does not match stats dim {stats.dim}")
    degenerate = stats.std <= EPS
    scale = np.where(degenerate, 1.0, stats.std)
    out = (v - stats.mean) / scale
    out[..., degenerate] = 0.0
    return out


def apply_minmax(v: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Rescale the last axis of ``v`` by the fitted per-feature range."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != stats.dim:
        raise DataError(f"vector dim {v.shape[-1]} does not match stats dim {stats.dim}")
    span = stats.max - stats.min
    degenerate = span <= EPS
    out = (v - stats.min) / np.where(degenerate, 1.0, span)
    out[..., degenerate] = 0.0
    return out


def apply_ulen(v: np.ndarray, diag: DegeneracyDiag | None = None) -> np.ndarray:
    """Divide each vector by its L2 norm; zero vectors pass through."""
    v = np.asarray(v, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    zero = norms <= EPS
    if diag is not None:
        diag.zero_vectors += int(np.count_nonzero(zero))
    return np.where(zero, v, v / np.where(zero, 1.0, norms))


def fit_abtt(occurrences, k: int) -> AbttModel:
    """Fit the mean and top-k principal directions of an occurrence set.

    The d x d population covariance is accumulated streaming in float64
    and eigendecomposed densely; the full-data SVD is deliberately
    avoided so fitting scales to millions of occurrences. Each component
    has its sign fixed so the largest-magnitude entry is positive, which
    makes serialized models reproducible.
    """
    if k < 0:
        raise DataError(f"k must be non-negative, got {k}")
    accum: _CovAccum | None = None
    dim: int | None = None
    for batch in _iter_batches(occurrences):
        dim = _check_batch(batch, dim)
        if accum is None:
            accum = _CovAccum(dim)
        accum.update(batch)
    if accum is None or accum.count < 2:
        raise DataError("fitting principal directions needs at least 2 vectors")
    if k > accum.dim:
        raise DataError(f"k={k} exceeds dimension {accum.dim}")
    cov = accum.scatter / accum.count
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    values = np.maximum(eigvals[order], 0.0)
    components = eigvecs[:, order].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return AbttModel(dim=accum.dim, mean=accum.mean, components=components, eigenvalues=values, k=k)


def apply_abtt(v: np.ndarray, model: AbttModel) -> np.ndarray:
    """Center ``v`` and remove its projections onto the fitted directions.

    Projection coefficients are taken on the centered vector, so over
    the fitted set the outputs stay mean-zero and exactly orthogonal to
    every removed direction.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != model.dim:
        raise DataError(f"vector dim {v.shape[-1]} does not match model dim {model.dim}")
    centered = v - model.mean
    if model.k == 0:
        return centered
    return centered - (centered @ model.components.T) @ model.components


@dataclass(frozen=True)
class PipelineStep:
    """One normalizer in a pipeline; ``k`` applies to abtt only."""

    kind: str
    k: int | None = None

    def __post_init__(self):
        if self.kind not in STEP_KINDS:
            raise DataError(f"unknown pipeline step {self.kind!r}; valid: {', '.join(STEP_KINDS)}")
        if self.kind == "abtt":
            if self.k is not None and self.k < 0:
                raise DataError(f"abtt k must be non-negative, got {self.k}")
        elif self.k is not None:
            raise DataError(f"step {self.kind!r} takes no parameter")


@dataclass
class Pipeline:
    """Ordered, non-empty list of normalizer steps."""

    steps: list[PipelineStep]

    def __post_init__(self):
        if not self.steps:
            raise DataError("pipeline must contain at least one step")

    def spec(self) -> str:
        return ",".join(
            f"{s.kind}:{s.k}" if s.kind == "abtt" and s.k is not None else s.kind
            for s in self.steps
        )


def parse_pipeline(spec: str) -> Pipeline:
    """Parse a comma-separated spec such as ``"abtt:7,zscore"``."""
    steps = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            raise DataError(f"empty step in pipeline spec {spec!r}")
        if ":" in part:
            kind, _, arg = part.partition(":")
            try:
                k = int(arg)
            except ValueError:
                raise DataError(f"bad parameter {arg!r} in pipeline step {part!r}") from None
            steps.append(PipelineStep(kind=kind, k=k))
        else:
            steps.append(PipelineStep(kind=part))
    return Pipeline(steps=steps)


@dataclass
class FittedStep:
    kind: str
    stats: FeatureStats | None = None
    abtt: AbttModel | None = None

    def apply(self, v: np.ndarray, diag: DegeneracyDiag | None = None) -> np.ndarray:
        if self.kind == "zscore":
            return apply_zscore(v, self.stats)
        if self.kind == "minmax":
            return apply_minmax(v, self.stats)
        if self.kind == "ulen":
            return apply_ulen(v, diag)
        return apply_abtt(v, self.abtt)


@dataclass
class FittedPipeline:
    """A pipeline with every step's statistics frozen."""

    dim: int
    steps: list[FittedStep] = field(default_factory=list)

    def apply(self, v: np.ndarray, diag: DegeneracyDiag | None = None) -> np.ndarray:
        out = np.asarray(v, dtype=np.float64)
        for step in self.steps:
            out = step.apply(out, diag)
        return out

    def spec(self) -> str:
        return ",".join(
            f"{s.kind}:{s.abtt.k}" if s.kind == "abtt" else s.kind for s in self.steps
        )


def fit_pipeline(occurrences, pipeline: Pipeline) -> FittedPipeline:
    """Fit each step on the occurrence set as transformed so far.

    Step i is fitted on the output of steps 1..i-1 applied to the full
    set, then applied before fitting step i+1; refits therefore see the
    intermediate distribution, not the raw one. The set is materialized
    in memory for the multiple passes this needs.
    """
    if isinstance(occurrences, np.ndarray):
        data = np.asarray(occurrences, dtype=np.float64)
    else:
        batches = list(_iter_batches(occurrences))
        if not batches:
            raise DataError("cannot fit a pipeline on an empty occurrence stream")
        data = np.concatenate(batches, axis=0)
    if data.ndim != 2 or data.shape[0] == 0:
        raise DataError("cannot fit a pipeline on an empty occurrence stream")
    _check_batch(data, None)
    fitted = FittedPipeline(dim=data.shape[1])
    for step in pipeline.steps:
        if step.kind in ("zscore", "minmax"):
            fstep = FittedStep(kind=step.kind, stats=fit_stats(data))
        elif step.kind == "ulen":
            fstep = FittedStep(kind="ulen")
        else:
            k = step.k if step.k is not None else default_k(data.shape[1])
            fstep = FittedStep(kind="abtt", abtt=fit_abtt(data, k))
        data = fstep.apply(data)
        fitted.steps.append(fstep)
    return fitted


def apply_pipeline(v: np.ndarray, fitted: FittedPipeline, diag: DegeneracyDiag | None = None) -> np.ndarray:
    """Apply every fitted step to ``v`` in pipeline order."""
    return fitted.apply(v, diag)


def _write_array(fh, arr: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def save_fitted(fitted: FittedPipeline, path: str | Path) -> None:
    """Serialize a fitted pipeline to the versioned .npf sidecar format."""
    with open(path, "wb") as fh:
        fh.write(NPF_MAGIC)
        fh.write(_U32.pack(len(fitted.steps)))
        for step in fitted.steps:
            kind_bytes = step.kind.encode("utf-8")
            fh.write(_U32.pack(len(kind_bytes)))
            fh.write(kind_bytes)
            if step.kind in ("zscore", "minmax"):
                st = step.stats
                fh.write(_U32.pack(st.dim))
                fh.write(_U64.pack(st.count))
                for arr in (st.mean, st.std, st.min, st.max):
                    _write_array(fh, arr)
            elif step.kind == "abtt":
                m = step.abtt
                fh.write(_U32.pack(m.dim))
                fh.write(_U32.pack(m.k))
                _write_array(fh, m.mean)
                _write_array(fh, m.eigenvalues)
                _write_array(fh, m.components)


def _read_exact(fh, n: int, path: Path, what: str) -> bytes:
    data = fh.read(n)
    if len(data) < n:
        raise CorruptionError(f"{path}: truncated {what}", offset=fh.tell() - len(data))
    return data


def _read_array(fh, n: int, path: Path, what: str) -> np.ndarray:
    return np.frombuffer(_read_exact(fh, 8 * n, path, what), dtype="<f8").copy()


def load_fitted(path: str | Path) -> FittedPipeline:
    """Read a fitted pipeline written by :func:`save_fitted`."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(NPF_MAGIC))
        if magic != NPF_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {NPF_MAGIC!r}")
        (n_steps,) = _U32.unpack(_read_exact(fh, 4, path, "step count"))
        steps: list[FittedStep] = []
        dim = 0
        for _ in range(n_steps):
            (kind_len,) = _U32.unpack(_read_exact(fh, 4, path, "step kind length"))
            kind = _read_exact(fh, kind_len, path, "step kind").decode("utf-8")
            if kind not in STEP_KINDS:
                raise FormatError(f"{path}: unknown step kind {kind!r}")
            if kind in ("zscore", "minmax"):
                (sdim,) = _U32.unpack(_read_exact(fh, 4, path, "stats dim"))
                (count,) = _U64.unpack(_read_exact(fh, 8, path, "stats count"))
                mean = _read_array(fh, sdim, path, "stats mean")
                std = _read_array(fh, sdim, path, "stats std")
                mn = _read_array(fh, sdim, path, "stats min")
                mx = _read_array(fh, sdim, path, "stats max")
                stats = FeatureStats(dim=sdim, mean=mean, std=std, min=mn, max=mx, count=count)
                steps.append(FittedStep(kind=kind, stats=stats))
                dim = sdim
            elif kind == "ulen":
                steps.append(FittedStep(kind="ulen"))
            else:
                (mdim,) = _U32.unpack(_read_exact(fh, 4, path, "abtt dim"))
                (k,) = _U32.unpack(_read_exact(fh, 4, path, "abtt k"))
                mean = _read_array(fh, mdim, path, "abtt mean")
                eigenvalues = _read_array(fh, k, path, "abtt eigenvalues")
                components = _read_array(fh, k * mdim, path, "abtt components").reshape(k, mdim)
                model = AbttModel(dim=mdim, mean=mean, components=components, eigenvalues=eigenvalues, k=k)
                steps.append(FittedStep(kind="abtt", abtt=model))
                dim = mdim
        if not steps:
            raise FormatError(f"{path}: pipeline has no steps")
    return FittedPipeline(dim=dim, steps=steps)
