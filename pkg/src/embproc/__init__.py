"""Post-processing, aggregation and evaluation of contextual occurrence embeddings."""

from .aggregate import (
    AggregationConfig,
    AggregationReport,
    WordReportRow,
    aggregate,
    write_report,
)
from .diagnostics import LayerVarianceProfile, VarianceEntry, layer_variance, variance_report
from .embstore import (
    OccurrenceRecord,
    OccurrenceShard,
    ShardReader,
    ShardWriter,
    WordVectorTable,
    open_shard,
    read_shard,
    read_word_vectors,
    write_shard,
    write_word_vectors,
)
from .errors import (
    CorruptionError,
    DataError,
    EmbprocError,
    FormatError,
    TrainingDivergedError,
    UndefinedSimilarityError,
)
from .lexeval import (
    AnalogyDataset,
    EvalResult,
    SimilarityDataset,
    analogy_predictions,
    average_report,
    cosine,
    eval_analogy,
    eval_similarity,
    load_analogy,
    load_similarity,
    spearman,
    write_results,
)
from .normalize import (
    AbttModel,
    DegeneracyDiag,
    FeatureStats,
    FittedPipeline,
    FittedStep,
    Pipeline,
    PipelineStep,
    apply_abtt,
    apply_minmax,
    apply_pipeline,
    apply_ulen,
    apply_zscore,
    default_k,
    fit_abtt,
    fit_pipeline,
    fit_stats,
    load_fitted,
    parse_pipeline,
    save_fitted,
)
from .probe import (
    LayerSpan,
    NeuronRanking,
    ProbeDataset,
    ProbeModel,
    build_dataset,
    layer_distribution,
    load_labels,
    predict,
    rank_neurons,
    select_salient,
    smooth_objective,
    train_probe,
)

__version__ = "0.1.0"
