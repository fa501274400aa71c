"""privshift: differentially-private text rewriting and the intrinsic-dimension
shift it induces.

Word-level rewriting perturbs static word embeddings with metric-DP noise;
sentence-level rewriting realizes the exponential mechanism as temperature
sampling over clipped logits (causal and masked variants). The geometry
module estimates the intrinsic dimension of token point clouds, and the
harness measures the ID shift across a privacy-budget grid against a
human-paraphrase baseline.
"""

from .common import (
    DataError,
    DegenerateCloudError,
    PrivacyBudget,
    ProviderError,
    simple_word_tokenize,
)
from .dp_sentence import (
    ClipConfig,
    DEFAULT_TEMPLATE,
    EMPTY_TEMPLATE,
    LogitProvider,
    PromptTemplate,
    RemoteLogitProvider,
    SamplerConfig,
    STOP_TOKEN,
    ToyBigramProvider,
    causal_rewrite,
    clip_logits,
    default_max_len,
    dp_ratio_check,
    max_softmax_ratio,
    mlm_rewrite,
    sample_token,
    softmax_probabilities,
    temperature_for,
)
from .dp_word import (
    EmbeddingTable,
    WordRewriteRecord,
    load_embedding_table,
    madlib_rewrite,
    nearest_token,
    sample_metric_noise,
    self_substitution_rate,
)
from .geometry import (
    FilterConfig,
    FilteredOut,
    IdEstimate,
    PointCloud,
    build_point_cloud,
    embedding_rotation,
    knn_distances,
    levina_bickel,
    neighbor_ratios,
    synthetic_cloud,
    two_nn,
)
from .harness import (
    BaselineStats,
    CellStats,
    EstimatorConfig,
    ExperimentConfig,
    PrecomputedEmbeddings,
    Report,
    SentencePair,
    ShiftRow,
    SkipRecord,
    TableEmbedder,
    aggregate,
    baseline_shift,
    cloud_from_embedded,
    load_pairs,
    make_provider,
    read_embeddings_jsonl,
    row_seed,
    run_experiment,
    run_grid,
)
from .report import emit, render_csv, render_svg

__version__ = "0.1.0"
