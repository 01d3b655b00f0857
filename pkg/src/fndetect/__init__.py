"""fndetect: training and evaluation harness for transformer-based
fake-news claim classifiers."""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    CorpusSplit,
    CorpusStats,
    LabeledPost,
    corpus_stats,
    load_corpus,
    load_presplit,
    split_corpus,
    write_corpus,
)
from .encoding import (  # noqa: F401
    EncodedBatch,
    EncoderOutput,
    EncoderSpec,
    build_encoder,
    tokenize_batch,
)
from .evaluation import (  # noqa: F401
    ClassMetrics,
    ConfusionMatrix,
    EvalReport,
    class_metrics,
    comparison_table,
    confusion,
)
from .models import (  # noqa: F401
    MODEL_VARIANTS,
    Classifier,
    ModelSpec,
    build_model,
    load_checkpoint,
)
from .textprep import (  # noqa: F401
    CleaningConfig,
    CleanPost,
    CleanStep,
    audit_no_loss,
    clean_posts,
    clean_text,
    word_count_quantile,
)
from .training import (  # noqa: F401
    Adam,
    TrainConfig,
    TrainHistory,
    bce_loss,
    hparam_subset,
    train,
)
