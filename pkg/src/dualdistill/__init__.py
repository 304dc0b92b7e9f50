"""Semi-supervised relation extraction with two-teacher distillation.

Pipeline: a small labeled pool plus an unlabeled pool feed iterative
self-training; the two resulting models become teachers whose consensus
predictions extend the hard-labeled data and whose disagreements are
transferred to a fresh student as temperature-softened soft labels.
"""

from .config import ExperimentConfig, SyntheticConfig, config_from_dict
from .data import (
    Corpus,
    CorpusParseError,
    CorpusSchemaError,
    DataSplit,
    LabelSet,
    generate_synthetic,
    load_jsonl,
    make_split,
    save_jsonl,
    split_corpus,
    validate_stats,
)
from .distillation import (
    Partition,
    TeacherPair,
    TeachingData,
    build_teaching_data,
    export_teaching_data,
    partition_predictions,
    train_student,
)
from .features import FeatureVector, Instance, featurize, featurize_all, insert_markers
from .harness import (
    LandscapeGrid,
    RunReport,
    VARIANTS,
    loss_landscape_grid,
    run_single,
    run_variant,
    summarize,
)
from .losses import (
    LossBreakdown,
    combined_loss,
    combined_loss_gradient,
    cross_entropy,
    kl_divergence,
    softmax,
)
from .metrics import Scores, dump_predictions, score
from .model import (
    Model,
    ModelSpec,
    TrainConfig,
    TrainSample,
    TrainingDivergedError,
    evaluate_loss,
    forward,
    init_model,
    load_model,
    predict,
    predict_proba,
    save_model,
    train,
)
from .selftrain import SslConfig, SslState, run_ssl, select_batch

__version__ = "0.1.0"
