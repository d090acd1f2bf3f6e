"""Speaker-verification back-end toolkit for precomputed embeddings.

PLDA modeling and scoring, unsupervised domain adaptation, multi-speaker
trial scoring via agglomerative clustering, score calibration and fusion,
detection metrics, text file formats, and a synthetic experiment harness.
"""

from .adapt import (
    DomainStats,
    collect_domain_stats,
    coral_align_features,
    coral_plus_adapt,
    excess_variance_adapt,
)
from .calibration import (
    CalibrationModel,
    FusionModel,
    apply_affine,
    apply_fusion,
    effective_prior_logit,
    select_positive_weight_subsystems,
    train_calibration,
    train_fusion,
    weighted_cross_entropy,
)
from .diarize import (
    AffinityMatrix,
    Clustering,
    CutPlan,
    MultiSpeakerScore,
    affinity_matrix,
    ahc_cluster,
    cluster_means,
    score_multispeaker_trial,
    score_whole_segment,
    uniform_cut_plan,
)
from .embeddings import Embedding, EmbeddingArchive, LabeledEmbeddings
from .metrics import (
    CostParams,
    DetCurve,
    actual_dcf,
    c_primary,
    det_points,
    eer,
    min_dcf,
)
from .plda import (
    GaussianPLDA,
    PairScorer,
    Preprocessor,
    fit_plda_em,
    fit_preprocessor,
    length_normalize,
    marginal_loglik,
    plda_llr_score,
    plda_log_density,
    sample_embeddings,
    score_trials,
)
from .scores import ScoreSet
from .synth import (
    DomainShiftSpec,
    ExperimentConfig,
    MultiSpeakerSpec,
    synth_domain_shift_experiment,
    synth_multispeaker_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "AffinityMatrix",
    "CalibrationModel",
    "Clustering",
    "CostParams",
    "CutPlan",
    "DetCurve",
    "DomainShiftSpec",
    "DomainStats",
    "Embedding",
    "EmbeddingArchive",
    "ExperimentConfig",
    "FusionModel",
    "GaussianPLDA",
    "LabeledEmbeddings",
    "MultiSpeakerScore",
    "MultiSpeakerSpec",
    "PairScorer",
    "Preprocessor",
    "ScoreSet",
    "actual_dcf",
    "affinity_matrix",
    "ahc_cluster",
    "apply_affine",
    "apply_fusion",
    "c_primary",
    "cluster_means",
    "collect_domain_stats",
    "coral_align_features",
    "coral_plus_adapt",
    "det_points",
    "eer",
    "effective_prior_logit",
    "excess_variance_adapt",
    "fit_plda_em",
    "fit_preprocessor",
    "length_normalize",
    "marginal_loglik",
    "min_dcf",
    "plda_llr_score",
    "plda_log_density",
    "sample_embeddings",
    "score_multispeaker_trial",
    "score_trials",
    "score_whole_segment",
    "select_positive_weight_subsystems",
    "synth_domain_shift_experiment",
    "synth_multispeaker_experiment",
    "train_calibration",
    "train_fusion",
    "uniform_cut_plan",
    "weighted_cross_entropy",
]
