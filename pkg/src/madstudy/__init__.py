"""madstudy: discriminative image selection, 2AFC voting, Thurstone ranking.

Pipeline: ingest a pool of inputs plus each enhancer's outputs, greedily pick
the most model-discriminating and content-diverse inputs per method pair,
collect forced-choice votes through a local web service, tally them into a
count matrix, and fit global quality scores by maximum likelihood.
"""

from .errors import MadstudyError
from .imaging import (
    FeatureVector,
    LumaImage,
    RasterImage,
    load_image,
    resize_bilinear,
    thumbnail_feature,
    to_luma,
)
from .metrics import (
    ExternalFeaturesD2,
    ExternalMatrixD1,
    MseD1,
    SsimD1,
    ThumbnailD2,
    feature_distance,
    mse,
    one_minus_ssim,
    set_distance,
    ssim,
)
from .ranking import (
    FitOptions,
    RankingScores,
    fit,
    log_likelihood,
    simulate_votes,
    srcc,
    stability_curve,
)
from .selection import (
    CandidatePool,
    SelectionConfig,
    SelectionResult,
    apply_rejections,
    enumerate_method_pairs,
    score_candidate,
    select_top_k,
)
from .service import StudyConfig, StudyServer, StudyState
from .study import Schedule, Trial, Vote, VoteLog, build_schedule, next_trial, record_vote, tally

__version__ = "0.1.0"

__all__ = [
    "MadstudyError",
    "RasterImage",
    "LumaImage",
    "FeatureVector",
    "load_image",
    "to_luma",
    "resize_bilinear",
    "thumbnail_feature",
    "mse",
    "ssim",
    "one_minus_ssim",
    "feature_distance",
    "set_distance",
    "MseD1",
    "SsimD1",
    "ExternalMatrixD1",
    "ThumbnailD2",
    "ExternalFeaturesD2",
    "CandidatePool",
    "SelectionConfig",
    "SelectionResult",
    "enumerate_method_pairs",
    "score_candidate",
    "select_top_k",
    "apply_rejections",
    "Schedule",
    "Trial",
    "Vote",
    "VoteLog",
    "build_schedule",
    "next_trial",
    "record_vote",
    "tally",
    "FitOptions",
    "RankingScores",
    "fit",
    "log_likelihood",
    "srcc",
    "stability_curve",
    "simulate_votes",
    "StudyConfig",
    "StudyState",
    "StudyServer",
    "__version__",
]
