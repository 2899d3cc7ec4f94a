"""Rating prediction toolkit with implicit social trust.

Builds a user-user trust graph from the bipartite rating graph alone
(Hellinger distance over neighbor-degree profiles, thresholded at a
target graph density) and feeds it into trust-regularized matrix
factorization, next to the usual rating-only baselines.
"""

from helltrust.datasets import (
    FoldAssignment,
    ParseError,
    RatingDataset,
    RatingRecord,
    Stats,
    TrustEdgeList,
    dataset_stats,
    kfold_split,
    parse_ratings,
    parse_trust,
)
from helltrust.trust import (
    DegreeProfile,
    DegenerateFitError,
    ExtractionError,
    NormalFit,
    ThresholdSpec,
    build_degree_profiles,
    compute_threshold,
    extract_trust,
    extract_trust_edges,
    fit_normal_mle,
    hellinger_distance,
    inverse_normal_cdf,
    normal_cdf,
    sample_distances,
)
from helltrust.models import (
    DivergenceError,
    FactorModel,
    HyperParams,
    ModelSpec,
    build_predictor,
    pcc_similarity,
    train_knn,
    train_latent_factor,
    train_mean_model,
    train_slope_one,
    train_trust_svd,
)
from helltrust.evaluation import (
    EvalReport,
    TrustSource,
    compare_trust_sources,
    cross_validate,
    evaluate,
    threshold_sweep,
)

__version__ = "0.1.0"
