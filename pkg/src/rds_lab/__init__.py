"""Referral-sampling laboratory: tree-indexed Markov walks on weighted
graphs, the estimator family built on them, branching-process diagnostics,
and replicate-level distribution summaries."""

from .blockmodel import BlockModel, BlockModelError, TwoBlockParams
from .branching import (
    BranchingError,
    CountSample,
    MartingaleTrace,
    MixtureComponentSummary,
    TypeCounts,
    count_types,
    covariance_recursion,
    martingale_traces,
    mean_matrix,
    mixture_limit_mean,
    projection_variance,
    projection_variance_series,
    simulate_type_counts,
    vh_mixture_limit_mean,
)
from .estimators import (
    DegreesUnavailable,
    EstimateRecord,
    EstimatorError,
    GlsWeights,
    build_sigma_blockmodel,
    gls_closed_form_2block,
    gls_general,
    gls_ipw,
    gls_vh,
    gls_weights_closed_form,
    ipw,
    records_to_csv,
    sample_mean,
    sbm_fgls,
    vh,
)
from .graph import (
    EdgeListParseError,
    GraphError,
    TransitionMatrix,
    WeightedGraph,
    build_transition,
    connected_components,
    largest_connected_component,
    read_edge_list,
    write_edge_list,
)
from .sampler import (
    RdsSample,
    RestartExhausted,
    SamplerError,
    SeedSpec,
    draw_seed,
    walk,
    walk_without_replacement,
)
from .spectral import (
    Regime,
    RepeatedSecondEigenvalueWarning,
    SpectralDecomposition,
    SpectralError,
    bottleneck,
    classify_regime,
    decompose,
    decomposition_to_csv,
    expand_in_eigenbasis,
)
from .stats import (
    DensityCurve,
    DistributionSummary,
    SeparationReport,
    StatsError,
    kde,
    ks_to_fitted_normal,
    mixture_separation,
    qq_normal,
    silverman_bandwidth,
    summarize,
)
from .tree import (
    OffspringLaw,
    ReferralTree,
    TreeError,
    galton_watson,
    grow_to_size,
    m_tree,
    pairwise_distances,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
