"""Laboratory for embedding distortion of finite metric spaces.

Builds structured families and tightness hosts, computes exact minimum
distortion into finite hosts, brackets Euclidean distortion, evaluates
the walk/cube/torus inequality constants whose decay forces polynomial
distortion growth, and searches contracted-tree hosts for vertically
faithful embeddings and their fork structure.
"""

__version__ = "0.1.0"

from .core import (
    AXIOM_TOL,
    SEARCH_TOL,
    DistortionReport,
    Embedding,
    FiniteMetricSpace,
    MetricValidationError,
    distortion,
    lipschitz_norm,
    min_distortion_exact,
    snowflake,
    validate_metric,
)
from .euclid import (
    GramCertificate,
    hamming_poincare_pairs,
    min_distortion_l2,
    min_distortion_l2_with_certificate,
    poincare_lower_bound,
)
from .generators import (
    FamilySpec,
    binary_tree,
    hamming_cube,
    linf_grid,
    path,
    snowflake_line,
    ultrametric_host,
)
from .invariants import (
    BudgetExceededError,
    DichotomyFit,
    InvariantValue,
    SubmultReport,
    VectorFamily,
    check_submultiplicativity,
    en_cotype_ratio,
    en_type_ratio,
    evaluate_gamma_map,
    evaluate_type_map,
    evaluate_walk,
    fit_beta,
    gamma_constant,
    metric_en_cotype_ratio,
    psi_constant,
    revalidate_invariant,
    type_constant,
)
from .trees import (
    FORK_TAGS,
    PREDICATE_TABLE_VERSION,
    FaithfulSubtree,
    Fork,
    HEtaHost,
    TreePoint,
    TreeSearchReport,
    census_counts,
    classify_fork_heta,
    classify_path4_heta,
    d_eta,
    find_delta_forks,
    find_faithful_subtree,
    fork_census,
    fork_tip_contraction,
    identity_distortion_heta,
    is_delta_fork,
    lcp_len,
    search_b4_nonembed,
    tree_distance,
    tree_points,
    vertical_faithfulness,
)
