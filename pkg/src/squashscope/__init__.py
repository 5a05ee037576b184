"""Over-squashing measures and capacity bounds for message-passing networks on graphs."""

__version__ = "0.1.0"

from .bounds import (
    BoundReport,
    MessagePassingMatrix,
    MixingConstants,
    build_message_matrix,
    message_hessian_term,
    min_depth_bound,
    min_weight_bound,
    mixing_bound,
    node_osq_first_order,
    node_osq_second_order,
    osq_relative,
    osq_tilde,
    propagation_matrix,
    score_rewiring,
    spectral_mixing_bound,
)
from .errors import (
    CertificationError,
    ConvergenceError,
    DimensionMismatch,
    GenerationError,
    GraphValidationError,
    ParseError,
    PremiseViolation,
    SquashscopeError,
)
from .experiments import (
    Dataset,
    Instance,
    TaskSpec,
    TrainConfig,
    ablation,
    analytic_max_mixing,
    build_dataset,
    default_corpus,
    select_pair_at_quantile,
    train,
)
from .graphs import (
    Graph,
    NodePair,
    count_shortest_paths,
    from_edges,
    generate,
    load,
    save,
    shortest_distance,
)
from .mpnn import (
    CertifiedConstants,
    GatedMessage,
    LinearMessage,
    MpnnLayer,
    MpnnModel,
    certify_constants,
    empirical_max_mixing,
    fd_jacobian,
    fd_mixing,
    forward,
    random_model,
    verify_bound,
)
from .spectral import (
    CommuteTable,
    SpectralData,
    commute_time_monte_carlo,
    commute_time_spectral,
    eigendecompose,
    laplacian_pseudo_inverse,
    resistance_via_moore_penrose,
    spectral_summary,
)
