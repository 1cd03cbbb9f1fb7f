"""Block Hawkes models for continuous-time network event data.

A directed network of N nodes emits timestamped events (sender, receiver,
time). Nodes belong to latent classes; each ordered class pair shares one
exponential Hawkes process whose events attach to uniformly random node pairs
in the block. The package covers simulation from the generative model,
regularized spectral clustering of aggregated adjacency matrices, greedy
likelihood search and variational inference for the class structure, and
next-event prediction, plus a CLI (``blockhawkes --help``).
"""

from .backend import BACKEND
from .core import (
    AdjacencyMatrix,
    BlockPairView,
    ClassAssignment,
    Event,
    EventStream,
    ParseError,
    aggregate,
    load_events,
    load_labels,
    partition_by_blocks,
    save_events,
    save_labels,
    save_node_mapping,
    weighted_adjacency,
)
from .hawkes import (
    HawkesFit,
    HawkesParams,
    SupercriticalError,
    expected_next_event_time,
    fit_mle,
    intensity,
    log_likelihood,
    simulate,
)
from .evaluation import (
    DeviationPoint,
    DeviationReport,
    PredictionProtocol,
    PredictionRecord,
    PredictionReport,
    adjusted_rand_index,
    deviation_experiment,
    expected_event_count,
    linear_scaling_rule,
    predict_discrete_baseline,
    predict_rolling,
    theoretical_bound,
)
from .inference import (
    FitResult,
    VariationalState,
    conditional_log_likelihood,
    elbo,
    fit_block_model,
    local_search,
    variational_em,
)
from .generator import BlockHawkesModel, sample_classes, sample_network
from .spectral import (
    SpectralEmbedding,
    regularized_laplacian,
    singular_value_profile,
    soft_assignment,
    spectral_cluster,
    spectral_embedding,
)

__version__ = "0.1.0"
