"""Polynomial-expansion low-rank adapters.

Each adapter factor is expanded with its element-wise squares and pairwise
products before the two factors are multiplied, so a rank-r pair of
factors yields an update of rank up to ``2r + C(r, 2)``.
"""

from ._backend import backend_name
from .adapter import (
    AdapterConfig,
    AdapterGrads,
    PeraAdapter,
    backward,
    deserialize,
    forward,
    init_adapter,
    merge,
    param_count,
    serialize,
)
from .analysis import (
    eckart_young_gap,
    expressivity_bounds,
    interaction_strength,
    rank_report,
    term_decomposition,
)
from .errors import (
    ConfigError,
    DivergenceError,
    DomainError,
    InvariantError,
    ParseError,
    PeraError,
    ShapeError,
    VersionError,
)
from .expansion import (
    CoeffVector,
    ExpandedFactors,
    PairOrder,
    compose_delta_w,
    delta_w_sum_oracle,
    expand_a,
    expand_b,
    pair_order,
    variant_mask,
)
from .numerics import SvdResult, finite_diff_grad, hadamard, matmul, numeric_rank, svd

__version__ = "0.1.0"
