"""rdelab: recursive distributional equations, tree processes, and
numerical tail-triviality diagnostics.

The package has four layers: distribution families on extended state
spaces (``dist``), recursion definitions and depth-n tree samplers
(``rde``), deterministic grid fixed-point operators for the freezing
recursion (``grid``), and dependence/tail diagnostics (``tail``), fronted
by a command-line harness (``cli``).
"""

from .dist import (
    Bernoulli,
    Empirical,
    ExtendedValue,
    GridCdf,
    INFINITY,
    MarginalDist,
    NuA,
    NuR,
    PointMass,
    cdf_eval,
    dist_from_json,
    dkw_band,
    ks_distance,
    quantile,
    sample,
    survival,
)
from .errors import (
    ArgumentError,
    DegenerateParameterError,
    DomainError,
    NumericalInstabilityError,
    RdelabError,
    ResourceBudgetError,
    ValidationError,
)
from .grid import (
    BivariateGrid,
    DiagonalIteration,
    diagonal_grid,
    find_min_partition,
    g_from_f,
    h_from_f,
    iterate_diagonal,
    partition_cell_bounds,
    partition_check,
    product_grid,
    quadrature_floor,
    read_grid,
    t_push,
    tt_push,
    uniform_knots,
    write_grid,
)
from .rde import (
    DiagonalBoundary,
    FrozenPercolationRde,
    Mod2Rde,
    PairSample,
    ProductBoundary,
    QuicksortRde,
    RdeSpec,
    g_eval,
    make_rde,
    phi,
    sample_bivariate_batch,
    sample_bivariate_root,
    sample_coupled_batch,
    sample_coupled_roots,
    sample_root_batch,
    sample_rtp_root,
)
from .seeds import Seed, chunk_plan, map_chunks
from .tail import (
    DependenceReport,
    ProbeSweep,
    independence_stat,
    long_range_probe,
    mod2_pair_prob,
    probe_sweep,
    theta_fixed,
    theta_step,
)

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "Bernoulli",
    "BivariateGrid",
    "DegenerateParameterError",
    "DependenceReport",
    "DiagonalBoundary",
    "DiagonalIteration",
    "DomainError",
    "Empirical",
    "ExtendedValue",
    "FrozenPercolationRde",
    "GridCdf",
    "INFINITY",
    "MarginalDist",
    "Mod2Rde",
    "NuA",
    "NuR",
    "NumericalInstabilityError",
    "PairSample",
    "PointMass",
    "ProbeSweep",
    "ProductBoundary",
    "QuicksortRde",
    "RdeSpec",
    "RdelabError",
    "ResourceBudgetError",
    "Seed",
    "ValidationError",
    "cdf_eval",
    "chunk_plan",
    "diagonal_grid",
    "dist_from_json",
    "dkw_band",
    "find_min_partition",
    "g_eval",
    "g_from_f",
    "h_from_f",
    "independence_stat",
    "iterate_diagonal",
    "ks_distance",
    "long_range_probe",
    "make_rde",
    "map_chunks",
    "mod2_pair_prob",
    "partition_cell_bounds",
    "partition_check",
    "phi",
    "probe_sweep",
    "product_grid",
    "quadrature_floor",
    "quantile",
    "read_grid",
    "sample",
    "sample_bivariate_batch",
    "sample_bivariate_root",
    "sample_coupled_batch",
    "sample_coupled_roots",
    "sample_root_batch",
    "sample_rtp_root",
    "survival",
    "t_push",
    "tt_push",
    "uniform_knots",
    "write_grid",
]
