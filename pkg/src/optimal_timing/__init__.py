"""Optimal execution timing from Monte Carlo sample paths.

Generate future price paths (:mod:`.pathgen`), train a recurrent
soft-stopping network per series (:mod:`.stopnet`), turn it into a single
execution step (:mod:`.timing`), and check it against exact lattice
solutions (:mod:`.oracle`) and historical backtests (:mod:`.evalharness`).
"""
from .errors import (
    InvalidArgumentError,
    NumericalDegeneracyError,
    NumericalError,
    OptimalTimingError,
    OracleLimitError,
    ParseError,
    TrainingDivergedError,
)
from .oracle import LatticeModel, exhaustive_adapted_value, lattice_value, sample_lattice_paths
from .pathgen import (
    ArModel,
    GbmParams,
    PathSet,
    SeriesHistory,
    bootstrap_paths,
    fit_ar,
    load_paths,
    normalize_to_unit,
    sample_ar_paths,
    save_paths,
    simulate_gbm,
)
from .stopnet import (
    NetworkParams,
    StopNetConfig,
    forward_h,
    gradient,
    init_network,
    loss,
    soft_weights,
    train,
)
from .timing import CostSpec, DecisionReport, aggregate_mode, decide, expected_cost, hard_stop

__version__ = "0.1.0"
