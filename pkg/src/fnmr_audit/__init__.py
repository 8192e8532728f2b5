"""Statistical auditing of false non-match rates across demographic groups."""

__version__ = "0.1.0"

from .data import (
    DataError,
    DecisionRecord,
    GroupDataset,
    StudyDataset,
    ingest_csv,
    ingest_json,
    load_study,
    write_csv,
    write_json,
)
from .estimators import (
    GroupEstimates,
    compute_m0,
    estimate_fnmr,
    estimate_group,
    estimate_rho,
    variance_fnmr,
)
from .ftest import (
    BootstrapConfig,
    FTestResult,
    UndefinedStatisticError,
    bootstrap_f_test,
    f_statistic,
    pooled_fnmr,
)
from .moe import MoeResult, margin_of_error
from .simulation import SimCellResult, SimConfig, generate_group, run_cell, run_grid

__all__ = [
    "BootstrapConfig",
    "DataError",
    "DecisionRecord",
    "FTestResult",
    "GroupDataset",
    "GroupEstimates",
    "MoeResult",
    "SimCellResult",
    "SimConfig",
    "StudyDataset",
    "UndefinedStatisticError",
    "bootstrap_f_test",
    "compute_m0",
    "estimate_fnmr",
    "estimate_group",
    "estimate_rho",
    "f_statistic",
    "generate_group",
    "ingest_csv",
    "ingest_json",
    "load_study",
    "margin_of_error",
    "pooled_fnmr",
    "run_cell",
    "run_grid",
    "variance_fnmr",
    "write_csv",
    "write_json",
]
