"""Change-point detection for high-dimensional linear regression.

The pipeline: segment-wise lasso fits along a trimmed grid of candidate
splits, node-wise-lasso precision estimates to de-bias them, a studentized
sup-statistic over a coordinate group, and multiplier bootstrap critical
values.  Binary segmentation extends the single test to multiple change
points, and the simlab module drives Monte Carlo studies.
"""

from .cpt_process import (CptEstimate, CptProcess, DebiasedPair, PrefixCache,
                          VarianceEstimate, argmax_cpt, build_process,
                          debiased_pair, dump_process_csv, h_surface,
                          make_prefix_cache, scan_response, signal_function,
                          weighted_variance)
from .data_model import (Dataset, SearchGrid, SegmentView, SubGroup,
                         build_grid, load_csv)
from .errors import ConfigError, DataError, NumericError, RegcptError
from .lasso import (DEFAULT_C_GRID, LassoFit, PenaltySchedule, cv_errors,
                    cv_select_C, fit_lasso, log_p_eff, soft_threshold)
from .precision import (PrecisionEstimate, fit_nodewise, load_precision,
                        omega_for_group, save_precision)
from .segmentation import (SegmentationResult, TraceEntry, default_min_len,
                           refine_boundaries, segment)
from .simlab import (ExperimentReport, ExperimentSpec, SimDesign, SimTruth,
                     adjusted_rand, gen_dataset, jump_vector,
                     labels_from_cpts, load_spec_toml, run_experiment,
                     run_multicpt_experiment, run_power_experiment,
                     run_size_experiment, table1_cell, table2_cell,
                     table4_case2)
from .testing import (DetectionResult, TestConfig, bootstrap_one,
                      bootstrap_two, critical_value, detect, t_statistic)

__version__ = "0.1.0"

__all__ = [
    "CptEstimate", "CptProcess", "DebiasedPair", "PrefixCache",
    "VarianceEstimate", "argmax_cpt", "build_process", "debiased_pair",
    "dump_process_csv", "h_surface", "make_prefix_cache", "scan_response",
    "signal_function", "weighted_variance",
    "Dataset", "SearchGrid", "SegmentView", "SubGroup", "build_grid",
    "load_csv",
    "ConfigError", "DataError", "NumericError", "RegcptError",
    "DEFAULT_C_GRID", "LassoFit", "PenaltySchedule", "cv_errors",
    "cv_select_C", "fit_lasso", "log_p_eff", "soft_threshold",
    "PrecisionEstimate", "fit_nodewise", "load_precision", "omega_for_group",
    "save_precision",
    "SegmentationResult", "TraceEntry", "default_min_len",
    "refine_boundaries", "segment",
    "ExperimentReport", "ExperimentSpec", "SimDesign", "SimTruth",
    "adjusted_rand", "gen_dataset", "jump_vector", "labels_from_cpts",
    "load_spec_toml", "run_experiment", "run_multicpt_experiment",
    "run_power_experiment", "run_size_experiment", "table1_cell",
    "table2_cell", "table4_case2",
    "DetectionResult", "TestConfig", "bootstrap_one", "bootstrap_two",
    "critical_value", "detect", "t_statistic",
    "__version__",
]
