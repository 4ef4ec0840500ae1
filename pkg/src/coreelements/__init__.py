"""Element-wise subset selection ("core-elements") for large-scale least squares."""

from .baselines import RowSample, blev, iboss, prereduce, slev, unif
from .bench import MethodSpec, RunReport, emit_report, eps_curve, ingest_csv, mse, pmse, run_dataset, run_experiment
from .datagen import ExperimentConfig, GeneratedDataset, generate_dataset
from .errors import *  # noqa: F401,F403
from .estimators import CoefficientVector, core_estimate, leverage_scores, ols_full, row_subsample_ols
from .matrix import DesignMatrix, SparseColumnMatrix, condition_number, gram_solve, spectral_norm
from .mom import BlockPartition, mom_core_estimate, mom_ols_estimate, partition
from .selection import SelectionMask, select_core_elements
from .theory import bound_report, recommend_r_normal, recommend_r_uniform

__version__ = "0.1.0"
