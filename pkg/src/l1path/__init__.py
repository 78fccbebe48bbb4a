"""Exact regularization paths for L1-type penalties on state space models."""
from .checks import CheckReport, check_path
from .gaussmp import GaussianMsg
from .parametric import ParamAffine, param_bffd, param_ffbdd
from .path import (
    InfeasibleSegmentError, PathError, RegPath, compute_path, eval_path, exit_sigma2,
    iter_path_bffd, iter_path_ffbdd, next_segment, path_bffd, path_ffbdd,
)
from .plcost import (
    Segment, SegmentedCost, make_custom, make_hinge1, make_hinge2, make_l1, make_vapnik,
)
from .solvers import bffd, ffbdd
from .ssm import (
    INPUT, OUTPUT, StateSpaceModel, lasso_model, make_model, median_smoother_model,
    output_model, trend_filter_model,
)

__version__ = "0.1.0"

__all__ = [
    "CheckReport", "GaussianMsg", "INPUT", "InfeasibleSegmentError", "OUTPUT", "ParamAffine",
    "PathError", "RegPath", "Segment", "SegmentedCost", "StateSpaceModel", "bffd",
    "check_path", "compute_path", "eval_path", "exit_sigma2", "ffbdd", "iter_path_bffd",
    "iter_path_ffbdd", "lasso_model", "make_custom", "make_hinge1", "make_hinge2", "make_l1",
    "make_model", "make_vapnik", "median_smoother_model", "next_segment", "output_model",
    "param_bffd", "param_ffbdd", "path_bffd", "path_ffbdd", "trend_filter_model",
]
