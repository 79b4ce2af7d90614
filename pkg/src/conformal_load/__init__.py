"""Edge-weight prediction on fixed road networks with conformal intervals.

Graph autoencoders (plain, directed, and line-graph) predict traffic volumes
per directed road segment; split-conformal calibration wraps every point
prediction in an interval with finite-sample marginal coverage. Quantile and
error-reweighted variants adapt interval widths to heteroscedastic data.
"""

__version__ = "0.1.0"

from .conformal import (CalibrationResult, ConformityScores, Interval, Method,
                        conformal_quantile, cp_erc_intervals, cp_erc_scores,
                        cp_intervals, cp_scores, cqr_erc_intervals,
                        cqr_erc_scores, cqr_intervals, cqr_scores)
from .experiment import ExperimentConfig, run_experiment
from .graphs import (EdgeSplit, FillMode, Graph, MaskedWeightedAdjacency,
                     WeightScaler, build_adjacency, fill_weights, line_graph,
                     resplit_calib_test, split_edges)
from .metrics import coverage, inefficiency, worst_slice_coverage
from .models import (DiGAEModel, GAEModel, LGNNModel, LayerKind, Propagation,
                     decode_adjacency_prob, decode_weights, mc_dropout_predict,
                     train)
from .tntp import assemble_graph, load_dataset, parse_flow, parse_net, parse_nodes

__all__ = [
    "CalibrationResult", "ConformityScores", "Interval", "Method",
    "conformal_quantile", "cp_scores", "cp_intervals", "cqr_scores",
    "cqr_intervals", "cp_erc_scores", "cp_erc_intervals", "cqr_erc_scores",
    "cqr_erc_intervals",
    "ExperimentConfig", "run_experiment",
    "EdgeSplit", "FillMode", "Graph", "MaskedWeightedAdjacency", "WeightScaler",
    "build_adjacency", "fill_weights", "line_graph", "resplit_calib_test",
    "split_edges",
    "coverage", "inefficiency", "worst_slice_coverage",
    "GAEModel", "DiGAEModel", "LGNNModel", "LayerKind", "Propagation",
    "decode_weights", "decode_adjacency_prob", "mc_dropout_predict", "train",
    "parse_net", "parse_flow", "parse_nodes", "assemble_graph", "load_dataset",
]
