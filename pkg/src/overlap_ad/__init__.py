"""Weakly-supervised anomaly detection by score-distribution overlap."""
from .autonn import ScorerNetwork, backward, forward, init_network, param_change_norm, sgd_step
from .kde import DegenerateBatchError, DensityEstimate, make_grid, pdf_at
from .metrics import auc_pr, auc_roc, wilcoxon_signed_rank
from .overlap import OverlapLossConfig, ScoreBatch, find_intersections, gaussian_intersection, overlap_loss

__version__ = "0.1.0"
