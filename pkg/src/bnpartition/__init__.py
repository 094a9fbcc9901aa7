"""Batch-conditional switching geometry and exact local region counts for CPA networks."""
from .batchnorm import BatchNormSlot, BatchStats, FrozenBatch, batch_stats, freeze_batch
from .cpa import (EVAL, NOBN, AffineMap, BreakpointHit, CpaActivation, HiddenBlock, LinearLayer, Network,
                  activation_pattern, effective_layers, forward, hard_tanh, leaky_relu, region_affine_map,
                  relu)
from .hyperplanes import Hyperplane, Window, window_cut

__version__ = "0.1.0"
FORMAT_VERSION = "1"

__all__ = ["BatchNormSlot", "BatchStats", "FrozenBatch", "batch_stats", "freeze_batch",
           "EVAL", "NOBN", "AffineMap", "BreakpointHit", "CpaActivation", "HiddenBlock", "LinearLayer", "Network",
           "activation_pattern", "effective_layers", "forward", "hard_tanh", "leaky_relu", "region_affine_map",
           "relu", "Hyperplane", "Window", "window_cut", "__version__", "FORMAT_VERSION"]
