"""Least-squares estimation of the transition density of bifurcating Markov chains."""
from .basis import GaussianBasis, select_centers
from .estimator import DensityFit, UnsupportedSlice, fit
from .kernels import NbarModel, TwoPointModel, simulate_tree
from .selection import CvGrid, CvReport, cross_validate
from .tree import ConfigurationError, NodeId, TreeSample, Triangle, triangles_of_generation

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "CvGrid", "CvReport", "DensityFit", "GaussianBasis", "NbarModel",
    "NodeId", "TreeSample", "Triangle", "TwoPointModel", "UnsupportedSlice",
    "cross_validate", "fit", "select_centers", "simulate_tree", "triangles_of_generation",
]
