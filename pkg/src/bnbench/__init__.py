"""Benchmark toolkit for Bayesian-network structure learning under synthetic data noise."""

from bnbench.bn_model import DiscreteBayesNet, dimension_report, free_parameters, load_network, parse_network
from bnbench.graphs import MixedGraph, dag_to_cpdag, dag_to_mag
from bnbench.sampling import Dataset, sample

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DiscreteBayesNet", "MixedGraph", "dag_to_cpdag", "dag_to_mag", "dimension_report",
    "free_parameters", "load_network", "parse_network", "sample",
]
