"""Decentralized variance-reduced gradient descent ascent for finite-sum minimax problems."""

from .dataio import Dataset, Partition, parse_libsvm, partition, split, synthetic_imbalanced
from .estimators import Schedule, make_estimator
from .metrics import IterationRecord, consensus_error, test_auc
from .optimizer import HyperParams, PotentialWeights, RunResult, potential, run, stationarity, theorem_defaults
from .problems import AUCProblem, MinimaxProblem, ProblemConstants, QuadraticSaddle, quadratic_saddle_solution
from .topology import Graph, MixingMatrix, build_graph, metropolis_weights, spectral_gap, validate

__version__ = "0.1.0"
