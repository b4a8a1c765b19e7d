"""Deep blind compressed sensing.

Learns multi-level dictionaries ``D_1 ... D_M`` and sparse codes ``Z``
directly from compressive measurements ``Y = A X``.
"""

__version__ = "0.1.0"

from .core import Rng, gaussian_matrix, mat_read, mat_write, normalize_columns
from .evaluation import (LabeledDataset, accuracy, knn_predict, macro_accuracy, nmse,
                         sens_spec, split)
from .exceptions import DbcsError
from .model import (DbcsModel, TrainOptions, bcs_fit, dbcs_fit, dl_fit, encode, objective,
                    reconstruct)
from .operators import MeasurementOperator, build_operator
from .solvers import LinearMap, SolverOptions, ista, sandwich_lsq, soft_threshold
from .synthetic import SyntheticSpec, labeled_mixture, planted_factorization, synth
from .estimators import (BlindCompressedSensing, CompressiveSampler,
                         DeepBlindCompressedSensing, NearestNeighbourClassifier,
                         SparseDictionaryLearning, SparseRecovery)

__all__ = [
    "BlindCompressedSensing", "CompressiveSampler", "DbcsError", "DbcsModel",
    "DeepBlindCompressedSensing", "LabeledDataset", "LinearMap", "MeasurementOperator",
    "NearestNeighbourClassifier", "Rng", "SolverOptions", "SparseDictionaryLearning",
    "SparseRecovery", "SyntheticSpec", "TrainOptions", "accuracy", "bcs_fit", "build_operator", "dbcs_fit",
    "dl_fit", "encode", "gaussian_matrix", "ista", "knn_predict", "labeled_mixture", "macro_accuracy",
    "mat_read", "mat_write", "nmse", "normalize_columns", "objective", "planted_factorization", "reconstruct",
    "sandwich_lsq", "sens_spec", "soft_threshold", "split", "synth",
]
