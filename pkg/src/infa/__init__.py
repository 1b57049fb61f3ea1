"""Shift- and scale-invariant latent patterns for time-series classification."""
__version__ = "0.1.0"

from .dataset import Dataset, load_ucr, make_synthetic_figure1
from .factorization import FactorModel, Hyperparams, fit
from .representation import FeatureMatrix, invariant_representation, transform_foldin
from .segmentation import SegmentTensor, segment_series
from .classify import svm_predict, svm_train

__all__ = [
    "Dataset", "FactorModel", "FeatureMatrix", "Hyperparams", "SegmentTensor",
    "fit", "invariant_representation", "load_ucr", "make_synthetic_figure1",
    "segment_series", "svm_predict", "svm_train", "transform_foldin",
]
