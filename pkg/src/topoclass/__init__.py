"""Topological image features (cubical persistence, Betti curves) and
from-scratch tree ensembles for four-class image classification."""

from .dataset import Dataset, SplitSpec, read_features, split, write_features
from .ensemble import (
    BoosterConfig,
    ForestConfig,
    TreeEnsembleModel,
    feature_importance,
    predict_proba,
    train_boosted,
    train_forest,
)
from .evaluation import classification_metrics, confusion_matrix, pca_project, roc_auc_ovr
from .filtration import CubicalFiltration, build_filtration
from .imaging import GrayImage, load_grayscale, read_manifest
from .persistence import PersistenceDiagram, betti_oracle, compute_pd0, compute_pd1
from .selection import SelectionReport, select_optimal, threshold_sweep
from .vectorize import betti_curve, bin_curve, extract_features

__version__ = "0.1.0"
