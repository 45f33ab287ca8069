"""Detectors (random forest, kNN) and their evaluation."""
from .metrics import (CVResult, classification_report, confusion_counts, confusion_matrix,
                      cross_validate, f1, precision_recall_f1, stratified_folds, write_metrics_csv)
from .models import (ForestParams, Knn, KnnParams, Model, Normalizer, RandomForest, load_model,
                     model_from_dict, save_model, train, train_forest, train_knn)
from .tree import Tree, best_split, fit_tree

__all__ = [n for n in dir() if not n.startswith("_")]
