from .quadratic import QuadraticCboSpec, QuadraticOracles, make_quadratic_cbo
from .datasets import SyntheticDataset, make_gaussian_blobs, save_dataset, load_dataset, split_dataset
from .classifiers import SoftmaxRegression, ReluMlp, make_classifier, save_model, load_model
from .adversarial import (
    build_adversarial_problem,
    pgd_attack,
    evaluate_robustness,
    train_reweighted,
    train_uniform_at,
)

__all__ = [
    "QuadraticCboSpec", "QuadraticOracles", "make_quadratic_cbo",
    "SyntheticDataset", "make_gaussian_blobs", "save_dataset", "load_dataset", "split_dataset",
    "SoftmaxRegression", "ReluMlp", "make_classifier", "save_model", "load_model",
    "build_adversarial_problem", "pgd_attack", "evaluate_robustness",
    "train_reweighted", "train_uniform_at",
]
