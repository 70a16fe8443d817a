"""FID, Independent Wasserstein critic, classifier accuracy and metric logs."""

from .cache import load_embeddings, save_embeddings
from .critic import critic_spec_for, independent_wasserstein, iw, train_iw_critic
from .embedding import EmbeddingNet, classifier_accuracy, fit_embedding, train_classifier
from .evaluate import (EvalConfig, classifier_accuracy_eval, evaluate_class_fid, evaluate_fid, evaluate_iw,
                       fid_hook, iterations_to_reach)
from .fid import GaussianStats, fid, fid_from_samples, fid_per_class, gaussian_stats, merge_stats, sqrtm_psd
from .report import METRICS, MetricReport, MetricsLog, read_metrics, trajectory

__all__ = [
    "GaussianStats", "gaussian_stats", "merge_stats", "sqrtm_psd", "fid", "fid_from_samples", "fid_per_class",
    "EmbeddingNet", "fit_embedding", "train_classifier", "classifier_accuracy",
    "train_iw_critic", "iw", "independent_wasserstein", "critic_spec_for",
    "EvalConfig", "evaluate_fid", "evaluate_class_fid", "evaluate_iw", "fid_hook", "iterations_to_reach",
    "classifier_accuracy_eval",
    "MetricReport", "MetricsLog", "read_metrics", "trajectory", "METRICS",
    "save_embeddings", "load_embeddings",
]
