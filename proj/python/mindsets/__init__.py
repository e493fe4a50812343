"""Dementia subtyping pipeline: radiomics, feature selection, evaluation."""

import json

import numpy as np

from . import _mindsets
from ._mindsets import MindsetsError, correlation, extract_features, group_kfold, roc_auc

__all__ = [
    "MindsetsError",
    "correlation",
    "extract_features",
    "feature_catalog",
    "generate_cohort",
    "group_kfold",
    "metrics",
    "mutual_information",
    "null_spec",
    "roc_auc",
    "run_experiment",
    "strong_spec",
    "sulov_select",
]


def _dump(obj):
    if obj is None:
        return ""
    return obj if isinstance(obj, str) else json.dumps(obj)


def feature_catalog(config=None):
    return _mindsets.feature_catalog(_dump(config))


def metrics(predicted, truth, scores):
    scores = np.asarray(scores, dtype=float)
    return json.loads(_mindsets.metrics(predicted, truth, scores))


def mutual_information(x, y, bins=10, categorical=False):
    value, degenerate = _mindsets.mutual_information(x, y, bins, categorical)
    return {"value": value, "degenerate": degenerate}


def sulov_select(x, labels, names, corr_threshold=0.7, mi_bins=10):
    return json.loads(_mindsets.sulov_select(x, labels, list(names), corr_threshold, mi_bins))


def strong_spec():
    return json.loads(_mindsets.strong_spec())


def null_spec():
    return json.loads(_mindsets.null_spec())


def generate_cohort(spec, out_dir):
    return json.loads(_mindsets.generate_cohort(_dump(spec), str(out_dir)))


def run_experiment(data_dir, spec, options=None):
    return json.loads(_mindsets.run_experiment(str(data_dir), _dump(spec), _dump(options)))
