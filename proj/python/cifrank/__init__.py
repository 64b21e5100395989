"""Counterfactually fair ranking over structural causal models."""

import json as _json

from . import _core
from ._core import (
    CifrankError,
    ConfigError,
    DataError,
    NumericalError,
    generate,
    listwise_gradient,
    listwise_loss,
    preset_names,
    rank,
)

__all__ = [
    "CifrankError",
    "ConfigError",
    "DataError",
    "NumericalError",
    "counterfactual",
    "evaluate",
    "fit",
    "generate",
    "listwise_gradient",
    "listwise_loss",
    "moving_company_model",
    "preset_names",
    "quota_ranking",
    "rank",
    "run_experiment",
    "run_ltr",
]


def _spec_text(spec):
    if spec is None or isinstance(spec, str):
        return spec
    return _json.dumps(spec)


def moving_company_model(resolving_x=False):
    """Model spec for the moving company graph, as a dict."""
    return _json.loads(_core.moving_company_model(resolving_x))


def fit(columns, spec=None):
    """Fitted structural equations, as a dict."""
    return _json.loads(_core.fit(columns, _spec_text(spec)))


def counterfactual(columns, spec=None, baseline=None):
    """Fits the model and maps every record to the baseline group."""
    return _core.counterfactual(columns, _spec_text(spec), baseline)


def quota_ranking(columns, score, attribute, k, descending=True, seed=0, spec=None):
    """Top-k ranking with proportional quotas on `attribute`."""
    return _core.quota_ranking(columns, score, attribute, k, descending, seed, _spec_text(spec))


def evaluate(columns, ranking, k_values, score=None, original=None, truth=None, spec=None):
    """Metric report for `ranking` (row indices in rank order), as a dict."""
    return _json.loads(
        _core.evaluate(columns, ranking, k_values, score, original, truth, _spec_text(spec))
    )


def run_experiment(config, base_dir=""):
    """Runs the full pipeline from an experiment config dict."""
    _core.run_experiment(_json.dumps(config), base_dir)


def run_ltr(config, base_dir=""):
    """Runs the learning-to-rank pipelines from an experiment config dict."""
    _core.run_ltr(_json.dumps(config), base_dir)
