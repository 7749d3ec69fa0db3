"""Constructive memorization toolkit: exact weight synthesis for small networks."""

import json

from . import _core
from ._core import (
    ConstructionError,
    DatasetError,
    Fnn,
    GeneralPositionError,
    ResNet,
    UnsupportedArchitecture,
    activation,
    empirical_risk,
    gen_dataset,
    is_general_position,
    node_budget,
    piece_bound,
    piece_count,
    run_cli,
)

__all__ = [
    "ConstructionError",
    "DatasetError",
    "Fnn",
    "GeneralPositionError",
    "ResNet",
    "UnsupportedArchitecture",
    "activation",
    "construct_2layer_classifier",
    "construct_3layer",
    "construct_4layer_classifier",
    "construct_deep",
    "construct_resnet_classifier",
    "empirical_risk",
    "gen_dataset",
    "is_general_position",
    "node_budget",
    "piece_bound",
    "piece_count",
    "refute_fit",
    "run_cli",
]


def _with_report(result):
    net, report = result
    return net, json.loads(report)


def construct_3layer(X, Y, d1, d2, activation="hard_tanh", seed=0, output_gain=1.0):
    """Three-layer network fitting every (x_i, y_i); returns (net, report)."""
    return _with_report(_core.construct_3layer(X, Y, d1, d2, activation, seed, output_gain))


def construct_4layer_classifier(X, labels, num_classes, d1, d2, d3, activation="hard_tanh", seed=0):
    """Four-layer classifier with exact one-hot outputs; returns (net, report)."""
    return _with_report(
        _core.construct_4layer_classifier(X, list(labels), num_classes, d1, d2, d3, activation, seed)
    )


def construct_deep(X, Y, widths, blocks, activation="hard_tanh", seed=0):
    """Deep regression network built from stacked fitting blocks; returns (net, report)."""
    return _with_report(_core.construct_deep(X, Y, list(widths), list(blocks), activation, seed))


def construct_resnet_classifier(X, labels, num_classes, activation="hard_tanh", seed=0):
    """Residual classifier for inputs in general position; returns (net, report)."""
    return _with_report(_core.construct_resnet_classifier(X, list(labels), num_classes, activation, seed))


def construct_2layer_classifier(X, labels, num_classes, activation="hard_tanh", seed=0):
    """Two-layer classifier for inputs in general position; returns (net, report)."""
    return _with_report(_core.construct_2layer_classifier(X, list(labels), num_classes, activation, seed))


def refute_fit(net, n, u):
    """Piece-count verdict for fitting the alternating dataset x_i = i u."""
    return json.loads(_core.refute_fit(net, n, u))
