"""Turning observed binary labels into activations for partial-observation inference.

An observed layer stops sending its own inferred activations to its
neighbours; the activations derived from the known labels are sent instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

PAPER_FORMULA = "paper_formula"
TRUE_LOGIT = "true_logit"


@dataclass(frozen=True)
class ObservationConfig:
    """``paper_formula`` computes ``log(1 / (1 - g))``, which maps a negative
    label to roughly ``+epsilon`` rather than a large negative score;
    ``true_logit`` is the proper inverse sigmoid ``log(g / (1 - g))``."""

    epsilon: float = 0.001
    mode: str = PAPER_FORMULA

    def __post_init__(self):
        if not 0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 0.5)")
        if self.mode not in (PAPER_FORMULA, TRUE_LOGIT):
            raise ValueError(f"unknown observation mode {self.mode!r}")


@dataclass
class ObservationSet:
    """Fully observed layers: layer index -> binary targets.

    Values are ``(n_t,)`` vectors for one sample or ``(N, n_t)`` for a batch.
    """

    layers: dict[int, np.ndarray] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.layers)

    def __contains__(self, t: int) -> bool:
        return t in self.layers

    @classmethod
    def from_labels(cls, graph, layer: str, positives) -> "ObservationSet":
        """Observe ``layer`` with the named labels positive and all others negative."""
        t = graph.layer_index(layer)
        labels = graph.layers[t].labels
        y = np.zeros(len(labels))
        for name in positives:
            if name not in labels:
                raise ValueError(f"unknown label {layer}.{name}")
            y[labels.index(name)] = 1.0
        return cls({t: y})


def perturbed_target(y, epsilon: float) -> float:
    if y == 0:
        return y + epsilon
    if y == 1:
        return y - epsilon
    raise ValueError(f"observed label must be 0 or 1, got {y!r}")


def observed_activation(y, cfg: ObservationConfig = ObservationConfig()) -> float:
    g = perturbed_target(y, cfg.epsilon)
    if cfg.mode == PAPER_FORMULA:
        return math.log(1.0 / (1.0 - g))
    return math.log(g / (1.0 - g))


def observed_activations(y: np.ndarray, cfg: ObservationConfig = ObservationConfig()) -> np.ndarray:
    """Elementwise :func:`observed_activation` over a binary array."""
    y = np.asarray(y, dtype=np.float64)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("observed labels must be 0 or 1")
    lo, hi = observed_activation(0, cfg), observed_activation(1, cfg)
    return np.where(y == 1, hi, lo)


def inject(
    obs: ObservationSet | Mapping[int, np.ndarray] | None,
    sizes: tuple[int, ...],
    cfg: ObservationConfig = ObservationConfig(),
) -> dict[int, np.ndarray]:
    """Replacement activations keyed by layer, ready for the forward pass.

    The forward pass uses each entry as the layer's outgoing top-down and
    bottom-up message and as the layer's own final activation.
    """
    if not obs:
        return {}
    layers = obs.layers if isinstance(obs, ObservationSet) else dict(obs)
    out = {}
    for t, y in layers.items():
        if not 0 <= t < len(sizes):
            raise ValueError(f"observation for nonexistent layer {t}")
        y = np.asarray(y, dtype=np.float64)
        if y.shape[-1] != sizes[t]:
            raise ValueError(f"observation for layer {t} has {y.shape[-1]} labels, expected {sizes[t]}")
        out[t] = observed_activations(y, cfg)
    return out
