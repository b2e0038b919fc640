"""Seeded repeated-split comparisons between model variants."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, split
from .graph import compile_masks
from .metrics import EvalResult, evaluate_scores
from .model import ModelParams, init_params, predict
from .observation import ObservationConfig, ObservationSet
from .training import TrainConfig, fit


def train_model(train: Dataset, variant: str, cfg: TrainConfig, init_seed: int | None = None) -> ModelParams:
    masks = compile_masks(train.graph)
    p = init_params(train.graph, masks, train.dim, variant, cfg.seed if init_seed is None else init_seed)
    fit(train, p, masks, cfg)
    return p


def evaluate_model(p: ModelParams, ds: Dataset, n: int = 3, observe: tuple[int, ...] = (),
                   obs_cfg: ObservationConfig = ObservationConfig()) -> EvalResult:
    """Metric suite on ``ds``; layers in ``observe`` are fed their true targets."""
    masks = compile_masks(ds.graph)
    obs = ObservationSet({t: ds.targets[t] for t in observe}) if observe else None
    probs = predict(p, masks, ds.features, obs, obs_cfg)
    names = [layer.name for layer in ds.graph.layers]
    return evaluate_scores(probs, ds.targets, n=n, exclusive=set(ds.exclusive), names=names)


@dataclass
class SplitRuns:
    """Per-split results for one variant; ``summary`` gives mean and std."""

    variant: str
    results: list[EvalResult] = field(default_factory=list)

    def values(self, key: str, layer: str | None = None) -> np.ndarray:
        out = []
        for r in self.results:
            r = r.layers[layer] if layer is not None else r
            if key.startswith("mc_acc."):
                out.append(r.mc_acc[key.split(".", 1)[1]])
            else:
                out.append(getattr(r, key))
        return np.array(out)

    def summary(self, key: str, layer: str | None = None) -> tuple[float, float]:
        v = self.values(key, layer)
        return float(np.mean(v)), float(np.std(v))


def repeated_splits(ds: Dataset, variant: str, cfg: TrainConfig, splits: int = 5,
                    train_fraction: float = 0.6, n: int = 3, observe: tuple[int, ...] = (),
                    obs_cfg: ObservationConfig = ObservationConfig(),
                    seeds: list[int] | None = None) -> SplitRuns:
    """Train a fresh model per seeded split and evaluate it on the held-out side."""
    seeds = list(range(splits)) if seeds is None else seeds
    runs = SplitRuns(variant)
    for s in seeds:
        train, test = split(ds, train_fraction, seed=s)
        p = train_model(train, variant, TrainConfig(**{**cfg.to_dict(), "seed": cfg.seed + s}))
        runs.results.append(evaluate_model(p, test, n, observe, obs_cfg))
    return runs


# Desk-scale benchmark used by the acceptance suite and the demos: a
# (3, 8, 20) tree, low-dimensional features whose class prototypes share
# half their direction with the parent prototype, and a short fast schedule.
BENCH_SIZES = (3, 8, 20)
BENCH_DIM = 8
BENCH_NOISE = 0.3
BENCH_SHARED = 0.5
BENCH_PER_CLASS = 40


def benchmark_dataset(seed: int = 0) -> Dataset:
    from .data import SynthSpec, generate_synthetic
    from .graph import hierarchy_graph

    g = hierarchy_graph(BENCH_SIZES, seed=seed)
    return generate_synthetic(SynthSpec(g, BENCH_PER_CLASS, BENCH_DIM, BENCH_NOISE, seed=seed,
                                        shared=BENCH_SHARED))


def benchmark_config(observe_layers: tuple[int, ...] = (), observe_prob: float = 0.0,
                     observe_mode: str = "paper_formula") -> TrainConfig:
    return TrainConfig(learning_rate=0.1, epochs=40, clip_threshold=5.0,
                       observe_layers=observe_layers, observe_prob=observe_prob, observe_mode=observe_mode)
