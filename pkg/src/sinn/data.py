"""Datasets of feature vectors with layered binary targets.

Dataset files are JSON lines.  The first record is a header, every later
record one sample::

    {"format": "sinn-data-1", "graph": "<sha256 of canonical graph>", "d": 2, "exclusive": ["scene"]}
    {"id": "s0", "feature": [0.1, -0.3], "labels": {"scene": ["indoor"], "place": ["office"]}}

Every layer of the graph must appear under ``labels``; listed labels are
positive, all others negative.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import NEGATIVE, POSITIVE, LabelGraph

FORMAT = "sinn-data-1"


class DataError(ValueError):
    def __init__(self, message: str, record: int | None = None):
        self.record = record
        if record is not None:
            message = f"record {record}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Sample:
    id: str
    feature: np.ndarray
    targets: tuple[np.ndarray, ...]


@dataclass
class Dataset:
    graph: LabelGraph
    dim: int
    samples: list[Sample]
    exclusive: frozenset[int] = frozenset()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate sample id")
        for s in self.samples:
            _check_sample(s, self.graph, self.dim, self.exclusive)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def features(self) -> np.ndarray:
        if "F" not in self._cache:
            self._cache["F"] = np.array([s.feature for s in self.samples]).reshape(len(self), self.dim)
        return self._cache["F"]

    @property
    def targets(self) -> list[np.ndarray]:
        if "Y" not in self._cache:
            self._cache["Y"] = [
                np.array([s.targets[t] for s in self.samples]).reshape(len(self), n)
                for t, n in enumerate(self.graph.sizes)
            ]
        return self._cache["Y"]

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def subset(self, indices) -> "Dataset":
        return Dataset(self.graph, self.dim, [self.samples[i] for i in indices], self.exclusive)

    def stratify_layer(self) -> int | None:
        """Finest exclusive layer, used to stratify splits."""
        return max(self.exclusive) if self.exclusive else None


def _check_sample(s: Sample, graph: LabelGraph, dim: int, exclusive, record=None) -> None:
    if np.shape(s.feature) != (dim,):
        raise DataError(f"sample {s.id!r}: feature has shape {np.shape(s.feature)}, expected ({dim},)", record)
    if not np.all(np.isfinite(s.feature)):
        raise DataError(f"sample {s.id!r}: non-finite feature", record)
    if len(s.targets) != graph.depth:
        raise DataError(f"sample {s.id!r}: {len(s.targets)} target layers for {graph.depth}", record)
    for t, (y, layer) in enumerate(zip(s.targets, graph.layers)):
        if np.shape(y) != (layer.size,):
            raise DataError(f"sample {s.id!r}: layer {layer.name!r} targets have wrong size", record)
        if t in exclusive and np.sum(y) != 1:
            raise DataError(f"sample {s.id!r}: exclusive layer {layer.name!r} needs exactly one positive", record)


def sample_record(s: Sample, graph: LabelGraph) -> dict:
    return {
        "id": s.id,
        "feature": [float(v) for v in s.feature],
        "labels": {
            layer.name: [lab for lab, y in zip(layer.labels, s.targets[t]) if y]
            for t, layer in enumerate(graph.layers)
        },
    }


def parse_sample(rec: dict, graph: LabelGraph, dim: int, record: int | None = None) -> Sample:
    """Build a :class:`Sample` from one decoded JSON record."""
    if not isinstance(rec, dict) or not {"id", "feature", "labels"} <= rec.keys():
        raise DataError("sample needs id, feature and labels", record)
    try:
        feature = np.array(rec["feature"], dtype=np.float64)
    except (TypeError, ValueError):
        raise DataError("feature must be an array of numbers", record) from None
    if feature.shape != (dim,):
        raise DataError(f"dimension mismatch: feature has {feature.size} values, expected {dim}", record)
    labels = rec["labels"]
    if not isinstance(labels, dict):
        raise DataError("labels must be an object keyed by layer name", record)
    unknown_layers = set(labels) - {layer.name for layer in graph.layers}
    if unknown_layers:
        raise DataError(f"unknown layer {sorted(unknown_layers)[0]!r}", record)
    targets = []
    for layer in graph.layers:
        if layer.name not in labels:
            raise DataError(f"sample {rec['id']!r} is missing targets for layer {layer.name!r}", record)
        y = np.zeros(layer.size)
        for lab in labels[layer.name]:
            if lab not in layer.labels:
                raise DataError(f"unknown label {layer.name}.{lab}", record)
            y[layer.labels.index(lab)] = 1.0
        targets.append(y)
    return Sample(str(rec["id"]), feature, tuple(targets))


def dumps_dataset(ds: Dataset) -> str:
    header = {
        "format": FORMAT,
        "graph": ds.graph.digest(),
        "d": ds.dim,
        "exclusive": [ds.graph.layers[t].name for t in sorted(ds.exclusive)],
    }
    lines = [json.dumps(header)] + [json.dumps(sample_record(s, ds.graph)) for s in ds.samples]
    return "\n".join(lines) + "\n"


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(dumps_dataset(ds), encoding="utf-8")


def loads_dataset(text: str, graph: LabelGraph) -> Dataset:
    lines = [(i, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if not lines:
        raise DataError("empty dataset file")
    records = []
    for i, ln in lines:
        try:
            records.append((i, json.loads(ln)))
        except json.JSONDecodeError as e:
            raise DataError(f"parse error: {e.msg}", i) from None
    _, header = records[0]
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise DataError(f"missing {FORMAT!r} header", 0)
    if header.get("graph") != graph.digest():
        raise DataError("dataset was written for a different graph", 0)
    dim = header.get("d")
    if not isinstance(dim, int) or dim < 1:
        raise DataError("header field d must be a positive integer", 0)
    exclusive = set()
    for name in header.get("exclusive", []):
        try:
            exclusive.add(graph.layer_index(name))
        except KeyError:
            raise DataError(f"unknown exclusive layer {name!r}", 0) from None
    samples, seen = [], set()
    for i, rec in records[1:]:
        s = parse_sample(rec, graph, dim, i)
        if s.id in seen:
            raise DataError(f"duplicate id {s.id!r}", i)
        seen.add(s.id)
        _check_sample(s, graph, dim, exclusive, i)
        samples.append(s)
    return Dataset(graph, dim, samples, frozenset(exclusive))


def load_dataset(path, graph: LabelGraph) -> Dataset:
    return loads_dataset(Path(path).read_text(encoding="utf-8"), graph)


def split(ds: Dataset, train_fraction: float = 0.6, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded train/test partition, stratified by the finest exclusive layer.

    Each stratum of size ``m`` sends ``round(fraction * m)`` samples to train,
    kept within ``[1, m - 1]`` when ``m >= 2`` so both sides see the class.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    layer = ds.stratify_layer()
    if layer is None:
        strata = [np.arange(len(ds))]
    else:
        cls = np.argmax(ds.targets[layer], axis=1)
        strata = [np.flatnonzero(cls == c) for c in np.unique(cls)]
    train, test = [], []
    for idx in strata:
        idx = rng.permutation(idx)
        m = len(idx)
        k = math.floor(train_fraction * m + 0.5)
        if layer is not None and m >= 2:
            k = min(max(k, 1), m - 1)
        train += idx[:k].tolist()
        test += idx[k:].tolist()
    if not train or not test:
        raise ValueError(f"train_fraction {train_fraction} leaves one side empty")
    return ds.subset(sorted(train)), ds.subset(sorted(test))


@dataclass(frozen=True)
class SynthSpec:
    """Knobs for :func:`generate_synthetic`.

    ``class_layer`` is the layer whose labels define the sample classes
    (default: the bottom layer).  ``exclusive`` names single-label layers;
    ``None`` infers them as the class layer plus every layer in which each
    class reaches exactly one positive label.  ``shared`` in ``[0, 1)`` mixes
    each prototype with the prototypes of its positive ancestors, so classes
    under the same parent look alike.
    """

    graph: LabelGraph
    per_class: int = 40
    dim: int = 32
    noise_sigma: float = 0.5
    flip_prob: float = 0.0
    seed: int = 0
    class_layer: str | None = None
    exclusive: tuple[str, ...] | None = None
    shared: float = 0.0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0 <= self.flip_prob < 0.5:
            raise ValueError("flip_prob must lie in [0, 0.5)")
        if self.per_class < 1 or self.dim < 1:
            raise ValueError("per_class and dim must be >= 1")
        if not 0 <= self.shared < 1:
            raise ValueError("shared must lie in [0, 1)")


class GenerationError(ValueError):
    pass


def class_targets(graph: LabelGraph, class_layer: int, k: int) -> list[np.ndarray]:
    """Layered targets implied by class ``k`` of ``class_layer``.

    Positivity spreads layer by layer away from the class layer along
    positive edges; a label also reached by a negative edge stays negative.
    """
    sizes = graph.sizes
    ys = [np.zeros(n) for n in sizes]
    ys[class_layer][k] = 1.0
    for order in (range(class_layer - 1, -1, -1), range(class_layer + 1, len(sizes))):
        for t in order:
            src = t + 1 if t < class_layer else t - 1
            for j in range(sizes[t]):
                node = (t, j)
                pos = any(n[0] == src and ys[src][n[1]] for n in graph.neighbours(node, POSITIVE))
                neg = any(n[0] == src and ys[src][n[1]] for n in graph.neighbours(node, NEGATIVE))
                ys[t][j] = float(pos and not neg)
    for t in range(len(sizes)):
        on = np.flatnonzero(ys[t])
        for j in on:
            for n in graph.neighbours((t, j), NEGATIVE):
                if n[0] == t and ys[t][n[1]]:
                    raise GenerationError(
                        f"class {graph.endpoint_name((class_layer, k))} makes negatively related "
                        f"labels {graph.endpoint_name((t, j))} and {graph.endpoint_name(n)} both positive"
                    )
    return ys


def generate_synthetic(spec: SynthSpec) -> Dataset:
    g = spec.graph
    c_layer = g.depth - 1 if spec.class_layer is None else g.layer_index(spec.class_layer)
    n_cls = g.sizes[c_layer]
    per_class = [class_targets(g, c_layer, k) for k in range(n_cls)]

    if spec.exclusive is None:
        exclusive = {c_layer} | {
            t for t in range(g.depth) if all(np.sum(ys[t]) == 1 for ys in per_class)
        }
    else:
        exclusive = {g.layer_index(name) for name in spec.exclusive} | {c_layer}
        for k, ys in enumerate(per_class):
            for t in exclusive:
                if np.sum(ys[t]) != 1:
                    raise GenerationError(
                        f"class {g.endpoint_name((c_layer, k))} has {int(np.sum(ys[t]))} positive "
                        f"labels in exclusive layer {g.layers[t].name!r}; need exactly one positive path"
                    )

    rng = np.random.default_rng(spec.seed)

    def unit(v):
        return v / np.linalg.norm(v)

    # one independent direction per label of every layer, drawn up front
    directions = [unit_rows(rng.normal(size=(n, spec.dim))) for n in g.sizes]
    prototypes = []
    for k, ys in enumerate(per_class):
        own = directions[c_layer][k]
        if spec.shared > 0:
            others = [directions[t][j] for t in range(g.depth) if t != c_layer for j in np.flatnonzero(ys[t])]
            mix = unit(np.sum(others, axis=0)) if others else np.zeros(spec.dim)
            own = unit((1 - spec.shared) * own + spec.shared * mix)
        prototypes.append(own)

    samples = []
    width = len(str(spec.per_class - 1))
    labels = g.layers[c_layer].labels
    for k, ys in enumerate(per_class):
        for i in range(spec.per_class):
            feature = prototypes[k] + spec.noise_sigma * rng.normal(size=spec.dim)
            targets = []
            for t, y in enumerate(ys):
                y = y.copy()
                if t not in exclusive and spec.flip_prob > 0:
                    flip = rng.random(y.shape) < spec.flip_prob
                    y[flip] = 1.0 - y[flip]
                targets.append(y)
            samples.append(Sample(f"{labels[k]}_{i:0{width}d}", feature, tuple(targets)))
    return Dataset(g, spec.dim, samples, frozenset(exclusive))


def unit_rows(M: np.ndarray) -> np.ndarray:
    return M / np.linalg.norm(M, axis=1, keepdims=True)
