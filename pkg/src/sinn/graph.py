"""Layered label-relation graphs and their compiled connectivity masks.

A graph file is line oriented UTF-8 text::

    # comment
    layer scene: indoor, outdoor
    layer place: office, beach, forest
    pos scene.indoor place.office
    neg scene.indoor place.beach
    option no_self_gate

Layers are declared top-down (coarsest first).  Edges join labels in the
same layer or in adjacent layers and carry a sign.  An edge is an undirected
relation: it gates the corresponding entry of both the top-down and the
bottom-up matrices, and for intra-layer edges both ``(j, k)`` and ``(k, j)``.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

POSITIVE = "pos"
NEGATIVE = "neg"

_NAME = r"[^\s,.:#]+"
_LAYER_RE = re.compile(rf"^layer\s+({_NAME})\s*:\s*(.*)$")
_EDGE_RE = re.compile(rf"^(pos|neg)\s+({_NAME})\.({_NAME})\s+({_NAME})\.({_NAME})$")
_OPTION_RE = re.compile(r"^option\s+(\S+)$")
_LABEL_RE = re.compile(rf"^{_NAME}$")


class GraphError(ValueError):
    """Raised when a graph file cannot be parsed into a valid graph."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class ConceptLayer:
    index: int
    name: str
    labels: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.labels)


@dataclass(frozen=True, order=True)
class RelationEdge:
    """Signed relation between two labels, endpoints as (layer, label) indices."""

    src: tuple[int, int]
    dst: tuple[int, int]
    sign: str

    @property
    def intra(self) -> bool:
        return self.src[0] == self.dst[0]

    def key(self) -> tuple[tuple[int, int], tuple[int, int]]:
        """Orientation-free identity of the edge."""
        return (min(self.src, self.dst), max(self.src, self.dst))


@dataclass(frozen=True)
class LabelGraph:
    layers: tuple[ConceptLayer, ...]
    edges: frozenset[RelationEdge] = field(default_factory=frozenset)
    self_gate: bool = True

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(layer.size for layer in self.layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def layer(self, name: str) -> ConceptLayer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def layer_index(self, name: str) -> int:
        return self.layer(name).index

    def label_index(self, layer: int, label: str) -> int:
        return self.layers[layer].labels.index(label)

    def endpoint_name(self, node: tuple[int, int]) -> str:
        t, j = node
        return f"{self.layers[t].name}.{self.layers[t].labels[j]}"

    def canonical_edges(self) -> list[RelationEdge]:
        """Edges oriented low-to-high endpoint, deduplicated and sorted."""
        out = {RelationEdge(*e.key(), e.sign) for e in self.edges}
        return sorted(out)

    def neighbours(self, node: tuple[int, int], sign: str) -> list[tuple[int, int]]:
        out = []
        for e in self.edges:
            if e.sign != sign:
                continue
            if e.src == node:
                out.append(e.dst)
            elif e.dst == node:
                out.append(e.src)
        return sorted(set(out))

    def digest(self) -> str:
        """SHA-256 of the canonical serialization."""
        return hashlib.sha256(serialize_graph(self).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


@dataclass(frozen=True)
class MaskSet:
    """Boolean connectivity compiled from a :class:`LabelGraph`.

    ``down_pos[t]`` / ``down_neg[t]`` gate the top-down matrix from layer
    ``t-1`` into layer ``t`` (shape ``n_t x n_{t-1}``, ``None`` at ``t=0``).
    ``up_pos[t]`` / ``up_neg[t]`` gate the bottom-up matrix from layer ``t+1``
    into ``t`` (shape ``n_t x n_{t+1}``, ``None`` at the bottom layer).
    ``intra_pos[t]`` / ``intra_neg[t]`` are ``n_t x n_t``.
    """

    down_pos: tuple[np.ndarray | None, ...]
    down_neg: tuple[np.ndarray | None, ...]
    up_pos: tuple[np.ndarray | None, ...]
    up_neg: tuple[np.ndarray | None, ...]
    intra_pos: tuple[np.ndarray, ...]
    intra_neg: tuple[np.ndarray, ...]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MaskSet):
            return NotImplemented
        for name in ("down_pos", "down_neg", "up_pos", "up_neg", "intra_pos", "intra_neg"):
            for a, b in zip(getattr(self, name), getattr(other, name)):
                if (a is None) != (b is None):
                    return False
                if a is not None and not np.array_equal(a, b):
                    return False
        return True

    __hash__ = None  # type: ignore[assignment]


def make_graph(
    layers: Iterable[tuple[str, Iterable[str]]],
    edges: Iterable[tuple[str, str, str]] = (),
    self_gate: bool = True,
) -> LabelGraph:
    """Build a graph from names: ``layers=[(name, labels)]``, ``edges=[(sign, "a.x", "b.y")]``.

    The result is validated; :class:`GraphError` lists every violation.
    """
    lines = [f"layer {name}: {', '.join(labels)}" for name, labels in layers]
    lines += [f"{sign} {a} {b}" for sign, a, b in edges]
    if not self_gate:
        lines.append("option no_self_gate")
    return parse_graph("\n".join(lines) + "\n")


def parse_graph(text: str) -> LabelGraph:
    layers: list[ConceptLayer] = []
    by_name: dict[str, ConceptLayer] = {}
    raw_edges: list[tuple[int, str, str, str, str, str]] = []
    self_gate = True

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if m := _LAYER_RE.match(line):
            name, rest = m.group(1), m.group(2)
            if name in by_name:
                raise GraphError(f"duplicate layer {name!r}", lineno)
            labels = tuple(s.strip() for s in rest.split(","))
            if not rest.strip() or any(not _LABEL_RE.match(s) for s in labels):
                raise GraphError(f"bad label list for layer {name!r}", lineno)
            if len(set(labels)) != len(labels):
                dup = sorted({s for s in labels if labels.count(s) > 1})
                raise GraphError(f"duplicate label {dup[0]!r} in layer {name!r}", lineno)
            layer = ConceptLayer(len(layers), name, labels)
            layers.append(layer)
            by_name[name] = layer
        elif m := _EDGE_RE.match(line):
            raw_edges.append((lineno, *m.groups()))
        elif m := _OPTION_RE.match(line):
            if m.group(1) != "no_self_gate":
                raise GraphError(f"unknown option {m.group(1)!r}", lineno)
            self_gate = False
        else:
            raise GraphError(f"syntax error: {raw.strip()!r}", lineno)

    if not layers:
        raise GraphError("graph declares no layers")

    edges: dict[tuple, RelationEdge] = {}
    for lineno, sign, la, a, lb, b in raw_edges:
        ends = []
        for lname, label in ((la, a), (lb, b)):
            if lname not in by_name:
                raise GraphError(f"unknown layer {lname!r}", lineno)
            layer = by_name[lname]
            if label not in layer.labels:
                raise GraphError(f"unknown label {lname}.{label}", lineno)
            ends.append((layer.index, layer.labels.index(label)))
        edge = RelationEdge(ends[0], ends[1], sign)
        if ends[0] == ends[1]:
            raise GraphError(f"self edge on {la}.{a}", lineno)
        if abs(ends[0][0] - ends[1][0]) > 1:
            raise GraphError(f"edge {la}.{a} -- {lb}.{b} joins non-adjacent layers", lineno)
        prev = edges.get(edge.key())
        if prev is not None and prev.sign != sign:
            raise GraphError(f"conflicting sign for edge {la}.{a} -- {lb}.{b}", lineno)
        edges[edge.key()] = RelationEdge(*edge.key(), sign)

    return LabelGraph(tuple(layers), frozenset(edges.values()), self_gate)


def serialize_graph(g: LabelGraph) -> str:
    """Canonical text: layers, then sorted ``pos`` lines, then sorted ``neg`` lines."""
    lines = [f"layer {layer.name}: {', '.join(layer.labels)}" for layer in g.layers]
    for sign in (POSITIVE, NEGATIVE):
        block = [
            f"{sign} {g.endpoint_name(e.src)} {g.endpoint_name(e.dst)}"
            for e in g.canonical_edges()
            if e.sign == sign
        ]
        lines += sorted(block)
    if not g.self_gate:
        lines.append("option no_self_gate")
    return "\n".join(lines) + "\n"


def validate_graph(g: LabelGraph) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    if not g.layers:
        out.append(Diagnostic("empty_graph", "graph has no layers"))
    names = [layer.name for layer in g.layers]
    for name in sorted({n for n in names if names.count(n) > 1}):
        out.append(Diagnostic("duplicate_layer", f"layer {name!r} declared more than once"))
    for pos, layer in enumerate(g.layers):
        if layer.index != pos:
            out.append(Diagnostic("bad_index", f"layer {layer.name!r} has index {layer.index}, expected {pos}"))
        if not layer.labels:
            out.append(Diagnostic("empty_layer", f"layer {layer.name!r} has no labels"))
        for label in sorted({s for s in layer.labels if layer.labels.count(s) > 1}):
            out.append(Diagnostic("duplicate_label", f"label {label!r} duplicated in layer {layer.name!r}"))

    def valid(node: tuple[int, int]) -> bool:
        t, j = node
        return 0 <= t < len(g.layers) and 0 <= j < g.layers[t].size

    seen: dict[tuple, RelationEdge] = {}
    for e in sorted(g.edges):
        if e.sign not in (POSITIVE, NEGATIVE):
            out.append(Diagnostic("bad_sign", f"edge {e.src}->{e.dst} has sign {e.sign!r}"))
            continue
        if not (valid(e.src) and valid(e.dst)):
            out.append(Diagnostic("bad_endpoint", f"edge {e.src}->{e.dst} references a missing layer or label"))
            continue
        desc = f"{g.endpoint_name(e.src)} -- {g.endpoint_name(e.dst)}"
        if e.src == e.dst:
            out.append(Diagnostic("self_edge", f"edge {desc} joins a label to itself"))
            continue
        if abs(e.src[0] - e.dst[0]) > 1:
            out.append(Diagnostic("non_adjacent", f"edge {desc} joins non-adjacent layers"))
            continue
        prev = seen.get(e.key())
        if prev is not None and prev.sign != e.sign:
            out.append(Diagnostic("conflicting_sign", f"edge {desc} declared both pos and neg"))
        seen[e.key()] = e
    return out


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def compile_masks(g: LabelGraph) -> MaskSet:
    diags = validate_graph(g)
    if diags:
        raise GraphError("; ".join(str(d) for d in diags))
    sizes = g.sizes
    T = len(sizes)
    down = {s: [None] + [np.zeros((sizes[t], sizes[t - 1]), bool) for t in range(1, T)] for s in (POSITIVE, NEGATIVE)}
    intra = {s: [np.zeros((n, n), bool) for n in sizes] for s in (POSITIVE, NEGATIVE)}
    if g.self_gate:
        for m in intra[POSITIVE]:
            np.fill_diagonal(m, True)

    for e in g.edges:
        (ta, ja), (tb, jb) = e.key()
        if ta == tb:
            intra[e.sign][ta][ja, jb] = True
            intra[e.sign][ta][jb, ja] = True
        else:
            # key() orders endpoints so ta = tb - 1
            down[e.sign][tb][jb, ja] = True

    def up(masks: list) -> tuple:
        return tuple(_frozen(masks[t + 1].T.copy()) for t in range(T - 1)) + (None,)

    return MaskSet(
        down_pos=tuple(None if m is None else _frozen(m) for m in down[POSITIVE]),
        down_neg=tuple(None if m is None else _frozen(m) for m in down[NEGATIVE]),
        up_pos=up(down[POSITIVE]),
        up_neg=up(down[NEGATIVE]),
        intra_pos=tuple(_frozen(m) for m in intra[POSITIVE]),
        intra_neg=tuple(_frozen(m) for m in intra[NEGATIVE]),
    )


def hierarchy_graph(
    sizes: Iterable[int],
    seed: int = 0,
    exclusive_siblings: bool = False,
    layer_names: Iterable[str] | None = None,
) -> LabelGraph:
    """Random tree-shaped taxonomy with the given layer sizes (top-down).

    Every label below the top gets exactly one parent (positive edge), and
    every parent at least one child.  Each label is also joined negatively
    to every non-parent in the layer above.  With ``exclusive_siblings``
    labels in the same layer are pairwise joined negatively.
    """
    sizes = list(sizes)
    if any(n < 1 for n in sizes):
        raise ValueError("layer sizes must be positive")
    for hi, lo in zip(sizes, sizes[1:]):
        if lo < hi:
            raise ValueError("each layer needs at least as many labels as its parent layer")
    rng = np.random.default_rng(seed)
    names = list(layer_names) if layer_names is not None else [f"L{t}" for t in range(len(sizes))]
    layers = [(names[t], [f"{names[t].lower()}_{j}" for j in range(n)]) for t, n in enumerate(sizes)]
    edges = []
    for t in range(1, len(sizes)):
        n_hi, n_lo = sizes[t - 1], sizes[t]
        parents = np.concatenate([np.arange(n_hi), rng.integers(0, n_hi, n_lo - n_hi)])
        rng.shuffle(parents)
        for j in range(n_lo):
            child = f"{names[t]}.{layers[t][1][j]}"
            for k in range(n_hi):
                parent = f"{names[t - 1]}.{layers[t - 1][1][k]}"
                edges.append((POSITIVE if k == parents[j] else NEGATIVE, parent, child))
    if exclusive_siblings:
        for t, n in enumerate(sizes):
            for j in range(n):
                for k in range(j + 1, n):
                    edges.append((NEGATIVE, f"{names[t]}.{layers[t][1][j]}", f"{names[t]}.{layers[t][1][k]}"))
    return make_graph(layers, edges)
