"""Parameters and forward passes for the four model variants.

``logistic``
    independent per-label logistic regression on the visual activations.
``topdown``
    one top-down recurrence over concept layers.
``binn``
    dense top-down and bottom-up recurrences, aggregated per layer.
``sinn``
    like ``binn`` but every inter/intra matrix is split into a positive and a
    negative channel, masked by the label graph and passed through a ReLU.

All forward passes work on batches: features are ``(N, d)`` and per-layer
activations ``(N, n_t)``.  A single ``(d,)`` feature is a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import LabelGraph, MaskSet
from .numerics import affine, matvec, relu, sigmoid
from .observation import ObservationConfig, ObservationSet, inject

VARIANTS = ("logistic", "topdown", "binn", "sinn")
SINN_TERMS = ("v_pos", "h_pos", "v_neg", "h_neg")

__all__ = [
    "VARIANTS",
    "ModelParams",
    "ForwardTrace",
    "ObservationSet",
    "init_params",
    "visual_activations",
    "forward",
    "forward_logistic",
    "forward_topdown",
    "forward_binn",
    "forward_sinn",
    "predict",
    "param_mask",
    "is_bias",
]


@dataclass
class ModelParams:
    variant: str
    sizes: tuple[int, ...]
    dim: int
    tensors: dict[str, np.ndarray]
    graph_digest: str = ""

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self.tensors[name] = value

    def names(self) -> list[str]:
        return list(self.tensors)

    def copy(self) -> "ModelParams":
        return ModelParams(self.variant, self.sizes, self.dim,
                           {k: v.copy() for k, v in self.tensors.items()}, self.graph_digest)

    def equals(self, other: "ModelParams") -> bool:
        """Bitwise equality of metadata and every tensor."""
        if (self.variant, self.sizes, self.dim, self.graph_digest) != (
            other.variant, other.sizes, other.dim, other.graph_digest
        ):
            return False
        if list(self.tensors) != list(other.tensors):
            return False
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.tensors.values(), other.tensors.values())
        )


@dataclass
class ForwardTrace:
    """Everything backprop needs, plus the final probabilities.

    ``pre_f[t]`` / ``pre_b[t]`` hold the four pre-ReLU products of a SINN
    layer (keys ``v_pos, h_pos, v_neg, h_neg``); the V products are zero
    arrays at the boundary layer where no incoming message exists.
    """

    variant: str
    features: np.ndarray
    xs: list[np.ndarray]
    a: list[np.ndarray]
    af: list[np.ndarray] = field(default_factory=list)
    ab: list[np.ndarray] = field(default_factory=list)
    pre_f: list[dict[str, np.ndarray]] = field(default_factory=list)
    pre_b: list[dict[str, np.ndarray]] = field(default_factory=list)
    observed: frozenset[int] = frozenset()

    @property
    def probs(self) -> list[np.ndarray]:
        return [sigmoid(a) for a in self.a]


def is_bias(name: str) -> bool:
    return name.split(".")[0].startswith("b")


def _param_shapes(variant: str, sizes: tuple[int, ...], d: int) -> dict[str, tuple[int, ...]]:
    T = len(sizes)
    shapes: dict[str, tuple[int, ...]] = {}
    for t, n in enumerate(sizes):
        shapes[f"W_vis.{t}"] = (n, d)
        shapes[f"b_vis.{t}"] = (n,)
    if variant == "logistic":
        return shapes
    if variant == "topdown":
        for t, n in enumerate(sizes):
            if t > 0:
                shapes[f"V.{t}"] = (n, sizes[t - 1])
            shapes[f"H.{t}"] = (n, n)
            shapes[f"b.{t}"] = (n,)
        return shapes
    if variant not in ("binn", "sinn"):
        raise ValueError(f"unknown variant {variant!r}")
    channels = ("",) if variant == "binn" else ("_pos", "_neg")
    for t, n in enumerate(sizes):
        for c in channels:
            if t > 0:
                shapes[f"Vf{c}.{t}"] = (n, sizes[t - 1])
            if t < T - 1:
                shapes[f"Vb{c}.{t}"] = (n, sizes[t + 1])
            shapes[f"Hf{c}.{t}"] = (n, n)
            shapes[f"Hb{c}.{t}"] = (n, n)
        shapes[f"bf.{t}"] = (n,)
        shapes[f"bb.{t}"] = (n,)
        shapes[f"Uf.{t}"] = (n, n)
        shapes[f"Ub.{t}"] = (n, n)
        shapes[f"b.{t}"] = (n,)
    return shapes


def param_mask(name: str, masks: MaskSet) -> np.ndarray | None:
    """Connectivity mask gating a SINN tensor, or ``None`` if it is dense."""
    head, t = name.split(".")
    t = int(t)
    table = {
        "Vf_pos": masks.down_pos, "Vf_neg": masks.down_neg,
        "Vb_pos": masks.up_pos, "Vb_neg": masks.up_neg,
        "Hf_pos": masks.intra_pos, "Hb_pos": masks.intra_pos,
        "Hf_neg": masks.intra_neg, "Hb_neg": masks.intra_neg,
    }
    if head not in table:
        return None
    return table[head][t]


def init_params(
    graph: LabelGraph,
    masks: MaskSet | None,
    dim: int,
    variant: str,
    seed: int = 0,
) -> ModelParams:
    """Glorot-uniform weights, zero biases; SINN entries off the graph are zeroed."""
    if dim < 1:
        raise ValueError("feature dimension must be >= 1")
    if variant == "sinn" and masks is None:
        raise ValueError("sinn needs a MaskSet")
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in _param_shapes(variant, graph.sizes, dim).items():
        if is_bias(name):
            tensors[name] = np.zeros(shape)
            continue
        fan_out, fan_in = shape
        s = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-s, s, size=shape)
        if variant == "sinn":
            m = param_mask(name, masks)
            if m is not None:
                w = np.where(m, w, 0.0)
        tensors[name] = w
    return ModelParams(variant, graph.sizes, dim, tensors, graph.digest())


def _batch(features: np.ndarray, dim: int) -> np.ndarray:
    F = np.asarray(features, dtype=np.float64)
    if F.ndim == 1:
        F = F[None, :]
    if F.ndim != 2 or F.shape[1] != dim:
        raise ValueError(f"dimension mismatch: features {np.shape(features)} vs d={dim}")
    return F


def visual_activations(p: ModelParams, features: np.ndarray) -> list[np.ndarray]:
    """Per-layer affine projections of the input features."""
    F = np.asarray(features, dtype=np.float64)
    if F.shape[-1] != p.dim:
        raise ValueError(f"dimension mismatch: features {F.shape} vs d={p.dim}")
    return [affine(p[f"W_vis.{t}"], F, p[f"b_vis.{t}"]) for t in range(len(p.sizes))]


def _check_xs(p: ModelParams, xs: list[np.ndarray]) -> list[np.ndarray]:
    if len(xs) != len(p.sizes):
        raise ValueError(f"shape mismatch: {len(xs)} activation layers for {len(p.sizes)} concept layers")
    out = []
    for t, x in enumerate(xs):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[-1] != p.sizes[t]:
            raise ValueError(f"shape mismatch: layer {t} activations {x.shape} vs n_t={p.sizes[t]}")
        out.append(x)
    return out


def _linear_step(a_prev, V, x, H, b):
    if a_prev is None:
        return matvec(H, x) + b
    return matvec(V, a_prev) + matvec(H, x) + b


def _require(p: ModelParams, variant: str) -> None:
    if p.variant != variant:
        raise ValueError(f"params are {p.variant!r}, expected {variant!r}")


def forward_logistic(p, xs, features=None, injected=None) -> ForwardTrace:
    _require(p, "logistic")
    xs = _check_xs(p, xs)
    injected = injected or {}
    a = [np.broadcast_to(injected[t], x.shape).copy() if t in injected else x for t, x in enumerate(xs)]
    return ForwardTrace("logistic", features, xs, a, observed=frozenset(injected))


def forward_topdown(p, xs, features=None, injected=None) -> ForwardTrace:
    _require(p, "topdown")
    xs = _check_xs(p, xs)
    injected = injected or {}
    a: list[np.ndarray] = []
    for t, x in enumerate(xs):
        if t in injected:
            a.append(np.broadcast_to(injected[t], x.shape).copy())
            continue
        prev = a[t - 1] if t > 0 else None
        a.append(_linear_step(prev, p.tensors.get(f"V.{t}"), x, p[f"H.{t}"], p[f"b.{t}"]))
    return ForwardTrace("topdown", features, xs, a, observed=frozenset(injected))


def _aggregate(p, af, ab, injected):
    a = []
    for t in range(len(af)):
        if t in injected:
            a.append(af[t])
        else:
            a.append(matvec(p[f"Uf.{t}"], af[t]) + matvec(p[f"Ub.{t}"], ab[t]) + p[f"b.{t}"])
    return a


def forward_binn(p, xs, features=None, injected=None) -> ForwardTrace:
    _require(p, "binn")
    xs = _check_xs(p, xs)
    injected = injected or {}
    T = len(xs)
    af: list = [None] * T
    ab: list = [None] * T
    for t in range(T):
        if t in injected:
            af[t] = np.broadcast_to(injected[t], xs[t].shape).copy()
            continue
        prev = af[t - 1] if t > 0 else None
        af[t] = _linear_step(prev, p.tensors.get(f"Vf.{t}"), xs[t], p[f"Hf.{t}"], p[f"bf.{t}"])
    for t in reversed(range(T)):
        if t in injected:
            ab[t] = af[t]
            continue
        prev = ab[t + 1] if t < T - 1 else None
        ab[t] = _linear_step(prev, p.tensors.get(f"Vb.{t}"), xs[t], p[f"Hb.{t}"], p[f"bb.{t}"])
    a = _aggregate(p, af, ab, injected)
    return ForwardTrace("binn", features, xs, a, af, ab, observed=frozenset(injected))


def check_masked_zero(p: ModelParams, masks: MaskSet) -> None:
    for name, w in p.tensors.items():
        m = param_mask(name, masks)
        if m is not None and np.any(w[~m] != 0.0):
            raise ValueError(f"masked-zero invariant violated in {name}")


def _sinn_step(p, direction, t, prev, x, shape):
    """Pre-ReLU products and the resulting directional activation for one layer."""
    v = f"V{direction}"
    h = f"H{direction}"
    pre = {
        "v_pos": np.zeros(shape) if prev is None else matvec(p[f"{v}_pos.{t}"], prev),
        "h_pos": matvec(p[f"{h}_pos.{t}"], x),
        "v_neg": np.zeros(shape) if prev is None else matvec(p[f"{v}_neg.{t}"], prev),
        "h_neg": matvec(p[f"{h}_neg.{t}"], x),
    }
    g = {k: relu(val) for k, val in pre.items()}
    act = (g["v_pos"] + g["h_pos"]) - (g["v_neg"] + g["h_neg"]) + p[f"b{direction.lower()}.{t}"]
    return pre, act


def forward_sinn(p, masks, xs, features=None, injected=None, check=True) -> ForwardTrace:
    _require(p, "sinn")
    if check:
        check_masked_zero(p, masks)
    xs = _check_xs(p, xs)
    injected = injected or {}
    T = len(xs)
    af: list = [None] * T
    ab: list = [None] * T
    pre_f: list = [None] * T
    pre_b: list = [None] * T
    for t in range(T):
        if t in injected:
            af[t] = np.broadcast_to(injected[t], xs[t].shape).copy()
            continue
        prev = af[t - 1] if t > 0 else None
        pre_f[t], af[t] = _sinn_step(p, "f", t, prev, xs[t], xs[t].shape)
    for t in reversed(range(T)):
        if t in injected:
            ab[t] = af[t]
            continue
        prev = ab[t + 1] if t < T - 1 else None
        pre_b[t], ab[t] = _sinn_step(p, "b", t, prev, xs[t], xs[t].shape)
    a = _aggregate(p, af, ab, injected)
    return ForwardTrace("sinn", features, xs, a, af, ab, pre_f, pre_b, frozenset(injected))


def forward(p, masks, xs, features=None, injected=None) -> ForwardTrace:
    """Dispatch to the forward pass matching ``p.variant``."""
    if p.variant == "sinn":
        return forward_sinn(p, masks, xs, features, injected)
    fn = {"logistic": forward_logistic, "topdown": forward_topdown, "binn": forward_binn}[p.variant]
    return fn(p, xs, features, injected)


def run(p: ModelParams, masks: MaskSet | None, features, obs=None,
        obs_cfg: ObservationConfig = ObservationConfig()) -> ForwardTrace:
    """Visual activations followed by the variant's forward pass."""
    F = _batch(features, p.dim)
    injected = inject(obs, p.sizes, obs_cfg)
    return forward(p, masks, visual_activations(p, F), F, injected)


def predict(p: ModelParams, masks: MaskSet | None, features, obs=None,
            obs_cfg: ObservationConfig = ObservationConfig()) -> list[np.ndarray]:
    """Per-layer label probabilities; a ``(d,)`` input gives ``(n_t,)`` outputs."""
    single = np.ndim(features) == 1
    probs = run(p, masks, features, obs, obs_cfg).probs
    return [q[0] for q in probs] if single else probs
