"""Cross-entropy loss, exact backprop for every variant, and the SGD trainer."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .graph import MaskSet
from .model import ForwardTrace, ModelParams, forward, is_bias, param_mask, visual_activations
from .numerics import clip_global_norm, log_sigmoid, sigmoid
from .observation import PAPER_FORMULA, ObservationConfig, observed_activations

log = logging.getLogger(__name__)

# learning rate of the second (CNN fine-tuning) stage; kept as a named preset only
FINETUNE_LR = 0.0001


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 50
    clip_threshold: float = 25.0
    weight_decay: float = 0.0005
    epochs: int = 30
    lr_decay: float = 0.1
    lr_step: int | None = None
    seed: int = 0
    # observation-aware training: on a random fraction of mini-batches the
    # true targets of these layers are injected as observations
    observe_layers: tuple[int, ...] = ()
    observe_prob: float = 0.0
    observe_mode: str = PAPER_FORMULA
    observe_epsilon: float = 0.001

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.clip_threshold > 0:
            raise ValueError("clip_threshold must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lr_step is not None and self.lr_step < 1:
            raise ValueError("lr_step must be >= 1")
        if not 0 <= self.observe_prob <= 1:
            raise ValueError("observe_prob must lie in [0, 1]")
        object.__setattr__(self, "observe_layers", tuple(int(t) for t in self.observe_layers))
        self.observation_config()

    def observation_config(self) -> ObservationConfig:
        return ObservationConfig(self.observe_epsilon, self.observe_mode)

    @property
    def decay_interval(self) -> int:
        return self.lr_step if self.lr_step is not None else max(1, self.epochs // 3)

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 0-based ``epoch`` under the step schedule."""
        return self.learning_rate * self.lr_decay ** (epoch // self.decay_interval)

    def to_dict(self) -> dict:
        return asdict(self)


def _targets(trace: ForwardTrace, targets) -> list[np.ndarray]:
    if len(targets) != len(trace.a):
        raise ValueError(f"target shape mismatch: {len(targets)} layers for {len(trace.a)}")
    out = []
    for t, (y, a) in enumerate(zip(targets, trace.a)):
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y[None, :]
        if y.shape != a.shape:
            raise ValueError(f"target shape mismatch in layer {t}: {y.shape} vs {a.shape}")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError(f"non-binary target in layer {t}")
        out.append(y)
    return out


def loss(trace: ForwardTrace, targets) -> float:
    """Summed binary cross-entropy over samples, layers and labels."""
    total = 0.0
    for a, y in zip(trace.a, _targets(trace, targets)):
        total -= float(np.sum(y * log_sigmoid(a) + (1.0 - y) * log_sigmoid(-a)))
    return total


def sample_losses(trace: ForwardTrace, targets) -> np.ndarray:
    out = 0.0
    for a, y in zip(trace.a, _targets(trace, targets)):
        out = out - np.sum(y * log_sigmoid(a) + (1.0 - y) * log_sigmoid(-a), axis=1)
    return out


def _relu_back(upstream: np.ndarray, pre: np.ndarray) -> np.ndarray:
    # subgradient 0 at exactly 0
    return upstream * (pre > 0)


def _sinn_layer_back(p, grads, direction, t, d_act, pre, prev, x, dx):
    """Backprop one directional SINN layer; returns d(prev) or None."""
    grads[f"b{direction.lower()}.{t}"] += d_act.sum(axis=0)
    d_prev = None
    for sign, coef in (("pos", 1.0), ("neg", -1.0)):
        dh = _relu_back(coef * d_act, pre[f"h_{sign}"])
        H = p[f"H{direction}_{sign}.{t}"]
        grads[f"H{direction}_{sign}.{t}"] += dh.T @ x
        dx[t] += dh @ H
        if prev is not None:
            dv = _relu_back(coef * d_act, pre[f"v_{sign}"])
            V = p[f"V{direction}_{sign}.{t}"]
            grads[f"V{direction}_{sign}.{t}"] += dv.T @ prev
            d_prev = dv @ V if d_prev is None else d_prev + dv @ V
    return d_prev


def backward(p: ModelParams, masks: MaskSet | None, trace: ForwardTrace, targets) -> dict[str, np.ndarray]:
    """Gradient of :func:`loss` (summed over the batch) w.r.t. every tensor."""
    if trace.variant != p.variant:
        raise ValueError(f"trace is {trace.variant!r} but params are {p.variant!r}")
    if trace.features is None:
        raise ValueError("trace has no input features; build it with model.run")
    Y = _targets(trace, targets)
    T = len(trace.a)
    xs = trace.xs
    grads = {k: np.zeros_like(v) for k, v in p.tensors.items()}
    # injected layers are constants: no loss gradient, no flow through them
    obs = trace.observed
    g = [np.zeros_like(a) if t in obs else sigmoid(a) - y for t, (a, y) in enumerate(zip(trace.a, Y))]
    dx = [np.zeros_like(x) for x in xs]

    if p.variant == "logistic":
        dx = g
    elif p.variant == "topdown":
        da = [gi.copy() for gi in g]
        for t in reversed(range(T)):
            if t in obs:
                continue
            grads[f"b.{t}"] += da[t].sum(axis=0)
            grads[f"H.{t}"] += da[t].T @ xs[t]
            dx[t] += da[t] @ p[f"H.{t}"]
            if t > 0:
                grads[f"V.{t}"] += da[t].T @ trace.a[t - 1]
                da[t - 1] += da[t] @ p[f"V.{t}"]
    else:
        daf, dab = [], []
        for t in range(T):
            grads[f"Uf.{t}"] += g[t].T @ trace.af[t]
            grads[f"Ub.{t}"] += g[t].T @ trace.ab[t]
            grads[f"b.{t}"] += g[t].sum(axis=0)
            daf.append(g[t] @ p[f"Uf.{t}"])
            dab.append(g[t] @ p[f"Ub.{t}"])
        if p.variant == "binn":
            for t in reversed(range(T)):
                if t in obs:
                    continue
                grads[f"bf.{t}"] += daf[t].sum(axis=0)
                grads[f"Hf.{t}"] += daf[t].T @ xs[t]
                dx[t] += daf[t] @ p[f"Hf.{t}"]
                if t > 0:
                    grads[f"Vf.{t}"] += daf[t].T @ trace.af[t - 1]
                    daf[t - 1] += daf[t] @ p[f"Vf.{t}"]
            for t in range(T):
                if t in obs:
                    continue
                grads[f"bb.{t}"] += dab[t].sum(axis=0)
                grads[f"Hb.{t}"] += dab[t].T @ xs[t]
                dx[t] += dab[t] @ p[f"Hb.{t}"]
                if t < T - 1:
                    grads[f"Vb.{t}"] += dab[t].T @ trace.ab[t + 1]
                    dab[t + 1] += dab[t] @ p[f"Vb.{t}"]
        elif p.variant == "sinn":
            for t in reversed(range(T)):
                if t in obs:
                    continue
                prev = trace.af[t - 1] if t > 0 else None
                d_prev = _sinn_layer_back(p, grads, "f", t, daf[t], trace.pre_f[t], prev, xs[t], dx)
                if d_prev is not None:
                    daf[t - 1] += d_prev
            for t in range(T):
                if t in obs:
                    continue
                prev = trace.ab[t + 1] if t < T - 1 else None
                d_prev = _sinn_layer_back(p, grads, "b", t, dab[t], trace.pre_b[t], prev, xs[t], dx)
                if d_prev is not None:
                    dab[t + 1] += d_prev
            for name in grads:
                m = param_mask(name, masks)
                if m is not None:
                    grads[name] = np.where(m, grads[name], 0.0)
        else:
            raise ValueError(f"unknown variant {p.variant!r}")

    F = trace.features
    for t in range(T):
        grads[f"W_vis.{t}"] += dx[t].T @ F
        grads[f"b_vis.{t}"] += dx[t].sum(axis=0)
    return grads


def loss_and_grad(p, masks, features, targets, mean=True, injected=None):
    """Loss and gradient over a batch; ``mean`` divides both by the batch size.

    ``injected`` maps layer index to replacement activations (see
    :func:`sinn.observation.inject`); those layers act as constants.
    """
    F = np.atleast_2d(np.asarray(features, dtype=np.float64))
    trace = forward(p, masks, visual_activations(p, F), F, injected)
    L = loss(trace, targets)
    grads = backward(p, masks, trace, targets)
    if mean:
        n = F.shape[0]
        L /= n
        for k in grads:
            grads[k] /= n
    return L, grads


def init_velocity(p: ModelParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in p.tensors.items()}


def sgd_step(
    p: ModelParams,
    velocity: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    cfg: TrainConfig,
    masks: MaskSet | None = None,
    lr: float | None = None,
) -> float:
    """One momentum step, in place on ``p`` and ``velocity``.

    Order: weight decay (weights only), SINN masking, global-norm clipping,
    ``v <- momentum * v - lr * g``, ``w <- w + v``.  Returns the clip scale.
    """
    lr = cfg.learning_rate if lr is None else lr
    sinn = p.variant == "sinn"
    g = {}
    for name, w in p.tensors.items():
        gi = np.array(grads[name], dtype=np.float64)
        if gi.shape != w.shape:
            raise ValueError(f"shape mismatch for {name}: {gi.shape} vs {w.shape}")
        if cfg.weight_decay and not is_bias(name):
            gi += cfg.weight_decay * w
        m = param_mask(name, masks) if sinn else None
        if m is not None:
            gi = np.where(m, gi, 0.0)
        g[name] = gi
    scale = clip_global_norm(list(g.values()), cfg.clip_threshold)
    for name, w in p.tensors.items():
        v = cfg.momentum * velocity[name] - lr * g[name]
        m = param_mask(name, masks) if sinn else None
        if m is not None:
            v = np.where(m, v, 0.0)
        velocity[name] = v
        w += v
        if m is not None:
            w[~m] = 0.0
    return scale


def _as_arrays(dataset):
    if hasattr(dataset, "features") and hasattr(dataset, "targets"):
        return np.asarray(dataset.features, dtype=np.float64), [np.asarray(y, dtype=np.float64) for y in dataset.targets]
    F, Ys = dataset
    return np.asarray(F, dtype=np.float64), [np.asarray(y, dtype=np.float64) for y in Ys]


def fit(
    dataset,
    p: ModelParams,
    masks: MaskSet | None,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
    snapshot: Callable[[ModelParams], dict] | None = None,
    snapshot_every: int = 0,
    on_epoch: Callable[[dict], None] | None = None,
) -> list[dict]:
    """Mini-batch SGD over ``dataset``, updating ``p`` in place.

    ``dataset`` is a :class:`~sinn.data.Dataset` or a ``(features, targets)``
    pair.  Returns one record per epoch with keys ``epoch, loss, lr,
    wall_time`` and, on snapshot epochs, ``metrics``.
    """
    F, Ys = _as_arrays(dataset)
    N = F.shape[0]
    if N == 0:
        raise ValueError("empty dataset")
    if F.shape[1] != p.dim:
        raise ValueError(f"dimension mismatch: features have d={F.shape[1]}, params expect {p.dim}")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    for t in cfg.observe_layers:
        if not 0 <= t < len(p.sizes):
            raise ValueError(f"observe_layers names nonexistent layer {t}")
    obs_cfg = cfg.observation_config()
    velocity = init_velocity(p)
    history = []
    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        lr = cfg.lr_at(epoch)
        order = rng.permutation(N)
        total = 0.0
        for lo in range(0, N, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            injected = None
            if cfg.observe_prob > 0 and cfg.observe_layers and rng.random() < cfg.observe_prob:
                injected = {t: observed_activations(Ys[t][idx], obs_cfg) for t in cfg.observe_layers}
            L, grads = loss_and_grad(p, masks, F[idx], [y[idx] for y in Ys], mean=False, injected=injected)
            total += L
            for k in grads:
                grads[k] /= len(idx)
            sgd_step(p, velocity, grads, cfg, masks, lr)
        mean_loss = total / N
        if not np.isfinite(mean_loss):
            raise FloatingPointError(f"non-finite loss at epoch {epoch + 1}")
        rec = {"epoch": epoch + 1, "loss": mean_loss, "lr": lr, "wall_time": time.perf_counter() - start}
        if snapshot is not None and snapshot_every and (epoch + 1) % snapshot_every == 0:
            rec["metrics"] = snapshot(p)
        log.debug("epoch %d loss %.6f", epoch + 1, mean_loss)
        history.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
    return history


def format_log_record(rec: dict) -> str:
    """One line of the line-delimited JSON training log."""
    return json.dumps(rec, sort_keys=True)
