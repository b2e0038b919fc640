"""Central finite-difference oracle shared by the unit and acceptance tests."""

import numpy as np

from sinn.graph import compile_masks, hierarchy_graph
from sinn.model import forward, init_params, is_bias, param_mask, visual_activations
from sinn.training import backward, loss

KINK = 1e-7


def _pre_values(trace):
    out = []
    for pres in (trace.pre_f, trace.pre_b):
        for d in pres:
            if d:
                out.extend(d.values())
    return np.concatenate([v.ravel() for v in out]) if out else np.zeros(0)


def _evaluate(p, masks, F, Y, injected):
    tr = forward(p, masks, visual_activations(p, F), F, injected)
    return loss(tr, Y), tr


def random_instance(variant, seed, sizes=(2, 3, 4), d=5, n=3):
    """Random params (biases included), features and binary targets."""
    rng = np.random.default_rng(seed)
    g = hierarchy_graph(sizes, seed=seed, exclusive_siblings=True)
    masks = compile_masks(g)
    p = init_params(g, masks, d, variant, seed=seed)
    for name in p.names():
        if is_bias(name):
            p[name][...] = rng.normal(0, 0.5, p[name].shape)
    F = rng.normal(size=(n, d))
    Y = [rng.integers(0, 2, size=(n, k)).astype(float) for k in sizes]
    return g, masks, p, F, Y


def fd_check(p, masks, F, Y, injected=None, h=1e-5, floor=1e-8):
    """Largest relative error over all non-kink, learnable coordinates.

    Returns ``(worst, checked, skipped)``.  A coordinate is skipped when a
    pre-ReLU value within ``KINK`` of zero moves under its perturbation.
    """
    _, base = _evaluate(p, masks, F, Y, injected)
    pre0 = _pre_values(base)
    near = np.abs(pre0) < KINK
    grads = backward(p, masks, base, Y)
    worst, checked, skipped = 0.0, 0, 0
    for name, w in p.tensors.items():
        m = param_mask(name, masks) if p.variant == "sinn" else None
        for idx in np.ndindex(w.shape):
            if m is not None and not m[idx]:
                assert grads[name][idx] == 0.0
                continue
            old = w[idx]
            w[idx] = old + h
            lp, tp = _evaluate(p, masks, F, Y, injected)
            w[idx] = old - h
            lm, tm = _evaluate(p, masks, F, Y, injected)
            w[idx] = old
            if near.any():
                moved = (_pre_values(tp) != pre0) | (_pre_values(tm) != pre0)
                if (moved & near).any():
                    skipped += 1
                    continue
            fd = (lp - lm) / (2 * h)
            an = grads[name][idx]
            err = abs(fd - an) / max(abs(fd), abs(an), floor)
            worst = max(worst, err)
            checked += 1
    return worst, checked, skipped
