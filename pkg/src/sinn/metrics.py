"""Ranking and set-based metrics for layered multi-label predictions.

Score matrices are ``images x labels``.  Ties in any ranking are broken by
ascending original index so results never depend on sort stability quirks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

RECORD_KEYS = ("map_l", "map_i", "iou_acc", "prec_l", "rec_l", "prec_i", "rec_i")


def _ranking(scores: np.ndarray) -> np.ndarray:
    # lexsort: last key is primary
    idx = np.arange(len(scores))
    return np.lexsort((idx, -np.asarray(scores, dtype=np.float64)))


def ranked_average_precision(scores, relevance) -> tuple[float, bool]:
    """``(AP, defined)``; ``defined`` is False when nothing is relevant (AP is then 0).

    AP is the mean of precision@rank over the relevant items, summed in exact
    rational arithmetic and rounded once so the value does not depend on
    summation order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    rel = np.asarray(relevance).astype(bool)
    if scores.shape != rel.shape or scores.ndim != 1:
        raise ValueError("scores and relevance must be equal-length vectors")
    if not rel.any():
        return 0.0, False
    hits = rel[_ranking(scores)]
    ranks = np.flatnonzero(hits) + 1
    total = sum((Fraction(k, int(r)) for k, r in enumerate(ranks, start=1)), Fraction(0))
    return float(total / len(ranks)), True


def average_precision(scores, relevance) -> float:
    """AP of one ranking; 0 when nothing is relevant (see :func:`ranked_average_precision`)."""
    return ranked_average_precision(scores, relevance)[0]


def _mean_ap(scores, targets, axis: int) -> float:
    S = np.asarray(scores, dtype=np.float64)
    Y = np.asarray(targets)
    if S.shape != Y.shape or S.ndim != 2:
        raise ValueError("score and target matrices must have the same 2-D shape")
    if axis == 0:
        S, Y = S.T, Y.T
    aps = [ap for ap, ok in (ranked_average_precision(s, y) for s, y in zip(S, Y)) if ok]
    if not aps:
        raise ValueError("no positives in any ranking")
    return float(np.mean(aps))


def map_per_label(scores, targets) -> float:
    """Mean AP over labels, each ranking the images."""
    return _mean_ap(scores, targets, axis=0)


def map_per_image(scores, targets) -> float:
    """Mean AP over images, each ranking the labels."""
    return _mean_ap(scores, targets, axis=1)


def mc_acc(scores, classes) -> float:
    """Mean per-class accuracy of argmax decoding (ties go to the lowest index).

    ``classes`` holds one ground-truth class index per image; classes with
    no images do not enter the mean.
    """
    S = np.asarray(scores, dtype=np.float64)
    classes = np.asarray(classes)
    pred = np.argmax(S, axis=1)
    accs = [np.mean(pred[classes == c] == c) for c in np.unique(classes)]
    return float(np.mean(accs))


def iou_acc(pred, targets) -> float:
    """Mean per-image Jaccard index between predicted and true label sets.

    Both arguments are boolean ``images x labels`` matrices; an image whose
    two sets are both empty scores 1.
    """
    P = np.asarray(pred).astype(bool)
    G = np.asarray(targets).astype(bool)
    inter = np.sum(P & G, axis=1)
    union = np.sum(P | G, axis=1)
    per = np.where(union == 0, 1.0, inter / np.maximum(union, 1))
    return float(np.mean(per))


def top_n(scores, n: int) -> np.ndarray:
    """Boolean matrix marking each image's ``n`` highest-scored labels."""
    S = np.asarray(scores, dtype=np.float64)
    if not 1 <= n <= S.shape[1]:
        raise ValueError(f"n={n} must lie in [1, {S.shape[1]}]")
    out = np.zeros(S.shape, bool)
    for i, row in enumerate(S):
        out[i, _ranking(row)[:n]] = True
    return out


def prec_rec_at_n(scores, targets, n: int = 3) -> tuple[float, float, float, float]:
    """``(prec_l, rec_l, prec_i, rec_i)`` with each image predicting its top ``n`` labels.

    Per-image values average over all images (recall over images with at
    least one positive).  Per-label precision averages over labels predicted
    at least once, per-label recall over labels with at least one positive.
    """
    P = top_n(scores, n)
    G = np.asarray(targets).astype(bool)
    tp = P & G
    prec_i = float(np.mean(tp.sum(1) / n))
    has_g = G.sum(1) > 0
    rec_i = float(np.mean(tp.sum(1)[has_g] / G.sum(1)[has_g])) if has_g.any() else float("nan")
    predicted = P.sum(0)
    positives = G.sum(0)
    prec_l = float(np.mean(tp.sum(0)[predicted > 0] / predicted[predicted > 0])) if (predicted > 0).any() else float("nan")
    rec_l = float(np.mean(tp.sum(0)[positives > 0] / positives[positives > 0])) if (positives > 0).any() else float("nan")
    return prec_l, rec_l, prec_i, rec_i


@dataclass
class EvalResult:
    map_l: float
    map_i: float
    iou_acc: float
    prec_l: float = float("nan")
    rec_l: float = float("nan")
    prec_i: float = float("nan")
    rec_i: float = float("nan")
    mc_acc: dict[str, float] = field(default_factory=dict)
    layers: dict[str, "EvalResult"] = field(default_factory=dict)

    def to_record(self) -> dict[str, float]:
        rec = {k: getattr(self, k) for k in RECORD_KEYS}
        for name, v in self.mc_acc.items():
            rec[f"mc_acc.{name}"] = v
        return rec


def evaluate_scores(probs, targets, n: int = 3, threshold: float = 0.5,
                    exclusive: set[int] | None = None, names: list[str] | None = None) -> EvalResult:
    """Full metric suite over per-layer probability and target matrices.

    The overall result ranks over all layers' labels side by side; ``layers``
    holds the same metrics for each layer alone.  Prec/rec at ``n`` are left
    as ``nan`` where a scope has fewer than ``n`` labels.
    """
    exclusive = exclusive or set()
    names = names or [str(t) for t in range(len(probs))]
    probs = [np.asarray(q, dtype=np.float64) for q in probs]
    targets = [np.asarray(y) for y in targets]

    def scope(S, Y, layer_ids):
        pr = prec_rec_at_n(S, Y, n) if S.shape[1] >= n else (float("nan"),) * 4
        res = EvalResult(
            map_l=_safe(map_per_label, S, Y),
            map_i=_safe(map_per_image, S, Y),
            iou_acc=iou_acc(S >= threshold, Y),
            prec_l=pr[0], rec_l=pr[1], prec_i=pr[2], rec_i=pr[3],
        )
        for t in layer_ids:
            if t in exclusive:
                res.mc_acc[names[t]] = mc_acc(probs[t], np.argmax(targets[t], axis=1))
        return res

    overall = scope(np.hstack(probs), np.hstack(targets), range(len(probs)))
    for t, name in enumerate(names):
        overall.layers[name] = scope(probs[t], targets[t], [t])
    return overall


def _safe(fn, S, Y) -> float:
    try:
        return fn(S, Y)
    except ValueError:
        return float("nan")


def format_record(res: EvalResult) -> str:
    """Flat ``key=value`` lines: the overall scope, then one block per layer.

    Each block starts with a ``scope=`` line; blocks are blank-line separated.
    """
    blocks = [("all", res)] + list(res.layers.items())
    out = []
    for name, r in blocks:
        lines = [f"scope={name}"] + [f"{k}={v!r}" for k, v in r.to_record().items()]
        out.append("\n".join(lines))
    return "\n\n".join(out) + "\n"


def parse_record(text: str) -> EvalResult:
    blocks = [b for b in text.strip().split("\n\n") if b.strip()]
    parsed = []
    for b in blocks:
        kv = dict(line.split("=", 1) for line in b.strip().splitlines())
        name = kv.pop("scope")
        vals = {k: float(v) for k, v in kv.items()}
        mc = {k.split(".", 1)[1]: v for k, v in vals.items() if k.startswith("mc_acc.")}
        res = EvalResult(**{k: vals[k] for k in RECORD_KEYS}, mc_acc=mc)
        parsed.append((name, res))
    if not parsed or parsed[0][0] != "all":
        raise ValueError("record must start with the scope=all block")
    top = parsed[0][1]
    top.layers = dict(parsed[1:])
    return top
