"""Brute-force reference implementations used as test oracles."""

from fractions import Fraction


def rank_positions(scores):
    """1-based rank of each item, counted directly: higher scores first, ties by index."""
    n = len(scores)
    return [1 + sum(1 for j in range(n) if scores[j] > scores[i] or (scores[j] == scores[i] and j < i))
            for i in range(n)]


def brute_ap(scores, relevance):
    """Exact AP: precision at every relevant item's rank, averaged, then rounded once."""
    rank = rank_positions(list(scores))
    rel = [i for i in range(len(scores)) if relevance[i]]
    if not rel:
        return 0.0
    precs = [Fraction(sum(1 for j in rel if rank[j] <= rank[i]), rank[i]) for i in rel]
    return float(sum(precs, Fraction(0)) / len(rel))
