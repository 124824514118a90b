"""Brute-force reference computations shared by the test modules."""

from fractions import Fraction
from itertools import product


def _alpha(alpha, t):
    return alpha(t) if callable(alpha) else Fraction(alpha)


def split_children(k):
    """Exact law of (child-1 size) when a category of size k is split.

    Enumerates every cut point s and every assignment vector, then
    conditions on both children being non-empty.
    """
    weights = {}
    for s in range(1, k + 1):
        p = Fraction(s, k)
        for assign in product((0, 1), repeat=k):
            m = sum(assign)
            if 0 < m < k:
                w = Fraction(1, k) * p ** m * (1 - p) ** (k - m)
                weights[m] = weights.get(m, 0) + w
    total = sum(weights.values())
    return {m: w / total for m, w in weights.items()}


def final_state_law(model, alpha, horizon):
    """Exact distribution of sorted category sizes after ``horizon`` patents."""
    states = {(1,): Fraction(1)}
    for t in range(1, horizon):
        a = _alpha(alpha, t)
        nxt = {}

        def add(state, w):
            key = tuple(sorted(state))
            nxt[key] = nxt.get(key, 0) + w

        for state, w in states.items():
            n = sum(state)
            sizes = list(state)
            if model == "split":
                for i, k in enumerate(sizes):
                    grown = sizes[:i] + [k + 1] + sizes[i + 1:]
                    pw = w * Fraction(k, n)
                    if a < 1:
                        add(grown, pw * (1 - a))
                    if a > 0:
                        for m, pm in split_children(k + 1).items():
                            add(sizes[:i] + [m, k + 1 - m] + sizes[i + 1:], pw * a * pm)
            else:
                if a > 0:
                    add(sizes + [1], w * a)
                if a < 1:
                    for i, k in enumerate(sizes):
                        pick = Fraction(k, n) if model == "simon" else Fraction(1, len(sizes))
                        add(sizes[:i] + [k + 1] + sizes[i + 1:], w * (1 - a) * pick)
        states = nxt
    return states


def ols_by_sums(x, y):
    """Slope, intercept and R^2 from raw sums of squares."""
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    slope = sxy / sxx
    intercept = my - slope * mx
    ssr = sum((b - intercept - slope * a) ** 2 for a, b in zip(x, y))
    sst = sum((b - my) ** 2 for b in y)
    return slope, intercept, 1 - ssr / sst


def central_difference(f, x, h):
    """Central difference with one Richardson step (error O(h**4))."""
    d1 = (f(x + h) - f(x - h)) / (2 * h)
    d2 = (f(x + h / 2) - f(x - h / 2)) / h
    return (4 * d2 - d1) / 3
