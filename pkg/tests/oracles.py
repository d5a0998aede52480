"""Reference implementations written independently of the package, used as test oracles."""

import itertools
import math
from fractions import Fraction as F


def borda_points_bruteforce(values):
    """Points N - 1 - p, ties averaged, computed by counting rather than sorting.

    A chunk strictly beaten by ``above`` others and tied with ``tied`` others
    (itself included) occupies positions above .. above + tied - 1.
    """
    n = len(values)
    pts = []
    for v in values:
        above = sum(1 for u in values if u > v)
        tied = sum(1 for u in values if u == v)
        positions = range(above, above + tied)
        pts.append(F(sum(n - 1 - p for p in positions), tied))
    return pts


def borda_order_bruteforce(families, weights):
    """Order chunks by weighted points, key descending then index ascending.

    Uses exact rational weights so the comparison has no rounding.
    """
    n = len(families[0])
    keys = [F(0)] * n
    for w, fam in zip(weights, families):
        for i, p in enumerate(borda_points_bruteforce(fam)):
            keys[i] += F(w) * p
    # Selection-sort style: repeatedly take the best remaining.
    remaining = list(range(n))
    out = []
    while remaining:
        best = remaining[0]
        for i in remaining[1:]:
            if keys[i] > keys[best]:
                best = i
        out.append(best)
        remaining.remove(best)
    return out, keys


def coverage_feasible(tops, tokens, budget, required):
    """Exhaustive check: does some chunk subset within budget give every field
    its required number of top-m chunks? Only the union of top lists matters."""
    pool = sorted({c for t in tops.values() for c in t})
    for r in range(len(pool) + 1):
        for subset in itertools.combinations(pool, r):
            if sum(tokens[c] for c in subset) > budget:
                continue
            s = set(subset)
            if all(sum(1 for c in tops[f] if c in s) >= required[f] for f in tops):
                return True
    return False


def required_count(fraction, m):
    return math.ceil(F(fraction).limit_denominator(10**6) * m)


def bm25_by_hand(tf, length, avg_len, n_docs, df, k1=1.2, b=0.75):
    idf = math.log(1 + (n_docs - df + 0.5) / (df + 0.5))
    return idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * length / avg_len))


# (extracted, truth, field_type, precision, recall, f1), computed by hand.
F1_CASES = [
    (["Acme Corp", "Beta LLC"], ["Acme Corp", "Gamma Inc"], "array", F(1, 2), F(1, 2), F(1, 2)),
    (["a"], ["a"], "string", F(1), F(1), F(1)),
    ("a", ["a"], "string", F(1), F(1), F(1)),
    (None, [], "string", F(1), F(1), F(1)),
    ([], [], "array", F(1), F(1), F(1)),
    (None, ["a"], "string", F(0), F(0), F(0)),
    (["x"], [], "string", F(0), F(0), F(0)),
    ("b", ["a"], "string", F(0), F(0), F(0)),
    (["a", "b", "c"], ["a"], "array", F(1, 3), F(1), F(1, 2)),
    (["a"], ["a", "b", "c"], "array", F(1), F(1, 3), F(1, 2)),
    (["a", "a"], ["a"], "array", F(1, 2), F(1), F(2, 3)),
    (["a"], ["a", "a"], "array", F(1), F(1, 2), F(2, 3)),
    (["a", "a"], ["a", "a"], "array", F(1), F(1), F(1)),
    (["a", "a", "b"], ["a", "b", "b"], "array", F(2, 3), F(2, 3), F(2, 3)),
    (["a", "b"], ["b", "a"], "array", F(1), F(1), F(1)),
    (["  Acme   CORP "], ["acme corp"], "array", F(1), F(1), F(1)),
    ("March 24, 2024", ["2024-03-24"], "date", F(1), F(1), F(1)),
    ("03/24/2024", ["24 March 2024"], "date", F(1), F(1), F(1)),
    ("March 25, 2024", ["2024-03-24"], "date", F(0), F(0), F(0)),
    ("$1,000.00", ["1000.00"], "number", F(1), F(1), F(1)),
    ("1,000", ["1000"], "integer", F(1), F(1), F(1)),
    (["a", "b", "c", "d"], ["a", "b", "e"], "array", F(1, 2), F(2, 3), F(4, 7)),
    (["a", None], ["a"], "array", F(1), F(1), F(1)),
    (["p", "q", "r", "s", "t"], ["p"], "array", F(1, 5), F(1), F(1, 3)),
    (["Yes"], ["yes"], "enum", F(1), F(1), F(1)),
]

# (list of per-pair f1, expected mean)
AGGREGATE_CASES = [
    ([F(1), F(1, 2)], F(3, 4)),
    ([F(1)] * 5, F(1)),
    ([F(0), F(2, 3), F(1, 3)], F(1, 3)),
]
