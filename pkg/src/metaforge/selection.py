"""Chunk scoring, weighted Borda aggregation and coverage-constrained context packing."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .corpus import Chunk, tokenize
from .embed import cosine
from .ner import Recognizer, default_recognizer, ner_count
from .template import FieldSpec, Template

logger = logging.getLogger(__name__)

BM25_K1 = 1.2
BM25_B = 0.75
DEFAULT_COVERAGE_FRACTION = 0.5
DEFAULT_TOP_M = 5


class CorpusStats:
    """Document frequencies and lengths over one document's chunks (case-folded tokens)."""

    def __init__(self, chunks: Sequence[Chunk]):
        self.term_counts = [Counter(t.casefold() for t in tokenize(c.text)) for c in chunks]
        self.lengths = [sum(tc.values()) for tc in self.term_counts]
        self.n = len(chunks)
        self.avg_len = sum(self.lengths) / self.n if self.n else 0.0
        self.df: Counter = Counter()
        for tc in self.term_counts:
            self.df.update(tc.keys())

    def idf(self, term: str) -> float:
        df = self.df.get(term, 0)
        return math.log(1.0 + (self.n - df + 0.5) / (df + 0.5))


def bm25(query_tokens: Sequence[str], chunk: Chunk, stats: CorpusStats,
         k1: float = BM25_K1, b: float = BM25_B) -> float:
    """Okapi BM25 of ``chunk`` for the distinct case-folded query terms."""
    counts = stats.term_counts[chunk.index]
    length = stats.lengths[chunk.index]
    norm = 1.0 - b + b * (length / stats.avg_len if stats.avg_len else 0.0)
    score = 0.0
    for term in dict.fromkeys(t.casefold() for t in query_tokens):
        tf = counts.get(term, 0)
        if tf:
            score += stats.idf(term) * tf * (k1 + 1.0) / (tf + k1 * norm)
    return score


@dataclass
class ScoreMatrix:
    field_keys: List[str]
    per_field_cos: np.ndarray  # (chunks, fields)
    per_field_ner: np.ndarray  # (chunks, fields)
    total_cos: np.ndarray      # (chunks,)
    total_ner: np.ndarray      # (chunks,)
    bm25: np.ndarray           # (chunks, fields)

    @property
    def num_chunks(self) -> int:
        return len(self.total_cos)

    def to_dict(self) -> dict:
        return {
            "field_keys": list(self.field_keys),
            "per_field_cos": self.per_field_cos.tolist(),
            "per_field_ner": self.per_field_ner.tolist(),
            "total_cos": self.total_cos.tolist(),
            "total_ner": self.total_ner.tolist(),
            "bm25": self.bm25.tolist(),
        }


def compute_scores(chunks: Sequence[Chunk], template: Template, embedder,
                   recognizer: Optional[Recognizer] = None,
                   k1: float = BM25_K1, b: float = BM25_B) -> ScoreMatrix:
    recognizer = recognizer or default_recognizer()
    n, nf = len(chunks), len(template)
    field_vecs = embedder.embed_many([f.text for f in template.fields])
    total_vec = embedder.embed(template.text)
    chunk_vecs = embedder.embed_many([c.text for c in chunks]) if n else np.zeros((0, 0))
    union_labels = {lab for f in template.fields for lab in f.ner_labels}
    stats = CorpusStats(chunks)
    queries = [tokenize(f.text) for f in template.fields]

    per_field_cos = np.zeros((n, nf))
    per_field_ner = np.zeros((n, nf))
    total_cos = np.zeros(n)
    total_ner = np.zeros(n)
    bm = np.zeros((n, nf))
    for i, chunk in enumerate(chunks):
        spans = recognizer.recognize(chunk.text)
        total_cos[i] = cosine(total_vec, chunk_vecs[i])
        total_ner[i] = ner_count(chunk, union_labels, spans=spans)
        for j, f in enumerate(template.fields):
            per_field_cos[i, j] = cosine(field_vecs[j], chunk_vecs[i])
            per_field_ner[i, j] = ner_count(chunk, f.ner_labels, spans=spans)
            bm[i, j] = bm25(queries[j], chunk, stats, k1, b)
    return ScoreMatrix(template.keys, per_field_cos, per_field_ner, total_cos, total_ner, bm)


@dataclass(frozen=True)
class BordaWeights:
    w_pf_cos: float = 1.0
    w_pf_ner: float = 1.0
    w_total_cos: float = 1.0
    w_total_ner: float = 1.0

    def __post_init__(self):
        ws = self.as_tuple()
        if any(w < 0 for w in ws) or not any(w > 0 for w in ws):
            raise ValueError("Borda weights must be nonnegative with at least one positive")

    def as_tuple(self):
        return (self.w_pf_cos, self.w_pf_ner, self.w_total_cos, self.w_total_ner)


def borda_points(values) -> np.ndarray:
    """Borda points for a descending ranking of ``values``.

    The chunk at 0-based position p receives N - 1 - p points; tied chunks share
    the mean of the points their positions would get.
    """
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    order = sorted(range(n), key=lambda i: -values[i])
    points = np.zeros(n)
    pos = 0
    while pos < n:
        end = pos
        while end + 1 < n and values[order[end + 1]] == values[order[pos]]:
            end += 1
        # positions pos..end share points (n-1-pos + n-1-end) / 2
        shared = (n - 1) - (pos + end) / 2.0
        for k in range(pos, end + 1):
            points[order[k]] = shared
        pos = end + 1
    return points


def rank_by_key(keys) -> List[int]:
    """Indices sorted by key descending, ties by index ascending."""
    keys = np.asarray(keys, dtype=np.float64)
    return sorted(range(len(keys)), key=lambda i: (-keys[i], i))


def borda_keys(scores: ScoreMatrix, weights: BordaWeights, field_index: int) -> np.ndarray:
    families = (
        scores.per_field_cos[:, field_index],
        scores.per_field_ner[:, field_index],
        scores.total_cos,
        scores.total_ner,
    )
    key = np.zeros(scores.num_chunks)
    for w, fam in zip(weights.as_tuple(), families):
        if w:
            key = key + w * borda_points(fam)
    return key


def borda_rank(scores: ScoreMatrix, weights: BordaWeights, field) -> List[int]:
    """Weighted-Borda ranking of chunks for one field (a FieldSpec, key or column index)."""
    if isinstance(field, FieldSpec):
        field = field.key
    j = scores.field_keys.index(field) if isinstance(field, str) else int(field)
    return rank_by_key(borda_keys(scores, weights, j))


@dataclass
class SelectedContext:
    chunks: List[Chunk]
    total_tokens: int
    per_field_coverage: Dict[str, float]
    budget: int
    strategy: str = ""
    warnings: List[str] = field(default_factory=list)

    @property
    def indices(self) -> List[int]:
        return [c.index for c in self.chunks]

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "budget": self.budget,
            "total_tokens": self.total_tokens,
            "indices": self.indices,
            "per_field_coverage": dict(self.per_field_coverage),
            "warnings": list(self.warnings),
            "chunks": [c.to_dict() for c in self.chunks],
        }


def required_count(coverage_fraction: float, m: int) -> int:
    return math.ceil(round(coverage_fraction * m, 9))


def _min_cover(tops: Mapping[str, List[int]], required: Mapping[str, int],
               tokens: Mapping[int, int]) -> Optional[List[int]]:
    """Smallest-token chunk set giving each field its required top-m count.

    Ties on tokens prefer chunks ranked higher. Returns None when infeasible.
    """
    pool = sorted({c for top in tops.values() for c in top})
    if not pool:
        return []
    best_pos = {c: min(top.index(c) for top in tops.values() if c in top) for c in pool}
    scale = len(pool) * max(len(t) for t in tops.values()) + 1
    cost = np.array([tokens[c] + best_pos[c] / scale for c in pool])
    rows, lower = [], []
    for f, top in tops.items():
        rows.append([1.0 if c in top else 0.0 for c in pool])
        lower.append(required[f])
    res = milp(cost, constraints=LinearConstraint(np.array(rows), lb=np.array(lower), ub=np.inf),
               integrality=np.ones(len(pool)), bounds=Bounds(0, 1))
    if res.status != 0 or res.x is None:
        return None
    return [c for c, x in zip(pool, res.x) if x > 0.5]


def pack_context(field_rankings: Mapping[str, Sequence[int]], global_ranking: Sequence[int],
                 chunks: Sequence[Chunk], budget_tokens: int,
                 coverage_fraction: float = DEFAULT_COVERAGE_FRACTION,
                 top_m: int = DEFAULT_TOP_M, enforce_coverage: bool = True,
                 strategy: str = "") -> SelectedContext:
    """Pack chunks into a token budget while covering each field's top-ranked chunks.

    Phase 1 visits fields round-robin, each time adding the field's best
    unselected top-m chunk that still fits, until every field holds
    ``ceil(coverage_fraction * m)`` of its top-m chunks (m = min(top_m, #chunks)).
    If that greedy pass falls short, an exact minimum-token cover is tried and
    used when it fits the budget. Phase 2 fills what is left of the budget in
    ``global_ranking`` order. The result is in document order.
    """
    if budget_tokens < 1:
        raise ValueError("budget_tokens must be positive")
    if not 0 < coverage_fraction <= 1:
        raise ValueError("coverage_fraction must be in (0, 1]")
    if top_m < 1:
        raise ValueError("top_m must be positive")
    by_index = {c.index: c for c in chunks}
    tokens = {c.index: c.token_count for c in chunks}
    n = len(chunks)
    m = min(top_m, n)
    tops = {f: list(r[:m]) for f, r in field_rankings.items()}
    warnings: List[str] = []

    if n and budget_tokens < min(tokens.values()):
        warnings.append("budget smaller than the smallest chunk; nothing selected")
        logger.warning("budget %d below smallest chunk", budget_tokens)
        return SelectedContext([], 0, {f: 0.0 for f in field_rankings}, budget_tokens,
                               strategy, warnings)

    selected: List[int] = []
    chosen = set()
    remaining = budget_tokens

    def add(c):
        nonlocal remaining
        selected.append(c)
        chosen.add(c)
        remaining -= tokens[c]

    if enforce_coverage and m:
        required = {f: required_count(coverage_fraction, m) for f in tops}

        def missing(f):
            return required[f] - sum(1 for c in tops[f] if c in chosen)

        stuck = set()
        progress = True
        while progress:
            progress = False
            for f in field_rankings:
                if f in stuck or missing(f) <= 0:
                    continue
                pick = next((c for c in tops[f] if c not in chosen and tokens[c] <= remaining), None)
                if pick is None:
                    stuck.add(f)
                    continue
                add(pick)
                progress = True

        if any(missing(f) > 0 for f in tops):
            cover = _min_cover(tops, required, tokens)
            if cover is not None and sum(tokens[c] for c in cover) <= budget_tokens:
                selected.clear()
                chosen.clear()
                remaining = budget_tokens
                for c in cover:
                    add(c)
            else:
                warnings.append("coverage threshold not attainable within budget")

    for c in global_ranking:
        if c not in chosen and tokens[c] <= remaining:
            add(c)

    ordered = sorted(selected)
    coverage = {
        f: (sum(1 for c in top if c in chosen) / m if m else 1.0) for f, top in tops.items()
    }
    return SelectedContext(
        chunks=[by_index[c] for c in ordered],
        total_tokens=sum(tokens[c] for c in ordered),
        per_field_coverage=coverage,
        budget=budget_tokens,
        strategy=strategy,
        warnings=warnings,
    )


def oracle_text(spec: FieldSpec, truth_values: Sequence[str]) -> str:
    return f"{spec.text} " + " ".join(str(v) for v in truth_values)


def oracle_keys(chunks: Sequence[Chunk], spec: FieldSpec, truth_values: Sequence[str],
                embedder) -> np.ndarray:
    query = embedder.embed(oracle_text(spec, truth_values))
    return np.array([cosine(query, embedder.embed(c.text)) for c in chunks])


def oracle_rank(chunks: Sequence[Chunk], spec: FieldSpec, truth_values: Sequence[str],
                embedder) -> List[int]:
    """Rank chunks against the field prompt augmented with its ground-truth values."""
    if not truth_values:
        raise ValueError("oracle ranking needs at least one truth value")
    return rank_by_key(oracle_keys(chunks, spec, truth_values, embedder))
