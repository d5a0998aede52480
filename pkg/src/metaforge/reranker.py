"""Learned chunk/field relevance model: features, training data, a small MLP and its trainer."""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .corpus import Chunk, Document, chunk_document, tokenize
from .evaluation import GroundTruth
from .ner import Recognizer, default_recognizer
from .selection import ScoreMatrix, compute_scores
from .template import Template

logger = logging.getLogger(__name__)

MODEL_FORMAT = "metaforge-reranker"
MODEL_VERSION = 1
HIDDEN = (64, 16)
MAX_POS_WEIGHT = 50.0

SCALAR_FEATURES = (
    "per_field_cos", "total_cos", "bm25", "per_field_ner", "total_ner",
    "chunk_position_fraction", "chunk_length_fraction",
    "pos_numeric", "pos_titlecase", "pos_allcaps", "pos_punct",
)


def feature_names(embed_dim: int) -> List[str]:
    return (list(SCALAR_FEATURES) + [f"field_emb_{i}" for i in range(embed_dim)]
            + [f"chunk_emb_{i}" for i in range(embed_dim)])


def pos_proxies(text: str) -> Tuple[float, float, float, float]:
    """Fractions of tokens that are numeric, TitleCase, ALLCAPS, punctuation."""
    toks = tokenize(text)
    if not toks:
        return 0.0, 0.0, 0.0, 0.0
    n = len(toks)
    numeric = sum(t.isdigit() for t in toks)
    title = sum(t[0].isupper() and (len(t) == 1 or t[1:].islower()) for t in toks if t[0].isalpha())
    caps = sum(len(t) > 1 and t.isupper() for t in toks)
    punct = sum(not t[0].isalnum() for t in toks)
    return numeric / n, title / n, caps / n, punct / n


def featurize(chunks: Sequence[Chunk], template: Template, embedder, chunk_tokens: int,
              scores: Optional[ScoreMatrix] = None,
              recognizer: Optional[Recognizer] = None) -> np.ndarray:
    """Feature tensor of shape (chunks, fields, len(feature_names(embedder.dim)))."""
    if scores is None:
        scores = compute_scores(chunks, template, embedder, recognizer or default_recognizer())
    n, nf = len(chunks), len(template)
    dim = embedder.dim
    field_vecs = embedder.embed_many([f.text for f in template.fields])
    chunk_vecs = embedder.embed_many([c.text for c in chunks])
    out = np.zeros((n, nf, len(SCALAR_FEATURES) + 2 * dim))
    for i, chunk in enumerate(chunks):
        position = chunk.index / (n - 1) if n > 1 else 0.0
        length = chunk.token_count / chunk_tokens
        pos = pos_proxies(chunk.text)
        for j in range(nf):
            out[i, j, :len(SCALAR_FEATURES)] = (
                scores.per_field_cos[i, j], scores.total_cos[i], scores.bm25[i, j],
                scores.per_field_ner[i, j], scores.total_ner[i], position, length, *pos,
            )
            out[i, j, len(SCALAR_FEATURES):len(SCALAR_FEATURES) + dim] = field_vecs[j]
            out[i, j, len(SCALAR_FEATURES) + dim:] = chunk_vecs[i]
    return out


@dataclass
class LabeledPair:
    doc_id: str
    chunk_index: int
    field: str
    features: np.ndarray
    label: int

    def to_json(self) -> str:
        return json.dumps({"doc_id": self.doc_id, "chunk_index": self.chunk_index,
                           "field": self.field, "label": self.label,
                           "features": self.features.tolist()})

    @classmethod
    def from_json(cls, line: str) -> "LabeledPair":
        d = json.loads(line)
        return cls(d["doc_id"], d["chunk_index"], d["field"], np.asarray(d["features"]), d["label"])


_WS = re.compile(r"\s+")


def match_norm(text: str) -> str:
    return _WS.sub(" ", text.casefold()).strip()


def chunk_contains(chunk_text: str, truth_values: Sequence[str]) -> bool:
    hay = match_norm(chunk_text)
    return any(match_norm(v) and match_norm(v) in hay for v in truth_values)


def build_training_set(docs: Sequence[Document], template: Template, truth: GroundTruth,
                       embedder, chunk_tokens: int, overlap_tokens: int,
                       recognizer: Optional[Recognizer] = None) -> List[LabeledPair]:
    """One labeled pair per (chunk, field); label 1 when a truth value occurs in the chunk."""
    pairs: List[LabeledPair] = []
    for doc in docs:
        if doc.id not in truth:
            logger.warning("document %s has no ground truth; skipped", doc.id)
            continue
        chunks = chunk_document(doc, chunk_tokens, overlap_tokens)
        if not chunks:
            continue
        feats = featurize(chunks, template, embedder, chunk_tokens, recognizer=recognizer)
        for i, chunk in enumerate(chunks):
            for j, spec in enumerate(template.fields):
                label = int(chunk_contains(chunk.text, truth[doc.id].get(spec.key, [])))
                pairs.append(LabeledPair(doc.id, chunk.index, spec.key, feats[i, j], label))
    return pairs


@dataclass
class Hyperparams:
    learning_rate: float = 0.005
    epochs: int = 60
    batch_size: int = 64
    seed: int = 0
    class_weight: Optional[str] = "balanced"
    l2: float = 1e-4

    def to_dict(self) -> dict:
        return asdict(self)


def _relu(x):
    return np.maximum(x, 0.0)


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


@dataclass
class RerankerModel:
    """input -> 64 ReLU -> 16 ReLU -> 1 sigmoid, with stored scalar-feature standardization."""

    params: List[np.ndarray]  # W1, b1, W2, b2, W3, b3 (W as out x in)
    mean: np.ndarray
    std: np.ndarray
    seed: int = 0
    feature_names: List[str] = field(default_factory=list)
    metadata: Dict[str, object] = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.params[0].shape[1]

    @property
    def n_scalar(self) -> int:
        return len(self.mean)

    def standardize(self, X: np.ndarray) -> np.ndarray:
        X = np.array(X, dtype=np.float64, copy=True)
        k = self.n_scalar
        X[..., :k] = (X[..., :k] - self.mean) / self.std
        return X

    def logits(self, Xs: np.ndarray, cache: bool = False):
        W1, b1, W2, b2, W3, b3 = self.params
        z1 = Xs @ W1.T + b1
        a1 = _relu(z1)
        z2 = a1 @ W2.T + b2
        a2 = _relu(z2)
        z3 = (a2 @ W3.T + b3)[..., 0]
        if cache:
            return z3, (Xs, z1, a1, z2, a2)
        return z3

    def predict(self, features) -> np.ndarray:
        """Relevance in (0, 1) for raw (unstandardized) feature rows."""
        X = np.asarray(features, dtype=np.float64)
        if X.shape[-1] != self.input_dim:
            raise ValueError(f"feature dimension {X.shape[-1]} does not match model input {self.input_dim}")
        return _sigmoid(self.logits(self.standardize(X)))

    def to_json(self) -> str:
        W1, b1, W2, b2, W3, b3 = self.params
        doc = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "seed": self.seed,
            "feature_order": list(self.feature_names),
            "normalization": {"n_scalar": self.n_scalar, "mean": self.mean.tolist(),
                              "std": self.std.tolist()},
            "layers": [
                {"shape": list(W.shape), "weights": W.ravel().tolist(), "bias": b.tolist(),
                 "activation": act}
                for W, b, act in ((W1, b1, "relu"), (W2, b2, "relu"), (W3, b3, "sigmoid"))
            ],
            "metadata": self.metadata,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RerankerModel":
        doc = json.loads(text)
        if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
            raise ValueError("not a supported reranker model file")
        params = []
        for layer in doc["layers"]:
            params.append(np.asarray(layer["weights"], dtype=np.float64).reshape(layer["shape"]))
            params.append(np.asarray(layer["bias"], dtype=np.float64))
        norm = doc["normalization"]
        return cls(params, np.asarray(norm["mean"]), np.asarray(norm["std"]), doc["seed"],
                   doc["feature_order"], doc.get("metadata", {}))


def init_model(input_dim: int, n_scalar: int, seed: int = 0, hidden=HIDDEN,
               feature_names_: Optional[List[str]] = None) -> RerankerModel:
    """He-initialized weights, zero biases, identity standardization."""
    rng = np.random.default_rng(seed)
    sizes = [input_dim, *hidden, 1]
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        params.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        params.append(np.zeros(fan_out))
    return RerankerModel(params, np.zeros(n_scalar), np.ones(n_scalar), seed,
                         list(feature_names_ or []))


def loss_and_grads(model: RerankerModel, Xs: np.ndarray, y: np.ndarray,
                   w: Optional[np.ndarray] = None, l2: float = 0.0):
    """Mean weighted binary cross-entropy (from logits) and its parameter gradients."""
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=np.float64)
    n = len(y)
    z, (x, z1, a1, z2, a2) = model.logits(Xs, cache=True)
    # softplus(z) - y*z, computed stably
    losses = np.maximum(z, 0) + np.log1p(np.exp(-np.abs(z))) - y * z
    loss = float(np.sum(w * losses) / n)
    W1, b1, W2, b2, W3, b3 = model.params
    dz3 = (w * (_sigmoid(z) - y) / n)[:, None]
    dW3 = dz3.T @ a2
    db3 = dz3.sum(axis=0)
    dz2 = (dz3 @ W3) * (z2 > 0)
    dW2 = dz2.T @ a1
    db2 = dz2.sum(axis=0)
    dz1 = (dz2 @ W2) * (z1 > 0)
    dW1 = dz1.T @ x
    db1 = dz1.sum(axis=0)
    grads = [dW1, db1, dW2, db2, dW3, db3]
    if l2:
        for i in (0, 2, 4):
            loss += 0.5 * l2 * float(np.sum(model.params[i] ** 2))
            grads[i] = grads[i] + l2 * model.params[i]
    return loss, grads


def class_weights(y: np.ndarray, mode: Optional[str]) -> np.ndarray:
    """Per-example weights: positives get min(#neg/#pos, 50) under ``balanced``."""
    w = np.ones(len(y))
    if mode == "balanced":
        pos = float(np.sum(y == 1))
        neg = float(np.sum(y == 0))
        w[y == 1] = min(neg / pos, MAX_POS_WEIGHT) if pos else 1.0
    elif mode not in (None, "none"):
        raise ValueError(f"unknown class_weight {mode!r}")
    return w


def fit(X: np.ndarray, y: np.ndarray, hp: Hyperparams = Hyperparams(), n_scalar: Optional[int] = None,
        names: Optional[List[str]] = None) -> RerankerModel:
    """Train from feature rows with mini-batch Adam; deterministic for a given seed and row order."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, d) with one label per row")
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain both classes")
    n_scalar = X.shape[1] if n_scalar is None else n_scalar
    model = init_model(X.shape[1], n_scalar, hp.seed, feature_names_=names)
    mean = X[:, :n_scalar].mean(axis=0)
    std = X[:, :n_scalar].std(axis=0)
    std[std < 1e-12] = 1.0
    model.mean, model.std = mean, std
    Xs = model.standardize(X)
    w = class_weights(y, hp.class_weight)

    rng = np.random.default_rng(hp.seed + 1)
    m = [np.zeros_like(p) for p in model.params]
    v = [np.zeros_like(p) for p in model.params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    for _ in range(hp.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), hp.batch_size):
            idx = order[start:start + hp.batch_size]
            _, grads = loss_and_grads(model, Xs[idx], y[idx], w[idx], hp.l2)
            step += 1
            for k, g in enumerate(grads):
                m[k] = beta1 * m[k] + (1 - beta1) * g
                v[k] = beta2 * v[k] + (1 - beta2) * g * g
                mhat = m[k] / (1 - beta1 ** step)
                vhat = v[k] / (1 - beta2 ** step)
                model.params[k] = model.params[k] - hp.learning_rate * mhat / (np.sqrt(vhat) + eps)
    final_loss, _ = loss_and_grads(model, Xs, y, w, hp.l2)
    model.metadata = {"final_loss": final_loss, "examples": int(len(y)),
                      "positives": int(np.sum(y == 1)), "hyperparams": hp.to_dict()}
    return model


def pairs_to_arrays(pairs: Sequence[LabeledPair]) -> Tuple[np.ndarray, np.ndarray]:
    X = np.vstack([p.features for p in pairs])
    y = np.array([p.label for p in pairs], dtype=np.float64)
    return X, y


def train(pairs: Sequence[LabeledPair], hp: Hyperparams = Hyperparams(),
          embed_dim: Optional[int] = None) -> RerankerModel:
    X, y = pairs_to_arrays(pairs)
    names = None
    if embed_dim is not None:
        names = feature_names(embed_dim)
        if len(names) != X.shape[1]:
            raise ValueError("embed_dim inconsistent with feature width")
    return fit(X, y, hp, n_scalar=len(SCALAR_FEATURES), names=names)


def gradient_check(model: RerankerModel, pairs, y: Optional[np.ndarray] = None,
                   epsilon: float = 1e-5, w: Optional[np.ndarray] = None) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    ``pairs`` is a list of LabeledPair, or a feature matrix with labels in ``y``.
    Relative error is |a - n| / max(|a| + |n|, 1e-8) over every parameter entry.
    """
    if y is None:
        X, y = pairs_to_arrays(pairs)
    else:
        X = np.asarray(pairs, dtype=np.float64)
    Xs = model.standardize(X)
    _, grads = loss_and_grads(model, Xs, y, w)
    worst = 0.0
    for p, g in zip(model.params, grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            lp, _ = loss_and_grads(model, Xs, y, w)
            flat[i] = orig - epsilon
            lm, _ = loss_and_grads(model, Xs, y, w)
            flat[i] = orig
            num = (lp - lm) / (2 * epsilon)
            rel = abs(gflat[i] - num) / max(abs(gflat[i]) + abs(num), 1e-8)
            worst = max(worst, rel)
    return worst


def auc(scores, labels) -> float:
    """Area under the ROC curve (Mann-Whitney statistic; ties count one half)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if not len(pos) or not len(neg):
        raise ValueError("AUC needs both classes")
    order = np.argsort(np.concatenate([pos, neg]), kind="mergesort")
    allv = np.concatenate([pos, neg])[order]
    ranks = np.empty(len(allv))
    i = 0
    while i < len(allv):
        j = i
        while j + 1 < len(allv) and allv[j + 1] == allv[i]:
            j += 1
        ranks[i:j + 1] = (i + j) / 2.0 + 1.0
        i = j + 1
    pos_ranks = ranks[np.isin(order, np.arange(len(pos)))]
    return float((pos_ranks.sum() - len(pos) * (len(pos) + 1) / 2.0) / (len(pos) * len(neg)))


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    return float(np.mean((scores >= threshold).astype(int) == labels))
