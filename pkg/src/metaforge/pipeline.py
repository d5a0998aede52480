"""Run configuration and orchestration of the select → extract → grade → evaluate stages."""

from __future__ import annotations

import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .corpus import Chunk, Document, chunk_document, load_manifest
from .embed import HashingEmbedder, RemoteEmbedder
from .evaluation import (FieldRecord, GroundTruth, aggregate_f1, evaluate_documents,
                         load_ground_truth, monitoring_report)
from .judge import GradeReport, grade
from .llm.clients import HttpClient, LLMClient, ReplayClient
from .llm.parsing import ExtractionResult
from .llm.prompts import MODES
from .llm.retry import ExtractionFailed, extract_with_retry
from .ner import Recognizer, default_recognizer
from .reranker import (Hyperparams, RerankerModel, accuracy, auc, build_training_set, featurize,
                       pairs_to_arrays, train)
from .selection import (BM25_B, BM25_K1, BordaWeights, ScoreMatrix, SelectedContext, borda_keys,
                        compute_scores, oracle_keys, pack_context, rank_by_key)
from .template import Template, label_template, load_template

logger = logging.getLogger(__name__)

STRATEGIES = ("baseline", "ner_borda", "reranker", "oracle")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Every effective parameter of a run. Loaded from JSON; paths resolve against the file."""

    corpus: str = ""
    template: str = ""
    ground_truth: Optional[str] = None
    strategy: str = "ner_borda"
    budget_tokens: int = 2048
    chunk_tokens: int = 512
    overlap_tokens: int = 64
    borda_weights: Tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    coverage_fraction: float = 0.5
    top_m: int = 5
    bm25_k1: float = BM25_K1
    bm25_b: float = BM25_B
    embedder: Dict[str, Any] = field(default_factory=lambda: {"kind": "hashing", "dim": 256})
    client: Dict[str, Any] = field(default_factory=lambda: {"kind": "http", "model": ""})
    judge: Dict[str, Any] = field(default_factory=lambda: {"kind": "http", "model": ""})
    mode: str = "plain"
    tool_use: bool = True
    max_retries: int = 0
    grading: bool = False
    adopt_corrections: bool = False
    model_path: Optional[str] = None
    out: str = "run"
    seed: int = 0
    workers: int = 1

    @classmethod
    def from_dict(cls, data: Mapping, base_dir: Optional[Path] = None) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**dict(data))
        cfg.borda_weights = tuple(float(w) for w in cfg.borda_weights)
        if base_dir is not None:
            for name in ("corpus", "template", "ground_truth", "model_path", "out"):
                value = getattr(cfg, name)
                if value and not Path(value).is_absolute():
                    setattr(cfg, name, str(base_dir / value))
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data, path.parent)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["borda_weights"] = list(self.borda_weights)
        return d

    def validate(self, need_client: bool = True) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if self.strategy == "oracle" and not self.ground_truth:
            raise ConfigError("strategy 'oracle' requires ground_truth")
        if self.strategy == "reranker" and not self.model_path:
            raise ConfigError("strategy 'reranker' requires model_path")
        if self.chunk_tokens < 1 or not 0 <= self.overlap_tokens < self.chunk_tokens:
            raise ConfigError("need chunk_tokens >= 1 and 0 <= overlap_tokens < chunk_tokens")
        if self.budget_tokens < self.chunk_tokens:
            raise ConfigError("budget_tokens must be at least chunk_tokens")
        if not 0 < self.coverage_fraction <= 1 or self.top_m < 1:
            raise ConfigError("coverage_fraction must be in (0, 1] and top_m positive")
        try:
            BordaWeights(*self.borda_weights)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad borda_weights: {exc}") from exc
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.adopt_corrections and not self.grading:
            raise ConfigError("adopt_corrections requires grading")
        if self.max_retries < 0 or self.workers < 1:
            raise ConfigError("max_retries must be >= 0 and workers >= 1")
        if not self.corpus or not self.template:
            raise ConfigError("corpus and template paths are required")


def make_embedder(spec: Mapping[str, Any]):
    kind = spec.get("kind", "hashing")
    if kind == "hashing":
        return HashingEmbedder(dim=int(spec.get("dim", 256)), ngram=int(spec.get("ngram", 3)))
    if kind == "remote":
        return RemoteEmbedder(endpoint=spec.get("endpoint"), dim=int(spec.get("dim", 256)),
                              batch_size=int(spec.get("batch_size", 32)),
                              max_concurrency=int(spec.get("max_concurrency", 4)))
    raise ConfigError(f"unknown embedder kind {kind!r}")


def make_client(spec: Mapping[str, Any], truth: Optional[GroundTruth] = None,
                judge: bool = False) -> LLMClient:
    """Client from its config entry: http, replay, or one of the offline mocks."""
    from .mocks import GroundedClient, GroundedJudge, IdentityJudge

    kind = spec.get("kind", "http")
    if kind == "http":
        return HttpClient(model=spec.get("model", ""), endpoint=spec.get("endpoint"),
                          max_retries=int(spec.get("max_retries", 3)),
                          max_in_flight=int(spec.get("max_in_flight", 4)))
    if kind == "replay":
        return ReplayClient(spec["fixtures"], tag=spec.get("tag", "replay"))
    if kind == "identity" and judge:
        return IdentityJudge()
    if kind == "grounded":
        if truth is None:
            raise ConfigError("the grounded mock needs ground_truth")
        return GroundedJudge(truth) if judge else GroundedClient(truth)
    raise ConfigError(f"unknown client kind {kind!r}")


def client_tag(client) -> str:
    return getattr(client, "tag", type(client).__name__)


@dataclass
class Resources:
    """Everything a run shares across documents (read-only once built)."""

    config: RunConfig
    documents: List[Document]
    template: Template
    embedder: Any
    recognizer: Recognizer
    truth: Optional[GroundTruth] = None
    model: Optional[RerankerModel] = None

    @classmethod
    def load(cls, config: RunConfig) -> "Resources":
        try:
            docs = load_manifest(config.corpus)
            template = load_template(config.template)
            truth = load_ground_truth(config.ground_truth) if config.ground_truth else None
            model = (RerankerModel.from_json(Path(config.model_path).read_text(encoding="utf-8"))
                     if config.model_path else None)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"unreadable input: {exc}") from exc
        embedder = make_embedder(config.embedder)
        template = label_template(template, embedder.embed)
        return cls(config, docs, template, embedder, default_recognizer(), truth, model)


def _mean_rank(keys: np.ndarray) -> List[int]:
    return rank_by_key(keys.mean(axis=1)) if keys.size else []


def select_context(doc: Document, res: Resources) -> Tuple[List[Chunk], ScoreMatrix, SelectedContext]:
    """Chunk a document, score it, rank per field under the configured strategy and pack."""
    cfg = res.config
    chunks = chunk_document(doc, cfg.chunk_tokens, cfg.overlap_tokens)
    scores = compute_scores(chunks, res.template, res.embedder, res.recognizer,
                            cfg.bm25_k1, cfg.bm25_b)
    keys_list = res.template.keys
    if cfg.strategy == "baseline":
        keys = scores.per_field_cos
    elif cfg.strategy == "ner_borda":
        weights = BordaWeights(*cfg.borda_weights)
        keys = np.column_stack([borda_keys(scores, weights, j) for j in range(len(keys_list))]) \
            if chunks else np.zeros((0, len(keys_list)))
    elif cfg.strategy == "reranker":
        if res.model is None:
            raise ConfigError("strategy 'reranker' requires a model")
        feats = featurize(chunks, res.template, res.embedder, cfg.chunk_tokens, scores)
        keys = res.model.predict(feats) if chunks else np.zeros((0, len(keys_list)))
    elif cfg.strategy == "oracle":
        if res.truth is None:
            raise ConfigError("strategy 'oracle' requires ground truth")
        truth = res.truth.get(doc.id, {})
        cols = []
        for j, spec in enumerate(res.template.fields):
            values = truth.get(spec.key, [])
            cols.append(oracle_keys(chunks, spec, values, res.embedder) if values
                        else scores.per_field_cos[:, j])
        keys = np.column_stack(cols) if chunks else np.zeros((0, len(keys_list)))
    else:
        raise ConfigError(f"unknown strategy {cfg.strategy!r}")
    rankings = {k: rank_by_key(keys[:, j]) for j, k in enumerate(keys_list)}
    context = pack_context(rankings, _mean_rank(keys), chunks, cfg.budget_tokens,
                           cfg.coverage_fraction, cfg.top_m,
                           enforce_coverage=cfg.strategy != "baseline", strategy=cfg.strategy)
    return chunks, scores, context


def dump_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                    encoding="utf-8")


@dataclass
class DocOutcome:
    doc_id: str
    context: SelectedContext
    result: Optional[ExtractionResult] = None
    grades: Optional[GradeReport] = None
    error: Optional[str] = None


@dataclass
class RunSummary:
    out_dir: Path
    outcomes: List[DocOutcome]

    @property
    def failures(self) -> List[str]:
        return [o.doc_id for o in self.outcomes if o.error]

    @property
    def exit_code(self) -> int:
        return 1 if self.failures else 0


def run_extract(config: RunConfig, client: Optional[LLMClient] = None,
                judge: Optional[LLMClient] = None) -> RunSummary:
    """Select, extract (with retries) and optionally grade every document.

    Writes ``config.resolved.json``, ``contexts/<doc>.json``, ``results/<doc>.json``
    and, with grading on, ``grades/<doc>.jsonl`` under ``config.out``. Documents are
    processed by a thread pool; files are written by the calling thread in
    document order.
    """
    config.validate()
    res = Resources.load(config)
    if client is None:
        client = make_client(config.client, res.truth)
    if config.grading and judge is None:
        judge = make_client(config.judge, res.truth, judge=True)
    out = Path(config.out)
    resolved = config.to_dict()
    resolved["client_tag"] = client_tag(client)
    resolved["judge_tag"] = client_tag(judge) if config.grading else None
    resolved["template_resolved"] = res.template.to_dict()
    dump_json(out / "config.resolved.json", resolved)

    def work(doc: Document) -> DocOutcome:
        _, _, context = select_context(doc, res)
        meta = {"doc_id": doc.id}
        try:
            result = extract_with_retry(client, context, res.template, config.mode,
                                        config.max_retries, config.tool_use,
                                        config.client.get("model", ""), meta, config.strategy)
        except (ExtractionFailed, RuntimeError, KeyError) as exc:
            logger.error("document %s failed: %s", doc.id, exc)
            return DocOutcome(doc.id, context, error=str(exc))
        grades = None
        if config.grading:
            try:
                grades = grade(judge, context, res.template, result,
                               config.judge.get("model", ""), meta)
            except (RuntimeError, KeyError, ValueError) as exc:
                logger.error("grading %s failed: %s", doc.id, exc)
                return DocOutcome(doc.id, context, result, error=f"grading: {exc}")
        return DocOutcome(doc.id, context, result, grades)

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        outcomes = list(pool.map(work, res.documents))

    for o in outcomes:
        dump_json(out / "contexts" / f"{o.doc_id}.json", o.context.to_dict())
        if o.result is not None:
            record = dict(o.result.to_dict(), doc_id=o.doc_id)
            if config.adopt_corrections and o.grades is not None:
                record["agent_values"] = record["values"]
                record["values"] = o.grades.corrected_values
            dump_json(out / "results" / f"{o.doc_id}.json", record)
        if o.grades is not None:
            path = out / "grades" / f"{o.doc_id}.jsonl"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n"
                                    for r in o.grades.records(o.doc_id)), encoding="utf-8")
    failures = {o.doc_id: o.error for o in outcomes if o.error}
    if failures:
        dump_json(out / "failures.json", failures)
    return RunSummary(out, outcomes)


def load_results(run_dir) -> Dict[str, ExtractionResult]:
    results = {}
    for path in sorted((Path(run_dir) / "results").glob("*.json")):
        d = json.loads(path.read_text(encoding="utf-8"))
        results[d.get("doc_id", path.stem)] = ExtractionResult.from_dict(d)
    return results


def load_grades(run_dir) -> Dict[str, GradeReport]:
    grades = {}
    for path in sorted((Path(run_dir) / "grades").glob("*.jsonl")):
        recs = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]
        grades[path.stem] = GradeReport.from_records(recs)
    return grades


def resolved_config(run_dir) -> dict:
    path = Path(run_dir) / "config.resolved.json"
    return json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}


def _template_for(run_dir, template: Optional[Template]) -> Template:
    if template is not None:
        return template
    from .template import parse_template
    cfg = resolved_config(run_dir)
    if "template_resolved" not in cfg:
        raise ConfigError("no template given and none recorded in the run directory")
    return parse_template(cfg["template_resolved"])


def run_eval(run_dir, truth: GroundTruth, template: Optional[Template] = None,
             out_dir=None) -> dict:
    """Score a run directory against ground truth; writes eval.jsonl and summary.json."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir
    template = _template_for(run_dir, template)
    results = {k: r.values for k, r in load_results(run_dir).items()}
    missing = sorted(set(results) - set(truth))
    if missing:
        logger.warning("no ground truth for: %s", ", ".join(missing))
    field_types = {f.key: f.value_type for f in template.fields}
    evals = evaluate_documents(results, truth, field_types)
    if not evals:
        raise ValueError("no evaluable pairs")
    cfg = resolved_config(run_dir)
    aggregate = aggregate_f1(evals)
    summary = {
        "strategy": cfg.get("strategy", ""),
        "budget_tokens": cfg.get("budget_tokens"),
        "client_tag": cfg.get("client_tag", ""),
        "documents": len({e.doc_id for e in evals}),
        "pairs": len(evals),
        "f1": float(aggregate),
        "f1_exact": f"{aggregate.numerator}/{aggregate.denominator}",
        "missing_ground_truth": missing,
        "per_field_f1": {k: float(aggregate_f1([e for e in evals if e.field == k]))
                         for k in field_types},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "eval.jsonl").write_text(
        "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in evals), encoding="utf-8")
    dump_json(out_dir / "summary.json", summary)
    return summary


def table_row(summary: Mapping) -> str:
    return (f"{summary['strategy']:<10} | {summary['budget_tokens']!s:>7} | "
            f"{summary['client_tag']:<16} | {summary['f1']:.4f}")


def run_grade(run_dir, judge: LLMClient, template: Optional[Template] = None,
              model: str = "") -> Dict[str, GradeReport]:
    """Grade an existing run from its stored contexts and results."""
    run_dir = Path(run_dir)
    template = _template_for(run_dir, template)
    reports = {}
    for doc_id, result in load_results(run_dir).items():
        ctx_raw = json.loads((run_dir / "contexts" / f"{doc_id}.json").read_text(encoding="utf-8"))
        chunks = [Chunk(c["doc_id"], c["index"], tuple(c["char_span"]), c["text"], c["token_count"])
                  for c in ctx_raw["chunks"]]
        context = SelectedContext(chunks, ctx_raw["total_tokens"], ctx_raw["per_field_coverage"],
                                  ctx_raw["budget"], ctx_raw.get("strategy", ""))
        report = grade(judge, context, template, result, model, {"doc_id": doc_id})
        path = run_dir / "grades" / f"{doc_id}.jsonl"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n"
                                for r in report.records(doc_id)), encoding="utf-8")
        reports[doc_id] = report
    return reports


def run_report(run_dir, template: Optional[Template] = None, out_dir=None):
    """Aggregate monitoring report (JSON + CSV) for a run directory."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir
    template = _template_for(run_dir, template)
    results = load_results(run_dir)
    grades = load_grades(run_dir)
    records = []
    for doc_id, result in results.items():
        report = grades.get(doc_id)
        for spec in template.fields:
            score = report.grades[spec.key].score if report and spec.key in report.grades else None
            records.append(FieldRecord(spec.ner_labels, result.values.get(spec.key) is not None,
                                       score))
    report = monitoring_report(records)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out_dir / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    return report


def split_documents(doc_ids: Sequence[str], seed: int, train_fraction: float = 0.10,
                    test_fraction: float = 0.05) -> Tuple[List[str], List[str]]:
    """Seeded document-level split; each side gets at least one document."""
    ids = sorted(doc_ids)
    if len(ids) < 2:
        raise ValueError("training needs at least 2 documents to split")
    random.Random(seed).shuffle(ids)
    n_test = max(1, round(test_fraction * len(ids)))
    n_train = max(1, round(train_fraction * len(ids)))
    n_train = min(n_train, len(ids) - n_test)
    return sorted(ids[n_test:n_test + n_train]), sorted(ids[:n_test])


def run_train(config: RunConfig, hyperparams: Optional[Hyperparams] = None, out_dir=None,
              train_fraction: float = 0.10, test_fraction: float = 0.05,
              save_pairs: bool = False) -> dict:
    """Train the chunk re-ranker on a document split; writes model.json and metrics.json."""
    if not config.ground_truth:
        raise ConfigError("training requires ground_truth")
    hp = hyperparams or Hyperparams(seed=config.seed)
    res = Resources.load(config)
    out = Path(out_dir or config.out)
    docs = {d.id: d for d in res.documents if d.id in res.truth}
    train_ids, test_ids = split_documents(list(docs), config.seed, train_fraction, test_fraction)

    def pairs_for(ids):
        return build_training_set([docs[i] for i in ids], res.template, res.truth, res.embedder,
                                  config.chunk_tokens, config.overlap_tokens, res.recognizer)

    train_pairs = pairs_for(train_ids)
    test_pairs = pairs_for(test_ids)
    model = train(train_pairs, hp, embed_dim=res.embedder.dim)
    model.metadata.update({"train_documents": train_ids, "test_documents": test_ids})
    X_test, y_test = pairs_to_arrays(test_pairs)
    scores = model.predict(X_test)
    metrics = {
        "train_documents": len(train_ids),
        "test_documents": len(test_ids),
        "train_pairs": len(train_pairs),
        "test_pairs": len(test_pairs),
        "final_train_loss": model.metadata["final_loss"],
        "test_auc": auc(scores, y_test) if len(set(y_test.tolist())) == 2 else None,
        "test_accuracy": accuracy(scores, y_test),
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "model.json").write_text(model.to_json(), encoding="utf-8")
    dump_json(out / "metrics.json", metrics)
    if save_pairs:
        (out / "train_pairs.jsonl").write_text(
            "".join(p.to_json() + "\n" for p in train_pairs), encoding="utf-8")
    return metrics
