import json
from pathlib import Path

import pytest

from metaforge.cli import main
from metaforge.cuad import convert_cuad, convert_cuad_file
from metaforge.evaluation import aggregate_f1, evaluate_documents, load_ground_truth
from metaforge.mocks import GroundedClient, IdentityJudge
from metaforge.pipeline import (ConfigError, RunConfig, load_results, run_eval, run_extract,
                                run_grade, run_report, run_train, split_documents, table_row)
from metaforge.synthetic import write_synthetic
from metaforge.template import load_template


def config_for(tmp_path, n_docs=3, **overrides):
    return RunConfig.load(write_synthetic(tmp_path / "c", n_docs=n_docs, seed=0, **overrides))


def tree(root):
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_extract_writes_one_result_per_document(tmp_path):
    cfg = config_for(tmp_path)
    summary = run_extract(cfg)
    assert summary.exit_code == 0
    out = Path(cfg.out)
    assert sorted(p.name for p in (out / "results").iterdir()) == [
        "doc000.json", "doc001.json", "doc002.json"]
    assert len(list((out / "contexts").iterdir())) == 3
    resolved = json.loads((out / "config.resolved.json").read_text())
    assert resolved["strategy"] == "ner_borda" and resolved["client_tag"] == "grounded-mock"
    assert resolved["template_resolved"]["fields"][0]["key"] == "Document Name"


def test_extract_is_byte_deterministic(tmp_path):
    cfg = config_for(tmp_path)
    run_extract(cfg)
    first = tree(cfg.out)
    cfg.out = str(tmp_path / "again")
    cfg.workers = 3
    run_extract(cfg)
    second = tree(cfg.out)
    # The resolved config differs only in its out path and worker count.
    first.pop("config.resolved.json")
    second.pop("config.resolved.json")
    assert first == second


def test_oracle_without_truth_fails_before_work(tmp_path):
    cfg = config_for(tmp_path, strategy="oracle")
    cfg.ground_truth = None
    cfg.out = str(tmp_path / "never")
    with pytest.raises(ConfigError, match="ground_truth"):
        run_extract(cfg)
    assert not Path(cfg.out).exists()


@pytest.mark.parametrize("change, needle", [
    ({"strategy": "reranker"}, "model_path"),
    ({"budget_tokens": 10}, "budget_tokens"),
    ({"overlap_tokens": 48}, "overlap_tokens"),
    ({"mode": "verbose"}, "mode"),
    ({"adopt_corrections": True}, "grading"),
    ({"borda_weights": [0, 0, 0, 0]}, "borda_weights"),
])
def test_config_validation(tmp_path, change, needle):
    cfg = config_for(tmp_path)
    for k, v in change.items():
        setattr(cfg, k, v)
    with pytest.raises(ConfigError, match=needle):
        cfg.validate()


def test_unknown_config_keys_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_dict({"corpus": "x", "colour": "red"})


def test_identity_grading_mirrors_results(tmp_path):
    cfg = config_for(tmp_path, grading=True)
    run_extract(cfg, judge=IdentityJudge())
    results = load_results(cfg.out)
    for doc_id, result in results.items():
        lines = (Path(cfg.out) / "grades" / f"{doc_id}.jsonl").read_text().splitlines()
        records = [json.loads(line) for line in lines]
        assert {r["field"]: r["corrected_value"] for r in records} == result.values
        assert {r["score"] for r in records} == {1.0}


def test_adopt_corrections_keeps_agent_values(tmp_path):
    cfg = config_for(tmp_path, grading=True, adopt_corrections=True, strategy="oracle")
    truth = load_ground_truth(cfg.ground_truth)
    run_extract(cfg, client=GroundedClient(truth, omit_first={"Parties"}))
    raws = [json.loads(p.read_text()) for p in sorted((Path(cfg.out) / "results").iterdir())]
    assert all("agent_values" in r for r in raws)
    types = {f.key: f.value_type for f in load_template(cfg.template).fields}
    agent = aggregate_f1(evaluate_documents({r["doc_id"]: r["agent_values"] for r in raws},
                                            truth, types))
    adopted = aggregate_f1(evaluate_documents({r["doc_id"]: r["values"] for r in raws},
                                              truth, types))
    # The grounded judge restores the withheld field wherever it is in context.
    assert adopted > agent
    assert run_eval(cfg.out, truth)["f1_exact"] == f"{adopted.numerator}/{adopted.denominator}"


def test_eval_perfect_and_rows(tmp_path):
    cfg = config_for(tmp_path, strategy="oracle")
    run_extract(cfg)
    truth = load_ground_truth(cfg.ground_truth)
    oracle = run_eval(cfg.out, truth)
    assert oracle["f1"] == 1.0 and oracle["f1_exact"] == "1/1"
    assert (Path(cfg.out) / "eval.jsonl").read_text().count("\n") == 3 * 8
    cfg.strategy, cfg.out = "baseline", str(tmp_path / "base")
    run_extract(cfg)
    base = run_eval(cfg.out, truth)
    rows = [table_row(oracle), table_row(base)]
    assert rows[0].startswith("oracle") and rows[1].startswith("baseline")
    assert all(r.count("|") == 3 for r in rows)


def test_eval_empty_intersection(tmp_path):
    cfg = config_for(tmp_path)
    run_extract(cfg)
    with pytest.raises(ValueError, match="no evaluable pairs"):
        run_eval(cfg.out, {"someone-else": {"Parties": ["x"]}})


def test_eval_lists_missing_truth(tmp_path):
    cfg = config_for(tmp_path)
    run_extract(cfg)
    truth = load_ground_truth(cfg.ground_truth)
    del truth["doc001"]
    summary = run_eval(cfg.out, truth)
    assert summary["missing_ground_truth"] == ["doc001"] and summary["documents"] == 2


def test_failed_document_sets_exit_code(tmp_path):
    from metaforge.llm.clients import LLMResponse, MockClient
    cfg = config_for(tmp_path)
    client = MockClient(handler=lambda r: LLMResponse("no json at all"))
    summary = run_extract(cfg, client=client)
    assert summary.exit_code == 1 and len(summary.failures) == 3
    assert json.loads((Path(cfg.out) / "failures.json").read_text())


def test_grade_and_report_commands(tmp_path):
    cfg = config_for(tmp_path)
    run_extract(cfg)
    reports = run_grade(cfg.out, IdentityJudge())
    assert set(reports) == {"doc000", "doc001", "doc002"}
    report = run_report(cfg.out)
    assert report.total_requests == 24
    assert (Path(cfg.out) / "report.csv").exists()
    assert set(report.quality_by_type.values()) == {1.0}


def test_split_documents():
    train, test = split_documents([f"d{i}" for i in range(40)], seed=0)
    assert (len(train), len(test)) == (4, 2)
    assert not set(train) & set(test)
    assert split_documents([f"d{i}" for i in range(40)], seed=0) == (train, test)
    assert split_documents(["a", "b"], 0) in ((["a"], ["b"]), (["b"], ["a"]))
    with pytest.raises(ValueError, match="at least 2"):
        split_documents(["only"], 0)


def test_train_then_rerank(tmp_path):
    cfg = config_for(tmp_path, n_docs=8)
    metrics = run_train(cfg, train_fraction=0.5, test_fraction=0.25, out_dir=tmp_path / "m1")
    assert metrics["test_auc"] >= 0.9
    run_train(cfg, train_fraction=0.5, test_fraction=0.25, out_dir=tmp_path / "m2")
    assert (tmp_path / "m1" / "model.json").read_bytes() == (tmp_path / "m2" / "model.json").read_bytes()
    cfg.strategy = "reranker"
    cfg.model_path = str(tmp_path / "m1" / "model.json")
    cfg.out = str(tmp_path / "rr")
    assert run_extract(cfg).exit_code == 0
    assert run_eval(cfg.out, load_ground_truth(cfg.ground_truth))["f1"] > 0.5


def test_train_single_document_split_error(tmp_path):
    cfg = config_for(tmp_path, n_docs=1)
    with pytest.raises(ValueError, match="at least 2"):
        run_train(cfg)


# CLI

def test_cli_end_to_end(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "s"), "--n-docs", "3"]) == 0
    config = str(tmp_path / "s" / "config.json")
    run = str(tmp_path / "run")
    assert main(["extract", "--config", config, "--strategy", "oracle", "--out", run,
                 "--mode", "cot", "--tool-use", "false", "--grading", "true"]) == 0
    assert main(["eval", "--run", run, "--truth", str(tmp_path / "s" / "truth.json")]) == 0
    assert "1.0000" in capsys.readouterr().out
    assert main(["report", "--run", run]) == 0
    assert main(["chunk", "--config", config, "--out", str(tmp_path / "ch")]) == 0
    assert (tmp_path / "ch" / "chunks.jsonl").exists()
    assert main(["select", "--config", config, "--out", str(tmp_path / "sel")]) == 0
    assert (tmp_path / "sel" / "scores" / "doc000.json").exists()
    assert main(["grade", "--config", config, "--run", run]) == 0
    result = json.loads((Path(run) / "results" / "doc000.json").read_text())
    assert result["thinking_trace"]


def test_cli_errors_exit_2(tmp_path, capsys):
    write_synthetic(tmp_path / "s", n_docs=1)
    config = str(tmp_path / "s" / "config.json")
    assert main(["train", "--config", config, "--out", str(tmp_path / "m")]) == 2
    assert "at least 2" in capsys.readouterr().err
    assert main(["extract", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["extract", "--config", config, "--strategy", "reranker"]) == 2


def test_cli_train(tmp_path, capsys):
    write_synthetic(tmp_path / "s", n_docs=6)
    config = str(tmp_path / "s" / "config.json")
    assert main(["train", "--config", config, "--out", str(tmp_path / "m"), "--epochs", "5",
                 "--train-fraction", "0.5", "--test-fraction", "0.2", "--save-pairs"]) == 0
    metrics = json.loads(capsys.readouterr().out)
    assert metrics["train_documents"] == 3 and metrics["test_documents"] == 1
    assert (tmp_path / "m" / "train_pairs.jsonl").exists()


CUAD_SAMPLE = {
    "data": [{
        "title": "ACME_SUPPLY AGREEMENT",
        "paragraphs": [{
            "context": "SUPPLY AGREEMENT\r\nbetween Acme Inc. and Beta LLC, governed by Ohio law.",
            "qas": [
                {"id": "ACME__Parties", "answers": [{"text": "Acme Inc."}, {"text": "Beta LLC"},
                                                    {"text": "Acme Inc."}]},
                {"id": "ACME__Governing Law", "answers": [{"text": "Ohio"}]},
                {"id": "ACME__Audit Rights", "answers": [{"text": "ignored"}]},
                {"id": "ACME__Effective Date", "answers": []},
            ],
        }],
    }],
}


def test_convert_cuad(tmp_path):
    docs, truth = convert_cuad(CUAD_SAMPLE)
    assert len(docs) == 1 and "\r" not in docs[0].text
    fields = truth[docs[0].id]
    assert fields["Parties"] == ["Acme Inc.", "Beta LLC"]
    assert fields["Governing Law"] == ["Ohio"]
    assert fields["Effective Date"] == [] and "Audit Rights" not in fields
    src = tmp_path / "cuad.json"
    src.write_text(json.dumps(CUAD_SAMPLE))
    assert main(["convert-cuad", "--input", str(src), "--out", str(tmp_path / "conv")]) == 0
    assert (tmp_path / "conv" / "template.json").exists()
    assert load_ground_truth(tmp_path / "conv" / "truth.json") == truth
    assert convert_cuad_file(src, tmp_path / "conv2").name == "manifest.json"
