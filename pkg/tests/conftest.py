import json
import sys

import pytest

from metaforge.embed import HashingEmbedder
from metaforge.synthetic import synthetic_corpus, write_synthetic
from metaforge.template import parse_template

THREE_FIELD_TEMPLATE = {
    "fields": [
        {"key": "Parties", "prompt": "Who signed this contract, people or companies.",
         "type": "array", "ner_labels": ["PERSON", "ORG"]},
        {"key": "Effective Date", "prompt": "When the contract takes effect.", "type": "date",
         "ner_labels": ["DATE"]},
        {"key": "Most Favored Nation",
         "prompt": "Does a clause promise terms at least as good as any third party gets?",
         "type": "enum", "options": [{"key": "Yes"}, {"key": "No"}]},
    ]
}


@pytest.fixture
def three_field_template():
    return parse_template(json.dumps(THREE_FIELD_TEMPLATE))


@pytest.fixture(scope="session")
def embedder():
    return HashingEmbedder()


@pytest.fixture(scope="session")
def synthetic():
    """(docs, truth, template) for the 20-document seed-0 corpus."""
    return synthetic_corpus(20, 0)


@pytest.fixture
def synth_dir(tmp_path):
    """A written synthetic corpus; returns the config path."""
    return write_synthetic(tmp_path / "corpus", n_docs=6, seed=0)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
