import pytest
from hypothesis import given, settings, strategies as st

from metaforge.corpus import Document, chunk_document
from metaforge.ner import EntitySpan, Recognizer, load_gazetteer, ner_count, recognize
from metaforge.template import LABELS


def spans(text):
    return [(s.label, s.surface) for s in recognize(text)]


def test_single_date():
    out = recognize("February 2nd, 2024")
    assert len(out) == 1 and out[0].label == "DATE"
    assert out[0].char_span == (0, 18)


def test_empty_text():
    assert recognize("") == []


def test_mixed_sentence():
    assert spans("Acme Corp shall pay $1,000 to John Smith.") == [
        ("ORG", "Acme Corp"), ("MONEY", "$1,000"), ("PERSON", "John Smith")]


@pytest.mark.parametrize("text, label, surface", [
    ("due within 30% of cost", "PERCENT", "30%"),
    ("governed by the laws of the State of Delaware", "GPE", "Delaware"),
    ("signed on 2024-03-24 by both", "DATE", "2024-03-24"),
    ("Halcyon Holdings, Inc. agrees", "ORG", "Halcyon Holdings, Inc."),
])
def test_rule_examples(text, label, surface):
    assert (label, surface) in spans(text)


def test_spans_sorted_and_non_overlapping():
    text = ("On March 1, 2024 Acme Corp paid $5,000 (five thousand dollars) to Beta LLC "
            "in New York, a 10% share, at 5:00 p.m.")
    out = recognize(text)
    assert [s.start for s in out] == sorted(s.start for s in out)
    for a, b in zip(out, out[1:]):
        assert a.end <= b.start
    assert all(s.label in LABELS for s in out)
    assert all(text[s.start:s.end] == s.surface for s in out)


def test_ner_count_examples():
    text = "From March 1, 2024 to April 2, 2024"
    chunk = chunk_document(Document("d", text), 100, 0)[0]
    assert chunk.token_count == 10
    assert ner_count(chunk, {"DATE"}) == 0.2
    assert ner_count(chunk, set()) == 0
    plain = chunk_document(Document("d", "nothing here at all"), 100, 0)[0]
    assert ner_count(plain, {"DATE", "ORG", "PERSON"}) == 0


def test_entity_span_validation():
    with pytest.raises(ValueError):
        EntitySpan("NOPE", (0, 1), "x")
    with pytest.raises(ValueError):
        EntitySpan("DATE", (3, 3), "")


def test_gazetteer_file(tmp_path):
    path = tmp_path / "g.tsv"
    path.write_text("# comment\nPRODUCT\tWidgetMaster 3000\nFIRSTNAME\tZelda\n", encoding="utf-8")
    gaz = load_gazetteer(path)
    rec = Recognizer(gaz)
    found = [(s.label, s.surface) for s in rec.recognize("the WidgetMaster 3000 by Zelda Quill")]
    assert ("PRODUCT", "WidgetMaster 3000") in found
    assert ("PERSON", "Zelda Quill") in found
    bad = tmp_path / "bad.tsv"
    bad.write_text("NOPE\tthing\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_gazetteer(bad)


SENTENCES = [
    "Acme Corp shall pay $1,000 to John Smith.",
    "The term starts on January 5, 2021.",
    "Nothing notable happens here.",
    "Beta LLC holds 25% of the shares.",
    "Notice must be given within sixty (60) days.",
]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(SENTENCES), min_size=1, max_size=4),
       st.lists(st.sampled_from(SENTENCES), min_size=1, max_size=4))
def test_prefix_consistency(left, right):
    a = " ".join(left) + " "
    b = " ".join(right)
    inside = [(s.label, s.char_span) for s in recognize(a + b) if s.end <= len(a)]
    assert inside == [(s.label, s.char_span) for s in recognize(a)]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(SENTENCES), min_size=1, max_size=5),
       st.sets(st.sampled_from(LABELS)), st.sets(st.sampled_from(LABELS)))
def test_ner_count_monotone_in_labels(parts, small, extra):
    chunk = chunk_document(Document("d", " ".join(parts)), 1000, 0)[0]
    assert ner_count(chunk, small | extra) >= ner_count(chunk, small)
