"""Seeded generator of small contract-like documents with known field values.

Each document states its field values in one short clause per field that
uses the field's own wording. Around them sit many filler paragraphs that mix the
wording of every field but name no value, so a selector that packs by average
similarity to the whole template fills its budget with filler.
"""

from __future__ import annotations

import json
import random
from pathlib import Path
from typing import Dict, List, Tuple

from .corpus import Document, write_manifest
from .evaluation import GroundTruth
from .template import FieldSpec, Template, serialize_template

MONTHS = ("January", "February", "March", "April", "May", "June", "July", "August",
          "September", "October", "November", "December")
NUMBERS = {1: "one", 2: "two", 3: "three", 5: "five", 10: "ten", 30: "thirty",
           45: "forty-five", 60: "sixty", 90: "ninety", 120: "one hundred twenty"}
COMPANIES = ("Acme", "Borealis", "Cobalt", "Dunmore", "Everline", "Fairhaven", "Granite",
             "Halcyon", "Ironwood", "Juniper", "Kestrel", "Lumen", "Meridian", "Northgate",
             "Orchard", "Pinecrest", "Quarry", "Redwood", "Silverline", "Tidewater")
SUFFIXES = ("Inc.", "LLC", "Corporation", "Ltd.", "Holdings, Inc.")
STATES = ("Delaware", "New York", "California", "Texas", "Illinois", "Nevada", "Ohio", "Florida")
KINDS = ("DISTRIBUTION AGREEMENT", "SUPPLY AGREEMENT", "LICENSE AGREEMENT",
         "SERVICES AGREEMENT", "RESELLER AGREEMENT", "JOINT VENTURE AGREEMENT")

FIELDS = (
    ("Document Name", "The title of the agreement document name.", "string", ("WORK_OF_ART", "ORG")),
    ("Parties", "The names of the parties who signed the agreement.", "array", ("ORG", "PERSON")),
    ("Agreement Date", "The date the agreement was signed.", "date", ("DATE",)),
    ("Effective Date", "The date when the agreement becomes effective.", "date", ("DATE",)),
    ("Expiration Date", "The date when the agreement expires or the initial term ends.", "date",
     ("DATE",)),
    ("Renewal Term", "The length of each renewal term after the initial term expires.", "string",
     ("DATE", "CARDINAL")),
    ("Notice Period To Terminate Renewal", "The notice period required to terminate renewal.",
     "string", ("DATE", "CARDINAL")),
    ("Governing Law", "The state whose law governs the agreement.", "string", ("GPE", "LAW")),
)

# Tight-budget settings: room for about one chunk per field.
SYNTHETIC_CONFIG = {
    "corpus": "manifest.json",
    "template": "template.json",
    "ground_truth": "truth.json",
    "strategy": "ner_borda",
    "chunk_tokens": 48,
    "overlap_tokens": 24,
    "budget_tokens": 384,
    "top_m": 1,
    "coverage_fraction": 1.0,
    "client": {"kind": "grounded"},
    "judge": {"kind": "grounded"},
    "out": "run",
}

# Filler names every field once, in random order, without stating any value.
FILLER_TERMS = ("document name", "parties", "agreement date", "effective date", "expiration date",
                "renewal term", "notice period to terminate renewal", "governing law")
FILLER_FRAMES = (
    "The {0} are to be read together as set out in the schedule.",
    "Nothing in this section changes the {0}.",
    "The parties acknowledge that the {0} are described elsewhere in this agreement.",
    "Any question about the {0} shall be resolved in good faith.",
)


NEUTRAL = (
    "Confidential information disclosed under this contract remains the property of the "
    "disclosing side and shall be returned upon request.",
    "Neither side may assign its rights without prior consent, which shall not be "
    "unreasonably withheld.",
    "Invoices are payable within the customary period and disputed amounts shall be "
    "discussed in good faith.",
    "Each side shall maintain adequate insurance and furnish certificates upon reasonable "
    "request.",
    "Headings are for convenience only and do not affect interpretation of any provision.",
    "If any provision is held unenforceable, the remaining provisions continue in full force.",
    "All communications shall be in writing and delivered by hand, courier or registered mail.",
    "No waiver of any breach shall be deemed a waiver of any other or subsequent breach.",
    "The supplier warrants that all goods conform to the specifications and are free from "
    "defects in material and workmanship.",
    "Records relating to performance shall be kept for a reasonable period and made available "
    "for audit.",
)


def _filler(rng: random.Random) -> str:
    terms = list(FILLER_TERMS)
    rng.shuffle(terms)
    listed = ", the ".join(terms[:-1]) + " and the " + terms[-1]
    return rng.choice(FILLER_FRAMES).format(listed)


def _date(rng: random.Random, year: int) -> str:
    return f"{rng.choice(MONTHS)} {rng.randint(1, 28)}, {year}"


def _period(rng: random.Random, choices) -> str:
    n = rng.choice(choices)
    return f"{NUMBERS[n]} ({n}) days" if n >= 10 else f"{NUMBERS[n]} ({n}) years"


def synthetic_template() -> Template:
    return Template(tuple(FieldSpec(k, p, t, (), labels) for k, p, t, labels in FIELDS))


def _document(rng: random.Random, doc_id: str) -> Tuple[Document, Dict[str, List[str]]]:
    a, b = rng.sample(COMPANIES, 2)
    party_a = f"{a} {rng.choice(SUFFIXES)}"
    party_b = f"{b} {rng.choice(SUFFIXES)}"
    title = rng.choice(KINDS)
    year = rng.randint(2005, 2023)
    signed = _date(rng, year)
    effective = _date(rng, year + 1)
    expires = _date(rng, year + rng.randint(3, 6))
    renewal = _period(rng, (1, 2, 3, 5))
    notice = _period(rng, (30, 45, 60, 90, 120))
    state = rng.choice(STATES)
    law = f"State of {state}"

    # Each value appears twice so a chunk boundary cannot cut every copy.
    parties = f"{party_a} and {party_b}"
    clauses = [
        f"Document Name: {title.title()}. The title of the agreement document name is "
        f"{title.title()}.",
        f"Parties: {parties}. The names of the parties who signed the agreement are {parties}.",
        f"Agreement Date: {signed}. The date the agreement was signed is {signed}.",
        f"Effective Date: {effective}. The date when the agreement becomes effective is {effective}.",
        f"Expiration Date: {expires}. The date when the agreement expires or the initial term ends "
        f"is {expires}.",
        f"Renewal Term: {renewal}. The length of each renewal term after the initial term expires "
        f"is {renewal}.",
        f"Notice Period: {notice}. The notice period required to terminate renewal is {notice}.",
        f"Governing Law: the {law}. The state whose law governs the agreement is the {law}.",
    ]
    body = (clauses + [_filler(rng) for _ in range(rng.randint(8, 11))]
            + rng.sample(NEUTRAL, rng.randint(6, 8)))
    rng.shuffle(body)
    text = title + "\n\n" + "\n\n".join(body) + "\n"
    truth = {
        "Document Name": [title],
        "Parties": [party_a, party_b],
        "Agreement Date": [signed],
        "Effective Date": [effective],
        "Expiration Date": [expires],
        "Renewal Term": [renewal],
        "Notice Period To Terminate Renewal": [notice],
        "Governing Law": [law],
    }
    return Document(doc_id, text, "plain", "synthetic"), truth


def synthetic_corpus(n_docs: int = 20, seed: int = 0) -> Tuple[List[Document], GroundTruth, Template]:
    """``n_docs`` documents, their ground truth and the matching template."""
    rng = random.Random(seed)
    docs, truth = [], {}
    for i in range(n_docs):
        doc, t = _document(rng, f"doc{i:03d}")
        docs.append(doc)
        truth[doc.id] = t
    return docs, truth, synthetic_template()


def write_synthetic(out_dir, n_docs: int = 20, seed: int = 0, **config_overrides) -> Path:
    """Write a synthetic corpus with template, truth and a mock-client config; returns the config path."""
    out = Path(out_dir)
    docs, truth, template = synthetic_corpus(n_docs, seed)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.json", docs)
    (out / "template.json").write_text(serialize_template(template) + "\n", encoding="utf-8")
    (out / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n",
                                    encoding="utf-8")
    config = dict(SYNTHETIC_CONFIG, **config_overrides)
    (out / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    return out / "config.json"
