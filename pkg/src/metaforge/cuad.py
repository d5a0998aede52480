"""Convert CUAD's SQuAD-style clause annotations into a corpus manifest plus ground truth."""

from __future__ import annotations

import json
import logging
import re
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from .corpus import Document, normalize_newlines, write_manifest
from .evaluation import GroundTruth
from .synthetic import synthetic_template
from .template import serialize_template

logger = logging.getLogger(__name__)

CATEGORIES = (
    "Document Name", "Parties", "Agreement Date", "Effective Date", "Expiration Date",
    "Renewal Term", "Notice Period To Terminate Renewal", "Governing Law",
)


def _doc_id(title: str, taken: set) -> str:
    base = re.sub(r"[^A-Za-z0-9._-]+", "_", title).strip("_")[:80] or "doc"
    doc_id, n = base, 1
    while doc_id in taken:
        n += 1
        doc_id = f"{base}_{n}"
    taken.add(doc_id)
    return doc_id


def _category(qa: dict) -> str:
    qid = qa.get("id", "")
    return qid.rsplit("__", 1)[-1] if "__" in qid else ""


def convert_cuad(data: dict, categories: Sequence[str] = CATEGORIES) -> Tuple[List[Document], GroundTruth]:
    """Documents and per-category answer texts (deduplicated, in annotation order)."""
    docs: List[Document] = []
    truth: GroundTruth = {}
    taken: set = set()
    for entry in data.get("data", []):
        for para in entry.get("paragraphs", []):
            doc_id = _doc_id(entry.get("title", "doc"), taken)
            docs.append(Document(doc_id, normalize_newlines(para["context"]), "plain", "cuad"))
            fields: Dict[str, List[str]] = {c: [] for c in categories}
            for qa in para.get("qas", []):
                cat = _category(qa)
                if cat not in fields:
                    continue
                for ans in qa.get("answers", []):
                    text = ans.get("text", "").strip()
                    if text and text not in fields[cat]:
                        fields[cat].append(text)
            truth[doc_id] = fields
    if not docs:
        logger.warning("no documents found in CUAD input")
    return docs, truth


def convert_cuad_file(src, out_dir) -> Path:
    """Write manifest.json, docs/, truth.json and template.json under ``out_dir``."""
    out = Path(out_dir)
    data = json.loads(Path(src).read_text(encoding="utf-8"))
    docs, truth = convert_cuad(data)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.json", docs)
    (out / "truth.json").write_text(json.dumps(truth, indent=2, ensure_ascii=False) + "\n",
                                    encoding="utf-8")
    (out / "template.json").write_text(serialize_template(synthetic_template()) + "\n",
                                       encoding="utf-8")
    return out / "manifest.json"
