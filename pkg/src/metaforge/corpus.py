"""Document loading, tokenization and sliding-window chunking."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

DEFAULT_CHUNK_TOKENS = 512
DEFAULT_OVERLAP_TOKENS = 64

# A token is a maximal alphanumeric run or one non-space, non-alphanumeric char.
_TOKEN_RE = re.compile(r"[^\W_]+|[^\w\s]|_")

FORMATS = ("plain", "markdown")


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    format: str = "plain"
    conversion_tag: str = ""

    def __post_init__(self):
        if not self.id:
            raise ValueError("document id must be non-empty")
        if self.format not in FORMATS:
            raise ValueError(f"unknown document format {self.format!r}")


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    index: int
    char_span: Tuple[int, int]
    text: str
    token_count: int

    @property
    def start(self) -> int:
        return self.char_span[0]

    @property
    def end(self) -> int:
        return self.char_span[1]

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "index": self.index,
            "char_span": list(self.char_span),
            "token_count": self.token_count,
            "text": self.text,
        }


def normalize_newlines(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


def token_spans(text: str) -> List[Tuple[int, int]]:
    return [m.span() for m in _TOKEN_RE.finditer(text)]


def tokenize(text: str) -> List[str]:
    return _TOKEN_RE.findall(text)


def count_tokens(text: str, estimate: bool = False) -> int:
    """Count tokens under the alphanumeric/punctuation rule.

    With ``estimate=True`` returns ``ceil(len(text) / 4)``, a rough stand-in for
    vendor tokenizers when matching external context budgets.
    """
    if estimate:
        return -(-len(text) // 4)
    return sum(1 for _ in _TOKEN_RE.finditer(text))


def chunk_document(
    doc: Document,
    chunk_tokens: int = DEFAULT_CHUNK_TOKENS,
    overlap_tokens: int = DEFAULT_OVERLAP_TOKENS,
) -> List[Chunk]:
    """Split a document into fixed-size token windows.

    Windows advance by ``chunk_tokens - overlap_tokens`` tokens. The first chunk
    starts at offset 0 and the last ends at ``len(doc.text)``; every other chunk
    ends where the next token after its window begins. Chunk spans therefore tile
    the text with no gaps, so stitching them reproduces the document exactly.
    """
    if chunk_tokens < 1:
        raise ValueError("chunk_tokens must be >= 1")
    if overlap_tokens < 0 or overlap_tokens >= chunk_tokens:
        raise ValueError("overlap_tokens must satisfy 0 <= overlap_tokens < chunk_tokens")

    text = doc.text
    spans = token_spans(text)
    total = len(spans)
    if total == 0:
        return []

    stride = chunk_tokens - overlap_tokens
    chunks: List[Chunk] = []
    start_tok = 0
    while True:
        end_tok = min(start_tok + chunk_tokens, total)
        last = end_tok == total
        c_start = 0 if start_tok == 0 else spans[start_tok][0]
        c_end = len(text) if last else spans[end_tok][0]
        chunks.append(
            Chunk(
                doc_id=doc.id,
                index=len(chunks),
                char_span=(c_start, c_end),
                text=text[c_start:c_end],
                token_count=end_tok - start_tok,
            )
        )
        if last:
            break
        start_tok += stride
    return chunks


def stitch_chunks(chunks: Sequence[Chunk]) -> str:
    """Rebuild the source text from chunks, dropping overlapping regions."""
    out: List[str] = []
    covered = 0
    for chunk in chunks:
        if chunk.end <= covered:
            continue
        skip = max(0, covered - chunk.start)
        out.append(chunk.text[skip:])
        covered = chunk.end
    return "".join(out)


def load_document(path, doc_id: Optional[str] = None, format: Optional[str] = None,
                  conversion_tag: str = "") -> Document:
    path = Path(path)
    raw = path.read_bytes().decode("utf-8")
    if format is None:
        format = "markdown" if path.suffix.lower() in (".md", ".markdown") else "plain"
    return Document(
        id=doc_id or path.stem,
        text=normalize_newlines(raw),
        format=format,
        conversion_tag=conversion_tag,
    )


def load_manifest(path) -> List[Document]:
    """Load every document listed in a JSON corpus manifest.

    Relative ``path`` entries resolve against the manifest's directory.
    """
    path = Path(path)
    entries = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(entries, list):
        raise ValueError("corpus manifest must be a JSON array")
    docs: List[Document] = []
    seen = set()
    for entry in entries:
        doc_id = entry.get("id")
        if not doc_id:
            raise ValueError(f"manifest entry without id: {entry!r}")
        if doc_id in seen:
            raise ValueError(f"duplicate document id {doc_id!r} in manifest")
        seen.add(doc_id)
        doc_path = Path(entry["path"])
        if not doc_path.is_absolute():
            doc_path = path.parent / doc_path
        docs.append(
            load_document(
                doc_path,
                doc_id=doc_id,
                format=entry.get("format"),
                conversion_tag=entry.get("conversion_tag", ""),
            )
        )
    return docs


def write_manifest(path, docs: Iterable[Document], text_dir="docs") -> None:
    """Write documents as UTF-8 files plus a manifest next to them."""
    path = Path(path)
    root = path.parent
    (root / text_dir).mkdir(parents=True, exist_ok=True)
    entries = []
    for doc in docs:
        suffix = ".md" if doc.format == "markdown" else ".txt"
        rel = Path(text_dir) / f"{doc.id}{suffix}"
        (root / rel).write_bytes(doc.text.encode("utf-8"))
        entries.append({
            "id": doc.id,
            "path": rel.as_posix(),
            "format": doc.format,
            "conversion_tag": doc.conversion_tag,
        })
    path.write_text(json.dumps(entries, indent=2) + "\n", encoding="utf-8")
