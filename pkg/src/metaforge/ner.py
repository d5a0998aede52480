"""Deterministic rule/gazetteer named-entity recognizer over the 18 OntoNotes labels.

Numeric entities (DATE, TIME, MONEY, ...) come from regular expressions; named
entities come from a gazetteer file plus a few capitalization heuristics. When
candidates overlap, the longest wins, then the leftmost, then the label listed
first in ``LABEL_PRIORITY``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .corpus import Chunk
from .template import LABELS

LABEL_PRIORITY = (
    "MONEY", "PERCENT", "TIME", "DATE", "QUANTITY", "LAW", "ORG", "PERSON", "FAC", "EVENT",
    "PRODUCT", "WORK_OF_ART", "GPE", "LOC", "NORP", "LANGUAGE", "ORDINAL", "CARDINAL",
)
_RANK = {label: i for i, label in enumerate(LABEL_PRIORITY)}

# Leading words trimmed from capitalization-based matches ("The Acme Corp" -> "Acme Corp").
_LEADING_STOP = {
    "The", "This", "That", "These", "Each", "Such", "Any", "All", "Between", "By", "And", "Or",
    "Whereas", "WHEREAS", "Now", "Therefore", "In", "On", "Of", "For", "To", "With", "Under",
    "Pursuant", "If", "Upon", "As", "At", "From", "THE", "BY", "AND", "Agreement",
}


@dataclass(frozen=True)
class EntitySpan:
    label: str
    char_span: Tuple[int, int]
    surface: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if self.char_span[1] <= self.char_span[0]:
            raise ValueError("entity span must be non-empty")

    @property
    def start(self) -> int:
        return self.char_span[0]

    @property
    def end(self) -> int:
        return self.char_span[1]


_NUMWORD = (
    r"(?:(?:twenty|thirty|forty|fifty|sixty|seventy|eighty|ninety)(?:-(?:one|two|three|four|five|six|seven|eight|nine))?"
    r"|one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve|thirteen|fourteen|fifteen"
    r"|sixteen|seventeen|eighteen|nineteen|hundred|thousand)"
)
_MONTH = (
    r"(?:Jan(?:uary)?|Feb(?:ruary)?|Mar(?:ch)?|Apr(?:il)?|May|June?|July?|Aug(?:ust)?"
    r"|Sep(?:t(?:ember)?)?|Oct(?:ober)?|Nov(?:ember)?|Dec(?:ember)?)\.?"
)
_DAY = r"(?:[12]\d|3[01]|0?[1-9])(?:st|nd|rd|th)?"
_YEAR = r"(?:1[89]\d\d|20\d\d)"
_NUM = r"\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?"
_ORDWORD = (
    r"(?:first|second|third|fourth|fifth|sixth|seventh|eighth|ninth|tenth|eleventh|twelfth"
    r"|twentieth|thirtieth|hundredth|last)"
)
_CAP = r"[A-Z][A-Za-z0-9&'\-]*"
_ORG_SUFFIX = (
    r"(?:Corporation|Corp\.?|Incorporated|Inc\.?|L\.L\.C\.|LLC|Ltd\.?|Limited|LLP|L\.P\.|LP|Co\.|Company"
    r"|GmbH|AG|S\.A\.|PLC|plc|N\.A\.|CORPORATION|CORP\.?|INC\.?|LTD\.?|COMPANY)"
)

# (label, pattern, flags, group); group selects the entity part of the match.
_RULES: List[Tuple[str, str, int, int]] = [
    ("MONEY", r"(?:US\$|[$€£])\s?(?:" + _NUM + r")(?:\s?(?:million|billion|thousand))?", 0, 0),
    ("MONEY", r"\b(?:USD|EUR|GBP|CAD)\s?(?:" + _NUM + r")\b", 0, 0),
    ("MONEY", r"\b(?:" + _NUM + r")(?:\s(?:million|billion|thousand))?\s(?:dollars|euros|pounds sterling|USD)\b", 0, 0),
    ("PERCENT", r"\b(?:" + _NUM + r")\s?(?:%|percent\b|per cent\b)", re.I, 0),
    ("PERCENT", r"\b" + _NUMWORD + r"(?:\s" + _NUMWORD + r")*\spercent\b", re.I, 0),
    ("TIME", r"\b(?:[01]?\d|2[0-3]):[0-5]\d(?:\s?[ap]\.?m\.?)?", re.I, 0),
    ("TIME", r"\b(?:1[0-2]|0?[1-9])\s?[ap]\.m\.", re.I, 0),
    ("TIME", r"\b(?:1[0-2]|0?[1-9])\s?[ap]m\b", re.I, 0),
    ("TIME", r"\b(?:noon|midnight)\b", re.I, 0),
    ("DATE", r"\b" + _MONTH + r"\s+" + _DAY + r",?\s+" + _YEAR + r"\b", 0, 0),
    ("DATE", r"\b(?:the\s+)?" + _DAY + r"\s+(?:day\s+of\s+)?" + _MONTH + r",?\s+" + _YEAR + r"\b", 0, 0),
    ("DATE", r"\b" + _MONTH + r",?\s+" + _YEAR + r"\b", 0, 0),
    ("DATE", r"\b" + _MONTH + r"\s+" + _DAY + r"\b(?!,?\s*\d)", 0, 0),
    ("DATE", r"\b" + _YEAR + r"-(?:0[1-9]|1[0-2])-(?:0[1-9]|[12]\d|3[01])\b", 0, 0),
    ("DATE", r"\b(?:0?[1-9]|1[0-2])/(?:0?[1-9]|[12]\d|3[01])/(?:\d{4}|\d{2})\b", 0, 0),
    ("DATE", r"\b(?:fiscal|calendar)\s+year\s+" + _YEAR + r"\b", re.I, 0),
    ("DATE", r"\b" + _YEAR + r"\b", 0, 0),
    ("DATE", r"\b(?:(?:" + _NUMWORD + r")(?:\s*\(\d+\))?|\d+|\(\d+\))\s+(?:(?:business|calendar|consecutive)\s+)?"
             r"(?:days?|weeks?|months?|years?)\b", re.I, 0),
    ("QUANTITY", r"\b(?:" + _NUM + r")\s?(?:square\s+(?:feet|foot|meters|metres)|sq\.?\s?ft\.?|acres?|miles?"
                 r"|kilometers?|km|kilograms?|kg|pounds|lbs?\.?|tons?|gallons?|liters?|litres?|meters?|metres?"
                 r"|feet|foot|inches|megawatts?|MW)\b", 0, 0),
    ("ORDINAL", r"\b" + _ORDWORD + r"\b", re.I, 0),
    ("ORDINAL", r"\b\d+(?:st|nd|rd|th)\b", 0, 0),
    ("CARDINAL", r"(?<![\w.,])(?:" + _NUM + r")(?![\w])", 0, 0),
    ("CARDINAL", r"\b" + _NUMWORD + r"(?:\s" + _NUMWORD + r")*\b", re.I, 0),
    ("ORG", r"\b(?:" + _CAP + r"(?:,)?\s+(?:(?:of|and|&|for|the)\s+)?){1,5}" + _ORG_SUFFIX + r"(?![A-Za-z])", 0, 0),
    ("LAW", r"\b(?:" + _CAP + r"\s+(?:(?:of|and|on|the)\s+)?){1,6}(?:Act|Code|Regulation|Statute)"
            r"(?:\s+of\s+" + _YEAR + r")?\b", 0, 0),
    ("LAW", r"\b(?:Section|Article|Rule)\s+\d+(?:\.\d+)*(?:\([a-z0-9]+\))*", 0, 0),
    ("FAC", r"\b(?:" + _CAP + r"\s+){1,4}(?:Airport|Bridge|Building|Tower|Stadium|Plaza|Highway|Centre|Mall)\b", 0, 0),
    ("PERSON", r"\b(?:Mr|Mrs|Ms|Dr|Prof)\.?\s+(" + r"[A-Z][a-z]+(?:\s+[A-Z][a-z]+)?" + r")\b", 0, 1),
]


def _compile_alternation(phrases: Iterable[str]) -> Optional[re.Pattern]:
    phrases = sorted(set(phrases), key=lambda p: (-len(p), p))
    if not phrases:
        return None
    body = "|".join(re.escape(p) for p in phrases)
    return re.compile(r"(?<![\w])(?:" + body + r")(?![\w])")


def load_gazetteer(path=None) -> Dict[str, List[str]]:
    """Read a ``label<TAB>phrase`` gazetteer; ``#`` lines and blanks are skipped.

    Besides the 18 labels, the pseudo-label FIRSTNAME lists given names that
    start a PERSON match when followed by a capitalized surname.
    """
    if path is None:
        text = resources.files("metaforge.data").joinpath("gazetteer.tsv").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    out: Dict[str, List[str]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            label, phrase = line.split("\t", 1)
        except ValueError:
            raise ValueError(f"gazetteer line {lineno}: expected label<TAB>phrase") from None
        if label not in LABELS and label != "FIRSTNAME":
            raise ValueError(f"gazetteer line {lineno}: unknown label {label!r}")
        out.setdefault(label, []).append(phrase.strip())
    return out


class Recognizer:
    def __init__(self, gazetteer: Optional[Dict[str, List[str]]] = None):
        gazetteer = load_gazetteer() if gazetteer is None else gazetteer
        self._rules = [(label, re.compile(p, f), g) for label, p, f, g in _RULES]
        self._gaz = []
        for label, phrases in sorted(gazetteer.items()):
            if label == "FIRSTNAME":
                continue
            pat = _compile_alternation(phrases)
            if pat is not None:
                self._gaz.append((label, pat))
        firstnames = gazetteer.get("FIRSTNAME", [])
        self._person = None
        if firstnames:
            names = "|".join(re.escape(n) for n in sorted(set(firstnames), key=lambda n: (-len(n), n)))
            self._person = re.compile(
                r"(?<![\w])(?:" + names + r")(?:\s+[A-Z]\.)?\s+[A-Z][a-z]+(?:-[A-Z][a-z]+)?(?![\w])")

    def _candidates(self, text: str) -> List[Tuple[int, int, str]]:
        cands = []
        for label, pat, group in self._rules:
            for m in pat.finditer(text):
                s, e = m.span(group)
                if label in ("ORG", "LAW", "FAC"):
                    s = _trim_leading(text, s, e)
                if e > s:
                    cands.append((s, e, label))
        for label, pat in self._gaz:
            for m in pat.finditer(text):
                cands.append((m.start(), m.end(), label))
        if self._person is not None:
            for m in self._person.finditer(text):
                cands.append((m.start(), m.end(), "PERSON"))
        return cands

    def recognize(self, text: str) -> List[EntitySpan]:
        if not text:
            return []
        cands = self._candidates(text)
        cands.sort(key=lambda c: (-(c[1] - c[0]), c[0], _RANK[c[2]]))
        taken = bytearray(len(text))
        chosen = []
        for s, e, label in cands:
            if 1 in taken[s:e]:
                continue
            taken[s:e] = b"\x01" * (e - s)
            chosen.append(EntitySpan(label, (s, e), text[s:e]))
        chosen.sort(key=lambda sp: sp.start)
        return chosen


def _trim_leading(text: str, start: int, end: int) -> int:
    while True:
        m = re.match(r"([A-Za-z]+)\s+", text[start:end])
        if not m or m.group(1) not in _LEADING_STOP:
            return start
        start += m.end()


_default: Optional[Recognizer] = None


def default_recognizer() -> Recognizer:
    global _default
    if _default is None:
        _default = Recognizer()
    return _default


def recognize(text: str) -> List[EntitySpan]:
    return default_recognizer().recognize(text)


def ner_count(chunk: Chunk, labels, recognizer: Optional[Recognizer] = None,
              spans: Optional[Sequence[EntitySpan]] = None) -> float:
    """Entities in the chunk whose label is in ``labels``, per chunk token.

    Pass precomputed ``spans`` to avoid rescanning the chunk.
    """
    labels = set(labels)
    if not labels:
        return 0.0
    if spans is None:
        spans = (recognizer or default_recognizer()).recognize(chunk.text)
    n = sum(1 for sp in spans if sp.label in labels)
    return n / max(1, chunk.token_count)
