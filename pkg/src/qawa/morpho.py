"""Tokenization and greedy suffix-stripping morphological analysis."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources

_PUNCT_RE = re.compile(r"[^\w']+|(?<!\w)'+|'+(?!\w)")


@dataclass(frozen=True)
class SuffixTable:
    entries: tuple = ()  # (surface, dialect or None)
    min_stem_len: int = 3
    _by_length: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = tuple((s, d) for s, d in self.entries)
        seen = set()
        for surface, dialect in entries:
            if not surface:
                raise ValueError("suffix table contains an empty surface form")
            if (surface, dialect) in seen:
                raise ValueError(f"duplicate suffix entry {surface!r}")
            seen.add((surface, dialect))
        if self.min_stem_len < 0:
            raise ValueError("min_stem_len must be >= 0")
        object.__setattr__(self, "entries", entries)
        forms = sorted({s for s, _ in entries}, key=lambda s: (-len(s), s))
        object.__setattr__(self, "_by_length", tuple(forms))

    @classmethod
    def of(cls, *suffixes: str, min_stem_len: int = 3) -> "SuffixTable":
        return cls(tuple((s, None) for s in suffixes), min_stem_len)

    @property
    def forms(self) -> tuple:
        """Distinct surface forms, longest first."""
        return self._by_length


def load_suffix_table(path=None) -> SuffixTable:
    if path is None:
        text = resources.files("qawa").joinpath("data/suffixes.tsv").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    entries = []
    min_stem = 3
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("min_stem_len="):
            try:
                min_stem = int(line.split("=", 1)[1])
            except ValueError:
                raise ValueError(f"{path or 'suffixes.tsv'}:{lineno}: bad min_stem_len") from None
            continue
        surface, _, dialect = raw.partition("\t")
        entries.append((surface.strip(), dialect.strip() or None))
    return SuffixTable(tuple(entries), min_stem)


@dataclass(frozen=True)
class Analysis:
    token: str
    lemma: str
    suffixes: tuple = ()

    @property
    def segments(self) -> list[str]:
        return [self.lemma, *self.suffixes]

    def hyphenated(self) -> str:
        return "-".join(self.segments)


def tokenize(text: str, drop_punct: bool = True) -> list[str]:
    """Split on whitespace and punctuation, keeping word-internal apostrophes.

    With ``drop_punct=False`` each punctuation run is kept as its own token.
    """
    tokens = []
    for chunk in text.split():
        pos = 0
        for m in _PUNCT_RE.finditer(chunk):
            if m.start() > pos:
                tokens.append(chunk[pos:m.start()])
            if not drop_punct:
                tokens.append(m.group())
            pos = m.end()
        if pos < len(chunk):
            tokens.append(chunk[pos:])
    return tokens


def analyze(token: str, table: SuffixTable) -> Analysis:
    """Strip the longest matching suffix from the right until none fits.

    A suffix only fits if at least ``min_stem_len`` characters remain.
    """
    stem = token
    stripped = []
    while True:
        for s in table.forms:
            if stem.endswith(s) and len(stem) - len(s) >= table.min_stem_len:
                stripped.append(s)
                stem = stem[:-len(s)]
                break
        else:
            break
    return Analysis(token, stem, tuple(reversed(stripped)))


def segment_to_subwords(tokens, table: SuffixTable) -> list[str]:
    out = []
    for tok in tokens:
        out.extend(analyze(tok, table).segments)
    return out
