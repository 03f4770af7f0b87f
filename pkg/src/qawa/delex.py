"""Semantic-frame tagging, BIO encoding and (de)lexicalization."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from .morpho import Analysis

log = logging.getLogger(__name__)

OUTSIDE = "O"


class DelexError(ValueError):
    pass


# --------------------------------------------------------------------------
# lexicon

@dataclass(frozen=True)
class FrameLexicon:
    labels: tuple
    native: dict = field(default_factory=dict)
    pivot_dict: dict = field(default_factory=dict)
    pivot_frames: dict = field(default_factory=dict)

    def __post_init__(self):
        declared = set(self.labels)
        for source, table in (("lexicon", self.native), ("pivot frames", self.pivot_frames)):
            bad = sorted({v for v in table.values() if v not in declared})
            if bad:
                raise DelexError(f"{source} uses undeclared frame labels: {', '.join(bad)}")
        object.__setattr__(self, "labels", tuple(self.labels))


def _read_text(path, default):
    if path is None:
        return resources.files("qawa").joinpath(f"data/{default}").read_text(encoding="utf-8"), default
    with open(path, encoding="utf-8") as f:
        return f.read(), str(path)


def _read_tsv(text, source):
    rows = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        parts = raw.split("\t")
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            raise DelexError(f"{source}:{lineno}: expected two tab-separated columns")
        rows[parts[0].strip()] = parts[1].strip()
    return rows


def load_lexicon(lexicon_path=None, bilingual_path=None, pivot_frames_path=None) -> FrameLexicon:
    """Load the frame lexicon plus the optional pivot-language fallback tables.

    The lexicon file starts with a ``labels: a,b,c`` header; with no paths
    the shipped Quechua fixtures are used for all three files.
    """
    text, source = _read_text(lexicon_path, "frames.tsv")
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or not lines[0].startswith("labels:"):
        raise DelexError(f"{source}: missing 'labels: ...' header")
    labels = tuple(x.strip() for x in lines[0][len("labels:"):].split(",") if x.strip())
    native = _read_tsv("\n".join(lines[1:]), source)
    use_default = lexicon_path is None
    pivot_dict = pivot_frames = {}
    if bilingual_path is not None or use_default:
        pivot_dict = _read_tsv(*_read_text(bilingual_path, "bilingual.tsv"))
    if pivot_frames_path is not None or use_default:
        pivot_frames = _read_tsv(*_read_text(pivot_frames_path, "pivot_frames.tsv"))
    return FrameLexicon(labels, native, pivot_dict, pivot_frames)


# --------------------------------------------------------------------------
# tagging

@dataclass(frozen=True)
class FrameTag:
    token: str
    label: str | None
    source: str | None = None  # which lookup matched, e.g. "native:lemma"


def _lookup(key: str, lex: FrameLexicon):
    if key in lex.native:
        return lex.native[key], "native"
    pivot = lex.pivot_dict.get(key)
    if pivot is not None and pivot in lex.pivot_frames:
        return lex.pivot_frames[pivot], "pivot"
    return None, None


def tag_frames(tokens: Sequence[str], analyses: Sequence[Analysis], lex: FrameLexicon) -> list[FrameTag]:
    """Look each token's lemma up natively, then through the pivot dictionary.

    When the lemma is found nowhere the surface token is tried as a second
    key through the same chain; ``FrameTag.source`` records which key hit.
    """
    if len(tokens) != len(analyses):
        raise DelexError("analyses must align with tokens")
    out = []
    for tok, ana in zip(tokens, analyses):
        label, how = _lookup(ana.lemma, lex)
        key = "lemma"
        if label is None and tok != ana.lemma:
            label, how = _lookup(tok, lex)
            key = "surface"
        out.append(FrameTag(tok, label, f"{how}:{key}" if label else None))
    return out


def select_frequent_frames(tagged_corpus: Iterable[Sequence[FrameTag]], top_k: int = 3) -> list[str]:
    """Most frequent labels over all tagged tokens; ties broken by label."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    counts = Counter(t.label for sent in tagged_corpus for t in sent if t.label)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [label for label, _ in ranked[:top_k]]


def bio_encode(tagged: Sequence[FrameTag], selected: Iterable[str]) -> list[str]:
    selected = set(selected)
    tags = []
    prev = None
    for t in tagged:
        label = t.label if t.label in selected else None
        if label is None:
            tags.append(OUTSIDE)
        elif label == prev:
            tags.append("I-" + label)
        else:
            tags.append("B-" + label)
        prev = label
    return tags


def is_valid_bio(tags: Sequence[str]) -> bool:
    prev = None
    for t in tags:
        if t == OUTSIDE:
            prev = None
            continue
        kind, sep, label = t.partition("-")
        if not sep or not label or kind not in ("B", "I"):
            return False
        if kind == "I" and prev != label:
            return False
        prev = label
    return True


def spans(tags: Sequence[str]) -> list[tuple[str, int, int]]:
    """Maximal labelled spans as (label, start, end) with ``end`` exclusive."""
    out = []
    for i, t in enumerate(tags):
        if t == OUTSIDE:
            continue
        kind, _, label = t.partition("-")
        if kind == "B":
            out.append([label, i, i + 1])
        else:
            out[-1][2] = i + 1
    return [tuple(s) for s in out]


# --------------------------------------------------------------------------
# delexicalization

def placeholder(label: str) -> str:
    return f"<{label}>"


def placeholder_label(token: str) -> str | None:
    if len(token) > 2 and token[0] == "<" and token[-1] == ">":
        return token[1:-1]
    return None


@dataclass(frozen=True)
class DelexSentence:
    original_tokens: tuple
    tags: tuple
    delex_tokens: tuple

    def __post_init__(self):
        for name in ("original_tokens", "tags", "delex_tokens"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if len(self.original_tokens) != len(self.tags):
            raise DelexError("tags must align with tokens")

    @property
    def placeholders(self) -> list[str]:
        return [lab for lab in map(placeholder_label, self.delex_tokens) if lab]

    def to_record(self) -> dict:
        return {"tokens": list(self.original_tokens), "tags": list(self.tags),
                "delex": list(self.delex_tokens)}

    @classmethod
    def from_record(cls, rec: dict) -> "DelexSentence":
        return cls(rec["tokens"], rec["tags"], rec["delex"])


class SlotInventory:
    """Surface strings observed for each frame label (a multiset per label)."""

    def __init__(self, items: dict | None = None):
        self._items = {}
        for label, surfaces in (items or {}).items():
            self._items[label] = list(surfaces)

    def add(self, label: str, surface: str) -> None:
        self._items.setdefault(label, []).append(surface)

    def update(self, other: "SlotInventory") -> None:
        """Multiset union in place."""
        for label, surfaces in other._items.items():
            self._items.setdefault(label, []).extend(surfaces)

    def merge(self, other: "SlotInventory") -> "SlotInventory":
        merged = SlotInventory(self._items)
        merged.update(other)
        return merged

    def surfaces(self, label: str) -> list[str]:
        return list(self._items.get(label, ()))

    @property
    def labels(self) -> list[str]:
        return sorted(self._items)

    def counter(self, label: str) -> Counter:
        return Counter(self._items.get(label, ()))

    def __len__(self):
        return sum(len(v) for v in self._items.values())

    def __contains__(self, label):
        return bool(self._items.get(label))

    def __eq__(self, other):
        if not isinstance(other, SlotInventory):
            return NotImplemented
        keys = set(self._items) | set(other._items)
        return all(self.counter(k) == other.counter(k) for k in keys)

    def __repr__(self):
        return f"SlotInventory({self._items!r})"

    def to_dict(self) -> dict:
        return {k: sorted(v) for k, v in sorted(self._items.items())}


def delexicalize(tokens: Sequence[str], tags: Sequence[str]) -> tuple[DelexSentence, SlotInventory]:
    if len(tokens) != len(tags):
        raise DelexError("tags must align with tokens")
    if not is_valid_bio(tags):
        raise DelexError(f"invalid BIO sequence: {' '.join(tags)}")
    contributions = SlotInventory()
    delex = []
    i = 0
    for label, start, end in spans(tags) + [(None, len(tokens), len(tokens))]:
        delex.extend(tokens[i:start])
        if label is not None:
            delex.append(placeholder(label))
            contributions.add(label, " ".join(tokens[start:end]))
        i = end
    return DelexSentence(tokens, tags, delex), contributions


def relexicalize(delex_tokens: Sequence[str], inv: SlotInventory, seed=None,
                 positional: bool = False) -> list[str]:
    """Replace every placeholder with a surface of the same label.

    By default each surface is drawn uniformly from the label's multiset with
    a generator seeded by ``seed``. With ``positional=True`` the n-th
    placeholder of a label takes the n-th stored surface of that label
    instead, which inverts :func:`delexicalize` given its own contributions.
    """
    rng = np.random.default_rng(seed)
    used = Counter()
    pools = {}
    out = []
    for tok in delex_tokens:
        label = placeholder_label(tok)
        if label is None:
            out.append(tok)
            continue
        if label not in inv:
            raise DelexError(f"no surfaces for frame label {label!r}")
        if positional:
            stored = inv.surfaces(label)
            surface = stored[used[label] % len(stored)]
            used[label] += 1
        else:
            if label not in pools:
                pools[label] = sorted(inv.surfaces(label))
            pool = pools[label]
            surface = pool[int(rng.integers(len(pool)))]
        out.extend(surface.split(" "))
    return out


def delexicalize_corpus(sentences: Sequence[Sequence[str]], analyses, lex: FrameLexicon,
                        top_k: int = 3):
    """Tag a tokenized corpus, keep the ``top_k`` frames, and delexicalize every sentence.

    Returns ``(delex sentences, inventory, selected labels, frame tags)``.
    """
    tagged = [tag_frames(toks, anas, lex) for toks, anas in zip(sentences, analyses)]
    selected = select_frequent_frames(tagged, top_k) if any(t.label for s in tagged for t in s) else []
    inventory = SlotInventory()
    delexed = []
    for toks, frame_tags in zip(sentences, tagged):
        ds, contrib = delexicalize(list(toks), bio_encode(frame_tags, selected))
        delexed.append(ds)
        inventory.update(contrib)
    log.info("delexicalized %d sentences; frames %s; %d inventory entries",
             len(delexed), ", ".join(selected) or "(none)", len(inventory))
    return delexed, inventory, selected, tagged


def write_delex_corpus(delexed: Iterable[DelexSentence], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ds in delexed:
            f.write(json.dumps(ds.to_record(), ensure_ascii=False) + "\n")


def read_delex_corpus(path) -> list[DelexSentence]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                out.append(DelexSentence.from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError, DelexError) as exc:
                raise DelexError(f"{path}:{lineno}: bad delex record ({exc})") from None
    return out
