"""Speech-corpus manifests: loading, text normalization, splitting, statistics.

A manifest is a JSON-lines file where every line describes one transcribed
audio segment::

    {"id": "u1", "audio": "wav/u1.wav", "text": "wasikunapi kan",
     "speaker": "s01", "dialect": "Chanka", "gender": "F", "duration_s": 3.2}

Fields the toolkit does not know about are kept and written back unchanged.
"""

from __future__ import annotations

import json
import math
import os
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

DIALECTS = ("Chanka", "Collao", "Unknown")
GENDERS = ("F", "M", "Unknown")
SPLITS = ("Train", "Dev", "Test", "Unsplit")

_KNOWN_FIELDS = ("id", "audio", "text", "speaker", "dialect", "gender", "duration_s")

# Accept the common spellings found in crowdsourced metadata.
_DIALECT_ALIASES = {"chanka": "Chanka", "chanca": "Chanka", "collao": "Collao", "qullaw": "Collao"}
_GENDER_ALIASES = {"f": "F", "female": "F", "m": "M", "male": "M"}


class ManifestError(ValueError):
    """Raised for malformed or inconsistent manifest files."""


@dataclass(frozen=True)
class Utterance:
    id: str
    audio_ref: str
    transcript: str
    speaker_id: str = "unknown"
    dialect: str = "Unknown"
    gender: str = "Unknown"
    duration_s: float = 0.0
    extra: dict = field(default_factory=dict, compare=True, hash=False)

    def __post_init__(self):
        if not self.id:
            raise ManifestError("utterance id must be non-empty")
        if not self.transcript.strip():
            raise ManifestError(f"utterance {self.id!r} has an empty transcript")
        if not self.duration_s >= 0:
            raise ManifestError(f"utterance {self.id!r} has negative duration {self.duration_s}")
        if self.dialect not in DIALECTS:
            raise ManifestError(f"utterance {self.id!r}: unknown dialect {self.dialect!r}")
        if self.gender not in GENDERS:
            raise ManifestError(f"utterance {self.id!r}: unknown gender {self.gender!r}")

    def to_record(self) -> dict:
        rec = {
            "id": self.id,
            "audio": self.audio_ref,
            "text": self.transcript,
            "speaker": self.speaker_id,
            "dialect": self.dialect,
            "gender": self.gender,
            "duration_s": self.duration_s,
        }
        for k, v in self.extra.items():
            rec[k] = v
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "Utterance":
        try:
            uid = rec["id"]
            text = rec["text"]
        except KeyError as exc:
            raise ManifestError(f"missing required field {exc.args[0]!r}") from None
        if not isinstance(uid, str) or not isinstance(text, str):
            raise ManifestError("fields 'id' and 'text' must be strings")
        dialect = rec.get("dialect") or "Unknown"
        gender = rec.get("gender") or "Unknown"
        try:
            duration = float(rec.get("duration_s", 0.0))
        except (TypeError, ValueError):
            raise ManifestError(f"bad duration_s {rec.get('duration_s')!r}") from None
        return cls(
            id=uid,
            audio_ref=str(rec.get("audio", "")),
            transcript=text,
            speaker_id=str(rec.get("speaker", "unknown")),
            dialect=_DIALECT_ALIASES.get(str(dialect).lower(), str(dialect)),
            gender=_GENDER_ALIASES.get(str(gender).lower(), str(gender)),
            duration_s=duration,
            extra={k: v for k, v in rec.items() if k not in _KNOWN_FIELDS},
        )


@dataclass(frozen=True)
class Manifest:
    utterances: tuple = ()
    split: str = "Unsplit"

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))
        if self.split not in SPLITS:
            raise ManifestError(f"unknown split {self.split!r}")
        seen = {}
        for i, u in enumerate(self.utterances):
            if u.id in seen:
                raise ManifestError(f"duplicate id {u.id!r} at positions {seen[u.id]} and {i}")
            seen[u.id] = i

    def __len__(self):
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def __getitem__(self, i):
        return self.utterances[i]

    @property
    def ids(self) -> list[str]:
        return [u.id for u in self.utterances]

    @property
    def hours(self) -> float:
        return sum(u.duration_s for u in self.utterances) / 3600.0

    def with_split(self, split: str) -> "Manifest":
        return Manifest(self.utterances, split)


def load_manifest(path, split: str = "Unsplit") -> Manifest:
    """Read a JSON-lines manifest, keeping file order.

    Blank lines are ignored; line numbers in error messages are 1-based
    physical line numbers.
    """
    utts = []
    first_line = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: malformed record ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise ManifestError(f"{path}:{lineno}: record is not an object")
            try:
                utt = Utterance.from_record(rec)
            except ManifestError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
            if utt.id in first_line:
                raise ManifestError(
                    f"{path}: duplicate id {utt.id!r} on lines {first_line[utt.id]} and {lineno}"
                )
            first_line[utt.id] = lineno
            utts.append(utt)
    return Manifest(utts, split)


def save_manifest(m: Manifest, path) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for u in m:
            f.write(json.dumps(u.to_record(), ensure_ascii=False) + "\n")


def resolve_audio(u: Utterance, manifest_path) -> str:
    """Absolute path to an utterance's audio; relative refs are taken from the manifest's directory."""
    if os.path.isabs(u.audio_ref):
        return u.audio_ref
    return os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(manifest_path)), u.audio_ref))


# --------------------------------------------------------------------------
# normalization

_APOSTROPHES = "’‘ʼ´`ʹ′"
_DEFAULT_STRIP = set(".,;:!?¿¡\"“”«»()[]{}…–—/\\*&%$#@+=<>|~^_")


@dataclass(frozen=True)
class NormalizationRules:
    """Ordered regex rewrites plus the fixed case/apostrophe/punctuation steps.

    The steps run in this order: apostrophe canonicalization, case folding,
    punctuation stripping, the rewrite rules, whitespace collapse.
    """

    rules: tuple = ()
    lowercase: bool = True
    strip: frozenset = frozenset(_DEFAULT_STRIP)
    apostrophe: str = "'"

    def __post_init__(self):
        compiled = []
        for pat, repl in self.rules:
            compiled.append((re.compile(pat) if isinstance(pat, str) else pat, repl))
        object.__setattr__(self, "rules", tuple(compiled))
        object.__setattr__(self, "strip", frozenset(self.strip))
        object.__setattr__(
            self, "_strip_re",
            re.compile("[" + re.escape("".join(sorted(self.strip))) + "]") if self.strip else None,
        )


def _parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def load_rules(path=None) -> NormalizationRules:
    """Parse a rules file: ``pattern<TAB>replacement`` lines, ``#`` comments.

    Lines without a tab are directives: ``lowercase=true|false``,
    ``strip=<characters>`` (replaces the default set) and
    ``apostrophe=<char>``. With no path the shipped default table is used.
    """
    if path is None:
        text = resources.files("qawa").joinpath("data/normalization.tsv").read_text(encoding="utf-8")
        source = "<default normalization rules>"
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
        source = str(path)
    rules = []
    kwargs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "\t" in line:
            pat, repl = line.split("\t", 1)
            try:
                re.compile(pat)
            except re.error as exc:
                raise ValueError(f"{source}:{lineno}: bad pattern {pat!r}: {exc}") from None
            rules.append((pat, repl))
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"{source}:{lineno}: expected 'pattern<TAB>replacement' or 'key=value'")
        if key == "lowercase":
            kwargs["lowercase"] = _parse_bool(value)
        elif key == "strip":
            kwargs["strip"] = frozenset(value)
        elif key == "apostrophe":
            kwargs["apostrophe"] = value.strip() or "'"
        else:
            raise ValueError(f"{source}:{lineno}: unknown directive {key!r}")
    return NormalizationRules(tuple(rules), **kwargs)


def normalize_text(raw: str, rules: NormalizationRules) -> str:
    text = raw
    for ch in _APOSTROPHES:
        if ch != rules.apostrophe:
            text = text.replace(ch, rules.apostrophe)
    if rules.apostrophe != "'":
        text = text.replace("'", rules.apostrophe)
    if rules.lowercase:
        text = text.lower()
    if rules._strip_re is not None:
        text = rules._strip_re.sub(" ", text)
    for pat, repl in rules.rules:
        text = pat.sub(repl, text)
    return " ".join(text.split())


# --------------------------------------------------------------------------
# splitting

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_sizes(n: int, fractions: Sequence[float]) -> tuple[int, int, int]:
    """Dev and test sizes are the rounded fractions; train takes the remainder."""
    if len(fractions) != 3:
        raise ValueError("fractions must be a (train, dev, test) triple")
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be nonnegative and sum to 1, got {tuple(fractions)}")
    dev = min(n, _round_half_up(fractions[1] * n))
    test = min(n - dev, _round_half_up(fractions[2] * n))
    return n - dev - test, dev, test


def split_corpus(m: Manifest, fractions=(0.8, 0.1, 0.1), seed: int = 0,
                 by_speaker: bool = False) -> tuple[Manifest, Manifest, Manifest]:
    """Partition a manifest into train/dev/test.

    Utterance-level splitting (the default) hits the rounded sizes exactly.
    With ``by_speaker`` whole speakers are assigned, so sizes are only
    approximate: dev and test are filled speaker by speaker until they reach
    their target, the rest goes to train. Each output keeps input order.
    """
    n_train, n_dev, n_test = split_sizes(len(m), fractions)
    rng = np.random.default_rng(seed)
    assign = np.zeros(len(m), dtype=np.int8)
    if not by_speaker:
        perm = rng.permutation(len(m))
        assign[perm[n_train:n_train + n_dev]] = 1
        assign[perm[n_train + n_dev:]] = 2
    else:
        by_spk = defaultdict(list)
        for i, u in enumerate(m):
            by_spk[u.speaker_id].append(i)
        speakers = sorted(by_spk)
        order = rng.permutation(len(speakers))
        filled = {1: 0, 2: 0}
        targets = {1: n_dev, 2: n_test}
        for k in order:
            idx = by_spk[speakers[k]]
            for part in (1, 2):
                if filled[part] < targets[part]:
                    assign[idx] = part
                    filled[part] += len(idx)
                    break
    parts = []
    for part, name in enumerate(("Train", "Dev", "Test")):
        parts.append(Manifest([u for u, a in zip(m, assign) if a == part], name))
    return tuple(parts)


# --------------------------------------------------------------------------
# statistics

@dataclass
class CorpusStats:
    cells: dict  # (dialect, gender) -> (speakers, hours)

    @property
    def totals(self) -> tuple[int, float]:
        return (sum(s for s, _ in self.cells.values()), sum(h for _, h in self.cells.values()))

    def render(self) -> str:
        lines = [f"{'dialect':<10}{'gender':<9}{'speakers':>9}{'hours':>10}"]
        for (d, g), (s, h) in self.cells.items():
            lines.append(f"{d:<10}{g:<9}{s:>9d}{h:>10.2f}")
        s, h = self.totals
        lines.append(f"{'total':<19}{s:>9d}{h:>10.2f}")
        return "\n".join(lines) + "\n"


def corpus_stats(m: Manifest) -> CorpusStats:
    """Speakers and hours per (dialect, gender) cell.

    The four Chanka/Collao x F/M cells are always present; cells involving
    Unknown appear only when some utterance falls into them.
    """
    speakers = defaultdict(set)
    seconds = defaultdict(float)
    for u in m:
        key = (u.dialect, u.gender)
        speakers[key].add(u.speaker_id)
        seconds[key] += u.duration_s
    keys = [(d, g) for g in ("F", "M") for d in ("Chanka", "Collao")]
    keys += sorted(k for k in speakers if k not in keys)
    return CorpusStats({k: (len(speakers.get(k, ())), seconds.get(k, 0.0) / 3600.0) for k in keys})


def relabel(m: Manifest, suffix: str, split: str | None = None) -> Manifest:
    """Copy of a manifest with every id suffixed (fresh ids for duplicated data)."""
    return Manifest([replace(u, id=u.id + suffix) for u in m], split or m.split)


def concat(manifests: Iterable[Manifest], split: str = "Unsplit") -> Manifest:
    return Manifest([u for m in manifests for u in m], split)
