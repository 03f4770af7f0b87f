"""Paraphrase candidate generation, dissimilarity ranking and surface realization."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .adapters import DEFAULT_TIMEOUT_S, EngineError, LineProcess
from .delex import DelexError, DelexSentence, SlotInventory, placeholder_label, relexicalize

log = logging.getLogger(__name__)


class ParaphraseEngine(Protocol):
    def generate(self, tokens: Sequence[str], n: int, index: int = 0) -> list[list[str]]:
        """Up to ``n`` candidate delexicalized token lists for ``tokens``."""


DEFAULT_WEIGHTS = (1.0, 1.0, 0.1)  # swap, drop, duplicate


class PerturbEngine:
    """Offline stand-in for a trained paraphraser: random local edits.

    Each candidate applies 1 to 3 edits drawn from adjacent swap, deletion of
    a non-placeholder token and duplication of a non-placeholder token, so
    the multiset of placeholders is always preserved. Randomness depends
    only on ``(seed, index)``.

    Duplication is weighted low by default. A repeated word lowers the
    Jaccard similarity to the source, so least-similar selection would
    otherwise favour stuttering candidates; it stays available as the only
    edit that applies to a one-word sentence.
    """

    OPS = ("swap", "drop", "duplicate")

    def __init__(self, seed: int = 0, weights=DEFAULT_WEIGHTS, max_edits: int = 3,
                 max_attempts_factor: int = 20):
        if len(weights) != 3 or min(weights) < 0 or sum(weights) <= 0:
            raise ValueError("weights must be three nonnegative numbers, not all zero")
        self.seed = seed
        self.weights = tuple(float(w) for w in weights)
        self.max_edits = max_edits
        self.max_attempts_factor = max_attempts_factor

    def _applicable(self, toks):
        content = [i for i, t in enumerate(toks) if placeholder_label(t) is None]
        ops = []
        if len(toks) >= 2:
            ops.append("swap")
        if content and len(toks) >= 2:
            ops.append("drop")
        if content:
            ops.append("duplicate")
        return ops, content

    def edit(self, toks: list, rng) -> list:
        ops, content = self._applicable(toks)
        if not ops:
            return toks
        w = np.array([self.weights[self.OPS.index(o)] for o in ops])
        if w.sum() == 0:
            return toks
        op = ops[int(rng.choice(len(ops), p=w / w.sum()))]
        toks = list(toks)
        if op == "swap":
            i = int(rng.integers(len(toks) - 1))
            toks[i], toks[i + 1] = toks[i + 1], toks[i]
        elif op == "drop":
            del toks[content[int(rng.integers(len(content)))]]
        else:
            i = content[int(rng.integers(len(content)))]
            toks.insert(i + 1, toks[i])
        return toks

    def generate(self, tokens, n, index=0):
        rng = np.random.default_rng([self.seed, index])
        source = list(tokens)
        seen = {tuple(source)}
        out = []
        for _ in range(self.max_attempts_factor * max(n, 1)):
            if len(out) >= n:
                break
            cand = source
            for _ in range(int(rng.integers(1, self.max_edits + 1))):
                cand = self.edit(cand, rng)
            key = tuple(cand)
            if key not in seen:
                seen.add(key)
                out.append(cand)
        return out


class ExternalParaphraseEngine:
    """Child-process paraphraser speaking the ``GEN``/``CAND``/``END`` line protocol.

    Request: ``GEN <n> <tokens joined by TAB>``. Response: zero or more
    ``CAND <tokens joined by TAB>`` lines followed by ``END``. A line
    starting with ``ERR`` aborts the request.
    """

    def __init__(self, command, timeout_s: float = DEFAULT_TIMEOUT_S):
        self.proc = LineProcess(command, timeout_s)

    def generate(self, tokens, n, index=0):
        if n <= 0:
            return []
        lines = self.proc.request(f"GEN {n} " + "\t".join(tokens),
                                  lambda s: s == "END" or s.startswith("ERR"))
        if lines[-1].startswith("ERR"):
            raise EngineError(f"paraphrase engine error: {lines[-1][3:].strip()}", self.proc.diagnostics)
        cands = []
        for line in lines[:-1]:
            head, _, body = line.partition(" ")
            if head == "CAND" and line.startswith("CAND\t"):
                body = line[5:]
            elif head != "CAND":
                raise EngineError(f"unexpected engine output {line!r}", self.proc.diagnostics)
            cands.append([t for t in body.split("\t") if t])
        return cands

    def close(self):
        self.proc.close()


def _violates_contract(source: Sequence[str], cand: Sequence[str]) -> str | None:
    allowed = set(source)
    for t in cand:
        if t not in allowed and placeholder_label(t) is None:
            return f"introduces token {t!r}"
    src_ph = [t for t in source if placeholder_label(t)]
    if src_ph and not any(t in src_ph for t in cand):
        return "drops every placeholder"
    return None


def generate_candidates(d: Sequence[str], engine: ParaphraseEngine, n: int, index: int = 0) -> list[list[str]]:
    """At most ``n`` distinct contract-respecting candidates, none equal to ``d``."""
    if n <= 0:
        return []
    if not d:
        raise ValueError("cannot paraphrase an empty sentence")
    raw = engine.generate(list(d), n, index=index)
    out, seen = [], {tuple(d)}
    for cand in raw:
        key = tuple(cand)
        if not cand or key in seen:
            continue
        why = _violates_contract(d, cand)
        if why:
            log.debug("dropping candidate %r: %s", cand, why)
            continue
        seen.add(key)
        out.append(list(cand))
        if len(out) == n:
            break
    return out


def similarity(a: Sequence[str], b: Sequence[str]) -> float:
    """Jaccard index of the two token multisets; two empty lists count as identical."""
    ca, cb = Counter(a), Counter(b)
    union = sum((ca | cb).values())
    if union == 0:
        return 1.0
    return sum((ca & cb).values()) / union


def rank_and_select(d, candidates, keep: int) -> list[list[str]]:
    """The ``keep`` candidates least similar to ``d``.

    Ties fall back to lexicographic token order, then to generation order.
    """
    order = sorted(range(len(candidates)),
                   key=lambda i: (similarity(d, candidates[i]), list(candidates[i]), i))
    return [list(candidates[i]) for i in order[:keep]]


def _label_counts(tokens) -> Counter:
    return Counter(lab for lab in map(placeholder_label, tokens) if lab)


def _prf(inter: int, n_gen: int, n_src: int) -> tuple[float, float, float]:
    if n_gen == 0 and n_src == 0:
        return 1.0, 1.0, 1.0
    p = inter / n_gen if n_gen else 0.0
    r = inter / n_src if n_src else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def slot_f1(generated, source) -> tuple[float, float, float]:
    """Placeholder-label precision/recall/F1 of one generated sentence against its source."""
    g, s = _label_counts(generated), _label_counts(source)
    return _prf(sum((g & s).values()), sum(g.values()), sum(s.values()))


def corpus_slot_f1(pairs) -> tuple[float, float, float]:
    """Micro-averaged slot scores over ``(generated, source)`` pairs."""
    inter = n_gen = n_src = 0
    for gen, src in pairs:
        g, s = _label_counts(gen), _label_counts(src)
        inter += sum((g & s).values())
        n_gen += sum(g.values())
        n_src += sum(s.values())
    return _prf(inter, n_gen, n_src)


@dataclass(frozen=True)
class AugmentConfig:
    candidates_per_sentence: int = 10
    keep_per_sentence: int = 1
    similarity: str = "jaccard"
    engine: str = "perturb"
    seed: int = 0

    def __post_init__(self):
        if self.keep_per_sentence > self.candidates_per_sentence:
            raise ValueError("keep_per_sentence must not exceed candidates_per_sentence")
        if self.keep_per_sentence < 0:
            raise ValueError("keep_per_sentence must be >= 0")
        if self.similarity != "jaccard":
            raise ValueError(f"unknown similarity metric {self.similarity!r}")


@dataclass
class AugmentResult:
    sentences: list = field(default_factory=list)       # surface token lists
    delex: list = field(default_factory=list)           # chosen delex candidates
    sources: list = field(default_factory=list)         # source index per output
    skipped: list = field(default_factory=list)         # source indices with no candidate
    slot_scores: tuple = (1.0, 1.0, 1.0)

    @property
    def texts(self) -> list[str]:
        return [" ".join(s) for s in self.sentences]


def augment_corpus(corpus: Sequence[DelexSentence], inv: SlotInventory, cfg: AugmentConfig,
                   engine: ParaphraseEngine | None = None, ids: Sequence[str] | None = None) -> AugmentResult:
    """Paraphrase, select and relexicalize every source sentence."""
    if engine is None:
        engine = PerturbEngine(cfg.seed)
    ids = list(ids) if ids is not None else [str(i) for i in range(len(corpus))]
    for i, ds in enumerate(corpus):
        for label in ds.placeholders:
            if label not in inv:
                raise DelexError(f"sentence {ids[i]}: inventory has no surfaces for {label!r}")
    res = AugmentResult()
    pairs = []
    for i, ds in enumerate(corpus):
        cands = generate_candidates(ds.delex_tokens, engine, cfg.candidates_per_sentence, index=i)
        if not cands:
            res.skipped.append(i)
            continue
        chosen = rank_and_select(ds.delex_tokens, cands, min(cfg.keep_per_sentence, len(cands)))
        for j, cand in enumerate(chosen):
            try:
                surface = relexicalize(cand, inv, seed=[cfg.seed, i, j])
            except DelexError as exc:
                raise DelexError(f"sentence {ids[i]}: {exc}") from None
            res.sentences.append(surface)
            res.delex.append(cand)
            res.sources.append(i)
            pairs.append((cand, ds.delex_tokens))
    res.slot_scores = corpus_slot_f1(pairs)
    if res.skipped:
        log.warning("%d source sentences yielded no candidate: %s", len(res.skipped),
                    ", ".join(ids[i] for i in res.skipped[:20]))
    log.info("generated %d synthetic sentences from %d sources", len(res.sentences), len(corpus))
    return res
