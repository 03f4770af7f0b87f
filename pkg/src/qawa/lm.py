"""Interpolated modified Kneser-Ney n-gram language models with ARPA I/O."""

from __future__ import annotations

import logging
import math
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

BOS, EOS, UNK = "<s>", "</s>", "<unk>"
NO_PROB = -99.0  # log10 "probability" of context-only entries such as <s>
MAX_ORDER = 6
FALLBACK_DISCOUNT = 0.75


class LmError(ValueError):
    pass


@dataclass(frozen=True)
class LmConfig:
    order: int = 4
    pruning_k: float = 0.04
    unk: str = UNK
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.order <= MAX_ORDER:
            raise LmError(f"order must be in 1..{MAX_ORDER}, got {self.order}")
        if not 0.0 <= self.pruning_k <= 1.0:
            raise LmError(f"pruning_k must be in [0, 1], got {self.pruning_k}")


def _split(texts: Iterable[str]) -> list[list[str]]:
    return [t.split() for t in texts]


# --------------------------------------------------------------------------
# singleton pruning

def hapax_types(texts: Iterable[str]) -> list[str]:
    counts = Counter(tok for t in texts for tok in t.split())
    return sorted(w for w, c in counts.items() if c == 1)


def apply_singleton_pruning(texts: Sequence[str], cfg: LmConfig) -> list[str]:
    """Map ``floor(K * #hapax)`` randomly chosen once-occurring words to ``cfg.unk``.

    Texts are re-joined with single spaces, so other whitespace is not
    preserved.
    """
    hapax = hapax_types(texts)
    k = math.floor(cfg.pruning_k * len(hapax) + 1e-9)
    if k == 0:
        return [" ".join(t.split()) for t in texts]
    rng = np.random.default_rng(cfg.seed)
    chosen = {hapax[i] for i in rng.choice(len(hapax), size=k, replace=False)}
    log.info("singleton pruning: %d of %d hapax types -> %s", k, len(hapax), cfg.unk)
    return [" ".join(cfg.unk if tok in chosen else tok for tok in t.split()) for t in texts]


# --------------------------------------------------------------------------
# counting

@dataclass
class NGramCounts:
    """Raw n-gram counts for orders 1..order over ``<s>``-padded sentences.

    ``counts[n-1]`` maps n-token tuples to occurrences. N-grams ending in
    ``<s>`` are never counted.
    """

    order: int
    counts: list = field(default_factory=list)

    def adjusted(self) -> list[dict]:
        """Kneser-Ney adjusted counts per order.

        The highest order and n-grams starting with ``<s>`` keep raw counts;
        every other lower-order n-gram is replaced by the number of distinct
        tokens seen immediately to its left.
        """
        out = [None] * self.order
        out[-1] = dict(self.counts[-1])
        for n in range(self.order - 1, 0, -1):
            cont = Counter(g[1:] for g in self.counts[n])
            out[n - 1] = {g: (c if g[0] == BOS else cont[g]) for g, c in self.counts[n - 1].items()}
        return out

    @property
    def vocab(self) -> set:
        return {g[0] for g in self.counts[0]} if self.counts else set()


def pad(tokens: Sequence[str], order: int) -> list[str]:
    return [BOS] * (order - 1) + list(tokens) + [EOS]


def count_ngrams(texts: Iterable[str], order: int) -> NGramCounts:
    if order < 1:
        raise LmError("order must be >= 1")
    counts = [Counter() for _ in range(order)]
    for toks in _split(texts):
        seq = pad(toks, order)
        for i in range(len(seq)):
            if seq[i] == BOS:
                continue
            for n in range(1, order + 1):
                if i - n + 1 < 0:
                    break
                counts[n - 1][tuple(seq[i - n + 1:i + 1])] += 1
    return NGramCounts(order, [dict(c) for c in counts])


# --------------------------------------------------------------------------
# estimation

def kn_discounts(adjusted: Iterable[int]) -> tuple[tuple[float, float, float], bool]:
    """Modified-KN discounts ``(D1, D2, D3+)`` from count-of-counts.

    Returns the discounts and whether the 0.75 fallback was taken.
    """
    coc = Counter(c for c in adjusted if c <= 4)
    n1, n2, n3, n4 = (coc[k] for k in (1, 2, 3, 4))
    if min(n1, n2, n3, n4) > 0:
        y = n1 / (n1 + 2 * n2)
        d = (1 - 2 * y * n2 / n1, 2 - 3 * y * n3 / n2, 3 - 4 * y * n4 / n3)
        if all(0 < dk <= k for k, dk in enumerate(d, start=1)):
            return d, False
    return (FALLBACK_DISCOUNT,) * 3, True


def _discount(c: int, d) -> float:
    return d[min(c, 3) - 1]


class KNModel:
    """A back-off n-gram model stored as ARPA-style log10 entries.

    ``entries[n-1]`` maps n-token tuples to ``(log10 p, log10 backoff)``.
    Missing n-grams back off through the context's weight, so queries for
    any context and any token are well defined; tokens outside the
    vocabulary are scored as ``<unk>``.
    """

    def __init__(self, entries: list, unk: str = UNK, discounts=None):
        self.entries = [dict(e) for e in entries]
        self.order = len(self.entries)
        self.unk = unk
        self.discounts = discounts
        if not self.entries or not self.entries[0]:
            raise LmError("model has no unigrams")
        self.vocab = frozenset(g[0] for g in self.entries[0])
        if unk not in self.vocab:
            raise LmError(f"model lacks the unknown-word entry {unk}")

    def map_token(self, w: str) -> str:
        return w if w in self.vocab else self.unk

    def logprob(self, word: str, context: Sequence[str] = ()) -> float:
        """log10 p(word | context); only the last ``order - 1`` context tokens matter."""
        word = self.map_token(word)
        ctx = tuple(self.map_token(w) for w in context)[max(0, len(context) - self.order + 1):]
        bow = 0.0
        while True:
            hit = self.entries[len(ctx)].get(ctx + (word,))
            if hit is not None and hit[0] > NO_PROB:
                return bow + hit[0]
            if not ctx:
                raise LmError(f"no probability for {word!r}")
            h = self.entries[len(ctx) - 1].get(ctx)
            if h is not None:
                bow += h[1]
            ctx = ctx[1:]

    def prob(self, word: str, context: Sequence[str] = ()) -> float:
        return 10.0 ** self.logprob(word, context)

    def score_sentence(self, tokens: Sequence[str]) -> list[float]:
        seq = pad(tokens, self.order)
        return [self.logprob(seq[i], seq[max(0, i - self.order + 1):i])
                for i in range(self.order - 1, len(seq))]

    def __eq__(self, other):
        return isinstance(other, KNModel) and self.entries == other.entries and self.unk == other.unk


def estimate_modified_kn(counts: NGramCounts, cfg: LmConfig | None = None) -> KNModel:
    """Interpolated modified Kneser-Ney, written out as a back-off model.

    For an n-gram ``h w`` with adjusted count ``c`` the interpolated estimate is

        p(w|h) = (c - D(c)) / sum_v c(h v) + gamma(h) * p(w|h[1:])
        gamma(h) = (D1 N1(h) + D2 N2(h) + D3 N3+(h)) / sum_v c(h v)

    with per-order discounts from :func:`kn_discounts`. The unigram level
    interpolates with the uniform distribution over the vocabulary plus
    ``</s>`` and ``<unk>``. Because ``gamma(h)`` is exactly the mass an
    unseen continuation receives, it is stored as the back-off weight of ``h``.
    """
    cfg = cfg or LmConfig(order=counts.order)
    unk = cfg.unk
    if not counts.counts or not counts.counts[0]:
        raise LmError("cannot estimate a model from an empty vocabulary")
    order = counts.order
    adj = counts.adjusted()
    discounts = []
    for n in range(order):
        d, fell_back = kn_discounts(adj[n].values())
        if fell_back:
            log.info("order %d: degenerate count-of-counts, using discount %.2f", n + 1, FALLBACK_DISCOUNT)
        discounts.append(d)

    # per-context totals and N1/N2/N3+ for the back-off weights
    stats = []
    for n in range(order):
        total = defaultdict(int)
        gamma_num = defaultdict(float)
        for g, c in adj[n].items():
            total[g[:-1]] += c
            gamma_num[g[:-1]] += _discount(c, discounts[n])
        stats.append((total, gamma_num))

    vocab = sorted(counts.vocab | {EOS, unk})
    uniform = 1.0 / len(vocab)
    probs = [dict() for _ in range(order)]
    total, gnum = stats[0]
    gamma0 = gnum[()] / total[()]
    for w in vocab:
        c = adj[0].get((w,), 0)
        probs[0][(w,)] = (max(c - _discount(c, discounts[0]), 0.0) if c else 0.0) / total[()] + gamma0 * uniform
    for n in range(1, order):
        total, gnum = stats[n]
        lower = probs[n - 1]
        for g, c in adj[n].items():
            h = g[:-1]
            gamma = gnum[h] / total[h]
            probs[n][g] = (c - _discount(c, discounts[n])) / total[h] + gamma * lower[g[1:]]

    entries = [dict() for _ in range(order)]
    for n in range(order):
        for g, p in probs[n].items():
            entries[n][g] = (math.log10(p), 0.0)
    # back-off weights, adding context-only entries (the <s> runs) where needed
    for n in range(1, order):
        total, gnum = stats[n]
        for h in total:
            bow = math.log10(gnum[h] / total[h])
            lp = entries[n - 1][h][0] if h in entries[n - 1] else NO_PROB
            entries[n - 1][h] = (lp, bow)
    return KNModel(entries, unk, discounts)


def train(texts: Sequence[str], cfg: LmConfig = LmConfig(), prune: bool = True) -> KNModel:
    """Prune (optionally), count and estimate in one go."""
    if prune:
        texts = apply_singleton_pruning(texts, cfg)
    return estimate_modified_kn(count_ngrams(texts, cfg.order), cfg)


# --------------------------------------------------------------------------
# scoring

@dataclass(frozen=True)
class PerplexityResult:
    perplexity: float
    log10_prob: float
    n_tokens: int  # scored tokens, including </s>
    n_oov: int     # tokens scored as <unk>
    n_sentences: int


def perplexity(model: KNModel, texts: Sequence[str]) -> PerplexityResult:
    """``10 ** (-(sum log10 p) / N)`` with N counting words and ``</s>``, not ``<s>``."""
    total, n, oov, sents = 0.0, 0, 0, 0
    for toks in _split(texts):
        if not toks:
            continue
        sents += 1
        oov += sum(1 for w in toks if w not in model.vocab or w == model.unk)
        scores = model.score_sentence(toks)
        total += sum(scores)
        n += len(scores)
    if n == 0:
        raise LmError("cannot compute perplexity of empty text")
    return PerplexityResult(10.0 ** (-total / n), total, n, oov, sents)


# --------------------------------------------------------------------------
# ARPA

def _fmt(x: float) -> str:
    return f"{x:.7g}"


def export_arpa(model: KNModel, path) -> None:
    """Write the model in ARPA text form.

    Entries are sorted by token sequence; a back-off weight column is written
    for every entry that is the context of some higher-order entry.
    """
    contexts = [set() for _ in range(model.order)]
    for n in range(1, model.order):
        for g in model.entries[n]:
            contexts[n - 1].add(g[:-1])
    lines = ["\\data\\"]
    lines += [f"ngram {n + 1}={len(e)}" for n, e in enumerate(model.entries)]
    for n, e in enumerate(model.entries):
        lines += ["", f"\\{n + 1}-grams:"]
        for g in sorted(e):
            lp, bow = e[g]
            row = f"{_fmt(lp)}\t{' '.join(g)}"
            if g in contexts[n]:
                row += f"\t{_fmt(bow)}"
            lines.append(row)
    lines += ["", "\\end\\", ""]
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines))


def import_arpa(path, unk: str = UNK) -> KNModel:
    with open(path, encoding="utf-8") as f:
        lines = f.read().split("\n")

    def fail(lineno, msg):
        raise LmError(f"{path}:{lineno}: {msg}")

    i = 0
    while i < len(lines) and lines[i].strip() != "\\data\\":
        i += 1
    if i == len(lines):
        fail(1, "missing \\data\\ header")
    declared = {}
    i += 1
    while i < len(lines) and lines[i].strip():
        key, _, value = lines[i].strip().partition("=")
        parts = key.split()
        if len(parts) != 2 or parts[0] != "ngram" or not parts[1].isdigit() or not value.strip().isdigit():
            fail(i + 1, f"bad count line {lines[i]!r}")
        declared[int(parts[1])] = int(value)
        i += 1
    if not declared or sorted(declared) != list(range(1, len(declared) + 1)):
        fail(i + 1, "\\data\\ section must declare orders 1..n")
    entries = [dict() for _ in declared]
    current = None
    ended = False
    for j in range(i, len(lines)):
        line = lines[j].strip()
        if not line:
            continue
        if line == "\\end\\":
            ended = True
            break
        if line.startswith("\\") and line.endswith("-grams:"):
            try:
                current = int(line[1:-len("-grams:")])
            except ValueError:
                fail(j + 1, f"bad section header {line!r}")
            if current not in declared:
                fail(j + 1, f"section for undeclared order {current}")
            continue
        if current is None:
            fail(j + 1, "entry outside any n-gram section")
        fields = line.split("\t") if "\t" in line else line.split()
        if "\t" in line:
            if len(fields) not in (2, 3):
                fail(j + 1, "expected 'logprob<TAB>tokens[<TAB>backoff]'")
            words = tuple(fields[1].split())
            rest = fields[2:]
        else:
            words = tuple(fields[1:1 + current])
            rest = fields[1 + current:]
        if len(words) != current or len(rest) > 1:
            fail(j + 1, f"expected {current} tokens")
        try:
            lp = float(fields[0])
            bow = float(rest[0]) if rest else 0.0
        except ValueError:
            fail(j + 1, "non-numeric probability or back-off weight")
        if words in entries[current - 1]:
            fail(j + 1, f"duplicate entry {' '.join(words)!r}")
        entries[current - 1][words] = (lp, bow)
    if not ended:
        fail(len(lines), "missing \\end\\ marker")
    for n, count in declared.items():
        if len(entries[n - 1]) != count:
            fail(i, f"\\data\\ declares {count} {n}-grams but the body has {len(entries[n - 1])}")
    return KNModel(entries, unk)
