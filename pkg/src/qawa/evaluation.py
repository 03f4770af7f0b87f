"""Edit-distance alignment, WER/TER and the experiment-matrix report."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .morpho import SuffixTable, segment_to_subwords

log = logging.getLogger(__name__)

MATCH, SUB, DEL, INS = "=", "S", "D", "I"


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class EditAlignment:
    hits: int
    substitutions: int
    deletions: int
    insertions: int
    ops: tuple = ()  # (op, ref token or None, hyp token or None)

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def _cost_table(ref, hyp):
    n, m = len(ref), len(hyp)
    d = [list(range(m + 1))]
    for i in range(1, n + 1):
        row = [i] + [0] * m
        prev = d[-1]
        r = ref[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + (r != hyp[j - 1]), prev[j] + 1, row[j - 1] + 1)
        d.append(row)
    return d


def align(ref: Sequence[str], hyp: Sequence[str]) -> EditAlignment:
    """Minimal unit-cost alignment.

    The backtrace prefers, at each cell, a match, then a substitution, then
    a deletion, then an insertion.
    """
    d = _cost_table(ref, hyp)
    i, j = len(ref), len(hyp)
    ops = []
    h = s = dl = ins = 0
    while i or j:
        here = d[i][j]
        if i and j and ref[i - 1] == hyp[j - 1] and d[i - 1][j - 1] == here:
            ops.append((MATCH, ref[i - 1], hyp[j - 1]))
            h += 1
            i, j = i - 1, j - 1
        elif i and j and d[i - 1][j - 1] + 1 == here:
            ops.append((SUB, ref[i - 1], hyp[j - 1]))
            s += 1
            i, j = i - 1, j - 1
        elif i and d[i - 1][j] + 1 == here:
            ops.append((DEL, ref[i - 1], None))
            dl += 1
            i -= 1
        else:
            ops.append((INS, None, hyp[j - 1]))
            ins += 1
            j -= 1
    return EditAlignment(h, s, dl, ins, tuple(reversed(ops)))


def edit_distance_batch(refs: np.ndarray, hyps: np.ndarray) -> np.ndarray:
    """Unit-cost edit distances of many equal-shape pairs at once.

    ``refs`` is ``(P, n)`` and ``hyps`` is ``(P, m)`` of integer symbols; the
    same recurrence as :func:`align`, vectorized over the pair axis.
    """
    refs = np.asarray(refs)
    hyps = np.asarray(hyps)
    if refs.ndim != 2 or hyps.ndim != 2 or refs.shape[0] != hyps.shape[0]:
        raise ValueError("refs and hyps must be (P, n) and (P, m) arrays")
    p, n = refs.shape
    m = hyps.shape[1]
    dtype = np.int16 if n + m < 2 ** 15 else np.int64
    prev = np.broadcast_to(np.arange(m + 1, dtype=dtype), (p, m + 1)).copy()
    for i in range(1, n + 1):
        cur = np.empty_like(prev)
        cur[:, 0] = i
        r = refs[:, i - 1]
        for j in range(1, m + 1):
            sub = prev[:, j - 1] + (r != hyps[:, j - 1])
            cur[:, j] = np.minimum(np.minimum(sub, prev[:, j] + 1), cur[:, j - 1] + 1)
        prev = cur
    return prev[:, m].astype(np.int64)


def _tokens(x) -> list[str]:
    return x.split() if isinstance(x, str) else list(x)


def wer(ref, hyp) -> float:
    """``(S + D + I) / len(ref)``; may exceed 1."""
    ref, hyp = _tokens(ref), _tokens(hyp)
    if not ref:
        raise EvalError("reference must be non-empty")
    return align(ref, hyp).errors / len(ref)


def ter(ref, hyp, table: SuffixTable) -> float:
    """WER over suffix-segmented subword tokens."""
    return wer(segment_to_subwords(_tokens(ref), table), segment_to_subwords(_tokens(hyp), table))


# --------------------------------------------------------------------------
# corpus scoring and report

def read_hypotheses(path) -> dict[str, str]:
    """Hypothesis file: one JSON record per line with fields ``id`` and ``text``."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                uid, text = rec["id"], rec["text"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise EvalError(f"{path}:{lineno}: bad hypothesis record ({exc})") from None
            if uid in out:
                raise EvalError(f"{path}:{lineno}: duplicate hypothesis id {uid!r}")
            out[uid] = text
    return out


def write_hypotheses(hyps: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for uid, text in hyps.items():
            f.write(json.dumps({"id": uid, "text": text}, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class CorpusScore:
    errors: int
    ref_tokens: int
    subword_errors: int | None = None
    ref_subwords: int | None = None

    @property
    def wer(self) -> float:
        return self.errors / self.ref_tokens

    @property
    def ter(self) -> float | None:
        if self.subword_errors is None:
            return None
        return self.subword_errors / self.ref_subwords


def score_corpus(references: dict, hypotheses: dict, table: SuffixTable | None = None) -> CorpusScore:
    """Micro-averaged errors over every reference id; all ids need a hypothesis."""
    missing = [uid for uid in references if uid not in hypotheses]
    if missing:
        shown = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
        raise EvalError(f"{len(missing)} reference ids lack a hypothesis: {shown}")
    errs = toks = sub_errs = sub_toks = 0
    for uid, ref in references.items():
        r, h = _tokens(ref), _tokens(hypotheses[uid])
        if not r:
            raise EvalError(f"reference {uid!r} is empty")
        errs += align(r, h).errors
        toks += len(r)
        if table is not None:
            rs, hs = segment_to_subwords(r, table), segment_to_subwords(h, table)
            sub_errs += align(rs, hs).errors
            sub_toks += len(rs)
    if table is None:
        return CorpusScore(errs, toks)
    return CorpusScore(errs, toks, sub_errs, sub_toks)


@dataclass(frozen=True)
class ConditionRow:
    condition: str
    hours: str
    wer: float          # percent
    ter: float | None = None
    ppl: float | None = None


@dataclass
class ConditionReport:
    """Experiment matrix; the first row is the baseline for the delta columns."""

    rows: list = field(default_factory=list)

    def deltas(self, row: ConditionRow) -> tuple[float, float]:
        """WER change against the baseline: absolute points and percent relative."""
        base = self.rows[0].wer
        diff = row.wer - base
        return diff, (100.0 * diff / base if base else float("nan"))

    def render(self, show_deltas: bool = True) -> str:
        has_ter = any(r.ter is not None for r in self.rows)
        has_ppl = any(r.ppl is not None for r in self.rows)
        header = ["Data", "Training Hours", "WER (%)"]
        if has_ter:
            header.append("TER (%)")
        if has_ppl:
            header.append("PPL")
        if show_deltas:
            header += ["dWER (abs)", "dWER (rel %)"]
        table = [header]
        for r in self.rows:
            cells = [r.condition, r.hours, f"{r.wer:.1f}"]
            if has_ter:
                cells.append("-" if r.ter is None else f"{r.ter:.1f}")
            if has_ppl:
                cells.append("-" if r.ppl is None else f"{r.ppl:.2f}")
            if show_deltas:
                a, rel = self.deltas(r)
                cells += [f"{a:+.1f}", f"{rel:+.1f}"]
            table.append(cells)
        widths = [max(len(row[k]) for row in table) for k in range(len(header))]
        lines = []
        for n, row in enumerate(table):
            parts = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
            lines.append("  ".join(parts).rstrip())
            if n == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def records(self) -> list[dict]:
        out = []
        for r in self.rows:
            a, rel = self.deltas(r)
            out.append({"condition": r.condition, "hours": r.hours, "wer": round(r.wer, 4),
                        "ter": None if r.ter is None else round(r.ter, 4),
                        "ppl": None if r.ppl is None else round(r.ppl, 4),
                        "wer_delta_abs": round(a, 4), "wer_delta_rel": round(rel, 4)})
        return out

    def write(self, table_path, records_path) -> None:
        with open(table_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.render())
        with open(records_path, "w", encoding="utf-8", newline="\n") as f:
            for rec in self.records():
                f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def report(conditions: Iterable[tuple], references: dict, table: SuffixTable | None = None,
           perplexities: dict | None = None) -> ConditionReport:
    """Score ``(name, hours descriptor, hypotheses)`` triples against shared references."""
    rows = []
    perplexities = perplexities or {}
    for name, hours, hyps in conditions:
        sc = score_corpus(references, hyps, table)
        rows.append(ConditionRow(name, hours, 100.0 * sc.wer,
                                 None if sc.ter is None else 100.0 * sc.ter, perplexities.get(name)))
    if not rows:
        raise EvalError("no conditions to report")
    return ConditionReport(rows)
