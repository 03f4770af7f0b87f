"""Pipeline stages: preprocess, augment, condition and eval."""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import lm as lmmod
from .adapters import EngineError
from .audioproc import (
    WavError,
    decode_wav,
    encode_wav,
    mfcc,
    segment,
    speed_perturb,
    to_canonical,
    voiced_ratio,
    write_features,
)
from .augment import ExternalParaphraseEngine, PerturbEngine, augment_corpus
from .config import CONDITIONS, ConfigError, PipelineConfig
from .corpus import (
    Manifest,
    ManifestError,
    Utterance,
    concat,
    corpus_stats,
    load_manifest,
    load_rules,
    normalize_text,
    relabel,
    resolve_audio,
    save_manifest,
    split_corpus,
)
from .delex import delexicalize_corpus, load_lexicon, write_delex_corpus
from .evaluation import ConditionReport, read_hypotheses, report
from .morpho import analyze, load_suffix_table, tokenize
from .synth import ExternalTtsEngine, ToneSynth, build_grapheme_vocab, synthesize_corpus

log = logging.getLogger(__name__)

CONDITION_NAMES = {
    "original": "Original Data",
    "distorted": "Distorted Data",
    "more_data": "More Data",
    "synthetic": "Synthetic Data",
}


class StageError(RuntimeError):
    """A stage could not run or finished with too many data errors."""

    def __init__(self, message: str, exit_code: int = 2):
        super().__init__(message)
        self.exit_code = exit_code


def _write_lines(path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(line + "\n")


def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [ln.rstrip("\n") for ln in f if ln.strip()]


def _write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")


def _rebase(m: Manifest, src_manifest, dst_dir) -> Manifest:
    """Rewrite audio refs so they resolve from a manifest saved in ``dst_dir``."""
    dst_dir = os.path.abspath(dst_dir)
    return Manifest([replace(u, audio_ref=os.path.relpath(resolve_audio(u, src_manifest), dst_dir))
                     for u in m], m.split)


def _map(cfg: PipelineConfig, fn, items):
    if cfg["run.jobs"] <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(cfg["run.jobs"]) as pool:
        return list(pool.map(fn, items))


def stage_dir(cfg: PipelineConfig, *parts) -> str:
    return os.path.join(cfg.out, *parts)


# --------------------------------------------------------------------------
# preprocess

def split_words(words: list[str], durations: list[float]) -> list[list[str]] | None:
    """Share words among consecutive segments in proportion to their durations.

    Every segment receives at least one word; ``None`` if there are fewer
    words than segments.
    """
    s, w = len(durations), len(words)
    if w < s:
        return None
    total = sum(durations)
    bounds = [0]
    acc = 0.0
    for k, d in enumerate(durations[:-1], start=1):
        acc += d
        b = int(math.floor(w * acc / total + 0.5))
        bounds.append(min(max(b, bounds[-1] + 1), w - (s - k)))
    bounds.append(w)
    return [words[a:b] for a, b in zip(bounds, bounds[1:])]


@dataclass
class PreprocessResult:
    manifest: Manifest
    splits: tuple
    drops: list = field(default_factory=list)  # dicts with id, kind, reason

    @property
    def error_drops(self) -> int:
        return sum(1 for d in self.drops if d["kind"] == "error")


def _preprocess_one(u: Utterance, manifest_path, rules, cfg: PipelineConfig, wav_dir):
    policy = cfg.segmentation
    try:
        buf = decode_wav(resolve_audio(u, manifest_path))
    except (OSError, WavError) as exc:
        return [], {"id": u.id, "kind": "error", "reason": f"unreadable audio: {exc}"}
    canon = to_canonical(buf)
    text = normalize_text(u.transcript, rules)
    if not text:
        return [], {"id": u.id, "kind": "text", "reason": "transcript empty after normalization"}
    vr = voiced_ratio(canon, policy)
    if vr < cfg["vad.floor"]:
        return [], {"id": u.id, "kind": "vad",
                    "reason": f"voiced ratio {vr:.3f} below floor {cfg['vad.floor']:.3f}"}
    segs = segment(canon, policy)
    pieces = split_words(text.split(), [s.duration_s for s in segs])
    if pieces is None:
        return [], {"id": u.id, "kind": "text",
                    "reason": f"{len(text.split())} words cannot cover {len(segs)} segments"}
    out = []
    for k, (seg, words) in enumerate(zip(segs, pieces), start=1):
        uid = u.id if len(segs) == 1 else f"{u.id}-{k}"
        extra = dict(u.extra)
        if len(segs) > 1:
            extra["segment_of"] = u.id
        ref = f"wav/{uid}.wav"
        encode_wav(seg, os.path.join(wav_dir, f"{uid}.wav"))
        out.append(Utterance(uid, ref, " ".join(words), u.speaker_id, u.dialect, u.gender,
                             round(seg.duration_s, 6), extra))
    return out, None


def cmd_preprocess(cfg: PipelineConfig) -> PreprocessResult:
    manifest_path = cfg.path("paths.manifest")
    if not manifest_path:
        raise StageError("paths.manifest is required for preprocess", exit_code=1)
    raw = load_manifest(manifest_path)
    rules = load_rules(cfg.path("paths.rules"))
    out = stage_dir(cfg, "preprocess")
    wav_dir = os.path.join(out, "wav")
    os.makedirs(wav_dir, exist_ok=True)

    results = _map(cfg, lambda u: _preprocess_one(u, manifest_path, rules, cfg, wav_dir), list(raw))
    utts, drops = [], []
    for recs, drop in results:
        utts.extend(recs)
        if drop:
            drops.append(drop)
            log.warning("dropped %s: %s", drop["id"], drop["reason"])
    full = Manifest(utts)
    splits = split_corpus(full, cfg.fractions, cfg.seed, cfg["split.by_speaker"])
    save_manifest(full, os.path.join(out, "all.jsonl"))
    for m, name in zip(splits, ("train", "dev", "test")):
        save_manifest(m, os.path.join(out, f"{name}.jsonl"))
    with open(os.path.join(out, "drops.jsonl"), "w", encoding="utf-8", newline="\n") as f:
        for d in drops:
            f.write(json.dumps(d, ensure_ascii=False, sort_keys=True) + "\n")
    with open(os.path.join(out, "stats.txt"), "w", encoding="utf-8", newline="\n") as f:
        f.write(corpus_stats(full).render())

    if cfg["features.enabled"]:
        feat_dir = os.path.join(out, "features")
        os.makedirs(feat_dir, exist_ok=True)
        fcfg = cfg.features

        def extract(u):
            try:
                feats = mfcc(decode_wav(os.path.join(out, u.audio_ref)), fcfg)
            except ValueError as exc:
                log.warning("no features for %s: %s", u.id, exc)
                return
            write_features(feats, os.path.join(feat_dir, f"{u.id}.qawf"))

        _map(cfg, extract, list(full))

    res = PreprocessResult(full, splits, drops)
    log.info("preprocess: %d inputs -> %d records (%d/%d/%d), %d dropped", len(raw), len(full),
             *(len(s) for s in splits), len(drops))
    if raw and res.error_drops > cfg["preprocess.max_error_fraction"] * len(raw):
        raise StageError(f"{res.error_drops} of {len(raw)} inputs dropped for errors "
                         f"(limit {cfg['preprocess.max_error_fraction']:.0%})")
    return res


# --------------------------------------------------------------------------
# augment

def _duration_stats(m: Manifest) -> dict:
    d = [u.duration_s for u in m]
    if not d:
        return {"total": 0.0, "mean": 0.0, "max": 0.0}
    return {"total": round(sum(d), 6), "mean": round(sum(d) / len(d), 6), "max": round(max(d), 6)}


@dataclass
class AugmentSummary:
    sources: int
    synthetic: int
    audio: int
    skipped: list
    synth_failures: list
    slot_precision: float
    slot_recall: float
    slot_f1: float
    frames: list
    graphemes: int
    audio_seconds: dict  # total, mean and max synthetic duration

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _require(path, what):
    if not os.path.exists(path):
        raise StageError(f"missing {what}: {path} (run the earlier stage first)", exit_code=1)


def cmd_augment(cfg: PipelineConfig) -> AugmentSummary:
    pre = stage_dir(cfg, "preprocess")
    train_path = os.path.join(pre, "train.jsonl")
    _require(train_path, "preprocess output")
    table = load_suffix_table(cfg.path("paths.suffixes"))
    lex = load_lexicon(cfg.path("paths.lexicon"), cfg.path("paths.bilingual"), cfg.path("paths.pivot_frames"))
    train = load_manifest(train_path)
    out = stage_dir(cfg, "augment")
    os.makedirs(out, exist_ok=True)

    ids = train.ids
    texts = [u.transcript for u in train]
    sentences = [tokenize(t) for t in texts]
    analyses = [[analyze(w, table) for w in toks] for toks in sentences]
    delexed, inv, selected, _ = delexicalize_corpus(sentences, analyses, lex, cfg["delex.top_k"])
    write_delex_corpus(delexed, os.path.join(out, "delex.jsonl"))
    _write_json(inv.to_dict(), os.path.join(out, "inventory.json"))

    acfg = cfg.augment
    if acfg.engine == "external":
        engine = ExternalParaphraseEngine(cfg["augment.engine_command"], cfg["engine.timeout_s"])
    else:
        engine = PerturbEngine(acfg.seed)
    try:
        res = augment_corpus(delexed, inv, acfg, engine, ids)
    finally:
        if hasattr(engine, "close"):
            engine.close()
    _write_lines(os.path.join(out, "synthetic.txt"), res.texts)

    vocab = build_grapheme_vocab(texts + res.texts)
    _write_lines(os.path.join(out, "graphemes.txt"), vocab.symbols)
    if cfg["synth.engine"] == "external":
        tts = ExternalTtsEngine(cfg["synth.engine_command"], cfg["engine.timeout_s"])
    else:
        tts = ToneSynth(vocab)
    try:
        sres = synthesize_corpus(res.texts, tts, os.path.join(out, "wav"))
    finally:
        if hasattr(tts, "close"):
            tts.close()
    syn = Manifest([replace(u, audio_ref=f"wav/{u.audio_ref}") for u in sres.manifest])
    save_manifest(syn, os.path.join(out, "synthetic.jsonl"))

    p, r, f = res.slot_scores
    summary = AugmentSummary(len(delexed), len(res.sentences), len(syn), [ids[i] for i in res.skipped],
                             [f"syn-{i}: {msg}" for i, msg in sres.failures], round(p, 6), round(r, 6),
                             round(f, 6), selected, len(vocab), _duration_stats(syn))
    _write_json(summary.to_dict(), os.path.join(out, "summary.json"))
    log.info("augment: %d sources -> %d synthetic sentences, %d audio records; slot F1 %.3f",
             summary.sources, summary.synthetic, summary.audio, f)
    return summary


# --------------------------------------------------------------------------
# condition

@dataclass
class ConditionResult:
    condition: str
    manifest: Manifest
    lm_texts: list
    heldout: list
    model: lmmod.KNModel


def hours_descriptor(condition: str, base: Manifest, extra: Manifest | None) -> str:
    h = f"{base.hours:.2f}"
    if condition == "original":
        return h
    label = {"distorted": "distorted", "more_data": "original", "synthetic": "synthetic"}[condition]
    return f"{h}+{(extra.hours if extra is not None else base.hours):.2f} ({label})"


def _distort(cfg: PipelineConfig, base: Manifest, base_path, out_dir) -> Manifest:
    lo, hi = cfg["distort.min"], cfg["distort.max"]
    wav_dir = os.path.join(out_dir, "wav")
    os.makedirs(wav_dir, exist_ok=True)

    def one(item):
        i, u = item
        coeff = float(np.random.default_rng([cfg.seed, i]).uniform(lo, hi))
        try:
            buf = decode_wav(resolve_audio(u, base_path))
        except (OSError, WavError) as exc:
            raise StageError(f"{u.id}: cannot read audio for distortion: {exc}") from None
        sp = speed_perturb(buf, coeff, (lo, hi))
        uid = u.id + "-sp"
        encode_wav(sp, os.path.join(wav_dir, uid + ".wav"))
        return replace(u, id=uid, audio_ref=f"wav/{uid}.wav", duration_s=round(sp.duration_s, 6),
                       extra={**u.extra, "speed": round(coeff, 6)})

    return Manifest(_map(cfg, one, list(enumerate(base))))


def cmd_condition(cfg: PipelineConfig, condition: str) -> ConditionResult:
    if condition not in CONDITIONS:
        raise ConfigError(f"unknown condition {condition!r}")
    base_path = os.path.join(stage_dir(cfg, "preprocess"), "train.jsonl")
    _require(base_path, "preprocess output")
    out = stage_dir(cfg, "condition", condition)
    os.makedirs(out, exist_ok=True)
    base = _rebase(load_manifest(base_path), base_path, out)
    base_texts = [u.transcript for u in base]
    heldout = []
    extra = None
    if condition == "original":
        manifest = base
        lm_texts = base_texts
    elif condition == "distorted":
        extra = _distort(cfg, load_manifest(base_path), base_path, out)
        manifest = concat([base, extra])
        lm_texts = base_texts
    elif condition == "more_data":
        extra = relabel(base, "-dup")
        manifest = concat([base, extra])
        lm_texts = base_texts
    else:
        aug = stage_dir(cfg, "augment")
        syn_path = os.path.join(aug, "synthetic.jsonl")
        text_path = os.path.join(aug, "synthetic.txt")
        _require(syn_path, "augment output")
        _require(text_path, "augment output")
        extra = _rebase(load_manifest(syn_path), syn_path, out)
        manifest = concat([base, extra])
        syn_texts = _read_lines(text_path)
        n_held = int(math.floor(cfg["lm.heldout_fraction"] * len(syn_texts) + 0.5))
        cut = len(syn_texts) - n_held
        lm_texts = base_texts + syn_texts[:cut]
        heldout = syn_texts[cut:]
        _write_lines(os.path.join(out, "heldout.txt"), heldout)
    manifest = manifest.with_split("Train")
    save_manifest(manifest, os.path.join(out, "train.jsonl"))
    _write_lines(os.path.join(out, "lm_train.txt"), lm_texts)
    if not lm_texts:
        raise StageError(f"condition {condition}: no text to train the language model")
    model = lmmod.train(lm_texts, cfg.lm)
    lmmod.export_arpa(model, os.path.join(out, "lm.arpa"))
    _write_json({"condition": condition, "utterances": len(manifest), "base_utterances": len(base),
                 "hours": hours_descriptor(condition, base, extra), "lm_sentences": len(lm_texts),
                 "heldout_sentences": len(heldout)}, os.path.join(out, "summary.json"))
    log.info("condition %s: %d utterances, LM on %d sentences", condition, len(manifest), len(lm_texts))
    return ConditionResult(condition, manifest, lm_texts, heldout, model)


# --------------------------------------------------------------------------
# eval

def stub_hypotheses(references: dict, rate: float, seed) -> dict:
    """Corrupt each reference token with probability ``rate`` (substitute, delete or insert)."""
    vocab = sorted({w for t in references.values() for w in t.split()})
    out = {}
    for k, (uid, text) in enumerate(references.items()):
        rng = np.random.default_rng([*seed, k])
        words = []
        for w in text.split():
            if rng.random() >= rate:
                words.append(w)
                continue
            op = int(rng.integers(3))
            if op == 0:
                words.append(vocab[int(rng.integers(len(vocab)))])
            elif op == 2:
                words += [w, vocab[int(rng.integers(len(vocab)))]]
        out[uid] = " ".join(words)
    return out


def _hypotheses_for(cfg: PipelineConfig, condition: str, references: dict):
    spec = cfg["eval.hypotheses"]
    if spec.startswith("stub:"):
        try:
            rate = float(spec[5:])
        except ValueError:
            raise ConfigError(f"bad eval.hypotheses {spec!r}") from None
        return stub_hypotheses(references, rate, (cfg.seed, CONDITIONS.index(condition)))
    path = spec.format(condition=condition)
    if not os.path.isabs(path):
        path = os.path.join(cfg.out, path)
    if not os.path.exists(path):
        log.warning("no hypotheses for condition %s at %s; row omitted", condition, path)
        return None
    return read_hypotheses(path)


def cmd_eval(cfg: PipelineConfig) -> ConditionReport:
    test_path = os.path.join(stage_dir(cfg, "preprocess"), "test.jsonl")
    _require(test_path, "preprocess output")
    test = load_manifest(test_path)
    references = {u.id: u.transcript for u in test}
    table = load_suffix_table(cfg.path("paths.suffixes"))
    conditions, ppl, heldout_ppl = [], {}, {}
    heldout_path = stage_dir(cfg, "condition", "synthetic", "heldout.txt")
    heldout = _read_lines(heldout_path) if os.path.exists(heldout_path) else []
    for cond in cfg.conditions:
        cdir = stage_dir(cfg, "condition", cond)
        summary_path = os.path.join(cdir, "summary.json")
        if not os.path.exists(summary_path):
            log.warning("condition %s has not been built; row omitted", cond)
            continue
        hyps = _hypotheses_for(cfg, cond, references)
        if hyps is None:
            continue
        with open(summary_path, encoding="utf-8") as f:
            hours = json.load(f)["hours"]
        model = lmmod.import_arpa(os.path.join(cdir, "lm.arpa"))
        name = CONDITION_NAMES[cond]
        if references:
            ppl[name] = lmmod.perplexity(model, list(references.values())).perplexity
        if heldout:
            heldout_ppl[cond] = lmmod.perplexity(model, heldout).perplexity
        conditions.append((name, hours, hyps))
    if not conditions:
        raise StageError("no condition could be evaluated")
    if not references:
        raise StageError("test split is empty")
    rep = report(conditions, references, table, ppl)
    out = stage_dir(cfg, "eval")
    os.makedirs(out, exist_ok=True)
    rep.write(os.path.join(out, "report.txt"), os.path.join(out, "report.jsonl"))
    if heldout_ppl:
        _write_json({k: round(v, 6) for k, v in heldout_ppl.items()},
                    os.path.join(out, "heldout_perplexity.json"))
    return rep


def cmd_pipeline(cfg: PipelineConfig) -> ConditionReport:
    cmd_preprocess(cfg)
    cmd_augment(cfg)
    for cond in cfg.conditions:
        cmd_condition(cfg, cond)
    return cmd_eval(cfg)


__all__ = [
    "CONDITION_NAMES", "EngineError", "ManifestError", "StageError", "cmd_augment", "cmd_condition",
    "cmd_eval", "cmd_pipeline", "cmd_preprocess", "split_words", "stub_hypotheses",
]
