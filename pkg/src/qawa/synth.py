"""Grapheme vocabulary and batch text-to-speech with pluggable engines."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from .adapters import DEFAULT_TIMEOUT_S, EngineError, LineProcess
from .audioproc import CANONICAL_RATE, AudioBuffer, WavError, decode_wav, encode_wav
from .corpus import Manifest, Utterance

log = logging.getLogger(__name__)

SILENCE = "<sil>"

# Graphemes of the normalized fixture corpus: the Latin alphabet, the
# apostrophe and six accented vowels.
DEFAULT_GRAPHEMES = "'abcdefghijklmnopqrstuvwxyzáéíóúü"


@dataclass(frozen=True)
class GraphemeVocab:
    symbols: tuple

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("grapheme vocabulary contains duplicates")
        if SILENCE not in self.symbols:
            raise ValueError(f"grapheme vocabulary must contain {SILENCE}")

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, sym):
        return sym in self.symbols

    @property
    def graphemes(self) -> tuple:
        """Sounding symbols, i.e. everything except the silence symbol."""
        return tuple(s for s in self.symbols if s != SILENCE)

    def missing(self, texts: Iterable[str]) -> set:
        return {c for t in texts for c in t if not c.isspace() and c not in self.symbols}


def build_grapheme_vocab(texts: Iterable[str]) -> GraphemeVocab:
    """Sorted distinct non-space characters plus the silence symbol."""
    chars = sorted({c for t in texts for c in t if not c.isspace()})
    vocab = GraphemeVocab((*chars, SILENCE))
    log.info("grapheme vocabulary: %d symbols", len(vocab))
    return vocab


DEFAULT_VOCAB = GraphemeVocab((*DEFAULT_GRAPHEMES, SILENCE))


class TtsEngine(Protocol):
    def synthesize(self, text: str) -> AudioBuffer:
        """Mono 16 kHz rendering of ``text``."""


class SynthError(RuntimeError):
    pass


class ToneSynth:
    """Deterministic non-speech synthesizer: one pure tone per grapheme.

    Every character occupies one slot of ``slot_s`` seconds (1280 samples at
    16 kHz). Sounding graphemes get a tone at ``low_hz * (high_hz/low_hz)**(i/(G-1))``
    for the i-th of G graphemes, shaped by a raised-cosine fade of
    ``fade_s`` at both ends of the slot; whitespace renders as a silent slot.
    Since fades stay inside their slot, a text of n characters lasts exactly
    ``n * slot_s`` seconds.
    """

    def __init__(self, vocab: GraphemeVocab = DEFAULT_VOCAB, slot_s: float = 0.080,
                 fade_s: float = 0.005, low_hz: float = 200.0, high_hz: float = 3600.0,
                 amplitude: float = 0.5, sample_rate: int = CANONICAL_RATE):
        self.vocab = vocab
        self.sample_rate = sample_rate
        self.slot = int(round(slot_s * sample_rate))
        fade = int(round(fade_s * sample_rate))
        if not 0 <= 2 * fade <= self.slot:
            raise ValueError("fade must fit twice inside a slot")
        g = vocab.graphemes
        steps = np.arange(len(g)) / max(len(g) - 1, 1)
        self.frequencies = dict(zip(g, low_hz * (high_hz / low_hz) ** steps))
        env = np.ones(self.slot)
        if fade:
            ramp = 0.5 - 0.5 * np.cos(np.pi * (np.arange(fade) + 0.5) / fade)
            env[:fade] = ramp
            env[-fade:] = ramp[::-1]
        t = np.arange(self.slot) / sample_rate
        self._tones = {c: amplitude * env * np.sin(2 * np.pi * f * t) for c, f in self.frequencies.items()}
        self._silence = np.zeros(self.slot)

    def duration_s(self, text: str) -> float:
        return len(text) * self.slot / self.sample_rate

    def synthesize(self, text: str) -> AudioBuffer:
        if not text:
            raise SynthError("cannot synthesize empty text")
        unknown = sorted({c for c in text if not c.isspace() and c not in self._tones})
        if unknown:
            raise SynthError(f"graphemes outside the vocabulary: {''.join(unknown)!r}")
        parts = [self._silence if c.isspace() else self._tones[c] for c in text]
        return AudioBuffer.mono(np.concatenate(parts), self.sample_rate)


class ExternalTtsEngine:
    """Child-process synthesizer speaking ``SYNTH\\t<text>`` / ``WAV <path>`` / ``ERR <msg>``."""

    def __init__(self, command, timeout_s: float = DEFAULT_TIMEOUT_S):
        self.proc = LineProcess(command, timeout_s)

    def synthesize(self, text: str) -> AudioBuffer:
        if "\n" in text or "\t" in text:
            raise SynthError("text for the external engine may not contain tabs or newlines")
        (resp,) = self.proc.request("SYNTH\t" + text, lambda s: True)
        head, _, rest = resp.partition(" ")
        if head == "ERR":
            raise SynthError(f"engine error: {rest}")
        if head != "WAV" or not rest:
            raise EngineError(f"unexpected engine output {resp!r}", self.proc.diagnostics)
        try:
            buf = decode_wav(rest.strip())
        except (OSError, WavError) as exc:
            raise SynthError(f"engine produced an unreadable file: {exc}") from None
        if not buf.is_canonical():
            raise SynthError(f"engine output must be mono {CANONICAL_RATE} Hz, got "
                             f"{buf.channels} ch at {buf.sample_rate} Hz")
        return buf

    def close(self):
        self.proc.close()


@dataclass
class SynthResult:
    manifest: Manifest
    failures: list = field(default_factory=list)  # (sentence index, message)

    def summary(self) -> str:
        lines = [f"synthesized {len(self.manifest)} utterances ({self.manifest.hours * 3600:.1f} s), "
                 f"{len(self.failures)} failures"]
        lines += [f"  syn-{i}: {msg}" for i, msg in self.failures]
        return "\n".join(lines)


def synthesize_corpus(sentences: Sequence[str], engine: TtsEngine, out_dir,
                      speaker_id: str = "synthetic") -> SynthResult:
    """Render every sentence to ``out_dir/syn-<index>.wav`` and build a manifest.

    A sentence whose synthesis fails is recorded in ``failures`` and skipped;
    engine crashes (:class:`EngineError`) abort the run.
    """
    os.makedirs(out_dir, exist_ok=True)
    utts, failures = [], []
    for i, text in enumerate(sentences):
        uid = f"syn-{i}"
        try:
            buf = engine.synthesize(text)
        except (SynthError, ValueError) as exc:
            failures.append((i, str(exc)))
            log.warning("%s: synthesis failed: %s", uid, exc)
            continue
        if buf.n_frames == 0:
            failures.append((i, "engine returned empty audio"))
            continue
        name = uid + ".wav"
        encode_wav(buf, os.path.join(out_dir, name))
        utts.append(Utterance(uid, name, text, speaker_id=speaker_id,
                              duration_s=round(buf.duration_s, 6)))
    return SynthResult(Manifest(utts), failures)
