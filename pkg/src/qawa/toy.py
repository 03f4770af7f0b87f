"""Deterministic toy corpus: raw WAVs, a raw manifest and a pipeline config."""

from __future__ import annotations

import os
from importlib import resources

import numpy as np

from .audioproc import AudioBuffer, encode_wav
from .config import write_config
from .corpus import Manifest, Utterance, save_manifest
from .synth import ToneSynth

LONG_INDEX = 0      # rendered as a 75 s recording
SILENT_INDEX = 7    # near-silent recording, removed by the voicing gate
CORRUPT_INDEX = 11  # truncated file, recorded as a read error
LONG_S = 75.0
SLOT_S = 0.25


def toy_sentences() -> list[str]:
    text = resources.files("qawa").joinpath("data/toy_sentences.txt").read_text(encoding="utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip()]


def raw_transcript(sentence: str, i: int) -> str:
    """Undo normalization a little: capitals, final stop, curly apostrophes, a comma."""
    words = sentence.split()
    words[0] = words[0].capitalize()
    if i % 6 == 2 and len(words) > 2:
        words[1] += ","
    text = " ".join(words) + ("?" if i % 9 == 4 else ".")
    if i % 4 == 1:
        text = text.replace("'", "’")
    return text


def _render(synth: ToneSynth, text: str, rng, seconds: float | None = None) -> np.ndarray:
    x = synth.synthesize(text).signal
    if seconds is not None:
        n = int(round(seconds * synth.sample_rate))
        reps = -(-n // len(x))
        x = np.tile(x, reps)[:n]
    return x + rng.normal(0.0, 0.002, len(x))


def make_toy_corpus(root, seed: int = 0) -> str:
    """Write the toy corpus under ``root``; returns the config path.

    Every fifth recording is 22.05 kHz stereo so canonicalization has work
    to do.
    """
    raw_dir = os.path.join(root, "raw")
    os.makedirs(raw_dir, exist_ok=True)
    sentences = toy_sentences()
    synth16 = ToneSynth(slot_s=SLOT_S)
    synth22 = ToneSynth(slot_s=SLOT_S, sample_rate=22050)
    utts = []
    for i, sentence in enumerate(sentences):
        rng = np.random.default_rng([seed, i])
        uid = f"toy-{i:03d}"
        name = f"{uid}.wav"
        path = os.path.join(raw_dir, name)
        spk = i % 10
        if i == CORRUPT_INDEX:
            with open(path, "wb") as f:
                f.write(b"RIFF\x24\x00\x00\x00WAVEfmt \x10\x00")
            duration = 0.0
        else:
            stereo = i % 5 == 4
            synth = synth22 if stereo else synth16
            if i == SILENT_INDEX:
                x = rng.normal(0.0, 0.001, 5 * synth.sample_rate)
            else:
                x = _render(synth, sentence, rng, LONG_S if i == LONG_INDEX else None)
            x = np.clip(x, -1.0, 1.0)
            samples = np.stack([0.9 * x, 0.7 * x]) if stereo else x[np.newaxis, :]
            buf = AudioBuffer(samples, synth.sample_rate)
            encode_wav(buf, path)
            duration = round(buf.duration_s, 6)
        utts.append(Utterance(uid, name, raw_transcript(sentence, i), f"spk{spk:02d}",
                              "Chanka" if spk % 2 == 0 else "Collao", "F" if spk % 4 < 2 else "M",
                              duration))
    save_manifest(Manifest(utts), os.path.join(raw_dir, "manifest.jsonl"))
    cfg_path = os.path.join(root, "toy.conf")
    write_config({"paths.manifest": "raw/manifest.jsonl", "paths.out": "out", "run.seed": seed}, cfg_path)
    return cfg_path
