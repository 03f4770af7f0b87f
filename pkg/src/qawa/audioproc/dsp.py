"""Channel mixing, band-limited resampling, segmentation and energy gating."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .buffer import AudioBuffer, require_canonical

# Kaiser-windowed sinc with 16 zero crossings per side.
ZERO_CROSSINGS = 16
KAISER_BETA = 8.555
ROLLOFF = 0.85
_TABLE_RES = 512
_CHUNK = 1 << 17


@dataclass(frozen=True)
class SegmentationPolicy:
    max_segment_s: float = 30.0
    boundary_search_window_s: float = 2.0
    silence_rms_threshold: float = 0.01
    frame_s: float = 0.025

    def __post_init__(self):
        if not self.max_segment_s > 0:
            raise ValueError("max_segment_s must be positive")
        if not 0 <= self.boundary_search_window_s < self.max_segment_s:
            raise ValueError("boundary_search_window_s must be in [0, max_segment_s)")
        if not self.frame_s > 0:
            raise ValueError("frame_s must be positive")


def to_mono(b: AudioBuffer) -> AudioBuffer:
    if b.channels == 1:
        return b
    return AudioBuffer(b.samples.mean(axis=0, keepdims=True), b.sample_rate)


@lru_cache(maxsize=None)
def _kernel_table():
    # sinc(u) * kaiser(u / ZERO_CROSSINGS) sampled on u in [0, ZERO_CROSSINGS], one guard point
    u = np.arange(ZERO_CROSSINGS * _TABLE_RES + 2) / _TABLE_RES
    win = np.i0(KAISER_BETA * np.sqrt(np.clip(1.0 - (u / ZERO_CROSSINGS) ** 2, 0.0, None)))
    table = np.sinc(u) * win / np.i0(KAISER_BETA)
    table[u >= ZERO_CROSSINGS] = 0.0
    return table


def _interpolate(x: np.ndarray, positions: np.ndarray, cutoff: float) -> np.ndarray:
    """Evaluate the band-limited reconstruction of ``x`` at fractional positions.

    ``cutoff`` is the low-pass corner as a fraction of the input Nyquist rate.
    Samples outside the signal are taken as zero.
    """
    table = _kernel_table()
    half = ZERO_CROSSINGS / cutoff
    taps = int(math.ceil(half))
    xp = np.concatenate([np.zeros(taps + 1), x, np.zeros(taps + 1)])
    out = np.empty(len(positions))
    for start in range(0, len(positions), _CHUNK):
        p = positions[start:start + _CHUNK]
        base = np.floor(p).astype(np.int64)
        frac = p - base
        acc = np.zeros(len(p))
        for j in range(-taps, taps + 1):
            u = np.abs(frac - j) * (cutoff * _TABLE_RES)
            i = u.astype(np.int64)
            np.minimum(i, len(table) - 2, out=i)
            w = u - i
            k = table[i] * (1.0 - w) + table[i + 1] * w
            acc += xp[base + (j + taps + 1)] * k
        out[start:start + len(p)] = acc * cutoff
    return out


def resample(b: AudioBuffer, target_hz: int) -> AudioBuffer:
    """Windowed-sinc sample-rate conversion of a mono buffer.

    Output length is ``round(n * target / source)``. When downsampling the
    anti-aliasing corner sits at ``ROLLOFF`` times the target Nyquist rate.
    """
    x = b.signal
    target_hz = int(target_hz)
    if target_hz <= 0:
        raise ValueError(f"target_hz must be positive, got {target_hz}")
    if target_hz == b.sample_rate:
        return b
    ratio = target_hz / b.sample_rate
    n_out = int(round(len(x) * ratio))
    positions = np.arange(n_out) * (b.sample_rate / target_hz)
    y = _interpolate(x, positions, ROLLOFF * min(1.0, ratio))
    return AudioBuffer(np.clip(y, -1.0, 1.0)[np.newaxis, :], target_hz)


def speed_perturb(b: AudioBuffer, coeff: float, bounds=(0.85, 1.15)) -> AudioBuffer:
    """Play the signal back ``coeff`` times faster; pitch moves with tempo.

    The output keeps the sample rate and has ``round(n / coeff)`` samples.
    """
    lo, hi = bounds
    if not lo <= coeff <= hi:
        raise ValueError(f"speed coefficient {coeff} outside [{lo}, {hi}]")
    x = b.signal
    if coeff == 1.0:
        return b
    n_out = int(round(len(x) / coeff))
    positions = np.arange(n_out) * coeff
    y = _interpolate(x, positions, ROLLOFF * min(1.0, 1.0 / coeff))
    return AudioBuffer(np.clip(y, -1.0, 1.0)[np.newaxis, :], b.sample_rate)


def frame_rms(x: np.ndarray, frame_len: int) -> np.ndarray:
    """RMS of consecutive non-overlapping frames; a short final frame counts as a frame."""
    n = len(x)
    if n == 0:
        return np.zeros(0)
    n_frames = -(-n // frame_len)
    padded = np.zeros(n_frames * frame_len)
    padded[:n] = x
    sq = (padded ** 2).reshape(n_frames, frame_len).sum(axis=1)
    lengths = np.full(n_frames, frame_len)
    lengths[-1] = n - (n_frames - 1) * frame_len
    return np.sqrt(sq / lengths)


def voiced_ratio(b: AudioBuffer, p: SegmentationPolicy = SegmentationPolicy()) -> float:
    require_canonical(b)
    frame_len = max(1, int(round(p.frame_s * b.sample_rate)))
    rms = frame_rms(b.signal, frame_len)
    if len(rms) == 0:
        return 0.0
    return float(np.count_nonzero(rms > p.silence_rms_threshold)) / len(rms)


def find_cut_points(x: np.ndarray, sample_rate: int, p: SegmentationPolicy) -> list[int]:
    """Sample indices at which to split ``x``.

    Each nominal cut lies ``max_segment_s`` after the previous cut. The actual
    cut is the candidate within the preceding search window whose centred
    frame has the lowest RMS; ties go to the latest candidate.
    """
    max_len = int(math.floor(p.max_segment_s * sample_rate))
    window = int(round(p.boundary_search_window_s * sample_rate))
    frame_len = max(2, int(round(p.frame_s * sample_rate)))
    half = frame_len // 2
    step = max(1, half)
    csum = np.concatenate([[0.0], np.cumsum(x.astype(np.float64) ** 2)])
    cuts = []
    start = 0
    n = len(x)
    while n - start > max_len:
        nominal = start + max_len
        cands = np.arange(nominal, max(start + 1, nominal - window) - 1, -step)
        lo = np.clip(cands - half, 0, n)
        hi = np.clip(cands + half, 0, n)
        rms = np.sqrt((csum[hi] - csum[lo]) / np.maximum(hi - lo, 1))
        # cands runs from nominal backwards, so argmin picks the latest tie
        cut = int(cands[int(np.argmin(rms))])
        cuts.append(cut)
        start = cut
    return cuts


def segment(b: AudioBuffer, p: SegmentationPolicy = SegmentationPolicy()) -> list[AudioBuffer]:
    require_canonical(b)
    x = b.signal
    cuts = find_cut_points(x, b.sample_rate, p)
    if not cuts:
        return [b]
    edges = [0] + cuts + [len(x)]
    return [AudioBuffer(x[a:e][np.newaxis, :], b.sample_rate) for a, e in zip(edges, edges[1:])]
