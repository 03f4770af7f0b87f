"""MFCC and power-spectrum front end."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dct

from .buffer import AudioBuffer, require_canonical

FEATURE_MAGIC = b"QAWF"
_HEADER = struct.Struct("<4sIII")  # magic, rows, cols, reserved


@dataclass(frozen=True)
class FeatureConfig:
    n_mfcc: int = 13
    window_s: float = 0.025
    hop_s: float = 0.010
    derivative_orders: int = 2
    power_spectrum_bins: int = 257
    normalize_per_sequence: bool = True
    n_mels: int = 26
    low_hz: float = 0.0
    high_hz: float = 8000.0

    def __post_init__(self):
        fft = 2 * (self.power_spectrum_bins - 1)
        if fft < 2 or fft & (fft - 1):
            raise ValueError("power_spectrum_bins must be fft_size/2 + 1 for a power-of-two fft_size")
        if self.derivative_orders < 0:
            raise ValueError("derivative_orders must be >= 0")

    @property
    def fft_size(self) -> int:
        return 2 * (self.power_spectrum_bins - 1)


def _frames(b: AudioBuffer, cfg: FeatureConfig) -> np.ndarray:
    require_canonical(b)
    x = b.signal
    win = int(round(cfg.window_s * b.sample_rate))
    hop = int(round(cfg.hop_s * b.sample_rate))
    if win > cfg.fft_size:
        raise ValueError(f"window of {win} samples exceeds FFT size {cfg.fft_size}")
    if len(x) < win:
        raise ValueError(f"signal of {len(x)} samples is shorter than one {win}-sample window")
    n = (len(x) - win) // hop + 1
    idx = np.arange(win)[np.newaxis, :] + hop * np.arange(n)[:, np.newaxis]
    return x[idx] * np.hamming(win)


def power_spectrum(b: AudioBuffer, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """One-sided power spectrum per frame, scaled so each row sums to the frame energy.

    Interior bins are doubled to account for the mirrored negative
    frequencies and all bins are divided by the FFT size, so Parseval's
    identity holds row by row against the Hamming-windowed frame.
    """
    frames = _frames(b, cfg)
    spec = np.abs(np.fft.rfft(frames, n=cfg.fft_size, axis=1)) ** 2 / cfg.fft_size
    spec[:, 1:-1] *= 2.0
    return spec


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(n_mels: int, fft_size: int, sample_rate: int, low_hz: float, high_hz: float) -> np.ndarray:
    """Triangular filters equally spaced on the mel scale, evaluated at FFT bin centres."""
    edges = mel_to_hz(np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), n_mels + 2))
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    fb = np.zeros((n_mels, len(freqs)))
    for m in range(n_mels):
        left, centre, right = edges[m], edges[m + 1], edges[m + 2]
        rise = (freqs - left) / (centre - left)
        fall = (right - freqs) / (right - centre)
        fb[m] = np.clip(np.minimum(rise, fall), 0.0, None)
    fb.setflags(write=False)
    return fb


def deltas(feats: np.ndarray, width: int = 2) -> np.ndarray:
    """Regression deltas over +-width frames with edge frames repeated."""
    n = len(feats)
    padded = np.pad(feats, ((width, width), (0, 0)), mode="edge")
    denom = 2.0 * sum(k * k for k in range(1, width + 1))
    out = np.zeros_like(feats)
    for k in range(1, width + 1):
        out += k * (padded[width + k:width + k + n] - padded[width - k:width - k + n])
    return out / denom


def normalize_columns(feats: np.ndarray) -> np.ndarray:
    """Zero mean, unit population std per column; constant columns become 0."""
    mean = feats.mean(axis=0)
    centred = feats - mean
    std = np.sqrt((centred ** 2).mean(axis=0))
    const = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    scale = np.where(const, 1.0, std)
    out = centred / scale
    out[:, const] = 0.0
    return out


def mfcc(b: AudioBuffer, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Static cepstra followed by each derivative order, one row per frame."""
    spec = power_spectrum(b, cfg)
    fb = mel_filterbank(cfg.n_mels, cfg.fft_size, b.sample_rate, cfg.low_hz, cfg.high_hz)
    energies = np.log(np.maximum(spec @ fb.T, 1e-10))
    static = dct(energies, type=2, axis=1, norm="ortho")[:, :cfg.n_mfcc]
    blocks = [static]
    for _ in range(cfg.derivative_orders):
        blocks.append(deltas(blocks[-1]))
    feats = np.hstack(blocks)
    if cfg.normalize_per_sequence:
        feats = normalize_columns(feats)
    return feats


def write_features(matrix: np.ndarray, path) -> None:
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(FEATURE_MAGIC, m.shape[0], m.shape[1], 0))
        f.write(m.tobytes())


def read_features(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated feature header")
    magic, rows, cols, _ = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    body = raw[_HEADER.size:]
    if len(body) != rows * cols * 4:
        raise ValueError(f"{path}: expected {rows * cols * 4} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).copy()
