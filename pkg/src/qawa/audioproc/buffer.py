from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CANONICAL_RATE = 16000


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """PCM signal as a ``(channels, frames)`` float array in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[np.newaxis, :]
        if s.ndim != 2 or s.shape[0] < 1:
            raise ValueError(f"samples must be (channels, frames), got shape {s.shape}")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if s.size and not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        if s.size and np.max(np.abs(s)) > 1.0:
            raise ValueError("samples must lie within [-1, 1]")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @classmethod
    def mono(cls, x, sample_rate: int = CANONICAL_RATE) -> "AudioBuffer":
        return cls(np.asarray(x, dtype=np.float64)[np.newaxis, :], sample_rate)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_frames(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.sample_rate

    @property
    def signal(self) -> np.ndarray:
        """The single channel of a mono buffer as a 1-D array."""
        if self.channels != 1:
            raise ValueError(f"expected a mono buffer, got {self.channels} channels")
        return self.samples[0]

    def is_canonical(self) -> bool:
        return self.channels == 1 and self.sample_rate == CANONICAL_RATE

    def __len__(self):
        return self.n_frames

    def __eq__(self, other):
        if not isinstance(other, AudioBuffer):
            return NotImplemented
        return (self.sample_rate == other.sample_rate
                and self.samples.shape == other.samples.shape
                and bool(np.array_equal(self.samples, other.samples)))

    __hash__ = None


def require_canonical(b: AudioBuffer) -> None:
    if not b.is_canonical():
        raise ValueError(f"expected mono {CANONICAL_RATE} Hz audio, got {b.channels} channel(s) "
                         f"at {b.sample_rate} Hz")
