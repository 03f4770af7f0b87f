"""Audio decoding, canonicalization, segmentation and feature extraction."""

from .buffer import CANONICAL_RATE, AudioBuffer, require_canonical
from .dsp import (
    SegmentationPolicy,
    find_cut_points,
    resample,
    segment,
    speed_perturb,
    to_mono,
    voiced_ratio,
)
from .features import (
    FeatureConfig,
    mfcc,
    power_spectrum,
    read_features,
    write_features,
)
from .wav import WavError, decode_wav, encode_wav


def to_canonical(b: AudioBuffer) -> AudioBuffer:
    """Mono, 16 kHz."""
    return resample(to_mono(b), CANONICAL_RATE)


__all__ = [
    "AudioBuffer", "CANONICAL_RATE", "FeatureConfig", "SegmentationPolicy", "WavError",
    "decode_wav", "encode_wav", "find_cut_points", "mfcc", "power_spectrum", "read_features",
    "require_canonical", "resample", "segment", "speed_perturb", "to_canonical", "to_mono",
    "voiced_ratio", "write_features",
]
