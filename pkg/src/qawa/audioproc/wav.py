"""RIFF/WAVE reading and writing.

Reading accepts 16-bit PCM and 32-bit IEEE float (plain or
WAVE_FORMAT_EXTENSIBLE). Writing always produces 16-bit PCM little-endian.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .buffer import AudioBuffer

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class WavError(ValueError):
    pass


def _read_chunks(data: bytes, path):
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if body + size > len(data):
            raise WavError(f"{path}: truncated {cid.decode('latin-1')!r} chunk "
                           f"({size} bytes declared, {len(data) - body} present)")
        yield cid, data[body:body + size]
        pos = body + size + (size & 1)


def decode_wav(path) -> AudioBuffer:
    with open(path, "rb") as f:
        raw = f.read()
    fmt = None
    payload = None
    for cid, body in _read_chunks(raw, path):
        if cid == b"fmt ":
            if len(body) < 16:
                raise WavError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 26:
                    raise WavError(f"{path}: extensible fmt chunk too short")
                (sub,) = struct.unpack_from("<H", body, 24)
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            payload = body
            break
    if fmt is None:
        raise WavError(f"{path}: missing fmt chunk")
    if payload is None:
        raise WavError(f"{path}: missing data chunk")
    tag, channels, rate, _, block_align, bits = fmt
    if channels < 1 or rate < 1:
        raise WavError(f"{path}: invalid header (channels={channels}, rate={rate})")
    if tag == WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = "<i2", 1.0 / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = "<f4", 1.0
    else:
        raise WavError(f"{path}: unsupported codec (format tag 0x{tag:04x}, {bits} bits)")
    if block_align != channels * bits // 8:
        raise WavError(f"{path}: inconsistent block alignment {block_align}")
    n = len(payload) // block_align
    samples = np.frombuffer(payload[:n * block_align], dtype=dtype).astype(np.float64) * scale
    samples = samples.reshape(n, channels).T
    if tag == WAVE_FORMAT_IEEE_FLOAT:
        if not np.all(np.isfinite(samples)):
            raise WavError(f"{path}: non-finite float samples")
        samples = np.clip(samples, -1.0, 1.0)
    return AudioBuffer(samples, rate)


def quantize16(samples: np.ndarray) -> np.ndarray:
    return np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")


def encode_wav(buffer: AudioBuffer, path) -> None:
    pcm = quantize16(buffer.samples).T.tobytes()
    channels = buffer.channels
    header = b"RIFF" + struct.pack("<I", 36 + len(pcm)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, WAVE_FORMAT_PCM, channels, buffer.sample_rate,
                                    buffer.sample_rate * channels * 2, channels * 2, 16)
    header += b"data" + struct.pack("<I", len(pcm))
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(header)
        f.write(pcm)
