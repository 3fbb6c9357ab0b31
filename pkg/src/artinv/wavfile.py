"""Minimal RIFF/WAVE reader and writer for mono uncompressed audio.

Supports 16-bit integer PCM (format tag 1) and 32-bit IEEE float (format
tag 3). Integer samples are scaled to [-1, 1] on read.
"""

from __future__ import annotations

import struct

import numpy as np


class WavError(IOError):
    pass


def read_wav(path):
    """Returns (samples float64 in [-1, 1], sample_rate)."""
    with open(path, "rb") as fh:
        riff = fh.read(12)
        if len(riff) != 12 or riff[:4] != b"RIFF" or riff[8:12] != b"WAVE":
            raise WavError(f"{path}: not a RIFF/WAVE file")
        fmt = None
        data = None
        while True:
            head = fh.read(8)
            if len(head) < 8:
                break
            tag, size = head[:4], struct.unpack("<I", head[4:])[0]
            body = fh.read(size)
            if len(body) < size:
                raise WavError(f"{path}: truncated chunk {tag!r}")
            if size % 2 == 1:
                fh.read(1)
            if tag == b"fmt ":
                fmt = body
            elif tag == b"data":
                data = body
        if fmt is None or data is None:
            raise WavError(f"{path}: missing fmt or data chunk")
        audio_format, channels, sample_rate, _, _, bits = struct.unpack("<HHIIHH", fmt[:16])
        if channels != 1:
            raise WavError(f"{path}: expected mono audio, got {channels} channels")
        if audio_format == 1 and bits == 16:
            samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
        elif audio_format == 3 and bits == 32:
            samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
        else:
            raise WavError(f"{path}: unsupported format tag {audio_format} / {bits}-bit")
        return samples, int(sample_rate)


def write_wav(path, samples, sample_rate, encoding="float32"):
    samples = np.asarray(samples, dtype=np.float64)
    if encoding == "float32":
        payload = samples.astype("<f4").tobytes()
        audio_format, bits = 3, 32
    elif encoding == "pcm16":
        scaled = np.clip(np.rint(samples * 32768.0), -32768, 32767)
        payload = scaled.astype("<i2").tobytes()
        audio_format, bits = 1, 16
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    block_align = bits // 8
    fmt = struct.pack("<HHIIHH", audio_format, 1, sample_rate,
                      sample_rate * block_align, block_align, bits)
    with open(path, "wb") as fh:
        fh.write(b"RIFF")
        fh.write(struct.pack("<I", 4 + 8 + len(fmt) + 8 + len(payload)))
        fh.write(b"WAVE")
        fh.write(b"fmt ")
        fh.write(struct.pack("<I", len(fmt)))
        fh.write(fmt)
        fh.write(b"data")
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        if len(payload) % 2 == 1:
            fh.write(b"\x00")
