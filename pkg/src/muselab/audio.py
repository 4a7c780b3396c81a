"""Mono audio container and WAV file I/O."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .errors import InputError


@dataclass(frozen=True)
class AudioClip:
    """Mono audio, amplitude in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise InputError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InputError(f"expected mono samples, got shape {samples.shape}")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


def load_wav(path) -> AudioClip:
    """Read a WAV file (PCM 16-bit or float32), downmixing to mono."""
    rate, data = wavfile.read(path)
    return _to_clip(rate, data)


def load_wav_bytes(payload: bytes) -> AudioClip:
    rate, data = wavfile.read(io.BytesIO(payload))
    return _to_clip(rate, data)


def _to_clip(rate: int, data: np.ndarray) -> AudioClip:
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    else:
        samples = data.astype(np.float64)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return AudioClip(samples=samples, sample_rate=int(rate))


def save_wav(path, clip: AudioClip) -> None:
    """Write 16-bit PCM WAV; samples are clipped to [-1, 1]."""
    scaled = np.clip(clip.samples, -1.0, 1.0)
    pcm = (scaled * 32767.0).astype(np.int16)
    wavfile.write(path, clip.sample_rate, pcm)


def wav_bytes(clip: AudioClip) -> bytes:
    buf = io.BytesIO()
    scaled = np.clip(clip.samples, -1.0, 1.0)
    wavfile.write(buf, clip.sample_rate, (scaled * 32767.0).astype(np.int16))
    return buf.getvalue()
