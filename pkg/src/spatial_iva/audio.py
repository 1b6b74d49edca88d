"""WAV reading and atomic 32-bit float WAV writing."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from scipy.io import wavfile

_INT_SCALE = {np.dtype("int16"): 2**15, np.dtype("int32"): 2**31, np.dtype("uint8"): 2**7}


def read_wav(path) -> tuple[np.ndarray, float]:
    """Return ``(audio (channels, samples) float64, sample_rate)``."""
    fs, data = wavfile.read(path)
    data = np.asarray(data)
    if data.dtype == np.uint8:
        data = data.astype(np.float64) - 128.0
        data /= _INT_SCALE[np.dtype("uint8")]
    elif data.dtype in _INT_SCALE:
        data = data.astype(np.float64) / _INT_SCALE[data.dtype]
    else:
        data = data.astype(np.float64)
    if data.ndim == 1:
        data = data[:, None]
    return np.ascontiguousarray(data.T), float(fs)


def write_wav(path, audio: np.ndarray, sample_rate: float) -> None:
    """Write ``(channels, samples)`` or 1-D audio as float32, via temp file and rename."""
    audio = np.asarray(audio, dtype=np.float32)
    if audio.ndim == 2:
        audio = audio.T if audio.shape[0] > 1 else audio[0]
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    if int(sample_rate) != sample_rate:
        raise ValueError("WAV files need an integer sample rate")
    wavfile.write(tmp, int(sample_rate), audio)
    os.replace(tmp, path)
