"""STFT analysis and weighted overlap-add synthesis (sqrt-Hann pair)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import SpectrogramTensor


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 2048
    hop: int = 1024
    window: str = "vonhann"
    sample_rate: float = 16000.0

    def __post_init__(self) -> None:
        if self.window != "vonhann":
            raise ValueError(f"unsupported window {self.window!r}")
        if self.fft_size < 2 or self.fft_size % 2:
            raise ValueError("fft_size must be even and >= 2")
        if self.hop < 1 or self.fft_size % self.hop:
            raise ValueError("hop must divide fft_size")
        # sqrt-Hann analysis/synthesis is COLA for hops of N/2, N/4, ...
        ratio = self.fft_size // self.hop
        if ratio < 2 or ratio & (ratio - 1):
            raise ValueError("hop must be fft_size / 2^j with j >= 1")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")


def sqrt_hann(n: int) -> np.ndarray:
    """Square root of the periodic (DFT-even) von Hann window."""
    return np.sqrt(0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n))


def _cola_gain(cfg: StftConfig) -> float:
    # sum_m hann(n - m*hop) is constant; it equals fft_size / (2 hop)
    return cfg.fft_size / (2 * cfg.hop)


def num_frames(length: int, cfg: StftConfig) -> int:
    return (length - cfg.fft_size) // cfg.hop + 1


def analyze(audio: np.ndarray, cfg: StftConfig) -> SpectrogramTensor:
    """Multichannel STFT.

    Parameters
    ----------
    audio:
        Real array ``(n_channels, n_samples)`` or 1-D for a single channel.

    Returns
    -------
    SpectrogramTensor with ``fft_size // 2 + 1`` bins and
    ``floor((len - fft_size) / hop) + 1`` frames.
    """
    audio = np.asarray(audio, dtype=np.float64)
    if audio.ndim == 1:
        audio = audio[None, :]
    if audio.ndim != 2 or audio.size == 0:
        raise ValueError("audio must be a non-empty (channels, samples) array")
    if audio.shape[1] < cfg.fft_size:
        raise ValueError(
            f"signal of {audio.shape[1]} samples is shorter than fft_size={cfg.fft_size}"
        )
    n = num_frames(audio.shape[1], cfg)
    idx = np.arange(cfg.fft_size)[None, :] + cfg.hop * np.arange(n)[:, None]
    frames = audio[:, idx] * sqrt_hann(cfg.fft_size)  # (M, N, F)
    spec = np.fft.rfft(frames, axis=-1)  # (M, N, K)
    return SpectrogramTensor(
        np.ascontiguousarray(spec.transpose(2, 1, 0)),
        sample_rate=cfg.sample_rate,
        fft_size=cfg.fft_size,
        hop=cfg.hop,
    )


def synthesize(X: SpectrogramTensor, cfg: StftConfig, length: int | None = None) -> np.ndarray:
    """Inverse of :func:`analyze` by weighted overlap-add.

    Returns an array ``(n_channels, n_samples)``; ``length`` pads with zeros
    or truncates to a requested sample count.
    """
    if (X.fft_size, X.hop) != (cfg.fft_size, cfg.hop) or X.sample_rate != cfg.sample_rate:
        raise ValueError("spectrogram metadata does not match the STFT config")
    K, N, M = X.data.shape
    frames = np.fft.irfft(X.data.transpose(2, 1, 0), n=cfg.fft_size, axis=-1)
    frames *= sqrt_hann(cfg.fft_size) / _cola_gain(cfg)
    total = (N - 1) * cfg.hop + cfg.fft_size
    out = np.zeros((M, total))
    for n in range(N):
        out[:, n * cfg.hop : n * cfg.hop + cfg.fft_size] += frames[:, n, :]
    if length is not None:
        if length <= total:
            out = out[:, :length]
        else:
            out = np.pad(out, ((0, 0), (0, length - total)))
    return out
