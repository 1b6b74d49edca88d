"""Shared data structures: spectrogram tensors, demixing state, covariances."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


class InvalidPartitionError(ValueError):
    """Raised when the number of SOIs is not in 1..M."""


class DimensionMismatchError(ValueError):
    pass


@dataclass
class SpectrogramTensor:
    """One-sided multichannel STFT data.

    Parameters
    ----------
    data:
        Complex array of shape ``(n_freq, n_frames, n_channels)``.
    sample_rate:
        Sampling rate in Hz.
    fft_size, hop:
        Transform parameters the tensor was produced with.
    """

    data: np.ndarray
    sample_rate: float
    fft_size: int
    hop: int

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.ndim != 3:
            raise DimensionMismatchError(
                f"expected (K, N, M) array, got shape {self.data.shape}"
            )
        if min(self.data.shape) < 1:
            raise DimensionMismatchError(f"empty dimension in {self.data.shape}")
        if self.data.shape[0] != self.fft_size // 2 + 1:
            raise DimensionMismatchError(
                f"{self.data.shape[0]} bins do not match fft_size={self.fft_size}"
            )

    @property
    def num_freqs(self) -> int:
        return self.data.shape[0]

    @property
    def num_frames(self) -> int:
        return self.data.shape[1]

    @property
    def num_channels(self) -> int:
        return self.data.shape[2]

    def bin_frequencies(self) -> np.ndarray:
        """Centre frequency in Hz of every bin."""
        return np.arange(self.num_freqs) * self.sample_rate / self.fft_size

    def with_data(self, data: np.ndarray) -> "SpectrogramTensor":
        return replace(self, data=data)


@dataclass
class DemixingState:
    """Per-frequency demixing matrices with the SOI/background partition.

    ``W[k]`` is ``M x M``; rows ``0..S-1`` are SOI filters ``w^H`` and, when
    ``S < M``, rows ``S..M-1`` are ``[E_k, -I]``.
    """

    W: np.ndarray
    num_soi: int

    def __post_init__(self) -> None:
        self.W = np.asarray(self.W, dtype=np.complex128)
        if self.W.ndim != 3 or self.W.shape[1] != self.W.shape[2]:
            raise DimensionMismatchError(f"bad demixing shape {self.W.shape}")
        _check_partition(self.W.shape[1], self.num_soi)

    @property
    def num_channels(self) -> int:
        return self.W.shape[1]

    @property
    def num_freqs(self) -> int:
        return self.W.shape[0]

    @property
    def has_background(self) -> bool:
        return self.num_soi < self.num_channels

    @property
    def soi(self) -> np.ndarray:
        return self.W[:, : self.num_soi, :]

    @property
    def background(self) -> np.ndarray:
        return self.W[:, self.num_soi :, :]

    def copy(self) -> "DemixingState":
        return DemixingState(self.W.copy(), self.num_soi)


@dataclass
class DemixedVariance:
    """Variance proxy ``r`` of shape ``(S, K, N)``, floored."""

    r: np.ndarray
    floor: float = 1e-12
    broadband: bool = field(default=True)


def _check_partition(M: int, S: int) -> None:
    if not (1 <= S <= M):
        raise InvalidPartitionError(f"number of SOIs must be in 1..{M}, got {S}")


def new_demixing_state(M: int, S: int, num_freqs: int = 1) -> DemixingState:
    """Initial demixing matrices: identity on SOI rows, ``-I`` on background rows."""
    _check_partition(M, S)
    diag = np.ones(M, dtype=np.complex128)
    diag[S:] = -1.0
    W = np.broadcast_to(np.diag(diag), (num_freqs, M, M)).copy()
    return DemixingState(W, S)


def apply_demixing(W: DemixingState, X: SpectrogramTensor) -> SpectrogramTensor:
    """``y_{k,n} = W_k x_{k,n}`` for every bin; returns all M output channels."""
    if W.num_channels != X.num_channels:
        raise DimensionMismatchError(
            f"demixing has {W.num_channels} channels, data has {X.num_channels}"
        )
    if W.num_freqs not in (1, X.num_freqs):
        raise DimensionMismatchError(
            f"demixing has {W.num_freqs} bins, data has {X.num_freqs}"
        )
    Y = np.einsum("kmc,knc->knm", W.W, X.data)
    return X.with_data(Y)


def enforce_bg_structure(W: DemixingState) -> DemixingState:
    """Overwrite the right block of the background rows with exactly ``-I``."""
    out = W.copy()
    S, M = W.num_soi, W.num_channels
    if S < M:
        out.W[:, S:, S:] = -np.eye(M - S)
    return out
