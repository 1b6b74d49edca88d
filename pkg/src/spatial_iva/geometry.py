"""Free-field steering vectors and spatial prior structures."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

SPEED_OF_SOUND = 343.0

PRIOR_KINDS = ("none", "quadratic_one", "quadratic_null", "euclidean_one")


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions in metres, shape ``(M, 3)``; mic 0 is the phase reference."""

    mic_positions: np.ndarray
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self) -> None:
        pos = np.atleast_2d(np.asarray(self.mic_positions, dtype=float))
        if pos.shape[1] == 2:
            pos = np.hstack([pos, np.zeros((pos.shape[0], 1))])
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ValueError(f"mic_positions must be (M, 3), got {pos.shape}")
        if self.speed_of_sound <= 0:
            raise ValueError("speed of sound must be positive")
        d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        if np.any(d[np.triu_indices(len(pos), 1)] == 0):
            raise ValueError("microphone positions must be distinct")
        object.__setattr__(self, "mic_positions", pos)

    @property
    def num_mics(self) -> int:
        return self.mic_positions.shape[0]

    def reference_distances(self) -> np.ndarray:
        """``||r_m - r_1||`` for every microphone."""
        return np.linalg.norm(self.mic_positions - self.mic_positions[0], axis=1)

    @classmethod
    def uniform_linear(cls, num_mics: int, spacing: float, speed_of_sound: float = SPEED_OF_SOUND):
        pos = np.zeros((num_mics, 3))
        pos[:, 0] = spacing * np.arange(num_mics)
        return cls(pos, speed_of_sound)


def steering_vector(geom: ArrayGeometry, freq: float | np.ndarray, theta: float) -> np.ndarray:
    """Far-field steering vector(s).

    ``freq`` may be a scalar (returns ``(M,)``) or an array of bin
    frequencies (returns ``(K, M)``).
    """
    freq = np.asarray(freq, dtype=float)
    if np.any(freq < 0):
        raise ValueError("frequency must be nonnegative")
    phase = (2 * np.pi / geom.speed_of_sound) * np.multiply.outer(
        freq, geom.reference_distances() * np.cos(theta)
    )
    return np.exp(1j * phase)


def _outer_sum(geom, freq, doas, weights) -> np.ndarray:
    freq = np.asarray(freq, dtype=float)
    M = geom.num_mics
    acc = np.zeros(freq.shape + (M, M), dtype=np.complex128)
    if len(doas) != len(weights):
        raise ValueError("one weight per direction is required")
    for theta, lam in zip(doas, weights):
        if lam < 0:
            raise ValueError("direction weights must be nonnegative")
        h = steering_vector(geom, freq, theta)
        acc += lam * h[..., :, None] * h[..., None, :].conj()
    return acc


def precision_null(geom, freq, doas, lambda_tik: float, weights) -> np.ndarray:
    """``lambda_tik I + sum_i lambda_i h h^H`` (penalises response toward ``doas``)."""
    if lambda_tik <= 0:
        raise ValueError("lambda_tik must be positive for the null precision")
    P = lambda_tik * np.eye(geom.num_mics) + _outer_sum(geom, freq, doas, weights)
    return 0.5 * (P + np.swapaxes(P, -1, -2).conj())


def precision_one(geom, freq, doas, lambda_tik: float, weights) -> np.ndarray:
    """``lambda_tik I - sum_i lambda_i h h^H`` (rewards response toward ``doas``).

    May be indefinite; the caller adds it to a positive definite covariance.
    """
    if lambda_tik <= 0:
        raise ValueError("lambda_tik must be positive")
    P = lambda_tik * np.eye(geom.num_mics) - _outer_sum(geom, freq, doas, weights)
    return 0.5 * (P + np.swapaxes(P, -1, -2).conj())


def euclidean_prior_target(geom, freq, theta: float) -> np.ndarray:
    return steering_vector(geom, freq, theta)


@dataclass
class ChannelPrior:
    """Prior on one SOI filter. Angles in radians."""

    kind: str = "none"
    doas: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    lambda_tik: float = 1.0
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"unknown prior kind {self.kind!r}")
        self.doas = tuple(float(a) for a in self.doas)
        self.weights = tuple(float(a) for a in self.weights)
        if self.kind == "euclidean_one" and len(self.doas) != 1:
            raise ValueError("the Euclidean prior needs exactly one target direction")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")


@dataclass
class BackgroundPrior:
    """Null-type prior shared by all background filters."""

    doas: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    lambda_tik: float = 1.0
    gamma: float = 0.0

    @property
    def active(self) -> bool:
        return len(self.doas) > 0


@dataclass
class PriorSpec:
    """Priors per SOI channel (``channels[q]``) plus an optional background prior."""

    channels: list[ChannelPrior] = field(default_factory=list)
    background: BackgroundPrior | None = None

    def channel(self, q: int) -> ChannelPrior:
        return self.channels[q] if q < len(self.channels) else ChannelPrior()

    def quadratic_set(self) -> list[int]:
        return [q for q, c in enumerate(self.channels) if c.kind.startswith("quadratic")]

    def euclidean_set(self) -> list[int]:
        return [q for q, c in enumerate(self.channels) if c.kind == "euclidean_one"]


@dataclass
class BuiltPriors:
    """Prior arrays evaluated on a frequency grid.

    ``precisions[q]`` is ``(K, M, M)`` for quadratic channels,
    ``targets[q]`` is ``(K, M)`` for Euclidean channels.
    """

    spec: PriorSpec
    precisions: dict[int, np.ndarray]
    targets: dict[int, np.ndarray]
    bg_precision: np.ndarray | None

    @classmethod
    def empty(cls) -> "BuiltPriors":
        return cls(PriorSpec(), {}, {}, None)


def build_priors(spec: PriorSpec, geom: ArrayGeometry, freqs: np.ndarray) -> BuiltPriors:
    precisions, targets = {}, {}
    for q, c in enumerate(spec.channels):
        if c.kind == "quadratic_null":
            precisions[q] = precision_null(geom, freqs, c.doas, c.lambda_tik, c.weights)
        elif c.kind == "quadratic_one":
            P = precision_one(geom, freqs, c.doas, c.lambda_tik, c.weights)
            lo = np.linalg.eigvalsh(P).min()
            if lo < 0:
                logger.warning(
                    "spatial-one precision of channel %d is indefinite (min eigenvalue %.3g); "
                    "the update needs V + gamma P to stay positive definite",
                    q + 1,
                    lo,
                )
            precisions[q] = P
        elif c.kind == "euclidean_one":
            targets[q] = euclidean_prior_target(geom, freqs, c.doas[0])
    bg = None
    if spec.background is not None and spec.background.active:
        b = spec.background
        bg = precision_null(geom, freqs, b.doas, b.lambda_tik, b.weights)
    return BuiltPriors(spec, precisions, targets, bg)


def _quad(P: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.einsum("km,kmn,kn->k", w.conj(), P, w).real


def prior_penalty(W, priors: BuiltPriors, include_background: bool = True) -> float:
    """Total prior cost summed over frequency.

    ``W`` is a :class:`DemixingState`; filters are ``w = conj(row)``. The
    background term uses the untransformed rows of ``[E, -I]``.
    """
    spec = priors.spec
    if len(spec.channels) > W.num_soi:
        raise ValueError("prior specified for more channels than there are SOIs")
    total = 0.0
    for q, P in priors.precisions.items():
        w = W.W[:, q, :].conj()
        total += spec.channels[q].gamma * _quad(P, w).sum()
    for q, h in priors.targets.items():
        w = W.W[:, q, :].conj()
        total += spec.channels[q].gamma * (np.abs(w - h) ** 2).sum()
    if include_background and priors.bg_precision is not None and W.has_background:
        gamma = spec.background.gamma
        for j in range(W.num_soi, W.num_channels):
            total += gamma * _quad(priors.bg_precision, W.W[:, j, :].conj()).sum()
    return float(total)
