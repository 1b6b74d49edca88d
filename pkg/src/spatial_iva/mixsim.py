"""Deterministic synthetic scenes: plane-wave fractional delays, a reverb proxy and calibrated noise."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve, lfilter

from .geometry import ArrayGeometry

FD_ORDER = 64
ROOM_VOLUME = 50.0  # m^3, only sets the critical distance of the reverb proxy
ROOM_T60 = {1: 0.2, 2: 0.4}

# digitised layout of the reference scene: (DOA degrees, distance m)
PRESET_SOURCES = (
    (150.0, 1.0),
    (90.0, 1.0),
    (30.0, 1.0),
    (180.0, 2.0),
    (130.1, 2.0),
    (70.1, 2.0),
    (110.5, 4.0),
    (48.8, 4.0),
)
PRESET_SPACING = 0.042
PRESET_MICS = 4
NUM_PERMUTATIONS = 20


@dataclass(frozen=True)
class SourceSpec:
    doa: float  # radians, 0 along the array axis
    distance: float
    signal: int


@dataclass
class ScenarioSpec:
    """Scene description. ``target`` indexes ``sources`` (0-based)."""

    geometry: ArrayGeometry
    sources: list[SourceSpec]
    snr_db: float = 30.0
    reverb_tail: tuple[float, int] | None = None  # (t60 seconds, seed)
    seed: int = 0
    duration: float = 10.0
    sample_rate: float = 16000.0
    target: int = 0

    def __post_init__(self) -> None:
        self.sources = [s if isinstance(s, SourceSpec) else SourceSpec(*s) for s in self.sources]
        if not self.sources:
            raise ValueError("a scene needs at least one source")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError("snr_db must be a number or +inf")
        if self.duration <= 0 or self.sample_rate <= 0:
            raise ValueError("duration and sample_rate must be positive")
        if not 0 <= self.target < len(self.sources):
            raise ValueError("target index out of range")
        if self.reverb_tail is not None and self.reverb_tail[0] <= 0:
            raise ValueError("t60 must be positive")

    @property
    def num_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


@dataclass
class SimResult:
    """``mix`` is ``(M, T)``; ``images`` is ``(Q, M, T)``, the clean contribution of every source."""

    mix: np.ndarray
    images: np.ndarray
    noise: np.ndarray = field(repr=False)

    @property
    def references(self) -> np.ndarray:
        """Source images at the reference microphone, ``(Q, T)``."""
        return self.images[:, 0, :]


# ----------------------------------------------------------------------------
# signal generation


def speech_like(num_samples: int, sample_rate: float, rng: np.random.Generator) -> np.ndarray:
    """Laplacian-modulated coloured noise with syllable-rate envelope and pauses.

    Spectral colour changes every 100 ms through a random two-pole resonance
    on top of a pink-ish tilt, which gives the signal the time-varying
    broadband power that IVA source models rely on.
    """
    seg = max(int(0.1 * sample_rate), 1)
    n_seg = -(-num_samples // seg)
    white = rng.standard_normal(n_seg * seg)
    out = np.empty_like(white)
    zi = np.zeros(2)
    for i in range(n_seg):
        f0 = rng.uniform(200.0, 0.35 * sample_rate)
        r = rng.uniform(0.85, 0.97)
        a = [1.0, -2 * r * math.cos(2 * math.pi * f0 / sample_rate), r * r]
        out[i * seg : (i + 1) * seg], zi = lfilter([1.0], a, white[i * seg : (i + 1) * seg], zi=zi)
    # gentle low-pass tilt
    out = fftconvolve(out, np.array([1.0, 0.7, 0.3]), mode="same")
    # 25 ms envelope blocks, Laplacian amplitudes, about 20 percent silence
    blk = max(int(0.025 * sample_rate), 1)
    n_blk = -(-len(out) // blk)
    amp = np.abs(rng.laplace(size=n_blk))
    amp[rng.uniform(size=n_blk) < 0.2] = 0.0
    env = np.repeat(amp, blk)[: len(out)]
    env = fftconvolve(env, np.hanning(blk) / np.hanning(blk).sum(), mode="same")
    sig = (out * env)[:num_samples]
    return sig / (np.std(sig) + 1e-300)


def scene_signals(spec: ScenarioSpec) -> np.ndarray:
    """Deterministic signal for every source, ``(Q, T)``, keyed by signal id and seed."""
    out = []
    for s in spec.sources:
        rng = np.random.default_rng([spec.seed, s.signal])
        out.append(speech_like(spec.num_samples, spec.sample_rate, rng))
    return np.stack(out)


# ----------------------------------------------------------------------------
# propagation


def _window(x: np.ndarray, half: float) -> np.ndarray:
    # Blackman evaluated continuously on [-half, half]
    t = np.clip(x / half, -1.0, 1.0)
    return 0.42 + 0.5 * np.cos(np.pi * t) + 0.08 * np.cos(2 * np.pi * t)


def fractional_delay(x: np.ndarray, delay: float, order: int = FD_ORDER) -> np.ndarray:
    """Delay ``x`` by ``delay`` samples (negative advances); output length unchanged.

    Integer part by shifting, remainder by a windowed sinc with ``order + 1`` taps.
    Zero delay is the identity.
    """
    D = int(np.round(delay))
    frac = delay - D
    y = x
    if frac != 0.0:
        half = order // 2
        n = np.arange(-half, half + 1)
        h = np.sinc(n - frac) * _window(n - frac, half + 1)
        y = fftconvolve(x, h)[half : half + len(x)]
    if D > 0:
        y = np.concatenate([np.zeros(min(D, len(x))), y[: max(len(x) - D, 0)]])
    elif D < 0:
        y = np.concatenate([y[-D:], np.zeros(min(-D, len(x)))])
    return np.array(y, dtype=float, copy=True)


def relative_delays(geom: ArrayGeometry, theta: float) -> np.ndarray:
    """Per-mic advance in seconds, ``||r_m - r_1|| cos(theta) / c``."""
    return geom.reference_distances() * math.cos(theta) / geom.speed_of_sound


def critical_distance(t60: float, volume: float = ROOM_VOLUME) -> float:
    return 0.057 * math.sqrt(volume / t60)


def reverb_tail(t60: float, distance: float, sample_rate: float, rng: np.random.Generator) -> np.ndarray:
    """Velvet-noise tail with exponential decay.

    Energy relative to the unit direct path is ``(distance / d_c) ** 2``.
    Index 0 is the direct-path instant and is left empty.
    """
    length = max(int(2 * t60 * sample_rate), 2)
    density = 2000.0 / sample_rate
    pulses = (rng.uniform(size=length) < density) * rng.choice([-1.0, 1.0], size=length)
    pulses[: max(int(1e-3 * sample_rate), 1)] = 0.0
    t = np.arange(length) / sample_rate
    tail = pulses * np.exp(-3 * math.log(10) * t / t60)
    e = np.sum(tail**2)
    if e == 0:
        return tail
    return tail * (distance / critical_distance(t60)) / math.sqrt(e)


def simulate(spec: ScenarioSpec, signals: np.ndarray) -> SimResult:
    """Render the microphone mixture and every source image."""
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    Q, T = len(spec.sources), spec.num_samples
    if signals.shape[0] != Q:
        raise ValueError(f"{signals.shape[0]} signals for {Q} sources")
    if signals.shape[1] < T:
        raise ValueError(f"signals have {signals.shape[1]} samples, scene needs {T}")
    signals = signals[:, :T]
    geom = spec.geometry
    M = geom.num_mics
    images = np.zeros((Q, M, T))
    for i, src in enumerate(spec.sources):
        adv = relative_delays(geom, src.doa) * spec.sample_rate
        for m in range(M):
            images[i, m] = fractional_delay(signals[i], -adv[m])
        if spec.reverb_tail is not None:
            t60, rseed = spec.reverb_tail
            for m in range(M):
                rng = np.random.default_rng([rseed, i, m])
                tail = reverb_tail(t60, src.distance, spec.sample_rate, rng)
                images[i, m] += fftconvolve(signals[i], tail)[:T]
    clean = images.sum(axis=0)
    noise = np.zeros_like(clean)
    if spec.snr_db != math.inf:
        rng = np.random.default_rng([spec.seed, 7919])
        noise = rng.standard_normal(clean.shape)
        gain = math.sqrt(np.sum(clean**2) / (np.sum(noise**2) * 10 ** (spec.snr_db / 10)))
        noise *= gain
    return SimResult(clean + noise, images, noise)


def measured_snr(result: SimResult) -> float:
    clean = result.images.sum(axis=0)
    return 10 * math.log10(np.sum(clean**2) / np.sum(result.noise**2))


# ----------------------------------------------------------------------------
# preset


def preset_geometry() -> ArrayGeometry:
    """ULA centred at the origin along x, mic 1 at the negative end."""
    g = ArrayGeometry.uniform_linear(PRESET_MICS, PRESET_SPACING)
    pos = g.mic_positions - g.mic_positions.mean(axis=0)
    return ArrayGeometry(pos, g.speed_of_sound)


def permutation_assignment(index: int) -> tuple[int, ...]:
    """Signal ids for the 8 positions; ``index`` in 1..20 picks lexicographic rank ``(index-1)*2016``."""
    if not 1 <= index <= NUM_PERMUTATIONS:
        raise ValueError(f"permutation index must be in 1..{NUM_PERMUTATIONS}")
    rank = (index - 1) * (math.factorial(8) // NUM_PERMUTATIONS)
    pool = list(range(8))
    out = []
    for k in range(8, 0, -1):
        f = math.factorial(k - 1)
        j, rank = divmod(rank, f)
        out.append(pool.pop(j))
    return tuple(out)


def preset_paper_scene(
    room: int,
    permutation: int,
    target: int,
    duration: float = 10.0,
    snr_db: float = 30.0,
    seed: int = 0,
    sample_rate: float = 16000.0,
) -> ScenarioSpec:
    """The 8-source, 4-mic reference scene. ``target`` is the 1-based source position."""
    if room not in ROOM_T60:
        raise ValueError("room must be 1 or 2")
    if not 1 <= target <= len(PRESET_SOURCES):
        raise ValueError("target must be in 1..8")
    assign = permutation_assignment(permutation)
    sources = [
        SourceSpec(math.radians(doa), dist, sig)
        for (doa, dist), sig in zip(PRESET_SOURCES, assign)
    ]
    return ScenarioSpec(
        geometry=preset_geometry(),
        sources=sources,
        snr_db=snr_db,
        reverb_tail=(ROOM_T60[room], seed + 1000 * room + permutation),
        seed=seed,
        duration=duration,
        sample_rate=sample_rate,
        target=target - 1,
    )


def all_permutations() -> list[tuple[int, ...]]:
    return [permutation_assignment(i) for i in range(1, NUM_PERMUTATIONS + 1)]

