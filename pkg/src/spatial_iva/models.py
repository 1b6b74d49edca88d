"""SOI source models: generalized Gaussian, time-varying Gaussian and NMF."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import DemixedVariance, DemixingState

EPS_R = 1e-12
EPS_NMF = 1e-12

MODEL_KINDS = ("ggd", "tv_gauss", "nmf")


class ModelKindError(ValueError):
    pass


@dataclass
class SourceModel:
    """Source model state.

    For ``kind="nmf"`` the bases ``T`` have shape ``(S, K, B)`` and the
    activations ``V`` shape ``(S, B, N)``; the modelled variance is
    ``(T @ V) ** beta``. ``tv_gauss`` is the ``beta = 2`` member of the
    generalized Gaussian family.
    """

    kind: str = "ggd"
    beta: float = 1.0
    num_bases: int = 2
    T: np.ndarray | None = None
    V: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ModelKindError(f"unknown source model {self.kind!r}")
        if self.kind == "tv_gauss":
            self.beta = 2.0
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.num_bases < 1:
            raise ValueError("need at least one basis")

    @property
    def is_nmf(self) -> bool:
        return self.kind == "nmf"

    def init_nmf(self, S: int, K: int, N: int, rng: np.random.Generator) -> None:
        self.T = np.maximum(rng.uniform(0.0, 1.0, (S, K, self.num_bases)), EPS_NMF)
        self.V = np.maximum(rng.uniform(0.0, 1.0, (S, self.num_bases, N)), EPS_NMF)

    def copy(self) -> "SourceModel":
        return SourceModel(
            self.kind,
            self.beta,
            self.num_bases,
            None if self.T is None else self.T.copy(),
            None if self.V is None else self.V.copy(),
        )

    def nmf_product(self, channels=None) -> np.ndarray:
        """``sum_b t v`` with shape ``(S, K, N)``."""
        T, V = self.T, self.V
        if channels is not None:
            T, V = T[channels], V[channels]
        return np.maximum(T @ V, EPS_NMF)


def _soi_power(soi: np.ndarray) -> np.ndarray:
    # soi: (K, N, S) -> |s|^2 as (S, K, N)
    return np.abs(soi.transpose(2, 0, 1)) ** 2


def demixed_variance(model: SourceModel, soi: np.ndarray) -> DemixedVariance:
    """Variance proxy per (channel, bin, frame).

    ``soi`` is the SOI part of the demixed spectrogram, shape ``(K, N, S)``.
    GGD/TVG: broadband norm ``sqrt(sum_k |s|^2)``, identical over k.
    NMF: ``(sum_b t v) ** beta``.
    """
    if model.is_nmf:
        r = model.nmf_product() ** model.beta
        return DemixedVariance(np.maximum(r, EPS_R), EPS_R, broadband=False)
    p = _soi_power(soi)
    r = np.sqrt(p.sum(axis=1, keepdims=True))
    r = np.broadcast_to(np.maximum(r, EPS_R), p.shape)
    return DemixedVariance(r, EPS_R, broadband=True)


def weighting_factor(model: SourceModel, r: DemixedVariance) -> np.ndarray:
    """Per-frame weight of the auxiliary covariance, shape ``(S, K, N)``.

    GGD/TVG: ``r ** (beta - 2)``; NMF: ``1 / r`` where ``r`` already is
    the modelled variance.
    """
    rr = np.maximum(r.r, r.floor)
    if model.is_nmf:
        return 1.0 / rr
    if model.beta == 2.0:
        return np.ones_like(rr)
    return rr ** (model.beta - 2.0)


def score(model: SourceModel, soi: np.ndarray) -> np.ndarray:
    """Per-channel average score ``E_n{G(s_q)}``, shape ``(S,)``.

    GGD uses ``G = (2 / beta) ||s||^beta``; with this scaling the IP update
    with unit normalisation is the exact minimiser of the surrogate.
    NMF uses ``sum_k log sigma^2 + |s|^2 / sigma^2``.
    """
    p = _soi_power(soi)
    if model.is_nmf:
        sig = np.maximum(model.nmf_product() ** model.beta, EPS_R)
        return (np.log(sig) + p / sig).sum(axis=1).mean(axis=-1)
    norm = np.sqrt(p.sum(axis=1))
    return (2.0 / model.beta) * (norm**model.beta).mean(axis=-1)


def nmf_update(model: SourceModel, soi: np.ndarray, channels=None) -> SourceModel:
    """One multiplicative update of bases then activations (in place, returned).

    With ``R = sum_b t v`` the rules are
    ``t <- t * (sum_n |y|^2 v R^-(beta+1) / sum_n v R^-1) ** (1 / (beta + 1))``
    and the analogue over k for ``v``; for ``beta = 1`` this is the square-root
    form of ILRMA.
    """
    if not model.is_nmf:
        raise ModelKindError("nmf_update requires an NMF source model")
    S = soi.shape[-1]
    channels = range(S) if channels is None else channels
    power = _soi_power(soi)
    b = model.beta
    expo = 1.0 / (b + 1.0)
    for q in channels:
        Y2 = power[q]
        T, V = model.T[q], model.V[q]
        R = np.maximum(T @ V, EPS_NMF)
        num = (Y2 / R ** (b + 1)) @ V.T
        den = (1.0 / R) @ V.T
        T = np.maximum(T * (num / den) ** expo, EPS_NMF)
        R = np.maximum(T @ V, EPS_NMF)
        num = T.T @ (Y2 / R ** (b + 1))
        den = T.T @ (1.0 / R)
        V = np.maximum(V * (num / den) ** expo, EPS_NMF)
        model.T[q], model.V[q] = T, V
    return model


def normalize_ilrma(
    model: SourceModel, W: DemixingState, soi: np.ndarray, channels=None
) -> tuple[SourceModel, DemixingState]:
    """Power normalisation of NMF channels.

    For each channel ``lam = sqrt(mean_{k,n} |s|^2)``; the filter is divided
    by ``lam`` and the bases by ``lam ** (2 / beta)`` so that the modelled
    variance tracks the rescaled output exactly.
    """
    if not model.is_nmf:
        raise ModelKindError("normalize_ilrma requires an NMF source model")
    S = soi.shape[-1]
    channels = range(S) if channels is None else channels
    power = _soi_power(soi)
    for q in channels:
        lam = np.sqrt(power[q].mean())
        if lam <= 0:
            continue
        W.W[:, q, :] /= lam
        model.T[q] = np.maximum(model.T[q] / lam ** (2.0 / model.beta), EPS_NMF)
    return model, W
