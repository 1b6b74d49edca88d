"""Registry of the MM/IP algorithm variants and their default parameters.

Each variant is a point on a few orthogonal axes: extraction (``S = 1``) or
determined separation (``S = M``), the kind of prior on the SOI filters,
whether the background filters carry a null prior, and the source model
family. Id 1 (gradient-descent reference) is reserved and not available.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .geometry import ArrayGeometry, BackgroundPrior, ChannelPrior, PriorSpec
from .solver import SolverConfig

BLIND = 0
RESERVED = (1,)


@dataclass(frozen=True)
class Variant:
    id: int
    extraction: bool  # S = 1 with background, otherwise S = M
    soi_prior: str  # "none", "euclidean_one", "quadratic_one" or "quadratic_null"
    bg_prior: bool
    nmf: bool


@dataclass(frozen=True)
class VariantDefaults:
    """Default parameters; ``None`` marks a parameter the variant does not use."""

    gamma: float | None
    lambda_tik: float | None
    lambda_1: float | None
    num_bases: int | None = None
    max_iters: int = 100
    beta: float = 1.0


_TABLE = {
    BLIND: Variant(BLIND, False, "none", False, False),
    2: Variant(2, False, "euclidean_one", False, False),
    3: Variant(3, False, "quadratic_one", False, False),
    4: Variant(4, False, "quadratic_null", False, False),
    5: Variant(5, True, "euclidean_one", False, False),
    6: Variant(6, True, "quadratic_one", False, False),
    7: Variant(7, True, "none", True, False),
}
for _i in range(2, 8):
    _TABLE[_i + 6] = replace(_TABLE[_i], id=_i + 6, nmf=True)

VARIANTS: dict[int, Variant] = dict(sorted(_TABLE.items()))

DEFAULTS: dict[int, VariantDefaults] = {
    BLIND: VariantDefaults(None, None, None),
    2: VariantDefaults(0.5, 1.0, None),
    3: VariantDefaults(1.5, 1.0, 2.0),
    4: VariantDefaults(0.5, 1e-3, 1.0),
    5: VariantDefaults(2.0, 1.0, None),
    6: VariantDefaults(2.0, 1.0, 1.5),
    7: VariantDefaults(50.0, 1e-3, 1.0),
    8: VariantDefaults(5.0, 1.0, None, 2),
    9: VariantDefaults(3.0, 1.0, 1.5, 2),
    10: VariantDefaults(5.0, 1e-3, 1.0, 2),
    11: VariantDefaults(2.5, 1.0, None, 2),
    12: VariantDefaults(2.5, 1.0, 1.0, 2),
    13: VariantDefaults(100.0, 1e-3, 1.0, 2),
}


class UnknownVariantError(ValueError):
    pass


def get_variant(vid: int) -> Variant:
    if vid in RESERVED:
        raise UnknownVariantError(f"variant {vid} (gradient descent) is reserved and not implemented")
    try:
        return VARIANTS[vid]
    except KeyError:
        raise UnknownVariantError(f"unknown variant id {vid}") from None


def prior_spec(
    vid: int,
    num_mics: int,
    target_doa: float | None,
    gamma: float | None = None,
    lambda_tik: float | None = None,
    lambda_1: float | None = None,
) -> PriorSpec:
    """Prior layout of a variant aimed at ``target_doa`` (radians).

    Parameters left as ``None`` take the variant defaults.
    """
    v = get_variant(vid)
    d = DEFAULTS[vid]
    gamma = d.gamma if gamma is None else gamma
    lambda_tik = d.lambda_tik if lambda_tik is None else lambda_tik
    lambda_1 = d.lambda_1 if lambda_1 is None else lambda_1
    if v.soi_prior == "none" and not v.bg_prior:
        return PriorSpec()
    if target_doa is None:
        raise ValueError(f"variant {vid} needs a target direction")
    doa = (float(target_doa),)
    if v.bg_prior:
        bg = BackgroundPrior(doa, (lambda_1,), lambda_tik, gamma)
        return PriorSpec([ChannelPrior()], bg)
    if v.soi_prior == "euclidean_one":
        one = ChannelPrior("euclidean_one", doa, (), 1.0, gamma)
    else:
        one = ChannelPrior(v.soi_prior, doa, (lambda_1,), lambda_tik, gamma)
    if v.soi_prior == "quadratic_null":
        # determined case: every channel except the first steers a null at the target
        return PriorSpec([ChannelPrior()] + [one] * (num_mics - 1))
    return PriorSpec([one])


def solver_config(
    vid: int,
    geometry: ArrayGeometry | None,
    target_doa: float | None,
    **overrides,
) -> SolverConfig:
    """SolverConfig of a variant with its defaults.

    ``overrides`` may set ``gamma``, ``lambda_tik``, ``lambda_1`` and any
    :class:`SolverConfig` field.
    """
    v = get_variant(vid)
    d = DEFAULTS[vid]
    M = geometry.num_mics if geometry is not None else overrides.pop("num_mics")
    overrides.pop("num_mics", None)
    prior_kw = {k: overrides.pop(k) for k in ("gamma", "lambda_tik", "lambda_1") if k in overrides}
    model_kind = overrides.pop("model_kind", "nmf" if v.nmf else "ggd")
    if v.nmf and model_kind != "nmf" or not v.nmf and model_kind == "nmf":
        raise ValueError(f"variant {vid} does not use source model {model_kind!r}")
    kw = dict(
        num_soi=1 if v.extraction else M,
        max_iters=d.max_iters,
        model_kind=model_kind,
        beta=d.beta,
        num_bases=d.num_bases or 2,
        priors=prior_spec(vid, M, target_doa, **prior_kw),
        geometry=geometry,
        variant=vid,
    )
    kw.update(overrides)
    return SolverConfig(**kw)
