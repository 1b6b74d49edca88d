"""Majorize-minimize / iterative-projection engine.

The cost tracked by :func:`cost` is

    J = sum_q E_n{G(s_q)} - 2 sum_k log|det W_k| + J_bg + J_prior

with ``G`` from :mod:`spatial_iva.models` and
``J_bg = sum_k log det(B_k (C_k + gamma_bg P_bg,k) B_k^H)``, the background
Gaussian cost with its covariance at the maximum-likelihood value. Every
update below is an exact block minimiser of the surrogate of ``J``, so the
recorded trace is non-increasing whenever the regularised covariances are
positive definite.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import ArrayGeometry, BuiltPriors, PriorSpec, build_priors, prior_penalty
from .models import SourceModel, demixed_variance, normalize_ilrma, nmf_update, score, weighting_factor
from .types import DemixingState, SpectrogramTensor, apply_demixing, new_demixing_state

logger = logging.getLogger(__name__)


class SingularUpdateError(np.linalg.LinAlgError):
    """A per-frequency linear system of an update could not be solved."""

    def __init__(self, msg: str, freq: int | None = None, channel: int | None = None):
        super().__init__(msg)
        self.freq = freq
        self.channel = channel


@dataclass
class CostBreakdown:
    j_bss: float
    j_bg: float
    j_prior: float
    j_total: float

    def as_row(self, it: int) -> list:
        return [it, self.j_bss, self.j_bg, self.j_prior, self.j_total]


@dataclass
class SolverConfig:
    """Options of :func:`run`.

    ``eps_cov`` is relative: ``eps_cov * trace(C_k) / M`` is added to every
    covariance before it is inverted. ``input_scale`` multiplies the data
    before optimisation; the final filters are returned for unscaled data.
    """

    num_soi: int
    max_iters: int = 100
    model_kind: str = "ggd"
    beta: float = 1.0
    num_bases: int = 2
    priors: PriorSpec = field(default_factory=PriorSpec)
    geometry: ArrayGeometry | None = None
    eps_cov: float = 1e-9
    seed: int = 0
    input_scale: float = 1.0
    variant: int | None = None

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.num_soi < 1:
            raise ValueError("num_soi must be >= 1")
        if self.input_scale <= 0:
            raise ValueError("input_scale must be positive")
        if len(self.priors.channels) > self.num_soi:
            raise ValueError("more channel priors than SOIs")
        needs_geometry = any(c.kind != "none" for c in self.priors.channels) or (
            self.priors.background is not None and self.priors.background.active
        )
        if needs_geometry and self.geometry is None:
            raise ValueError("spatial priors need an array geometry")

    def make_model(self) -> SourceModel:
        return SourceModel(self.model_kind, self.beta, self.num_bases)


@dataclass
class Diagnostics:
    """Per-iteration stationarity residuals measured right after each update."""

    normalization: list[float] = field(default_factory=list)
    euclidean: list[float] = field(default_factory=list)
    background: list[float] = field(default_factory=list)
    indefinite: int = 0


@dataclass
class SeparationResult:
    demixing: DemixingState
    soi: SpectrogramTensor
    trace: list[CostBreakdown]
    model: SourceModel
    diagnostics: Diagnostics


# ----------------------------------------------------------------------------
# covariances


def _hermitize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.swapaxes(A, -1, -2).conj())


def mic_covariance(X: np.ndarray) -> np.ndarray:
    """``C_k = (1/N) sum_n x x^H`` for ``X`` of shape ``(K, N, M)``."""
    N = X.shape[1]
    return _hermitize(np.swapaxes(X, 1, 2) @ X.conj() / N)


def covariance_eps(C: np.ndarray, rel: float) -> np.ndarray:
    """Per-bin diagonal loading ``rel * trace(C_k) / M``, shape ``(K,)``."""
    M = C.shape[-1]
    return rel * np.trace(C, axis1=1, axis2=2).real / M


def weighted_covariance(X: np.ndarray, phi: np.ndarray, eps=0.0) -> np.ndarray:
    """``V_k = (1/N) sum_n phi_{k,n} x x^H + eps I``.

    ``phi`` broadcasts against ``(K, N)``; ``eps`` is a scalar or ``(K,)``.
    """
    K, N, M = X.shape
    phi = np.broadcast_to(phi, (K, N))
    V = np.swapaxes(X * phi[..., None], 1, 2) @ X.conj() / N
    V = V + np.asarray(eps, dtype=float).reshape(-1, 1, 1) * np.eye(M)
    return _hermitize(V)


# ----------------------------------------------------------------------------
# row updates (operate on the raw (K, M, M) array in place)


def _solve(A: np.ndarray, b: np.ndarray, channel: int) -> np.ndarray:
    try:
        x = np.linalg.solve(A, b[..., None])[..., 0]
    except np.linalg.LinAlgError:
        for k in range(A.shape[0]):
            try:
                np.linalg.solve(A[k], b[k])
            except np.linalg.LinAlgError:
                raise SingularUpdateError(
                    f"singular system at bin {k} for channel {channel + 1}", k, channel
                ) from None
        raise
    bad = ~np.all(np.isfinite(x), axis=-1)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise SingularUpdateError(
            f"non-finite solution at bin {k} for channel {channel + 1}", k, channel
        )
    return x


def _quad(w: np.ndarray, A: np.ndarray) -> np.ndarray:
    return np.einsum("km,kmn,kn->k", w.conj(), A, w)


def _ip_rows(W: np.ndarray, Vt: np.ndarray, q: int, quad=None) -> int:
    """IP update of row ``q``: ``w = (W Vt)^-1 e_q`` normalised so ``w^H Vt w = 1``.

    ``quad(w)`` may supply a more accurate evaluation of ``w^H Vt w``.
    Returns the number of bins where the form came out negative
    (indefinite ``Vt``); those are normalised by ``sqrt(|.|)``.
    """
    K, M, _ = W.shape
    e = np.zeros((K, M), dtype=np.complex128)
    e[:, q] = 1.0
    w = _solve(W @ Vt, e, q)
    a = _quad(w, Vt).real if quad is None else quad(w)
    if np.any(a == 0):
        k = int(np.flatnonzero(a == 0)[0])
        raise SingularUpdateError(f"zero quadratic form at bin {k}", k, q)
    w /= np.sqrt(np.abs(a))[:, None]
    W[:, q, :] = w.conj()
    return int(np.count_nonzero(a < 0))


def _euclid_rows(W: np.ndarray, Vt: np.ndarray, h: np.ndarray, gamma, q: int) -> None:
    """Vector-wise coordinate-descent update for a Euclidean-prior channel.

    ``Vt = V + gamma I``; minimises ``w^H V w + gamma ||w - h||^2 - 2 log|det W|``
    over row ``q``.
    """
    K, M, _ = W.shape
    e = np.zeros((K, M), dtype=np.complex128)
    e[:, q] = 1.0
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (K,))
    u = _solve(W @ Vt, e, q)
    ut = gamma[:, None] * _solve(Vt, h.astype(np.complex128), q)
    p = _quad(u, Vt).real
    pt = np.einsum("km,kmn,kn->k", u.conj(), Vt, ut)
    if np.any(p <= 0):
        k = int(np.flatnonzero(p <= 0)[0])
        raise SingularUpdateError(f"non-positive quadratic form at bin {k}", k, q)
    apt2 = np.abs(pt) ** 2
    zero = apt2 <= 1e-30 * p
    coef = np.empty(K, dtype=np.complex128)
    coef[zero] = 1.0 / np.sqrt(p[zero])
    nz = ~zero
    coef[nz] = pt[nz] / (2 * p[nz]) * (-1.0 + np.sqrt(1.0 + 4 * p[nz] / apt2[nz]))
    w = coef[:, None] * u + ut
    W[:, q, :] = w.conj()


def _bg_rows(W: np.ndarray, Ct: np.ndarray, S: int) -> None:
    """``E = (E2 Ct W_soi^H)(E1 Ct W_soi^H)^-1`` and reset the ``-I`` block."""
    M = W.shape[1]
    A = Ct @ np.swapaxes(W[:, :S, :], 1, 2).conj()  # (K, M, S)
    A1, A2 = A[:, :S, :], A[:, S:, :]
    # E A1 = A2  <=>  A1^T E^T = A2^T
    try:
        Et = np.linalg.solve(np.swapaxes(A1, 1, 2), np.swapaxes(A2, 1, 2))
    except np.linalg.LinAlgError:
        dets = np.abs(np.linalg.det(A1))
        k = int(np.argmin(dets))
        raise SingularUpdateError(f"singular background system at bin {k}", k, None) from None
    if not np.all(np.isfinite(Et)):
        k = int(np.flatnonzero(~np.all(np.isfinite(Et), axis=(1, 2)))[0])
        raise SingularUpdateError(f"non-finite background filter at bin {k}", k, None)
    W[:, S:, :S] = np.swapaxes(Et, 1, 2)
    W[:, S:, S:] = -np.eye(M - S)


# public single-step wrappers -------------------------------------------------


def ip_update(W: DemixingState, V: np.ndarray, q: int, regularizer: np.ndarray | None = None) -> DemixingState:
    """Unconstrained (``regularizer=None``) or constrained IP update of SOI ``q`` (0-based).

    ``regularizer`` is the already weighted ``gamma * P`` of shape ``(K, M, M)``.
    """
    if not 0 <= q < W.num_soi:
        raise IndexError(f"channel {q} is not an SOI")
    out = W.copy()
    Vt = V if regularizer is None else V + regularizer
    _ip_rows(out.W, np.broadcast_to(Vt, out.W.shape), q)
    return out


def vectorwise_update_euclidean(W: DemixingState, Vt: np.ndarray, h: np.ndarray, gamma, q: int) -> DemixingState:
    out = W.copy()
    K = out.num_freqs
    _euclid_rows(out.W, np.broadcast_to(Vt, out.W.shape), np.broadcast_to(h, (K, out.num_channels)), gamma, q)
    return out


def bg_update(W: DemixingState, C: np.ndarray) -> DemixingState:
    """Background update; pass ``C + gamma_bg P_bg`` for the constrained form."""
    if not W.has_background:
        raise ValueError("background update needs num_soi < num_channels")
    out = W.copy()
    _bg_rows(out.W, np.broadcast_to(C, out.W.shape), W.num_soi)
    return out


def minimal_distortion_rescale(W: DemixingState) -> DemixingState:
    """``W_k <- diag((W_k)^-1) W_k``; afterwards ``diag(W_k^-1) = 1``."""
    try:
        inv = np.linalg.inv(W.W)
    except np.linalg.LinAlgError:
        raise SingularUpdateError("singular demixing matrix in rescaling") from None
    d = np.diagonal(inv, axis1=1, axis2=2)
    return DemixingState(d[:, :, None] * W.W, W.num_soi)


# ----------------------------------------------------------------------------
# cost


def _log_abs_det(W: np.ndarray) -> np.ndarray:
    sign, logdet = np.linalg.slogdet(W)
    return np.where(sign == 0, -np.inf, logdet)


def cost(
    W: DemixingState,
    X: SpectrogramTensor | np.ndarray,
    model: SourceModel,
    priors: BuiltPriors | None = None,
    C: np.ndarray | None = None,
) -> CostBreakdown:
    """Evaluate the informed-IVA cost. A singular ``W_k`` gives ``+inf``."""
    Xd = X.data if isinstance(X, SpectrogramTensor) else X
    priors = BuiltPriors.empty() if priors is None else priors
    S = W.num_soi
    soi = np.einsum("ksc,knc->kns", W.W[:, :S, :], Xd)
    logdet = _log_abs_det(W.W)
    if np.any(np.isinf(logdet)):
        return CostBreakdown(np.inf, np.inf, np.inf, np.inf)
    j_bss = float(score(model, soi).sum() - 2.0 * logdet.sum())
    j_bg = 0.0
    if W.has_background:
        if C is None:
            C = mic_covariance(Xd)
        if priors.bg_precision is not None:
            C = C + priors.spec.background.gamma * priors.bg_precision
        B = W.W[:, S:, :]
        G = B @ C @ np.swapaxes(B, 1, 2).conj()
        sign, ld = np.linalg.slogdet(_hermitize(G))
        j_bg = float(np.where(sign.real > 0, ld, np.inf).sum())
    j_prior = prior_penalty(W, priors, include_background=False)
    return CostBreakdown(j_bss, j_bg, j_prior, j_bss + j_bg + j_prior)


def write_trace_csv(path, trace: list[CostBreakdown]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iter", "j_bss", "j_bg", "j_prior", "j_total"])
        for i, c in enumerate(trace):
            wr.writerow([f"{v!r}" if isinstance(v, float) else v for v in c.as_row(i)])


# ----------------------------------------------------------------------------
# Alg. loop


def _channel_phi(model: SourceModel, y: np.ndarray, q: int) -> np.ndarray:
    """Weights ``phi`` of channel ``q`` as ``(K, N)`` (or ``(1, N)`` when broadband)."""
    if model.is_nmf:
        sub = SourceModel(model.kind, model.beta, model.num_bases, model.T[q : q + 1], model.V[q : q + 1])
        r = demixed_variance(sub, y[..., None])
        return weighting_factor(sub, r)[0]
    norm = np.sqrt(np.sum(np.abs(y) ** 2, axis=0, keepdims=True))
    if model.beta == 2.0:
        return np.ones_like(norm)
    return np.maximum(norm, 1e-12) ** (model.beta - 2.0)


class _Solver:
    def __init__(self, X: np.ndarray, cfg: SolverConfig, priors: BuiltPriors):
        self.X = X
        self.cfg = cfg
        self.priors = priors
        self.K, self.N, self.M = X.shape
        self.S = cfg.num_soi
        self.C = mic_covariance(X)
        self.eps = covariance_eps(self.C, cfg.eps_cov)
        self.C_bg = self.C + self.eps[:, None, None] * np.eye(self.M)
        if priors.bg_precision is not None:
            self.C_bg = self.C_bg + priors.spec.background.gamma * priors.bg_precision
        self.diag = Diagnostics()

    def update_channel(self, W: np.ndarray, model: SourceModel, q: int, eps_scale: float, res: dict) -> None:
        X, spec = self.X, self.priors.spec
        y = np.einsum("kc,knc->kn", W[:, q, :], X)
        if model.is_nmf:
            _nmf_update_one(model, y, q)
        phi = _channel_phi(model, y, q)
        V = weighted_covariance(X, phi, self.eps * eps_scale)
        kind = spec.channel(q).kind
        gamma = spec.channel(q).gamma
        if kind == "euclidean_one":
            Vt = V + gamma * np.eye(self.M)
            h = self.priors.targets[q]
            _euclid_rows(W, Vt, h, gamma, q)
            w = W[:, q, :].conj()
            g = np.linalg.solve(W, np.broadcast_to(np.eye(self.M)[:, q], (self.K, self.M))[..., None])[..., 0]
            # stationarity: Vt w - gamma h = g / (w^H g)
            lhs = np.einsum("kmn,kn->km", Vt, w) - gamma * h
            rhs = g / np.einsum("km,km->k", w.conj(), g)[:, None]
            rel = np.abs(lhs - rhs).max(axis=1) / np.maximum(np.abs(rhs).max(axis=1), 1e-300)
            res["euc"] = max(res["euc"], float(rel.max()))
        else:
            P = self.priors.precisions[q] if kind.startswith("quadratic") else None
            Vt = V if P is None else V + gamma * P
            eps = self.eps * eps_scale

            # summing phi |w^H x|^2 avoids the cancellation of w^H V w when phi is large
            def quad(w):
                y = np.einsum("kc,knc->kn", w.conj(), X)
                a = np.mean(phi * np.abs(y) ** 2, axis=1) + eps * np.sum(np.abs(w) ** 2, axis=1)
                return a if P is None else a + gamma * _quad(w, P).real

            self.diag.indefinite += _ip_rows(W, Vt, q, quad)
            res["norm"] = max(res["norm"], float(np.abs(quad(W[:, q, :].conj()) - 1.0).max()))
        if self.S < self.M:
            _bg_rows(W, self.C_bg, self.S)
            Ws = W[:, : self.S, :]
            B = W[:, self.S :, :]
            O = Ws @ self.C_bg @ np.swapaxes(B, 1, 2).conj()
            scale = np.linalg.norm(self.C, ord=2, axis=(1, 2))
            res["bg"] = max(res["bg"], float((np.abs(O).max(axis=(1, 2)) / scale).max()))

    def iterate(self, W: np.ndarray, model: SourceModel) -> None:
        res = {"norm": 0.0, "euc": 0.0, "bg": 0.0}
        for q in range(self.S):
            backup_W, backup_model = W.copy(), model.copy()
            try:
                self.update_channel(W, model, q, 1.0, res)
            except SingularUpdateError as err:
                logger.warning("%s; retrying with 100x diagonal loading", err)
                W[...] = backup_W
                model.T, model.V = backup_model.T, backup_model.V
                self.update_channel(W, model, q, 100.0, res)
        if model.is_nmf:
            free = [q for q in range(self.S) if self.priors.spec.channel(q).kind == "none"]
            if free:
                soi = np.einsum("ksc,knc->kns", W[:, : self.S, :], self.X)
                state = DemixingState(W, self.S)
                normalize_ilrma(model, state, soi, channels=free)
        self.diag.normalization.append(res["norm"])
        self.diag.euclidean.append(res["euc"])
        self.diag.background.append(res["bg"])

    def cost(self, W: np.ndarray, model: SourceModel) -> CostBreakdown:
        return cost(DemixingState(W, self.S), self.X, model, self.priors, C=self.C + self.eps[:, None, None] * np.eye(self.M))


def _nmf_update_one(model: SourceModel, y: np.ndarray, q: int) -> None:
    soi = np.zeros(y.shape + (model.T.shape[0],), dtype=y.dtype)
    soi[..., q] = y
    nmf_update(model, soi, channels=[q])


def run(
    X: SpectrogramTensor,
    cfg: SolverConfig,
    callback=None,
) -> SeparationResult:
    """Run ``cfg.max_iters`` MM iterations and return the rescaled SOI estimates.

    ``callback(iteration, W, model)`` is called after every iteration.
    """
    K, N, M = X.data.shape
    if cfg.num_soi > M:
        raise ValueError(f"num_soi={cfg.num_soi} exceeds the {M} channels")
    if cfg.geometry is not None and cfg.geometry.num_mics != M:
        raise ValueError("geometry and data disagree on the number of microphones")
    Xs = X.data * cfg.input_scale
    priors = (
        build_priors(cfg.priors, cfg.geometry, X.bin_frequencies())
        if cfg.geometry is not None
        else BuiltPriors(cfg.priors, {}, {}, None)
    )
    model = cfg.make_model()
    if model.is_nmf:
        model.init_nmf(cfg.num_soi, K, N, np.random.default_rng(cfg.seed))
    state = new_demixing_state(M, cfg.num_soi, K)
    W = state.W
    engine = _Solver(Xs, cfg, priors)
    trace = [engine.cost(W, model)]
    for it in range(1, cfg.max_iters + 1):
        engine.iterate(W, model)
        trace.append(engine.cost(W, model))
        if callback is not None:
            callback(it, W, model)
    if engine.diag.indefinite:
        logger.warning(
            "%d bin updates met an indefinite regularised covariance", engine.diag.indefinite
        )
    final = minimal_distortion_rescale(DemixingState(W, cfg.num_soi))
    soi = apply_demixing(final, X)
    soi = soi.with_data(np.ascontiguousarray(soi.data[..., : cfg.num_soi]))
    return SeparationResult(final, soi, trace, model, engine.diag)
