"""SDR/SIR/SAR with a gain-only projection onto the reference images."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

CAP_DB = 200.0


class RankDeficientError(ValueError):
    pass


class UndefinedMetricError(ValueError):
    pass


@dataclass
class Decomposition:
    s_target: np.ndarray
    e_interf: np.ndarray
    e_artif: np.ndarray


@dataclass
class EvalResult:
    """Per-channel measures in dB (arrays of equal length)."""

    sdr: np.ndarray
    sir: np.ndarray
    sar: np.ndarray

    def __post_init__(self) -> None:
        self.sdr = np.atleast_1d(np.asarray(self.sdr, dtype=float))
        self.sir = np.atleast_1d(np.asarray(self.sir, dtype=float))
        self.sar = np.atleast_1d(np.asarray(self.sar, dtype=float))


def decompose(estimate: np.ndarray, references: np.ndarray, target: int) -> Decomposition:
    """Split ``estimate`` into target, interference and artifact parts.

    Parameters
    ----------
    estimate:
        ``(T,)`` signal.
    references:
        ``(Q, T)`` source images; must be linearly independent.
    target:
        Row of ``references`` holding the target.
    """
    est = np.asarray(estimate, dtype=float)
    R = np.atleast_2d(np.asarray(references, dtype=float))
    if R.shape[1] != est.shape[0]:
        raise ValueError(f"estimate has {est.shape[0]} samples, references {R.shape[1]}")
    if not 0 <= target < R.shape[0]:
        raise IndexError("target index out of range")
    if np.linalg.matrix_rank(R) < R.shape[0]:
        raise RankDeficientError("reference signals are linearly dependent")
    r = R[target]
    s_target = (r @ est) / (r @ r) * r
    coef, *_ = np.linalg.lstsq(R.T, est, rcond=None)
    p_all = R.T @ coef
    return Decomposition(s_target, p_all - s_target, est - p_all)


def _ratio_db(num: float, den: float) -> float:
    if den == 0.0:
        return CAP_DB if num > 0 else -CAP_DB
    if num == 0.0:
        return -CAP_DB
    return float(np.clip(10 * np.log10(num / den), -CAP_DB, CAP_DB))


def sdr_sir_sar(d: Decomposition) -> EvalResult:
    et = float(np.sum(d.s_target**2))
    ei = float(np.sum(d.e_interf**2))
    ea = float(np.sum(d.e_artif**2))
    if et == 0.0 and ei == 0.0 and ea == 0.0:
        raise UndefinedMetricError("estimate has zero energy")
    err = float(np.sum((d.e_interf + d.e_artif) ** 2))
    return EvalResult(
        _ratio_db(et, err),
        _ratio_db(et, ei),
        _ratio_db(et + ei, ea),
    )


def evaluate(estimates: np.ndarray, references: np.ndarray, targets) -> EvalResult:
    """Measures for every row of ``estimates`` against ``references[targets[i]]``."""
    est = np.atleast_2d(estimates)
    targets = np.broadcast_to(np.atleast_1d(targets), (est.shape[0],))
    res = [sdr_sir_sar(decompose(e, references, int(t))) for e, t in zip(est, targets)]
    return EvalResult(
        np.concatenate([r.sdr for r in res]),
        np.concatenate([r.sir for r in res]),
        np.concatenate([r.sar for r in res]),
    )


def improvement(processed: EvalResult, unprocessed: EvalResult) -> EvalResult:
    return EvalResult(
        processed.sdr - unprocessed.sdr,
        processed.sir - unprocessed.sir,
        processed.sar - unprocessed.sar,
    )


EVAL_COLUMNS = ["trial", "variant", "channel", "sdr", "sir", "sar", "dsdr", "dsir", "dsar"]


def write_eval_csv(path, rows) -> None:
    """``rows`` are dicts with the keys of :data:`EVAL_COLUMNS`."""
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=EVAL_COLUMNS)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: r[k] for k in EVAL_COLUMNS})
