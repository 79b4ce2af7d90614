"""Split-conformal calibration of edge-weight predictions.

Four interval constructions share one calibration rule: compute a conformity
score per calibration edge, take the k-th smallest with k = ceil((n+1)(1-a)),
and invert the score at that threshold on each test edge.

* ``cp``      — absolute residual; constant-width intervals.
* ``cqr``     — signed distance outside a learned quantile band; the band is
                shifted outward (or inward, for negative thresholds) by d.
* ``cp_erc``  — residual divided by a Monte-Carlo-dropout spread estimate, so
                widths adapt to local predictive difficulty.
* ``cqr_erc`` — band residual divided by the band width itself; a free local
                difficulty estimate.

All functions are pure and operate on aligned per-edge arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class Method(Enum):
    CP = "cp"
    CQR = "cqr"
    CP_ERC = "cp-erc"
    CQR_ERC = "cqr-erc"


CQR_ERC_BAND_FLOOR = 1e-3   # standardized-weight units; guards collapsed bands


@dataclass(frozen=True)
class ConformityScores:
    scores: np.ndarray
    method: Method

    def __post_init__(self):
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))
        if self.scores.ndim != 1 or self.scores.size == 0:
            raise ValueError("scores must be a non-empty 1-D array")


@dataclass(frozen=True)
class CalibrationResult:
    """Threshold d = the k-th smallest calibration score.

    k exceeding the calibration size means no finite threshold exists at this
    error rate; intervals then degenerate to the whole real line.
    """

    d: float
    k: int
    n_calib: int
    alpha: float
    unbounded: bool


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    edge: tuple[int, int] = (-1, -1)

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    def contains(self, w: float) -> bool:
        return self.lo <= w <= self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo


def conformal_quantile(scores: ConformityScores | np.ndarray, alpha: float) -> CalibrationResult:
    """k-th smallest score with k = ceil((n+1)(1-alpha)); ties count with multiplicity."""
    arr = scores.scores if isinstance(scores, ConformityScores) else np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot calibrate on an empty score set")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    n = arr.size
    k = math.ceil((n + 1) * (1.0 - alpha))
    if k > n:
        return CalibrationResult(d=np.inf, k=k, n_calib=n, alpha=alpha, unbounded=True)
    d = float(np.partition(arr, k - 1)[k - 1])
    return CalibrationResult(d=d, k=k, n_calib=n, alpha=alpha, unbounded=False)


def _aligned(*arrays) -> list[np.ndarray]:
    out = [np.asarray(a, dtype=np.float64) for a in arrays]
    if len({a.shape for a in out}) != 1:
        raise ValueError("per-edge arrays must have identical lengths")
    return out


# -- absolute-residual calibration ---------------------------------------------


def cp_scores(predictions, calib_weights) -> ConformityScores:
    pred, w = _aligned(predictions, calib_weights)
    return ConformityScores(scores=np.abs(pred - w), method=Method.CP)


def cp_interval(pred: float, cal: CalibrationResult,
                edge: tuple[int, int] = (-1, -1)) -> Interval:
    if cal.unbounded:
        return Interval(lo=-np.inf, hi=np.inf, edge=edge)
    return Interval(lo=pred - cal.d, hi=pred + cal.d, edge=edge)


def cp_intervals(predictions, cal: CalibrationResult, edges=None) -> list[Interval]:
    edges = edges or [(-1, -1)] * len(predictions)
    return [cp_interval(float(p), cal, e) for p, e in zip(predictions, edges)]


# -- quantile-band calibration ---------------------------------------------------


def cqr_scores(lo, hi, calib_weights) -> ConformityScores:
    """Signed distance of the truth outside the band (negative when inside)."""
    lo, hi, w = _aligned(lo, hi, calib_weights)
    if np.any(lo > hi):
        raise ValueError("quantile band must satisfy lo <= hi (clamp first)")
    return ConformityScores(scores=np.maximum(lo - w, w - hi), method=Method.CQR)


def cqr_interval(lo: float, hi: float, cal: CalibrationResult,
                 edge: tuple[int, int] = (-1, -1)) -> Interval:
    if cal.unbounded:
        return Interval(lo=-np.inf, hi=np.inf, edge=edge)
    new_lo, new_hi = lo - cal.d, hi + cal.d
    if new_lo > new_hi:   # negative d larger than half the band: pinch to a point
        mid = 0.5 * (new_lo + new_hi)
        new_lo = new_hi = mid
    return Interval(lo=new_lo, hi=new_hi, edge=edge)


def cqr_intervals(lo, hi, cal: CalibrationResult, edges=None) -> list[Interval]:
    lo, hi = _aligned(lo, hi)
    edges = edges or [(-1, -1)] * len(lo)
    return [cqr_interval(float(a), float(b), cal, e) for a, b, e in zip(lo, hi, edges)]


# -- error-reweighted variants ----------------------------------------------------


def cp_erc_scores(predictions, calib_weights, s_mc, epsilon: float) -> ConformityScores:
    """Residuals scaled by the per-edge dropout spread plus regularizer."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    pred, w, s = _aligned(predictions, calib_weights, s_mc)
    if np.any(s < 0):
        raise ValueError("dropout spreads must be nonnegative")
    return ConformityScores(scores=np.abs(pred - w) / (s + epsilon), method=Method.CP_ERC)


def cp_erc_interval(pred: float, s_mc: float, epsilon: float, cal: CalibrationResult,
                    edge: tuple[int, int] = (-1, -1)) -> Interval:
    if cal.unbounded:
        return Interval(lo=-np.inf, hi=np.inf, edge=edge)
    half = cal.d * (s_mc + epsilon)
    return Interval(lo=pred - half, hi=pred + half, edge=edge)


def cp_erc_intervals(predictions, s_mc, epsilon: float, cal: CalibrationResult,
                     edges=None) -> list[Interval]:
    pred, s = _aligned(predictions, s_mc)
    edges = edges or [(-1, -1)] * len(pred)
    return [cp_erc_interval(float(p), float(sv), epsilon, cal, e)
            for p, sv, e in zip(pred, s, edges)]


def band_denominator(lo, hi, floor: float = CQR_ERC_BAND_FLOOR) -> np.ndarray:
    lo, hi = _aligned(lo, hi)
    return np.maximum(np.abs(hi - lo), floor)


def cqr_erc_scores(lo, hi, calib_weights,
                   floor: float = CQR_ERC_BAND_FLOOR) -> ConformityScores:
    """Band residual divided by the band width (floored to stay finite)."""
    if floor <= 0.0:
        raise ValueError("band floor must be positive")
    lo, hi, w = _aligned(lo, hi, calib_weights)
    if np.any(lo > hi):
        raise ValueError("quantile band must satisfy lo <= hi (clamp first)")
    denom = band_denominator(lo, hi, floor)
    return ConformityScores(scores=np.maximum((lo - w) / denom, (w - hi) / denom),
                            method=Method.CQR_ERC)


def cqr_erc_interval(lo: float, hi: float, cal: CalibrationResult,
                     floor: float = CQR_ERC_BAND_FLOOR,
                     edge: tuple[int, int] = (-1, -1)) -> Interval:
    if cal.unbounded:
        return Interval(lo=-np.inf, hi=np.inf, edge=edge)
    denom = max(abs(hi - lo), floor)
    new_lo, new_hi = lo - cal.d * denom, hi + cal.d * denom
    if new_lo > new_hi:
        mid = 0.5 * (new_lo + new_hi)
        new_lo = new_hi = mid
    return Interval(lo=new_lo, hi=new_hi, edge=edge)


def cqr_erc_intervals(lo, hi, cal: CalibrationResult,
                      floor: float = CQR_ERC_BAND_FLOOR, edges=None) -> list[Interval]:
    lo, hi = _aligned(lo, hi)
    edges = edges or [(-1, -1)] * len(lo)
    return [cqr_erc_interval(float(a), float(b), cal, floor, e)
            for a, b, e in zip(lo, hi, edges)]


# -- hyperparameter selection ------------------------------------------------------

EPSILON_GRID = (0.01, 0.05, 0.1, 0.5, 1.0)


def select_erc_epsilon(val_predictions, val_weights, val_s_mc, alpha: float,
                       grid: tuple[float, ...] = EPSILON_GRID) -> float:
    """Pick the residual regularizer on held-out validation edges.

    Candidates are `grid` multiples of the mean validation spread; each is
    scored by the average interval width it yields when the validation set is
    used as its own calibration set, so the choice targets width at nominal
    coverage without touching calibration or test data.
    """
    pred, w, s = _aligned(val_predictions, val_weights, val_s_mc)
    base = float(s.mean())
    if base <= 0.0:
        base = 1.0   # dropout disabled: scores reduce to plain residuals
    best_eps, best_width = None, np.inf
    for mult in grid:
        eps = mult * base
        cal = conformal_quantile(cp_erc_scores(pred, w, s, eps), alpha)
        width = np.inf if cal.unbounded else float(np.mean(2.0 * cal.d * (s + eps)))
        if width < best_width:
            best_width, best_eps = width, eps
    if best_eps is None:
        best_eps = grid[0] * base
    return best_eps
