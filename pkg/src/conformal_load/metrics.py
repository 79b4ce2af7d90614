"""Evaluation of prediction intervals: coverage, width, worst-slice coverage.

Worst-slice coverage probes conditional validity: among feature-space slabs
{x : a <= v.x <= b} holding at least a delta fraction of the data, how low
can the empirical coverage get? Directions and cut points are tuned
adversarially on a held-out quarter of the test edges and the selected slab
is scored on the remaining three quarters.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .conformal import Interval


@dataclass
class EvaluationReport:
    """Per-(run, resplit, method) evaluation row with its per-edge records."""

    method: str
    model: str
    layer: str
    dataset: str
    n_test: int
    coverage: float
    inefficiency: float
    wsc: float | None = None
    lo: np.ndarray = field(default_factory=lambda: np.array([]))
    hi: np.ndarray = field(default_factory=lambda: np.array([]))
    truth: np.ndarray = field(default_factory=lambda: np.array([]))
    covered: np.ndarray = field(default_factory=lambda: np.array([], dtype=bool))


def coverage(intervals: list[Interval], truths) -> float:
    """Fraction of truths inside their (closed) interval."""
    truths = np.asarray(truths, dtype=np.float64)
    if len(intervals) == 0:
        raise ValueError("coverage of an empty test set is undefined")
    if len(intervals) != truths.size:
        raise ValueError("intervals and truths must align")
    flags = covered_flags(intervals, truths)
    return float(flags.mean())


def covered_flags(intervals: list[Interval], truths) -> np.ndarray:
    truths = np.asarray(truths, dtype=np.float64)
    return np.array([iv.contains(w) for iv, w in zip(intervals, truths)], dtype=bool)


def inefficiency(intervals: list[Interval]) -> float:
    """Mean interval width; infinite (with a warning) if any interval is unbounded."""
    if len(intervals) == 0:
        raise ValueError("inefficiency of an empty test set is undefined")
    widths = np.array([iv.width for iv in intervals])
    if np.any(np.isinf(widths)):
        warnings.warn("unbounded interval present; inefficiency is infinite")
        return float(np.inf)
    return float(widths.mean())


@dataclass(frozen=True)
class SlabSpec:
    """A feature-space slab a <= v.x <= b with its mass threshold."""

    v: np.ndarray
    a: float
    b: float
    delta_mass: float

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64).ravel()
        object.__setattr__(self, "v", v)
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise ValueError("slab direction must be a unit vector")
        if not self.a < self.b:
            raise ValueError("slab requires a < b")

    def contains(self, features: np.ndarray) -> np.ndarray:
        proj = features @ self.v
        return (proj >= self.a) & (proj <= self.b)


@dataclass
class WscResult:
    wsc: float
    slab: SlabSpec
    tune_idx: np.ndarray
    eval_idx: np.ndarray
    eval_marginal: float


DEFAULT_QUANTILE_GRID = tuple(np.round(np.arange(0.05, 0.951, 0.05), 2))
DEFAULT_MASS_GRID = (0.1, 0.2, 0.25)


def worst_slice_coverage(covered, features, rng: np.random.Generator,
                         n_vectors: int = 1000,
                         quantile_grid: tuple[float, ...] = DEFAULT_QUANTILE_GRID,
                         mass_grid: tuple[float, ...] = DEFAULT_MASS_GRID,
                         tune_frac: float = 0.25) -> WscResult:
    """Adversarial slab search for the lowest-coverage feature slice.

    Directions are uniform on the unit sphere (normalized normal draws). For
    each direction, cut points (a, b) range over projection quantiles of the
    tuning subset, constrained to hold at least the mass threshold; the
    slab minimizing tuning coverage (first found, in direction-then-grid
    order) is scored on the evaluation subset. The always-feasible unbounded
    slab is scored as well, so the result never exceeds the evaluation
    subset's marginal coverage.
    """
    covered = np.asarray(covered, dtype=bool)
    features = np.asarray(features, dtype=np.float64)
    n = covered.size
    if n < 20:
        raise ValueError("worst-slice coverage needs at least 20 test edges")
    if features.shape[0] != n:
        raise ValueError("features and coverage flags must align")

    n_tune = int(round(tune_frac * n))
    if n_tune < 2 or n - n_tune < 2:
        raise ValueError("test set too small for the tune/evaluate split")
    perm = rng.permutation(n)
    tune_idx, eval_idx = perm[:n_tune], perm[n_tune:]
    cov_tune = covered[tune_idx].astype(np.float64)
    feat_tune, feat_eval = features[tune_idx], features[eval_idx]
    cov_eval = covered[eval_idx].astype(np.float64)
    eval_marginal = float(cov_eval.mean())

    dirs = rng.normal(size=(n_vectors, features.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    # grid positions into the sorted projections, shared by every direction
    qpos = sorted({int(round(q * (n_tune - 1))) for q in quantile_grid})
    candidates: list[tuple[int, int, float]] = []
    for ia in qpos:
        for ib in qpos:
            if ib <= ia:
                continue
            mass = (ib - ia + 1) / n_tune
            for delta in mass_grid:
                if mass >= delta:
                    candidates.append((ia, ib, delta))
    if not candidates:
        slab = _trivial_slab(dirs[0], mass_grid)
        return WscResult(eval_marginal, slab, tune_idx, eval_idx, eval_marginal)

    proj = feat_tune @ dirs.T                       # (n_tune, n_vectors)
    order = np.argsort(proj, axis=0, kind="stable")
    sorted_proj = np.take_along_axis(proj, order, axis=0)
    sorted_cov = cov_tune[order]
    csum = np.cumsum(sorted_cov, axis=0)

    ia_arr = np.array([c[0] for c in candidates])
    ib_arr = np.array([c[1] for c in candidates])
    counts = (ib_arr - ia_arr + 1).astype(np.float64)
    inner = csum[ib_arr, :] - csum[ia_arr, :] + sorted_cov[ia_arr, :]
    slab_cov = inner / counts[:, None]              # (n_cand, n_vectors)

    flat = np.ascontiguousarray(slab_cov.T).ravel() # direction-major order
    best = int(np.argmin(flat))
    v_idx, c_idx = divmod(best, len(candidates))
    ia, ib, delta = candidates[c_idx]
    v = dirs[v_idx]
    a = float(sorted_proj[ia, v_idx])
    b = float(sorted_proj[ib, v_idx])

    proj_eval = feat_eval @ v
    in_slab = (proj_eval >= a) & (proj_eval <= b)
    slab_eval = float(cov_eval[in_slab].mean()) if np.any(in_slab) else 1.0

    if slab_eval <= eval_marginal:
        slab = SlabSpec(v=v, a=a, b=b, delta_mass=delta)
        return WscResult(slab_eval, slab, tune_idx, eval_idx, eval_marginal)
    slab = _trivial_slab(v, mass_grid)
    return WscResult(eval_marginal, slab, tune_idx, eval_idx, eval_marginal)


def _trivial_slab(v: np.ndarray, mass_grid) -> SlabSpec:
    return SlabSpec(v=v, a=-np.inf, b=np.inf, delta_mass=min(mass_grid))


# -- serialization -----------------------------------------------------------------

REPORT_COLUMNS = ("dataset", "model", "method", "layer", "n_test",
                  "coverage", "inefficiency", "wsc")


def reports_to_csv(reports: list[EvaluationReport], extra_cols: dict | None = None) -> str:
    """Flat CSV of report rows in the documented column order."""
    buf = io.StringIO()
    extra = extra_cols or {}
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(extra.keys()) + list(REPORT_COLUMNS))
    for rep in reports:
        writer.writerow(
            list(extra.values())
            + [rep.dataset, rep.model, rep.method, rep.layer, rep.n_test,
               _fmt(rep.coverage), _fmt(rep.inefficiency),
               "" if rep.wsc is None else _fmt(rep.wsc)]
        )
    return buf.getvalue()


def _fmt(x: float) -> str:
    return "inf" if np.isinf(x) else f"{x:.10g}"
