"""Maximum likelihood cell means by generalized iterative proportional scaling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Union

import numpy as np

from fibergof.core.tables import DyadTable
from fibergof.core.zoo import DesignMatrix
from fibergof.errors import DimensionMismatchError

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000
DEFAULT_EPS = 1e-8

LIKELY = "exists: likely"
SUSPECT = "exists: suspect"


@dataclass
class FitResult:
    fitted_means: np.ndarray
    converged: bool
    iterations: int
    max_margin_gap: float
    zero_flag: List[int]
    observed: np.ndarray
    forced_zero: List[int] = field(default_factory=list)
    gap_trace: List[float] = field(default_factory=list)
    tol: float = DEFAULT_TOL

    def summary(self) -> Dict[str, object]:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "max_margin_gap": self.max_margin_gap,
            "zero_cells": list(self.zero_flag),
            "forced_zero_cells": list(self.forced_zero),
        }


@dataclass
class MleReport:
    status: str
    reasons: List[str] = field(default_factory=list)

    @property
    def suspect(self) -> bool:
        return self.status == SUSPECT


def _initial_means(u: Union[DyadTable, np.ndarray]) -> np.ndarray:
    if isinstance(u, DyadTable) and not u.is_plain:
        k = u.n_states
        return np.repeat(u.dyad_sums().astype(float) / k, k)
    cells = u.cells if isinstance(u, DyadTable) else np.asarray(u)
    return np.ones(cells.size, dtype=float)


def _disjoint_groups(A: np.ndarray) -> List[np.ndarray]:
    """Rows grouped so that rows within a group share no column.

    Rows of one group can be rescaled together; the result equals
    rescaling them one after another.
    """
    groups: List[List[int]] = []
    used: List[np.ndarray] = []
    for r in range(A.shape[0]):
        support = A[r] > 0
        for g, cols in zip(groups, used):
            if not (cols & support).any():
                g.append(r)
                cols |= support
                break
        else:
            groups.append([r])
            used.append(support.copy())
    return [np.asarray(g) for g in groups]


def ipf_fit(
    A: DesignMatrix,
    u: Union[DyadTable, np.ndarray],
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    eps: float = DEFAULT_EPS,
) -> FitResult:
    """Fit m with A m = A u by cyclic damped scaling.

    Each row r rescales its cells by ((Au)_r / (Am)_r) ** (A_rc / s_r) with
    s_r the largest entry of the row, so 0/1 rows are classical proportional
    fitting. Rows with a zero observed margin force their cells to zero up
    front. Running out of sweeps is reported, not raised.

    Raises:
        DimensionMismatchError: if A and u disagree in length.
        ValueError: if tol or max_iter is not positive.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if max_iter <= 0:
        raise ValueError(f"max_iter must be positive, got {max_iter}")
    cells = u.cells if isinstance(u, DyadTable) else np.asarray(u, dtype=np.int64)
    if A.n_cols != cells.size:
        raise DimensionMismatchError(f"design matrix has {A.n_cols} columns, table has {cells.size} cells")

    E = A.entries.astype(float)
    target = E @ cells.astype(float)
    m = _initial_means(u)

    zero_rows = target == 0
    forced = np.flatnonzero((E[zero_rows] > 0).any(axis=0)) if zero_rows.any() else np.empty(0, dtype=int)
    m[forced] = 0.0

    scale = E.max(axis=1)
    scale[scale == 0] = 1.0
    expo = E / scale[:, None]
    groups = [(E[g], expo[g].T, target[g]) for g in _disjoint_groups(A.entries)]

    trace: List[float] = []
    gap = float("inf")
    iterations = 0
    converged = False
    while iterations < max_iter:
        iterations += 1
        for E_g, expo_t, target_g in groups:
            current = E_g @ m
            live = (target_g > 0) & (current > 0)
            if not live.any():
                continue
            log_f = np.zeros(current.size)
            log_f[live] = np.log(target_g[live] / current[live])
            m *= np.exp(expo_t @ log_f)
        gap = float(np.max(np.abs(E @ m - target), initial=0.0))
        trace.append(gap)
        if gap <= tol:
            converged = True
            break

    if converged:
        logger.info("IPF converged after %d sweeps (gap %.3g)", iterations, gap)
    else:
        logger.warning("IPF did not converge in %d sweeps (gap %.3g)", iterations, gap)
    return FitResult(
        fitted_means=m,
        converged=converged,
        iterations=iterations,
        max_margin_gap=gap,
        zero_flag=[int(c) for c in np.flatnonzero(m < eps)],
        observed=np.array(cells, dtype=np.int64),
        forced_zero=[int(c) for c in forced],
        gap_trace=trace,
        tol=tol,
    )


def mle_existence_heuristic(fit: FitResult, eps: float = DEFAULT_EPS) -> MleReport:
    """Advisory check for fits that drift toward the boundary.

    Flags nonconvergence, fitted means below ``eps`` on cells observed
    positive, and fitted means below ``eps`` that no zero margin forces.
    """
    reasons: List[str] = []
    if not fit.converged:
        reasons.append(f"not converged after {fit.iterations} sweeps (gap {fit.max_margin_gap:.3g})")
    small = np.flatnonzero(fit.fitted_means < eps)
    forced = set(fit.forced_zero)
    positive = [int(c) for c in small if fit.observed[c] > 0]
    if positive:
        reasons.append(f"cells {positive[:10]} observed positive but fitted below {eps:g}")
    boundary = [int(c) for c in small if int(c) not in forced and fit.observed[c] == 0]
    if boundary:
        reasons.append(f"cells {boundary[:10]} fitted below {eps:g} without a zero margin")
    if reasons:
        for r in reasons:
            logger.warning("MLE existence suspect: %s", r)
        return MleReport(SUSPECT, reasons)
    return MleReport(LIKELY, [])
