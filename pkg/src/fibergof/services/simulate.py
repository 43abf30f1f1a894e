"""Synthetic replicates drawn from a fitted model."""

from __future__ import annotations

import logging
from typing import List

import numpy as np

from fibergof.core.tables import DyadTable
from fibergof.core.zoo import ModelSpec
from fibergof.errors import DimensionMismatchError, NotConvergedError
from fibergof.services.ipf import FitResult

logger = logging.getLogger(__name__)


def _dyad_probabilities(means: np.ndarray) -> np.ndarray:
    totals = means.sum(axis=1, keepdims=True)
    probs = np.divide(means, totals, out=np.zeros_like(means), where=totals > 0)
    # a dyad without mass has no observations; park it on state 00
    probs[totals[:, 0] <= 0, 0] = 1.0
    return probs


def simulate(spec: ModelSpec, fit: FitResult, count: int, seed: int) -> List[DyadTable]:
    """Draw ``count`` independent tables from the fitted model.

    Graph tables draw every dyad from a multinomial over its states with the
    fitted means normalized per dyad and the dyad's observation count as the
    number of trials (1 for simple graphs). Plain tables draw one multinomial
    over all cells with the observed grand total.

    Args:
        spec: Model the fit belongs to
        fit: Converged fit carrying the observed table and fitted means
        count: Number of replicates (>= 1)
        seed: Seed of the replicate stream

    Returns:
        Replicates in draw order

    Raises:
        NotConvergedError: If the fit did not converge
        ValueError: If count is not positive
    """
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    if not fit.converged:
        raise NotConvergedError(
            f"simulation needs a converged fit (stopped after {fit.iterations} sweeps, "
            f"gap {fit.max_margin_gap:.3g})"
        )
    means = np.clip(np.asarray(fit.fitted_means, dtype=float), 0.0, None)
    observed = np.asarray(fit.observed, dtype=np.int64)
    if means.size != observed.size or means.size != spec.design().n_cols:
        raise DimensionMismatchError(f"fit has {means.size} cells, model {spec.name} expects {spec.design().n_cols}")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if spec.family == "independence":
        total = int(observed.sum())
        probs = means / means.sum() if means.sum() > 0 else np.full(means.size, 1.0 / means.size)
        draws = rng.multinomial(total, probs, size=count)
        tables = [DyadTable.from_counts(draw.reshape(spec.d1, spec.d2)) for draw in draws]
    else:
        k = 4 if spec.directed else 2
        trials = observed.reshape(-1, k).sum(axis=1)
        probs = _dyad_probabilities(means.reshape(-1, k))
        tables = []
        for _ in range(count):
            cells = rng.multinomial(trials, probs).reshape(-1)
            tables.append(DyadTable(cells, mode=spec.mode, n=spec.n, directed=spec.directed))
    logger.info("simulated %d replicates of %s (seed %d)", count, spec.name, seed)
    return tables
