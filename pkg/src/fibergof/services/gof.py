"""Goodness-of-fit statistics and the exact conditional test pipeline."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from fibergof.core.lattice import curated_moves, integer_kernel, proposer_for
from fibergof.core.tables import DyadTable, GraphData, encode_graph, label_map
from fibergof.core.zoo import ModelSpec
from fibergof.errors import DimensionMismatchError, InvalidModelError
from fibergof.services.ipf import DEFAULT_MAX_ITER, DEFAULT_TOL, FitResult, ipf_fit, mle_existence_heuristic
from fibergof.services.sampler import ChainConfig, ChainResult, run_chains

logger = logging.getLogger(__name__)

STAT_KINDS = ("chi2", "g2")


def _pair(u: Union[DyadTable, np.ndarray, Sequence[float]], m_hat: Sequence[float]):
    cells = u.cells if isinstance(u, DyadTable) else np.asarray(u)
    m = np.asarray(m_hat, dtype=float)
    if cells.size != m.size:
        raise DimensionMismatchError(f"table has {cells.size} cells, fitted means {m.size}")
    if (m < 0).any():
        raise ValueError("fitted means must be nonnegative")
    return cells.astype(float), m


def chi_square(u: Union[DyadTable, np.ndarray], m_hat: Sequence[float]) -> float:
    """Pearson statistic; +inf when a cell with zero mean is observed positive."""
    x, m = _pair(u, m_hat)
    support = m > 0
    if (x[~support] > 0).any():
        return float("inf")
    return float(np.sum((x[support] - m[support]) ** 2 / m[support]))


def deviance_g2(u: Union[DyadTable, np.ndarray], m_hat: Sequence[float]) -> float:
    """Likelihood-ratio statistic 2 sum u log(u / m) over positive cells."""
    x, m = _pair(u, m_hat)
    pos = x > 0
    if (m[pos] == 0).any():
        return float("inf")
    return float(2.0 * np.sum(x[pos] * np.log(x[pos] / m[pos])))


def statistic(kind: str, m_hat: Sequence[float]) -> Callable[[np.ndarray], float]:
    """Statistic against a fixed fitted mean vector, as a function of the cells."""
    if kind not in STAT_KINDS:
        raise ValueError(f"stat must be one of {STAT_KINDS}, got {kind!r}")
    m = np.asarray(m_hat, dtype=float)
    support = m > 0
    m_s = m[support]
    log_m = np.log(np.where(support, m, 1.0))

    if kind == "chi2":
        def chi2(cells: np.ndarray) -> float:
            x = np.asarray(cells, dtype=float)
            if (x[~support] > 0).any():
                return float("inf")
            return float(np.sum((x[support] - m_s) ** 2 / m_s))

        return chi2

    def g2(cells: np.ndarray) -> float:
        x = np.asarray(cells, dtype=float)
        pos = x > 0
        if (pos & ~support).any():
            return float("inf")
        xp = x[pos]
        return float(2.0 * np.sum(xp * (np.log(xp) - log_m[pos])))

    return g2


def data_fingerprint(t: DyadTable, labels: Sequence[str] = ()) -> str:
    h = hashlib.sha256()
    h.update(f"{t.mode.value}|{t.n}|{t.directed}|{t.shape}|".encode())
    h.update("\x1f".join(labels).encode())
    h.update(np.ascontiguousarray(t.cells, dtype="<i8").tobytes())
    return h.hexdigest()


@dataclass
class GofReport:
    model: Dict[str, object]
    observed_stat: float
    stat_kind: str
    p_value: float
    se: float
    chain_diagnostics: Dict[str, object]
    fit: Dict[str, object]
    data_fingerprint: str
    seed: int
    config: Dict[str, object]
    mle: Dict[str, object]
    labels: Dict[str, int] = field(default_factory=dict)
    quantiles: Dict[str, float] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    infinite_stat: bool = False
    created_at: str = ""
    chain: Optional[ChainResult] = field(default=None, repr=False)
    fit_result: Optional[FitResult] = field(default=None, repr=False)

    def to_dict(self) -> Dict[str, object]:
        """JSON-ready mapping with a stable key order."""
        return {
            "model": self.model,
            "stat_kind": self.stat_kind,
            "observed_stat": None if self.infinite_stat else self.observed_stat,
            "infinite_stat": self.infinite_stat,
            "p_value": self.p_value,
            "se": self.se,
            "seed": self.seed,
            "config": self.config,
            "chain_diagnostics": self.chain_diagnostics,
            "stat_quantiles": self.quantiles,
            "fit": self.fit,
            "mle": self.mle,
            "labels": self.labels,
            "data_fingerprint": self.data_fingerprint,
            "warnings": list(self.warnings),
            "created_at": self.created_at,
        }


def _table_for(data: Union[GraphData, DyadTable], spec: ModelSpec) -> DyadTable:
    if isinstance(data, GraphData):
        spec.check_graph(data)
        return encode_graph(data, spec.mode)
    if spec.family == "independence":
        if not data.is_plain:
            raise InvalidModelError("independence models read plain count tables")
        if len(data) != spec.d1 * spec.d2:
            raise DimensionMismatchError(f"table has {len(data)} cells, expected {spec.d1 * spec.d2}")
        return data
    if data.is_plain or data.n != spec.n or data.directed != spec.directed:
        raise InvalidModelError(f"table does not match model {spec.name} on {spec.n} nodes")
    if data.mode is not spec.mode:
        raise InvalidModelError(
            f"table is in {data.mode.value} mode, model {spec.name} samples in {spec.mode.value} mode"
        )
    return data


def exact_test(
    data: Union[GraphData, DyadTable],
    spec: ModelSpec,
    cfg: ChainConfig,
    stat_kind: str = "chi2",
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> GofReport:
    """Encode, fit, build moves, walk the fiber and report the p-value.

    The fitted means are computed once at the observed table: A m is fixed
    by A u, which is the same for every table of the fiber.
    """
    if stat_kind not in STAT_KINDS:
        raise ValueError(f"stat must be one of {STAT_KINDS}, got {stat_kind!r}")
    t = _table_for(data, spec)
    labels = data.labels if isinstance(data, GraphData) else ()
    A = spec.design()
    warnings: List[str] = []

    fit = ipf_fit(A, t, tol=tol, max_iter=max_iter)
    mle = mle_existence_heuristic(fit)
    if not fit.converged:
        warnings.append(f"fit did not converge after {fit.iterations} sweeps")
    warnings.extend(f"MLE existence: {r}" for r in mle.reasons if not r.startswith("not converged"))

    basis = integer_kernel(A)
    source = proposer_for(spec, A)
    n_curated = None
    if source is None:
        source = curated_moves(spec, A)
        n_curated = len(source)
    stat_fn = statistic(stat_kind, fit.fitted_means)
    chain = run_chains(t, A, source, basis, stat_fn, cfg)

    infinite = bool(np.isinf(chain.observed_stat))
    if infinite:
        warnings.append("observed statistic is infinite: a zero fitted mean meets a positive count")
        logger.warning("observed %s statistic is infinite", stat_kind)

    diagnostics: Dict[str, object] = {
        "acceptance_rate": chain.acceptance_rate,
        "samples_kept": chain.samples_kept,
        "steps": chain.steps,
        "chains": cfg.chains,
        "target": chain.target,
        "basis_rank": basis.rank,
        "proposal": "on-the-fly" if n_curated is None else "curated",
    }
    if n_curated is not None:
        diagnostics["curated_moves"] = n_curated
    if chain.chains:
        diagnostics["per_chain_p_values"] = [c.p_value for c in chain.chains]

    return GofReport(
        model=spec.to_dict(),
        observed_stat=chain.observed_stat,
        stat_kind=stat_kind,
        p_value=chain.p_value,
        se=chain.mc_standard_error,
        chain_diagnostics=diagnostics,
        fit=fit.summary(),
        data_fingerprint=data_fingerprint(t, labels),
        seed=cfg.seed,
        config=cfg.to_dict(),
        mle={"status": mle.status, "reasons": mle.reasons},
        labels=dict(label_map(labels)),
        quantiles=chain.quantiles(),
        warnings=warnings,
        infinite_stat=infinite,
        created_at=datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        chain=chain,
        fit_result=fit,
    )
