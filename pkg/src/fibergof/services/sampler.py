"""Metropolis-Hastings walks on the fiber of the observed sufficient statistics."""

from __future__ import annotations

import logging
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gammaln

from fibergof.core.lattice import LatticeBasis, Move, MoveList, MoveProposer, applicable_cells
from fibergof.core.tables import DyadTable, Mode
from fibergof.core.zoo import DesignMatrix

logger = logging.getLogger(__name__)

TARGETS = ("uniform", "hypergeometric")
DEFAULT_BATCHES = 50
QUANTILE_LEVELS = (0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0)

StatFn = Callable[[np.ndarray], float]
MoveSource = Union[Sequence[Move], MoveProposer, None]


@dataclass(frozen=True)
class ChainConfig:
    """Run parameters of one or more fiber walks.

    ``steps`` counts every proposal including burn-in. ``target=None`` picks
    uniform for simple-graph tables and hypergeometric otherwise.
    ``verify_every`` is the period of the exact fiber check (0 disables it).
    """

    steps: int = 100_000
    burn_in: int = 10_000
    thin: int = 10
    seed: int = 0
    proposal_mix: float = 0.8
    geometric_p: float = 0.5
    target: Optional[str] = None
    chains: int = 1
    verify_every: int = 1000
    record_states: bool = False

    def __post_init__(self) -> None:
        if self.steps <= 0:
            raise ValueError(f"steps must be positive, got {self.steps}")
        if self.burn_in < 0:
            raise ValueError(f"burn_in must be nonnegative, got {self.burn_in}")
        if self.steps <= self.burn_in:
            raise ValueError(f"steps ({self.steps}) must exceed burn_in ({self.burn_in})")
        if self.thin <= 0:
            raise ValueError(f"thin must be positive, got {self.thin}")
        if self.steps - self.burn_in < self.thin:
            raise ValueError("steps - burn_in must be at least thin so one sample is kept")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not 0.0 <= self.proposal_mix <= 1.0:
            raise ValueError(f"proposal_mix must be in [0, 1], got {self.proposal_mix}")
        if not 0.0 < self.geometric_p < 1.0:
            raise ValueError(f"geometric_p must be in (0, 1), got {self.geometric_p}")
        if self.target is not None and self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}, got {self.target!r}")
        if self.chains < 1:
            raise ValueError(f"chains must be positive, got {self.chains}")
        if self.verify_every < 0:
            raise ValueError(f"verify_every must be nonnegative, got {self.verify_every}")

    def resolved_target(self, mode: Mode) -> str:
        if self.target is not None:
            return self.target
        return "uniform" if Mode(mode) is Mode.SIMPLE else "hypergeometric"

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


@dataclass
class ChainResult:
    samples_kept: int
    stat_stream: np.ndarray
    observed_stat: float
    p_value: float
    mc_standard_error: float
    acceptance_rate: float
    final_state: DyadTable
    target: str
    steps: int = 0
    accepted: int = 0
    state_counts: Optional[Dict[Tuple[int, ...], int]] = None
    chains: List["ChainResult"] = field(default_factory=list)

    def quantiles(self) -> Dict[str, float]:
        """Stat-stream quantiles keyed ``q0``, ``q5`` ... ``q100``."""
        finite = self.stat_stream[np.isfinite(self.stat_stream)]
        if finite.size == 0:
            return {f"q{round(q * 100)}": float("nan") for q in QUANTILE_LEVELS}
        values = np.quantile(finite, QUANTILE_LEVELS)
        return {f"q{round(q * 100)}": float(v) for q, v in zip(QUANTILE_LEVELS, values)}


def _combination(basis: LatticeBasis, p: float, rng: np.random.Generator) -> Move:
    # support size and |coefficients| are 1 + Geometric(p) on {0, 1, ...}
    k = min(int(rng.geometric(p)), basis.rank)
    members = rng.choice(basis.rank, size=k, replace=False)
    coeffs = rng.geometric(p, size=k) * rng.choice(np.array([-1, 1]), size=k)
    delta = coeffs.astype(np.int64) @ basis.matrix[members]
    return Move.from_delta(delta)


def _as_source(moves: MoveSource) -> Optional[MoveProposer]:
    if moves is None:
        return None
    if hasattr(moves, "draw"):
        return moves  # type: ignore[return-value]
    moves = list(moves)  # type: ignore[arg-type]
    return MoveList(moves) if moves else None


def propose(
    state: Union[DyadTable, np.ndarray],
    moves: MoveSource,
    basis: LatticeBasis,
    cfg: ChainConfig,
    rng: np.random.Generator,
) -> Move:
    """Draw a symmetric proposal.

    With probability ``proposal_mix`` a curated move (or on-the-fly proposer
    draw) with a fair sign; otherwise a random integer combination of the
    lattice basis. Without curated moves the combination is always used.
    """
    cells = state.cells if isinstance(state, DyadTable) else state
    source = moves if hasattr(moves, "draw") else _as_source(moves)
    if source is not None and (basis.rank == 0 or rng.random() < cfg.proposal_mix):
        return source.draw(cells, rng)
    if basis.rank == 0:
        return Move.zero(len(cells))
    return _combination(basis, cfg.geometric_p, rng)


def _log_ratio(cells: np.ndarray, move: Move, target: str) -> float:
    if target == "uniform":
        return 0.0
    before = cells[move.indices]
    after = before + move.values
    return float(np.sum(gammaln(before + 1.0) - gammaln(after + 1.0)))


def _accept(cells: np.ndarray, move: Move, target: str, simple_states: Optional[int],
            rng: np.random.Generator) -> bool:
    if move.is_zero() or not applicable_cells(move, cells, simple_states):
        return False
    log_r = _log_ratio(cells, move, target)
    return log_r >= 0.0 or rng.random() < np.exp(log_r)


def mh_step(state: DyadTable, move: Move, target: str, rng: np.random.Generator) -> DyadTable:
    """One Metropolis-Hastings step; returns ``state`` itself when staying."""
    simple = state.n_states if state.mode is Mode.SIMPLE else None
    if _accept(state.cells, move, target, simple, rng):
        return state.with_cells(move.apply(state.cells))
    return state


def _batch_means(indicators: np.ndarray, batches: int) -> np.ndarray:
    M = indicators.size
    b = min(batches, M)
    size = M // b
    return indicators[: b * size].reshape(b, size).mean(axis=1)


def is_extreme(stream: np.ndarray, observed: float) -> np.ndarray:
    if np.isinf(observed):
        return stream >= observed
    tol = 1e-9 * max(1.0, abs(observed))
    return stream >= observed - tol


def _se_from_means(means: np.ndarray) -> float:
    if means.size < 2:
        return 0.0
    return float(np.std(means, ddof=1) / np.sqrt(means.size))


def estimate_pvalue(observed_stat: float, stream: Sequence[float],
                    batches: int = DEFAULT_BATCHES) -> Tuple[float, float]:
    """Add-one p-value and its batch-means standard error.

    Raises:
        ValueError: if the stream is empty.
    """
    arr = np.asarray(stream, dtype=float)
    if arr.size == 0:
        raise ValueError("stat stream is empty")
    hits = is_extreme(arr, observed_stat)
    p = (1.0 + hits.sum()) / (1.0 + arr.size)
    return float(p), _se_from_means(_batch_means(hits.astype(float), batches))


def pooled_pvalue(observed_stat: float, streams: Sequence[Sequence[float]],
                  batches: int = DEFAULT_BATCHES) -> Tuple[float, float]:
    """Add-one p-value over pooled chains; batch means are formed per chain."""
    arrays = [np.asarray(s, dtype=float) for s in streams if len(s)]
    if not arrays:
        raise ValueError("stat stream is empty")
    pooled = np.concatenate(arrays)
    hits = is_extreme(pooled, observed_stat)
    p = (1.0 + hits.sum()) / (1.0 + pooled.size)
    means = np.concatenate([_batch_means(is_extreme(a, observed_stat).astype(float), batches) for a in arrays])
    return float(p), _se_from_means(means)


def chain_rng(seed: int, chain_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chain_index,)))


def run_chain(
    t0: DyadTable,
    A: DesignMatrix,
    moves: MoveSource,
    basis: LatticeBasis,
    stat_fn: StatFn,
    cfg: ChainConfig,
    chain_index: int = 0,
) -> ChainResult:
    """Walk the fiber of ``t0`` and record ``stat_fn`` after burn-in every ``thin`` steps.

    Raises:
        RuntimeError: if a visited state leaves the fiber (exact check every
            ``cfg.verify_every`` steps).
    """
    rng = chain_rng(cfg.seed, chain_index)
    target = cfg.resolved_target(t0.mode)
    simple = t0.n_states if t0.mode is Mode.SIMPLE else None
    source = _as_source(moves)
    observed_au = A.entries @ t0.cells
    cells = np.array(t0.cells, dtype=np.int64)
    observed = float(stat_fn(t0.cells))

    stream: List[float] = []
    counts: Counter = Counter()
    accepted = 0
    for step in range(1, cfg.steps + 1):
        move = propose(cells, source, basis, cfg, rng)
        if _accept(cells, move, target, simple, rng):
            cells[move.indices] += move.values
            accepted += 1
        if cfg.verify_every and step % cfg.verify_every == 0:
            if not np.array_equal(A.entries @ cells, observed_au):
                raise RuntimeError(f"chain {chain_index} left the fiber at step {step}")
        if step > cfg.burn_in and (step - cfg.burn_in) % cfg.thin == 0:
            stream.append(float(stat_fn(cells)))
            if cfg.record_states:
                counts[tuple(int(x) for x in cells)] += 1

    if not np.array_equal(A.entries @ cells, observed_au):
        raise RuntimeError(f"chain {chain_index} left the fiber")
    stats = np.asarray(stream, dtype=float)
    p, se = estimate_pvalue(observed, stats)
    rate = accepted / cfg.steps
    logger.info("chain %d: %d kept, acceptance %.3f, p=%.4f", chain_index, stats.size, rate, p)
    return ChainResult(
        samples_kept=int(stats.size),
        stat_stream=stats,
        observed_stat=observed,
        p_value=p,
        mc_standard_error=se,
        acceptance_rate=rate,
        final_state=t0.with_cells(cells),
        target=target,
        steps=cfg.steps,
        accepted=accepted,
        state_counts=dict(counts) if cfg.record_states else None,
    )


def run_chains(
    t0: DyadTable,
    A: DesignMatrix,
    moves: MoveSource,
    basis: LatticeBasis,
    stat_fn: StatFn,
    cfg: ChainConfig,
) -> ChainResult:
    """Run ``cfg.chains`` independent chains and pool them in chain order."""
    if cfg.chains == 1:
        return run_chain(t0, A, moves, basis, stat_fn, cfg, 0)
    for i in range(cfg.chains):
        logger.debug("chain %d seed stream SeedSequence(%d, spawn_key=(%d,))", i, cfg.seed, i)
    workers = min(cfg.chains, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_chain, t0, A, moves, basis, stat_fn, cfg, i) for i in range(cfg.chains)]
        results = [f.result() for f in futures]

    observed = results[0].observed_stat
    p, se = pooled_pvalue(observed, [r.stat_stream for r in results])
    steps = sum(r.steps for r in results)
    accepted = sum(r.accepted for r in results)
    counts: Optional[Dict[Tuple[int, ...], int]] = None
    if cfg.record_states:
        merged: Counter = Counter()
        for r in results:
            merged.update(r.state_counts or {})
        counts = dict(merged)
    return ChainResult(
        samples_kept=sum(r.samples_kept for r in results),
        stat_stream=np.concatenate([r.stat_stream for r in results]),
        observed_stat=observed,
        p_value=p,
        mc_standard_error=se,
        acceptance_rate=accepted / steps,
        final_state=results[-1].final_state,
        target=results[0].target,
        steps=steps,
        accepted=accepted,
        state_counts=counts,
        chains=results,
    )
