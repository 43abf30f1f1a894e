"""Brute-force fiber enumeration for small instances.

Ground truth for the sampler: complete fibers, connectivity of move sets
and exact conditional p-values.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp

from fibergof.core.lattice import Move, applicable
from fibergof.core.tables import DyadTable, Mode
from fibergof.core.zoo import DesignMatrix, independence_design
from fibergof.errors import DimensionMismatchError, InvalidTableError, TruncatedFiberError
from fibergof.services.sampler import is_extreme

logger = logging.getLogger(__name__)

DEFAULT_CAP = 1_000_000


@dataclass
class FiberEnumeration:
    """Fiber members in ascending lexicographic order of their cell vectors."""

    members: List[DyadTable]
    truncated: bool = False

    @property
    def size(self) -> int:
        return len(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[DyadTable]:
        return iter(self.members)


@dataclass
class ConnectivityReport:
    components: int
    component_sizes: List[int] = field(default_factory=list)
    witness: Optional[Tuple[DyadTable, DyadTable]] = None

    @property
    def connected(self) -> bool:
        return self.components <= 1


@dataclass
class FiberSearchResult:
    checked: int
    rows: Optional[Tuple[int, ...]] = None
    cols: Optional[Tuple[int, ...]] = None
    report: Optional[ConnectivityReport] = None

    @property
    def found(self) -> bool:
        return self.report is not None


def enumerate_fiber(A: DesignMatrix, u: DyadTable, cap: int = DEFAULT_CAP) -> FiberEnumeration:
    """All tables v with A v = A u, in the mode of ``u``.

    Depth-first over cells in index order, trying values in ascending order;
    each row's remaining budget bounds the cells it covers and must be used
    up once its last cell is placed. Hitting ``cap`` stops the search and
    marks the result truncated.
    """
    if cap <= 0:
        raise ValueError(f"cap must be positive, got {cap}")
    if A.n_cols != len(u):
        raise DimensionMismatchError(f"design matrix has {A.n_cols} columns, table has {len(u)} cells")
    E = A.entries
    ell = A.n_cols
    budget = [int(x) for x in E @ u.cells]
    col_rows = [[(int(r), int(E[r, c])) for r in np.flatnonzero(E[:, c])] for c in range(ell)]
    last: Dict[int, int] = {}
    for c in range(ell):
        for r, _ in col_rows[c]:
            last[r] = c
    closes = [[r for r, _ in col_rows[c] if last[r] == c] for c in range(ell)]
    simple = u.mode is Mode.SIMPLE

    def upper(c: int) -> int:
        hi = min(budget[r] // a for r, a in col_rows[c])
        return min(hi, 1) if simple else hi

    # explicit stack: current[c] is the value placed at cell c, -1 before the first try
    current = [-1] * ell
    hi = [0] * ell
    members: List[DyadTable] = []
    truncated = False
    c = 0
    if ell:
        hi[0] = upper(0)
    while c >= 0:
        if c == ell:
            if len(members) >= cap:
                truncated = True
                break
            members.append(u.with_cells(np.array(current, dtype=np.int64)))
            c -= 1
            continue
        v = current[c]
        if v >= 0:
            for r, a in col_rows[c]:
                budget[r] += a * v
        placed = False
        while v < hi[c]:
            v += 1
            for r, a in col_rows[c]:
                budget[r] -= a * v
            if all(budget[r] == 0 for r in closes[c]):
                placed = True
                break
            for r, a in col_rows[c]:
                budget[r] += a * v
        if not placed:
            current[c] = -1
            c -= 1
            continue
        current[c] = v
        c += 1
        if c < ell:
            current[c] = -1
            hi[c] = upper(c)

    if truncated:
        logger.warning("fiber enumeration truncated at %d members", cap)
    return FiberEnumeration(members=members, truncated=truncated)


def connectivity_check(moves: Sequence[Move], fiber: FiberEnumeration) -> ConnectivityReport:
    """Components of the fiber graph whose edges are single applicable moves.

    Raises:
        TruncatedFiberError: if the fiber is incomplete.
    """
    if fiber.truncated:
        raise TruncatedFiberError("connectivity needs a complete fiber")
    members = fiber.members
    index = {m.key(): k for k, m in enumerate(members)}
    parent = list(range(len(members)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for k, t in enumerate(members):
        for mv in moves:
            for signed in (mv, -mv):
                if not applicable(signed, t):
                    continue
                j = index.get(tuple(int(x) for x in signed.apply(t.cells)))
                if j is not None:
                    a, b = find(k), find(j)
                    if a != b:
                        parent[max(a, b)] = min(a, b)

    roots = [find(k) for k in range(len(members))]
    sizes: Dict[int, int] = {}
    for r in roots:
        sizes[r] = sizes.get(r, 0) + 1
    witness = None
    if len(sizes) > 1:
        other = next(k for k, r in enumerate(roots) if r != roots[0])
        witness = (members[0], members[other])
    return ConnectivityReport(
        components=len(sizes),
        component_sizes=sorted(sizes.values(), reverse=True),
        witness=witness,
    )


def exact_pvalue_small(
    A: DesignMatrix,
    u: DyadTable,
    stat_fn: Callable[[np.ndarray], float],
    target: Optional[str] = None,
    fiber: Optional[FiberEnumeration] = None,
    cap: int = DEFAULT_CAP,
) -> float:
    """Exact conditional p-value: weight of fiber tables at least as extreme as ``u``.

    ``target`` is ``uniform`` or ``hypergeometric`` (weights 1 / prod v_c!);
    None picks by mode as the sampler does.

    Raises:
        TruncatedFiberError: if the fiber is incomplete.
    """
    fiber = fiber if fiber is not None else enumerate_fiber(A, u, cap)
    if fiber.truncated:
        raise TruncatedFiberError("exact p-value needs a complete fiber")
    if target is None:
        target = "uniform" if u.mode is Mode.SIMPLE else "hypergeometric"
    cells = np.stack([m.cells for m in fiber.members]).astype(float)
    if target == "uniform":
        log_w = np.zeros(len(fiber))
    else:
        log_w = -gammaln(cells + 1.0).sum(axis=1)
    stats = np.array([stat_fn(m.cells) for m in fiber.members], dtype=float)
    hits = is_extreme(stats, float(stat_fn(u.cells)))
    if not hits.any():
        return 0.0
    return float(np.exp(logsumexp(log_w[hits]) - logsumexp(log_w)))


def table_from_margins(rows: Sequence[int], cols: Sequence[int]) -> DyadTable:
    """Northwest-corner table with the given margins.

    Raises:
        InvalidTableError: if the margins are negative or their totals differ.
    """
    rows = [int(r) for r in rows]
    cols = [int(c) for c in cols]
    if min(rows + cols, default=0) < 0:
        raise InvalidTableError("margins must be nonnegative")
    if sum(rows) != sum(cols):
        raise InvalidTableError(f"row total {sum(rows)} differs from column total {sum(cols)}")
    table = np.zeros((len(rows), len(cols)), dtype=np.int64)
    r_left, c_left = list(rows), list(cols)
    i = j = 0
    while i < len(rows) and j < len(cols):
        x = min(r_left[i], c_left[j])
        table[i, j] = x
        r_left[i] -= x
        c_left[j] -= x
        if r_left[i] == 0:
            i += 1
        else:
            j += 1
    return DyadTable.from_counts(table)


def _compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    """Nonnegative integer vectors of length ``parts`` summing to ``total``, lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def search_disconnected_fiber(moves: Sequence[Move], d1: int, d2: int, max_total: int) -> FiberSearchResult:
    """First independence fiber (totals 1..max_total) the moves leave disconnected."""
    A = independence_design(d1, d2)
    checked = 0
    for total in range(1, max_total + 1):
        for rows, cols in itertools.product(_compositions(total, d1), _compositions(total, d2)):
            fiber = enumerate_fiber(A, table_from_margins(rows, cols))
            checked += 1
            report = connectivity_check(moves, fiber)
            if not report.connected:
                logger.info("disconnected fiber at rows %s, cols %s (%d members)", rows, cols, fiber.size)
                return FiberSearchResult(checked=checked, rows=rows, cols=cols, report=report)
    return FiberSearchResult(checked=checked)
