"""Graphs as dyadic contingency tables.

A graph on n nodes is stored as one block of cells per dyad (i, j), i < j,
dyads in lexicographic order. Directed graphs use four states per dyad in
the order (00, 10, 01, 11): no edge, i->j only, j->i only, both. Undirected
graphs use two states (00, 11).

In simple mode each dyad holds exactly one observation, so every dyad block
is a 0/1 indicator summing to 1. Multigraph mode drops that constraint and
allows any nonnegative counts; plain contingency tables (no dyad structure)
are multigraph-mode tables with ``n=None``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from fibergof.errors import (
    DimensionMismatchError,
    InvalidGraphError,
    InvalidTableError,
    StatisticOverflowError,
)

if TYPE_CHECKING:
    from fibergof.core.zoo import DesignMatrix

INT64_MAX = int(np.iinfo(np.int64).max)

DIRECTED_STATES: Tuple[str, ...] = ("00", "10", "01", "11")
UNDIRECTED_STATES: Tuple[str, ...] = ("00", "11")

# (i->j present, j->i present) -> directed state index
_STATE_OF_BITS = {(0, 0): 0, (1, 0): 1, (0, 1): 2, (1, 1): 3}


class Mode(str, Enum):
    SIMPLE = "simple"
    MULTIGRAPH = "multigraph"


def n_dyads(n: int) -> int:
    return n * (n - 1) // 2


def dyad_pairs(n: int) -> List[Tuple[int, int]]:
    """All dyads (i, j), i < j, of an n-node graph in lexicographic order."""
    return list(itertools.combinations(range(1, n + 1), 2))


def dyad_index(i: int, j: int, n: int) -> int:
    """Position of dyad (i, j) in the lexicographic dyad order (1-based nodes)."""
    if i > j:
        i, j = j, i
    if not (1 <= i < j <= n):
        raise InvalidGraphError(f"dyad ({i},{j}) is not a pair of distinct nodes in [1, {n}]")
    return (i - 1) * n - (i - 1) * i // 2 + (j - i - 1)


def states_for(directed: bool) -> Tuple[str, ...]:
    return DIRECTED_STATES if directed else UNDIRECTED_STATES


def cell_labels(n: int, directed: bool) -> Tuple[str, ...]:
    states = states_for(directed)
    return tuple(f"({i},{j}):{s}" for i, j in dyad_pairs(n) for s in states)


@dataclass(frozen=True)
class GraphData:
    """A (multi)graph on nodes 1..n without self-loops.

    ``edges`` holds ((tail, head), multiplicity) pairs sorted by pair; for
    undirected graphs pairs are stored with tail < head. ``trials`` is only
    meaningful in multigraph mode: the number of observations of each dyad.
    """

    n: int
    directed: bool
    edges: Tuple[Tuple[Tuple[int, int], int], ...] = ()
    labels: Tuple[str, ...] = ()
    trials: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise InvalidGraphError(f"n must be positive, got {self.n}")
        merged: Dict[Tuple[int, int], int] = {}
        for pair, count in self.edges:
            i, j = int(pair[0]), int(pair[1])
            count = int(count)
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise InvalidGraphError(f"edge ({i},{j}) has an endpoint outside [1, {self.n}]")
            if i == j:
                raise InvalidGraphError(f"self-loop at node {i}")
            if count < 0:
                raise InvalidGraphError(f"edge ({i},{j}) has negative multiplicity {count}")
            if not self.directed and i > j:
                i, j = j, i
            if count:
                merged[(i, j)] = merged.get((i, j), 0) + count
        object.__setattr__(self, "edges", tuple(sorted(merged.items())))
        if self.labels:
            if len(self.labels) != self.n:
                raise InvalidGraphError(f"expected {self.n} labels, got {len(self.labels)}")
            object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        else:
            object.__setattr__(self, "labels", tuple(str(i) for i in range(1, self.n + 1)))
        if self.trials is not None:
            trials = tuple(int(x) for x in self.trials)
            if len(trials) != n_dyads(self.n):
                raise InvalidGraphError(f"expected {n_dyads(self.n)} dyad trial counts, got {len(trials)}")
            if min(trials, default=0) < 0:
                raise InvalidGraphError("dyad trial counts must be nonnegative")
            object.__setattr__(self, "trials", trials)

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[Union[Tuple[int, int], Tuple[int, int, int]]],
        directed: bool = True,
        labels: Sequence[str] = (),
        trials: Optional[Sequence[int]] = None,
    ) -> "GraphData":
        """Build from (i, j) or (i, j, multiplicity) tuples; repeated pairs add up."""
        pairs = []
        for e in edges:
            count = e[2] if len(e) > 2 else 1
            pairs.append(((e[0], e[1]), count))
        return cls(n=n, directed=directed, edges=tuple(pairs), labels=tuple(labels),
                   trials=None if trials is None else tuple(trials))

    def edge_dict(self) -> Dict[Tuple[int, int], int]:
        return dict(self.edges)

    def multiplicity(self, i: int, j: int) -> int:
        if not self.directed and i > j:
            i, j = j, i
        return self.edge_dict().get((i, j), 0)

    @property
    def edge_count(self) -> int:
        return sum(c for _, c in self.edges)

    @property
    def max_multiplicity(self) -> int:
        return max((c for _, c in self.edges), default=0)

    def out_degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for (i, j), c in self.edges:
            deg[i - 1] += c
            if not self.directed:
                deg[j - 1] += c
        return deg

    def in_degrees(self) -> np.ndarray:
        if not self.directed:
            return self.out_degrees()
        deg = np.zeros(self.n, dtype=np.int64)
        for (_, j), c in self.edges:
            deg[j - 1] += c
        return deg


@dataclass(frozen=True, eq=False)
class DyadTable:
    """Integer cell vector of a graph (``n`` set) or plain contingency table (``n=None``)."""

    cells: np.ndarray
    mode: Mode = Mode.SIMPLE
    n: Optional[int] = None
    directed: bool = True
    shape: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        cells = np.array(self.cells, dtype=np.int64).reshape(-1)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "mode", Mode(self.mode))
        if (cells < 0).any():
            raise InvalidTableError("table cells must be nonnegative")
        if self.n is None:
            if self.mode is Mode.SIMPLE:
                raise InvalidTableError("plain contingency tables have no dyads; use multigraph mode")
            if self.shape is not None:
                shape = tuple(int(s) for s in self.shape)
                if int(np.prod(shape)) != cells.size:
                    raise InvalidTableError(f"shape {shape} does not match {cells.size} cells")
                object.__setattr__(self, "shape", shape)
            return
        if self.n < 2:
            raise InvalidTableError(f"graph tables need n >= 2, got {self.n}")
        expected = n_dyads(self.n) * self.n_states
        if cells.size != expected:
            raise InvalidTableError(
                f"expected {expected} cells for n={self.n} ({'directed' if self.directed else 'undirected'}), "
                f"got {cells.size}"
            )
        if self.mode is Mode.SIMPLE:
            sums = self.dyad_sums()
            bad = np.flatnonzero(sums != 1)
            if bad.size:
                i, j = dyad_pairs(self.n)[int(bad[0])]
                raise InvalidTableError(f"dyad ({i},{j}) sums to {int(sums[bad[0]])}, expected 1 in simple mode")

    @classmethod
    def from_counts(cls, counts: Union[Sequence, np.ndarray]) -> "DyadTable":
        """Wrap a plain contingency table; multi-way input is flattened row-major."""
        arr = np.asarray(counts)
        shape = arr.shape if arr.ndim > 1 else None
        return cls(cells=arr.reshape(-1), mode=Mode.MULTIGRAPH, n=None, shape=shape)

    @property
    def n_states(self) -> Optional[int]:
        if self.n is None:
            return None
        return len(states_for(self.directed))

    @property
    def is_plain(self) -> bool:
        return self.n is None

    def __len__(self) -> int:
        return int(self.cells.size)

    def by_dyad(self) -> np.ndarray:
        if self.n is None:
            raise InvalidTableError("plain contingency tables have no dyads")
        return self.cells.reshape(-1, self.n_states)

    def dyad_sums(self) -> np.ndarray:
        return self.by_dyad().sum(axis=1)

    def with_cells(self, cells: np.ndarray) -> "DyadTable":
        return DyadTable(cells=cells, mode=self.mode, n=self.n, directed=self.directed, shape=self.shape)

    def key(self) -> Tuple[int, ...]:
        return tuple(int(x) for x in self.cells)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DyadTable):
            return NotImplemented
        return (
            self.mode is other.mode
            and self.n == other.n
            and self.directed == other.directed
            and np.array_equal(self.cells, other.cells)
        )

    def __hash__(self) -> int:
        return hash((self.mode, self.n, self.directed, self.cells.tobytes()))

    def __repr__(self) -> str:
        kind = "table" if self.n is None else f"n={self.n}, {'directed' if self.directed else 'undirected'}"
        return f"DyadTable({kind}, mode={self.mode.value}, cells={self.cells.tolist()})"


@dataclass(frozen=True, eq=False)
class StatVector:
    """Sufficient statistics Au with the design matrix row labels."""

    entries: np.ndarray
    labels: Tuple[str, ...]

    def __post_init__(self) -> None:
        entries = np.array(self.entries, dtype=np.int64).reshape(-1)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "labels", tuple(self.labels))
        if entries.size != len(self.labels):
            raise DimensionMismatchError(f"{entries.size} statistics for {len(self.labels)} row labels")

    def __len__(self) -> int:
        return int(self.entries.size)

    def __getitem__(self, label: str) -> int:
        try:
            return int(self.entries[self.labels.index(label)])
        except ValueError:
            raise KeyError(label) from None

    def select(self, prefix: str) -> np.ndarray:
        """Entries whose label starts with ``prefix``, in row order."""
        idx = [k for k, lab in enumerate(self.labels) if lab.startswith(prefix)]
        return self.entries[idx]

    def as_dict(self) -> Dict[str, int]:
        return {lab: int(v) for lab, v in zip(self.labels, self.entries)}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StatVector):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.entries, other.entries)

    __hash__ = None  # type: ignore[assignment]


def default_trials(g: GraphData) -> Tuple[int, ...]:
    ed = g.edge_dict()
    needed = 1
    for i, j in dyad_pairs(g.n):
        if g.directed:
            a, b = ed.get((i, j), 0), ed.get((j, i), 0)
            needed = max(needed, max(a, b))
        else:
            needed = max(needed, ed.get((i, j), 0))
    return (needed,) * n_dyads(g.n)


def encode_graph(g: GraphData, mode: Union[Mode, str] = Mode.SIMPLE) -> DyadTable:
    """Encode a graph as its dyadic table.

    Raises:
        InvalidGraphError: multiplicity > 1 in simple mode, or fewer dyad
            trials than the observed edges need in multigraph mode.
    """
    mode = Mode(mode)
    if g.n < 2:
        raise InvalidGraphError(f"graph tables need n >= 2, got {g.n}")
    if mode is Mode.SIMPLE and g.max_multiplicity > 1:
        pair = next(p for p, c in g.edges if c > 1)
        raise InvalidGraphError(f"edge {pair} has multiplicity {g.edge_dict()[pair]} in simple mode")
    k = 4 if g.directed else 2
    cells = np.zeros((n_dyads(g.n), k), dtype=np.int64)
    ed = g.edge_dict()
    trials = None
    if mode is Mode.MULTIGRAPH:
        trials = g.trials if g.trials is not None else default_trials(g)
    for d, (i, j) in enumerate(dyad_pairs(g.n)):
        if g.directed:
            a, b = ed.get((i, j), 0), ed.get((j, i), 0)
            if mode is Mode.SIMPLE:
                cells[d, _STATE_OF_BITS[(a, b)]] = 1
                continue
            both = min(a, b)
            cells[d, 1:] = (a - both, b - both, both)
        else:
            a = ed.get((i, j), 0)
            if mode is Mode.SIMPLE:
                cells[d, a] = 1
                continue
            cells[d, 1] = a
        used = int(cells[d].sum())
        if trials[d] < used:
            raise InvalidGraphError(f"dyad ({i},{j}) needs {used} observations but has {trials[d]} trials")
        cells[d, 0] = trials[d] - used
    return DyadTable(cells=cells.reshape(-1), mode=mode, n=g.n, directed=g.directed)


def decode_table(t: DyadTable, labels: Sequence[str] = ()) -> GraphData:
    """Inverse of :func:`encode_graph` (canonical tables in multigraph mode)."""
    if t.is_plain:
        raise InvalidTableError("plain contingency tables do not encode a graph")
    blocks = t.by_dyad()
    if t.mode is Mode.SIMPLE:
        sums = blocks.sum(axis=1)
        if (sums != 1).any():
            raise InvalidTableError("simple-mode dyad sums must all be 1")
    edges: List[Tuple[Tuple[int, int], int]] = []
    for (i, j), block in zip(dyad_pairs(t.n), blocks):
        if t.directed:
            _, c10, c01, c11 = (int(x) for x in block)
            if c10 + c11:
                edges.append(((i, j), c10 + c11))
            if c01 + c11:
                edges.append(((j, i), c01 + c11))
        elif block[1]:
            edges.append(((i, j), int(block[1])))
    trials = None
    if t.mode is Mode.MULTIGRAPH:
        trials = tuple(int(x) for x in blocks.sum(axis=1))
    return GraphData(n=t.n, directed=t.directed, edges=tuple(edges), labels=tuple(labels), trials=trials)


def sufficient_statistics(A: "DesignMatrix", t: Union[DyadTable, np.ndarray]) -> StatVector:
    """Exact integer product Au with the design row labels.

    Raises:
        DimensionMismatchError: column count differs from the table length.
        StatisticOverflowError: the product could exceed int64.
    """
    cells = t.cells if isinstance(t, DyadTable) else np.asarray(t, dtype=np.int64)
    if A.n_cols != cells.size:
        raise DimensionMismatchError(f"design matrix has {A.n_cols} columns, table has {cells.size} cells")
    bound = int(np.abs(A.entries).max(initial=0)) * int(np.abs(cells).astype(object).sum())
    if bound > INT64_MAX:
        raise StatisticOverflowError(f"sufficient statistics may exceed int64 (bound {bound})")
    return StatVector(entries=A.entries @ cells, labels=A.row_labels)


def label_map(labels: Sequence[str]) -> Mapping[str, int]:
    """Label -> node id (1-based) in the given order."""
    return {lab: k for k, lab in enumerate(labels, start=1)}
