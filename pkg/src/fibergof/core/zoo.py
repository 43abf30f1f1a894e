"""Design matrices for the log-linear network model families.

Row order is fixed for every builder: dyad normalizers first, then global
counts, then per-node (or per-block) counts, then reciprocity rows.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from fibergof.core.tables import (
    DyadTable,
    GraphData,
    Mode,
    cell_labels,
    default_trials,
    dyad_pairs,
    n_dyads,
)
from fibergof.errors import InvalidModelError

RECIPROCITY_VARIANTS = ("zero", "constant", "differential")
SBM_VARIANTS = ("restricted", "full")
MODEL_NAMES = (
    "independence",
    "beta",
    "p1-zero",
    "p1-constant",
    "p1-differential",
    "sbm-restricted",
    "sbm-full",
)

# directed dyad (i, j): state -> ((tail, head) per edge it carries)
_EDGES_OF_STATE = {
    0: (),
    1: ((0, 1),),
    2: ((1, 0),),
    3: ((0, 1), (1, 0)),
}


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Nonnegative integer matrix A with labelled rows (statistics) and columns (cells)."""

    entries: np.ndarray
    row_labels: Tuple[str, ...]
    col_labels: Tuple[str, ...]

    def __post_init__(self) -> None:
        entries = np.array(self.entries, dtype=np.int64)
        if entries.ndim != 2:
            raise InvalidModelError(f"design matrix must be 2-D, got {entries.ndim}-D")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "row_labels", tuple(self.row_labels))
        object.__setattr__(self, "col_labels", tuple(self.col_labels))
        m, ell = entries.shape
        if len(self.row_labels) != m or len(self.col_labels) != ell:
            raise InvalidModelError(
                f"{m}x{ell} matrix with {len(self.row_labels)} row and {len(self.col_labels)} column labels"
            )
        if (entries < 0).any():
            raise InvalidModelError("design matrix entries must be nonnegative")
        empty = np.flatnonzero(~entries.any(axis=0))
        if empty.size:
            raise InvalidModelError(f"column {self.col_labels[int(empty[0])]} is all zero")

    @property
    def n_rows(self) -> int:
        return int(self.entries.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.entries.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n_rows, self.n_cols

    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.entries.astype(float)))

    def row(self, label: str) -> np.ndarray:
        return self.entries[self.row_labels.index(label)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DesignMatrix):
            return NotImplemented
        return (
            self.row_labels == other.row_labels
            and self.col_labels == other.col_labels
            and np.array_equal(self.entries, other.entries)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class BlockPartition:
    """Known block assignment: ``assignment[i - 1]`` is the block (1..K) of node i."""

    assignment: Tuple[int, ...]

    def __post_init__(self) -> None:
        assignment = tuple(int(b) for b in self.assignment)
        object.__setattr__(self, "assignment", assignment)
        if not assignment:
            raise InvalidModelError("partition must assign at least one node")
        K = max(assignment)
        if min(assignment) < 1:
            raise InvalidModelError(f"block ids must be >= 1, got {min(assignment)}")
        used = set(assignment)
        for r in range(1, K + 1):
            if r not in used:
                raise InvalidModelError(f"block {r} is empty")

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[int]], n: Optional[int] = None) -> "BlockPartition":
        """Build from explicit blocks, e.g. ``[[1, 2], [3]]``."""
        n = n if n is not None else sum(len(b) for b in blocks)
        assignment = [0] * n
        for r, members in enumerate(blocks, start=1):
            if not members:
                raise InvalidModelError(f"block {r} is empty")
            for node in members:
                if not 1 <= node <= n:
                    raise InvalidModelError(f"node {node} outside [1, {n}]")
                if assignment[node - 1]:
                    raise InvalidModelError(f"node {node} assigned to two blocks")
                assignment[node - 1] = r
        missing = [i + 1 for i, b in enumerate(assignment) if b == 0]
        if missing:
            raise InvalidModelError(f"nodes {missing} have no block")
        return cls(tuple(assignment))

    @classmethod
    def from_labels(cls, node_labels: Sequence[str], block_of: Mapping[str, str]) -> "BlockPartition":
        """Map node labels to block ids; block names are numbered by first appearance."""
        ids: Dict[str, int] = {}
        assignment = []
        for lab in node_labels:
            if lab not in block_of:
                raise InvalidModelError(f"node {lab!r} has no block")
            name = str(block_of[lab])
            ids.setdefault(name, len(ids) + 1)
            assignment.append(ids[name])
        return cls(tuple(assignment))

    @property
    def n(self) -> int:
        return len(self.assignment)

    @property
    def K(self) -> int:
        return max(self.assignment)

    def block(self, node: int) -> int:
        return self.assignment[node - 1]

    def members(self, r: int) -> List[int]:
        return [i for i, b in enumerate(self.assignment, start=1) if b == r]


def _normalizer_rows(n: int, k: int) -> Tuple[np.ndarray, List[str]]:
    D = n_dyads(n)
    rows = np.zeros((D, D * k), dtype=np.int64)
    for d in range(D):
        rows[d, d * k:(d + 1) * k] = 1
    labels = [f"lambda({i},{j})" for i, j in dyad_pairs(n)]
    return rows, labels


def independence_design(d1: int, d2: int) -> DesignMatrix:
    """Row and column margins of a d1 x d2 table flattened row-major.

    Raises:
        InvalidModelError: if either dimension is below 1.
    """
    if d1 < 1 or d2 < 1:
        raise InvalidModelError(f"table dimensions must be positive, got {d1}x{d2}")
    A = np.zeros((d1 + d2, d1 * d2), dtype=np.int64)
    for i in range(d1):
        for j in range(d2):
            A[i, i * d2 + j] = 1
            A[d1 + j, i * d2 + j] = 1
    rows = [f"row[{i}]" for i in range(1, d1 + 1)] + [f"col[{j}]" for j in range(1, d2 + 1)]
    cols = [f"cell({i},{j})" for i in range(1, d1 + 1) for j in range(1, d2 + 1)]
    return DesignMatrix(A, tuple(rows), tuple(cols))


def beta_design(n: int) -> DesignMatrix:
    """Dyad normalizers plus the degree sequence of an undirected graph."""
    if n < 2:
        raise InvalidModelError(f"n must be >= 2, got {n}")
    norm, labels = _normalizer_rows(n, 2)
    deg = np.zeros((n, norm.shape[1]), dtype=np.int64)
    for d, (i, j) in enumerate(dyad_pairs(n)):
        deg[i - 1, 2 * d + 1] = 1
        deg[j - 1, 2 * d + 1] = 1
    labels += [f"degree[{i}]" for i in range(1, n + 1)]
    return DesignMatrix(np.vstack([norm, deg]), tuple(labels), cell_labels(n, False))


def p1_design(n: int, reciprocity: str = "constant") -> DesignMatrix:
    """Holland-Leinhardt p1 model over the four-state directed codec.

    Rows: dyad normalizers, total edges, in-degrees, out-degrees, then one
    reciprocity row (constant), one per dyad (differential) or none (zero).
    """
    if n < 2:
        raise InvalidModelError(f"n must be >= 2, got {n}")
    if reciprocity not in RECIPROCITY_VARIANTS:
        raise InvalidModelError(f"unknown reciprocity {reciprocity!r}; expected one of {RECIPROCITY_VARIANTS}")
    pairs = dyad_pairs(n)
    D = len(pairs)
    norm, labels = _normalizer_rows(n, 4)
    ell = 4 * D
    edges = np.zeros((1, ell), dtype=np.int64)
    indeg = np.zeros((n, ell), dtype=np.int64)
    outdeg = np.zeros((n, ell), dtype=np.int64)
    n_rho = {"zero": 0, "constant": 1, "differential": D}[reciprocity]
    rho = np.zeros((n_rho, ell), dtype=np.int64)
    for d, pair in enumerate(pairs):
        for state, carried in _EDGES_OF_STATE.items():
            col = 4 * d + state
            for t, h in carried:
                edges[0, col] += 1
                outdeg[pair[t] - 1, col] += 1
                indeg[pair[h] - 1, col] += 1
        if reciprocity == "constant":
            rho[0, 4 * d + 3] = 1
        elif reciprocity == "differential":
            rho[d, 4 * d + 3] = 1
    labels += ["edges"]
    labels += [f"in[{i}]" for i in range(1, n + 1)]
    labels += [f"out[{i}]" for i in range(1, n + 1)]
    if reciprocity == "constant":
        labels += ["rho"]
    elif reciprocity == "differential":
        labels += [f"rho({i},{j})" for i, j in pairs]
    A = np.vstack([norm, edges, indeg, outdeg, rho])
    return DesignMatrix(A, tuple(labels), cell_labels(n, True))


def sbm_design(partition: BlockPartition, variant: str = "restricted") -> DesignMatrix:
    """Stochastic blockmodel with a known partition.

    The restricted variant counts total edges, edges sent and received by
    each block, and total reciprocated dyads. The full variant counts edges
    for every ordered block pair and reciprocated dyads for every unordered
    block pair.
    """
    if variant not in SBM_VARIANTS:
        raise InvalidModelError(f"unknown blockmodel variant {variant!r}; expected one of {SBM_VARIANTS}")
    n, K = partition.n, partition.K
    if n < 2:
        raise InvalidModelError(f"n must be >= 2, got {n}")
    pairs = dyad_pairs(n)
    norm, labels = _normalizer_rows(n, 4)
    ell = 4 * len(pairs)

    if variant == "restricted":
        edges = np.zeros((1, ell), dtype=np.int64)
        out_block = np.zeros((K, ell), dtype=np.int64)
        in_block = np.zeros((K, ell), dtype=np.int64)
        rho = np.zeros((1, ell), dtype=np.int64)
        for d, pair in enumerate(pairs):
            for state, carried in _EDGES_OF_STATE.items():
                col = 4 * d + state
                for t, h in carried:
                    edges[0, col] += 1
                    out_block[partition.block(pair[t]) - 1, col] += 1
                    in_block[partition.block(pair[h]) - 1, col] += 1
            rho[0, 4 * d + 3] = 1
        labels += ["edges"]
        labels += [f"out_block[{r}]" for r in range(1, K + 1)]
        labels += [f"in_block[{r}]" for r in range(1, K + 1)]
        labels += ["rho"]
        A = np.vstack([norm, edges, out_block, in_block, rho])
        return DesignMatrix(A, tuple(labels), cell_labels(n, True))

    ordered = list(itertools.product(range(1, K + 1), repeat=2))
    unordered = [(r, s) for r, s in ordered if r <= s]
    delta = np.zeros((len(ordered), ell), dtype=np.int64)
    rho = np.zeros((len(unordered), ell), dtype=np.int64)
    for d, pair in enumerate(pairs):
        blocks = (partition.block(pair[0]), partition.block(pair[1]))
        for state, carried in _EDGES_OF_STATE.items():
            col = 4 * d + state
            for t, h in carried:
                delta[ordered.index((blocks[t], blocks[h])), col] += 1
        rho[unordered.index(tuple(sorted(blocks))), 4 * d + 3] = 1
    labels += [f"delta[{r},{s}]" for r, s in ordered]
    labels += [f"rho[{r},{s}]" for r, s in unordered]
    A = np.vstack([norm, delta, rho])
    return DesignMatrix(A, tuple(labels), cell_labels(n, True))


@dataclass(frozen=True)
class ModelSpec:
    """A model family with its parameters and the sampling mode."""

    family: str
    n: Optional[int] = None
    d1: Optional[int] = None
    d2: Optional[int] = None
    reciprocity: str = "constant"
    partition: Optional[BlockPartition] = None
    variant: str = "restricted"
    mode: Mode = Mode.SIMPLE

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.family == "independence":
            if self.d1 is None or self.d2 is None or self.d1 < 1 or self.d2 < 1:
                raise InvalidModelError(f"independence needs positive d1, d2, got {self.d1}, {self.d2}")
            if self.mode is not Mode.MULTIGRAPH:
                object.__setattr__(self, "mode", Mode.MULTIGRAPH)
        elif self.family in ("beta", "p1"):
            if self.n is None or self.n < 2:
                raise InvalidModelError(f"n must be >= 2, got {self.n}")
            if self.family == "p1" and self.reciprocity not in RECIPROCITY_VARIANTS:
                raise InvalidModelError(f"unknown reciprocity {self.reciprocity!r}")
        elif self.family == "sbm":
            if self.partition is None:
                raise InvalidModelError("sbm needs a block partition")
            if self.n is None:
                object.__setattr__(self, "n", self.partition.n)
            if self.partition.n != self.n:
                raise InvalidModelError(f"partition covers {self.partition.n} nodes, model has {self.n}")
            if self.variant not in SBM_VARIANTS:
                raise InvalidModelError(f"unknown blockmodel variant {self.variant!r}")
        else:
            raise InvalidModelError(f"unknown model family {self.family!r}")

    @classmethod
    def from_name(
        cls,
        name: str,
        n: Optional[int] = None,
        d1: Optional[int] = None,
        d2: Optional[int] = None,
        partition: Optional[BlockPartition] = None,
        mode: Union[Mode, str] = Mode.SIMPLE,
    ) -> "ModelSpec":
        """Parse a CLI model name such as ``p1-constant`` or ``sbm-full``."""
        if name not in MODEL_NAMES:
            raise InvalidModelError(f"unknown model {name!r}; expected one of {', '.join(MODEL_NAMES)}")
        family, _, variant = name.partition("-")
        if family == "p1":
            return cls("p1", n=n, reciprocity=variant, mode=Mode(mode))
        if family == "sbm":
            return cls("sbm", n=n, partition=partition, variant=variant, mode=Mode(mode))
        return cls(family, n=n, d1=d1, d2=d2, mode=Mode(mode))

    @property
    def name(self) -> str:
        if self.family == "p1":
            return f"p1-{self.reciprocity}"
        if self.family == "sbm":
            return f"sbm-{self.variant}"
        return self.family

    @property
    def directed(self) -> Optional[bool]:
        """Whether the family reads directed graphs; None for plain tables."""
        return {"independence": None, "beta": False}.get(self.family, True)

    def design(self) -> DesignMatrix:
        if self.family == "independence":
            return independence_design(self.d1, self.d2)
        if self.family == "beta":
            return beta_design(self.n)
        if self.family == "p1":
            return p1_design(self.n, self.reciprocity)
        return sbm_design(self.partition, self.variant)

    def check_graph(self, g: GraphData) -> None:
        """Raise InvalidModelError if ``g`` cannot be read by this model."""
        if self.family == "independence":
            raise InvalidModelError("independence models read count tables, not graphs")
        if g.n != self.n:
            raise InvalidModelError(f"graph has {g.n} nodes, model {self.name} expects {self.n}")
        if g.directed != self.directed:
            want = "directed" if self.directed else "undirected"
            raise InvalidModelError(f"model {self.name} needs a {want} graph")

    def to_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = {"name": self.name, "mode": self.mode.value}
        if self.family == "independence":
            out.update(d1=self.d1, d2=self.d2)
        else:
            out["n"] = self.n
        if self.partition is not None:
            out["blocks"] = list(self.partition.assignment)
        return out


def direct_statistics(spec: ModelSpec, data: Union[GraphData, DyadTable]) -> np.ndarray:
    """Sufficient statistics by direct counting, in ``spec.design()`` row order.

    Used to cross-check the builders; never goes through the design matrix.
    """
    if spec.family == "independence":
        if not isinstance(data, DyadTable) or not data.is_plain:
            raise InvalidModelError("independence statistics need a plain count table")
        table = data.cells.reshape(spec.d1, spec.d2)
        return np.concatenate([table.sum(axis=1), table.sum(axis=0)]).astype(np.int64)

    g = data
    if isinstance(g, DyadTable):
        from fibergof.core.tables import decode_table

        g = decode_table(g)
    spec.check_graph(g)
    n = g.n
    pairs = dyad_pairs(n)
    ed = g.edge_dict()
    if spec.mode is Mode.SIMPLE:
        trials = [1] * len(pairs)
    else:
        trials = list(g.trials if g.trials is not None else default_trials(g))

    if spec.family == "beta":
        return np.concatenate([trials, g.out_degrees()]).astype(np.int64)

    # canonical reciprocated count per dyad
    mutual = [min(ed.get((i, j), 0), ed.get((j, i), 0)) for i, j in pairs]
    out: List[int] = list(trials)
    if spec.family == "p1":
        out.append(g.edge_count)
        out.extend(g.in_degrees().tolist())
        out.extend(g.out_degrees().tolist())
        if spec.reciprocity == "constant":
            out.append(sum(mutual))
        elif spec.reciprocity == "differential":
            out.extend(mutual)
        return np.asarray(out, dtype=np.int64)

    part = spec.partition
    K = part.K
    if spec.variant == "restricted":
        sent = [0] * K
        received = [0] * K
        for (i, j), c in g.edges:
            sent[part.block(i) - 1] += c
            received[part.block(j) - 1] += c
        out.append(g.edge_count)
        out.extend(sent)
        out.extend(received)
        out.append(sum(mutual))
        return np.asarray(out, dtype=np.int64)

    between = np.zeros((K, K), dtype=np.int64)
    for (i, j), c in g.edges:
        between[part.block(i) - 1, part.block(j) - 1] += c
    out.extend(between.reshape(-1).tolist())
    recip = {(r, s): 0 for r in range(1, K + 1) for s in range(r, K + 1)}
    for (i, j), m in zip(pairs, mutual):
        key = tuple(sorted((part.block(i), part.block(j))))
        recip[key] += m
    out.extend(recip[k] for k in sorted(recip))
    return np.asarray(out, dtype=np.int64)
