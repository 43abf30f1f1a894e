"""Markov moves: integer kernels, curated move families and applicability.

A move is an integer vector b with A b = 0. Moves are stored sparsely
(cell indices and nonzero increments); the dense vector is only built on
demand.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Dict, Iterable, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from fibergof.core.tables import DyadTable, Mode, dyad_index, dyad_pairs
from fibergof.core.zoo import BlockPartition, DesignMatrix, ModelSpec
from fibergof.errors import DimensionMismatchError, InvalidModelError, KernelOverflowError

logger = logging.getLogger(__name__)

DEFAULT_MAX_BITS = 256
DEFAULT_SUBGRAPH_SIZES = (3, 4, 5)
CANDIDATE_CACHE_LIMIT = 4096
_INT64_SAFE = 1 << 62


@dataclass(frozen=True, eq=False)
class Move:
    """Sparse integer move: ``values[k]`` is added to cell ``indices[k]``."""

    indices: np.ndarray
    values: np.ndarray
    length: int

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        val = np.asarray(self.values, dtype=np.int64).reshape(-1)
        if idx.size != val.size:
            raise DimensionMismatchError(f"{idx.size} indices for {val.size} values")
        keep = val != 0
        idx, val = idx[keep], val[keep]
        order = np.argsort(idx, kind="stable")
        idx, val = idx[order], val[order]
        if idx.size and (idx[0] < 0 or idx[-1] >= self.length):
            raise DimensionMismatchError(f"move touches a cell outside [0, {self.length})")
        if idx.size > 1 and (np.diff(idx) == 0).any():
            raise DimensionMismatchError("move lists a cell twice")
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        object.__setattr__(self, "length", int(self.length))

    @classmethod
    def from_delta(cls, delta: Sequence[int], A: Optional[DesignMatrix] = None) -> "Move":
        """Build from a dense vector; with ``A`` the kernel condition is checked.

        Raises:
            InvalidModelError: if ``A`` is given and A * delta != 0.
        """
        arr = np.asarray(delta)
        if arr.dtype == object:
            if any(abs(int(x)) >= _INT64_SAFE for x in arr):
                raise KernelOverflowError("move entries do not fit in 64 bits")
            arr = arr.astype(np.int64)
        idx = np.flatnonzero(arr)
        move = cls(idx, arr[idx], arr.size)
        if A is not None and not is_move(A, move):
            raise InvalidModelError("vector is not in the integer kernel of the design matrix")
        return move

    @classmethod
    def zero(cls, length: int) -> "Move":
        return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), length)

    @property
    def delta(self) -> np.ndarray:
        out = np.zeros(self.length, dtype=np.int64)
        out[self.indices] = self.values
        return out

    @property
    def positive_part(self) -> Dict[int, int]:
        return {int(i): int(v) for i, v in zip(self.indices, self.values) if v > 0}

    @property
    def negative_part(self) -> Dict[int, int]:
        return {int(i): int(-v) for i, v in zip(self.indices, self.values) if v < 0}

    @property
    def degree(self) -> int:
        """Total increment of the positive part."""
        return int(self.values[self.values > 0].sum())

    def is_zero(self) -> bool:
        return self.indices.size == 0

    def apply(self, cells: np.ndarray) -> np.ndarray:
        out = np.array(cells, dtype=np.int64)
        out[self.indices] += self.values
        return out

    def __neg__(self) -> "Move":
        return Move(self.indices, -self.values, self.length)

    def to_pairs(self) -> List[List[int]]:
        return [[int(i), int(v)] for i, v in zip(self.indices, self.values)]

    def key(self) -> Tuple[int, Tuple[int, ...], Tuple[int, ...]]:
        return self.length, tuple(self.indices.tolist()), tuple(self.values.tolist())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Move):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"Move({self.to_pairs()})"


@dataclass(frozen=True)
class LatticeBasis:
    """Basis of ker_Z(A) as a lattice; ``rank`` is its size (cells minus rank A)."""

    moves: Tuple[Move, ...]
    length: int

    @property
    def rank(self) -> int:
        return len(self.moves)

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense ``rank x length`` matrix of the basis rows."""
        out = np.zeros((self.rank, self.length), dtype=np.int64)
        for k, m in enumerate(self.moves):
            out[k, m.indices] = m.values
        return out


def is_move(A: DesignMatrix, delta: Union[Move, Sequence[int], np.ndarray]) -> bool:
    """Exact test of A * delta == 0.

    Raises:
        DimensionMismatchError: if the vector length differs from the column count.
    """
    if isinstance(delta, Move):
        if delta.length != A.n_cols:
            raise DimensionMismatchError(f"move has length {delta.length}, design matrix {A.n_cols} columns")
        if delta.is_zero():
            return True
        cols = A.entries[:, delta.indices]
        vals = delta.values
    else:
        vals = np.asarray(delta)
        if vals.size != A.n_cols:
            raise DimensionMismatchError(f"vector has length {vals.size}, design matrix {A.n_cols} columns")
        cols = A.entries
    bound = int(np.abs(cols).max(initial=0)) * int(np.abs(vals).astype(object).sum())
    if vals.dtype == object or bound >= _INT64_SAFE:
        product = cols.astype(object) @ vals.astype(object)
    else:
        product = cols @ vals.astype(np.int64)
    return not np.any(product != 0)


def _reduce_rows(M: np.ndarray, targets: np.ndarray, q: np.ndarray, pivot: int, max_bits: int) -> np.ndarray:
    if M.dtype != object:
        bound = int(np.abs(q).max()) * int(np.abs(M[pivot]).max()) + int(np.abs(M[targets]).max())
        if bound >= _INT64_SAFE:
            logger.debug("kernel elimination promoted to wide integers")
            M = M.astype(object)
            q = q.astype(object)
    M[targets] -= np.outer(q, M[pivot])
    if M.dtype == object:
        widest = max(abs(int(x)) for x in M[targets].ravel())
        if widest.bit_length() > max_bits:
            raise KernelOverflowError(f"kernel entries exceed {max_bits} bits")
    return M


def _size_reduce(B: np.ndarray, max_rounds: int = 20) -> np.ndarray:
    """Pairwise reduction b_i <- b_i - round(<b_i,b_j>/<b_j,b_j>) b_j while norms drop."""
    if B.shape[0] < 2:
        return B
    if B.dtype != object:
        widest = int(np.abs(B).max(initial=0))
        if widest * widest * B.shape[1] * 4 >= _INT64_SAFE:
            B = B.astype(object)
    for _ in range(max_rounds):
        changed = False
        for j in range(B.shape[0]):
            bj = B[j]
            nj = bj @ bj
            if nj == 0:
                continue
            dots = B @ bj
            mask = 2 * np.abs(dots) > nj
            mask[j] = False
            if not mask.any():
                continue
            q = (2 * dots[mask] + nj) // (2 * nj)
            B[mask] -= np.outer(q, bj)
            changed = True
        if not changed:
            break
    return B


def integer_kernel(A: DesignMatrix, max_bits: int = DEFAULT_MAX_BITS) -> LatticeBasis:
    """Lattice basis of ker_Z(A) by fraction-free unimodular row elimination.

    The rows of [A^T | I] are combined with integer row operations until the
    A^T block is in echelon form; the identity block of every row whose A^T
    part vanished is a kernel vector, and together they span ker_Z(A).

    Raises:
        DimensionMismatchError: if A is empty.
        KernelOverflowError: if intermediate entries grow past ``max_bits`` bits.
    """
    m, ell = A.shape
    if m == 0 or ell == 0:
        raise DimensionMismatchError("design matrix is empty")
    M = np.hstack([A.entries.T.astype(np.int64), np.eye(ell, dtype=np.int64)])
    pivot = 0
    for col in range(m):
        if pivot >= ell:
            break
        while True:
            column = M[pivot:, col]
            nz = np.flatnonzero(column != 0)
            if nz.size == 0:
                break
            best = pivot + int(nz[np.argmin(np.abs(column[nz]))])
            if best != pivot:
                M[[pivot, best]] = M[[best, pivot]]
            targets = pivot + 1 + np.flatnonzero(M[pivot + 1:, col] != 0)
            if targets.size == 0:
                pivot += 1
                break
            q = M[targets, col] // M[pivot, col]
            M = _reduce_rows(M, targets, q, pivot, max_bits)
    B = _size_reduce(M[pivot:, m:].copy())
    moves = tuple(Move.from_delta(row) for row in B)
    for mv in moves:
        if not is_move(A, mv):
            raise KernelOverflowError("kernel vector failed the exact check")
    logger.info("integer kernel: %d cells, rank(A)=%d, kernel rank %d", ell, pivot, len(moves))
    return LatticeBasis(moves=moves, length=ell)


def independence_basic_moves(d1: int, d2: int) -> List[Move]:
    """All 2x2 swaps of a d1 x d2 table (row-major cells)."""
    if d1 < 2 or d2 < 2:
        raise InvalidModelError(f"basic moves need d1, d2 >= 2, got {d1}x{d2}")
    ell = d1 * d2
    moves = []
    for i1, i2 in itertools.combinations(range(d1), 2):
        for j1, j2 in itertools.combinations(range(d2), 2):
            idx = [i1 * d2 + j1, i2 * d2 + j2, i1 * d2 + j2, i2 * d2 + j1]
            moves.append(Move(idx, [1, 1, -1, -1], ell))
    return moves


def incomplete_moves_3x3() -> List[Move]:
    """Three 3x3 swaps that do not connect every fiber of the independence model."""
    tables = (
        [[1, -1, 0], [-1, 1, 0], [0, 0, 0]],
        [[-1, 0, 1], [0, 0, 0], [1, 0, -1]],
        [[0, 0, 0], [0, 1, -1], [0, -1, 1]],
    )
    return [Move.from_delta(np.array(t).reshape(-1)) for t in tables]


def applicable(move: Move, t: DyadTable) -> bool:
    """Whether ``t + move`` is still a valid table in ``t``'s mode."""
    if move.length != len(t):
        raise DimensionMismatchError(f"move has length {move.length}, table {len(t)} cells")
    return applicable_cells(move, t.cells, t.n_states if t.mode is Mode.SIMPLE else None)


def applicable_cells(move: Move, cells: np.ndarray, simple_states: Optional[int] = None) -> bool:
    """Array form of :func:`applicable`; ``simple_states`` is the dyad width in simple mode."""
    if move.is_zero():
        return True
    after = cells[move.indices] + move.values
    if (after < 0).any():
        return False
    if simple_states:
        if (after > 1).any():
            return False
        dyads = move.indices // simple_states
        if np.bincount(dyads, weights=move.values).any():
            return False
    return True


def prune(moves: Iterable[Move], t: DyadTable) -> List[Move]:
    """Moves applicable at ``t``, in input order."""
    return [m for m in moves if applicable(m, t)]


def moves_to_json(moves: Iterable[Move]) -> List[List[List[int]]]:
    return [m.to_pairs() for m in moves]


# --- curated families -------------------------------------------------------

def _directed_cell(i: int, j: int, n: int, state_ij: int) -> int:
    """Cell of dyad {i, j} in the state seen from the (i, j) orientation.

    ``state_ij`` uses 1 for i->j only and 2 for j->i only.
    """
    d = dyad_index(i, j, n)
    if i < j or state_ij in (0, 3):
        return 4 * d + state_ij
    return 4 * d + (3 - state_ij)


def _one_way_edge_move(n: int, removed: Sequence[Tuple[int, int]], added: Sequence[Tuple[int, int]]) -> Dict[int, int]:
    """Cell increments toggling one-way edges against an empty reverse direction."""
    inc: Dict[int, int] = {}
    for (a, b), sign in [(e, -1) for e in removed] + [(e, 1) for e in added]:
        one_way = _directed_cell(a, b, n, 1)
        empty = _directed_cell(a, b, n, 0)
        inc[one_way] = inc.get(one_way, 0) + sign
        inc[empty] = inc.get(empty, 0) - sign
    return inc


def _dedupe_up_to_sign(candidates: Iterable[Move], A: DesignMatrix) -> List[Move]:
    seen = set()
    out = []
    for m in candidates:
        if m.is_zero() or not is_move(A, m):
            continue
        key, neg = m.key(), (-m).key()
        if key in seen or neg in seen:
            continue
        seen.add(key)
        out.append(m)
    return out


def _directed_swaps(n: int, ell: int) -> Iterable[Move]:
    # a->b, c->d  <->  a->d, c->b on distinct nodes
    for a, b, c, d in itertools.permutations(range(1, n + 1), 4):
        if a < c:
            inc = _one_way_edge_move(n, [(a, b), (c, d)], [(a, d), (c, b)])
            yield Move(list(inc), list(inc.values()), ell)


def _undirected_swaps(n: int, ell: int) -> Iterable[Move]:
    for quad in itertools.combinations(range(1, n + 1), 4):
        a, b, c, d = quad
        matchings = (((a, b), (c, d)), ((a, c), (b, d)), ((a, d), (b, c)))
        for old, new in itertools.combinations(matchings, 2):
            inc: Dict[int, int] = {}
            for (i, j), sign in [(e, -1) for e in old] + [(e, 1) for e in new]:
                dd = dyad_index(i, j, n)
                inc[2 * dd + 1] = inc.get(2 * dd + 1, 0) + sign
                inc[2 * dd] = inc.get(2 * dd, 0) - sign
            yield Move(list(inc), list(inc.values()), ell)


def _triangle_reversals(n: int, ell: int) -> Iterable[Move]:
    # a->b->c->a  <->  a->c->b->a
    for a, b, c in itertools.combinations(range(1, n + 1), 3):
        inc = _one_way_edge_move(n, [(a, b), (b, c), (c, a)], [(a, c), (c, b), (b, a)])
        yield Move(list(inc), list(inc.values()), ell)


def _block_relocations(partition: BlockPartition, ell: int) -> Iterable[Move]:
    n = partition.n
    arcs = [(i, j) for i in range(1, n + 1) for j in range(1, n + 1) if i != j]
    for (a, b), (c, d) in itertools.combinations(arcs, 2):
        if partition.block(a) == partition.block(c) and partition.block(b) == partition.block(d):
            inc = _one_way_edge_move(n, [(a, b)], [(c, d)])
            yield Move(list(inc), list(inc.values()), ell)


def curated_moves(spec: ModelSpec, A: Optional[DesignMatrix] = None) -> List[Move]:
    """Fixed, model-specific move family; every member passes :func:`is_move`.

    No minimality or connectivity claim is made; the lattice basis covers
    irreducibility.
    """
    A = A if A is not None else spec.design()
    ell = A.n_cols
    if spec.family == "independence":
        if spec.d1 < 2 or spec.d2 < 2:
            return []
        return independence_basic_moves(spec.d1, spec.d2)
    if spec.family == "beta":
        candidates: Iterable[Move] = _undirected_swaps(spec.n, ell)
    elif spec.family == "p1":
        candidates = itertools.chain(_directed_swaps(spec.n, ell), _triangle_reversals(spec.n, ell))
    elif spec.variant == "restricted":
        candidates = itertools.chain(
            _directed_swaps(spec.n, ell), _triangle_reversals(spec.n, ell), _block_relocations(spec.partition, ell)
        )
    else:
        candidates = itertools.chain(_triangle_reversals(spec.n, ell), _block_relocations(spec.partition, ell))
    moves = _dedupe_up_to_sign(candidates, A)
    logger.info("curated moves for %s: %d", spec.name, len(moves))
    return moves


# --- on-the-fly proposers for simple graphs ---------------------------------

class MoveProposer(Protocol):
    """Draws a move from the current cells; q(m | x) must equal q(-m | x + m)."""

    def draw(self, cells: np.ndarray, rng: np.random.Generator) -> Move:
        ...


class MoveList:
    """Uniform choice from a fixed list, with a fair random sign."""

    def __init__(self, moves: Sequence[Move]):
        self.moves = list(moves)

    def __len__(self) -> int:
        return len(self.moves)

    def draw(self, cells: np.ndarray, rng: np.random.Generator) -> Move:
        m = self.moves[int(rng.integers(len(self.moves)))]
        return m if rng.random() < 0.5 else -m


class _GraphProposer:
    """Shared edge bookkeeping for proposers that rewire a simple graph."""

    def __init__(self, A: DesignMatrix, n: int, directed: bool):
        self.A = A
        self.n = n
        self.directed = directed
        self.k = 4 if directed else 2
        pairs = np.array(dyad_pairs(n), dtype=np.int64).reshape(-1, 2)
        self._i = pairs[:, 0]
        self._j = pairs[:, 1]
        self._zero = Move.zero(A.n_cols)

    def _states(self, cells: np.ndarray) -> np.ndarray:
        return np.asarray(cells).reshape(-1, self.k).argmax(axis=1)

    def _edges(self, states: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if not self.directed:
            on = states == 1
            return self._i[on], self._j[on]
        fwd = (states == 1) | (states == 3)
        bwd = (states == 2) | (states == 3)
        tails = np.concatenate([self._i[fwd], self._j[bwd]])
        heads = np.concatenate([self._j[fwd], self._i[bwd]])
        return tails, heads

    def _edit(self, states: np.ndarray, removed: Sequence[Tuple[int, int]], added: Sequence[Tuple[int, int]]) -> Move:
        """Cell change of removing/adding edges, or the zero move if invalid."""
        bits: Dict[int, List[int]] = {}
        for a, b in list(removed) + list(added):
            if a == b:
                return self._zero
            d = dyad_index(a, b, self.n)
            if d not in bits:
                s = int(states[d])
                bits[d] = [s & 1, s >> 1] if self.directed else [s, s]
        for edges, want, new in ((removed, 1, 0), (added, 0, 1)):
            for a, b in edges:
                d = dyad_index(a, b, self.n)
                slot = 0 if (a < b or not self.directed) else 1
                if bits[d][slot] != want:
                    return self._zero
                bits[d][slot] = new
                if not self.directed:
                    bits[d][1] = new
        idx: List[int] = []
        val: List[int] = []
        for d, (fwd, bwd) in bits.items():
            old = int(states[d])
            new_state = (fwd | (bwd << 1)) if self.directed else fwd
            if new_state != old:
                idx += [self.k * d + old, self.k * d + new_state]
                val += [-1, 1]
        if not idx:
            return self._zero
        move = Move(idx, val, self.A.n_cols)
        return move if is_move(self.A, move) else self._zero


class EdgeSwapProposer(_GraphProposer):
    """Degree-preserving swap of two present edges.

    Directed: a->b, c->d becomes a->d, c->b. Undirected: {a,b}, {c,d}
    becomes {a,c}, {b,d} or {a,d}, {b,c}. The edge count is constant on
    the fiber, so every swap and its inverse have the same probability.
    """

    def draw(self, cells: np.ndarray, rng: np.random.Generator) -> Move:
        states = self._states(cells)
        tails, heads = self._edges(states)
        if tails.size < 2:
            return self._zero
        k1, k2 = rng.choice(tails.size, size=2, replace=False)
        a, b = int(tails[k1]), int(heads[k1])
        c, d = int(tails[k2]), int(heads[k2])
        if self.directed:
            return self._edit(states, [(a, b), (c, d)], [(a, d), (c, b)])
        if rng.random() < 0.5:
            added = [(a, c), (b, d)]
        else:
            added = [(a, d), (b, c)]
        if len({a, b, c, d}) < 4:
            return self._zero
        return self._edit(states, [(a, b), (c, d)], added)


class BlockRelocationProposer(_GraphProposer):
    """Move one present edge to another ordered pair of the same block pair."""

    def __init__(self, A: DesignMatrix, partition: BlockPartition):
        super().__init__(A, partition.n, directed=True)
        self.partition = partition
        self._arcs: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
        for i in range(1, partition.n + 1):
            for j in range(1, partition.n + 1):
                if i != j:
                    self._arcs.setdefault((partition.block(i), partition.block(j)), []).append((i, j))

    def draw(self, cells: np.ndarray, rng: np.random.Generator) -> Move:
        states = self._states(cells)
        tails, heads = self._edges(states)
        if tails.size == 0:
            return self._zero
        k = int(rng.integers(tails.size))
        a, b = int(tails[k]), int(heads[k])
        arcs = self._arcs[(self.partition.block(a), self.partition.block(b))]
        if len(arcs) < 2:
            return self._zero
        pos = arcs.index((a, b))
        pick = int(rng.integers(len(arcs) - 1))
        c, d = arcs[pick + 1 if pick >= pos else pick]
        return self._edit(states, [(a, b)], [(c, d)])


@lru_cache(maxsize=None)
def _state_grid(n_states: int, width: int) -> np.ndarray:
    """All ``n_states ** width`` state assignments, first position slowest."""
    grid = np.indices((n_states,) * width).reshape(width, -1).T.astype(np.int64)
    grid.setflags(write=False)
    return grid


def _grid_sums(block: np.ndarray, grid: np.ndarray) -> np.ndarray:
    # block: rows x positions x states; result: one statistic row per grid row
    return block[:, np.arange(grid.shape[1]), grid].sum(axis=2).T


def _match_rows(need: np.ndarray, have: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Index pairs (i, j) with need[i] == have[j], ordered by i then j."""
    _, ids = np.unique(np.vstack([need, have]), axis=0, return_inverse=True)
    ids = ids.reshape(-1)
    ids_need, ids_have = ids[: len(need)], ids[len(need):]
    order = np.argsort(ids_have, kind="stable")
    ranked = ids_have[order]
    lo = np.searchsorted(ranked, ids_need, side="left")
    counts = np.searchsorted(ranked, ids_need, side="right") - lo
    left = np.repeat(np.arange(len(need)), counts)
    offsets = np.arange(int(counts.sum())) - np.repeat(np.cumsum(counts) - counts, counts)
    right = order[np.repeat(lo, counts) + offsets]
    return left, right


class SubgraphResampler(_GraphProposer):
    """Redraw every dyad among a few random nodes, keeping the statistics.

    The node set is drawn without looking at the graph. The new
    configuration of its dyads is uniform over all configurations with the
    same statistics other than the current one; both ends of a move see the
    same candidate set, so the proposal is symmetric.

    Three nodes are enough for a directed triangle reversal and four for
    trading a reciprocated dyad against a one-way dyad. A graph with no more
    nodes than the largest size is redrawn whole, so any fiber member is one
    draw away.
    """

    def __init__(self, A: DesignMatrix, n: int, directed: bool, sizes: Sequence[int] = DEFAULT_SUBGRAPH_SIZES):
        super().__init__(A, n, directed)
        self.sizes = tuple(sorted({min(int(s), n) for s in sizes}))
        if not self.sizes or self.sizes[0] < 2:
            raise InvalidModelError(f"subgraph sizes must be at least 2, got {tuple(sizes)}")
        self._cache: Dict[Tuple[bytes, bytes], np.ndarray] = {}

    def candidates(self, dyads: np.ndarray, current: np.ndarray) -> np.ndarray:
        """Configurations of ``dyads`` (one state per dyad) with the statistics of ``current``.

        Rows come in a fixed order and include ``current`` itself.
        """
        k = self.k
        width = dyads.size
        cols = (k * dyads[:, None] + np.arange(k)).reshape(-1)
        block = self.A.entries[:, cols].reshape(self.A.n_rows, width, k).astype(np.int64)
        # rows that give every state of every dyad the same weight cannot tell configurations apart
        block = block[(block != block[:, :, :1]).any(axis=(1, 2))]
        if block.shape[0] == 0:
            return _state_grid(k, width)
        target = block[:, np.arange(width), current].sum(axis=1)
        half = width // 2
        if half == 0:
            grid = _state_grid(k, width)
            return grid[(_grid_sums(block, grid) == target).all(axis=1)]
        left, right = _state_grid(k, half), _state_grid(k, width - half)
        need = target - _grid_sums(block[:, :half], left)
        have = _grid_sums(block[:, half:], right)
        li, ri = _match_rows(need, have)
        return np.hstack([left[li], right[ri]])

    def draw(self, cells: np.ndarray, rng: np.random.Generator) -> Move:
        size = self.sizes[int(rng.integers(len(self.sizes)))]
        nodes = np.sort(rng.choice(self.n, size=size, replace=False)) + 1
        dyads = np.array([dyad_index(int(a), int(b), self.n) for a, b in itertools.combinations(nodes, 2)],
                         dtype=np.int64)
        current = self._states(cells)[dyads].astype(np.int64)
        key = (dyads.tobytes(), current.tobytes())
        configs = self._cache.get(key)
        if configs is None:
            if len(self._cache) >= CANDIDATE_CACHE_LIMIT:
                self._cache.clear()
            configs = self._cache[key] = self.candidates(dyads, current)
        if len(configs) < 2:
            return self._zero
        here = int(np.flatnonzero((configs == current).all(axis=1))[0])
        pick = int(rng.integers(len(configs) - 1))
        new = configs[pick + 1 if pick >= here else pick]
        changed = np.flatnonzero(new != current)
        base = self.k * dyads[changed]
        idx = np.concatenate([base + current[changed], base + new[changed]])
        val = np.concatenate([np.full(changed.size, -1), np.full(changed.size, 1)])
        return Move(idx, val, self.A.n_cols)


class MixedProposer:
    """Picks one of several symmetric proposers uniformly."""

    def __init__(self, proposers: Sequence[MoveProposer]):
        self.proposers = list(proposers)

    def draw(self, cells: np.ndarray, rng: np.random.Generator) -> Move:
        return self.proposers[int(rng.integers(len(self.proposers)))].draw(cells, rng)


def proposer_for(spec: ModelSpec, A: DesignMatrix) -> Optional[MoveProposer]:
    """On-the-fly proposer for simple-graph fibers; None outside simple mode.

    Edge swaps and subgraph redraws for every graph family, plus block
    relocations for blockmodels.
    """
    if spec.mode is not Mode.SIMPLE or spec.family == "independence":
        return None
    directed = spec.family != "beta"
    proposers: List[MoveProposer] = [
        EdgeSwapProposer(A, spec.n, directed=directed),
        SubgraphResampler(A, spec.n, directed=directed),
    ]
    if spec.family == "sbm":
        proposers.append(BlockRelocationProposer(A, spec.partition))
    return MixedProposer(proposers)
