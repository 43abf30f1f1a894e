import json
import math
import os
import tempfile
from contextlib import contextmanager
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from fibergof.core.lattice import Move, moves_to_json
from fibergof.core.tables import DyadTable, GraphData, n_dyads
from fibergof.errors import FiberGofError, InputFileError

EDGE_COLUMNS = ["tail", "head", "count"]


@contextmanager
def atomic_path(path: str) -> Iterator[str]:
    """Yield a temporary path next to ``path`` and move it into place on success."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=os.path.splitext(path)[1], dir=directory)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def _read_table(file_path: str, what: str, **kwargs) -> pd.DataFrame:
    try:
        return pd.read_csv(file_path, header=None, comment="#", skip_blank_lines=True, **kwargs)
    except pd.errors.EmptyDataError:
        return pd.DataFrame()
    except (OSError, IOError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise InputFileError(f"Failed to read {what}: {e}")


def read_edge_list(
    file_path: str,
    directed: bool,
    extra_labels: Sequence[str] = (),
    trials: Optional[int] = None,
) -> GraphData:
    """Read a whitespace-separated edge list.

    Each line is ``a b`` or ``a b k`` with k the multiplicity; lines starting
    with '#' are ignored. Labels are numbered 1..n by first appearance, then
    ``extra_labels`` not seen in any edge (isolated nodes) follow.

    Args:
        file_path: Path to the edge list
        directed: Read ``a b`` as a->b instead of {a, b}
        extra_labels: Node labels to include even without edges
        trials: Observations per dyad for multigraph tables (uniform)

    Returns:
        GraphData with labels in first-appearance order

    Raises:
        InputFileError: If the file is missing or malformed
    """
    df = _read_table(file_path, "edge list", sep=r"\s+", dtype=str, engine="python", names=EDGE_COLUMNS)
    if not df.empty and df["head"].isna().any():
        raise InputFileError("Failed to read edge list: expected 2 or 3 columns per line")

    index: Dict[str, int] = {}
    edges: List[Tuple[int, int, int]] = []
    for row in df.itertuples(index=False):
        a, b = str(row[0]), str(row[1])
        count = 1
        if len(row) > 2 and isinstance(row[2], str):
            try:
                count = int(row[2])
            except ValueError:
                raise InputFileError(f"Failed to read edge list: bad multiplicity {row[2]!r}")
        for lab in (a, b):
            index.setdefault(lab, len(index) + 1)
        edges.append((index[a], index[b], count))
    for lab in extra_labels:
        index.setdefault(str(lab), len(index) + 1)
    if len(index) < 2:
        raise InputFileError(f"Failed to read edge list: need at least 2 nodes, got {len(index)}")
    labels = list(index)
    n = len(labels)
    try:
        return GraphData.from_edges(
            n,
            edges,
            directed=directed,
            labels=labels,
            trials=None if trials is None else [trials] * n_dyads(n),
        )
    except FiberGofError as e:
        raise InputFileError(f"Failed to read edge list: {e}")


def read_blocks(file_path: str) -> Dict[str, str]:
    """Read ``label block_id`` lines into an ordered mapping."""
    df = _read_table(file_path, "block file", sep=r"\s+", dtype=str, engine="python")
    if df.empty or df.shape[1] != 2:
        raise InputFileError(f"Failed to read block file: expected 2 columns in {file_path}")
    blocks: Dict[str, str] = {}
    for label, block in df.itertuples(index=False):
        if label in blocks and blocks[label] != block:
            raise InputFileError(f"Failed to read block file: node {label!r} listed in two blocks")
        blocks[str(label)] = str(block)
    return blocks


def read_count_table(file_path: str) -> DyadTable:
    """Read a comma-separated contingency table of nonnegative integers."""
    df = _read_table(file_path, "count table")
    if df.empty:
        raise InputFileError(f"Failed to read count table: {file_path} is empty")
    try:
        counts = df.to_numpy(dtype=np.int64)
        return DyadTable.from_counts(counts)
    except (ValueError, FiberGofError) as e:
        raise InputFileError(f"Failed to read count table: {e}")


def _json_ready(value):
    if isinstance(value, float) and (math.isnan(value) or math.isinf(value)):
        return None
    if isinstance(value, dict):
        return {str(k): _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return _json_ready(float(value))
    return value


def write_json(data: Mapping, file_path: str) -> str:
    """Write a mapping as indented JSON (NaN/inf become null), atomically."""
    try:
        with atomic_path(file_path) as tmp:
            with open(tmp, "w") as f:
                json.dump(_json_ready(dict(data)), f, indent=2)
                f.write("\n")
        return file_path
    except (OSError, IOError, TypeError) as e:
        raise RuntimeError(f"Failed to write JSON: {e}")


def write_moves_json(moves: Iterable[Move], file_path: str) -> str:
    """Moves as JSON arrays of ``[cell_index, increment]`` pairs."""
    try:
        with atomic_path(file_path) as tmp:
            with open(tmp, "w") as f:
                json.dump(moves_to_json(moves), f)
                f.write("\n")
        return file_path
    except (OSError, IOError) as e:
        raise RuntimeError(f"Failed to write moves: {e}")


def read_moves_json(file_path: str, length: int) -> List[Move]:
    try:
        with open(file_path) as f:
            raw = json.load(f)
        return [Move([p[0] for p in pairs], [p[1] for p in pairs], length) for pairs in raw]
    except (OSError, IOError, ValueError, TypeError, IndexError, FiberGofError) as e:
        raise InputFileError(f"Failed to read moves: {e}")


def _write_csv(df: pd.DataFrame, file_path: str, what: str) -> str:
    try:
        with atomic_path(file_path) as tmp:
            df.to_csv(tmp, index=False)
        return file_path
    except (OSError, IOError) as e:
        raise RuntimeError(f"Failed to write {what}: {e}")


def stream_frame(stream: np.ndarray, chain_lengths: Sequence[int] = ()) -> pd.DataFrame:
    """Stat stream as columns ['chain', 'sample', 'stat']."""
    lengths = list(chain_lengths) or [len(stream)]
    chain = np.repeat(np.arange(len(lengths)), lengths)
    sample = np.concatenate([np.arange(1, k + 1) for k in lengths]) if lengths else np.empty(0, dtype=int)
    return pd.DataFrame({"chain": chain, "sample": sample, "stat": np.asarray(stream, dtype=float)})


def write_stat_stream(stream: np.ndarray, file_path: str, chain_lengths: Sequence[int] = ()) -> str:
    return _write_csv(stream_frame(stream, chain_lengths), file_path, "stat stream")


def fitted_frame(col_labels: Sequence[str], observed: np.ndarray, fitted: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame({
        "cell": np.arange(len(col_labels)),
        "label": list(col_labels),
        "observed": np.asarray(observed, dtype=np.int64),
        "fitted": np.asarray(fitted, dtype=float),
    })


def write_fitted_means(col_labels: Sequence[str], observed: np.ndarray, fitted: np.ndarray, file_path: str) -> str:
    return _write_csv(fitted_frame(col_labels, observed, fitted), file_path, "fitted means")


def write_tables(tables: Sequence[DyadTable], col_labels: Sequence[str], file_path: str) -> str:
    """One row per table, one column per cell."""
    data = np.stack([t.cells for t in tables]) if tables else np.empty((0, len(col_labels)), dtype=np.int64)
    df = pd.DataFrame(data, columns=list(col_labels))
    df.insert(0, "replicate", np.arange(1, len(tables) + 1))
    return _write_csv(df, file_path, "tables")


def write_excel_report(report: Mapping, stream: pd.DataFrame, fitted: pd.DataFrame, file_path: str) -> str:
    """Write summary, stat stream and fitted means sheets to an Excel workbook.

    Args:
        report: Report mapping; scalar fields go to the summary sheet
        stream: Frame from :func:`stream_frame`
        fitted: Frame from :func:`fitted_frame`
        file_path: Output .xlsx path

    Returns:
        Path to created Excel file

    Raises:
        RuntimeError: If Excel file cannot be created
    """
    rows = [(k, v) for k, v in _json_ready(dict(report)).items() if not isinstance(v, (dict, list))]
    for k, v in _json_ready(dict(report.get("chain_diagnostics", {}))).items():
        if not isinstance(v, (dict, list)):
            rows.append((f"chain.{k}", v))
    summary = pd.DataFrame(rows, columns=["field", "value"])
    try:
        with atomic_path(file_path) as tmp:
            writer = pd.ExcelWriter(tmp, engine="xlsxwriter")
            summary.to_excel(writer, sheet_name="Summary", index=False)
            stream.to_excel(writer, sheet_name="Stream", index=False)
            fitted.to_excel(writer, sheet_name="Fit", index=False)
            worksheet = writer.sheets["Summary"]
            worksheet.set_column(0, 0, 28)
            worksheet.set_column(1, 1, 40)
            writer.close()
        return file_path
    except Exception as e:
        raise RuntimeError(f"Failed to create Excel file: {e}")
