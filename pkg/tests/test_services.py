import json
import os

import numpy as np
import pandas as pd
import pytest

from fibergof.core.lattice import Move
from fibergof.core.tables import DyadTable, GraphData, cell_labels, decode_table, encode_graph
from fibergof.core.zoo import ModelSpec
from fibergof.errors import InputFileError, NotConvergedError, UsageError
from fibergof.services import filenames as fn
from fibergof.services import storage as st
from fibergof.services import utils
from fibergof.services.ipf import FitResult, ipf_fit
from fibergof.services.simulate import simulate


def test_filenames_roundtrip():
    stem = fn.format_run_name("test", "p1-constant", 7, stamp="20201011T142208")
    assert stem == "20201011T142208_test_p1-constant_s7"
    assert fn.parse_seed(stem) == 7
    assert fn.parse_seed(stem + ".json") == 7
    assert fn.parse_model(stem) == "p1-constant"
    with pytest.raises(ValueError):
        fn.parse_seed("report.json")
    with pytest.raises(ValueError):
        fn.parse_model("report_s3")


def test_read_edge_list(tmp_path):
    p = tmp_path / "g.edges"
    p.write_text("# comment\nalice bob\nbob carol 2\n\ncarol alice\n")
    g = st.read_edge_list(str(p), directed=True, extra_labels=("dave", "alice"))
    assert g.labels == ("alice", "bob", "carol", "dave")
    assert g.n == 4
    assert g.edge_dict() == {(1, 2): 1, (2, 3): 2, (3, 1): 1}


def test_read_edge_list_errors(tmp_path):
    with pytest.raises(InputFileError, match="Failed to read edge list"):
        st.read_edge_list(str(tmp_path / "missing.edges"), directed=True)
    loop = tmp_path / "loop.edges"
    loop.write_text("a a\nb c\n")
    with pytest.raises(InputFileError, match="self-loop"):
        st.read_edge_list(str(loop), directed=True)
    lonely = tmp_path / "lonely.edges"
    lonely.write_text("# nothing here\n")
    with pytest.raises(InputFileError, match="at least 2 nodes"):
        st.read_edge_list(str(lonely), directed=False)
    wide = tmp_path / "wide.edges"
    wide.write_text("a b 1 x\n")
    with pytest.raises(InputFileError, match="Failed to read edge list"):
        st.read_edge_list(str(wide), directed=False)


def test_read_blocks(tmp_path):
    p = tmp_path / "b.blocks"
    p.write_text("# node block\na x\nb y\nc x\n")
    assert st.read_blocks(str(p)) == {"a": "x", "b": "y", "c": "x"}
    p.write_text("a x\na y\n")
    with pytest.raises(InputFileError, match="two blocks"):
        st.read_blocks(str(p))


def test_read_count_table(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("1,0,2\n3,4,5\n")
    t = st.read_count_table(str(p))
    assert t.shape == (2, 3)
    assert t.cells.tolist() == [1, 0, 2, 3, 4, 5]
    p.write_text("1,-1\n0,2\n")
    with pytest.raises(InputFileError):
        st.read_count_table(str(p))


def test_write_json_converts_special_floats(tmp_path):
    path = st.write_json({"p": np.float64(0.5), "stat": float("inf"), "n": np.int64(3)}, str(tmp_path / "r.json"))
    data = json.loads(open(path).read())
    assert data == {"p": 0.5, "stat": None, "n": 3}
    assert [f for f in os.listdir(tmp_path) if f.startswith(".tmp-")] == []


def test_moves_json_roundtrip(tmp_path):
    moves = [Move([0, 3, 1, 2], [1, 1, -1, -1], 4)]
    path = st.write_moves_json(moves, str(tmp_path / "m.json"))
    assert json.loads(open(path).read()) == [[[0, 1], [1, -1], [2, -1], [3, 1]]]
    assert st.read_moves_json(path, 4) == moves
    with pytest.raises(InputFileError):
        st.read_moves_json(path, 2)


def test_stream_and_fitted_frames(tmp_path):
    df = st.stream_frame(np.array([1.0, 2.0, 3.0, 4.0, 5.0]), chain_lengths=[2, 3])
    assert df.columns.tolist() == ["chain", "sample", "stat"]
    assert df["chain"].tolist() == [0, 0, 1, 1, 1]
    assert df["sample"].tolist() == [1, 2, 1, 2, 3]
    path = st.write_stat_stream(np.array([0.5, 0.25]), str(tmp_path / "s.csv"))
    assert pd.read_csv(path)["stat"].tolist() == [0.5, 0.25]

    fitted = st.fitted_frame(("a", "b"), np.array([1, 2]), np.array([1.5, 1.5]))
    assert fitted.columns.tolist() == ["cell", "label", "observed", "fitted"]


def test_write_tables(tmp_path):
    tables = [DyadTable.from_counts([1, 2]), DyadTable.from_counts([0, 3])]
    path = st.write_tables(tables, ("x", "y"), str(tmp_path / "t.csv"))
    df = pd.read_csv(path)
    assert df.columns.tolist() == ["replicate", "x", "y"]
    assert df["y"].tolist() == [2, 3]


def test_write_excel_report(tmp_path):
    report = {"p_value": 0.4, "observed_stat": float("nan"), "chain_diagnostics": {"acceptance_rate": 0.3}}
    stream = st.stream_frame(np.array([1.0, 2.0]))
    fitted = st.fitted_frame(("a", "b"), np.array([1, 1]), np.array([1.0, 1.0]))
    xlsx = st.write_excel_report(report, stream, fitted, str(tmp_path / "r.xlsx"))
    assert os.path.exists(xlsx)


def test_ensure_out_dir(tmp_path, monkeypatch):
    target = tmp_path / "runs"
    monkeypatch.setenv("FIBERGOF_OUT_DIR", str(target))
    assert utils.ensure_out_dir() == str(target)
    assert target.is_dir()


def test_resolve_seed(monkeypatch):
    monkeypatch.delenv("FIBERGOF_SEED", raising=False)
    assert utils.resolve_seed(5) == (5, "flag")
    seed, source = utils.resolve_seed()
    assert source == "generated"
    assert 0 <= seed < 2**64
    monkeypatch.setenv("FIBERGOF_SEED", "42")
    assert utils.resolve_seed() == (42, "env")
    monkeypatch.setenv("FIBERGOF_SEED", "forty-two")
    with pytest.raises(UsageError):
        utils.resolve_seed()


def test_chain_params_and_margins():
    assert utils.is_valid_chain_params(100, 10, 10)
    assert not utils.is_valid_chain_params(10, 10, 1)
    assert not utils.is_valid_chain_params(15, 10, 10)
    assert not utils.is_valid_chain_params(100, -1, 1)
    assert utils.parse_margins("1,1,1/1,2") == ([1, 1, 1], [1, 2])
    with pytest.raises(ValueError):
        utils.parse_margins("1,1,1")
    with pytest.raises(ValueError):
        utils.parse_margins("1,a/1,1")


def test_simulate_independence_keeps_total_and_shape():
    spec = ModelSpec.from_name("independence", d1=2, d2=3)
    t = DyadTable.from_counts([[2, 1, 0], [1, 3, 3]])
    fit = ipf_fit(spec.design(), t)
    reps = simulate(spec, fit, count=5, seed=1)
    assert len(reps) == 5
    for r in reps:
        assert r.shape == (2, 3)
        assert r.cells.sum() == 10
    again = simulate(spec, fit, count=5, seed=1)
    assert [r.key() for r in reps] == [r.key() for r in again]


def test_simulate_graphs_are_valid_tables():
    # 6-cycle with offsets 1, 2 and 5: every dyad fits to (0.2, 0.2, 0.2, 0.4)
    edges = [(i, (i - 1 + s) % 6 + 1) for i in range(1, 7) for s in (1, 2, 5)]
    spec = ModelSpec.from_name("p1-constant", n=6)
    fit = ipf_fit(spec.design(), encode_graph(GraphData.from_edges(6, edges)))
    assert fit.converged
    reps = simulate(spec, fit, count=4, seed=3)
    for r in reps:
        assert (r.dyad_sums() == 1).all()
        assert len(r) == len(cell_labels(6, True))
    with pytest.raises(ValueError, match="count"):
        simulate(spec, fit, count=0, seed=0)


def test_simulate_refuses_unconverged_fit():
    edges = [(i, (i - 1 + s) % 6 + 1) for i in range(1, 7) for s in (1, 2, 5)]
    spec = ModelSpec.from_name("p1-constant", n=6)
    fit = ipf_fit(spec.design(), encode_graph(GraphData.from_edges(6, edges)), tol=1e-12, max_iter=1)
    assert not fit.converged
    with pytest.raises(NotConvergedError):
        simulate(spec, fit, count=2, seed=0)


def _fixed_fit(spec, per_dyad):
    observed = encode_graph(GraphData.from_edges(spec.n, [(1, 2)])).cells
    means = np.tile(per_dyad, len(observed) // 4)
    return FitResult(
        fitted_means=means,
        converged=True,
        iterations=1,
        max_margin_gap=0.0,
        zero_flag=[],
        observed=observed,
    )


def test_simulate_all_mass_on_empty_state_gives_empty_graphs():
    spec = ModelSpec.from_name("p1-zero", n=5)
    reps = simulate(spec, _fixed_fit(spec, [1.0, 0.0, 0.0, 0.0]), count=10, seed=2)
    for r in reps:
        assert r.cells.tolist() == np.tile([1, 0, 0, 0], 10).tolist()
        assert decode_table(r).edges == ()


def test_simulate_uniform_dyads_hit_each_state_a_quarter_of_the_time():
    spec = ModelSpec.from_name("p1-zero", n=10)
    reps = simulate(spec, _fixed_fit(spec, [0.25, 0.25, 0.25, 0.25]), count=200, seed=5)
    freqs = np.stack([r.by_dyad() for r in reps]).reshape(-1, 4).mean(axis=0)
    assert np.allclose(freqs, 0.25, atol=0.02)
