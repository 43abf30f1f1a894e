import numpy as np
import pytest

from fibergof.core.tables import DyadTable, GraphData, Mode, encode_graph
from fibergof.core.zoo import BlockPartition, ModelSpec, beta_design, independence_design, p1_design
from fibergof.errors import DimensionMismatchError
from fibergof.services.ipf import LIKELY, SUSPECT, ipf_fit, mle_existence_heuristic
from fibergof.services.oracle import enumerate_fiber


def test_independence_2x2_fit():
    fit = ipf_fit(independence_design(2, 2), DyadTable.from_counts([[1, 2], [3, 4]]))
    assert fit.converged
    assert np.allclose(fit.fitted_means, [1.2, 1.8, 2.8, 4.2])
    assert fit.max_margin_gap <= 1e-10


def test_product_table_converges_at_once():
    fit = ipf_fit(independence_design(2, 2), DyadTable.from_counts([[1, 2], [2, 4]]))
    assert fit.converged
    assert fit.iterations <= 2
    assert np.allclose(fit.fitted_means, [1, 2, 2, 4])


def test_zero_row_margin_forces_zero_means():
    fit = ipf_fit(independence_design(2, 2), DyadTable.from_counts([[0, 0], [1, 2]]))
    assert fit.converged
    assert fit.forced_zero == [0, 1]
    assert fit.fitted_means[:2].tolist() == [0.0, 0.0]
    assert np.allclose(fit.fitted_means[2:], [1, 2])
    report = mle_existence_heuristic(fit)
    assert report.status == LIKELY
    assert not report.suspect


def test_fit_preserves_total_and_trace_ends_at_gap():
    rng = np.random.default_rng(8)
    u = rng.integers(1, 20, size=(3, 4))
    fit = ipf_fit(independence_design(3, 4), DyadTable.from_counts(u))
    assert fit.converged
    assert fit.fitted_means.sum() == pytest.approx(u.sum())
    assert fit.gap_trace[-1] == fit.max_margin_gap
    assert len(fit.gap_trace) == fit.iterations


def test_validation_errors():
    A = independence_design(2, 2)
    u = DyadTable.from_counts([[1, 1], [1, 1]])
    with pytest.raises(ValueError, match="tol"):
        ipf_fit(A, u, tol=0)
    with pytest.raises(ValueError, match="max_iter"):
        ipf_fit(A, u, max_iter=0)
    with pytest.raises(DimensionMismatchError):
        ipf_fit(A, DyadTable.from_counts([1, 2, 3]))


def _circulant(n, offsets, directed=True, perm=None):
    label = (lambda i: i) if perm is None else (lambda i: int(perm[i - 1]))
    edges = {(label(i), label((i - 1 + s) % n + 1)) for i in range(1, n + 1) for s in offsets}
    if not directed:
        edges = {tuple(sorted(e)) for e in edges}
    return GraphData.from_edges(n, sorted(edges), directed=directed)


def test_nonconvergence_is_reported():
    g = _circulant(6, (1, 2, 5))
    fit = ipf_fit(p1_design(6, "constant"), encode_graph(g), tol=1e-12, max_iter=1)
    assert fit.iterations == 1
    assert not fit.converged
    assert fit.max_margin_gap > 1e-12
    report = mle_existence_heuristic(fit)
    assert report.status == SUSPECT
    assert "not converged" in report.reasons[0]


def test_circulant_p1_constant_fit_is_homogeneous():
    fit = ipf_fit(p1_design(6, "constant"), encode_graph(_circulant(6, (1, 2, 5))))
    assert fit.converged
    expected = np.tile([0.2, 0.2, 0.2, 0.4], 15)
    assert np.allclose(fit.fitted_means, expected, atol=1e-8)


def test_star_under_beta_is_suspect():
    # the hub has degree n - 1, which puts the degree sequence on the boundary
    star = GraphData.from_edges(4, [(1, 2), (1, 3), (1, 4)], directed=False)
    fit = ipf_fit(beta_design(4), encode_graph(star), max_iter=2000)
    assert mle_existence_heuristic(fit).suspect


def test_normalizer_rows_fit_to_one():
    g = _circulant(6, (1, 2), directed=False)
    fit = ipf_fit(beta_design(6), encode_graph(g))
    assert fit.converged
    by_dyad = fit.fitted_means.reshape(-1, 2)
    assert np.allclose(by_dyad.sum(axis=1), 1.0)
    assert np.allclose(by_dyad[:, 1], 0.8, atol=1e-8)


def test_gap_trace_never_increases():
    # multigraph with four trials per dyad and edge counts 3, 1, 2
    u = DyadTable([1, 3, 3, 1, 2, 2], mode=Mode.MULTIGRAPH, n=3, directed=False)
    fit = ipf_fit(beta_design(3), u)
    assert fit.converged
    trace = np.array(fit.gap_trace)
    assert trace[0] == pytest.approx(5 / 6)
    assert len(trace) > 5
    assert (np.diff(trace) <= 1e-12).all()


def test_fitted_means_are_shared_by_the_whole_fiber():
    A = beta_design(6)
    u = encode_graph(_circulant(6, (1,), directed=False))
    base = ipf_fit(A, u)
    assert base.converged
    fiber = enumerate_fiber(A, u)
    assert fiber.size == 70
    for v in fiber:
        fit = ipf_fit(A, v)
        assert fit.converged
        assert np.allclose(fit.fitted_means, base.fitted_means)
        assert np.allclose(A.entries @ base.fitted_means, A.entries @ v.cells, atol=1e-10)


def _random_fit_case(rng, k):
    if k < 40:
        d1, d2 = (int(x) for x in rng.integers(2, 6, size=2))
        return independence_design(d1, d2), DyadTable.from_counts(rng.integers(1, 20, size=(d1, d2)))
    n = 6
    perm = rng.permutation(n) + 1
    name = ["p1-zero", "p1-constant", "p1-differential", "beta", "sbm-restricted", "sbm-full"][k % 6]
    if name == "beta":
        offsets = (1,) if rng.random() < 0.5 else (1, 2)
        return beta_design(n), encode_graph(_circulant(n, offsets, directed=False, perm=perm))
    if name.startswith("sbm"):
        part = BlockPartition((1, 1, 1, 2, 2, 2))
        within = np.concatenate([rng.permutation(3) + 1, rng.permutation(3) + 4])
        arcs = [(1, 2), (2, 1), (2, 3), (4, 5), (5, 4), (5, 6), (1, 4), (4, 1), (2, 5), (6, 3)]
        g = GraphData.from_edges(n, [(int(within[a - 1]), int(within[b - 1])) for a, b in arcs])
        return ModelSpec.from_name(name, partition=part).design(), encode_graph(g)
    offsets = (1, 2, 5) if name == "p1-constant" else (1, 2)
    return ModelSpec.from_name(name, n=n).design(), encode_graph(_circulant(n, offsets, perm=perm))


def test_random_fits_match_observed_margins():
    rng = np.random.default_rng(31)
    for k in range(100):
        A, u = _random_fit_case(rng, k)
        fit = ipf_fit(A, u)
        assert fit.converged, k
        assert (fit.fitted_means >= 0).all()
        assert np.max(np.abs(A.entries @ fit.fitted_means - A.entries @ u.cells)) <= 1e-10
        if not u.is_plain:
            assert np.allclose(fit.fitted_means.reshape(-1, u.n_states).sum(axis=1), 1.0)
