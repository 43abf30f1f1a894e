import numpy as np
import pytest

from fibergof.core.lattice import Move, independence_basic_moves, integer_kernel, proposer_for
from fibergof.core.tables import DyadTable, GraphData, encode_graph
from fibergof.core.zoo import DesignMatrix, ModelSpec, independence_design, p1_design
from fibergof.services.oracle import enumerate_fiber
from fibergof.services.sampler import (
    ChainConfig,
    chain_rng,
    estimate_pvalue,
    mh_step,
    pooled_pvalue,
    propose,
    run_chain,
    run_chains,
)


def _ones_row():
    return DesignMatrix(np.array([[1, 1]]), ("total",), ("a", "b"))


def test_chain_config_validation():
    with pytest.raises(ValueError, match="exceed burn_in"):
        ChainConfig(steps=10, burn_in=10)
    with pytest.raises(ValueError, match="proposal_mix"):
        ChainConfig(proposal_mix=1.5)
    with pytest.raises(ValueError, match="geometric_p"):
        ChainConfig(geometric_p=1.0)
    with pytest.raises(ValueError, match="target"):
        ChainConfig(target="metropolis")
    with pytest.raises(ValueError, match="one sample"):
        ChainConfig(steps=15, burn_in=10, thin=10)
    cfg = ChainConfig(seed=3)
    assert cfg.to_dict()["seed"] == 3


def test_propose_single_curated_move_has_both_signs():
    m = Move([0, 1], [1, -1], 2)
    basis = integer_kernel(_ones_row())
    cfg = ChainConfig(proposal_mix=1.0)
    rng = np.random.default_rng(1)
    draws = [propose(np.array([1, 1]), [m], basis, cfg, rng) for _ in range(4000)]
    plus = sum(d == m for d in draws)
    assert all(d == m or d == -m for d in draws)
    assert abs(plus / 4000 - 0.5) < 3 * np.sqrt(0.25 / 4000)


def test_propose_combination_is_symmetric():
    basis = integer_kernel(_ones_row())
    cfg = ChainConfig(proposal_mix=0.0)
    rng = np.random.default_rng(2)
    b = basis.moves[0].delta
    coeffs = []
    for _ in range(4000):
        d = propose(np.array([3, 3]), [], basis, cfg, rng).delta
        c = d[0] // b[0]
        assert c != 0
        assert (d == c * b).all()
        coeffs.append(c)
    coeffs = np.array(coeffs)
    pos, neg = (coeffs > 0).sum(), (coeffs < 0).sum()
    assert abs(pos - neg) < 3 * np.sqrt(4000)
    assert (coeffs == 1).sum() > (coeffs == 2).sum() > 0


def test_combination_reaches_whole_small_fiber():
    # from (2,0) both (1,1) and (0,2) are one proposal away
    basis = integer_kernel(_ones_row())
    cfg = ChainConfig(proposal_mix=0.0)
    rng = np.random.default_rng(3)
    reached = set()
    for _ in range(500):
        d = propose(np.array([2, 0]), [], basis, cfg, rng)
        after = d.apply(np.array([2, 0]))
        if after.min() >= 0:
            reached.add(tuple(after.tolist()))
    assert reached == {(1, 1), (0, 2)}


def test_mh_step_uniform_and_rejection():
    t = DyadTable.from_counts([[1, 0], [0, 1]])
    rng = np.random.default_rng(0)
    swap = Move([0, 3, 1, 2], [-1, -1, 1, 1], 4)
    assert mh_step(t, swap, "uniform", rng).cells.tolist() == [0, 1, 1, 0]
    assert mh_step(t, -swap, "uniform", rng) is t


def test_singleton_fiber_p_value_is_one():
    A = independence_design(2, 2)
    t0 = DyadTable.from_counts([[2, 0], [0, 0]])
    basis = integer_kernel(A)
    cfg = ChainConfig(steps=2000, burn_in=100, thin=1, seed=5)
    res = run_chain(t0, A, independence_basic_moves(2, 2), basis, lambda c: float(c[0]), cfg)
    assert res.p_value == 1.0
    assert res.acceptance_rate == 0.0
    assert res.final_state == t0
    assert res.samples_kept == 1900


def test_constant_statistic_p_value_is_one():
    A = independence_design(2, 2)
    t0 = DyadTable.from_counts([[1, 1], [1, 1]])
    res = run_chain(t0, A, independence_basic_moves(2, 2), integer_kernel(A), lambda c: 0.0,
                    ChainConfig(steps=1000, burn_in=0, thin=1))
    assert res.p_value == 1.0


def test_estimate_pvalue_formula():
    p, se = estimate_pvalue(10.0, np.zeros(99))
    assert p == pytest.approx(1 / 100)
    assert se == 0.0
    p, _ = estimate_pvalue(-1.0, np.arange(20, dtype=float))
    assert p == 1.0
    with pytest.raises(ValueError, match="empty"):
        estimate_pvalue(1.0, [])


def test_estimate_pvalue_ties_count_as_extreme():
    p, _ = estimate_pvalue(0.3, [0.1 + 0.2, 0.0, 0.0, 5.0])
    assert p == pytest.approx(3 / 5)


def test_estimate_pvalue_infinite_observed():
    p, _ = estimate_pvalue(float("inf"), [1.0, 2.0, float("inf")])
    assert p == pytest.approx(2 / 4)


def test_pooled_pvalue_matches_single_stream():
    a = np.array([0.0, 2.0, 3.0])
    b = np.array([1.0, 5.0])
    p, _ = pooled_pvalue(2.0, [a, b])
    assert p == pytest.approx((1 + 3) / (1 + 5))


def test_chain_rng_streams_differ():
    assert chain_rng(7, 0).integers(1 << 30) != chain_rng(7, 1).integers(1 << 30)
    assert chain_rng(7, 0).integers(1 << 30) == chain_rng(7, 0).integers(1 << 30)


def test_run_chain_is_reproducible_and_stays_in_fiber():
    g = GraphData.from_edges(5, [(1, 2), (2, 3), (3, 1), (4, 5), (5, 1), (2, 4)])
    t0 = encode_graph(g)
    A = p1_design(5, "zero")
    basis = integer_kernel(A)
    cfg = ChainConfig(steps=3000, burn_in=300, thin=3, seed=11, verify_every=1, record_states=True)
    r1 = run_chain(t0, A, [], basis, lambda c: float(c[1]), cfg)
    r2 = run_chain(t0, A, [], basis, lambda c: float(c[1]), cfg)
    assert np.array_equal(r1.stat_stream, r2.stat_stream)
    assert r1.final_state == r2.final_state
    assert (A.entries @ r1.final_state.cells == A.entries @ t0.cells).all()
    assert (r1.final_state.dyad_sums() == 1).all()
    for state in r1.state_counts:
        assert (A.entries @ np.array(state) == A.entries @ t0.cells).all()


def test_run_chains_pools_in_order():
    A = independence_design(2, 3)
    t0 = DyadTable.from_counts([[1, 2, 0], [0, 1, 2]])
    basis = integer_kernel(A)
    cfg = ChainConfig(steps=500, burn_in=100, thin=2, seed=9, chains=3)
    stat = lambda c: float(c[0])  # noqa: E731
    pooled = run_chains(t0, A, independence_basic_moves(2, 3), basis, stat, cfg)
    assert len(pooled.chains) == 3
    assert pooled.samples_kept == 3 * 200
    for i, chain in enumerate(pooled.chains):
        alone = run_chain(t0, A, independence_basic_moves(2, 3), basis, stat, cfg, chain_index=i)
        assert np.array_equal(chain.stat_stream, alone.stat_stream)
    assert np.array_equal(pooled.stat_stream, np.concatenate([c.stat_stream for c in pooled.chains]))
    assert set(pooled.quantiles()) == {"q0", "q5", "q25", "q50", "q75", "q95", "q100"}


def _frequencies(res, fiber):
    total = sum(res.state_counts.values())
    return [res.state_counts.get(m.key(), 0) / total for m in fiber.members]


def _three_sigma(p, n):
    return 3 * np.sqrt(p * (1 - p) / n)


def test_hypergeometric_two_cell_fiber():
    A = _ones_row()
    t0 = DyadTable.from_counts([2, 0])
    cfg = ChainConfig(steps=101_000, burn_in=1_000, thin=10, seed=21, record_states=True)
    res = run_chain(t0, A, [Move([0, 1], [1, -1], 2)], integer_kernel(A), lambda c: 0.0, cfg)
    assert res.target == "hypergeometric"
    fiber = enumerate_fiber(A, t0)
    assert [m.cells.tolist() for m in fiber.members] == [[0, 2], [1, 1], [2, 0]]
    assert res.samples_kept == 10_000
    freqs = _frequencies(res, fiber)
    for f, expected in zip(freqs, (0.25, 0.5, 0.25)):
        assert abs(f - expected) < _three_sigma(expected, res.samples_kept)


@pytest.mark.slow
def test_uniform_on_unit_margin_fiber():
    A = independence_design(3, 3)
    t0 = DyadTable.from_counts(np.eye(3, dtype=int))
    cfg = ChainConfig(steps=101_000, burn_in=1_000, thin=20, seed=4, target="uniform", record_states=True)
    res = run_chain(t0, A, independence_basic_moves(3, 3), integer_kernel(A), lambda c: 0.0, cfg)
    fiber = enumerate_fiber(A, t0)
    assert fiber.size == 6
    freqs = _frequencies(res, fiber)
    assert res.samples_kept == 5_000
    for f in freqs:
        assert abs(f - 1 / 6) < _three_sigma(1 / 6, res.samples_kept)


@pytest.mark.slow
def test_fiber_invariant_over_long_chain():
    g = GraphData.from_edges(6, [(1, 2), (2, 1), (3, 4), (4, 5), (5, 6), (6, 1), (2, 5), (3, 1)])
    t0 = encode_graph(g)
    spec = ModelSpec.from_name("p1-constant", n=6)
    A = spec.design()
    cfg = ChainConfig(steps=100_000, burn_in=1000, thin=100, seed=1, verify_every=1)
    res = run_chain(t0, A, proposer_for(spec, A), integer_kernel(A), lambda c: 0.0, cfg)
    assert res.acceptance_rate > 0
    assert (A.entries @ res.final_state.cells == A.entries @ t0.cells).all()
