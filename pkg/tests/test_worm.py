import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sectormc.codes import GuardError, build_toric_4d
from sectormc.distribution import empirical
from sectormc.dynamics import make_rng
from sectormc.worm import (BlockGraph, WormState, advance, block_to_graph, complete_graph, cycle_graph,
                           exact_even_distribution, local_validity_tests, sample_even_subgraph, torus_graph,
                           worm_kernel, worm_step)


@pytest.mark.parametrize("graph", [cycle_graph(4), complete_graph(4),
                                   BlockGraph(5, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 2), (0, 3)])])
@pytest.mark.parametrize("beta", [0.3, 1.0, 2.5])
def test_worm_kernel_is_stationary(graph, beta):
    states, pi, K = worm_kernel(graph, beta)
    assert np.allclose(K.sum(axis=1), 1.0, atol=1e-12)
    assert np.abs(pi @ K - pi).sum() <= 1e-10


def test_worm_kernel_guard():
    with pytest.raises(GuardError):
        worm_kernel(torus_graph(3), 1.0)


def test_even_distribution_sizes():
    assert len(exact_even_distribution(torus_graph(3), 1.0)) == 1024
    d = exact_even_distribution(cycle_graph(4), 1.0)
    assert sorted(d.states) == [0, 15]
    assert abs(d[15] - np.exp(-4) / (1 + np.exp(-4))) < 1e-14


def test_samples_are_even_subgraphs():
    g = torus_graph(3)
    keys = sample_even_subgraph(g, 0.7, 100, 3, make_rng(5), 2000)
    assert all(not g.odd_vertices(int(k)) for k in keys)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_python_step_mirrors_invariants(seed):
    g = complete_graph(4)
    st_ = WormState.empty(g)
    rng = np.random.default_rng(seed)
    for _ in range(200):
        worm_step(st_, 1.0, rng)
        odd = g.odd_vertices(st_.mask())
        assert len(odd) == st_.ndef
        if st_.ndef:
            assert sorted(odd) == sorted(int(d) for d in st_.defects)


def test_compiled_run_ends_defect_free():
    g = torus_graph(3)
    st_ = WormState.empty(g)
    for k in range(20):
        advance(st_, 0.5, 7, make_rng(k))
        assert st_.ndef == 0 and not g.odd_vertices(st_.mask())


def test_block_graph_for_4d_block_respects_validity():
    x = build_toric_4d(3).x_sector
    B = sorted(x.network.ball([0], 1) | x.network.ball([3], 1))
    g = block_to_graph(x, B)
    keys = sample_even_subgraph(g, 1.0, 50, 1, make_rng(2), 300) if g.n_edges <= 62 else None
    if keys is not None:
        for k in keys.tolist():
            s = 0
            for e in range(g.n_edges):
                if (k >> e) & 1:
                    s |= 1 << g.check_ids[e]
            assert x.is_valid(s)
    assert isinstance(local_validity_tests(x, B), list)


def test_c4_full_cycle_frequency():
    keys = sample_even_subgraph(cycle_graph(4), 1.0, 100, 1, make_rng(9), 200000)
    freq = empirical(keys.tolist())
    assert abs(freq.get(15, 0.0) - np.exp(-4) / (1 + np.exp(-4))) < 0.004
