import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from edgecache.errors import InfeasiblePlacementError, InstanceTooLargeError, InvalidParameterError
from edgecache.placement import (
    AccessGraph,
    Placement,
    brute_force_place,
    effective_cache_gain,
    fractional_place,
    greedy_place,
    local_search,
    objective,
    random_geometric_graph,
    read_graph,
    relaxation_bound,
    write_graph,
    write_placement,
)
from edgecache.popularity import top_m_mass, zipf_pmf


def full_graph(U, L, M, pop):
    return AccessGraph(np.ones((U, L), bool), [M] * L, pop)


@st.composite
def graphs(draw, max_users=6, max_caches=3, max_contents=6, max_cap=2):
    U = draw(st.integers(1, max_users))
    L = draw(st.integers(1, max_caches))
    N = draw(st.integers(1, max_contents))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    A = rng.random((U, L)) < draw(st.floats(0.2, 1.0))
    caps = rng.integers(0, max_cap + 1, L)
    if draw(st.booleans()):
        pop = zipf_pmf(draw(st.floats(0, 1.5)), N).probabilities
    else:
        pop = rng.dirichlet(np.ones(N), size=U)
    return AccessGraph(A, caps, pop, rng.random(U) + 0.1)


def random_placement(g, rng, full=False):
    sets = []
    for cap in g.capacities:
        k = min(int(cap), g.num_contents)
        size = k if full else rng.integers(0, k + 1)
        sets.append(rng.choice(g.num_contents, size=size, replace=False))
    return Placement.of(sets)


def test_empty_placement():
    g = full_graph(3, 2, 1, zipf_pmf(0.8, 5).probabilities)
    assert objective(g, Placement.empty(2)) == 0


@pytest.mark.parametrize("M", [0, 1, 3, 7])
def test_single_cache_is_top_m(M):
    pop = zipf_pmf(0.8, 7)
    g = full_graph(4, 1, M, pop.probabilities)
    pl = greedy_place(g)
    assert pl.contents == (frozenset(range(M)),)
    assert objective(g, pl) == pytest.approx(top_m_mass(pop, M))
    assert brute_force_place(g) == pl


def test_two_overlapping_caches_store_distinct_contents():
    p = zipf_pmf(0.8, 5).probabilities
    g = full_graph(3, 2, 1, p)
    assert greedy_place(g).contents == (frozenset({0}), frozenset({1}))
    assert brute_force_place(g).contents == (frozenset({0}), frozenset({1}))
    assert objective(g, greedy_place(g)) == pytest.approx(p[0] + p[1])
    assert objective(g, Placement.of([{0}, {0}])) == pytest.approx(p[0])


def test_disjoint_user_groups_are_independent():
    A = np.zeros((4, 2), bool)
    A[:2, 0] = A[2:, 1] = True
    P = np.zeros((4, 6))
    P[:2] = [0.5, 0.3, 0.1, 0.05, 0.05, 0.0]
    P[2:] = [0.0, 0.05, 0.05, 0.1, 0.3, 0.5]
    g = AccessGraph(A, [2, 2], P)
    assert greedy_place(g).contents == (frozenset({0, 1}), frozenset({4, 5}))


def test_infeasible_placement():
    g = full_graph(2, 2, 1, zipf_pmf(0.8, 4).probabilities)
    with pytest.raises(InfeasiblePlacementError):
        objective(g, Placement.of([{0, 1}, set()]))
    with pytest.raises(InfeasiblePlacementError):
        objective(g, Placement.of([{9}, set()]))
    assert not Placement.of([{0, 1}, set()]).feasible(g)


def test_graph_validation():
    with pytest.raises(InvalidParameterError):
        AccessGraph(np.ones((2, 2), bool), [1, -1], [0.5, 0.5])
    with pytest.raises(InvalidParameterError):
        AccessGraph(np.ones((2, 2), bool), [1], [0.5, 0.5])
    with pytest.raises(InvalidParameterError):
        AccessGraph(np.ones((2, 2), bool), [1, 1], [[0.5, 0.5]] * 3)


def test_user_without_caches_never_hits():
    A = np.array([[True], [False]])
    g = AccessGraph(A, [2], [0.5, 0.5])
    assert objective(g, greedy_place(g)) == pytest.approx(0.5)


@given(graphs(), st.integers(0, 2**31))
def test_objective_monotone_and_submodular(g, seed):
    rng = np.random.default_rng(seed)
    L, N = g.num_caches_L, g.num_contents
    small = rng.random((L, N)) < 0.3
    big = small | (rng.random((L, N)) < 0.3)
    l, c = rng.integers(L), rng.integers(N)

    def f(X):
        return objective(AccessGraph(g.adjacency, [N] * L, g.popularity, g.user_weights),
                         Placement.of([np.nonzero(row)[0] for row in X]))

    assert f(big) >= f(small) - 1e-12
    if not big[l, c]:
        add_small, add_big = small.copy(), big.copy()
        add_small[l, c] = add_big[l, c] = True
        assert f(add_small) - f(small) >= f(add_big) - f(big) - 1e-12


@given(graphs())
def test_greedy_vs_brute_force(g):
    gp, bp = greedy_place(g), brute_force_place(g)
    assert gp.feasible(g) and bp.feasible(g)
    gv, bv = objective(g, gp), objective(g, bp)
    assert bv >= gv - 1e-12
    assert gv >= (1 - 1 / math.e) * bv - 1e-12


@given(graphs(), st.integers(0, 2**31))
def test_brute_force_beats_random(g, seed):
    rng = np.random.default_rng(seed)
    best = objective(g, brute_force_place(g))
    for _ in range(10):
        assert objective(g, random_placement(g, rng)) <= best + 1e-12


def test_greedy_deterministic_tie_breaks():
    g = full_graph(2, 2, 1, [0.25] * 4)
    assert greedy_place(g).contents == (frozenset({0}), frozenset({1}))


def test_greedy_fills_every_cache():
    g = full_graph(3, 3, 2, zipf_pmf(0.5, 10).probabilities)
    assert [len(s) for s in greedy_place(g).contents] == [2, 2, 2]


def test_brute_force_guard():
    g = full_graph(2, 3, 5, zipf_pmf(0.8, 40).probabilities)
    with pytest.raises(InstanceTooLargeError):
        brute_force_place(g)


@pytest.mark.parametrize("M", [1, 2, 5])
def test_marginal_gain_of_capacity_nonincreasing(M):
    pop = zipf_pmf(0.8, 30)
    vals = [objective(g, greedy_place(g)) for g in (full_graph(2, 1, m, pop.probabilities) for m in range(31))]
    gains = np.diff(vals)
    assert np.all(gains[1:] <= gains[:-1] + 1e-15)


@given(graphs())
def test_local_search_never_worse(g):
    start = greedy_place(g)
    assert objective(g, local_search(g, start)) >= objective(g, start) - 1e-12


def test_fractional_single_round_is_greedy():
    g = full_graph(3, 2, 1, zipf_pmf(0.8, 5).probabilities)
    fp = fractional_place(g, 1)
    assert fp.placements == (greedy_place(g),) and fp.weights == (1.0,)
    assert fp.expected_objective == pytest.approx(objective(g, greedy_place(g)))


@pytest.mark.parametrize("rounds", [2, 4, 10])
def test_fractional_symmetric_two_cache(rounds):
    g = full_graph(2, 2, 1, [0.5, 0.5])
    fp = fractional_place(g, rounds)
    assert set(fp.placements) == {Placement.of([{0}, {1}]), Placement.of([{1}, {0}])}
    assert fp.weights == (0.5, 0.5)
    assert np.allclose(fp.marginals(2), 0.5)
    assert fp.expected_objective == pytest.approx(1.0)
    assert fp.upper_bound == pytest.approx(1.0)
    assert len(fp.schedule) == rounds


@given(graphs(max_users=5, max_caches=3, max_contents=5), st.integers(1, 6))
def test_fractional_sandwich(g, rounds):
    fp = fractional_place(g, rounds)
    assert sum(fp.weights) == pytest.approx(1.0)
    ev = fp.expected_objective
    assert objective(g, greedy_place(g)) - 1e-12 <= ev <= objective(g, brute_force_place(g)) + 1e-12
    if rounds > 1:
        assert ev <= fp.upper_bound + 1e-9


def test_fractional_rejects_zero_rounds():
    with pytest.raises(InvalidParameterError):
        fractional_place(full_graph(1, 1, 1, [1.0]), 0)


@given(graphs(max_users=4, max_caches=2, max_contents=4))
def test_relaxation_bounds_optimum(g):
    assert relaxation_bound(g) >= objective(g, brute_force_place(g)) - 1e-9


def test_effective_gain_single_cache():
    g = full_graph(3, 1, 4, zipf_pmf(0.8, 20).probabilities)
    assert effective_cache_gain(g) == pytest.approx(1.0)


@pytest.mark.parametrize("L", [2, 3, 5])
def test_effective_gain_full_overlap(L):
    g = full_graph(4, L, 3, zipf_pmf(0.8, 40).probabilities)
    assert effective_cache_gain(g) == pytest.approx(L)


def test_effective_gain_zero_capacity():
    with pytest.raises(InvalidParameterError):
        effective_cache_gain(full_graph(1, 1, 0, [1.0]))


@pytest.mark.parametrize("seed", range(5))
def test_effective_gain_on_random_geometric_graphs(seed):
    pop = zipf_pmf(0.8, 300).probabilities
    g = random_geometric_graph(150, 30, 0.2, 5, pop, seed=seed)
    reach = g.adjacency.sum(axis=1).mean()
    assert 2.5 <= reach <= 5.5
    gamma = effective_cache_gain(g)
    assert 1.0 <= gamma <= 5.0


def test_random_geometric_graph_deterministic():
    pop = zipf_pmf(0.8, 10).probabilities
    a = random_geometric_graph(20, 5, 0.3, 2, pop, seed=3)
    b = random_geometric_graph(20, 5, 0.3, 2, pop, seed=3)
    assert np.array_equal(a.adjacency, b.adjacency)


def test_graph_file_roundtrip(tmp_path):
    g = AccessGraph.from_edges(3, 2, [(0, 0), (1, 0), (1, 1), (2, 1)], [1, 2], [0.5, 0.3, 0.2], [1.0, 2.0, 1.0])
    path = tmp_path / "g.json"
    write_graph(path, g)
    doc = json.loads(path.read_text())
    assert set(doc) == {"users", "caches", "edges", "capacities", "popularity"}
    h = read_graph(path)
    assert np.array_equal(h.adjacency, g.adjacency)
    assert np.array_equal(h.capacities, g.capacities)
    assert np.array_equal(h.popularity, g.popularity)
    assert np.array_equal(h.user_weights, g.user_weights)


def test_graph_file_per_user_popularity(tmp_path):
    g = AccessGraph(np.ones((2, 1), bool), [1], [[0.9, 0.1], [0.2, 0.8]])
    write_graph(tmp_path / "g.json", g)
    assert np.array_equal(read_graph(tmp_path / "g.json").popularity, g.popularity)


def test_malformed_graph_file(tmp_path):
    (tmp_path / "g.json").write_text('{"users": 2}')
    with pytest.raises(InvalidParameterError):
        read_graph(tmp_path / "g.json")


def test_write_placement(tmp_path):
    write_placement(tmp_path / "p.csv", Placement.of([{2, 0}, {1}]))
    assert (tmp_path / "p.csv").read_text() == "cache_id,content_id\n0,0\n0,2\n1,1\n"
