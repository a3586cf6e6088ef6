from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import dense_value, rel_err
from fermitn import pathopt as po
from fermitn.network import contract_all, rand_network
from fermitn.pathopt import ContractionTree, SearchParams

CHAIN_LEGS = {"A": ["i", "j"], "B": ["j", "k"], "C": ["k", "l"]}
CHAIN_SIZES = {"i": 2, "j": 4, "k": 8, "l": 2}


def graph_legs(n, edges, dim=4, open_dim=None):
    legs = {i: [] for i in range(n)}
    sizes = {}
    for k, (a, b) in enumerate(edges):
        legs[a].append(f"e{k}")
        legs[b].append(f"e{k}")
        sizes[f"e{k}"] = dim if np.isscalar(dim) else dim[k]
    if open_dim:
        for i in range(n):
            legs[i].append(f"o{i}")
            sizes[f"o{i}"] = open_dim
    return legs, sizes


def ring_legs(n, dim=4):
    return graph_legs(n, [(i, (i + 1) % n) for i in range(n)], dim)


def random_graph(n, seed, dmin=2, dmax=6):
    rng = np.random.default_rng(seed)
    edges = [(int(rng.integers(i)), i) for i in range(1, n)]
    for _ in range(n // 2 + 1):
        a, b = sorted(rng.choice(n, 2, replace=False).tolist())
        if (a, b) not in edges:
            edges.append((a, b))
    dims = [int(rng.integers(dmin, dmax + 1)) for _ in edges]
    return graph_legs(n, edges, dims)


def test_matrix_chain_costs():
    left = ContractionTree.from_nested((("A", "B"), "C"))
    right = ContractionTree.from_nested(("A", ("B", "C")))
    assert po.tree_cost(CHAIN_LEGS, CHAIN_SIZES, left)[0] == 64 + 32
    assert po.tree_cost(CHAIN_LEGS, CHAIN_SIZES, right)[0] == 64 + 16
    g = po.greedy_tree(CHAIN_LEGS, CHAIN_SIZES)
    assert g.flops == 80
    assert po.optimal_tree(CHAIN_LEGS, CHAIN_SIZES).flops == 80


def test_single_matrix_product_cost():
    legs = {0: ["m", "k"], 1: ["k", "n"]}
    flops, peak = po.tree_cost(legs, {"m": 3, "k": 5, "n": 7}, ContractionTree.from_nested((0, 1)))
    assert flops == 3 * 5 * 7
    assert peak == 15 + 35 + 21


def test_compressed_cost_not_above_exact():
    legs, sizes = ring_legs(6, dim=6)
    for seed in range(10):
        tree = po.random_tree(legs, sizes, seed=seed)
        assert po.tree_cost(legs, sizes, tree, chi=4)[0] <= po.tree_cost(legs, sizes, tree)[0]


def test_greedy_deterministic_at_zero_temperature():
    legs, sizes = random_graph(8, 3)
    t1 = po.greedy_tree(legs, sizes, SearchParams(seed=1))
    t2 = po.greedy_tree(legs, sizes, SearchParams(seed=99))
    assert t1.merges == t2.merges


def test_greedy_beats_linear_order():
    wins = 0
    for seed in range(100):
        legs, sizes = random_graph(8, seed)
        g = po.greedy_tree(legs, sizes).flops
        lin = po.tree_cost(legs, sizes, po.linear_tree(legs))[0]
        wins += g <= lin
    assert wins >= 95


def test_hyper_search_trials_one_is_greedy_and_monotone():
    legs, sizes = random_graph(9, 7)
    p = SearchParams(trials=1, seed=5)
    assert po.hyper_search(legs, sizes, p).merges == po.greedy_tree(legs, sizes, p).merges
    costs = [po.hyper_search(legs, sizes, SearchParams(trials=t, seed=5)).flops for t in (1, 4, 16, 64)]
    assert costs == sorted(costs, reverse=True)


def test_hyper_search_threads_same_result():
    legs, sizes = random_graph(8, 2)
    p = SearchParams(trials=16, seed=3)
    assert po.hyper_search(legs, sizes, p, workers=4).merges == po.hyper_search(legs, sizes, p).merges


@pytest.mark.parametrize("x0", [0, 1, 2])
def test_grid_subgraphs_within_twice_optimal(x0):
    # 2x4 windows of a 4x4 grid with bond dimension 4 and physical legs
    nodes = [(x, y) for x in range(x0, x0 + 2) for y in range(4)]
    idx = {s: k for k, s in enumerate(nodes)}
    edges = [(idx[a], idx[b]) for a in nodes for b in nodes
             if a < b and abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1]
    legs, sizes = graph_legs(8, edges, 4, open_dim=2)
    best = po.optimal_tree(legs, sizes)
    hs = po.hyper_search(legs, sizes, SearchParams(trials=64, seed=0))
    assert hs.flops <= 2 * best.flops
    assert best.flops <= hs.flops


def test_optimal_matches_brute_force_on_small_graphs():
    def all_trees(items):
        if len(items) == 1:
            yield items[0]
            return
        first, rest = items[0], items[1:]
        n = len(rest)
        for mask in range(2**n):
            left = [first] + [rest[i] for i in range(n) if mask >> i & 1]
            right = [rest[i] for i in range(n) if not mask >> i & 1]
            if not right:
                continue
            for a in all_trees(left):
                for b in all_trees(right):
                    yield (a, b)

    for seed in range(5):
        legs, sizes = random_graph(5, seed)
        brute = min(po.tree_cost(legs, sizes, ContractionTree.from_nested(t))[0] for t in all_trees(list(legs)))
        assert po.optimal_tree(legs, sizes).flops == brute


def test_tree_validation_and_round_trip():
    with pytest.raises(ValueError):
        ContractionTree([0, 1, 2], [(0, 1)])
    with pytest.raises(ValueError):
        ContractionTree([0, 1], [(0, 0)])
    with pytest.raises(ValueError):
        SearchParams(trials=0)
    with pytest.raises(ValueError):
        SearchParams(cost_weight=2)
    legs, sizes = random_graph(7, 1)
    t = po.greedy_tree(legs, sizes)
    back = ContractionTree.from_dict(t.to_dict())
    assert back.merges == t.merges and back.flops == t.flops
    nested = ContractionTree.from_nested(t.to_nested())
    assert po.tree_cost(legs, sizes, nested) == po.tree_cost(legs, sizes, t)
    with pytest.raises(ValueError):
        po.tree_cost({0: ["a"], 1: ["a"], 2: []}, {"a": 2}, t)


def test_disconnected_graph_gets_outer_product():
    legs = {0: ["a"], 1: ["a"], 2: ["b"], 3: ["b"]}
    t = po.greedy_tree(legs, {"a": 3, "b": 2})
    assert t.n == 4 and len(t.merges) == 3


@given(seed=st.integers(0, 10**5))
def test_search_never_changes_values(seed):
    net = rand_network(7, "Z2", seed=seed)
    legs, sizes = net.graph()
    ref = dense_value(contract_all(net, po.linear_tree(legs)))
    for tree in (po.greedy_tree(legs, sizes), po.hyper_search(legs, sizes, SearchParams(trials=8, seed=seed))):
        assert rel_err(dense_value(contract_all(net, tree)), ref) < 1e-10


def test_peak_memory_bounds_dense_peak():
    # single-sector (dense) networks: stored entries equal full sizes
    for seed in range(5):
        net = rand_network(7, "Z2", seed=seed, mode="bosonic", bond_dims=(1, 1), open_legs=0.0)
        legs, sizes = net.graph()
        tree = po.greedy_tree(legs, sizes)
        res = contract_all(net, tree)
        assert res.diagnostics["peak_block_memory"] <= tree.peak_memory
