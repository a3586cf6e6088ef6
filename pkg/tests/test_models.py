from __future__ import annotations

import itertools

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from jw import hubbard_full, sector_block
from fermitn import models as M
from fermitn.models import (LocalSpace, diamond_lattice, gate_exp, hubbard_terms, random_regular_graph,
                            ring, two_site_hubbard)
from fermitn.oracle import FockBasis, embed_two_site

N_TOT = np.array([M.N_UP[s] + M.N_DN[s] for s in range(4)])


def test_diamond_sizes():
    assert diamond_lattice(3, 3, 3).n == 54
    assert diamond_lattice(5, 5, 5).n == 250
    g = diamond_lattice(2, 2, 2)
    assert g.n == 16 and len(g.edges) == 20
    assert g.is_connected()


def test_diamond_bipartite_and_degrees():
    for L in itertools.product(range(1, 6), repeat=3):
        g = diamond_lattice(*L)
        col = g.two_coloring()
        assert col is not None
        assert all(col[a] != col[b] for a, b in g.edges)
        assert max(g.degree(i) for i in range(g.n)) <= 4
    g = diamond_lattice(3, 3, 3)
    assert sum(g.degree(i) == 4 for i in range(g.n)) > 0
    # site 2*cell+1 of the central cell is interior
    assert g.degree(2 * (1 * 9 + 1 * 3 + 1) + 1) == 4
    with pytest.raises(ValueError):
        diamond_lattice(0, 1, 1)


def test_rrg_examples():
    g = random_regular_graph(8, 3, seed=1)
    assert len(g.edges) == 12
    assert all(g.degree(i) == 3 for i in range(8))
    k4 = random_regular_graph(4, 3, seed=0)
    assert sorted(k4.edges) == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    assert random_regular_graph(12, 3, seed=5).edges == random_regular_graph(12, 3, seed=5).edges
    with pytest.raises(ValueError):
        random_regular_graph(5, 3)
    with pytest.raises(ValueError):
        random_regular_graph(3, 3)


@given(n=st.integers(2, 12).map(lambda k: 2 * k), seed=st.integers(0, 10**6))
def test_rrg_simple_connected_regular(n, seed):
    g = random_regular_graph(n, 3, seed=seed)
    assert g.is_connected()
    assert len(set(g.edges)) == len(g.edges) == 3 * n // 2
    assert all(a < b for a, b in g.edges)
    assert np.bincount([g.degree(i) for i in range(n)]).tolist() == [0, 0, 0, n]


def test_graph_round_trips(tmp_path):
    g = random_regular_graph(10, 3, seed=2)
    assert M.SiteGraph.from_dict(g.to_dict()).edges == g.edges
    assert M.SiteGraph.from_edgelist(g.to_edgelist()).edges == g.edges
    p = tmp_path / "g.json"
    M.save_graph(g, p)
    back = M.load_graph(p)
    assert back.edges == g.edges and back.kind == "rrg" and back.seed == 2


def test_dimer_term_is_full_hamiltonian():
    (term,) = hubbard_terms(ring(2), 1.0, 8.0)
    half = FockBasis(2, 1, 1)
    ev = np.linalg.eigvalsh(embed_two_site(term.matrix, 0, 1, half).toarray())
    assert ev[0] == pytest.approx((8 - np.sqrt(64 + 16)) / 2, abs=1e-12)
    H = hubbard_full(2, [(0, 1)], 1.0, 8.0)
    basis = FockBasis(2)
    np.testing.assert_allclose(embed_two_site(term.matrix, 0, 1, basis).toarray(), sector_block(H, basis),
                               atol=1e-14)


def test_terms_sum_to_hamiltonian_on_ring():
    g = ring(4)
    H = hubbard_full(4, g.edges, 1.0, 4.0)
    basis = FockBasis(4)
    total = sum(embed_two_site(tm.matrix, *tm.sites, basis) for tm in hubbard_terms(g, 1.0, 4.0))
    np.testing.assert_allclose(total.toarray(), sector_block(H, basis), atol=1e-14)


def test_terms_hermitian_and_conserving():
    g = random_regular_graph(6, 3, seed=0)
    nu = np.add.outer(M.N_UP, M.N_UP).ravel()
    nd = np.add.outer(M.N_DN, M.N_DN).ravel()
    for tm in hubbard_terms(g, 1.3, 5.0):
        np.testing.assert_allclose(tm.matrix, tm.matrix.T.conj())
        assert np.all(tm.matrix[nu[:, None] != nu[None, :]] == 0)
        assert np.all(tm.matrix[nd[:, None] != nd[None, :]] == 0)
        assert tm.U_shares == (5.0 / 3, 5.0 / 3)


def test_zero_hopping_terms_diagonal():
    for tm in hubbard_terms(ring(4), 0.0, 4.0):
        assert np.count_nonzero(tm.matrix - np.diag(np.diag(tm.matrix))) == 0


def test_isolated_site_rejected():
    g = M.SiteGraph(3, [(0, 1)])
    with pytest.raises(ValueError):
        hubbard_terms(g, 1.0, 4.0)


@pytest.mark.parametrize("kind", ["U1xU1", "U1", "Z2"])
def test_gate_exp(kind):
    space = LocalSpace(kind)
    tm = hubbard_terms(ring(2), 1.0, 8.0)[0]
    g0 = gate_exp(tm, 0.0, space)
    np.testing.assert_allclose(M.to_layout(np.eye(16), space, 2).reshape(16, 16),
                               g0.to_dense().reshape(16, 16), atol=1e-15)
    rng = np.random.default_rng(0)
    h = two_site_hubbard(rng.normal(), rng.uniform(0, 5), rng.uniform(0, 5))
    term = M.LocalTerm((0, 1), h)
    g = gate_exp(term, 0.37, space).to_dense().reshape(16, 16)
    ref = M.to_layout(scipy.linalg.expm(-0.37 * h), space, 2).reshape(16, 16)
    np.testing.assert_allclose(g, ref, atol=1e-12)
    # commutes with the total particle number
    ntot = np.diag(M.to_layout(np.diag(np.add.outer(N_TOT, N_TOT).ravel()), space, 2).reshape(16, 16))
    comm = g * (ntot[None, :] - ntot[:, None])
    assert np.max(np.abs(comm)) < 1e-13


def test_local_space_layout():
    assert LocalSpace("U1xU1").dense_order == [0, 2, 1, 3]
    assert LocalSpace("U1").dense_order == [0, 1, 2, 3]
    assert LocalSpace("Z2").dense_order == [0, 3, 1, 2]
    assert LocalSpace("U1xU1").charge(3) == (1, 1)


def test_occupations():
    assert M.parse_occupations([0, "u", "d", "ud"], 4) == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        M.parse_occupations("ux", 2)
    with pytest.raises(ValueError):
        M.parse_occupations([0, 1], 3)
    g = diamond_lattice(1, 1, 2)
    occ = M.neel_occupations(g, 2, 2)
    assert sum(o & 1 for o in occ) == 2 and sum(o >> 1 for o in occ) == 2
