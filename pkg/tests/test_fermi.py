from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fermitn import blocksparse as bs
from fermitn import dense as dn
from fermitn import fermi as fm
from fermitn.blocksparse import BlockSparseTensor
from fermitn.fermi import FermionTensor
from fermitn.symmetry import Index, get_group

Z2, U1 = get_group("Z2"), get_group("U1")
ZSEC = ((0, 2), (1, 2))
USEC = ((-1, 1), (0, 1), (1, 2))


def rand_ft(group, n, charge, seed, signs=None, sec=None, prefix="x", dtype=float):
    sec = sec or (ZSEC if group.kind == "Z2" else USEC)
    signs = signs or [1] * n
    ixs = [Index(sec, s, f"{prefix}{k}") for k, s in enumerate(signs)]
    return FermionTensor(BlockSparseTensor.random(group, ixs, charge, seed=seed, dtype=dtype))


def dense_of(t):
    return t.to_dense(), t.leg_parities()


def test_ftranspose_even_legs_no_sign():
    ixs = [Index(((0, 2),), 1, "a"), Index(((0, 3),), 1, "b"), Index(((0, 1), (1, 1)), 1, "c")]
    t = FermionTensor(BlockSparseTensor.random(Z2, ixs, 1, seed=0))
    out = fm.ftranspose(t, [1, 0, 2])
    np.testing.assert_array_equal(out.to_dense(), np.transpose(t.to_dense(), [1, 0, 2]))


def test_ftranspose_odd_pair_negates():
    ixs = [Index(((1, 1),), 1, "a"), Index(((1, 1),), 1, "b")]
    t = FermionTensor(BlockSparseTensor(Z2, ixs, 0, {(1, 1): np.array([[2.0]])}))
    out = fm.ftranspose(t, [1, 0])
    assert out.blocks[(1, 1)][0, 0] == -2.0


@given(seed=st.integers(0, 10**6), perm=st.permutations(range(5)))
def test_ftranspose_inverse_and_dense_oracle(seed, perm):
    t = rand_ft(Z2, 5, seed % 2, seed)
    out = fm.ftranspose(t, perm)
    back = fm.ftranspose(out, list(np.argsort(perm)))
    assert bs.allclose(back.core, t.core, rtol=0, atol=0)
    ref, _ = dn.dense_ftranspose(*dense_of(t), perm)
    np.testing.assert_array_equal(out.to_dense(), ref)


def adjacent_decomposition(perm, bubble=True):
    """Adjacent transpositions turning range(n) into perm."""
    cur = list(range(len(perm)))
    swaps = []
    targets = range(len(perm)) if bubble else reversed(range(len(perm)))
    if bubble:
        for i in targets:
            j = cur.index(perm[i])
            while j > i:
                swaps.append(j - 1)
                cur[j - 1], cur[j] = cur[j], cur[j - 1]
                j -= 1
    else:
        # place elements from the back
        for i in targets:
            j = cur.index(perm[i])
            while j < i:
                swaps.append(j)
                cur[j], cur[j + 1] = cur[j + 1], cur[j]
                j += 1
    assert cur == list(perm)
    return swaps


def apply_swaps(t, swaps):
    for s in swaps:
        p = list(range(t.ndim))
        p[s], p[s + 1] = p[s + 1], p[s]
        t = fm.ftranspose(t, p)
    return t


@given(seed=st.integers(0, 10**6), perm=st.permutations(range(5)))
def test_adjacent_swap_decomposition_independent(seed, perm):
    t = rand_ft(U1, 5, (seed % 3) - 1, seed)
    a = apply_swaps(t, adjacent_decomposition(perm, True))
    b = apply_swaps(t, adjacent_decomposition(perm, False))
    c = fm.ftranspose(t, perm)
    assert bs.allclose(a.core, b.core, rtol=0, atol=0)
    assert bs.allclose(a.core, c.core, rtol=0, atol=0)


def test_fcontract_all_even_is_plain():
    ixs = [Index(((0, 2),), 1, f"a{k}") for k in range(3)]
    a = FermionTensor(BlockSparseTensor.random(Z2, ixs, 0, seed=1))
    b = FermionTensor(BlockSparseTensor.random(Z2, [ixs[1].dual(), Index(((0, 3),), 1, "z")], 0, seed=2))
    out = fm.fcontract(a, b, [(1, 0)])
    plain = bs.contract(a.core, b.core, [(1, 0)])
    assert bs.allclose(out.core, plain, rtol=0, atol=0)


def test_fcontract_single_bond_sign_pattern():
    """Contracting the first leg k of A_{klmn} with B carries
    (-1)**(p_k (p_l + p_m + p_n))."""
    a = rand_ft(Z2, 4, 1, 5, prefix="a")
    bix = [a.indices[0].dual()] + [Index(ZSEC, 1, f"b{k}") for k in range(3)]
    b = FermionTensor(BlockSparseTensor.random(Z2, bix, 0, seed=6))
    out = fm.fcontract(a, b, [(0, 0)]).to_dense()
    A, B = a.to_dense(), b.to_dense()
    p = [np.array([0, 0, 1, 1])] * 4
    sign = (-1.0) ** (p[0][:, None, None, None] * (p[1][None, :, None, None] + p[2][None, None, :, None]
                                                   + p[3][None, None, None, :]))
    ref = np.tensordot(A * sign, B, ([0], [0]))
    np.testing.assert_allclose(out, ref, atol=1e-12)


@given(seed=st.integers(0, 10**6), nax=st.integers(0, 3))
def test_fcontract_dense_oracle(seed, nax):
    rng = np.random.default_rng(seed)
    a = rand_ft(Z2, 4, int(rng.integers(2)), seed, signs=[1, -1, 1, 1], prefix="a")
    ax_a = [int(x) for x in rng.permutation(4)[:nax]]
    ax_b = [int(x) for x in rng.permutation(4)[:nax]]
    bix = [Index(ZSEC, 1, f"b{k}") for k in range(4)]
    for i, j in zip(ax_a, ax_b):
        bix[j] = a.indices[i].dual()
    b = FermionTensor(BlockSparseTensor.random(Z2, bix, int(rng.integers(2)), seed=seed + 7))
    axes = list(zip(ax_a, ax_b))
    out = fm.fcontract(a, b, axes)
    ref, _ = dn.dense_fcontract(*dense_of(a), *dense_of(b), axes)
    np.testing.assert_allclose(out.to_dense(), ref, atol=1e-12)


@pytest.mark.parametrize("charge,pA,pB,expect", [(0, 0, 0, 1.0), (1, 0, 0, -1.0), (1, 1, 1, 1.0), (0, 1, 1, -1.0)])
def test_bond_parity_values(charge, pA, pB, expect):
    ix = Index(((charge, 2),), 1, "b")
    g = fm.bond_parity(ix, pA, pB, Z2)
    np.testing.assert_array_equal(g.to_dense(), expect * np.eye(2))


@given(seed=st.integers(0, 10**6), shared=st.integers(0, 2))
def test_swap_rule(seed, shared):
    rng = np.random.default_rng(seed)
    a = rand_ft(Z2, 3, int(rng.integers(2)), seed, prefix="a")
    bix = [Index(ZSEC, 1, f"b{k}") for k in range(3)]
    for k in range(shared):
        bix[k] = a.indices[k].dual()
    b = FermionTensor(BlockSparseTensor.random(Z2, bix, int(rng.integers(2)), seed=seed + 1))
    axes = [(k, k) for k in range(shared)]
    direct = fm.fcontract(a, b, axes)
    bp, ap = fm.fswap(a, b, [f"a{k}" for k in range(shared)])
    swapped = fm.fcontract(bp, ap, [(j, i) for i, j in axes])
    nfa = a.ndim - shared
    nfb = b.ndim - shared
    perm = list(range(nfb, nfb + nfa)) + list(range(nfb))
    np.testing.assert_allclose(fm.ftranspose(swapped, perm).to_dense(), direct.to_dense(), atol=1e-12)
    # swapping back: same pair up to g on both ends of each shared bond
    app, bpp = fm.fswap(bp, ap, [f"a{k}" for k in range(shared)])
    np.testing.assert_allclose(fm.fcontract(app, bpp, axes).to_dense(), direct.to_dense(), atol=1e-12)
    ga = a
    for k in range(shared):
        ga = fm.apply_parity(ga, k)
    if a.parity and b.parity:
        ga = ga * -1
    gb = b
    for k in range(shared):
        gb = fm.apply_parity(gb, k)
    if a.parity and b.parity:
        gb = gb * -1
    assert bs.allclose(app.core, ga.core, rtol=0, atol=0)
    assert bs.allclose(bpp.core, gb.core, rtol=0, atol=0)


def test_odd_pair_no_shared_bond_phase():
    a = fm.evenize(rand_ft(U1, 2, 1, 1, prefix="a"), "da")
    b = fm.evenize(rand_ft(U1, 2, 1, 2, prefix="b"), "db")
    # moving the dummy of b in front of the dummy of a gives -1
    ab = fm.fcontract(a, b, [])
    n = ab.ndim
    perm = list(range(n))
    perm[2], perm[5] = 5, 2
    moved = fm.ftranspose(ab, perm)
    key = next(iter(ab.blocks))
    k2 = tuple(key[p] for p in perm)
    np.testing.assert_allclose(moved.blocks[k2], -np.transpose(ab.blocks[key], perm))
    with pytest.raises(ValueError):
        fm.fswap(a, b, ["a0"])


@given(seed=st.integers(0, 10**6))
def test_fqr_fsvd_reconstruct(seed):
    t = rand_ft(U1, 4, (seed % 3) - 1, seed)
    rows = [2, 0]
    target = fm.ftranspose(t, [2, 0, 1, 3])
    Q, R = fm.fqr(t, rows, bond_id="k")
    np.testing.assert_allclose(fm.fcontract(Q, R, [(2, 0)]).to_dense(), target.to_dense(), atol=1e-12)
    U, S, Vh, dw = fm.fsvd_truncate(t, rows, bond_id="k")
    US = U.with_core(U.core.scale_leg(2, S))
    np.testing.assert_allclose(fm.fcontract(US, Vh, [(2, 0)]).to_dense(), target.to_dense(), atol=1e-12)
    assert dw < 1e-20
    # commuting diagram: decompose after permuting == decompose of pre-permuted
    Q2, R2 = fm.fqr(target, [0, 1], bond_id="k")
    assert bs.allclose(Q.core, Q2.core, rtol=0, atol=0)
    assert bs.allclose(R.core, R2.core, rtol=0, atol=0)


def test_fqr_ordered_rows_equals_plain_qr():
    t = rand_ft(U1, 3, 0, 3)
    Q, R = fm.fqr(t, [0, 1], bond_id="k")
    Qp, Rp = bs.qr(t.core, [0, 1], bond_id="k")
    assert bs.allclose(Q.core, Qp, rtol=0, atol=0) and bs.allclose(R.core, Rp, rtol=0, atol=0)


def test_evenize_round_trip_and_errors():
    t = rand_ft(U1, 3, 1, 4)
    e = fm.evenize(t, "d")
    assert e.dummy_leg and e.parity == 0 and e.ndim == 4
    assert e.indices[-1].sectors == ((1, 1),)
    back = fm.deevenize(e)
    assert back.total_charge == 1
    assert bs.allclose(back.core, t.core, rtol=0, atol=0)
    with pytest.raises(ValueError, match="not odd"):
        fm.evenize(rand_ft(U1, 3, 0, 4))
    with pytest.raises(ValueError):
        fm.deevenize(t)


@given(seed=st.integers(0, 10**6))
def test_apply_operator_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    t = rand_ft(Z2, 3, int(rng.integers(2)), seed)
    ax = 1
    op = BlockSparseTensor.random(Z2, [Index(ZSEC, 1, "o"), Index(ZSEC, -1, "i")], 0, seed=seed + 3)
    out = fm.apply_operator(t, op, [ax])
    ref = np.moveaxis(np.tensordot(op.to_dense(), t.to_dense(), ([1], [ax])), 0, ax)
    np.testing.assert_allclose(out.to_dense(), ref, atol=1e-12)


def test_fermion_serialization():
    t = fm.evenize(rand_ft(U1, 2, 1, 8), "d")
    t.position = 3
    back = fm.from_dict(fm.to_dict(t))
    assert back.dummy_leg and back.position == 3
    assert bs.allclose(back.core, t.core, rtol=0, atol=0)
