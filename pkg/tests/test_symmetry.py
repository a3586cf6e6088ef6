from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fermitn.symmetry import Index, fuse_charges, fused_sectors, get_group, parity_of

small = st.integers(-4, 4)


def charge_st(kind):
    if kind == "Z2":
        return st.integers(0, 1)
    if kind == "U1":
        return small
    return st.tuples(small, small)


def test_fuse_examples():
    assert fuse_charges(get_group("Z2"), [1, 1], ["+", "+"]) == 0
    assert fuse_charges(get_group("U1"), [2, 3], ["+", "-"]) == -1
    assert fuse_charges(get_group("U1xU1"), [(1, 0), (0, 1)], ["+", "+"]) == (1, 1)


def test_parity_examples():
    assert parity_of(get_group("U1"), 3) == 1
    assert parity_of(get_group("U1"), 0) == 0
    assert parity_of(get_group("U1xU1"), (1, 1)) == 0
    assert parity_of(get_group("Z2"), 1) == 1


def test_fuse_errors():
    with pytest.raises(ValueError):
        fuse_charges(get_group("U1"), [1, 2], ["+"])
    with pytest.raises(ValueError):
        fuse_charges(get_group("U1"), [], [])
    with pytest.raises(ValueError):
        fuse_charges(get_group("Z2"), [2], ["+"])
    with pytest.raises(ValueError):
        fuse_charges(get_group("U1xU1"), [1], ["+"])
    with pytest.raises(ValueError):
        get_group("SU2")


@pytest.mark.parametrize("kind", ["Z2", "U1", "U1xU1"])
@given(data=st.data())
def test_fuse_associative_and_commutative(kind, data):
    g = get_group(kind)
    cs = data.draw(st.lists(charge_st(kind), min_size=3, max_size=3))
    ss = data.draw(st.lists(st.sampled_from([1, -1]), min_size=3, max_size=3))
    ab = fuse_charges(g, cs[:2], ss[:2])
    left = fuse_charges(g, [ab, cs[2]], [1, ss[2]])
    bc = fuse_charges(g, cs[1:], ss[1:])
    right = fuse_charges(g, [cs[0], bc], [ss[0], 1])
    assert left == right == fuse_charges(g, cs, ss)
    assert fuse_charges(g, cs[::-1], ss[::-1]) == left


@pytest.mark.parametrize("kind", ["Z2", "U1", "U1xU1"])
@given(data=st.data())
def test_parity_is_homomorphism(kind, data):
    g = get_group(kind)
    a = data.draw(charge_st(kind))
    b = data.draw(charge_st(kind))
    assert parity_of(g, fuse_charges(g, [a, b], [1, 1])) == parity_of(g, a) ^ parity_of(g, b)
    assert parity_of(g, fuse_charges(g, [a, b], [1, -1])) == parity_of(g, a) ^ parity_of(g, b)


@given(st.dictionaries(small, st.integers(1, 3), min_size=1, max_size=4), st.sampled_from([1, -1]))
def test_index_dual_and_size(sectors, sign):
    ix = Index(sectors, sign, "a")
    assert ix.dual().dual() == ix
    assert ix.dual().sign == -sign
    assert ix.size == sum(sectors.values())
    assert list(ix.charges) == sorted(sectors)


def test_index_invalid():
    with pytest.raises(ValueError):
        Index(((0, 0),))
    with pytest.raises(ValueError):
        Index(((0, 1), (0, 2)))
    with pytest.raises(ValueError):
        Index(((0, 1),), sign=2)


def test_fused_sector_dims_by_enumeration():
    g = get_group("U1")
    a = Index(((0, 1), (1, 2)), 1)
    b = Index(((-1, 2), (0, 1), (1, 1)), -1)
    fs = fused_sectors(g, [a, b])
    dims = {q: sum(d for _, d in combos) for q, combos in fs.items()}
    expect = {}
    for ca, da in a.sectors:
        for cb, db in b.sectors:
            expect[ca - cb] = expect.get(ca - cb, 0) + da * db
    assert dims == dict(sorted(expect.items()))
