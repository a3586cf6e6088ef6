"""Fermionic tensors: parity-graded transposition, contraction and splitting.

Index order is part of a fermionic tensor's meaning.  Swapping two adjacent
legs ``i, j`` multiplies each block by ``(-1)**(p_i * p_j)``.  Contraction
``fcontract(a, b)`` treats ``a`` as standing to the left of ``b``: the
contracted legs of ``a`` are moved to its tail, those of ``b`` to its head
in mirrored order, so that paired legs meet innermost-first, and the result
keeps ``a``'s free legs followed by ``b``'s.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Hashable, Optional, Sequence

import numpy as np

from . import blocksparse as bs
from .blocksparse import BlockSparseTensor
from .symmetry import Index


@dataclass
class FermionTensor:
    """A block-sparse tensor with fermionic metadata.

    Attributes
    ----------
    core : BlockSparseTensor
    dummy_leg : bool
        Whether the last leg is a size-1 odd leg added by :func:`evenize`.
    position : int or None
        Place of the tensor in a globally ordered network.
    """

    core: BlockSparseTensor
    dummy_leg: bool = False
    position: Optional[int] = None

    @property
    def group(self):
        return self.core.group

    @property
    def indices(self):
        return self.core.indices

    @property
    def ids(self):
        return self.core.ids

    @property
    def ndim(self):
        return self.core.ndim

    @property
    def shape(self):
        return self.core.shape

    @property
    def total_charge(self):
        return self.core.total_charge

    @property
    def blocks(self):
        return self.core.blocks

    @property
    def parity(self) -> int:
        return self.core.group.parity(self.core.total_charge)

    def axis(self, bond_id) -> int:
        return self.ids.index(bond_id)

    def with_core(self, core, dummy_leg=None, position=None) -> "FermionTensor":
        return FermionTensor(
            core,
            self.dummy_leg if dummy_leg is None else dummy_leg,
            self.position if position is None else position,
        )

    def copy(self):
        return self.with_core(self.core.copy())

    def __mul__(self, x):
        return self.with_core(self.core * x)

    __rmul__ = __mul__

    def __truediv__(self, x):
        return self.with_core(self.core / x)

    def norm(self):
        return self.core.norm()

    def max_abs(self):
        return self.core.max_abs()

    def to_dense(self):
        return self.core.to_dense()

    def leg_parities(self):
        """One 0/1 array per leg giving the parity of each dense position."""
        return [leg_parity_vector(self.group, ix) for ix in self.indices]

    def relabel(self, ids: dict):
        return self.with_core(self.core.relabel(ids))

    def __repr__(self):
        extra = ", dummy" if self.dummy_leg else ""
        if self.position is not None:
            extra += f", pos={self.position}"
        return f"FermionTensor({self.core!r}{extra})"


def as_fermion(t) -> FermionTensor:
    return t if isinstance(t, FermionTensor) else FermionTensor(t)


def leg_parity_vector(group, ix: Index) -> np.ndarray:
    return np.concatenate(
        [np.full(d, group.parity(c), dtype=np.int8) for c, d in ix.sectors]
    ) if ix.sectors else np.zeros(0, dtype=np.int8)


@functools.lru_cache(maxsize=65536)
def _perm_sign(parities: tuple, perm: tuple) -> int:
    """Sign of reordering legs with ``parities`` into order ``perm``."""
    n = 0
    seen_odd = []
    for p in perm:
        if parities[p]:
            # count odd legs already placed that originally came after p
            n += sum(1 for q in seen_odd if q > p)
            seen_odd.append(p)
    return -1 if n % 2 else 1


def _key_parities(group, key):
    return tuple(group.parity(c) for c in key)


def signed_blocks(core: BlockSparseTensor, perm: Sequence[int]) -> dict:
    """Blocks of ``core`` multiplied by the graded sign of ``perm`` (legs
    not yet moved)."""
    perm = tuple(perm)
    g = core.group
    out = {}
    for key, blk in core.blocks.items():
        s = _perm_sign(_key_parities(g, key), perm)
        out[key] = -blk if s < 0 else blk
    return out


def ftranspose(t: FermionTensor, perm: Sequence[int]) -> FermionTensor:
    """Permute legs, applying the graded sign to each block."""
    t = as_fermion(t)
    perm = bs._check_perm(perm, t.ndim)
    if perm == tuple(range(t.ndim)):
        return t.with_core(t.core._new())
    core = t.core._new(blocks=signed_blocks(t.core, perm))
    core = bs.transpose(core, perm)
    keeps_dummy = t.dummy_leg and perm[-1] == t.ndim - 1
    return FermionTensor(core, keeps_dummy, t.position)


def fcontract(a: FermionTensor, b: FermionTensor, axes) -> FermionTensor:
    """Fermionic contraction of ``a`` (left) with ``b`` (right).

    ``axes`` lists pairs ``(pos_a, pos_b)``.  Result legs: free legs of
    ``a`` then free legs of ``b``; position inherited from ``a``.
    """
    a, b = as_fermion(a), as_fermion(b)
    ax_a, ax_b = bs._check_axes(a.core, b.core, axes)
    free_a = [i for i in range(a.ndim) if i not in ax_a]
    free_b = [i for i in range(b.ndim) if i not in ax_b]
    ca = a.core._new(blocks=signed_blocks(a.core, free_a + ax_a))
    cb = b.core._new(blocks=signed_blocks(b.core, ax_b[::-1] + free_b))
    core = bs._tensordot(ca, cb, ax_a, ax_b)
    pos = a.position if a.position is not None else b.position
    return FermionTensor(core, False, pos)


def fcontract_ids(a: FermionTensor, b: FermionTensor, bond_ids=None) -> FermionTensor:
    """Contract over shared bond ids (all shared ids if ``bond_ids`` is None)."""
    if bond_ids is None:
        bond_ids = [i for i in a.ids if i is not None and i in b.ids]
    axes = [(a.axis(i), b.axis(i)) for i in bond_ids]
    return fcontract(a, b, axes)


def bond_parity(idx: Index, pA: int, pB: int, group=None) -> BlockSparseTensor:
    """Diagonal bond parity tensor ``g_n = (-1)**p_n * (-1)**(pA*pB)`` on
    ``(idx, idx.dual())``."""
    if group is None:
        from .symmetry import get_group

        group = get_group("U1xU1" if isinstance(idx.sectors[0][0], tuple) else "U1")
    phase = -1.0 if (pA and pB) else 1.0
    vals = {c: np.full(d, phase * (-1.0 if group.parity(c) else 1.0)) for c, d in idx.sectors}
    return bs.diag_tensor(group, idx, vals)


def apply_parity(t: FermionTensor, axis: int) -> FermionTensor:
    """Multiply leg ``axis`` by ``(-1)**p``: reverses the arrow of that bond."""
    g = t.group
    blocks = {}
    for key, blk in t.core.blocks.items():
        blocks[key] = -blk if g.parity(key[axis]) else blk
    return t.with_core(t.core._new(blocks=blocks))


def fswap(a: FermionTensor, b: FermionTensor, shared_bonds: Sequence[Hashable] = ()):
    """Swap rule ``F(a b) = F(b' a')``.

    The bond parity of every shared bond and the phase ``(-1)**(pa*pb)``
    are absorbed into ``b``; ``a`` is returned unchanged.  Positions, if
    set, are exchanged.
    """
    a, b = as_fermion(a), as_fermion(b)
    for bid in shared_bonds:
        if bid not in a.ids or bid not in b.ids:
            raise ValueError(f"Bond {bid!r} is not shared by both tensors.")
    bp = b
    for bid in shared_bonds:
        bp = apply_parity(bp, bp.axis(bid))
    if a.parity and b.parity:
        bp = bp * -1
    bp = FermionTensor(bp.core, bp.dummy_leg, a.position)
    ap = FermionTensor(a.core, a.dummy_leg, b.position)
    return bp, ap


def _row_first(t: FermionTensor, row_positions):
    rows, cols = bs._split_positions(t.core, row_positions)
    return ftranspose(t, rows + cols), len(rows), cols


def fqr(t: FermionTensor, row_positions, bond_id=None):
    """QR after moving ``row_positions`` to the front with graded signs.

    ``fcontract(Q, R)`` over the new bond equals ``ftranspose(t, rows + cols)``;
    the new bond is oriented ``Q -> R``.
    """
    t = as_fermion(t)
    tt, nrow, cols = _row_first(t, row_positions)
    Q, R = bs.qr(tt.core, range(nrow), bond_id=bond_id)
    dummy = t.dummy_leg and cols and cols[-1] == t.ndim - 1
    return FermionTensor(Q, False, t.position), FermionTensor(R, bool(dummy), None)


def fsvd_truncate(t: FermionTensor, row_positions, chi=None, cutoff=bs.SVD_RANK_CUTOFF, bond_id=None):
    """Truncated SVD after moving ``row_positions`` to the front.

    Returns ``(U, S, Vh, discarded_weight)``; bond oriented ``U -> Vh``.
    """
    t = as_fermion(t)
    tt, nrow, cols = _row_first(t, row_positions)
    U, S, Vh, dw = bs.svd_truncate(tt.core, range(nrow), chi=chi, cutoff=cutoff, bond_id=bond_id)
    dummy = t.dummy_leg and cols and cols[-1] == t.ndim - 1
    return FermionTensor(U, False, t.position), S, FermionTensor(Vh, bool(dummy), None), dw


def evenize(t: FermionTensor, dummy_id=None) -> FermionTensor:
    """Append a size-1 odd leg carrying the total charge so that the
    result is even (and neutral)."""
    t = as_fermion(t)
    if not t.parity:
        raise ValueError("Tensor is not odd; evenize needs odd total parity.")
    if t.dummy_leg:
        raise ValueError("Tensor already has a dummy leg.")
    g = t.group
    q = t.total_charge
    dummy_id = bs.new_bond_id("_dummy") if dummy_id is None else dummy_id
    ix = Index(((q, 1),), -1, dummy_id)
    blocks = {k + (q,): v[..., None] for k, v in t.core.blocks.items()}
    core = BlockSparseTensor(g, t.indices + (ix,), g.identity, blocks, dtype=t.core.dtype, check=False)
    return FermionTensor(core, True, t.position)


def deevenize(t: FermionTensor) -> FermionTensor:
    """Remove the dummy leg added by :func:`evenize`."""
    t = as_fermion(t)
    if not t.dummy_leg:
        raise ValueError("Tensor has no dummy leg.")
    g = t.group
    ix = t.indices[-1]
    (c, _), = ix.sectors
    q = g.sub(t.total_charge, g.signed(c, ix.sign))
    blocks = {k[:-1]: v[..., 0] for k, v in t.core.blocks.items()}
    core = BlockSparseTensor(g, t.indices[:-1], q, blocks, dtype=t.core.dtype, check=False)
    return FermionTensor(core, False, t.position)


def apply_operator(t: FermionTensor, op: BlockSparseTensor, axes: Sequence[int]) -> FermionTensor:
    """Act with an even operator on legs ``axes`` of ``t``.

    ``op`` has legs ``(out_1..out_k, in_1..in_k)``; the ``in`` legs are
    dual to ``t``'s legs at ``axes``.  The target legs are brought to the
    front in the given order, ``op`` is applied as a plain matrix and the
    legs are moved back.
    """
    t = as_fermion(t)
    axes = [int(a) for a in axes]
    k = len(axes)
    rest = [i for i in range(t.ndim) if i not in axes]
    front = ftranspose(t, axes + rest)
    core = bs.contract(op, front.core, [(k + i, i) for i in range(k)])
    # restore the ids of the acted-on legs
    core = core._new(
        indices=[ix.with_id(t.indices[axes[i]].id) if i < k else ix for i, ix in enumerate(core.indices)]
    )
    moved = FermionTensor(core, False, t.position)
    inv = list(np.argsort(axes + rest))
    out = ftranspose(moved, inv)
    return FermionTensor(out.core, t.dummy_leg, t.position)


def to_dict(t: FermionTensor) -> dict:
    d = bs.tensor_to_dict(t.core)
    d["dummy_leg"] = bool(t.dummy_leg)
    d["position"] = t.position
    return d


def from_dict(d: dict) -> FermionTensor:
    return FermionTensor(bs.tensor_from_dict(d), bool(d.get("dummy_leg", False)), d.get("position"))
