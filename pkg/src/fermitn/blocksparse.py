"""Abelian block-sparse tensors.

A tensor stores only the dense blocks whose charge key satisfies the
selection rule ``sum_i sign_i * c_i == total_charge``.  All operations here
are plain (bosonic): transposition never introduces signs.

The dense layout of an index orders its sectors by charge; this is the
layout used by :meth:`BlockSparseTensor.to_dense` and ``from_dense``.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from typing import Hashable, Sequence

import numpy as np

from .symmetry import Index, SymmetryGroup, fused_sectors, get_group

FORMAT_TAG = "fermitn.blocksparse/1"

# singular values below this fraction of the largest are treated as zero
SVD_RANK_CUTOFF = 1e-14

_id_counter = itertools.count()


def new_bond_id(prefix="_b"):
    return f"{prefix}{next(_id_counter)}"


class BlockSparseTensor:
    """A tensor with an abelian symmetry, stored as a dict of dense blocks.

    Parameters
    ----------
    group : SymmetryGroup
    indices : sequence of Index
    total_charge : charge
        The charge ``s(A)`` of the tensor.
    blocks : dict
        Map from charge key (one charge per index) to an array whose shape
        matches the sector dimensions.
    check : bool, optional
        Validate keys and shapes.
    """

    __slots__ = ("group", "indices", "total_charge", "blocks", "dtype", "fuse_info")

    def __init__(self, group, indices, total_charge, blocks=None, dtype=None, check=True):
        if isinstance(group, str):
            group = get_group(group)
        self.group = group
        self.indices = tuple(indices)
        self.total_charge = group.validate(total_charge) if check else total_charge
        self.blocks = {} if blocks is None else dict(blocks)
        if dtype is None:
            dtype = (
                np.result_type(*self.blocks.values()) if self.blocks else np.float64
            )
        self.dtype = np.dtype(dtype)
        self.fuse_info = None
        if check:
            self.check()

    # ------------------------------------------------------------------ #

    @property
    def ndim(self) -> int:
        return len(self.indices)

    @property
    def signs(self) -> tuple:
        return tuple(ix.sign for ix in self.indices)

    @property
    def shape(self) -> tuple:
        return tuple(ix.size for ix in self.indices)

    @property
    def ids(self) -> tuple:
        return tuple(ix.id for ix in self.indices)

    def check(self):
        g = self.group
        for ix in self.indices:
            ix.validate(g)
        signs = self.signs
        for key, blk in self.blocks.items():
            if len(key) != self.ndim:
                raise ValueError(f"Block key {key} has wrong length for {self.ndim} indices.")
            if g.fuse(key, signs) != self.total_charge:
                raise ValueError(
                    f"Block {key} violates the selection rule for total charge "
                    f"{self.total_charge!r}."
                )
            expect = tuple(ix.dim(c) for ix, c in zip(self.indices, key))
            if blk.shape != expect:
                raise ValueError(f"Block {key} has shape {blk.shape}, expected {expect}.")

    def copy(self) -> "BlockSparseTensor":
        return self._new(blocks={k: v.copy() for k, v in self.blocks.items()})

    def _new(self, indices=None, total_charge=None, blocks=None, dtype=None):
        new = object.__new__(BlockSparseTensor)
        new.group = self.group
        new.indices = self.indices if indices is None else tuple(indices)
        new.total_charge = self.total_charge if total_charge is None else total_charge
        new.blocks = self.blocks if blocks is None else blocks
        if dtype is None:
            dtype = np.result_type(*new.blocks.values()) if new.blocks else self.dtype
        new.dtype = np.dtype(dtype)
        new.fuse_info = None
        return new

    def __repr__(self):
        legs = ", ".join(
            f"{'+' if ix.sign > 0 else '-'}{ix.size}" + (f"[{ix.id}]" if ix.id is not None else "")
            for ix in self.indices
        )
        return (
            f"BlockSparseTensor({self.group.kind}, charge={self.total_charge!r}, "
            f"legs=({legs}), nblocks={len(self.blocks)})"
        )

    # ------------------------------------------------------------------ #
    # construction

    @classmethod
    def zeros(cls, group, indices, total_charge=None, dtype=float):
        group = get_group(group) if isinstance(group, str) else group
        if total_charge is None:
            total_charge = group.identity
        return cls(group, indices, total_charge, {}, dtype=dtype)

    @classmethod
    def random(cls, group, indices, total_charge=None, seed=None, dtype=float, fill=1.0):
        """Fill every allowed block with standard normal entries.

        ``fill`` < 1 keeps each allowed block with that probability, which
        gives genuinely sparse tensors for testing.
        """
        group = get_group(group) if isinstance(group, str) else group
        if total_charge is None:
            total_charge = group.identity
        rng = np.random.default_rng(seed)
        blocks = {}
        for key in allowed_keys(group, indices, total_charge):
            if fill < 1.0 and rng.random() > fill:
                continue
            shape = tuple(ix.dim(c) for ix, c in zip(indices, key))
            blk = rng.standard_normal(shape)
            if np.iscomplexobj(np.empty(0, dtype=dtype)):
                blk = blk + 1j * rng.standard_normal(shape)
            blocks[key] = blk.astype(dtype)
        return cls(group, indices, total_charge, blocks, dtype=dtype)

    @classmethod
    def from_dense(cls, group, indices, total_charge, array, atol=1e-12):
        """Extract the symmetric blocks of a dense array.

        Raises ``ValueError`` if entries outside the allowed blocks exceed
        ``atol`` in magnitude.
        """
        group = get_group(group) if isinstance(group, str) else group
        array = np.asarray(array)
        offs = [ix.offsets() for ix in indices]
        mask = np.zeros(array.shape, dtype=bool)
        blocks = {}
        for key in allowed_keys(group, indices, total_charge):
            sl = tuple(
                slice(o[c], o[c] + ix.dim(c)) for o, ix, c in zip(offs, indices, key)
            )
            mask[sl] = True
            blk = array[sl]
            if np.any(blk):
                blocks[key] = blk.copy()
        if array.size and np.any(np.abs(array[~mask]) > atol):
            raise ValueError("Dense array has weight outside the symmetric blocks.")
        return cls(group, indices, total_charge, blocks, dtype=array.dtype)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=self.dtype)
        offs = [ix.offsets() for ix in self.indices]
        for key, blk in self.blocks.items():
            sl = tuple(
                slice(o[c], o[c] + ix.dim(c)) for o, ix, c in zip(offs, self.indices, key)
            )
            out[sl] = blk
        return out

    # ------------------------------------------------------------------ #
    # elementwise

    def norm(self) -> float:
        return math.sqrt(sum(float(np.vdot(b, b).real) for b in self.blocks.values()))

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(b))) for b in self.blocks.values() if b.size), default=0.0)

    def __mul__(self, x):
        return self._new(blocks={k: v * x for k, v in self.blocks.items()})

    __rmul__ = __mul__

    def __truediv__(self, x):
        return self._new(blocks={k: v / x for k, v in self.blocks.items()})

    def __neg__(self):
        return self * -1

    def __add__(self, other):
        _check_same_structure(self, other)
        blocks = {k: v.copy() for k, v in self.blocks.items()}
        for k, v in other.blocks.items():
            blocks[k] = blocks[k] + v if k in blocks else v.copy()
        return self._new(blocks=blocks)

    def __sub__(self, other):
        return self + (-other)

    def conj(self) -> "BlockSparseTensor":
        """Complex conjugate with every index dualized."""
        g = self.group
        return self._new(
            indices=[ix.dual() for ix in self.indices],
            total_charge=g.neg(self.total_charge),
            blocks={k: v.conj() for k, v in self.blocks.items()},
        )

    def astype(self, dtype):
        return self._new(blocks={k: v.astype(dtype) for k, v in self.blocks.items()}, dtype=dtype)

    def relabel(self, ids: dict) -> "BlockSparseTensor":
        """Replace index ids according to the mapping ``ids``."""
        return self._new(
            indices=[ix.with_id(ids.get(ix.id, ix.id)) if ix.id in ids else ix for ix in self.indices]
        )

    def scale_leg(self, axis: int, vec: dict, power: float = 1.0) -> "BlockSparseTensor":
        """Multiply leg ``axis`` by a diagonal given per sector (``vec[charge]``).

        Sectors missing from ``vec`` are zeroed (their blocks dropped).
        """
        ix = self.indices[axis]
        shape = [1] * self.ndim
        blocks = {}
        for key, blk in self.blocks.items():
            c = key[axis]
            if c not in vec:
                continue
            v = np.asarray(vec[c])
            if power != 1.0:
                v = v**power
            shape[axis] = ix.dim(c)
            blocks[key] = blk * v.reshape(shape)
            shape[axis] = 1
        return self._new(blocks=blocks)

    def restrict_leg(self, axis: int, sectors: dict) -> "BlockSparseTensor":
        """Keep only the leading ``sectors[c]`` entries of each sector on ``axis``.

        Used when a bond is truncated elsewhere and this leg must follow.
        """
        ix = self.indices[axis]
        new_ix = Index(tuple((c, d) for c, d in sectors.items() if d > 0), ix.sign, ix.id)
        blocks = {}
        for key, blk in self.blocks.items():
            d = sectors.get(key[axis], 0)
            if d == 0:
                continue
            sl = [slice(None)] * self.ndim
            sl[axis] = slice(0, d)
            blocks[key] = blk[tuple(sl)]
        indices = list(self.indices)
        indices[axis] = new_ix
        return self._new(indices=indices, blocks=blocks)

    # ------------------------------------------------------------------ #

    def transpose(self, perm: Sequence[int]) -> "BlockSparseTensor":
        return transpose(self, perm)

    def to_dict(self) -> dict:
        return tensor_to_dict(self)


def _check_same_structure(a, b):
    if a.group != b.group or a.total_charge != b.total_charge:
        raise ValueError("Tensors have different symmetry structure.")
    if [ix.sectors for ix in a.indices] != [ix.sectors for ix in b.indices] or a.signs != b.signs:
        raise ValueError("Tensors have different indices.")


def allowed_keys(group: SymmetryGroup, indices: Sequence[Index], total_charge):
    """All charge keys compatible with the selection rule, in sorted order."""
    n = len(indices)
    if n == 0:
        return [()] if total_charge == group.identity else []
    *head, last = indices
    signs = [ix.sign for ix in head]
    keys = []
    for combo in itertools.product(*(ix.charges for ix in head)):
        partial = group.fuse(combo, signs) if head else group.identity
        need = group.signed(group.sub(total_charge, partial), last.sign)
        if last.has(need):
            keys.append(combo + (need,))
    keys.sort()
    return keys


def allclose(a: BlockSparseTensor, b: BlockSparseTensor, rtol=1e-10, atol=1e-12) -> bool:
    """Blockwise comparison; absent blocks count as zeros."""
    if a.group != b.group or a.total_charge != b.total_charge:
        return False
    if [ix.sectors for ix in a.indices] != [ix.sectors for ix in b.indices]:
        return False
    if a.signs != b.signs:
        return False
    for k in set(a.blocks) | set(b.blocks):
        x = a.blocks.get(k)
        y = b.blocks.get(k)
        if x is None:
            x = np.zeros_like(y)
        if y is None:
            y = np.zeros_like(x)
        if not np.allclose(x, y, rtol=rtol, atol=atol):
            return False
    return True


def _check_perm(perm, n):
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{perm} is not a permutation of {n} axes.")
    return perm


def transpose(t: BlockSparseTensor, perm: Sequence[int]) -> BlockSparseTensor:
    """Permute the legs of ``t`` (no signs)."""
    perm = _check_perm(perm, t.ndim)
    if perm == tuple(range(t.ndim)):
        return t._new()
    blocks = {
        tuple(k[p] for p in perm): np.transpose(v, perm) for k, v in t.blocks.items()
    }
    return t._new(indices=[t.indices[p] for p in perm], blocks=blocks)


def _check_axes(a, b, axes):
    axes = [(int(i), int(j)) for i, j in axes]
    ax_a = [i for i, _ in axes]
    ax_b = [j for _, j in axes]
    if len(set(ax_a)) != len(ax_a) or len(set(ax_b)) != len(ax_b):
        raise ValueError(f"Repeated axis in {axes}.")
    for i, j in axes:
        if not (0 <= i < a.ndim and 0 <= j < b.ndim):
            raise ValueError(f"Axis pair {(i, j)} out of range.")
        ia, ib = a.indices[i], b.indices[j]
        if ia.sectors != ib.sectors:
            raise ValueError(
                f"Sector mismatch contracting axis {i} with {j}: {ia.sectors} vs {ib.sectors}."
            )
        if ia.sign == ib.sign:
            raise ValueError(f"Signature mismatch contracting axis {i} with {j}: signs must be opposite.")
    if a.group != b.group:
        raise ValueError("Cannot contract tensors of different symmetry groups.")
    return ax_a, ax_b


def contract(a: BlockSparseTensor, b: BlockSparseTensor, axes) -> BlockSparseTensor:
    """Contract ``a`` and ``b`` over the pairs ``axes = [(pos_a, pos_b), ...]``.

    The result has the free legs of ``a`` followed by those of ``b``.
    """
    ax_a, ax_b = _check_axes(a, b, axes)
    return _tensordot(a, b, ax_a, ax_b)


def _tensordot(a, b, ax_a, ax_b) -> BlockSparseTensor:
    g = a.group
    free_a = [i for i in range(a.ndim) if i not in ax_a]
    free_b = [i for i in range(b.ndim) if i not in ax_b]
    perm_a = free_a + list(ax_a)
    perm_b = list(ax_b) + free_b
    signs_c = [a.indices[i].sign for i in ax_a]
    ia, ib = a.indices, b.indices

    ga = defaultdict(dict)
    for key, blk in a.blocks.items():
        ga[tuple(key[i] for i in ax_a)][tuple(key[i] for i in free_a)] = blk
    gb = defaultdict(dict)
    for key, blk in b.blocks.items():
        gb[tuple(key[i] for i in ax_b)][tuple(key[i] for i in free_b)] = blk

    buckets = defaultdict(list)
    for ck in ga.keys() & gb.keys():
        buckets[g.fuse(ck, signs_c) if ck else g.identity].append(ck)

    dtype = np.result_type(a.dtype, b.dtype)
    out = {}
    for cks in buckets.values():
        cks.sort()
        rks_a = sorted(set().union(*(ga[ck].keys() for ck in cks)))
        rks_b = sorted(set().union(*(gb[ck].keys() for ck in cks)))
        ra_shape = {rk: tuple(ia[i].dim(c) for i, c in zip(free_a, rk)) for rk in rks_a}
        rb_shape = {rk: tuple(ib[i].dim(c) for i, c in zip(free_b, rk)) for rk in rks_b}
        c_size = {ck: math.prod(ia[i].dim(c) for i, c in zip(ax_a, ck)) for ck in cks}

        if len(cks) == 1 and len(rks_a) == 1 and len(rks_b) == 1:
            (ck,), (ra,), (rb,) = cks, rks_a, rks_b
            A = np.transpose(ga[ck][ra], perm_a).reshape(-1, c_size[ck])
            B = np.transpose(gb[ck][rb], perm_b).reshape(c_size[ck], -1)
            C = A @ B
            if np.any(C):
                out[ra + rb] = C.reshape(ra_shape[ra] + rb_shape[rb])
            continue

        ro_a, n = _offsets(rks_a, {rk: math.prod(s) for rk, s in ra_shape.items()})
        co, m = _offsets(cks, c_size)
        ro_b, p = _offsets(rks_b, {rk: math.prod(s) for rk, s in rb_shape.items()})
        A = np.zeros((n, m), dtype=a.dtype)
        B = np.zeros((m, p), dtype=b.dtype)
        for ck in cks:
            c0, cs = co[ck], c_size[ck]
            for rk, blk in ga[ck].items():
                r0 = ro_a[rk]
                A[r0 : r0 + blk.size // cs, c0 : c0 + cs] = np.transpose(blk, perm_a).reshape(-1, cs)
            for rk, blk in gb[ck].items():
                r0 = ro_b[rk]
                B[c0 : c0 + cs, r0 : r0 + blk.size // cs] = np.transpose(blk, perm_b).reshape(cs, -1)
        C = A @ B
        for ra in rks_a:
            x0, xs = ro_a[ra], math.prod(ra_shape[ra])
            for rb in rks_b:
                y0, ys = ro_b[rb], math.prod(rb_shape[rb])
                blk = C[x0 : x0 + xs, y0 : y0 + ys]
                if np.any(blk):
                    out[ra + rb] = blk.reshape(ra_shape[ra] + rb_shape[rb])

    indices = [ia[i] for i in free_a] + [ib[i] for i in free_b]
    return BlockSparseTensor(
        g, indices, g.add(a.total_charge, b.total_charge), out, dtype=dtype, check=False
    )


def _offsets(keys, sizes):
    offs, o = {}, 0
    for k in keys:
        offs[k] = o
        o += sizes[k]
    return offs, o


def outer(a: BlockSparseTensor, b: BlockSparseTensor) -> BlockSparseTensor:
    return _tensordot(a, b, [], [])


def trace_scalar(t: BlockSparseTensor):
    """Value of a tensor with no legs (or only size-1 legs)."""
    if any(ix.size != 1 for ix in t.indices):
        raise ValueError("Tensor is not a scalar.")
    if not t.blocks:
        return t.dtype.type(0)
    (blk,) = t.blocks.values()
    return blk.reshape(()).item() if blk.ndim else blk.item()


# ---------------------------------------------------------------------- #
# fusing


def fuse_indices(t: BlockSparseTensor, groups: Sequence[Sequence[int]]) -> BlockSparseTensor:
    """Fuse each group of legs into a single leg.

    ``groups`` must partition ``range(t.ndim)``; the tensor is first
    transposed so the groups are contiguous.  Each fused leg has signature
    ``+`` and charge equal to the signed sum of its constituents.  Inside a
    fused sector the constituent charge combinations are laid out in
    lexicographic order, each combination row-major.  ``unfuse_indices``
    inverts this exactly.
    """
    groups = [list(gr) for gr in groups]
    if any(len(gr) == 0 for gr in groups):
        raise ValueError("Cannot fuse an empty group of indices.")
    perm = [p for gr in groups for p in gr]
    _check_perm(perm, t.ndim)
    g = t.group

    layouts = []
    new_indices = []
    for gr in groups:
        subs = [t.indices[p] for p in gr]
        if len(gr) == 1:
            layouts.append(None)
            new_indices.append(subs[0])
            continue
        fs = fused_sectors(g, subs)
        layout = {}
        sectors = []
        for q, combos in fs.items():
            o = 0
            for charges, d in combos:
                layout[charges] = (q, o, d)
                o += d
            sectors.append((q, o))
        layouts.append(layout)
        new_indices.append(Index(tuple(sectors), 1, tuple(ix.id for ix in subs)))

    blocks = {}
    for key, blk in t.blocks.items():
        blk = np.transpose(blk, perm)
        new_key, where, shape = [], [], []
        for gr, layout, nix in zip(groups, layouts, new_indices):
            sub = tuple(key[p] for p in gr)
            if layout is None:
                new_key.append(sub[0])
                where.append(slice(None))
                shape.append(nix.dim(sub[0]))
            else:
                q, o, d = layout[sub]
                new_key.append(q)
                where.append(slice(o, o + d))
                shape.append(d)
        new_key = tuple(new_key)
        if new_key not in blocks:
            blocks[new_key] = np.zeros(
                tuple(nix.dim(q) for nix, q in zip(new_indices, new_key)), dtype=t.dtype
            )
        blocks[new_key][tuple(where)] = blk.reshape(shape)
    out = BlockSparseTensor(g, new_indices, t.total_charge, blocks, dtype=t.dtype, check=False)
    out.fuse_info = (tuple(perm), tuple(tuple(gr) for gr in groups), tuple(t.indices), tuple(layouts))
    return out


def unfuse_indices(t: BlockSparseTensor) -> BlockSparseTensor:
    """Invert :func:`fuse_indices` (requires ``t.fuse_info``)."""
    if t.fuse_info is None:
        raise ValueError("Tensor carries no fuse information.")
    perm, groups, orig, layouts = t.fuse_info
    inv = {}
    for ax, layout in enumerate(layouts):
        if layout is not None:
            inv[ax] = {}
            for charges, (q, o, d) in layout.items():
                inv[ax].setdefault(q, []).append((charges, o, d))
    permuted = [orig[p] for p in perm]
    blocks = {}
    for key, blk in t.blocks.items():
        choices = []
        for ax, (gr, layout) in enumerate(zip(groups, layouts)):
            if layout is None:
                choices.append([((key[ax],), slice(None))])
            else:
                choices.append([(ch, slice(o, o + d)) for ch, o, d in inv[ax].get(key[ax], [])])
        for combo in itertools.product(*choices):
            sub = blk[tuple(sl for _, sl in combo)]
            if not np.any(sub):
                continue
            pkey = tuple(c for ch, _ in combo for c in ch)
            shape = tuple(ix.dim(c) for ix, c in zip(permuted, pkey))
            blocks[pkey] = sub.reshape(shape)
    inv_perm = np.argsort(perm)
    out = BlockSparseTensor(t.group, permuted, t.total_charge, blocks, dtype=t.dtype, check=False)
    return transpose(out, inv_perm)


# ---------------------------------------------------------------------- #
# decompositions


def _matrices(t: BlockSparseTensor, nrow: int):
    """Group blocks of ``t`` (rows = first ``nrow`` legs) into one dense
    matrix per fused row charge.

    Returns ``{r: (row_keys, row_offsets, col_keys, col_offsets, M)}``.
    """
    g = t.group
    rsigns = t.signs[:nrow]
    by_r = defaultdict(lambda: (dict(), dict()))
    for key, blk in t.blocks.items():
        rk, ck = key[:nrow], key[nrow:]
        r = g.fuse(rk, rsigns) if nrow else g.identity
        rows, cols = by_r[r]
        rows.setdefault(rk, math.prod(blk.shape[:nrow]))
        cols.setdefault(ck, math.prod(blk.shape[nrow:]))
    out = {}
    for r, (rows, cols) in sorted(by_r.items()):
        rks, cks = sorted(rows), sorted(cols)
        ro, n = _offsets(rks, rows)
        co, m = _offsets(cks, cols)
        M = np.zeros((n, m), dtype=t.dtype)
        out[r] = (rks, ro, rows, cks, co, cols, M)
    for key, blk in t.blocks.items():
        rk, ck = key[:nrow], key[nrow:]
        r = g.fuse(rk, rsigns) if nrow else g.identity
        rks, ro, rows, cks, co, cols, M = out[r]
        M[ro[rk] : ro[rk] + rows[rk], co[ck] : co[ck] + cols[ck]] = blk.reshape(rows[rk], cols[ck])
    return out


def _split_positions(t, row_positions):
    rows = [int(p) for p in row_positions]
    cols = [p for p in range(t.ndim) if p not in rows]
    if not rows or not cols:
        raise ValueError("Row/column split must leave both sides non-empty.")
    if len(set(rows)) != len(rows) or any(not 0 <= p < t.ndim for p in rows):
        raise ValueError(f"Invalid row positions {row_positions}.")
    return rows, cols


def _unpack_left(t, r, rks, ro, rows, Q, bond_charge, nrow, new_dim):
    blocks = {}
    for rk in rks:
        blk = Q[ro[rk] : ro[rk] + rows[rk], :]
        if np.any(blk):
            shape = tuple(ix.dim(c) for ix, c in zip(t.indices[:nrow], rk)) + (new_dim,)
            blocks[rk + (bond_charge,)] = blk.reshape(shape)
    return blocks


def _unpack_right(t, cks, co, cols, R, bond_charge, nrow, new_dim):
    blocks = {}
    for ck in cks:
        blk = R[:, co[ck] : co[ck] + cols[ck]]
        if np.any(blk):
            shape = (new_dim,) + tuple(ix.dim(c) for ix, c in zip(t.indices[nrow:], ck))
            blocks[(bond_charge,) + ck] = blk.reshape(shape)
    return blocks


def qr(t: BlockSparseTensor, row_positions, bond_id=None):
    """Sector-wise QR decomposition ``t = Q R``.

    ``Q`` has the row legs (in the given order) followed by a new leg with
    signature ``-``; ``R`` has the matching ``+`` leg followed by the
    remaining legs in their original order.  ``Q`` carries the total
    charge of ``t`` and ``R`` the identity charge.
    """
    rows, cols = _split_positions(t, row_positions)
    t = transpose(t, rows + cols)
    nrow = len(rows)
    g = t.group
    bond_id = new_bond_id() if bond_id is None else bond_id
    q_blocks, r_blocks, sectors = {}, {}, []
    for r, (rks, ro, rsz, cks, co, csz, M) in _matrices(t, nrow).items():
        Q, R = np.linalg.qr(M)
        k = Q.shape[1]
        bc = g.sub(r, t.total_charge)
        sectors.append((bc, k))
        q_blocks.update(_unpack_left(t, r, rks, ro, rsz, Q, bc, nrow, k))
        r_blocks.update(_unpack_right(t, cks, co, csz, R, bc, nrow, k))
    bond = Index(tuple(sectors), -1, bond_id)
    Qt = BlockSparseTensor(g, t.indices[:nrow] + (bond,), t.total_charge, q_blocks, dtype=t.dtype, check=False)
    Rt = BlockSparseTensor(g, (bond.dual(),) + t.indices[nrow:], g.identity, r_blocks, dtype=t.dtype, check=False)
    return Qt, Rt


def _fix_signs(U, Vh):
    """Make the largest-magnitude entry of each left vector real positive."""
    if U.size == 0:
        return U, Vh
    idx = np.argmax(np.abs(U), axis=0)
    piv = U[idx, np.arange(U.shape[1])]
    phase = piv / np.abs(piv)
    phase[np.abs(piv) == 0] = 1
    return U * phase.conj(), Vh * phase[:, None]


def svd_truncate(t: BlockSparseTensor, row_positions, chi=None, cutoff=SVD_RANK_CUTOFF, bond_id=None):
    """Sector-wise SVD truncated to the ``chi`` largest singular values
    pooled over all charge sectors.

    Returns ``(U, S, Vh, discarded_weight)`` where ``S`` maps each kept
    bond charge to its (descending) singular values.  ``U`` carries the
    total charge of ``t``; ``S`` and ``Vh`` are neutral.  Ties are broken by
    bond charge then position within the sector.  Values below
    ``cutoff * max(S)`` are always dropped.
    """
    if chi is not None and chi < 1:
        raise ValueError(f"chi must be >= 1, got {chi}.")
    rows, cols = _split_positions(t, row_positions)
    t = transpose(t, rows + cols)
    nrow = len(rows)
    g = t.group
    bond_id = new_bond_id() if bond_id is None else bond_id

    parts = {}
    pool = []
    for r, (rks, ro, rsz, cks, co, csz, M) in _matrices(t, nrow).items():
        U, s, Vh = np.linalg.svd(M, full_matrices=False)
        U, Vh = _fix_signs(U, Vh)
        bc = g.sub(r, t.total_charge)
        parts[bc] = (r, rks, ro, rsz, cks, co, csz, U, s, Vh)
        pool.extend((-float(v), bc, i) for i, v in enumerate(s))

    pool.sort()
    total = sum(v * v for v, _, _ in pool)
    smax = -pool[0][0] if pool else 0.0
    keep = [e for e in pool if -e[0] > cutoff * smax and -e[0] > 0]
    if chi is not None:
        keep = keep[:chi]
    nkeep = defaultdict(int)
    for _, bc, _ in keep:
        nkeep[bc] += 1
    kept_w = sum(v * v for v, _, _ in keep)
    discarded = 0.0 if total == 0 else max(0.0, (total - kept_w) / total)

    u_blocks, v_blocks, S, sectors = {}, {}, {}, []
    for bc in sorted(nkeep):
        k = nkeep[bc]
        r, rks, ro, rsz, cks, co, csz, U, s, Vh = parts[bc]
        S[bc] = s[:k].copy()
        sectors.append((bc, k))
        u_blocks.update(_unpack_left(t, r, rks, ro, rsz, U[:, :k], bc, nrow, k))
        v_blocks.update(_unpack_right(t, cks, co, csz, Vh[:k, :], bc, nrow, k))
    bond = Index(tuple(sectors), -1, bond_id)
    Ut = BlockSparseTensor(g, t.indices[:nrow] + (bond,), t.total_charge, u_blocks, dtype=t.dtype, check=False)
    Vt = BlockSparseTensor(g, (bond.dual(),) + t.indices[nrow:], g.identity, v_blocks, dtype=t.dtype, check=False)
    return Ut, S, Vt, discarded


def diag_tensor(group, index: Index, values: dict, dtype=float) -> BlockSparseTensor:
    """Neutral 2-leg diagonal tensor on ``(index, index.dual())``."""
    group = get_group(group) if isinstance(group, str) else group
    blocks = {}
    for c, d in index.sectors:
        v = np.asarray(values[c], dtype=dtype)
        if np.any(v):
            blocks[(c, c)] = np.diag(v)
    return BlockSparseTensor(group, (index, index.dual()), group.identity, blocks, dtype=dtype, check=False)


def identity(group, index: Index, dtype=float) -> BlockSparseTensor:
    return diag_tensor(group, index, {c: np.ones(d) for c, d in index.sectors}, dtype=dtype)


# ---------------------------------------------------------------------- #
# serialization


def _enc_charge(c):
    return list(c) if isinstance(c, tuple) else c


def _dec_charge(group, c):
    return group.validate(tuple(c) if isinstance(c, list) else c)


def _enc_id(i):
    if isinstance(i, tuple):
        return {"tuple": [_enc_id(x) for x in i]}
    return i


def _dec_id(i):
    if isinstance(i, dict) and "tuple" in i:
        return tuple(_dec_id(x) for x in i["tuple"])
    return i


def index_to_dict(ix: Index) -> dict:
    return {
        "sectors": [[_enc_charge(c), d] for c, d in ix.sectors],
        "sign": ix.sign,
        "id": _enc_id(ix.id),
    }


def index_from_dict(group, d) -> Index:
    return Index(tuple((_dec_charge(group, c), n) for c, n in d["sectors"]), d["sign"], _dec_id(d["id"]))


def tensor_to_dict(t: BlockSparseTensor) -> dict:
    cplx = np.iscomplexobj(np.empty(0, dtype=t.dtype))
    blocks = []
    for key in sorted(t.blocks):
        blk = np.ascontiguousarray(t.blocks[key])
        flat = blk.ravel()
        vals = [[float(x.real), float(x.imag)] for x in flat] if cplx else [float(x) for x in flat]
        blocks.append({"key": [_enc_charge(c) for c in key], "shape": list(blk.shape), "values": vals})
    return {
        "format": FORMAT_TAG,
        "group": t.group.kind,
        "dtype": "complex128" if cplx else "float64",
        "total_charge": _enc_charge(t.total_charge),
        "indices": [index_to_dict(ix) for ix in t.indices],
        "blocks": blocks,
    }


def tensor_from_dict(d: dict) -> BlockSparseTensor:
    if d.get("format") != FORMAT_TAG:
        raise ValueError(f"Unknown tensor format {d.get('format')!r}.")
    group = get_group(d["group"])
    dtype = np.dtype(d["dtype"])
    indices = [index_from_dict(group, ix) for ix in d["indices"]]
    blocks = {}
    for b in d["blocks"]:
        key = tuple(_dec_charge(group, c) for c in b["key"])
        vals = np.asarray(b["values"], dtype=float)
        if dtype.kind == "c":
            vals = vals[..., 0] + 1j * vals[..., 1] if vals.size else vals.astype(complex)
        blocks[key] = vals.reshape(b["shape"]).astype(dtype)
    return BlockSparseTensor(group, indices, _dec_charge(group, d["total_charge"]), blocks, dtype=dtype)
