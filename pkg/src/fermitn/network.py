"""Fermionic tensor networks on arbitrary graphs.

Three modes are supported:

``"local"``
    every internal bond carries an arrow ``(tail, head)`` saying which of
    its two tensors stands to the left when that bond is contracted.  All
    tensors must be even (odd ones are evenized with a dummy leg).
``"global"``
    every tensor has an integer position and the network is the ordered
    product of its tensors; arrows are implied (lower -> higher position).
``"bosonic"``
    plain tensors, no signs at all.

Bonds are identified by the ``id`` of the matching legs: an id appearing on
two tensors is an internal bond, on one tensor an open leg.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Hashable, Optional

import numpy as np

from . import blocksparse as bs
from . import fermi as fm
from .blocksparse import BlockSparseTensor
from .fermi import FermionTensor
from .symmetry import Index, get_group

NETWORK_FORMAT = "fermitn.network/1"
MODES = ("local", "global", "bosonic")


class TensorNetwork:
    """A graph of fermionic tensors.

    Parameters
    ----------
    mode : {"local", "global", "bosonic"}
    """

    def __init__(self, mode="local"):
        if mode not in MODES:
            raise ValueError(f"Unknown mode {mode!r}.")
        self.mode = mode
        self.nodes: dict = {}
        self.arrows: dict = {}
        self.output_order: Optional[list] = None
        self._uid = 0

    # ------------------------------------------------------------------ #
    # construction / queries

    def add(self, nid, tensor, position=None):
        """Add a tensor. In local mode, bonds formed with existing tensors
        get the arrow ``existing -> new`` unless set later with
        :meth:`set_arrow`."""
        if nid in self.nodes:
            raise ValueError(f"Node {nid!r} already present.")
        t = fm.as_fermion(tensor)
        if position is not None:
            t = t.with_core(t.core, position=position)
        elif self.mode == "global":
            t = t.with_core(t.core, position=self._next_position())
        bonds = self.ind_map()
        for bid in t.ids:
            if bid is None:
                raise ValueError("Every leg of a network tensor needs an id.")
            if bid in bonds:
                owners = bonds[bid]
                if len(owners) >= 2:
                    raise ValueError(f"Bond {bid!r} would join more than two tensors.")
                self.arrows[bid] = (owners[0], nid)
        self.nodes[nid] = t
        return nid

    def _next_position(self):
        ps = [t.position for t in self.nodes.values() if t.position is not None]
        return max(ps) + 1 if ps else 0

    def set_arrow(self, bid, tail, head):
        owners = self.ind_map()[bid]
        if set(owners) != {tail, head}:
            raise ValueError(f"Bond {bid!r} does not join {tail!r} and {head!r}.")
        self.arrows[bid] = (tail, head)

    def copy(self) -> "TensorNetwork":
        new = TensorNetwork(self.mode)
        new.nodes = dict(self.nodes)
        new.arrows = dict(self.arrows)
        new.output_order = None if self.output_order is None else list(self.output_order)
        new._uid = self._uid
        return new

    def ind_map(self) -> dict:
        out: dict = {}
        for nid, t in self.nodes.items():
            for bid in t.ids:
                out.setdefault(bid, []).append(nid)
        return out

    def open_ids(self) -> list:
        """Open legs in canonical order: node insertion order, then leg order."""
        if self.output_order is not None:
            return list(self.output_order)
        im = self.ind_map()
        return [bid for t in self.nodes.values() for bid in t.ids if len(im[bid]) == 1]

    def freeze_output(self):
        if self.output_order is None:
            self.output_order = self.open_ids()

    def shared(self, u, v) -> list:
        vt = set(self.nodes[v].ids)
        return [b for b in self.nodes[u].ids if b in vt]

    def neighbors(self, u) -> dict:
        """``{neighbor: [shared bond ids]}``."""
        im = self.ind_map()
        out: dict = {}
        for b in self.nodes[u].ids:
            for w in im[b]:
                if w != u:
                    out.setdefault(w, []).append(b)
        return out

    def bond_size(self, bid) -> int:
        for t in self.nodes.values():
            if bid in t.ids:
                return t.indices[t.axis(bid)].size
        raise KeyError(bid)

    def graph(self):
        """``(legs, sizes)`` for contraction-path search: ``legs`` maps node
        id to its bond ids, ``sizes`` maps bond id to total dimension."""
        legs = {nid: list(t.ids) for nid, t in self.nodes.items()}
        sizes = {}
        for t in self.nodes.values():
            for ix in t.indices:
                sizes[ix.id] = ix.size
        return legs, sizes

    def arrow(self, bid):
        if self.mode == "global":
            a, b = self.ind_map()[bid]
            pa, pb = self.nodes[a].position, self.nodes[b].position
            return (a, b) if pa < pb else (b, a)
        return self.arrows.get(bid)

    def positions(self) -> dict:
        return {nid: t.position for nid, t in self.nodes.items()}

    def fresh_id(self, prefix="_c"):
        self._uid += 1
        return f"{prefix}{self._uid}"

    def validate(self):
        im = self.ind_map()
        for bid, owners in im.items():
            if len(owners) > 2:
                raise ValueError(f"Bond {bid!r} joins {len(owners)} tensors.")
            if len(owners) == 2:
                a, b = owners
                ia = self.nodes[a].indices[self.nodes[a].axis(bid)]
                ib = self.nodes[b].indices[self.nodes[b].axis(bid)]
                if ia.sectors != ib.sectors or ia.sign == ib.sign:
                    raise ValueError(f"Bond {bid!r} legs are not dual to each other.")
                if self.mode == "local" and set(self.arrows.get(bid, ())) != {a, b}:
                    raise ValueError(f"Bond {bid!r} has no valid arrow.")
        if self.mode == "local":
            for nid, t in self.nodes.items():
                if t.parity:
                    raise ValueError(f"Node {nid!r} is odd; evenize it for local ordering.")
        if self.mode == "global":
            ps = [t.position for t in self.nodes.values()]
            if None in ps or len(set(ps)) != len(ps):
                raise ValueError("Global ordering needs distinct positions on every tensor.")
        return self

    def __repr__(self):
        return f"TensorNetwork(mode={self.mode}, nodes={len(self.nodes)}, bonds={len(self.arrows)})"

    # ------------------------------------------------------------------ #

    def reverse_arrow(self, bid):
        """Flip the arrow of ``bid`` by absorbing its bond parity (local)."""
        tail, head = self.arrows[bid]
        t = self.nodes[head]
        self.nodes[head] = fm.apply_parity(t, t.axis(bid))
        self.arrows[bid] = (head, tail)

    def _compact_positions(self):
        order = sorted(self.nodes, key=lambda n: self.nodes[n].position)
        for p, nid in enumerate(order):
            t = self.nodes[nid]
            if t.position != p:
                self.nodes[nid] = t.with_core(t.core, position=p)

    def _walk_adjacent(self, left, right):
        """Global mode: move ``right`` leftwards (swap rule) until it sits
        directly after ``left``."""
        pl = self.nodes[left].position
        pr = self.nodes[right].position
        between = sorted(
            (n for n, t in self.nodes.items() if pl < t.position < pr),
            key=lambda n: self.nodes[n].position,
            reverse=True,
        )
        for w in between:
            tw, tr = self.nodes[w], self.nodes[right]
            new_r, new_w = fm.fswap(tw, tr, self.shared(w, right))
            self.nodes[right], self.nodes[w] = new_r, new_w

    def _orient(self, u, v):
        """Prepare ``u`` (left) and ``v`` (right) for contraction, returning
        their tensors with every shared bond oriented ``u -> v``."""
        sh = self.shared(u, v)
        if self.mode == "local":
            for b in sh:
                if self.arrows[b] == (v, u):
                    self.reverse_arrow(b)
        elif self.mode == "global":
            self._walk_adjacent(u, v)
        return sh

    def _left_right(self, u, v):
        if self.mode == "global" and self.nodes[u].position > self.nodes[v].position:
            return v, u
        return u, v

    def contract_pair(self, u, v, keep=None):
        """Contract nodes ``u`` and ``v`` into a single node (id ``keep``,
        default ``u``).  Returns the merged id."""
        if u not in self.nodes or v not in self.nodes:
            raise KeyError(f"Nodes {u!r} / {v!r} not in network.")
        if u == v:
            raise ValueError("Cannot contract a node with itself.")
        self.freeze_output()
        keep = u if keep is None else keep
        left, right = self._left_right(u, v)
        sh = self._orient(left, right)
        tl, tr = self.nodes[left], self.nodes[right]
        axes = [(tl.axis(b), tr.axis(b)) for b in sh]
        if self.mode == "bosonic":
            merged = FermionTensor(bs.contract(tl.core, tr.core, axes), False, tl.position)
        else:
            merged = fm.fcontract(tl, tr, axes)
        del self.nodes[right]
        if left != keep:
            del self.nodes[left]
        self.nodes[keep] = merged
        for b in sh:
            self.arrows.pop(b, None)
        for b, (a, h) in list(self.arrows.items()):
            if a in (u, v) or h in (u, v):
                self.arrows[b] = (keep if a in (u, v) else a, keep if h in (u, v) else h)
        if self.mode == "global":
            self._compact_positions()
        return keep

    # ------------------------------------------------------------------ #

    def _ops_transpose(self, t, perm):
        if self.mode == "bosonic":
            return FermionTensor(bs.transpose(t.core, perm), False, t.position)
        return fm.ftranspose(t, perm)

    def _ops_contract(self, a, b, axes):
        if self.mode == "bosonic":
            return FermionTensor(bs.contract(a.core, b.core, axes), False, a.position)
        return fm.fcontract(a, b, axes)

    def compress_bond(self, u, v, chi, force=False) -> float:
        """Reduce the combined bond between ``u`` and ``v`` to at most
        ``chi`` via QR on both sides and an SVD of the small core.

        All shared bonds are merged into one new bond oriented from the
        left tensor to the right one.  Returns the discarded weight.
        """
        sh = self.shared(u, v) if u != v else []
        if not sh:
            raise ValueError(f"Nodes {u!r} and {v!r} share no bond.")
        if chi is not None and chi < 1:
            raise ValueError("chi must be >= 1.")
        size = math.prod(self.bond_size(b) for b in sh)
        if not force and len(sh) == 1 and (chi is None or size <= chi):
            return 0.0
        left, right = self._left_right(u, v)
        sh = self._orient(left, right)
        tu, tv = self.nodes[left], self.nodes[right]
        X = [i for i, b in enumerate(tu.ids) if b not in sh]
        Y = [i for i, b in enumerate(tv.ids) if b not in sh]
        if not X or not Y:
            return 0.0
        Su = [tu.axis(b) for b in sh]
        Sv = [tv.axis(b) for b in sh]
        bu, bv = self.fresh_id("_qu"), self.fresh_id("_qv")
        new_id = sh[0] if len(sh) == 1 else self.fresh_id("_cb")

        uu = self._ops_transpose(tu, X + Su)
        Qu, Ru = bs.qr(uu.core, range(len(X)), bond_id=bu)
        vv = self._ops_transpose(tv, Y + Sv)
        Qv, Lv = bs.qr(vv.core, range(len(Y)), bond_id=bv)
        Qu, Ru = FermionTensor(Qu), FermionTensor(Ru)
        Qv, Lv = FermionTensor(Qv), FermionTensor(Lv)
        if self.mode != "bosonic":
            # move Lv in front of Qv: they share bv (Lv is even)
            Lv = fm.apply_parity(Lv, 0)
        k = len(sh)
        M = self._ops_contract(Ru, Lv, [(1 + i, 1 + i) for i in range(k)])
        U, S, Vh, dw = bs.svd_truncate(M.core, [0], chi=chi, bond_id=new_id)
        sq = {c: np.sqrt(s) for c, s in S.items()}
        U = FermionTensor(U.scale_leg(1, sq))
        Vh = FermionTensor(Vh.scale_leg(0, sq))
        nu = self._ops_contract(Qu, U, [(len(X), 0)])  # legs X..., n
        nv = self._ops_contract(Vh, Qv, [(1, len(Y))])  # legs n, Y...

        first_u = min(Su)
        order_u = [X.index(i) if i in X else len(X) for i in range(tu.ndim) if i in X or i == first_u]
        nu = self._ops_transpose(nu, order_u)
        first_v = min(Sv)
        order_v = [Y.index(i) + 1 if i in Y else 0 for i in range(tv.ndim) if i in Y or i == first_v]
        nv = self._ops_transpose(nv, order_v)

        self.nodes[left] = FermionTensor(nu.core, tu.dummy_leg and tu.ndim - 1 in X, tu.position)
        self.nodes[right] = FermionTensor(nv.core, tv.dummy_leg and tv.ndim - 1 in Y, tv.position)
        for b in sh:
            self.arrows.pop(b, None)
        self.arrows[new_id] = (left, right)
        return dw

    # ------------------------------------------------------------------ #

    def to_dict(self) -> dict:
        im = self.ind_map()
        bonds = []
        for bid, owners in im.items():
            if len(owners) == 2:
                u, v = owners
                arr = self.arrows.get(bid)
                arrow = None if arr is None else ("u->v" if arr == (u, v) else "v->u")
                bonds.append({"id": bs._enc_id(bid), "u": bs._enc_id(u), "v": bs._enc_id(v), "arrow": arrow})
        return {
            "format": NETWORK_FORMAT,
            "mode": self.mode,
            "nodes": [{"id": bs._enc_id(n), "tensor": fm.to_dict(t)} for n, t in self.nodes.items()],
            "bonds": bonds,
            "output_order": None if self.output_order is None else [bs._enc_id(b) for b in self.output_order],
        }

    @classmethod
    def from_dict(cls, d) -> "TensorNetwork":
        if d.get("format") != NETWORK_FORMAT:
            raise ValueError(f"Unknown network format {d.get('format')!r}.")
        net = cls(d["mode"])
        for nd in d["nodes"]:
            t = fm.from_dict(nd["tensor"])
            net.nodes[bs._dec_id(nd["id"])] = t
        for b in d["bonds"]:
            u, v = bs._dec_id(b["u"]), bs._dec_id(b["v"])
            if b["arrow"] == "u->v":
                net.arrows[bs._dec_id(b["id"])] = (u, v)
            elif b["arrow"] == "v->u":
                net.arrows[bs._dec_id(b["id"])] = (v, u)
        if d.get("output_order") is not None:
            net.output_order = [bs._dec_id(b) for b in d["output_order"]]
        return net.validate()


# ---------------------------------------------------------------------- #
# module level API


def contract_pair(net: TensorNetwork, u, v):
    return net.contract_pair(u, v)


def compress_bond(net: TensorNetwork, u, v, chi) -> float:
    return net.compress_bond(u, v, chi)


@dataclass
class ContractionResult:
    """Outcome of a full contraction.

    ``value`` (scalar or tensor) times ``exp(log_scale)`` is the exact
    (unrescaled) result.
    """

    tensor: Optional[FermionTensor]
    scalar: Optional[complex]
    log_scale: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def value(self):
        if self.scalar is not None:
            return self.scalar * math.exp(self.log_scale)
        return self.tensor * math.exp(self.log_scale)


def _as_tree(net, tree):
    from .pathopt import ContractionTree

    if not isinstance(tree, ContractionTree):
        tree = ContractionTree.from_nested(tree)
    if set(tree.leaves) != set(net.nodes):
        raise ValueError("Contraction tree leaves do not match the network nodes.")
    return tree


def _finish(net: TensorNetwork, order, log_scale, diag) -> ContractionResult:
    (nid,) = list(net.nodes)
    t = net.nodes[nid]
    ids = list(t.ids)
    perm = [ids.index(b) for b in order]
    t = net._ops_transpose(t, perm) if perm != list(range(len(perm))) else t
    if all(ix.size == 1 for ix in t.indices):
        val = bs.trace_scalar(t.core)
        return ContractionResult(None, val, log_scale, diag)
    return ContractionResult(t, None, log_scale, diag)


def _rescale(net, nid, log_scale, rescale):
    if not rescale:
        return log_scale
    t = net.nodes[nid]
    m = t.max_abs()
    if m > 0 and np.isfinite(m):
        net.nodes[nid] = t / m
        log_scale += math.log(m)
    return log_scale


def _pair_flops(ta, tb):
    sizes = [ix.size for ix in ta.indices] + [ix.size for ix in tb.indices if ix.id not in set(ta.ids)]
    return math.prod(sizes)


def _stored(t):
    return sum(b.size for b in t.core.blocks.values())


def contract_all(net: TensorNetwork, tree=None, rescale=True) -> ContractionResult:
    """Contract the whole network following ``tree`` (default: greedy).

    The input network is not modified.  Open legs of the result follow the
    network's canonical open-leg order.
    """
    return contract_approx(net, tree, chi=None, rescale=rescale)


def contract_approx(net: TensorNetwork, tree=None, chi=None, when="early", rescale=True) -> ContractionResult:
    """Contract with bond compression to ``chi``.

    ``when="early"`` compresses every bond of a new intermediate as soon as
    it exceeds ``chi``; ``when="late"`` compresses the bonds of two tensors
    only right before they are contracted together.  ``chi=None`` gives the
    exact contraction.
    """
    if when not in ("early", "late"):
        raise ValueError(f"when must be 'early' or 'late', got {when!r}.")
    if chi is not None and chi < 1:
        raise ValueError("chi must be >= 1.")
    from .pathopt import greedy_tree

    net = net.copy()
    net.freeze_output()
    order = net.open_ids()
    if tree is None:
        legs, sizes = net.graph()
        tree = greedy_tree(legs, sizes)
    pairs = _as_tree(net, tree).node_pairs()
    log_scale = 0.0
    flops = 0
    peak = sum(_stored(t) for t in net.nodes.values())
    discarded = []

    def compress_around(nid, skip=None):
        for w, bonds in net.neighbors(nid).items():
            if w == skip:
                continue
            size = math.prod(net.bond_size(b) for b in bonds)
            if size > chi:
                discarded.append(net.compress_bond(nid, w, chi))

    for u, v in pairs:
        if chi is not None and when == "late":
            compress_around(u, skip=v)
            compress_around(v, skip=u)
        flops += _pair_flops(net.nodes[u], net.nodes[v])
        m = net.contract_pair(u, v)
        peak = max(peak, sum(_stored(t) for t in net.nodes.values()))
        log_scale = _rescale(net, m, log_scale, rescale)
        if chi is not None and when == "early":
            compress_around(m)
    diag = {"flops": flops, "peak_block_memory": peak, "discarded_weights": discarded,
            "total_discarded_weight": float(sum(discarded))}
    return _finish(net, order, log_scale, diag)


# ---------------------------------------------------------------------- #
# conversions


def to_dag(net: TensorNetwork) -> TensorNetwork:
    """Convert a locally ordered network into a globally ordered one.

    Back edges found by depth-first search are reversed (absorbing their
    bond parity) and positions are a topological order of the resulting
    arrows.  The contracted value is unchanged.
    """
    if net.mode != "local":
        raise ValueError("to_dag expects a locally ordered network.")
    new = net.copy()
    new.freeze_output()
    order = list(new.nodes)
    rank = {n: i for i, n in enumerate(order)}
    out_edges = {n: [] for n in order}
    for b in sorted(new.arrows, key=lambda b: (rank[new.arrows[b][0]], rank[new.arrows[b][1]], str(b))):
        tail, head = new.arrows[b]
        out_edges[tail].append((head, b))

    state = {n: 0 for n in order}  # 0 new, 1 on stack, 2 done
    back = []
    for root in order:
        if state[root]:
            continue
        stack = [(root, iter(out_edges[root]))]
        state[root] = 1
        while stack:
            n, it = stack[-1]
            for w, b in it:
                if state[w] == 1:
                    back.append(b)
                elif state[w] == 0:
                    state[w] = 1
                    stack.append((w, iter(out_edges[w])))
                    break
            else:
                state[n] = 2
                stack.pop()
    for b in back:
        new.reverse_arrow(b)
    new.reversed_bonds = list(back)

    indeg = {n: 0 for n in order}
    succ = {n: [] for n in order}
    for b, (tail, head) in new.arrows.items():
        indeg[head] += 1
        succ[tail].append(head)
    import heapq

    heap = [(rank[n], n) for n in order if indeg[n] == 0]
    heapq.heapify(heap)
    pos = 0
    while heap:
        _, n = heapq.heappop(heap)
        t = new.nodes[n]
        new.nodes[n] = t.with_core(t.core, position=pos)
        pos += 1
        for w in succ[n]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(heap, (rank[w], w))
    if pos != len(order):
        raise RuntimeError("Arrow graph still cyclic after reversing back edges.")
    new.mode = "global"
    return new


def conjugate(net: TensorNetwork) -> TensorNetwork:
    """The network of the bra ``<Psi|`` for a ket network ``|Psi>``.

    Each tensor is complex conjugated with dual indices and its leg order
    reversed; tensor order (positions) and arrows are reversed.  The leg
    reversal carries no graded sign: with innermost-first pairing, the
    bra of a ket with legs ``(a, b, ..)`` is the plain reversal.
    """
    new = TensorNetwork(net.mode)
    n = len(net.nodes)
    for nid, t in net.nodes.items():
        core = t.core.conj()
        core = bs.transpose(core, list(range(t.ndim))[::-1])
        pos = None if t.position is None else n - 1 - t.position
        new.nodes[nid] = FermionTensor(core, False, pos)
    new.arrows = {b: (h, a) for b, (a, h) in net.arrows.items()}
    base = net.open_ids()
    new.output_order = base[::-1]
    new._uid = net._uid
    if net.mode == "global":
        new._compact_positions()
    return new


def join_bra_ket(bra: TensorNetwork, ket: TensorNetwork, bra_suffix="*", keep_open=()):
    """Network ``<bra|ket>``: open legs with equal ids are joined with the
    arrow bra -> ket.  Internal bonds and node ids of the bra get
    ``bra_suffix`` appended.  Ids in ``keep_open`` stay open on both sides
    (the bra leg renamed with the suffix)."""
    if bra.mode != ket.mode:
        raise ValueError("Bra and ket must use the same ordering mode.")
    mode = ket.mode
    net = TensorNetwork(mode)
    bra_open = set(bra.open_ids())
    ket_open = set(ket.open_ids())
    keep_open = set(keep_open)
    ren = {}
    for t in bra.nodes.values():
        for b in t.ids:
            if b not in bra_open or b in keep_open or b not in ket_open:
                ren[b] = _suffix(b, bra_suffix)
    nb = len(bra.nodes)
    for nid, t in bra.nodes.items():
        net.nodes[_suffix(nid, bra_suffix)] = FermionTensor(t.core.relabel(ren), False, t.position)
    for nid, t in ket.nodes.items():
        pos = None if t.position is None else t.position + nb
        net.nodes[nid] = FermionTensor(t.core, t.dummy_leg, pos)
    for b, (a, h) in bra.arrows.items():
        net.arrows[ren.get(b, b)] = (_suffix(a, bra_suffix), _suffix(h, bra_suffix))
    for b, (a, h) in ket.arrows.items():
        net.arrows[b] = (a, h)
    im = net.ind_map()
    for b, owners in im.items():
        if len(owners) == 2 and b not in net.arrows:
            u, v = owners
            net.arrows[b] = (u, v) if u in {_suffix(n, bra_suffix) for n in bra.nodes} else (v, u)
    bra_out = [ren.get(b, b) for b in bra.open_ids()]
    ket_out = ket.open_ids()
    net.output_order = [b for b in bra_out if len(im.get(b, ())) == 1] + [
        b for b in ket_out if len(im.get(b, ())) == 1
    ]
    return net


def _suffix(x, s):
    if isinstance(x, str):
        return x + s
    return (x, s)


# ---------------------------------------------------------------------- #
# random networks (testing / benchmarks)


def _rand_sectors(group, size, rng):
    if group.kind == "Z2":
        d0 = (size + 1) // 2
        return ((0, d0), (1, size - d0)) if size > 1 else ((int(rng.integers(2)), 1),)
    if group.kind == "U1":
        charges = [0, 1, -1, 2][: min(size, 3)]
        dims = [1] * len(charges)
        for i in range(size - len(charges)):
            dims[i % len(dims)] += 1
        return tuple(zip(charges, dims))
    charges = [(0, 0), (1, 0), (0, 1), (1, 1)][: min(size, 4)]
    dims = [1] * len(charges)
    for i in range(size - len(charges)):
        dims[i % len(dims)] += 1
    return tuple(zip(charges, dims))


def rand_network(n, group="Z2", seed=None, mode="local", bond_dims=(2, 4), extra_edges=None,
                 open_legs=0.3, odd_fraction=0.5, multi_edges=0.1, dtype=float):
    """Random connected network with mixed parities.

    Odd tensors are evenized (dummy leg) in local mode; in global mode they
    stay odd and positions follow insertion order.
    """
    group = get_group(group) if isinstance(group, str) else group
    rng = np.random.default_rng(seed)
    edges = []
    for i in range(1, n):
        edges.append((int(rng.integers(i)), i))
    if extra_edges is None:
        extra_edges = n // 2
    for _ in range(extra_edges):
        a, b = sorted(rng.choice(n, size=2, replace=False).tolist())
        if (a, b) not in edges or rng.random() < multi_edges:
            edges.append((a, b))
    legs = {i: [] for i in range(n)}
    arrows = {}
    for k, (a, b) in enumerate(edges):
        size = int(rng.integers(bond_dims[0], bond_dims[1] + 1))
        sec = _rand_sectors(group, size, rng)
        bid = f"e{k}"
        sa = 1 if rng.random() < 0.5 else -1
        legs[a].append(Index(sec, sa, bid))
        legs[b].append(Index(sec, -sa, bid))
        arrows[bid] = (a, b) if rng.random() < 0.5 else (b, a)
    for i in range(n):
        if rng.random() < open_legs:
            legs[i].append(Index(_rand_sectors(group, 2, rng), 1, f"o{i}"))
        order = rng.permutation(len(legs[i]))
        legs[i] = [legs[i][j] for j in order]

    net = TensorNetwork(mode)
    for i in range(n):
        want_odd = rng.random() < odd_fraction
        t = None
        for attempt in range(20):
            charge = _rand_charge(group, rng, odd=want_odd)
            t = BlockSparseTensor.random(group, legs[i], charge, seed=rng.integers(2**31), dtype=dtype)
            if t.blocks:
                break
            want_odd = not want_odd if attempt > 10 else want_odd
        if not t.blocks:
            raise RuntimeError("Could not build a non-empty random tensor.")
        ft = FermionTensor(t)
        if mode == "local" and ft.parity:
            ft = fm.evenize(ft, dummy_id=f"d{i}")
        net.nodes[i] = ft if mode != "global" else ft.with_core(ft.core, position=i)
    if mode == "local":
        net.arrows = arrows
    elif mode == "bosonic":
        net.arrows = {}
    else:
        net.arrows = {b: (a, h) if a < h else (h, a) for b, (a, h) in arrows.items()}
    return net.validate()


def _rand_charge(group, rng, odd):
    if group.kind == "Z2":
        return 1 if odd else 0
    if group.kind == "U1":
        return int(rng.choice([-1, 1])) if odd else int(rng.choice([0, 0, 2, -2]))
    if odd:
        return [(1, 0), (0, 1), (-1, 0)][int(rng.integers(3))]
    return [(0, 0), (1, 1), (1, -1)][int(rng.integers(3))]
