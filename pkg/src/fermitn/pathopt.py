"""Contraction-tree search.

A network is described to this module only through its graph: ``legs``
maps each node id to the list of its bond ids and ``sizes`` maps each
bond id to its total dimension.  Bond ids appearing on one node are open.

A :class:`ContractionTree` is stored in SSA form: leaves get ids
``0..n-1`` and merge ``k`` creates id ``n + k``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

TREE_FORMAT = "fermitn.tree/1"


@dataclass
class SearchParams:
    """Hyperparameters of the randomized greedy search.

    Attributes
    ----------
    trials : int
        Number of greedy runs in :func:`hyper_search`.
    temperature : float
        Scale of the Gumbel noise added to greedy scores (0 = deterministic).
    cost_weight : float
        Blend in ``[0, 1]`` between flops (0) and intermediate size (1).
    chi : int, optional
        Cap on intermediate bond dimensions (compressed cost model).
    seed : int
    """

    trials: int = 1
    temperature: float = 0.0
    cost_weight: float = 0.0
    chi: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1.")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0.")
        if not 0.0 <= self.cost_weight <= 1.0:
            raise ValueError("cost_weight must lie in [0, 1].")
        if self.chi is not None and self.chi < 1:
            raise ValueError("chi must be >= 1.")


@dataclass
class ContractionTree:
    leaves: list
    merges: list
    steps: list = field(default_factory=list)  # per-merge cost annotations
    flops: Optional[int] = None
    peak_memory: Optional[int] = None

    def __post_init__(self):
        self.leaves = list(self.leaves)
        self.merges = [tuple(int(x) for x in m) for m in self.merges]
        self.validate()

    @property
    def n(self):
        return len(self.leaves)

    def validate(self):
        n = self.n
        if len(set(self.leaves)) != n:
            raise ValueError("Repeated leaf in contraction tree.")
        if n and len(self.merges) != n - 1:
            raise ValueError(f"A tree over {n} leaves needs {n - 1} merges, got {len(self.merges)}.")
        alive = set(range(n))
        for k, (a, b) in enumerate(self.merges):
            if a == b or a not in alive or b not in alive:
                raise ValueError(f"Malformed merge {k}: ({a}, {b}).")
            alive -= {a, b}
            alive.add(n + k)
        return self

    def node_pairs(self) -> list:
        """Merges as pairs of network node ids; each merged node keeps the
        id of its first argument (as :meth:`TensorNetwork.contract_pair`)."""
        rep = {i: leaf for i, leaf in enumerate(self.leaves)}
        out = []
        for k, (a, b) in enumerate(self.merges):
            out.append((rep[a], rep[b]))
            rep[self.n + k] = rep[a]
        return out

    def to_nested(self):
        node = {i: leaf for i, leaf in enumerate(self.leaves)}
        for k, (a, b) in enumerate(self.merges):
            node[self.n + k] = (node.pop(a), node.pop(b))
        (root,) = node.values()
        return root

    @classmethod
    def from_nested(cls, nested) -> "ContractionTree":
        leaves, merges = [], []

        def collect(x):
            if isinstance(x, tuple):
                if len(x) != 2:
                    raise ValueError("Nested tree nodes must be pairs.")
                collect(x[0])
                collect(x[1])
            else:
                leaves.append(x)

        collect(nested)
        pos = {leaf: i for i, leaf in enumerate(leaves)}
        n = len(leaves)

        def build(x):
            if isinstance(x, tuple):
                a, b = build(x[0]), build(x[1])
                merges.append((a, b))
                return n + len(merges) - 1
            return pos[x]

        build(nested)
        return cls(leaves, merges)

    def to_dict(self) -> dict:
        from .blocksparse import _enc_id

        return {
            "format": TREE_FORMAT,
            "leaves": [_enc_id(x) for x in self.leaves],
            "merges": [list(m) for m in self.merges],
            "flops": self.flops,
            "peak_memory": self.peak_memory,
            "steps": self.steps,
        }

    @classmethod
    def from_dict(cls, d) -> "ContractionTree":
        from .blocksparse import _dec_id

        if d.get("format") != TREE_FORMAT:
            raise ValueError(f"Unknown tree format {d.get('format')!r}.")
        t = cls([_dec_id(x) for x in d["leaves"]], d["merges"], d.get("steps") or [])
        t.flops, t.peak_memory = d.get("flops"), d.get("peak_memory")
        return t


# ---------------------------------------------------------------------- #
# cost model


class _State:
    """Current tensors of a (partial) contraction, described by their
    groups of bonds to each neighbour and their open legs."""

    def __init__(self, legs, sizes, chi=None):
        self.chi = chi
        self.sizes = sizes
        owners: dict = {}
        for nid, ls in legs.items():
            for b in ls:
                owners.setdefault(b, []).append(nid)
        for b, o in owners.items():
            if len(o) > 2:
                raise ValueError(f"Bond {b!r} joins more than two nodes.")
            if b not in sizes:
                raise ValueError(f"No size given for bond {b!r}.")
        self.open = {n: 1 for n in legs}
        self.nbr = {n: {} for n in legs}
        for b, o in owners.items():
            if len(o) == 1:
                self.open[o[0]] *= sizes[b]
            else:
                u, v = o
                self.nbr[u][v] = self.nbr[u].get(v, 1) * sizes[b]
                self.nbr[v][u] = self.nbr[v].get(u, 1) * sizes[b]

    def cap(self, d):
        return d if self.chi is None else min(d, self.chi)

    def size(self, n):
        s = self.open[n]
        for d in self.nbr[n].values():
            s *= self.cap(d)
        return s

    def pair_flops(self, a, b):
        shared = self.cap(self.nbr[a].get(b, 1))
        return self.size(a) * self.size(b) // shared

    def merged_size(self, a, b):
        s = self.open[a] * self.open[b]
        na, nb = self.nbr[a], self.nbr[b]
        for w in set(na) | set(nb):
            if w in (a, b):
                continue
            s *= self.cap(na.get(w, 1) * nb.get(w, 1))
        return s

    def merge(self, a, b, new):
        na, nb = self.nbr.pop(a), self.nbr.pop(b)
        self.open[new] = self.open.pop(a) * self.open.pop(b)
        out = {}
        for w in set(na) | set(nb):
            if w in (a, b):
                continue
            d = na.get(w, 1) * nb.get(w, 1)
            out[w] = d
            self.nbr[w].pop(a, None)
            self.nbr[w].pop(b, None)
            self.nbr[w][new] = d
        self.nbr[new] = out


def _leaf_check(legs, tree: ContractionTree):
    if set(tree.leaves) != set(legs):
        raise ValueError("Tree leaves do not match the graph nodes.")


def tree_cost(legs, sizes, tree: ContractionTree, chi=None, annotate=False):
    """``(flops, peak_memory)`` of contracting along ``tree``.

    Flops are the product of all distinct leg dimensions of each pairwise
    contraction; peak memory is the largest total size of live tensors
    (inputs still alive plus the new output).  With ``chi`` every bond
    between two current tensors is capped at ``chi``.  Python ints are used
    throughout, so there is no overflow.
    """
    _leaf_check(legs, tree)
    st = _State(legs, sizes, chi)
    ids = {i: leaf for i, leaf in enumerate(tree.leaves)}
    live = {leaf: st.size(leaf) for leaf in tree.leaves}
    total = sum(live.values())
    flops = 0
    peak = total
    steps = []
    for k, (a, b) in enumerate(tree.merges):
        u, v = ids[a], ids[b]
        f = st.pair_flops(u, v)
        new = ("_m", k)
        st.merge(u, v, new)
        s = st.size(new)
        flops += f
        peak = max(peak, total + s)
        total += s - live.pop(u) - live.pop(v)
        live[new] = s
        ids[tree.n + k] = new
        if annotate:
            steps.append({"step": k, "merge": [a, b], "flops": f, "size": s, "live": total})
    if annotate:
        tree.steps, tree.flops, tree.peak_memory = steps, flops, peak
    return flops, peak


# ---------------------------------------------------------------------- #
# search


def greedy_tree(legs, sizes, params: Optional[SearchParams] = None, rng=None) -> ContractionTree:
    """Randomized greedy contraction tree.

    At each step every pair of connected tensors is scored by
    ``(1-w) log2(flops) + w log2(size_out)`` minus ``temperature`` times
    Gumbel noise, and the lowest score is merged (ties broken by output
    size, then node order).  When no connected pairs
    remain the two smallest tensors are joined by an outer product.
    """
    params = params or SearchParams()
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    nodes = list(legs)
    n = len(nodes)
    if n == 0:
        raise ValueError("Empty graph.")
    st = _State(legs, sizes, params.chi)
    ssa = {leaf: i for i, leaf in enumerate(nodes)}
    order = {leaf: i for i, leaf in enumerate(nodes)}
    merges = []
    w = params.cost_weight
    T = params.temperature
    for k in range(n - 1):
        best, best_pair = None, None
        cands = []
        for a in st.nbr:
            for b in st.nbr[a]:
                if order[a] < order[b]:
                    cands.append((a, b))
        cands.sort(key=lambda p: (order[p[0]], order[p[1]]))
        if cands:
            for a, b in cands:
                f = math.log2(st.pair_flops(a, b))
                s = math.log2(st.merged_size(a, b))
                score = (1 - w) * f + w * s
                if T > 0:
                    score -= T * rng.gumbel()
                # ties go to the smaller output
                if best is None or (score, s) < best:
                    best, best_pair = (score, s), (a, b)
        else:
            live = sorted(st.nbr, key=lambda x: (st.size(x), order[x]))
            best_pair = (live[0], live[1])
            if order[best_pair[0]] > order[best_pair[1]]:
                best_pair = best_pair[::-1]
        a, b = best_pair
        new = ("_g", k)
        st.merge(a, b, new)
        order[new] = n + k
        merges.append((ssa.pop(a), ssa.pop(b)))
        ssa[new] = n + k
    tree = ContractionTree(nodes, merges)
    tree_cost(legs, sizes, tree, chi=params.chi, annotate=True)
    return tree


def hyper_search(legs, sizes, params: Optional[SearchParams] = None, workers: int = 1) -> ContractionTree:
    """Best of ``params.trials`` greedy runs under :func:`tree_cost`.

    Trial 0 is :func:`greedy_tree` with ``params`` as given; later trials
    draw a temperature in ``[0, 1]`` and a cost weight in ``[0, 0.5]``
    from a seeded stream.  Trials are ranked by ``(flops, peak_memory)``
    with the earlier trial winning ties, so adding trials never returns a
    worse tree.
    """
    params = params or SearchParams()
    ss = np.random.SeedSequence(params.seed)
    draws = np.random.default_rng(ss.spawn(1)[0])
    configs = [params]
    for t in range(1, params.trials):
        temp = float(draws.uniform(0.0, 1.0))
        wt = float(draws.uniform(0.0, 0.5))
        configs.append(SearchParams(1, temp, wt, params.chi, int(draws.integers(2**31))))

    def run(p):
        tree = greedy_tree(legs, sizes, p)
        return (tree.flops, tree.peak_memory), tree

    if workers > 1 and len(configs) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, configs))
    else:
        results = [run(p) for p in configs]
    best = results[0]
    for r in results[1:]:
        if r[0] < best[0]:
            best = r
    return best[1]


def linear_tree(legs) -> ContractionTree:
    """Fixed left-to-right order ``((((0 1) 2) 3) ...)``."""
    nodes = list(legs)
    n = len(nodes)
    merges = []
    cur = 0
    for i in range(1, n):
        merges.append((cur, i))
        cur = n + i - 1
    return ContractionTree(nodes, merges)


def random_tree(legs, sizes=None, seed=None, connected=True) -> ContractionTree:
    """Uniformly random merge sequence; with ``connected`` only pairs
    sharing a bond are merged while any exist."""
    rng = np.random.default_rng(seed)
    nodes = list(legs)
    n = len(nodes)
    st = _State(legs, sizes or {b: 2 for ls in legs.values() for b in ls})
    ssa = {leaf: i for i, leaf in enumerate(nodes)}
    order = {leaf: i for i, leaf in enumerate(nodes)}
    merges = []
    for k in range(n - 1):
        cands = [(a, b) for a in st.nbr for b in st.nbr[a] if order[a] < order[b]] if connected else []
        if not cands:
            live = sorted(st.nbr, key=lambda x: order[x])
            cands = list(itertools.combinations(live, 2))
        cands.sort(key=lambda p: (order[p[0]], order[p[1]]))
        a, b = cands[int(rng.integers(len(cands)))]
        if rng.random() < 0.5:
            a, b = b, a
        new = ("_r", k)
        st.merge(a, b, new)
        order[new] = n + k
        merges.append((ssa.pop(a), ssa.pop(b)))
        ssa[new] = n + k
    return ContractionTree(nodes, merges)


def optimal_tree(legs, sizes, max_nodes=10) -> ContractionTree:
    """Flop-optimal tree (exact cost model) by dynamic programming over
    subsets of nodes.  The cost of a subset's best tree does not depend on
    how the rest is contracted, so the recursion is exact."""
    nodes = list(legs)
    n = len(nodes)
    if n > max_nodes:
        raise ValueError(f"Exhaustive search limited to {max_nodes} nodes.")
    owners: dict = {}
    for i, nid in enumerate(nodes):
        for b in legs[nid]:
            owners.setdefault(b, []).append(i)

    size_cache: dict = {}

    def size(mask):
        if mask in size_cache:
            return size_cache[mask]
        s = 1
        groups: dict = {}
        for b, o in owners.items():
            inside = [i for i in o if mask >> i & 1]
            if len(inside) == 1:
                if len(o) == 1:
                    s *= sizes[b]
                else:
                    other = o[0] if o[1] == inside[0] else o[1]
                    groups[other] = groups.get(other, 1) * sizes[b]
        for d in groups.values():
            s *= d
        size_cache[mask] = s
        return s

    def shared(ma, mb):
        d = 1
        for b, o in owners.items():
            if len(o) == 2 and ((ma >> o[0] & 1 and mb >> o[1] & 1) or (ma >> o[1] & 1 and mb >> o[0] & 1)):
                d *= sizes[b]
        return d

    best = {1 << i: (0, None) for i in range(n)}
    full = (1 << n) - 1
    for mask in range(1, full + 1):
        if mask in best:
            continue
        low = mask & -mask
        sub = (mask - 1) & mask
        cur = None
        while sub:
            if sub & low:
                other = mask ^ sub
                if other:
                    c = best[sub][0] + best[other][0] + size(sub) * size(other) // shared(sub, other)
                    if cur is None or c < cur[0]:
                        cur = (c, (sub, other))
            sub = (sub - 1) & mask
        best[mask] = cur

    merges = []
    counter = [n]

    def build(mask):
        if best[mask][1] is None:
            return mask.bit_length() - 1
        a, b = best[mask][1]
        ia, ib = build(a), build(b)
        merges.append((ia, ib))
        counter[0] += 1
        return counter[0] - 1

    build(full)
    tree = ContractionTree(nodes, merges)
    tree_cost(legs, sizes, tree, annotate=True)
    return tree
