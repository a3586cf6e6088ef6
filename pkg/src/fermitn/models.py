"""Lattices, Hubbard terms and imaginary-time gates.

Single-orbital local basis, in this order::

    0 = |0>,  1 = |up> = c+_up|0>,  2 = |dn> = c+_dn|0>,  3 = |up dn> = c+_up c+_dn|0>

Fermionic modes are ordered site-major with up before down, sites in
increasing id.  A two-site operator on sites ``i < j`` is written in the
basis ``|s_i s_j> = (ops of i)(ops of j)|0>`` (index ``4*s_i + s_j``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from . import blocksparse as bs
from .symmetry import Index, get_group

GRAPH_FORMAT = "fermitn.graph/1"


@dataclass
class SiteGraph:
    """Undirected simple graph on sites ``0..n-1``."""

    n: int
    edges: list
    kind: str = "custom"
    seed: Optional[int] = None
    coords: Optional[list] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        edges = []
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"Self-loop at site {a}.")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise ValueError(f"Edge ({a}, {b}) out of range for {self.n} sites.")
            edges.append((min(a, b), max(a, b)))
        if len(set(edges)) != len(edges):
            raise ValueError("Repeated edge.")
        self.edges = sorted(edges)

    def neighbors(self, i) -> list:
        return sorted([b for a, b in self.edges if a == i] + [a for a, b in self.edges if b == i])

    def degree(self, i) -> int:
        return sum(1 for e in self.edges if i in e)

    def adjacency(self) -> dict:
        adj = {i: [] for i in range(self.n)}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return {i: sorted(v) for i, v in adj.items()}

    def distances(self, sources) -> dict:
        """Graph distance from the nearest of ``sources``."""
        adj = self.adjacency()
        dist = {s: 0 for s in sources}
        frontier = list(sources)
        while frontier:
            nxt = []
            for u in frontier:
                for w in adj[u]:
                    if w not in dist:
                        dist[w] = dist[u] + 1
                        nxt.append(w)
            frontier = nxt
        return dist

    def is_connected(self) -> bool:
        return self.n == 0 or len(self.distances([0])) == self.n

    def diameter(self) -> int:
        return max(max(self.distances([i]).values()) for i in range(self.n))

    def two_coloring(self):
        """A 0/1 coloring with no monochromatic edge, or ``None``."""
        adj = self.adjacency()
        color = {}
        for s in range(self.n):
            if s in color:
                continue
            color[s] = 0
            stack = [s]
            while stack:
                u = stack.pop()
                for w in adj[u]:
                    if w not in color:
                        color[w] = 1 - color[u]
                        stack.append(w)
                    elif color[w] == color[u]:
                        return None
        return [color[i] for i in range(self.n)]

    def to_dict(self) -> dict:
        return {
            "format": GRAPH_FORMAT,
            "kind": self.kind,
            "seed": self.seed,
            "n": self.n,
            "edges": [list(e) for e in self.edges],
            "coords": self.coords,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d) -> "SiteGraph":
        if d.get("format") != GRAPH_FORMAT:
            raise ValueError(f"Unknown graph format {d.get('format')!r}.")
        return cls(d["n"], [tuple(e) for e in d["edges"]], d.get("kind", "custom"), d.get("seed"),
                   d.get("coords"), d.get("meta") or {})

    def to_edgelist(self) -> str:
        lines = [f"# n {self.n}"] + [f"{a} {b}" for a, b in self.edges]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edgelist(cls, text) -> "SiteGraph":
        n, edges = None, []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "n":
                    n = int(parts[1])
                continue
            a, b = line.split()[:2]
            edges.append((int(a), int(b)))
        if n is None:
            n = 1 + max(max(e) for e in edges) if edges else 0
        return cls(n, edges)


def diamond_lattice(Lx, Ly, Lz) -> SiteGraph:
    """Open-boundary diamond lattice of ``Lx*Ly*Lz`` two-site cells.

    Cells sit on the fcc Bravais lattice with primitive vectors
    ``a1=(0,1,1)/2, a2=(1,0,1)/2, a3=(1,1,0)/2``; sublattice A at the cell
    origin, B at ``(1,1,1)/4``.  B of cell ``R`` bonds to A of cells
    ``R, R+a1, R+a2, R+a3`` when present.  Site id ``2*cell + sublattice``.
    """
    for L in (Lx, Ly, Lz):
        if int(L) < 1:
            raise ValueError("Lattice extents must be >= 1.")
    a = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]], dtype=float) / 2

    def cell(ix, iy, iz):
        return ix * Ly * Lz + iy * Lz + iz

    edges, coords = [], [None] * (2 * Lx * Ly * Lz)
    for ix in range(Lx):
        for iy in range(Ly):
            for iz in range(Lz):
                c = cell(ix, iy, iz)
                R = ix * a[0] + iy * a[1] + iz * a[2]
                coords[2 * c] = R.tolist()
                coords[2 * c + 1] = (R + 0.25).tolist()
                for d in [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]:
                    jx, jy, jz = ix + d[0], iy + d[1], iz + d[2]
                    if jx < Lx and jy < Ly and jz < Lz:
                        edges.append((2 * cell(jx, jy, jz), 2 * c + 1))
    return SiteGraph(2 * Lx * Ly * Lz, edges, "diamond", None, coords, {"L": [Lx, Ly, Lz]})


def random_regular_graph(n, degree=3, seed=None, max_tries=10000) -> SiteGraph:
    """Uniform random simple connected ``degree``-regular graph.

    Pairing model: ``n*degree`` stubs are randomly matched and the draw is
    rejected until the multigraph is simple and connected.
    """
    if n * degree % 2:
        raise ValueError(f"n*degree = {n * degree} must be even.")
    if n <= degree:
        raise ValueError("Need n > degree.")
    rng = np.random.default_rng(seed)
    stubs = np.repeat(np.arange(n), degree)
    for _ in range(max_tries):
        perm = rng.permutation(stubs)
        pairs = perm.reshape(-1, 2)
        if np.any(pairs[:, 0] == pairs[:, 1]):
            continue
        edges = {(int(min(p)), int(max(p))) for p in pairs}
        if len(edges) != len(pairs):
            continue
        g = SiteGraph(n, sorted(edges), "rrg", seed, None, {"degree": degree})
        if g.is_connected():
            return g
    raise RuntimeError("Failed to sample a simple connected regular graph.")


def ring(n) -> SiteGraph:
    return SiteGraph(n, [(i, (i + 1) % n) for i in range(n)] if n > 2 else [(0, 1)], "ring")


def chain(n) -> SiteGraph:
    return SiteGraph(n, [(i, i + 1) for i in range(n - 1)], "chain")


def grid(Lx, Ly) -> SiteGraph:
    edges = []
    for x in range(Lx):
        for y in range(Ly):
            s = x * Ly + y
            if x + 1 < Lx:
                edges.append((s, s + Ly))
            if y + 1 < Ly:
                edges.append((s, s + 1))
    return SiteGraph(Lx * Ly, edges, "grid", None, None, {"L": [Lx, Ly]})


# ---------------------------------------------------------------------- #
# local Hilbert space

STATES = ("0", "u", "d", "ud")
STATE_CODES = {"0": 0, "e": 0, "empty": 0, "u": 1, "up": 1, "d": 2, "dn": 2, "down": 2, "ud": 3, "2": 3, "double": 3}
N_UP = np.array([0, 1, 0, 1])
N_DN = np.array([0, 0, 1, 1])


@dataclass(frozen=True)
class LocalSpace:
    """The physical index of one site under a symmetry group.

    ``charge[s]`` and ``offset[s]`` locate local state ``s`` inside the
    charge-sorted physical index; ``perm`` maps dense position to state.
    """

    kind: str

    @property
    def group(self):
        return get_group(self.kind)

    def charge(self, s):
        nu, nd = int(N_UP[s]), int(N_DN[s])
        if self.kind == "U1xU1":
            return (nu, nd)
        if self.kind == "U1":
            return nu + nd
        return (nu + nd) % 2

    def index(self, sign=1, id=None) -> Index:
        dims: dict = {}
        for s in range(4):
            c = self.charge(s)
            dims[c] = dims.get(c, 0) + 1
        return Index(tuple(dims.items()), sign, id)

    @property
    def dense_order(self) -> list:
        """Local states in the order of the dense (charge-sorted) layout;
        within a sector states keep their basis order."""
        return sorted(range(4), key=lambda s: (self.charge(s), s))

    def offset(self, s) -> int:
        c = self.charge(s)
        return [t for t in self.dense_order if self.charge(t) == c].index(s)


def to_layout(op, space: LocalSpace, nsites):
    """Reorder a dense operator given in the state basis (``4**k`` square)
    into the charge-sorted layout of ``k`` physical legs (out legs, then
    in legs)."""
    order = space.dense_order
    k = nsites
    arr = np.asarray(op).reshape([4] * (2 * k))
    return arr[np.ix_(*([order] * (2 * k)))]


# ---------------------------------------------------------------------- #
# two-site Hubbard terms


def _fock_ops(nmodes):
    """Dense creation operators on ``nmodes`` modes, Jordan-Wigner signs
    for the given mode order; basis index = bits with mode 0 as the most
    significant bit."""
    dim = 2**nmodes
    ops = []
    for m in range(nmodes):
        c = np.zeros((dim, dim))
        for x in range(dim):
            bits = [(x >> (nmodes - 1 - k)) & 1 for k in range(nmodes)]
            if bits[m]:
                continue
            sign = (-1) ** sum(bits[:m])
            y = x | (1 << (nmodes - 1 - m))
            c[y, x] = sign
        ops.append(c)
    return ops


def _two_site_basis_map():
    """Map ``4*s_i + s_j`` to the 4-mode Fock index (modes i_up, i_dn, j_up, j_dn)."""
    out = []
    for si in range(4):
        for sj in range(4):
            bits = [N_UP[si], N_DN[si], N_UP[sj], N_DN[sj]]
            out.append(int("".join(str(int(b)) for b in bits), 2))
    return np.array(out)


def two_site_hubbard(t, Ui, Uj) -> np.ndarray:
    """16x16 matrix of ``-t sum_s (c+_is c_js + h.c.) + Ui n_iu n_id + Uj n_ju n_jd``."""
    cd = _fock_ops(4)
    c = [x.T for x in cd]
    n = [cd[m] @ c[m] for m in range(4)]
    h = np.zeros((16, 16))
    for s in (0, 1):
        hop = cd[s] @ c[2 + s]
        h += -t * (hop + hop.T)
    h += Ui * n[0] @ n[1] + Uj * n[2] @ n[3]
    # Fock basis of |s_i s_j> = (c+_iu)^a (c+_id)^b (c+_ju)^c (c+_jd)^d |0>
    # agrees with the JW basis above (modes created in increasing order)
    idx = _two_site_basis_map()
    return h[np.ix_(idx, idx)]


@dataclass
class LocalTerm:
    """A two-site Hamiltonian term on sites ``i < j``.

    ``matrix`` is 16x16 in the basis ``4*s_i + s_j``.
    """

    sites: tuple
    matrix: np.ndarray
    t: float = 0.0
    U_shares: tuple = (0.0, 0.0)

    def operator(self, space: LocalSpace, phys_ids=(None, None)) -> bs.BlockSparseTensor:
        return dense_to_gate(self.matrix, space, phys_ids)


def hubbard_terms(graph: SiteGraph, t=1.0, U=8.0) -> list:
    """One term per edge; the on-site U of site ``i`` is shared equally
    among its ``deg(i)`` incident edges."""
    deg = [graph.degree(i) for i in range(graph.n)]
    if U != 0 and any(d == 0 for d in deg):
        raise ValueError("Isolated site with nonzero U cannot be covered by two-site terms.")
    terms = []
    for i, j in graph.edges:
        Ui, Uj = U / deg[i], U / deg[j]
        terms.append(LocalTerm((i, j), two_site_hubbard(t, Ui, Uj), t, (Ui, Uj)))
    return terms


def dense_to_gate(mat, space: LocalSpace, phys_ids=(None, None)) -> bs.BlockSparseTensor:
    """Block-sparse two-site operator with legs ``(out_i, out_j, in_i, in_j)``."""
    g = space.group
    pi, pj = phys_ids
    legs = [space.index(1, pi), space.index(1, pj), space.index(-1, pi), space.index(-1, pj)]
    arr = to_layout(mat, space, 2)
    return bs.BlockSparseTensor.from_dense(g, legs, g.identity, arr, atol=1e-13)


def gate_exp(term: LocalTerm, tau, space: Optional[LocalSpace] = None, phys_ids=(None, None)):
    """``exp(-tau h)`` for a term.

    Returns the dense 16x16 matrix if ``space`` is None, otherwise the
    block-sparse gate.  The exponential is taken block by block over the
    conserved ``(N_up, N_dn)`` sectors of the two sites.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0.")
    h = term.matrix
    nu = np.add.outer(N_UP, N_UP).ravel()
    nd = np.add.outer(N_DN, N_DN).ravel()
    out = np.zeros_like(h)
    for key in sorted(set(zip(nu.tolist(), nd.tolist()))):
        idx = np.flatnonzero((nu == key[0]) & (nd == key[1]))
        out[np.ix_(idx, idx)] = scipy.linalg.expm(-tau * h[np.ix_(idx, idx)])
    if space is None:
        return out
    return dense_to_gate(out, space, phys_ids)


def parse_occupations(occ, n) -> list:
    """Local states from a string like ``"udud"``/list of codes/ints."""
    if isinstance(occ, str):
        tokens = list(occ) if " " not in occ and "," not in occ else occ.replace(",", " ").split()
        occ = tokens
    out = []
    for x in occ:
        if isinstance(x, (int, np.integer)):
            if not 0 <= int(x) < 4:
                raise ValueError(f"Local state {x} out of range 0..3.")
            out.append(int(x))
        else:
            if x not in STATE_CODES:
                raise ValueError(f"Unknown local state {x!r}.")
            out.append(STATE_CODES[x])
    if len(out) != n:
        raise ValueError(f"Need {n} occupations, got {len(out)}.")
    return out


def neel_occupations(graph: SiteGraph, n_up=None, n_dn=None) -> list:
    """Alternating up/down occupations (two-coloring when bipartite,
    otherwise by site parity), adjusted to the requested sector."""
    col = graph.two_coloring() or [i % 2 for i in range(graph.n)]
    occ = [1 if c == 0 else 2 for c in col]
    if n_up is not None and n_dn is not None:
        if n_up + n_dn > 2 * graph.n:
            raise ValueError("Too many particles.")
        occ = [0] * graph.n
        ups = [i for i in range(graph.n) if col[i] == 0] + [i for i in range(graph.n) if col[i] == 1]
        dns = [i for i in range(graph.n) if col[i] == 1] + [i for i in range(graph.n) if col[i] == 0]
        for i in ups[:n_up]:
            occ[i] |= 1
        for i in dns[:n_dn]:
            occ[i] |= 2
    return occ


def save_graph(graph: SiteGraph, path):
    with open(path, "w") as f:
        json.dump(graph.to_dict(), f, indent=1, sort_keys=True)


def load_graph(path) -> SiteGraph:
    with open(path) as f:
        text = f.read()
    if text.lstrip().startswith("{"):
        return SiteGraph.from_dict(json.loads(text))
    return SiteGraph.from_edgelist(text)
