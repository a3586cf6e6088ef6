"""Fermionic PEPS on arbitrary graphs.

Site tensors are stored in Vidal form: the state is the network of the
site tensors ``Gamma_i`` with the positive diagonal gauge ``lambda_b`` on
every bond.  Leg layout of ``Gamma_i``: one leg per neighbour (increasing
neighbour id), the physical leg, and a dummy leg if the initial local state
was odd.  Site tensors are always even so the network is locally ordered;
the bond between ``i < j`` has arrow ``i -> j``, leg sign ``-1`` on ``i`` and
``+1`` on ``j``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import blocksparse as bs
from . import fermi as fm
from .fermi import FermionTensor
from .models import LocalSpace, LocalTerm, SiteGraph, gate_exp, parse_occupations
from .network import TensorNetwork, conjugate, contract_all, contract_approx, join_bra_ket
from .pathopt import SearchParams, hyper_search
from .symmetry import Index

CHECKPOINT_FORMAT = "fermitn.su-checkpoint/1"
GAUGE_FLOOR = 1e-12
PLATEAU_TOL = 1e-8
PLATEAU_WINDOW = 10
DEFAULT_SCHEDULE = ((0.1, 200), (0.05, 200), (0.01, 200), (0.005, 200))


def bond_id(i, j) -> str:
    i, j = min(i, j), max(i, j)
    return f"b{i}-{j}"


def phys_id(i) -> str:
    return f"p{i}"


def dummy_id(i) -> str:
    return f"d{i}"


class GaugeSet(dict):
    """``bond id -> {charge: positive vector}``."""

    def copy(self):
        return GaugeSet({b: {c: v.copy() for c, v in g.items()} for b, g in self.items()})

    def check(self):
        for b, g in self.items():
            for c, v in g.items():
                if np.any(v <= 0):
                    raise ValueError(f"Gauge on bond {b!r} sector {c!r} is not strictly positive.")
        return self

    def to_dict(self):
        return {b: [[bs._enc_charge(c), [float(x) for x in v]] for c, v in sorted(g.items())]
                for b, g in sorted(self.items())}

    @classmethod
    def from_dict(cls, d, group):
        return cls({b: {bs._dec_charge(group, c): np.asarray(v, dtype=float) for c, v in items}
                    for b, items in d.items()})


@dataclass
class PEPS:
    graph: SiteGraph
    tensors: dict
    space: LocalSpace
    D: int

    @property
    def group(self):
        return self.space.group

    def phys_id(self, i):
        return phys_id(i)

    def neighbors(self, i):
        return self.graph.neighbors(i)

    def copy(self):
        return PEPS(self.graph, dict(self.tensors), self.space, self.D)

    def total_charge(self):
        """Summed charge of the physical legs.

        Bond legs cancel in pairs, so this is the sum of the tensor charges
        with the dummy legs taken out.
        """
        g = self.group
        q = g.identity
        for i, t in self.tensors.items():
            q = g.add(q, t.total_charge)
            if t.dummy_leg:
                ix = t.indices[-1]
                (c, _), = ix.sectors
                q = g.sub(q, g.signed(c, ix.sign))
        return q

    def particle_numbers(self):
        q = self.total_charge()
        if self.space.kind == "U1xU1":
            return q
        raise ValueError("Particle numbers per spin need the U1xU1 group.")

    def max_bond(self):
        return max((ix.size for t in self.tensors.values() for ix in t.indices if str(ix.id).startswith("b")),
                   default=1)

    def ket_network(self, gauges=None, sites=None, absorb="sqrt") -> TensorNetwork:
        """Network of the state (``sites=None``) or of a cluster.

        Gauges on bonds inside the cluster are split as square roots onto
        both ends; gauges on bonds leaving the cluster are absorbed fully
        into the cluster tensor, whose leg stays open.
        """
        sites = sorted(self.tensors) if sites is None else sorted(sites)
        inside = set(sites)
        net = TensorNetwork("local")
        for i in sites:
            t = self.tensors[i]
            if gauges is not None:
                core = t.core
                for ax, ix in enumerate(t.indices):
                    b = ix.id
                    if b in gauges:
                        j = _other(b, i)
                        power = 0.5 if j in inside else 1.0
                        core = core.scale_leg(ax, gauges[b], power)
                t = FermionTensor(core, t.dummy_leg)
            net.nodes[i] = t
        for i in sites:
            for j in self.graph.neighbors(i):
                if j in inside and i < j:
                    net.arrows[bond_id(i, j)] = (i, j)
        return net.validate()

    def to_dict(self):
        return {
            "graph": self.graph.to_dict(),
            "space": self.space.kind,
            "D": self.D,
            "tensors": [[i, fm.to_dict(self.tensors[i])] for i in sorted(self.tensors)],
        }

    @classmethod
    def from_dict(cls, d):
        graph = SiteGraph.from_dict(d["graph"])
        tensors = {int(i): fm.from_dict(t) for i, t in d["tensors"]}
        return cls(graph, tensors, LocalSpace(d["space"]), int(d["D"]))


def _other(b, i):
    a, c = (int(x) for x in b[1:].split("-"))
    return c if a == i else a


def init_product_state(graph: SiteGraph, occupations, kind="U1xU1", D=1):
    """Product state with bond dimension 1 and unit gauges.

    ``occupations`` gives each site one of the local states
    ``0/empty, u/up, d/down, ud/double`` (or codes 0..3).
    """
    space = LocalSpace(kind)
    g = space.group
    occ = parse_occupations(occupations, graph.n)
    tensors = {}
    gauges = GaugeSet()
    for i in range(graph.n):
        legs = []
        for j in graph.neighbors(i):
            legs.append(Index(((g.identity, 1),), -1 if i < j else 1, bond_id(i, j)))
        phys = space.index(1, phys_id(i))
        legs.append(phys)
        s = occ[i]
        c = space.charge(s)
        shape = tuple(ix.dim(c) if k == len(legs) - 1 else 1 for k, ix in enumerate(legs))
        blk = np.zeros(shape)
        blk[(0,) * (len(legs) - 1) + (space.offset(s),)] = 1.0
        key = tuple(g.identity for _ in legs[:-1]) + (c,)
        core = bs.BlockSparseTensor(g, legs, c, {key: blk})
        t = FermionTensor(core)
        if t.parity:
            t = fm.evenize(t, dummy_id(i))
        tensors[i] = t
    for i, j in graph.edges:
        gauges[bond_id(i, j)] = {g.identity: np.ones(1)}
    return PEPS(graph, tensors, space, D), gauges


def random_peps(graph: SiteGraph, D=2, kind="Z2", seed=None, occupations=None, dtype=float):
    """Random PEPS with bond dimension ``D`` and unit gauges.

    Site ``i`` carries the charge of ``occupations[i]`` (default: a random
    local state), so odd sites get a dummy leg as in
    :func:`init_product_state`.  Bond sectors are split as evenly as
    possible over the smallest charges around the identity.
    """
    from .network import _rand_sectors

    space = LocalSpace(kind)
    g = space.group
    rng = np.random.default_rng(seed)
    occ = list(rng.integers(0, 4, graph.n)) if occupations is None else parse_occupations(occupations, graph.n)
    bond_sec = _rand_sectors(g, D, rng)
    tensors = {}
    for i in range(graph.n):
        legs = [Index(bond_sec, -1 if i < j else 1, bond_id(i, j)) for j in graph.neighbors(i)]
        legs.append(space.index(1, phys_id(i)))
        c = space.charge(int(occ[i]))
        core = bs.BlockSparseTensor.random(g, legs, c, seed=int(rng.integers(2**31)), dtype=dtype)
        t = FermionTensor(core)
        if t.parity:
            t = fm.evenize(t, dummy_id(i))
        tensors[i] = t
    gauges = GaugeSet({bond_id(i, j): {c: np.ones(d) for c, d in bond_sec} for i, j in graph.edges})
    return PEPS(graph, tensors, space, D), gauges


# ---------------------------------------------------------------------- #
# simple update


def apply_gate_su(peps: PEPS, gauges: GaugeSet, bond, gate, D=None, cutoff=GAUGE_FLOOR):
    """One simple-update step on ``bond = (i, j)`` (in place).

    ``gate`` is a block-sparse two-site operator with legs
    ``(out_i, out_j, in_i, in_j)`` for ``i < j``, or ``None`` for a pure
    re-gauging step.  Returns the discarded weight.
    """
    i, j = bond
    if i > j:
        raise ValueError("Bond must be given with i < j.")
    if j not in peps.graph.neighbors(i):
        raise ValueError(f"Sites {i} and {j} are not adjacent.")
    D = peps.D if D is None else D
    bid = bond_id(i, j)
    Ti, Tj = peps.tensors[i], peps.tensors[j]
    ai, aj = Ti.axis(bid), Tj.axis(bid)

    def absorb(t, skip, power):
        core = t.core
        for ax, ix in enumerate(t.indices):
            if ix.id in gauges and ix.id != skip:
                core = core.scale_leg(ax, gauges[ix.id], power)
        return core

    ci = FermionTensor(absorb(Ti, bid, 1.0).scale_leg(ai, gauges[bid]))
    cj = FermionTensor(absorb(Tj, bid, 1.0))
    phi, phj = Ti.axis(phys_id(i)), Tj.axis(phys_id(j))
    # reduced update: split off everything but (bond, phys) on both sides
    Xi = [k for k in range(Ti.ndim) if k not in (ai, phi)]
    Yj = [k for k in range(Tj.ndim) if k not in (aj, phj)]
    ki, kj = f"_{bid}_i", f"_{bid}_j"
    if Xi:
        Qi, Ri = fm.fqr(ci, Xi, bond_id=ki)  # Ri: (ki, bond, phys_i)
    else:
        Qi, Ri = None, fm.ftranspose(ci, sorted((ai, phi)))
    if Yj:
        Qj, Rj = fm.fqr(cj, Yj, bond_id=kj)  # Rj: (kj, bond, phys_j)
        # move Rj in front of Qj (both even, shared bond kj)
        Rj = fm.apply_parity(Rj, 0)
    else:
        Qj, Rj = None, fm.ftranspose(cj, sorted((aj, phj)))
    theta = fm.fcontract(Ri, Rj, [(Ri.axis(bid), Rj.axis(bid))])
    # theta legs: (ki?, phys_i, kj?, phys_j)
    ni = Ri.ndim - 1
    if gate is not None:
        theta = fm.apply_operator(theta, gate, [theta.axis(phys_id(i)), theta.axis(phys_id(j))])
    U, S, Vh, dw = fm.fsvd_truncate(theta, list(range(ni)), chi=D, cutoff=cutoff, bond_id=bid)
    smax = max(float(v.max()) for v in S.values())
    if not np.isfinite(smax) or smax <= 0:
        raise FloatingPointError("Simple update produced a vanishing bond.")
    lam = {c: v / smax for c, v in S.items()}

    new_i = fm.fcontract(Qi, U, [(Qi.ndim - 1, 0)]) if Qi is not None else U
    new_j = fm.fcontract(Vh, Qj, [(Vh.axis(kj), Qj.ndim - 1)]) if Qj is not None else Vh
    new_i = fm.ftranspose(new_i, [new_i.axis(b) for b in Ti.ids])
    new_j = fm.ftranspose(new_j, [new_j.axis(b) for b in Tj.ids])
    gauges[bid] = lam
    new_i = FermionTensor(absorb(new_i, bid, -1.0), Ti.dummy_leg)
    new_j = FermionTensor(absorb(new_j, bid, -1.0), Tj.dummy_leg)
    peps.tensors[i] = new_i / new_i.max_abs()
    peps.tensors[j] = new_j / new_j.max_abs()
    return dw


@dataclass
class SUResult:
    peps: PEPS
    gauges: GaugeSet
    trace: list = field(default_factory=list)  # rows: stage, tau, sweep, energy, discarded
    position: tuple = (0, 0)
    finished: bool = True


def simple_update(peps: PEPS, gauges: GaugeSet, terms, schedule=DEFAULT_SCHEDULE, D=None,
                  plateau_tol=PLATEAU_TOL, window=PLATEAU_WINDOW, start=(0, 0), trace=None,
                  callback=None, energy_every=1) -> SUResult:
    """Imaginary-time evolution with first-order Trotter sweeps.

    Each sweep applies ``exp(-tau h_t)`` for every term in order; after each
    sweep the cluster (r=0) energy is recorded.  A stage ``(tau, sweeps)``
    ends early once the energy changed by less than ``plateau_tol`` on each
    of the last ``window`` sweeps.  ``start=(stage, sweep)`` resumes.
    """
    peps = peps.copy()
    gauges = gauges.copy()
    D = peps.D if D is None else D
    peps.D = D
    trace = list(trace or [])
    stage0, sweep0 = start
    for s in range(stage0, len(schedule)):
        tau, nsweeps = schedule[s]
        gates = [gate_exp(t, tau, peps.space, (phys_id(t.sites[0]), phys_id(t.sites[1]))) for t in terms]
        recent = []
        last = None
        first = sweep0 if s == stage0 else 0
        for k in range(first, int(nsweeps)):
            dw = 0.0
            for term, g in zip(terms, gates):
                dw = max(dw, apply_gate_su(peps, gauges, term.sites, g, D))
            e = energy(peps, gauges, terms, method="cluster", r=0).total if (k + 1) % energy_every == 0 else float("nan")
            if not math.isnan(e):
                if last is not None:
                    recent.append(abs(e - last))
                last = e
            trace.append({"stage": s, "tau": float(tau), "sweep": k, "energy": float(e), "discarded": float(dw)})
            if callback is not None:
                callback(peps, gauges, trace, (s, k + 1))
            if len(recent) >= window and max(recent[-window:]) < plateau_tol:
                break
    return SUResult(peps, gauges, trace, (len(schedule), 0), True)


def canonicalize(peps: PEPS, gauges: GaugeSet, sweeps=100, tol=1e-13):
    """Repeated gate-free simple-update steps on every bond (in place).

    On loop-free graphs this converges to the canonical form, where the
    gauges are the exact Schmidt coefficients of every bond.
    """
    D = peps.max_bond()
    for _ in range(sweeps):
        old = gauges.copy()
        for i, j in peps.graph.edges:
            apply_gate_su(peps, gauges, (i, j), None, D, cutoff=1e-14)
        diff = 0.0
        for b, g in gauges.items():
            if set(g) != set(old[b]) or any(len(g[c]) != len(old[b][c]) for c in g):
                diff = np.inf
                break
            diff = max(diff, max(float(np.abs(g[c] - old[b][c]).max()) for c in g))
        if diff < tol:
            break
    return peps, gauges


# ---------------------------------------------------------------------- #
# energies


def _layout_to_state(space: LocalSpace):
    return [space.dense_order.index(s) for s in range(4)]


def rdm_network(peps: PEPS, gauges, sites, cluster):
    """Double-layer network of a cluster with the physical legs of
    ``sites = (i, j)`` left open on both layers."""
    i, j = sites
    ket = peps.ket_network(gauges, cluster)
    bra = conjugate(ket)
    return join_bra_ket(bra, ket, keep_open={phys_id(i), phys_id(j)})


def rdm_from_tensor(T, sites, space: LocalSpace):
    """Two-site density matrix in the state basis from the contracted
    double-layer tensor with open legs ``(bra_j, bra_i, ket_i, ket_j)``."""
    i, j = sites
    want = [phys_id(j) + "*", phys_id(i) + "*", phys_id(i), phys_id(j)]
    ids = list(T.ids)
    T = fm.ftranspose(T, [ids.index(b) for b in want])
    R = T.core.to_dense()
    R = R.reshape(R.shape[:4])
    rho = R.transpose(2, 3, 1, 0)  # [a, b, a', b'] = rho_{(ab),(a'b')}
    L = _layout_to_state(space)
    rho = rho[np.ix_(L, L, L, L)].reshape(16, 16)
    return rho


@dataclass
class RDMResult:
    rho: np.ndarray
    trace: complex
    diagnostics: dict


def cluster_rdm(peps: PEPS, gauges, sites, r=0, chi=None, trials=4, seed=0) -> RDMResult:
    """Two-site reduced density matrix from the cluster of all sites within
    graph distance ``r`` of ``sites``.

    ``r=None`` uses the whole graph.  With ``chi`` the double-layer network
    is contracted approximately (early compression) along a hyper-searched
    tree.  The result is Hermitian and has unit trace.
    """
    i, j = sites
    if i > j:
        i, j = j, i
    if j not in peps.graph.neighbors(i):
        raise ValueError(f"Sites {i} and {j} are not adjacent.")
    if r is not None and r < 0:
        raise ValueError("r must be >= 0.")
    if chi is not None and chi < 1:
        raise ValueError("chi must be >= 1.")
    if r is None:
        cluster = list(range(peps.graph.n))
    else:
        dist = peps.graph.distances([i, j])
        cluster = sorted(k for k, d in dist.items() if d <= r)
    net = rdm_network(peps, gauges, (i, j), cluster)
    legs, sizes = net.graph()
    if len(net.nodes) > 2:
        tree = hyper_search(legs, sizes, SearchParams(trials=trials, chi=chi, seed=seed))
    else:
        tree = (list(net.nodes)[0], list(net.nodes)[1])
    res = contract_approx(net, tree, chi=chi) if chi is not None else contract_all(net, tree)
    rho = rdm_from_tensor(res.tensor, (i, j), peps.space)
    tr = np.trace(rho)
    if abs(tr) == 0 or not np.isfinite(tr):
        raise FloatingPointError("Reduced density matrix has vanishing trace.")
    rho = rho / tr
    herm_err = float(np.abs(rho - rho.conj().T).max())
    rho = 0.5 * (rho + rho.conj().T)
    w = np.linalg.eigvalsh(rho)
    diag = {
        "cluster_size": len(cluster),
        "hermiticity_error": herm_err,
        "min_eigenvalue": float(w[0]),
        "discarded_weight": res.diagnostics.get("total_discarded_weight", 0.0),
        "flops": res.diagnostics.get("flops", 0),
    }
    return RDMResult(rho, tr * math.exp(res.log_scale), diag)


@dataclass
class EnergyReport:
    total: float
    terms: list
    method: str
    r: Optional[int]
    chi: Optional[int]

    def to_dict(self):
        return {"total": self.total, "method": self.method, "r": self.r, "chi": self.chi, "terms": self.terms}


def term_energy(peps, gauges, term: LocalTerm, method="cluster", r=0, chi=None, trials=4, seed=0):
    rr = None if method == "full" else r
    res = cluster_rdm(peps, gauges, term.sites, rr, chi, trials, seed)
    e = float(np.real(np.trace(term.matrix @ res.rho)))
    row = {"sites": list(term.sites), "energy": e}
    row.update(res.diagnostics)
    return row


def energy(peps: PEPS, gauges, terms, method="cluster", r=0, chi=None, threads=1, trials=4, seed=0,
           timing=False) -> EnergyReport:
    """Sum of two-site term energies.

    ``method="cluster"`` contracts the radius-``r`` cluster around each
    term; ``method="full"`` contracts the whole double layer (approximately
    when ``chi`` is given).  Terms are evaluated independently, in a thread
    pool when ``threads > 1``.
    """
    if method not in ("cluster", "full"):
        raise ValueError(f"Unknown method {method!r}.")
    if method == "cluster" and (r is None or r < 0):
        raise ValueError("Cluster method needs r >= 0.")

    def one(term):
        t0 = time.perf_counter()
        row = term_energy(peps, gauges, term, method, r, chi, trials, seed)
        if timing:
            row["seconds"] = time.perf_counter() - t0
        return row

    if threads > 1 and len(terms) > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(one, terms))
    else:
        rows = [one(t) for t in terms]
    total = float(sum(row["energy"] for row in rows))
    return EnergyReport(total, rows, method, None if method == "full" else r, chi)


# ---------------------------------------------------------------------- #
# checkpoints


def checkpoint_dict(peps: PEPS, gauges: GaugeSet, position=(0, 0), trace=(), extra=None) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "peps": peps.to_dict(),
        "gauges": gauges.to_dict(),
        "position": list(position),
        "trace": list(trace),
        "extra": extra or {},
    }


def load_checkpoint(d):
    """Returns ``(peps, gauges, position, trace, extra)``; raises
    ``ValueError`` on malformed input."""
    try:
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"Unknown checkpoint format {d.get('format')!r}.")
        peps = PEPS.from_dict(d["peps"])
        gauges = GaugeSet.from_dict(d["gauges"], peps.group).check()
        position = tuple(int(x) for x in d["position"])
        for i, j in peps.graph.edges:
            if bond_id(i, j) not in gauges:
                raise ValueError(f"Missing gauge for bond {bond_id(i, j)}.")
        return peps, gauges, position, list(d.get("trace", [])), d.get("extra", {})
    except (KeyError, TypeError, AttributeError, IndexError) as exc:
        raise ValueError(f"Malformed checkpoint: {exc}") from exc
