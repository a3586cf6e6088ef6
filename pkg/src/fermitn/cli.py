"""Command-line driver.

Subcommands::

    fermitn generate       --lattice diamond --L 3 3 3 --out graph.json
    fermitn optimize-path  --graph graph.json --D 4 --trials 64 --out tree.json
    fermitn simple-update  --graph graph.json --U 8 --D 4 --checkpoint su.json --trace su.csv
    fermitn energy         --checkpoint su.json --method cluster --r 2 --out energy.json
    fermitn ed             --graph graph.json --U 8 --out ed.json

Every option can also come from a TOML or JSON file given by ``--config``;
flags given on the command line win.  Outputs are deterministic for a fixed
config: JSON is written with sorted keys and floats in ``repr`` form, and
wall-clock timings only appear with ``--timing``.

Exit codes: 0 ok, 2 bad input, 3 corrupt checkpoint, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import __version__
from . import models as M
from . import pathopt as po
from .network import TensorNetwork
from .oracle import MAX_ED_DIM, ed_ground_state
from .peps import (DEFAULT_SCHEDULE, checkpoint_dict, energy, init_product_state, load_checkpoint,
                   simple_update)

EXIT_OK, EXIT_INPUT, EXIT_STATE, EXIT_NUMERIC = 0, 2, 3, 4
LATTICES = ("diamond", "ring", "chain", "grid", "rrg")
SYMMETRIES = ("U1xU1", "U1", "Z2")


class InputError(ValueError):
    """Invalid configuration or input file (exit code 2)."""


class StateError(ValueError):
    """Corrupt checkpoint (exit code 3)."""


class NumericalError(RuntimeError):
    """Non-finite results or failed decompositions (exit code 4)."""


@dataclass
class RunConfig:
    """All inputs of one run; validated before any compute and embedded in
    every output for provenance."""

    # model
    lattice: Optional[str] = None
    L: list = field(default_factory=list)
    rrg: Optional[int] = None
    degree: int = 3
    graph: Optional[str] = None
    t: float = 1.0
    U: float = 8.0
    n_up: Optional[int] = None
    n_dn: Optional[int] = None
    occupations: str = "neel"
    # ansatz and evolution
    symmetry: str = "U1xU1"
    D: int = 4
    schedule: list = field(default_factory=lambda: [list(s) for s in DEFAULT_SCHEDULE])
    energy_every: int = 1
    checkpoint_every: int = 0
    # evaluation
    method: str = "cluster"
    r: int = 0
    chi: Optional[int] = None
    trials: int = 4
    threads: int = 0
    # io
    network: Optional[str] = None
    checkpoint: Optional[str] = None
    resume: Optional[str] = None
    trace: Optional[str] = None
    out: Optional[str] = None
    seed: int = 0
    timing: bool = False

    def validate(self) -> "RunConfig":
        if self.lattice is not None and self.lattice not in LATTICES:
            raise InputError(f"Unknown lattice {self.lattice!r}; choose from {LATTICES}.")
        if self.symmetry not in SYMMETRIES:
            raise InputError(f"Unknown symmetry {self.symmetry!r}; choose from {SYMMETRIES}.")
        if self.method not in ("cluster", "full"):
            raise InputError(f"Unknown method {self.method!r}.")
        if self.r is None or int(self.r) < 0:
            raise InputError("r must be >= 0.")
        if self.chi is not None and int(self.chi) < 1:
            raise InputError("chi must be >= 1.")
        if int(self.D) < 1:
            raise InputError("D must be >= 1.")
        if int(self.trials) < 1:
            raise InputError("trials must be >= 1.")
        if int(self.threads) < 0:
            raise InputError("threads must be >= 0.")
        if int(self.energy_every) < 1 or int(self.checkpoint_every) < 0:
            raise InputError("energy_every must be >= 1 and checkpoint_every >= 0.")
        if self.rrg is not None and (int(self.rrg) < 2 or int(self.degree) < 1):
            raise InputError("rrg needs N >= 2 and degree >= 1.")
        if any(int(x) < 1 for x in self.L):
            raise InputError("Lattice extents must be >= 1.")
        try:
            sched = [(float(tau), int(n)) for tau, n in self.schedule]
        except (TypeError, ValueError) as exc:
            raise InputError(f"schedule must be a list of [tau, sweeps] pairs: {exc}") from None
        if any(tau <= 0 or not math.isfinite(tau) or n < 0 for tau, n in sched):
            raise InputError("schedule needs tau > 0 and sweeps >= 0.")
        self.schedule = [list(s) for s in sched]
        for k in ("n_up", "n_dn"):
            v = getattr(self, k)
            if v is not None and int(v) < 0:
                raise InputError(f"{k} must be >= 0.")
        return self

    def provenance(self, command) -> dict:
        cfg = {k: v for k, v in asdict(self).items() if k != "timing"}
        return {"package": "fermitn", "version": __version__, "command": command, "seed": self.seed,
                "config": cfg}


# ---------------------------------------------------------------------- #
# config handling


def _load_config_file(path) -> dict:
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as exc:
        raise InputError(f"Cannot read config {path}: {exc}") from None
    try:
        if str(path).endswith(".json"):
            data = json.loads(raw.decode())
        else:
            import tomli

            data = tomli.loads(raw.decode())
    except Exception as exc:  # tomli and json raise different types
        raise InputError(f"Cannot parse config {path}: {exc}") from None
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise InputError(f"Unknown config keys: {sorted(unknown)}")
    return data


def _resume_base(path) -> dict:
    """Config stored in a checkpoint, used as defaults when resuming; a
    broken file is reported later by the command itself."""
    try:
        with open(path) as f:
            cfg = json.load(f)["extra"]["provenance"]["config"]
        return {k: v for k, v in cfg.items() if k not in ("resume", "checkpoint", "trace", "out")}
    except Exception:
        return {}


def build_config(args) -> RunConfig:
    data = _resume_base(args.resume) if getattr(args, "resume", None) else {}
    if getattr(args, "config", None):
        data.update(_load_config_file(args.config))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None and v is not False:
            data[f.name] = v
    try:
        cfg = RunConfig(**data)
    except TypeError as exc:
        raise InputError(str(exc)) from None
    return cfg.validate()


def make_graph(cfg: RunConfig) -> M.SiteGraph:
    try:
        if cfg.graph:
            return M.load_graph(cfg.graph)
        if cfg.rrg is not None:
            return M.random_regular_graph(int(cfg.rrg), int(cfg.degree), int(cfg.seed))
        L = [int(x) for x in cfg.L]
        if cfg.lattice == "diamond":
            if len(L) != 3:
                raise InputError("diamond needs --L Lx Ly Lz.")
            return M.diamond_lattice(*L)
        if cfg.lattice in ("ring", "chain"):
            if len(L) != 1 or L[0] < 2:
                raise InputError(f"{cfg.lattice} needs --L N with N >= 2.")
            return (M.ring if cfg.lattice == "ring" else M.chain)(L[0])
        if cfg.lattice == "grid":
            if len(L) != 2:
                raise InputError("grid needs --L Lx Ly.")
            return M.grid(*L)
        if cfg.lattice == "rrg":
            raise InputError("Use --rrg N for random regular graphs.")
    except OSError as exc:
        raise InputError(f"Cannot read graph: {exc}") from None
    except (KeyError, TypeError) as exc:
        raise InputError(f"Malformed graph file: {exc}") from None
    raise InputError("No model given: use --graph, --lattice or --rrg.")


def _sector(cfg, graph):
    n_up = graph.n // 2 + graph.n % 2 if cfg.n_up is None else int(cfg.n_up)
    n_dn = graph.n // 2 if cfg.n_dn is None else int(cfg.n_dn)
    if n_up > graph.n or n_dn > graph.n:
        raise InputError("Particle numbers exceed site count.")
    return n_up, n_dn


# ---------------------------------------------------------------------- #
# output


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def write_json(obj, path):
    text = json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as f:
            f.write(text)


def write_trace(rows, path):
    cols = ["stage", "tau", "sweep", "energy", "discarded"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(float(r[c])) if isinstance(r[c], float) else r[c] for c in cols])


def _threads(cfg):
    return int(cfg.threads) or (os.cpu_count() or 1)


# ---------------------------------------------------------------------- #
# commands


def cmd_generate(cfg: RunConfig) -> int:
    g = make_graph(cfg)
    d = g.to_dict()
    d["provenance"] = cfg.provenance("generate")
    write_json(d, cfg.out)
    hist = {}
    for i in range(g.n):
        hist[g.degree(i)] = hist.get(g.degree(i), 0) + 1
    print(f"{g.kind}: {g.n} sites, {len(g.edges)} edges, degrees {dict(sorted(hist.items()))}",
          file=sys.stderr)
    return EXIT_OK


def _path_problem(cfg):
    """(legs, sizes) from a network file, or the double-layer norm network
    of a bond-dimension ``D`` PEPS on the model graph."""
    if cfg.network:
        try:
            with open(cfg.network) as f:
                net = TensorNetwork.from_dict(json.load(f))
        except OSError as exc:
            raise InputError(f"Cannot read network: {exc}") from None
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"Malformed network file: {exc}") from None
        return net.graph()
    g = make_graph(cfg)
    legs = {i: [] for i in range(g.n)}
    sizes = {}
    for i, j in g.edges:
        b = f"b{i}-{j}"
        legs[i].append(b)
        legs[j].append(b)
        sizes[b] = int(cfg.D) ** 2
    return legs, sizes


def cmd_optimize_path(cfg: RunConfig) -> int:
    legs, sizes = _path_problem(cfg)
    params = po.SearchParams(trials=int(cfg.trials), chi=cfg.chi, seed=int(cfg.seed))
    t0 = time.perf_counter()
    tree = po.hyper_search(legs, sizes, params)
    out = tree.to_dict()
    out["n_tensors"] = len(legs)
    out["provenance"] = cfg.provenance("optimize-path")
    if cfg.timing:
        out["seconds"] = time.perf_counter() - t0
    write_json(out, cfg.out)
    print(f"flops={tree.flops:.6g} peak={tree.peak_memory:.6g}", file=sys.stderr)
    return EXIT_OK


def _read_checkpoint(path):
    try:
        with open(path) as f:
            d = json.load(f)
    except OSError as exc:
        raise InputError(f"Cannot read checkpoint: {exc}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise StateError(f"Corrupt checkpoint {path}: {exc}") from None
    try:
        return load_checkpoint(d)
    except (ValueError, AttributeError) as exc:
        raise StateError(f"Corrupt checkpoint {path}: {exc}") from None


def cmd_simple_update(cfg: RunConfig) -> int:
    if cfg.resume:
        peps, gauges, position, trace, extra = _read_checkpoint(cfg.resume)
        graph = peps.graph
    else:
        graph = make_graph(cfg)
        n_up, n_dn = _sector(cfg, graph)
        if cfg.occupations == "neel":
            occ = M.neel_occupations(graph, n_up, n_dn)
        else:
            occ = M.parse_occupations(cfg.occupations, graph.n)
        peps, gauges = init_product_state(graph, occ, kind=cfg.symmetry)
        position, trace = (0, 0), []
    terms = M.hubbard_terms(graph, float(cfg.t), float(cfg.U))
    schedule = [tuple(s) for s in cfg.schedule]
    prov = cfg.provenance("simple-update")

    def save(p, g, tr, pos):
        if cfg.checkpoint:
            write_json(checkpoint_dict(p, g, pos, tr, {"provenance": prov}), cfg.checkpoint)

    callback = None
    if cfg.checkpoint_every and cfg.checkpoint:
        def callback(p, g, tr, pos):
            if pos[1] % int(cfg.checkpoint_every) == 0:
                save(p, g, tr, pos)

    t0 = time.perf_counter()
    with np.errstate(invalid="raise", divide="raise", over="raise"):
        res = simple_update(peps, gauges, terms, schedule=schedule, D=int(cfg.D), start=position,
                            trace=trace, callback=callback, energy_every=int(cfg.energy_every))
    if any(not math.isfinite(r["energy"]) for r in res.trace[-1:]) and int(cfg.energy_every) == 1:
        raise NumericalError("Non-finite energy in trace.")
    save(res.peps, res.gauges, res.trace, res.position)
    if cfg.trace:
        write_trace(res.trace, cfg.trace)
    e = res.trace[-1]["energy"] if res.trace else float("nan")
    msg = f"sweeps={len(res.trace)} energy={e!r}"
    if cfg.timing:
        msg += f" seconds={time.perf_counter() - t0:.2f}"
    print(msg, file=sys.stderr)
    return EXIT_OK


def cmd_energy(cfg: RunConfig) -> int:
    if not cfg.checkpoint:
        raise InputError("energy needs --checkpoint.")
    peps, gauges, _, _, _ = _read_checkpoint(cfg.checkpoint)
    terms = M.hubbard_terms(peps.graph, float(cfg.t), float(cfg.U))
    with np.errstate(invalid="raise", divide="raise", over="raise"):
        rep = energy(peps, gauges, terms, method=cfg.method, r=int(cfg.r), chi=cfg.chi,
                     threads=_threads(cfg), trials=int(cfg.trials), seed=int(cfg.seed), timing=cfg.timing)
    if not math.isfinite(rep.total):
        raise NumericalError("Non-finite energy.")
    out = rep.to_dict()
    out["per_site"] = rep.total / peps.graph.n
    out["total_discarded_weight"] = float(sum(t.get("discarded_weight", 0.0) for t in rep.terms))
    out["provenance"] = cfg.provenance("energy")
    write_json(out, cfg.out)
    print(f"E={rep.total!r} E/N={rep.total / peps.graph.n!r}", file=sys.stderr)
    return EXIT_OK


def cmd_ed(cfg: RunConfig) -> int:
    graph = make_graph(cfg)
    n_up, n_dn = _sector(cfg, graph)
    dim = math.comb(graph.n, n_up) * math.comb(graph.n, n_dn)
    if dim > MAX_ED_DIM:
        raise InputError(f"Sector dimension {dim} exceeds {MAX_ED_DIM}.")
    t0 = time.perf_counter()
    e = ed_ground_state(graph, float(cfg.t), float(cfg.U), n_up, n_dn)
    if not math.isfinite(e):
        raise NumericalError("Non-finite ED energy.")
    out = {"energy": e, "per_site": e / graph.n, "n_up": n_up, "n_dn": n_dn, "dim": dim,
           "provenance": cfg.provenance("ed")}
    if cfg.timing:
        out["seconds"] = time.perf_counter() - t0
    write_json(out, cfg.out)
    print(f"E={e!r}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "optimize-path": cmd_optimize_path,
    "simple-update": cmd_simple_update,
    "energy": cmd_energy,
    "ed": cmd_ed,
}


# ---------------------------------------------------------------------- #
# argument parsing


def _schedule_arg(text):
    try:
        pairs = [p.split(":") for p in text.split(",") if p]
        return [[float(a), int(b)] for a, b in pairs]
    except ValueError:
        raise argparse.ArgumentTypeError("schedule format is tau:sweeps,tau:sweeps,...") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fermitn", description="Fermionic tensor networks on arbitrary graphs.")
    ap.add_argument("--version", action="version", version=f"fermitn {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML or JSON file with RunConfig fields")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--timing", action="store_true", help="include wall-clock timings")

    def model(p):
        p.add_argument("--graph", help="graph JSON or edge list")
        p.add_argument("--lattice", choices=LATTICES)
        p.add_argument("--L", type=int, nargs="+")
        p.add_argument("--rrg", type=int, metavar="N", help="random regular graph on N sites")
        p.add_argument("--degree", type=int)

    def hubbard(p):
        p.add_argument("--t", type=float)
        p.add_argument("--U", type=float)
        p.add_argument("--n-up", dest="n_up", type=int)
        p.add_argument("--n-dn", dest="n_dn", type=int)

    p = sub.add_parser("generate", help="write a lattice or random regular graph")
    common(p)
    model(p)

    p = sub.add_parser("optimize-path", help="contraction tree for a network or PEPS norm")
    common(p)
    model(p)
    p.add_argument("--network", help="network JSON")
    p.add_argument("--D", type=int)
    p.add_argument("--chi", type=int)
    p.add_argument("--trials", type=int)

    p = sub.add_parser("simple-update", help="imaginary-time evolution of a PEPS")
    common(p)
    model(p)
    hubbard(p)
    p.add_argument("--symmetry", choices=SYMMETRIES)
    p.add_argument("--D", type=int)
    p.add_argument("--schedule", type=_schedule_arg, help="tau:sweeps,...")
    p.add_argument("--occupations", help="'neel' or a string such as 'udud'")
    p.add_argument("--energy-every", dest="energy_every", type=int)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.add_argument("--checkpoint", help="checkpoint JSON to write")
    p.add_argument("--resume", help="checkpoint JSON to continue from")
    p.add_argument("--trace", help="CSV energy trace")

    p = sub.add_parser("energy", help="energy of a checkpointed PEPS")
    common(p)
    hubbard(p)
    p.add_argument("--checkpoint", help="checkpoint JSON")
    p.add_argument("--method", choices=("cluster", "full"))
    p.add_argument("--r", type=int)
    p.add_argument("--chi", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--threads", type=int, help="worker threads (default: all cores)")

    p = sub.add_parser("ed", help="exact ground energy in a particle-number sector")
    common(p)
    model(p)
    hubbard(p)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except StateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STATE
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
