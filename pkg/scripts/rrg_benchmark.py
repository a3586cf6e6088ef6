"""Simple-update energies on small random regular graphs against exact diagonalization.

Writes one CSV row per (N, instance, D) and prints a summary of relative
errors and D-convergence.

    python scripts/rrg_benchmark.py --sizes 8 12 --instances 20 --out rrg.csv
"""
from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from fermitn.models import hubbard_terms, neel_occupations, random_regular_graph
from fermitn.oracle import ed_ground_state
from fermitn.peps import energy, init_product_state, simple_update

SCHEDULE = ((0.1, 30), (0.05, 20), (0.02, 20))


def run_instance(n, seed, Ds=(4, 8, 12), U=8.0, t=1.0, kind="U1", schedule=SCHEDULE, energy_every=5):
    graph = random_regular_graph(n, 3, seed)
    terms = hubbard_terms(graph, t, U)
    e_ed = ed_ground_state(graph, t, U, n // 2, n // 2)
    peps, gauges = init_product_state(graph, neel_occupations(graph, n // 2, n // 2), kind=kind)
    rows = []
    for D in Ds:
        res = simple_update(peps, gauges, terms, schedule=schedule, D=D, energy_every=energy_every)
        e = energy(res.peps, res.gauges, terms, method="cluster", r=0).total
        rows.append({"N": n, "seed": seed, "D": D, "energy": e, "ed": e_ed,
                     "rel_error": (e - e_ed) / abs(e_ed)})
    return rows


def summarize(rows, Ds=(4, 8, 12)):
    by = {}
    for r in rows:
        by.setdefault((r["N"], r["seed"]), {})[r["D"]] = r
    out = {"max_abs_rel_error": {}, "mean_abs_rel_error": {}}
    for n in sorted({k[0] for k in by}):
        for D in Ds:
            errs = [abs(v[D]["rel_error"]) for k, v in by.items() if k[0] == n]
            out["max_abs_rel_error"][(n, D)] = max(errs)
            out["mean_abs_rel_error"][(n, D)] = float(np.mean(errs))
    conv = [abs(v[Ds[2]]["energy"] - v[Ds[1]]["energy"]) < abs(v[Ds[1]]["energy"] - v[Ds[0]]["energy"])
            for v in by.values()]
    out["converging_fraction"] = float(np.mean(conv))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 12])
    ap.add_argument("--instances", type=int, default=20)
    ap.add_argument("--D", type=int, nargs=3, default=[4, 8, 12])
    ap.add_argument("--U", type=float, default=8.0)
    ap.add_argument("--symmetry", default="U1", choices=["U1", "U1xU1", "Z2"])
    ap.add_argument("--out", default="rrg_benchmark.csv")
    args = ap.parse_args(argv)

    rows = []
    t0 = time.time()
    for n in args.sizes:
        for seed in range(args.instances):
            rows += run_instance(n, seed, tuple(args.D), U=args.U, kind=args.symmetry)
            last = rows[-3:]
            print(f"N={n} seed={seed} " + " ".join(f"D{r['D']}={r['rel_error']:+.4f}" for r in last),
                  f"[{time.time() - t0:.0f}s]", flush=True)
    with open(args.out, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    s = summarize(rows, tuple(args.D))
    for (n, D), v in sorted(s["mean_abs_rel_error"].items()):
        print(f"N={n:3d} D={D:3d} mean |err|={v:.4f} max |err|={s['max_abs_rel_error'][(n, D)]:.4f}")
    print(f"D-converging fraction: {s['converging_fraction']:.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
