"""Run the Monte Carlo campaigns at the sizes used by the acceptance suite.

Usage: python scripts/run_campaigns.py [--only NAME ...] [--threads K] [--out DIR]

Writes ``<name>.json`` and ``<name>.csv`` per campaign and exits 1 when a gate fails.
"""
import argparse
import sys
import time
from pathlib import Path

from freeconv.experiments import ExperimentConfig, run_experiment

CAMPAIGNS = {
    "rigidity": dict(N_list=(500, 1000), seeds=tuple(range(20))),
    "local-law": dict(N_list=(500,), seeds=tuple(range(20))),
    "edge-fluct": dict(N_list=(250, 500, 1000, 2000), seeds=tuple(range(50))),
    "ks": dict(N_list=(1000,), seeds=tuple(range(20))),
}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--only", nargs="+", choices=sorted(CAMPAIGNS), help="subset of campaigns")
    p.add_argument("--threads", type=int, default=1, help="worker threads")
    p.add_argument("--out", default="runs/campaigns", help="output directory")
    args = p.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ok = True
    for name in args.only or CAMPAIGNS:
        cfg = ExperimentConfig(**CAMPAIGNS[name], threads=args.threads)
        t0 = time.perf_counter()
        rep = run_experiment(name, cfg)
        (out / f"{name}.json").write_text(rep.to_json())
        (out / f"{name}.csv").write_text(rep.to_csv())
        print(f"== {name} ({time.perf_counter() - t0:.1f} s)")
        for g in rep.gates:
            print(f"   {g['status']:>12}  {g['name']:<28} {g['value']:.4g}  {g['threshold']}", flush=True)
        ok &= rep.passed
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
