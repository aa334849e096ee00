"""Edge report and scaling table for a measure pair.

Usage: python scripts/edge_scaling.py [MU1.json MU2.json] [--out DIR]

Defaults to uniform[0, 1] with itself.  Writes ``edge.json`` and
``scaling.csv`` and prints the fitted exponents.
"""
import argparse
import json
from pathlib import Path

from freeconv.edge import edge_expansion, locate_lower_edge, scaling_probe
from freeconv.measure import load_measure, make_reference_measure


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("measures", nargs="*", help="two measure spec files")
    p.add_argument("--out", default="runs/edge_scaling", help="output directory")
    args = p.parse_args()
    if args.measures and len(args.measures) != 2:
        p.error("give two measure specs or none")
    if args.measures:
        mu1, mu2 = (load_measure(m) for m in args.measures)
    else:
        mu1 = mu2 = make_reference_measure("uniform")
    rep = edge_expansion(mu1, mu2, locate_lower_edge(mu1, mu2))
    table = scaling_probe(mu1, mu2, rep)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "edge.json").write_text(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / "scaling.csv").write_text(table.to_csv())
    print(f"E_- = {rep.E_minus:.15g}   E_+ = {rep.E_plus:.15g}")
    print(f"x'' = {rep.z_second:.6g}   density coefficient = {rep.density_coefficient:.6g}")
    print(f"sqrt coefficient fitted {rep.sqrt_coefficient:.6g}, "
          f"predicted {rep.sqrt_coefficient_predicted:.6g} ({rep.coefficient_form})")
    for k, v in table.exponents.items():
        print(f"exponent {k:<18} {v:+.4f}")
    print(f"outside ratio Im m sqrt(kappa)/eta = {table.outside_ratio:.4f}")


if __name__ == "__main__":
    main()
