"""Command-line interface.

Every command writes into a fresh run directory ``<output root>/<command>-<digest>``
together with ``manifest.json``.  Outputs are staged in a temporary directory
and moved into place only on success, so a failing command leaves no files.

Exit codes: 0 success, 1 a verification or experiment gate failed,
2 invalid input (bad spec, malformed JSON, unknown flag or name).

Environment: ``FREECONV_OUTPUT_ROOT`` (default ``./runs``) and
``FREECONV_THREADS`` (default 1) supply defaults for ``--out`` and ``--threads``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

from . import __version__
from .errors import FreeConvError
from .measure import discretize, load_measure, make_reference_measure

EXIT_OK, EXIT_GATE, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Invalid user input; maps to exit code 2."""


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load(path):
    try:
        return load_measure(path)
    except FileNotFoundError:
        raise InputError(f"measure file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path}: {exc}") from None
    except (FreeConvError, ValueError, TypeError, KeyError) as exc:
        raise InputError(f"invalid measure spec {path}: {exc}") from None


def parse_seeds(text: str) -> list[int]:
    """``"7"``, ``"1,2,5"`` or the inclusive range ``"1..5"``."""
    try:
        if ".." in text:
            lo, hi = text.split("..")
            seeds = list(range(int(lo), int(hi) + 1))
        else:
            seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise InputError(f"cannot parse seeds {text!r}") from None
    if not seeds or any(s < 0 for s in seeds):
        raise InputError("seeds must be non-negative integers")
    return seeds


class _Run:
    """Run-scoped output directory with atomic publication."""

    def __init__(self, args, command: str, config: dict, inputs: list[str]):
        self.root = Path(args.out)
        self.command = command
        self.config = config
        self.inputs = {str(p): _sha256(p) for p in inputs}
        blob = json.dumps({"command": command, "config": config, "inputs": self.inputs},
                          sort_keys=True)
        self.name = f"{command}-{hashlib.sha256(blob.encode()).hexdigest()[:12]}"
        self.stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=self._ensure_root()))
        self.outputs: list[str] = []
        self.t0 = time.perf_counter()

    def _ensure_root(self):
        self.root.mkdir(parents=True, exist_ok=True)
        return self.root

    def write(self, name: str, text: str):
        (self.stage / name).write_text(text)
        self.outputs.append(name)

    def publish(self, seeds=None) -> Path:
        manifest = {"command": self.command, "argv": sys.argv[1:], "config": self.config,
                    "inputs": self.inputs, "seeds": seeds or [], "outputs": sorted(self.outputs),
                    "version": __version__,
                    "runtime_seconds": round(time.perf_counter() - self.t0, 3)}
        (self.stage / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        final = self.root / self.name
        if final.exists():
            shutil.rmtree(final)
        os.replace(self.stage, final)
        return final

    def discard(self):
        shutil.rmtree(self.stage, ignore_errors=True)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n"


# ---------------------------------------------------------------------------
# commands

def cmd_convolve(args) -> int:
    from .density import density_grid
    from .edge import edge_expansion, locate_lower_edge
    mu1, mu2 = _load(args.mu1), _load(args.mu2)
    cfg = {"points": args.points}
    run = _Run(args, "convolve", cfg, [args.mu1, args.mu2])
    try:
        rep = locate_lower_edge(mu1, mu2)
        if not rep.degenerate:
            rep = edge_expansion(mu1, mu2, rep)
        table = density_grid(mu1, mu2, n_points=args.points)
        run.write("density.csv", table.to_csv())
        run.write("edge.json", _dump(rep.to_dict()))
    except BaseException:
        run.discard()
        raise
    out = run.publish()
    print(f"E_- = {float(rep.E_minus)!r}  E_+ = {float(rep.E_plus)!r}  mass = {table.mass:.6f}")
    print(out)
    return EXIT_OK


def cmd_edge(args) -> int:
    from .edge import edge_expansion, locate_lower_edge
    mu1, mu2 = _load(args.mu1), _load(args.mu2)
    run = _Run(args, "edge", {}, [args.mu1, args.mu2])
    try:
        rep = locate_lower_edge(mu1, mu2)
        if not rep.degenerate:
            rep = edge_expansion(mu1, mu2, rep)
        run.write("edge.json", _dump(rep.to_dict()))
    except BaseException:
        run.discard()
        raise
    out = run.publish()
    print(f"E_- = {float(rep.E_minus)!r}  E_+ = {float(rep.E_plus)!r}  residual = {rep.edge_residual:.3g}")
    print(out)
    return EXIT_OK


def cmd_quantiles(args) -> int:
    from .density import quantiles
    if args.n < 1:
        raise InputError("--n must be positive")
    mu1, mu2 = _load(args.mu1), _load(args.mu2)
    run = _Run(args, "quantiles", {"n": args.n}, [args.mu1, args.mu2])
    try:
        q = quantiles(mu1, mu2, args.n)
        run.write("quantiles.csv", q.to_csv())
    except BaseException:
        run.discard()
        raise
    print(run.publish())
    return EXIT_OK


def _model_measures(args, N):
    mus = []
    for path in (args.mu_a, args.mu_b):
        mu = _load(path) if path else make_reference_measure("uniform")
        if mu.is_atomic:
            if mu.locations.size != N:
                raise InputError(f"atomic spec {path} has {mu.locations.size} atoms, --n is {N}")
            mus.append(mu.locations)
        else:
            mus.append(discretize(mu, N).locations)
    return mus


def cmd_sample(args) -> int:
    from .rmt import ORTHOGONAL, UNITARY, draw
    if args.n < 2:
        raise InputError("--n must be at least 2")
    a, b = _model_measures(args, args.n)
    field = ORTHOGONAL if args.orthogonal else UNITARY
    inputs = [p for p in (args.mu_a, args.mu_b) if p]
    run = _Run(args, "sample", {"n": args.n, "seed": args.seed, "field": field}, inputs)
    try:
        s = draw(a, b, args.n, args.seed, field, vectors=False)
        run.write("eigenvalues.csv", s.eigen_csv())
    except BaseException:
        run.discard()
        raise
    print(run.publish(seeds=[args.seed]))
    return EXIT_OK


def cmd_verify_identities(args) -> int:
    from .rmt import IDENTITY_TOL, ORTHOGONAL, UNITARY, draw, fluctuation_observables
    if args.n < 2:
        raise InputError("--n must be at least 2")
    if args.z and len(args.z) % 2:
        raise InputError("--z takes pairs RE IM")
    zs = [complex(args.z[i], args.z[i + 1]) for i in range(0, len(args.z), 2)] if args.z else None
    a, b = _model_measures(args, args.n)
    field = ORTHOGONAL if args.orthogonal else UNITARY
    s = draw(a, b, args.n, args.seed, field)
    if zs is None:
        mid = 0.5 * (a.min() + a.max() + b.min() + b.max()) - a.mean() - b.mean()
        zs = [mid + 0.1j, mid + 0.3 + 0.02j]
    if any(z.imag <= 0 for z in zs):
        raise InputError("identity checks need Im z > 0")
    cfg = {"n": args.n, "seed": args.seed, "field": field, "z": [[z.real, z.imag] for z in zs],
           "perturbation": args.inject_perturbation}
    inputs = [p for p in (args.mu_a, args.mu_b) if p]
    run = _Run(args, "verify-identities", cfg, inputs)
    rows, ok = [], True
    try:
        for z in zs:
            rep = fluctuation_observables(s, z, perturb=1e-6 if args.inject_perturbation else 0.0)
            for name, val in sorted(rep.residuals.items()):
                passed = val <= IDENTITY_TOL
                ok &= passed
                rows.append({"z": [z.real, z.imag], "identity": name, "residual": val,
                             "passed": passed})
        run.write("identities.json", _dump(rows))
    except BaseException:
        run.discard()
        raise
    out = run.publish(seeds=[args.seed])
    print(f"{'z':>22}  {'identity':<22} {'residual':>10}  status")
    for r in rows:
        z = complex(*r["z"])
        print(f"{str(z):>22}  {r['identity']:<22} {r['residual']:10.2e}  "
              f"{'PASS' if r['passed'] else 'FAIL'}")
    print(out)
    return EXIT_OK if ok else EXIT_GATE


def cmd_experiment(args) -> int:
    from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment
    if args.name not in EXPERIMENTS:
        raise InputError(f"unknown experiment {args.name!r}; choose from {sorted(EXPERIMENTS)}")
    base = {}
    inputs = []
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise InputError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"malformed JSON in {args.config}: {exc}") from None
        if not isinstance(base, dict):
            raise InputError("config file must hold a JSON object")
        inputs.append(args.config)
    base["seeds"] = args.seeds
    if args.N:
        base["N_list"] = args.N
    if args.orthogonal:
        base["field"] = "orthogonal"
    base["threads"] = args.threads
    try:
        cfg = ExperimentConfig.from_dict(base)
    except (TypeError, ValueError, FreeConvError) as exc:
        raise InputError(f"invalid experiment config: {exc}") from None
    run = _Run(args, f"experiment-{args.name}", cfg.to_dict(), inputs)
    try:
        rep = run_experiment(args.name, cfg)
        run.write("report.json", rep.to_json())
        run.write("report.csv", rep.to_csv())
    except BaseException:
        run.discard()
        raise
    out = run.publish(seeds=list(cfg.seeds))
    for g in rep.gates:
        print(f"{g['status'].upper():>12}  {g['name']:<28} value={g['value']:.4g} "
              f"threshold={g['threshold']}")
    print(f"report hash {hashlib.sha256(rep.to_json().encode()).hexdigest()}")
    print(out)
    return EXIT_OK if rep.passed else EXIT_GATE


# ---------------------------------------------------------------------------

def _threads_default():
    try:
        return max(1, int(os.environ.get("FREECONV_THREADS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=os.environ.get("FREECONV_OUTPUT_ROOT", "runs"),
                        help="output root directory (env FREECONV_OUTPUT_ROOT; default ./runs)")
    common.add_argument("--threads", type=int, default=_threads_default(),
                        help="worker threads, count (env FREECONV_THREADS; default 1)")

    p = argparse.ArgumentParser(prog="freeconv", description="Free additive convolution toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def pair(sp):
        sp.add_argument("mu1", help="first measure spec (JSON file)")
        sp.add_argument("mu2", help="second measure spec (JSON file)")

    sp = sub.add_parser("convolve", parents=[common], help="density table and edge report")
    pair(sp)
    sp.add_argument("--points", type=int, default=2048,
                    help="density grid size, count of points (default 2048)")
    sp.set_defaults(func=cmd_convolve)

    sp = sub.add_parser("edge", parents=[common], help="edge location and square-root expansion")
    pair(sp)
    sp.set_defaults(func=cmd_edge)

    sp = sub.add_parser("quantiles", parents=[common], help="N-quantiles of the convolution")
    pair(sp)
    sp.add_argument("--n", type=int, required=True, help="number of quantiles N, count")
    sp.set_defaults(func=cmd_quantiles)

    def model(sp):
        sp.add_argument("--n", type=int, required=True, help="matrix dimension N, count")
        sp.add_argument("--seed", type=int, required=True, help="random seed, non-negative integer")
        sp.add_argument("--orthogonal", action="store_true",
                        help="Haar orthogonal instead of unitary U")
        sp.add_argument("--mu-a", help="spec of A (JSON file; default uniform on [0, 1])")
        sp.add_argument("--mu-b", help="spec of B (JSON file; default uniform on [0, 1])")

    sp = sub.add_parser("sample", parents=[common], help="eigenvalues of A + U B U*")
    model(sp)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("verify-identities", parents=[common],
                        help="check the exact Green-function identities")
    model(sp)
    sp.add_argument("--z", type=float, nargs="+",
                    help="spectral points as RE IM pairs (dimensionless, Im > 0)")
    sp.add_argument("--inject-perturbation", action="store_true",
                    help="test hook: add 1e-6 to diag(B~G); the checks must then fail")
    sp.set_defaults(func=cmd_verify_identities)

    sp = sub.add_parser("experiment", parents=[common], help="run a Monte Carlo campaign")
    sp.add_argument("name", help="rigidity | local-law | edge-fluct | ks")
    sp.add_argument("--config", help="experiment config (JSON file)")
    seeds = sp.add_mutually_exclusive_group(required=True)
    seeds.add_argument("--seeds", type=parse_seeds, help="seed list: '1..5' or '1,2,3'")
    seeds.add_argument("--seed", type=lambda t: [int(t)], dest="seeds",
                       help="single seed, non-negative integer")
    sp.add_argument("--N", type=int, nargs="+", help="matrix dimensions, counts (overrides config)")
    sp.add_argument("--orthogonal", action="store_true", help="Haar orthogonal U")
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
