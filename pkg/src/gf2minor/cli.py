"""Command line front end: ``gf2minor {experiment,sample,core,pipeline}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .gf2 import GF2Matrix
from .hypergraph import Hypergraph, core_prediction, d_core
from .matroid import BinaryMatroid, fano
from .pipeline import Columns, PipelineConfig, run_pipeline
from .sampler import ModelParams, sample_supports, write_sample


def _override(text: str) -> tuple[str, object]:
    key, _, raw = text.partition("=")
    if not key or not _:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gf2minor", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("experiment", help="run a seeded Monte Carlo experiment")
    ex.add_argument("--kind", choices=harness.KINDS)
    ex.add_argument("--profile", help="named parameter preset (see --list)")
    ex.add_argument("--list", action="store_true", help="list profiles and exit")
    ex.add_argument("--trials", type=int)
    ex.add_argument("--seed", type=int)
    ex.add_argument("--set", dest="overrides", type=_override, action="append", default=[], metavar="KEY=VALUE")
    ex.add_argument("--workers", type=int, default=1)
    ex.add_argument("--out")
    ex.add_argument("--format", choices=("json", "csv"), default="json")

    sa = sub.add_parser("sample", help="draw a matrix from A(n, m, k)")
    sa.add_argument("--n", type=int, required=True)
    sa.add_argument("--m", type=int, required=True)
    sa.add_argument("--k", type=int, required=True)
    sa.add_argument("--seed", type=int, default=0)
    sa.add_argument("--out", required=True)

    co = sub.add_parser("core", help="peel a sampled or stored matrix to its d-core")
    co.add_argument("--matrix", help="matrix file; otherwise sample from --n --m --k --seed")
    co.add_argument("--n", type=int)
    co.add_argument("--m", type=int)
    co.add_argument("--k", type=int)
    co.add_argument("--seed", type=int, default=0)
    co.add_argument("--d", type=int, required=True)
    co.add_argument("--out")

    pi = sub.add_parser("pipeline", help="search for a target matroid as a minor")
    pi.add_argument("--matrix", help="matrix file; otherwise sample from --n --m --k --seed")
    pi.add_argument("--n", type=int)
    pi.add_argument("--m", type=int)
    pi.add_argument("--k", type=int)
    pi.add_argument("--seed", type=int, default=0)
    pi.add_argument("--L", type=float, default=3.0)
    pi.add_argument("--zeta", type=float, default=0.5)
    pi.add_argument("--omega", type=int, default=2000)
    pi.add_argument("--eps0", type=float)
    pi.add_argument("--target", default="fano", help="matroid file, or 'fano'")
    pi.add_argument("--even-k", action="store_true", help="force the even-k adjustment")
    pi.add_argument("--debug", action="store_true", help="cross-check both phi_R routes while scanning")
    pi.add_argument("--out", default="trace.json")
    return ap


def _columns(args) -> tuple[Columns, dict]:
    if args.matrix:
        return Columns.of(GF2Matrix.load(args.matrix)), {"matrix": args.matrix}
    if None in (args.n, args.m, args.k):
        raise SystemExit("give --matrix or all of --n --m --k")
    p = ModelParams(args.n, args.m, args.k, args.seed)
    return Columns(p.n, sample_supports(p)), p.to_json()


def _emit(obj: dict, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_experiment(args) -> int:
    if args.list:
        for name, prof in sorted(harness.load_profiles().items()):
            print(f"{name:24s} {prof['kind']}")
        return 0
    overrides = dict(args.overrides)
    if args.profile:
        spec = harness.spec_from_profile(args.profile, args.trials, args.seed, overrides)
        if args.kind and args.kind != spec.kind:
            raise SystemExit(f"profile {args.profile!r} is a {spec.kind} experiment, not {args.kind}")
    elif args.kind:
        spec = harness.ExperimentSpec(args.kind, overrides, args.trials or 1, args.seed or 0)
    else:
        raise SystemExit("give --profile or --kind")
    spec.workers = args.workers
    report = harness.run_experiment(spec)
    text = harness.emit_report(report, args.format, args.out)
    if not args.out:
        sys.stdout.write(text)
    for name, v in sorted(report.verdicts.items()):
        tag = "info" if v.get("informational") else ("PASS" if v["pass"] else "FAIL")
        print(f"[{tag}] {name}: {v['rule']}", file=sys.stderr)
    return 0 if report.passed else 1


def cmd_sample(args) -> int:
    side = write_sample(ModelParams(args.n, args.m, args.k, args.seed), args.out)
    print(f"wrote {args.out} and {side}", file=sys.stderr)
    return 0


def cmd_core(args) -> int:
    cols, source = _columns(args)
    core = d_core(Hypergraph(cols.n, cols.supports), args.d)
    pred = core_prediction(cols.k * cols.m / cols.n, cols.k, args.d)
    _emit(
        {
            "source": source,
            "d": args.d,
            "core_vertices": core.n_vertices,
            "core_edges": core.n_edges,
            "predicted_vertices": cols.n * pred.vertex_fraction,
            "predicted_edges": cols.m * pred.edge_fraction,
            "x": pred.x,
            "subcritical": pred.subcritical,
        },
        args.out,
    )
    return 0


def cmd_pipeline(args) -> int:
    cols, source = _columns(args)
    target = fano() if args.target == "fano" else BinaryMatroid.load(args.target)
    cfg = PipelineConfig(
        L=args.L,
        zeta=args.zeta,
        omega=args.omega,
        eps0=args.eps0,
        even_k_mode=True if args.even_k else None,
        debug=args.debug,
    )
    run = run_pipeline(cols, target, cfg)
    _emit({"source": source, "config": cfg.to_json(), **run.to_json()}, args.out)
    if run.ok:
        print(f"certificate found; contract {len(run.certificate.contract_set)} columns", file=sys.stderr)
    else:
        print(f"failed at {run.failure.stage}: {run.failure.error}: {run.failure.message}", file=sys.stderr)
    return 0 if run.ok else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return {
        "experiment": cmd_experiment,
        "sample": cmd_sample,
        "core": cmd_core,
        "pipeline": cmd_pipeline,
    }[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
