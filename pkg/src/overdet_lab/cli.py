"""Command line: ``overdet-lab run | compare | mesh``.

Exit status: 0 ok, 1 solver error (partial results are still written),
2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .assembly import SolverError
from .config import OUTPUT_ENV, ConfigError, load_config, parse_domain_spec
from .geometry import GeometryError

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("overdet_lab")


def cmd_run(args) -> int:
    from .experiments import RUNNERS
    from .report import write_run

    cfg = load_config(args.config)
    runner, columns, keys = RUNNERS[cfg.kind]
    outdir = cfg.output_dir(args.output)
    try:
        outcome = runner(cfg)
    except (SolverError, GeometryError) as exc:
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "results.json").write_text(json.dumps(
            {"kind": cfg.kind, "status": "failed", "errors": [{"point": None, "error": str(exc)}]}, indent=2) + "\n")
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    doc = write_run(outdir, cfg, outcome, columns, keys)
    print(f"{cfg.kind}: {len(outcome.rows)} rows -> {outdir}")
    for k, v in sorted(doc["summary"].items()):
        print(f"  {k} = {v}")
    if outcome.errors:
        for err in outcome.errors:
            print(f"solver error at {err['point']}: {err['error']}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_compare(args) -> int:
    from .report import CompareError, compare_runs

    try:
        rep = compare_runs(args.run_a, args.run_b, tolerance=args.tolerance)
    except CompareError as exc:
        print(f"compare: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.json:
        print(json.dumps(rep, indent=2, sort_keys=True))
        return EXIT_OK
    print(f"kind {rep['kind']}, {rep['rows']} rows, tolerance {rep['tolerance']:g}")
    for s in rep["summary"]:
        print(f"  {s['metric']:28s} a={s['a']:.6g} b={s['b']:.6g} rel={s['rel_diff']:.3g} a/b={s['ratio']:.4g}")
    worst = max((d["rel_diff"] for d in rep["diffs"]), default=0.0)
    print(f"max row-wise relative difference: {worst:.3g}")
    for f in rep["flags"]:
        print(f"  FLAG row {f['row']} {f['metric']}: {f['a']} vs {f['b']}")
    return EXIT_OK


def cmd_mesh(args) -> int:
    from .config import ExperimentConfig
    from .experiments import build_domain
    from .geometry import triangulate, write_mesh

    table, h = parse_domain_spec(args.domain_spec)
    cfg = ExperimentConfig(kind="mesh", domain=table, h=h, source="domain spec")
    mesh = triangulate(build_domain(cfg), h)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_mesh(mesh, out)
    print(f"{mesh.n_vertices} vertices, {len(mesh.triangles)} triangles -> {out} ({mesh.fingerprint()[:12]})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="overdet-lab", description=__doc__.splitlines()[0],
                                epilog=f"Run outputs go under ${OUTPUT_ENV} (default ./overdet_runs).")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a config file")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (overrides the output root)")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("compare", help="compare two run directories")
    c.add_argument("run_a")
    c.add_argument("run_b")
    c.add_argument("--tolerance", type=float, default=1e-9)
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_compare)
    m = sub.add_parser("mesh", help="mesh a domain, e.g. 'fourier:cos=0;0;0.1,h=0.02'")
    m.add_argument("domain_spec")
    m.add_argument("-o", "--output", required=True)
    m.set_defaults(func=cmd_mesh)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, GeometryError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
