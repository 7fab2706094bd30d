"""Command line entry point: ``vemmd convergence | simulate | mesh``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from . import mesh as meshmod
from .problems import PROBLEMS

log = logging.getLogger("vemmd")


def _times(text):
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad time list {text!r}") from exc


def _parser():
    p = argparse.ArgumentParser(prog="vemmd", description="Polygonal VEM solver for miscible displacement.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convergence", help="error table for a manufactured problem")
    c.add_argument("--problem", required=True, choices=["ex1", "ex2"])
    c.add_argument("--family", required=True, choices=meshmod.FAMILIES)
    c.add_argument("--levels", type=int, default=5)
    c.add_argument("--out", required=True, type=Path)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--T", type=float, default=None, help="final time (default: the problem's)")
    c.add_argument("--absolute", action="store_true", help="report absolute instead of relative errors")
    c.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("simulate", help="run a problem and export fields")
    s.add_argument("--problem", required=True, choices=sorted(PROBLEMS))
    s.add_argument("--family", default="square", choices=meshmod.FAMILIES)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--tau", type=float, required=True)
    s.add_argument("--snapshots", type=_times, default=())
    s.add_argument("--T", type=float, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True, type=Path)
    s.add_argument("--format", choices=["csv", "vtk"], default="csv")

    m = sub.add_parser("mesh", help="generate a mesh and write it as JSON")
    m.add_argument("--family", required=True, choices=meshmod.FAMILIES)
    m.add_argument("--n", type=int, required=True)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", required=True, type=Path)
    return p


def _convergence(args):
    rows = harness.run_convergence(
        args.problem, args.family, args.levels, T=args.T, seed=args.seed,
        relative=not args.absolute, workers=args.workers,
    )
    harness.write_rows(rows, args.out)
    print(harness.format_rows(rows))


def _simulate(args):
    mesh, disc, states = harness.simulate(
        args.problem, args.family, args.n, args.tau, snapshots=args.snapshots, T=args.T, seed=args.seed
    )
    args.out_dir.mkdir(parents=True, exist_ok=True)
    times = sorted(states)
    if args.snapshots:
        # report the stored states closest to the requested times
        times = sorted({min(times, key=lambda t: abs(t - s)) for s in args.snapshots})
    for t in times:
        path = args.out_dir / f"{args.problem}_t{t:g}.{args.format}"
        harness.export_fields(mesh, states[t], path, fmt=args.format, elements=disc.elements)
        log.info("wrote %s", path)


def _mesh(args):
    m = meshmod.generate(args.family, args.n, seed=args.seed)
    m.dump(args.out)
    log.info("%s n=%d: %d cells, %d edges, h=%.6f", args.family, args.n, m.n_cells, m.n_edges, m.h)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    handler = {"convergence": _convergence, "simulate": _simulate, "mesh": _mesh}[args.command]
    try:
        handler(args)
    except Exception as exc:  # diagnostic plus nonzero exit for any failure
        log.error("%s: %s", type(exc).__name__, exc)
        log.debug("traceback", exc_info=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
