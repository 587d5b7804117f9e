"""Command-line driver.

Every command writes CSV whose first line is a ``#`` comment holding the
full run configuration as JSON. Runtime columns are only written with
``--timings`` so that repeated runs produce identical files.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import study
from .coefficient import (CoefficientError, constant, load_raster, random_cellwise,
                          save_raster)
from .linalg import SolverError
from .mesh import MeshError


def _power_of_two(text: str) -> int:
    value = int(text)
    if value < 2 or value & (value - 1):
        raise argparse.ArgumentTypeError(f"{text} is not a power of two >= 2")
    return value


def _positive(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"{text} must be positive")
    return value


def _ladder(text: str) -> list[int]:
    return [_power_of_two(t) for t in text.split(",") if t]


def _add_coefficient(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--coef-const", type=_positive, metavar="VALUE",
                   help="constant coefficient (default 1)")
    g.add_argument("--coef-random", nargs=4, metavar=("RASTER_M", "LO", "HI", "SEED"),
                   help="i.i.d. uniform cell values")
    g.add_argument("--coef-file", type=Path, metavar="PATH", help="raster text file")


def _add_common(p):
    _add_coefficient(p)
    p.add_argument("--g", type=float, default=1.0, help="constant source term")
    p.add_argument("--tol", type=_positive, default=1e-10, help="CG relative tolerance")
    p.add_argument("--out", type=Path, help="CSV output path (default stdout)")


def _add_k(p):
    p.add_argument("--k", type=int, help="fixed number of patch layers")
    p.add_argument("--k-factor", type=_positive, default=2.0,
                   help="k = ceil(factor * log(1/H)) when --k is absent")
    p.add_argument("--log-base", type=_positive, default=math.e,
                   help="logarithm base of the k rule (default e; 2 gives larger patches)")
    p.add_argument("--workers", type=int, default=1, help="threads for corrector solves")
    p.add_argument("--cache-dir", type=Path, help="reuse corrector sets stored here")
    p.add_argument("--timings", action="store_true", help="add runtime columns")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lodfem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="single multiscale solve")
    p.add_argument("--coarse-m", type=_power_of_two, default=8)
    p.add_argument("--fine-m", type=_power_of_two, default=128)
    _add_common(p)
    _add_k(p)
    p.add_argument("--dump", type=Path, help="write fine solution vectors (.npz)")

    p = sub.add_parser("convergence", help="H ladder against the fine reference")
    p.add_argument("--ladder", type=_ladder, default=[4, 8, 16, 32],
                   help="comma separated coarse m values")
    p.add_argument("--fine-m", type=_power_of_two, default=128)
    p.add_argument("--saturate", action="store_true",
                   help="use patches covering the whole domain (ideal method)")
    _add_common(p)
    _add_k(p)

    p = sub.add_parser("decay", help="corrector truncation error versus k")
    p.add_argument("--coarse-m", type=_power_of_two, default=16)
    p.add_argument("--fine-m", type=_power_of_two, default=64)
    p.add_argument("--vertex", default="center",
                   help="'center' or comma separated coarse vertex ids")
    p.add_argument("--k-max", type=int, help="largest k (default: saturation)")
    _add_common(p)

    p = sub.add_parser("gen-coefficient", help="write a random raster coefficient")
    p.add_argument("--raster-m", type=int, default=64)
    p.add_argument("--lo", type=float, default=0.05)
    p.add_argument("--hi", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    return parser


def make_field(args):
    if args.coef_random is not None:
        r, lo, hi, seed = args.coef_random
        return random_cellwise(int(r), float(lo), float(hi), int(seed))
    if args.coef_file is not None:
        return load_raster(args.coef_file)
    return constant(args.coef_const if args.coef_const is not None else 1.0)


def _config(args) -> dict:
    conf = {}
    for key, value in sorted(vars(args).items()):
        if key in ("out", "dump", "cache_dir", "timings", "workers"):
            continue
        conf[key] = str(value) if isinstance(value, Path) else value
    return conf


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def write_csv(args, columns, rows, summary=()) -> str:
    buf = io.StringIO()
    buf.write(f"# lodfem {args.command} config: {json.dumps(_config(args), sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    for line in summary:
        buf.write(f"# {line}\n")
    text = buf.getvalue()
    if args.out is not None:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return text


def _columns(args):
    return study.SOLVE_COLUMNS + (study.TIMING_COLUMNS if args.timings else [])


def cmd_solve(args):
    field = make_field(args)
    k = study.resolve_k(args.coarse_m, args.k, args.k_factor, args.log_base)
    row, vectors = study.solve_point(field, args.coarse_m, args.fine_m, k, args.g, args.tol,
                                     args.workers, cache_dir=args.cache_dir)
    summary = []
    if row["degenerate"]:
        summary.append("degenerate reference (zero solution): errors are absolute")
    write_csv(args, _columns(args), [row], summary)
    if args.dump is not None:
        np.savez(args.dump, **vectors)


def cmd_convergence(args):
    field = make_field(args)
    rows, slopes = study.convergence(
        field, args.ladder, args.fine_m, args.g, args.k, args.k_factor, args.log_base,
        args.tol, args.workers, args.cache_dir, saturate=args.saturate)
    summary = [f"slope {col} vs N_dof: {_fmt(val)}" for col, val in slopes.items()]
    write_csv(args, _columns(args), rows, summary)


def cmd_decay(args):
    field = make_field(args)
    vertices = None
    if args.vertex != "center":
        vertices = [int(v) for v in args.vertex.split(",") if v]
    rows, factors = study.decay(field, args.coarse_m, args.fine_m, vertices, args.k_max, args.g)
    summary = [f"contraction_factor vertex {v}: {_fmt(f)}" for v, f in factors.items()]
    write_csv(args, study.DECAY_COLUMNS, rows, summary)


def cmd_gen_coefficient(args):
    field = random_cellwise(args.raster_m, args.lo, args.hi, args.seed)
    save_raster(field, args.out)
    print(f"alpha {_fmt(field.alpha)}")
    print(f"beta {_fmt(field.beta)}")
    print(f"contrast {_fmt(field.contrast)}")


COMMANDS = {
    "solve": cmd_solve,
    "convergence": cmd_convergence,
    "decay": cmd_decay,
    "gen-coefficient": cmd_gen_coefficient,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (CoefficientError, MeshError) as exc:
        parser.error(str(exc))
    except (ValueError, FileNotFoundError, SolverError, OSError) as exc:
        print(f"lodfem: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
