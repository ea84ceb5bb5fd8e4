"""Command line entry point: ``rademacher-clt {verify,bound,surrogate,rates}``."""
from __future__ import annotations

import argparse
import configparser
import sys

from .errors import CapacityError, RademacherError, ValidationError
from .experiments import ExperimentConfig, calculus_ok, parse_n_range, run

EXIT_OK, EXIT_CONTRACT, EXIT_CAPACITY = 0, 1, 2


def _list(text, cast=str):
    return [cast(x.strip()) for x in str(text).split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rademacher-clt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    # Defaults are None so that config-file values apply unless a flag is given.
    common.add_argument("--config", help="INI file; keys match the long flag names")
    common.add_argument("--n", help="size range: lo..hi (doubling), a list 4,8 or one value")
    common.add_argument("--p", type=float, help="edge or cell probability")
    common.add_argument("--theta", type=float, help="degree model: p = theta / (n - 1)")
    common.add_argument("--dim", type=int, help="lattice dimension")
    common.add_argument("--model", choices=["subgraph", "degree", "voxel", "plaquette"])
    common.add_argument("--patterns", help="comma list of pattern names or edge-list files")
    common.add_argument("--degrees", help="comma list of degrees")
    common.add_argument("--samples", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--backend", choices=["exact", "mc", "auto"])
    common.add_argument("--target", choices=["stated", "oracle"],
                        help="plaquette Gaussian target: unsigned closed form or signed definitional covariance")
    common.add_argument("--count", type=int, help="verify: number of random functionals")
    common.add_argument("--out", help="CSV output path (a JSON summary is written alongside)")
    sub.add_parser("verify", parents=[common], help="calculus identity suite")
    sub.add_parser("bound", parents=[common], help="second-order bound terms over an n range")
    sub.add_parser("surrogate", parents=[common], help="cosine lower-bound surrogate next to the bound")
    sub.add_parser("rates", parents=[common], help="append log-log slopes to an existing results CSV")
    return parser


def config_from_args(args) -> ExperimentConfig:
    values: dict = {}
    if args.config:
        cp = configparser.ConfigParser()
        if not cp.read(args.config):
            raise ValidationError(f"cannot read config file {args.config}")
        for section in cp.sections():
            values.update(cp[section])
    for key in ("n", "p", "theta", "dim", "model", "patterns", "degrees", "samples", "seed", "backend",
                "target", "count", "out"):
        val = getattr(args, key)
        if val is not None:
            values[key] = val

    model = values.get("model", "subgraph")
    if args.command == "verify":
        kind = "verify-calculus"
    elif args.command == "bound":
        kind = {"subgraph": "bound-subgraph", "degree": "bound-degree"}.get(model, "bound-cubical")
    else:
        kind = args.command

    kw: dict = {"kind": kind, "model": model}
    if "n" in values:
        kw["n_values"] = parse_n_range(values["n"])
    for key, cast in (("p", float), ("theta", float), ("dim", int), ("samples", int), ("seed", int),
                      ("count", int)):
        if key in values:
            kw[key] = cast(values[key])
    for key in ("backend", "out", "target"):
        if key in values:
            kw[key] = values[key]
    if "patterns" in values:
        kw["patterns"] = _list(values["patterns"])
    if "degrees" in values:
        kw["degrees"] = _list(values["degrees"], int)
    return ExperimentConfig(**kw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        rows = run(config)
    except CapacityError as exc:
        print(f"capacity error: {exc}. Try --backend mc or a smaller --n.", file=sys.stderr)
        return EXIT_CAPACITY
    except (RademacherError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    for r in rows:
        print(f"{r.experiment}\tn={r.n}\t{r.i}{',' if r.i else ''}{r.j}\t{r.term}\t{r.value:.6g}\t±{r.std_error:.2g}")
    if config.kind == "verify-calculus":
        sizes = {r.n for r in rows}
        if not all(calculus_ok({r.term: r.value for r in rows if r.n == n}) for n in sizes):
            print("contract violated: a residual exceeds its tolerance", file=sys.stderr)
            return EXIT_CONTRACT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
