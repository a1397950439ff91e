"""Command line front end.

    tbsite <spectrum|site-energies|locality|relax|converge>
           [--config run.json] [--out DIR] [--threads N] ...

Every run echoes its fully resolved configuration (seed included) to
``<out>/run.json``.  The ``TB_OUT`` environment variable overrides
``--out``.  With ``--threads 1`` reruns of the same configuration produce
byte-identical output files.

Exit codes: 0 success, 1 configuration/usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .harness import (
    RunConfig,
    run_convergence,
    run_locality,
    run_relax,
    run_site_energies,
    run_spectrum,
)

_DISPATCH = {
    "spectrum": run_spectrum,
    "site-energies": run_site_energies,
    "locality": run_locality,
    "relax": run_relax,
    "converge": run_convergence,
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="tbsite", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name in _DISPATCH:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="run-configuration JSON file")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument(
            "--threads", type=int, default=None, help="cap BLAS threads (1 = reproducible bytes)"
        )
        if name == "relax":
            p.add_argument("--R", type=float, help="free-region radius")
            p.add_argument("--Rbuf", type=float, help="clamped buffer width")
            p.add_argument("--gtol", type=float, help="gradient infinity-norm tolerance")
            p.add_argument("--max-iter", type=int, help="iteration cap")
    return parser


def _load_config(args) -> RunConfig:
    doc = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise _UsageError(f"config file not found: {path}")
        with open(path) as fh:
            doc = json.load(fh)
    doc.setdefault("experiment", args.command)
    if doc["experiment"] != args.command:
        raise _UsageError(
            f"config is for experiment {doc['experiment']!r}, not {args.command!r}"
        )
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.command == "relax":
        overrides = {
            "R": args.R,
            "Rbuf": args.Rbuf,
            "gtol": args.gtol,
            "max_iter": args.max_iter,
        }
        relax_doc = dict(doc.get("relax", {}))
        relax_doc.update({k: v for k, v in overrides.items() if v is not None})
        doc["relax"] = relax_doc
    return RunConfig.from_dict(doc)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1

    try:
        cfg = _load_config(args)
    except (_UsageError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out = os.environ.get("TB_OUT", args.out)
    out_p = Path(out)
    out_p.mkdir(parents=True, exist_ok=True)

    def _run():
        (out_p / "run.json").write_text(
            json.dumps({"seed": cfg.seed, "config": cfg.to_dict()}, indent=2, sort_keys=True)
            + "\n"
        )
        _DISPATCH[args.command](cfg, out=out_p)

    try:
        if args.threads is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                _run()
        else:
            _run()
    # LinAlgError subclasses ValueError, so it must be matched first to get
    # the numerical-failure exit code.
    except (np.linalg.LinAlgError, RuntimeError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
