"""Command-line entry point: ``condwco <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .conditional import verify_ce_axioms
from .errors import ConfigurationError, IntegrityError, InvalidInput
from .scenarios import (
    LineExampleParams,
    ScenarioSpec,
    build_line_example,
    human_summary,
    norms_report,
    run_scenario,
)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="condwco", description="Conditional weighted composition operator toolkit")
    ap.add_argument("--seed", type=int, default=0, help="seed for all randomized sampling")
    ap.add_argument("--horizon", type=int, default=None, help="cap on every n sweep")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("file")

    p = sub.add_parser("run", help="run the analyses of a scenario file")
    p.add_argument("file")
    p.add_argument("--out", required=True)

    p = sub.add_parser("line-example", help="build and run the shifted-line scenario")
    defaults = LineExampleParams()
    p.add_argument("--N", type=int, default=defaults.N)
    p.add_argument("--delta", type=float, default=defaults.delta)
    p.add_argument("--t", type=float, default=defaults.t)
    p.add_argument("--r", type=float, default=defaults.r)
    p.add_argument("--p", type=float, default=defaults.p)
    p.add_argument("--a", type=float, default=defaults.a)
    p.add_argument("--kmax", type=int, default=defaults.k_max)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ce-verify", help="randomized conditional-expectation checks")
    p.add_argument("file")
    p.add_argument("--samples", type=int, default=200)

    p = sub.add_parser("norms", help="operator norm report")
    p.add_argument("file")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (InvalidInput, IntegrityError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "validate":
        spec = ScenarioSpec.load(args.file).validate()
        canonical = spec.dumps()
        with open(args.file, encoding="utf-8") as fh:
            same = fh.read() == canonical
        print(f"ok: {len(spec.atoms)} atoms, {len(spec.analyses)} analyses" + ("" if same else " (not in canonical form)"))
        return 0
    if args.command == "run":
        res = run_scenario(ScenarioSpec.load(args.file), args.out, args.seed, args.horizon)
        sys.stdout.write(human_summary(res.summary))
        return 0
    if args.command == "line-example":
        params = LineExampleParams(args.N, args.delta, args.t, args.r, args.p, args.a, args.kmax)
        spec = build_line_example(params, horizon=args.horizon)
        import os

        os.makedirs(args.out, exist_ok=True)
        spec.save(os.path.join(args.out, "scenario.json"))
        res = run_scenario(spec, args.out, args.seed, args.horizon)
        sys.stdout.write(human_summary(res.summary))
        return 0
    if args.command == "ce-verify":
        spec = ScenarioSpec.load(args.file).validate()
        T = spec.operator()
        rep = verify_ce_axioms(T.space, T.A, args.samples, np.random.default_rng(args.seed))
        print("\n".join(rep.lines()))
        return 0 if rep.passed else 3
    if args.command == "norms":
        spec = ScenarioSpec.load(args.file).validate()
        print(json.dumps(norms_report(spec.operator(), args.seed), sort_keys=True, indent=2, ensure_ascii=False))
        return 0
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
