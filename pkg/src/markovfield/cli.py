"""Command-line interface.

Exit codes: 0 all assertions passed, 1 an assertion or verdict failed,
2 malformed input (bad file, bad arguments, violated preconditions).
Every run is deterministic given its seed; JSON outputs are canonical and
byte-stable across runs.
"""

import argparse
import sys

import numpy as np

from . import experiments, fileio, markov, stopping
from .field import realize
from .fileio import FormFormatError
from .linalg import SingularSystemError
from .potential import trace_form


def _parse_set(text):
    if not text:
        return frozenset()
    try:
        return frozenset(int(x) for x in text.split(","))
    except ValueError:
        raise ValueError(f"bad vertex set {text!r}: expected comma-separated ids")


def _write_or_print(text, path):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_check_markov(args):
    form = fileio.load_form(args.form)
    field = realize(form, args.seed)
    A = _parse_set(args.set)
    B = _parse_set(args.set_b) if args.set_b else None
    if args.check == "markov":
        rep = markov.check_markov(field, A, args.tol)
    elif args.check == "spectrum":
        rep = markov.check_spectrum_criterion(field, A, args.tol)
    elif args.check == "pseudo":
        rep = markov.check_pseudo_markov(field, A, args.tol)
    elif args.check == "two-set":
        if B is None:
            raise ValueError("--set-b is required for the two-set check")
        rep = markov.check_two_set(field, A, B, args.tol)
    else:
        if B is None:
            raise ValueError("--set-b is required for the sigma-join check")
        rep = markov.check_sigma_join_identity(field, A, B, args.tol)
    _write_or_print(rep.to_json(), args.json)
    return 0 if rep.holds else 1


def _cmd_check_strong_markov(args):
    form = fileio.load_form(args.form)
    field = realize(form, args.seed)
    rule = stopping.load_rule(args.rule, form.space)
    rep = stopping.strong_markov_mc(field, rule, N=args.samples, seed=args.seed)
    _write_or_print(rep.to_json(), args.json)
    return 0 if rep.passed else 1


def _cmd_scan(args):
    forms = []
    for path in args.form:
        name = path.rsplit("/", 1)[-1]
        forms.append((name, fileio.load_form(path)))
    result = markov.equivalence_scan(forms, tol=args.tol)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(result.to_csv())
    if args.json:
        fileio.save_json(args.json, [row.to_dict() for row in result.rows])
    if not args.csv and not args.json:
        sys.stdout.write(result.to_csv())
    return 0 if result.ok else 1


def _cmd_trace(args):
    form = fileio.load_form(args.form)
    S = _parse_set(args.set)
    traced = trace_form(form, S)
    if args.csv:
        fileio.save_matrix_csv(args.csv, traced.dense_q(),
                               [str(v) for v in sorted(S)])
    _write_or_print(fileio.dump_form(traced), args.out)
    return 0


def _cmd_example(args):
    radii = tuple(float(r) for r in args.radii.split(",")) if args.radii else (0.4, 0.3, 0.2, 0.1)
    config = experiments.ExperimentConfig(
        experiment=args.id,
        n=args.n,
        delta=args.delta,
        mesh_n=args.mesh_n,
        radii=radii,
        seed=args.seed,
        samples=args.samples,
    )
    report = experiments.run_experiment(config)
    sys.stderr.write(report.summary() + "\n")
    if args.json:
        _write_or_print(report.to_json(), args.json)
    else:
        sys.stdout.write(report.to_json())
    return 0 if report.passed else 1


def _cmd_sample(args):
    form = fileio.load_form(args.form)
    field = realize(form, args.seed)
    batch = field.sample_batch(args.samples, args.seed)
    text = fileio.matrix_csv(batch, [str(v) for v in range(form.n)])
    _write_or_print(text, args.csv)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="markovfield",
        description="Gaussian fields on weighted graphs: Markov-property "
                    "verification and experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, form_required=True):
        p.add_argument("--form", required=form_required, help="form file (graph+form text format)")
        p.add_argument("--tol", type=float, default=1e-9, help="verdict tolerance")
        p.add_argument("--seed", type=int, default=0, help="random seed")
        p.add_argument("--json", default=None, help="write the JSON report here")

    p = sub.add_parser("check-markov", help="run an exact Markov-type check on a vertex set")
    add_common(p)
    p.add_argument("--set", required=True, help="comma-separated vertex ids")
    p.add_argument("--set-b", default=None, help="inner vertex set for nested checks")
    p.add_argument("--check", default="markov",
                   choices=["markov", "spectrum", "pseudo", "two-set", "sigma-join"])
    p.set_defaults(func=_cmd_check_markov)

    p = sub.add_parser("check-strong-markov",
                       help="Monte Carlo strong-Markov test for an exploration rule")
    add_common(p)
    p.add_argument("--rule", required=True, help="exploration rule config (JSON)")
    p.add_argument("--samples", type=int, default=100_000)
    p.set_defaults(func=_cmd_check_strong_markov)

    p = sub.add_parser("scan", help="locality vs Markov equivalence scan over form files")
    p.add_argument("--form", action="append", required=True, help="form file (repeatable)")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--csv", default=None, help="write the scan table here")
    p.add_argument("--json", default=None)
    p.set_defaults(func=_cmd_scan)

    p = sub.add_parser("trace", help="Schur-complement trace of a form onto a vertex set")
    p.add_argument("--form", required=True)
    p.add_argument("--set", required=True, help="comma-separated vertex ids to keep")
    p.add_argument("--csv", default=None, help="write the traced matrix as CSV")
    p.add_argument("--out", default=None, help="write the traced form file here (default stdout)")
    p.set_defaults(func=_cmd_trace)

    p = sub.add_parser("example", help="run a named experiment")
    p.add_argument("id", choices=sorted(experiments.EXPERIMENTS))
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--mesh-n", type=int, default=64, dest="mesh_n")
    p.add_argument("--radii", default=None, help="comma-separated circle radii")
    p.add_argument("--samples", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", default=None)
    p.set_defaults(func=_cmd_example)

    p = sub.add_parser("sample", help="draw field samples and emit them as CSV")
    p.add_argument("--form", required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", default=None, help="output path (default stdout)")
    p.set_defaults(func=_cmd_sample)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormFormatError, SingularSystemError, ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
