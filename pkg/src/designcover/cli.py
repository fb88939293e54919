"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 size-cap refusal.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .errors import DataError, SizeCapError, UsageError
from .formats import read_manifest, read_measurement_spec, read_points_csv
from .synthetic import PROXIES

log = logging.getLogger("designcover")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, measurements_required=True):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", help="corpus manifest JSON")
    src.add_argument("--points", help="points CSV (id,m0,...)")
    p.add_argument("--measurements", required=measurements_required,
                   help="measurement spec JSON (names, landmark pairs, tolerance_m)")
    p.add_argument("--candidates", choices=["centered", "combinatorial"], default="centered")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test", help="held-out points CSV or manifest to score the boxes on")
    p.add_argument("--min-members", type=int, default=3)
    p.add_argument("--center-fraction", type=float, default=0.5)
    p.add_argument("--extrapolate", action="store_true",
                   help="synthesize substitutes for sparse or off-center boxes")
    p.add_argument("--samples", type=int, default=20,
                   help="points sampled per sparse box when extrapolating")
    p.add_argument("--timings", action="store_true",
                   help="record wall-clock timings in the report (breaks byte-identical reruns)")
    p.add_argument("--comment", default="")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="designcover", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("cover-all", help="greedy cover of every subject")
    _common(p)
    p = sub.add_parser("cover-k", help="greedy cover with a fixed number of boxes")
    _common(p)
    p.add_argument("--k", type=int, required=True)
    p = sub.add_parser("shift", help="shifted-grid (1+1/l)^2 approximation, d=2 only")
    _common(p)
    p.add_argument("--l", type=int, required=True)

    p = sub.add_parser("evaluate", help="held-out coverage of a report's boxes")
    p.add_argument("--report", required=True)
    p.add_argument("--test", required=True, help="points CSV or corpus manifest JSON")
    p.add_argument("--measurements", help="needed when --test is a manifest")
    p.add_argument("--out", help="directory for evaluation.json")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("extrapolate", help="add Gaussian-sampled synthetic subjects")
    p.add_argument("--corpus", required=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--level", type=float, help="Mahalanobis radius for ellipsoid sampling")
    p.add_argument("--variance-fraction", type=float, default=0.99)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth", help="write a synthetic corresponded corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--holdout", type=int, default=0, help="extra test subjects from the same model")
    p.add_argument("--kind", choices=sorted(PROXIES), default="heads")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    return ap


def _cover(args) -> dict:
    spec = read_measurement_spec(args.measurements)
    corpus = points = None
    if args.corpus:
        corpus = pipeline.load_corpus(read_manifest(args.corpus))
    else:
        points = read_points_csv(args.points)
    test = pipeline.load_test_points(args.test, spec) if args.test else None
    mode = {"cover-all": "all", "cover-k": "k", "shift": "shift"}[args.command]
    comment = args.comment
    if {e.tolerance for e in spec.entries} & {0.0267, 0.0276}:
        comment = (comment + "; " if comment else "") + pipeline.GLASSES_NOTE
    report = pipeline.run_cover(
        spec, mode, corpus=corpus, points=points,
        k=getattr(args, "k", None), l=getattr(args, "l", None),
        candidates=args.candidates, out_dir=args.out, seed=args.seed,
        min_members=args.min_members, center_tolerance_fraction=args.center_fraction,
        extrapolate=args.extrapolate, n_samples=args.samples, test_points=test,
        record_timings=args.timings, comment=comment,
    )
    out = {"algorithm": report.algorithm, "boxes": len(report.boxes),
           "train_coverage": report.train_coverage, "report": str(Path(args.out) / "report.json")}
    if "epsilon" in report.parameters:
        out["epsilon"] = report.parameters["epsilon"]
    if report.heldout_coverage is not None:
        out["heldout_coverage"] = report.heldout_coverage
    return out


def _evaluate(args) -> dict:
    report = pipeline.RunReport.load(args.report)
    spec = read_measurement_spec(args.measurements) if args.measurements else None
    test = pipeline.load_test_points(args.test, spec)
    frac = pipeline.evaluate_holdout(report, test)
    result = {"heldout_coverage": frac, "n_test": len(test), "boxes": len(report.boxes)}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "evaluation.json").write_text(json.dumps(result, indent=1, sort_keys=True) + "\n")
    return result


def _extrapolate(args) -> dict:
    if args.count is None and args.level is None:
        raise UsageError("extrapolate needs --count or --level")
    spec = read_measurement_spec(args.measurements)
    manifest = read_manifest(args.corpus)
    corpus = pipeline.load_corpus(manifest)
    res = pipeline.run_extrapolate(corpus, spec, args.count, args.level, args.seed, args.out,
                                   args.variance_fraction, manifest)
    return {"subjects": len(res.points), "new": len(res.meshes),
            "manifest": str(Path(args.out) / "manifest.json")}


def _synth(args) -> dict:
    proxy = PROXIES[args.kind]()
    res = pipeline.synth_corpus(proxy.template, proxy.modes, proxy.weight_model, args.n,
                                args.seed, args.out, args.holdout, proxy.spec)
    return {"train": args.n, "holdout": args.holdout,
            "manifest": str(Path(args.out) / "manifest.json")}


COMMANDS = {
    "cover-all": _cover, "cover-k": _cover, "shift": _cover,
    "evaluate": _evaluate, "extrapolate": _extrapolate, "synth": _synth,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse errors (code 1 here) and --help (code 0)
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"designcover: usage error: {exc}", file=sys.stderr)
        return 1
    except SizeCapError as exc:
        print(f"designcover: refused: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"designcover: data error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
