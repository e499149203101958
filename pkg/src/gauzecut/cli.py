"""Command line entry point: ``gauzecut <subcommand> [options]``.

Exit status: 0 on success, 1 when any table cell or job failed, 2 on bad
configuration or input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness, mesh
from .config import METHODS, ExperimentSpec, load_spec
from .contour import load_contour, segment_contour, shape_files
from .errors import (
    ConfigError,
    DegenerateContourError,
    GauzeError,
    InvalidParamsError,
    OutOfBoundsError,
    PolicyFileError,
    ShapeParseError,
    TooManySegmentsError,
)
from .planner import PolicyStore, load_plan, plan, plan_schedule, train_local
from .policy import save_policy
from .runtime import derive_seed
from .trpo import summarize

log = logging.getLogger("gauzecut")

EXIT_OK, EXIT_FAILED, EXIT_SPEC = 0, 1, 2


class SpecError(Exception):
    pass


# bad input, as opposed to a run that failed part way
SPEC_ERRORS = (SpecError, ConfigError, InvalidParamsError, ShapeParseError, OutOfBoundsError,
               DegenerateContourError, TooManySegmentsError, PolicyFileError, FileNotFoundError)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON file of flat settings")
    p.add_argument("--shape", help="contour file, directory, or built-in shape name")
    p.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--trials", type=int, help="evaluation episodes per method")
    p.add_argument("--jobs", type=int, help="worker processes (default: $GAUZE_JOBS or 1)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gauzecut", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="step a sheet and write its trajectory as CSV")
    _common(p)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--every", type=int, default=1, help="write every n-th step")

    p = sub.add_parser("segment", help="split a contour into segments")
    _common(p)

    p = sub.add_parser("plan", help="run the multi-pinch planning pipeline")
    _common(p)
    p.add_argument("--single", action="store_true", help="treat the contour as one segment")

    p = sub.add_parser("train", help="train one local policy for a segment and pinch")
    _common(p)
    p.add_argument("--segment", type=int, default=0)
    p.add_argument("--pinch", required=True, help="pinch vertex as row,col")

    p = sub.add_parser("evaluate", help="evaluate a saved plan manifest")
    _common(p)
    p.add_argument("--plan", required=True, help="manifest.json written by 'plan'")

    for name, text in (("compare", "method comparison table"),
                       ("sweep-noise", "noise robustness sweep"),
                       ("sweep-gravity", "gravity robustness sweep"),
                       ("resolution-study", "score vs sheet resolution")):
        p = sub.add_parser(name, help=text)
        _common(p)

    p = sub.add_parser("report", help="summarize result tables in --out as markdown")
    _common(p)
    return parser


def make_spec(args) -> ExperimentSpec:
    spec = load_spec(args.config)
    changes = {}
    if args.shape:
        changes["shapes"] = (args.shape,)
    if args.methods:
        changes["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
        changes["sweep_trials"] = args.trials
    return replace(spec, **changes) if changes else spec


def _one_shape(spec: ExperimentSpec, width: float):
    shapes = harness.load_shapes(spec, width)
    if len(shapes) != 1:
        raise SpecError(f"this command needs exactly one shape, got {len(shapes)}")
    return shapes[0]


def cmd_simulate(args, spec, out: Path) -> int:
    sheet = mesh.new_sheet(spec.sim)
    path = out / "trajectory.csv"
    mesh.simulate_to_csv(sheet, args.steps, path, args.every)
    print(f"wrote {path} ({args.steps} steps, max drift {sheet.max_drift():.3e})")
    return EXIT_OK


def cmd_segment(args, spec, out: Path) -> int:
    width = spec.sim.width
    doc = []
    for path in [p for s in spec.shapes for p in shape_files(s)]:
        c = load_contour(path, width)
        segs = segment_contour(c, spec.axis)
        doc.append({"shape": c.name, "closed": c.closed, "segments": [
            {"id": s.segment_id, "points": len(s.indices),
             "notch": [float(v) for v in s.notch_point]} for s in segs]})
        print(f"{c.name}: {len(segs)} segment(s) "
              + ", ".join(f"#{s.segment_id}={len(s.indices)} pts" for s in segs))
    (out / "segments.json").write_text(json.dumps(doc, indent=1) + "\n")
    return EXIT_OK


def cmd_plan(args, spec, out: Path) -> int:
    template = harness.make_template(spec.sim, spec.settle_steps)
    contour = _one_shape(spec, template.params.width)
    ctx = harness.plan_context(spec, contour, template)
    name = "drl_single" if args.single else "mdrl"
    store = PolicyStore(out / contour.name / name / "policies")
    result = plan(ctx, single=args.single, jobs=args.jobs, store=store)
    manifest = out / contour.name / name / "manifest.json"
    result.save_manifest(manifest)
    print(f"order {result.segment_order} assignment {result.assignment} "
          f"score {result.best_score:g} (no tension {result.baseline_score:g})")
    print(f"wrote {manifest}")
    return EXIT_OK


def cmd_train(args, spec, out: Path) -> int:
    template = harness.make_template(spec.sim, spec.settle_steps)
    contour = _one_shape(spec, template.params.width)
    segs = segment_contour(contour, spec.axis)
    by_id = {s.segment_id: s for s in segs}
    if args.segment not in by_id:
        raise SpecError(f"segment {args.segment} not in {sorted(by_id)}")
    try:
        pinch = tuple(int(v) for v in args.pinch.split(","))
    except ValueError:
        raise SpecError(f"--pinch must be row,col, got {args.pinch!r}") from None
    ctx = harness.plan_context(spec, contour, template)
    seed = derive_seed(spec.seed, "train", False, args.segment, pinch)
    pol, res = train_local(ctx, by_id[args.segment], pinch, seed)
    stem = f"{contour.name}_seg{args.segment}_r{pinch[0]}_c{pinch[1]}"
    save_policy(pol, out / f"{stem}.policy.json")
    res.write_curve(out / f"{stem}.curve.csv")
    print(f"final mean return {res.curve[-1].mean_return:.4f}; wrote {out / (stem + '.policy.json')}")
    return EXIT_OK


def cmd_evaluate(args, spec, out: Path) -> int:
    template = harness.make_template(spec.sim, spec.settle_steps)
    contour = _one_shape(spec, template.params.width)
    result = load_plan(args.plan)
    ctx = harness.plan_context(spec, contour, template)
    prepared = harness.Prepared("plan", plan_schedule(ctx, result), dict(result.assignment),
                                harness.PlanController(result.drl_segment, result.drl_policy),
                                [tuple(f) for f in result.drl_policy.metadata["fiducials"]])
    table = harness.ResultTable(("trial", "seed", "score"))
    scores = []
    for j in range(spec.trials):
        seed = derive_seed(spec.seed, contour.name, "trial", j)
        s = harness.run_trial(prepared, template, seed, spec.mdp).score(spec.mdp.score_factor)
        scores.append(float(s))
        table.add(trial=j, seed=seed, score=float(s))
    table.write_csv(out / "evaluation.csv")
    st = summarize(scores)
    print(f"mean {st.mean:.3f} std {st.std:.3f} min {st.min:g} max {st.max:g} over {len(scores)} trials")
    return EXIT_OK


def _experiment(fn):
    def run(args, spec, out: Path) -> int:
        harness.write_spec(spec, out)
        result = fn(spec, out, args.jobs)
        for name, table in result.tables.items():
            if name.endswith("summary"):
                print(f"{name}: {len(table.rows)} rows -> {out / (name + '.csv')}")
        for f in result.failures:
            print(f"FAILED {f}", file=sys.stderr)
        return EXIT_FAILED if result.failures else EXIT_OK
    return run


def cmd_report(args, spec, out: Path) -> int:
    text = harness.build_report(out)
    (out / "report.md").write_text(text)
    print(text)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "segment": cmd_segment,
    "plan": cmd_plan,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": _experiment(harness.run_comparison),
    "sweep-noise": _experiment(harness.run_noise_sweep),
    "sweep-gravity": _experiment(harness.run_gravity_sweep),
    "resolution-study": _experiment(harness.run_resolution_study),
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore")
    try:
        spec = make_spec(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, spec, out)
    except SPEC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except GauzeError as exc:
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
