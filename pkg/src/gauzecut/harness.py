"""Batch experiments: method comparison, noise and gravity sweeps, and the
resolution study.

Every table cell is an independent job with a seed derived from the master
seed and the cell's key. No-tension runs on the same trial seeds as every
other method, so improvements are paired per trial. Results are written once,
after all jobs finish, as CSV (authoritative) plus an SVG plot.
"""
from __future__ import annotations

import csv
import logging
import math
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import mesh
from .config import ExperimentSpec, spec_dict
from .contour import Contour, build_schedule, load_contour, shape_files
from .controllers import Analytic, ControllerPolicy, Fixed
from .errors import ConfigError
from .mdp import noop_policy, reset, rollout
from .planner import (
    PlanContext,
    PlanController,
    PolicyStore,
    merged_segments,
    plan,
    plan_schedule,
    prune_candidates,
    select_candidates,
)
from .runtime import derive_seed, parallel_map
from .scoring import CutRecord, ScoringGrid, region_mask
from .svgplot import Figure

log = logging.getLogger(__name__)

FAILED = "FAILED"
REFERENCE_FOOTER = (
    "Published reference values (context only, not reproduced at this scale): "
    "multi-pinch DRL improvement 50.6% (std 4.1), single-pinch DRL improvement 43.3% (std 6.3). "
    "Published sweep figures report an unspecified performance score, so absolute "
    "comparison with the improvement percentages here is not possible."
)


# -- tables ------------------------------------------------------------------
def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass
class ResultTable:
    columns: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)

    def add(self, **row) -> None:
        self.rows.append(row)

    def select(self, **match) -> list[dict]:
        return [r for r in self.rows if all(r.get(k) == v for k, v in match.items())]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([_fmt(r.get(c)) for c in self.columns])

    @property
    def failed(self) -> bool:
        return any(r.get("status") == FAILED for r in self.rows)


@dataclass
class ExperimentResult:
    tables: dict[str, ResultTable]
    failures: list[str] = field(default_factory=list)
    prepared: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


# -- sheets and shapes ---------------------------------------------------------
_TEMPLATES: dict = {}


def make_template(sim: mesh.SimParams, settle_steps: int) -> mesh.Sheet:
    """Corner-clipped sheet settled under gravity, noise off while settling."""
    key = (sim.with_(noise_sigma=0.0), settle_steps)
    if key not in _TEMPLATES:
        sheet = mesh.new_sheet(key[0])
        mesh.settle(sheet, settle_steps)
        sheet.time_step = 0
        _TEMPLATES[key] = sheet
    out = _TEMPLATES[key].copy()
    out.params = sim
    return out


def with_params(sheet: mesh.Sheet, **changes) -> mesh.Sheet:
    out = sheet.copy()
    out.params = sheet.params.with_(**changes)
    return out


def load_shapes(spec: ExperimentSpec, width: float) -> list[Contour]:
    out = []
    for s in spec.shapes:
        for path in shape_files(s):
            out.append(load_contour(path, width).check_bounds(width))
    return out


# -- methods ---------------------------------------------------------------------
@dataclass
class Prepared:
    """A method ready to cut one shape."""

    method: str
    schedule: object
    pinches: dict
    controller: object
    fiducials: list | None = None
    offsets: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)


def plan_context(spec: ExperimentSpec, contour: Contour, template: mesh.Sheet) -> PlanContext:
    return PlanContext(contour, template, spec.mdp, spec.train, spec.seed, spec.steps_per_cut,
                       spec.axis, spec.assignment_cap, spec.delta_override,
                       spec.per_segment_cap, spec.train_all_segments)


def natural_schedule(spec: ExperimentSpec, contour: Contour, template: mesh.Sheet):
    """The whole contour in its given direction, one pass."""
    segs = merged_segments(contour)
    p = template.params
    return segs, build_schedule(segs, (0,), p.resolution, p.spacing, spec.steps_per_cut,
                                contour.closed)


def best_fixed_pinch(spec: ExperimentSpec, contour: Contour, template: mesh.Sheet):
    """Hold-still pinch with the lowest score over the whole-contour candidate set."""
    segs, sched = natural_schedule(spec, contour, template)
    cset = select_candidates(segs, template, spec.delta_override)
    cset = prune_candidates(cset, spec.per_segment_cap, derive_seed(spec.seed, "prune", True))
    best, best_score = None, math.inf
    for cand in sorted(cset.candidates[0]):
        ep, _ = reset(spec.mdp, template, sched, cand)
        s = rollout(ep, noop_policy).score
        if s < best_score:
            best, best_score = cand, s
    return best, best_score


def prepare(method: str, spec: ExperimentSpec, contour: Contour, template: mesh.Sheet,
            artifacts: Path | None = None, jobs: int | None = 1) -> Prepared:
    if method in ("no_tension", "fixed", "analytic"):
        _, sched = natural_schedule(spec, contour, template)
        if method == "no_tension":
            return Prepared(method, sched, {0: None}, noop_policy)
        pinch, score = best_fixed_pinch(spec, contour, template)
        kind = Fixed(pinch) if method == "fixed" else Analytic(pinch)
        return Prepared(method, sched, {0: pinch}, ControllerPolicy(kind),
                        info={"pinch": list(pinch), "search_score": score})
    if method in ("drl_single", "mdrl"):
        single = method == "drl_single"
        ctx = plan_context(spec, contour, template)
        store_dir = None if artifacts is None else artifacts / contour.name / method / "policies"
        result = plan(ctx, single=single, jobs=jobs, store=PolicyStore(store_dir))
        if artifacts is not None:
            result.save_manifest(artifacts / contour.name / method / "manifest.json")
        pol = result.drl_policy
        return Prepared(method, plan_schedule(ctx, result), dict(result.assignment),
                        PlanController(result.drl_segment, pol),
                        [tuple(f) for f in pol.metadata["fiducials"]],
                        info={"order": list(result.segment_order),
                              "assignment": {k: list(v) for k, v in result.assignment.items()},
                              "search_score": result.best_score,
                              "candidates": {k: list(map(list, v))
                                             for k, v in result.candidates.candidates.items()},
                              "distance_threshold": result.candidates.distance_threshold,
                              "segments": len(result.candidates.candidates),
                              "single": single})
    raise ConfigError(f"unknown method {method!r}")


def run_trial(prepared: Prepared, template: mesh.Sheet, seed: int, mdp_cfg) -> CutRecord:
    ep, _ = reset(mdp_cfg, template, prepared.schedule, pinches=prepared.pinches,
                  fiducials=prepared.fiducials, seed=seed, pinch_offsets=prepared.offsets)
    rollout(ep, prepared.controller)
    return ep.cut_record()


def intended_cells(record: CutRecord, factor: int = 2) -> int:
    grid = ScoringGrid.for_sheet(record.sheet_resolution, record.spacing, factor)
    return int(np.count_nonzero(region_mask(record.intended_region(), grid)))


def _cell_job(args):
    key, prepared, template, seed, mdp_cfg = args
    try:
        rec = run_trial(prepared, template, seed, mdp_cfg)
        score = rec.score(mdp_cfg.score_factor)
        return key, "ok", float(score), intended_cells(rec, mdp_cfg.score_factor), ""
    except Exception as exc:  # recorded per cell, the table still completes
        log.debug("cell %s failed:\n%s", key, traceback.format_exc())
        return key, FAILED, None, None, f"{type(exc).__name__}: {exc}"


def _prepare_all(spec, contour, template, methods, artifacts, jobs, failures):
    prepared = {}
    for m in methods:
        try:
            prepared[m] = prepare(m, spec, contour, template, artifacts, jobs)
        except Exception as exc:
            msg = f"{contour.name}/{m}: preparation failed: {type(exc).__name__}: {exc}"
            log.error(msg)
            failures.append(msg)
            prepared[m] = None
    return prepared


def _improvement(score, baseline):
    if score is None or baseline is None or baseline <= 0:
        return None
    return 100.0 * (baseline - score) / baseline


def _stats(scores):
    if not scores:
        return None, None
    a = np.asarray(scores, dtype=float)
    return float(a.mean()), float(a.std())


def _run_cells(cells, jobs):
    """cells: list of (key, prepared|None, template, seed, mdp). Returns key -> outcome."""
    runnable = [c for c in cells if c[1] is not None]
    out = {c[0]: (FAILED, None, None, "method preparation failed") for c in cells if c[1] is None}
    for key, status, score, area, err in parallel_map(_cell_job, runnable, jobs):
        out[key] = (status, score, area, err)
    return out


def _collect(methods, outcomes, key_fn, trials, seeds):
    """Per-method trial rows with paired improvement against no-tension."""
    rows, by_method = [], {}
    for m in methods:
        for j in range(trials):
            status, score, area, err = outcomes[key_fn(m, j)]
            base = outcomes.get(key_fn("no_tension", j))
            base_score = base[1] if base is not None and base[0] == "ok" else None
            imp = 0.0 if m == "no_tension" and status == "ok" else _improvement(score, base_score)
            rows.append(dict(method=m, trial=j, seed=seeds[j], score=score,
                             symmetric_difference=score, area=area,
                             improvement_pct=imp, status=status, error=err))
            if status == "ok":
                by_method.setdefault(m, []).append(score)
    return rows, by_method


def _summary_rows(methods, by_method, trials):
    rows = []
    base_mean, _ = _stats(by_method.get("no_tension", []))
    for m in methods:
        scores = by_method.get(m, [])
        mean, std = _stats(scores)
        if m == "no_tension":
            imp = 0.0 if scores else None
        else:
            imp = _improvement(mean, base_mean)
        status = "ok" if len(scores) == trials else FAILED
        rows.append(dict(method=m, n=len(scores), mean_score=mean, std_score=std,
                         improvement_pct=imp, status=status))
    return rows


def _finish(out: Path | None, result: ExperimentResult, name: str):
    if out is None:
        return
    for tname, table in result.tables.items():
        table.write_csv(out / f"{tname}.csv")
    marker = out / f"{name}.FAILED"
    if result.failures:
        marker.write_text("\n".join(result.failures) + "\n")
    elif marker.exists():
        marker.unlink()


def _prep_out(out):
    if out is None:
        return None, None
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out, out / "artifacts"


TRIAL_COLS = ("shape", "method", "trial", "seed", "symmetric_difference", "improvement_pct",
              "status", "error")
SUMMARY_COLS = ("shape", "method", "n", "mean_score", "std_score", "improvement_pct", "status")


def run_comparison(spec: ExperimentSpec, out: str | Path | None = None,
                   jobs: int | None = 1) -> ExperimentResult:
    out, artifacts = _prep_out(out)
    template = make_template(spec.sim, spec.settle_steps)
    trials_t, summary_t = ResultTable(TRIAL_COLS), ResultTable(SUMMARY_COLS)
    result = ExperimentResult({"comparison_trials": trials_t, "comparison_summary": summary_t})
    methods = _with_baseline(spec.methods)
    for contour in load_shapes(spec, template.params.width):
        prepared = _prepare_all(spec, contour, template, methods, artifacts, jobs, result.failures)
        result.prepared[contour.name] = prepared
        seeds = [derive_seed(spec.seed, contour.name, "trial", j) for j in range(spec.trials)]
        cells = [((m, j), prepared[m], template, seeds[j], spec.mdp)
                 for m in methods for j in range(spec.trials)]
        outcomes = _run_cells(cells, jobs)
        rows, by_method = _collect(methods, outcomes, lambda m, j: (m, j), spec.trials, seeds)
        for r in rows:
            if r["method"] in spec.methods:
                trials_t.add(shape=contour.name, **r)
                if r["status"] == FAILED:
                    result.failures.append(f"{contour.name}/{r['method']}/trial {r['trial']}: {r['error']}")
        fig = Figure(f"{contour.name}: symmetric difference by method", "method", "score (cells)")
        for r in _summary_rows(methods, by_method, spec.trials):
            if r["method"] in spec.methods:
                summary_t.add(shape=contour.name, **r)
                if r["mean_score"] is not None:
                    fig.bar(r["method"], r["mean_score"], r["std_score"])
        if out is not None:
            fig.save(out / f"comparison_{contour.name}.svg")
    result.failures = sorted(set(result.failures))
    _finish(out, result, "comparison")
    return result


def _with_baseline(methods):
    """Methods to run: the requested ones plus no-tension for pairing."""
    ms = list(dict.fromkeys(methods))
    if "no_tension" not in ms:
        ms.insert(0, "no_tension")
    return tuple(ms)


SWEEP_TRIAL_COLS = ("shape", "{axis}", "method", "trial", "seed", "symmetric_difference",
                    "improvement_pct", "status", "error")
SWEEP_SUMMARY_COLS = ("shape", "{axis}", "method", "n", "mean_score", "std_score",
                      "improvement_pct", "status")


def _sweep(spec, out, jobs, axis, values, template_for, name, xlabel, logx):
    out, artifacts = _prep_out(out)
    train_template = make_template(spec.sim.with_(noise_sigma=0.0), spec.settle_steps)
    trial_t = ResultTable(tuple(c.format(axis=axis) for c in SWEEP_TRIAL_COLS))
    summ_t = ResultTable(tuple(c.format(axis=axis) for c in SWEEP_SUMMARY_COLS))
    result = ExperimentResult({f"{name}_trials": trial_t, f"{name}_summary": summ_t})
    methods = _with_baseline(spec.methods)
    for contour in load_shapes(spec, train_template.params.width):
        prepared = _prepare_all(spec, contour, train_template, methods, artifacts, jobs,
                                result.failures)
        result.prepared[contour.name] = prepared
        cells, seeds = [], {}
        templates = [template_for(v) for v in values]
        for i, v in enumerate(values):
            seeds[i] = [derive_seed(spec.seed, contour.name, name, i, j)
                        for j in range(spec.sweep_trials)]
            for m in methods:
                for j in range(spec.sweep_trials):
                    cells.append(((i, m, j), prepared[m], templates[i], seeds[i][j], spec.mdp))
        outcomes = _run_cells(cells, jobs)
        curves = {m: [] for m in spec.methods}
        for i, v in enumerate(values):
            rows, by_method = _collect(methods, outcomes, lambda m, j: (i, m, j),
                                       spec.sweep_trials, seeds[i])
            for r in rows:
                if r["method"] in spec.methods:
                    trial_t.add(shape=contour.name, **{axis: v}, **r)
                    if r["status"] == FAILED:
                        result.failures.append(
                            f"{contour.name}/{r['method']}/{axis}={v}/trial {r['trial']}: {r['error']}")
            for r in _summary_rows(methods, by_method, spec.sweep_trials):
                if r["method"] in spec.methods:
                    summ_t.add(shape=contour.name, **{axis: v}, **r)
                    imp = r["improvement_pct"]
                    curves[r["method"]].append(math.nan if imp is None else imp)
        if out is not None:
            fig = Figure(f"{contour.name}: improvement vs {xlabel}", xlabel, "improvement over no tension (%)",
                         logx=logx)
            for m, ys in curves.items():
                fig.line(m, values, ys)
            fig.save(out / f"{name}_{contour.name}.svg")
    result.failures = sorted(set(result.failures))
    _finish(out, result, name)
    return result


def run_noise_sweep(spec: ExperimentSpec, out: str | Path | None = None,
                    jobs: int | None = 1) -> ExperimentResult:
    """Evaluate noise-free plans and policies under each noise level."""
    base = make_template(spec.sim.with_(noise_sigma=0.0), spec.settle_steps)

    def template_for(sigma):
        return with_params(base, noise_sigma=float(sigma))

    logx = all(v > 0 for v in spec.noise_values)
    return _sweep(spec, out, jobs, "noise_sigma", tuple(spec.noise_values), template_for,
                  "noise_sweep", "noise sigma", logx)


def run_gravity_sweep(spec: ExperimentSpec, out: str | Path | None = None,
                      jobs: int | None = 1) -> ExperimentResult:
    """Evaluate plans trained at the configured gravity on sheets settled under other gravities."""
    def template_for(g):
        return make_template(spec.sim.with_(gravity_magnitude=float(g), noise_sigma=0.0),
                             spec.settle_steps)

    return _sweep(spec, out, jobs, "gravity", tuple(spec.gravity_values), template_for,
                  "gravity_sweep", "gravity magnitude", False)


def resolution_side(vertices: int) -> int:
    """Side of the square grid whose vertex count is nearest to ``vertices``."""
    n = int(round(math.sqrt(vertices)))
    return max(3, n)


RES_COLS = ("shape", "vertices", "resolution", "method", "trial", "seed", "symmetric_difference",
            "normalized_score", "status", "error")
RES_SUMMARY_COLS = ("shape", "vertices", "resolution", "method", "n", "mean_score",
                    "mean_normalized", "std_normalized", "improvement_pct", "status")


def run_resolution_study(spec: ExperimentSpec, out: str | Path | None = None,
                         jobs: int | None = 1) -> ExperimentResult:
    """Prepare and evaluate one method per sheet resolution, same physical sheet width.

    Scores are divided by the intended region's cell count on each grid so
    resolutions are comparable.
    """
    out, artifacts = _prep_out(out)
    width = spec.sim.width
    for v in spec.resolutions:
        n = resolution_side(v)
        if n * n > spec.max_vertices:
            raise ConfigError(f"resolution {n}x{n} exceeds the {spec.max_vertices}-vertex limit")
    trial_t, summ_t = ResultTable(RES_COLS), ResultTable(RES_SUMMARY_COLS)
    result = ExperimentResult({"resolution_trials": trial_t, "resolution_summary": summ_t})
    methods = _with_baseline((spec.resolution_method,))
    curves = {}
    for v in spec.resolutions:
        n = resolution_side(v)
        sim = spec.sim.with_(resolution=n, spacing=width / (n - 1))
        template = make_template(sim, spec.settle_steps)
        sub_art = None if artifacts is None else artifacts / f"res{n}"
        for contour in load_shapes(spec, width):
            prepared = _prepare_all(spec, contour, template, methods, sub_art, jobs, result.failures)
            seeds = [derive_seed(spec.seed, contour.name, "resolution", v, j)
                     for j in range(spec.sweep_trials)]
            cells = [((m, j), prepared[m], template, seeds[j], spec.mdp)
                     for m in methods for j in range(spec.sweep_trials)]
            outcomes = _run_cells(cells, jobs)
            rows, by_method = _collect(methods, outcomes, lambda m, j: (m, j),
                                       spec.sweep_trials, seeds)
            norm = {}
            for r in rows:
                ns = None if r["score"] is None else r["score"] / r["area"]
                trial_t.add(shape=contour.name, vertices=v, resolution=n, normalized_score=ns, **r)
                if ns is not None:
                    norm.setdefault(r["method"], []).append(ns)
                if r["status"] == FAILED:
                    result.failures.append(f"{contour.name}/{r['method']}/res {n}: {r['error']}")
            for r in _summary_rows(methods, by_method, spec.sweep_trials):
                nm, nsd = _stats(norm.get(r["method"], []))
                summ_t.add(shape=contour.name, vertices=v, resolution=n,
                           mean_normalized=nm, std_normalized=nsd, **r)
                curves.setdefault((contour.name, r["method"]), []).append(
                    math.nan if nm is None else nm)
    if out is not None:
        fig = Figure("normalized score vs sheet vertices", "vertices", "score / intended cells")
        for (shape, m), ys in curves.items():
            fig.line(f"{shape} {m}", spec.resolutions, ys)
        fig.save(out / "resolution_study.svg")
    result.failures = sorted(set(result.failures))
    _finish(out, result, "resolution_study")
    return result


# -- report ------------------------------------------------------------------------
def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _cell(v: str, digits: int = 2) -> str:
    if v in ("", None):
        return "-"
    try:
        return f"{float(v):.{digits}f}"
    except ValueError:
        return v


def build_report(out: str | Path) -> str:
    """Markdown summary of whatever result tables exist in ``out``."""
    out = Path(out)
    lines = ["# Gauze cutting experiments", ""]
    found = False
    p = out / "comparison_summary.csv"
    if p.exists():
        found = True
        lines += ["## Method comparison", "",
                  "| shape | method | n | mean score | std | improvement % | status |",
                  "|---|---|---|---|---|---|---|"]
        for r in _read_csv(p):
            lines.append(f"| {r['shape']} | {r['method']} | {r['n']} | {_cell(r['mean_score'])} | "
                         f"{_cell(r['std_score'])} | {_cell(r['improvement_pct'], 1)} | {r['status']} |")
        lines.append("")
    for name, axis in (("noise_sweep", "noise_sigma"), ("gravity_sweep", "gravity")):
        p = out / f"{name}_summary.csv"
        if not p.exists():
            continue
        found = True
        rows = _read_csv(p)
        methods = list(dict.fromkeys(r["method"] for r in rows))
        lines += [f"## {name.replace('_', ' ').capitalize()} (improvement %)", "",
                  "| shape | " + axis + " | " + " | ".join(methods) + " |",
                  "|---|---|" + "---|" * len(methods)]
        keys = list(dict.fromkeys((r["shape"], r[axis]) for r in rows))
        for shape, v in keys:
            cells = {r["method"]: r["improvement_pct"] for r in rows
                     if r["shape"] == shape and r[axis] == v}
            lines.append(f"| {shape} | {float(v):.4g} | "
                         + " | ".join(_cell(cells.get(m, ""), 1) for m in methods) + " |")
        lines.append("")
    p = out / "resolution_summary.csv"
    if p.exists():
        found = True
        lines += ["## Resolution study", "",
                  "| shape | vertices | grid | method | mean normalized score | improvement % |",
                  "|---|---|---|---|---|---|"]
        for r in _read_csv(p):
            lines.append(f"| {r['shape']} | {r['vertices']} | {r['resolution']} | {r['method']} | "
                         f"{_cell(r['mean_normalized'], 3)} | {_cell(r['improvement_pct'], 1)} |")
        lines.append("")
    failed = sorted(out.glob("*.FAILED"))
    if failed:
        lines += ["## Failures", ""]
        for f in failed:
            lines += [f"- {line}" for line in f.read_text().splitlines()]
        lines.append("")
    if not found:
        lines += ["No result tables found.", ""]
    lines += ["---", "", REFERENCE_FOOTER, ""]
    return "\n".join(lines)


def write_spec(spec: ExperimentSpec, out: str | Path) -> None:
    Path(out).mkdir(parents=True, exist_ok=True)
    (Path(out) / "config_used.yaml").write_text(yaml.safe_dump(spec_dict(spec), sort_keys=True))
