"""Command-line front end: load a YAML geometry spec, run one task, emit a report."""

from __future__ import annotations

import json
import math
import random
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction

import click
import numpy as np
import yaml

from . import anchored, bialgebroid, courant, defspace, eulerflow
from .report import SCHEMA_VERSION, Report
from .symcore import Chart, Poly, SymbolicError
from .tensorcalc import parse_form, parse_multivector, parse_vector

__all__ = ["TASKS", "SpecError", "GeometrySpec", "load_spec", "run_task", "emit_report", "report_dict", "main"]

TASKS = (
    "check-axioms",
    "euler",
    "split-foliation",
    "split-anchored",
    "split-courant",
    "weinstein",
    "moser",
    "defspace-lift",
)
STRUCTURES = ("foliation", "anchored", "courant", "poisson")
EXIT = {"pass": 0, "fail": 1, "partial": 2}


class SpecError(Exception):
    """All validation problems of a spec file, one message per field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class GeometrySpec:
    path: str
    chart: Chart
    objects: dict
    structure: dict
    task: dict
    raw: dict = field(default_factory=dict)


# loading


def _parse_object(chart, kind, text):
    if kind == "scalar":
        return chart.parse(str(text))
    if kind == "vector":
        return parse_vector(chart, text)
    if kind == "form":
        return parse_form(chart, str(text))
    if kind == "bivector":
        return parse_multivector(chart, str(text), degree=2)
    raise SpecError([f"unknown object kind {kind!r}"])


def _walk_expressions(node, path):
    """Yield (path, string) for every string leaf of a nested block."""
    if isinstance(node, str):
        yield path, node
    elif isinstance(node, dict):
        for k, v in node.items():
            yield from _walk_expressions(v, f"{path}.{k}")
    elif isinstance(node, list):
        for i, v in enumerate(node):
            yield from _walk_expressions(v, f"{path}[{i}]")


def load_spec(path) -> GeometrySpec:
    """Read and validate a spec file, collecting every problem before raising."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SpecError([f"cannot read {path}: {exc.strerror}"]) from None
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise SpecError([f"YAML syntax error{where}: {getattr(exc, 'problem', exc)}"]) from None
    try:
        return validate_spec(data, str(path))
    except SpecError as exc:
        root = yaml.compose(text)
        raise SpecError([_with_line(root, p) for p in exc.problems]) from None


def _with_line(root, problem):
    """Append the YAML line of the deepest node named by the problem's field path."""
    path = problem.split(":", 1)[0]
    node, line = root, None
    for part in path.replace("[", ".[").split("."):
        if not part:
            continue
        nxt = None
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == part:
                    nxt, line = v, k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode) and part.startswith("["):
            i = int(part[1:-1])
            if i < len(node.value):
                nxt = node.value[i]
                line = nxt.start_mark.line + 1
        if nxt is None:
            break
        node = nxt
    return f"{problem} (line {line})" if line else problem


def validate_spec(data, path="<spec>") -> GeometrySpec:
    problems = []
    if not isinstance(data, dict):
        raise SpecError(["spec must be a mapping"])
    unknown = set(data) - {"chart", "objects", "structure", "task", "seed"}
    for k in sorted(unknown):
        problems.append(f"{k}: unknown top-level block")
    chart = None
    cb = data.get("chart")
    if not isinstance(cb, dict):
        problems.append("chart: missing chart block")
    else:
        coords = cb.get("coords")
        if not isinstance(coords, list) or not all(isinstance(c, str) for c in coords):
            problems.append("chart.coords: must be a list of variable names")
        else:
            for key in ("transverse", "normal", "invertible"):
                vals = cb.get(key, []) or []
                bad = [v for v in vals if v not in coords]
                if bad:
                    problems.append(f"chart.{key}: {bad} are not chart coordinates")
            if not any(p.startswith("chart") for p in problems):
                try:
                    chart = Chart(str(cb.get("name", "M")), coords, transverse=cb.get("transverse", []) or [],
                                  normal=cb.get("normal", []) or [], invertible=set(cb.get("invertible", []) or []))
                except SymbolicError as exc:
                    problems.append(f"chart: {exc}")
            if chart is None:
                # keep validating the other blocks against the bare coordinates
                try:
                    chart = Chart("M", coords)
                except SymbolicError:
                    chart = None
    objects = {}
    ob = data.get("objects", {}) or {}
    if not isinstance(ob, dict):
        problems.append("objects: must be a mapping")
        ob = {}
    for name, spec in ob.items():
        if not isinstance(spec, dict) or len(spec) != 1:
            problems.append(f"objects.{name}: give exactly one of scalar/vector/form/bivector")
            continue
        (kind, text), = spec.items()
        if chart is not None:
            try:
                objects[name] = _parse_object(chart, kind, text)
            except (SymbolicError, SpecError) as exc:
                problems.append(f"objects.{name}: {exc}")
    sb = data.get("structure", {}) or {}
    if not isinstance(sb, dict):
        problems.append("structure: must be a mapping")
        sb = {}
    for k in sb:
        if k not in STRUCTURES:
            problems.append(f"structure.{k}: unknown structure (valid: {', '.join(STRUCTURES)})")
    if len(sb) > 1:
        problems.append("structure: give exactly one structure block")
    tb = data.get("task")
    if not isinstance(tb, dict):
        problems.append("task: missing task block")
        tb = {}
    name = tb.get("name")
    if name is not None and name not in TASKS:
        problems.append(f"task.name: unknown task {name!r} (valid: {', '.join(TASKS)})")
    box = tb.get("box", {}) or {}
    if chart is not None and isinstance(box, dict):
        for k, v in box.items():
            if k not in chart.coords:
                problems.append(f"task.box.{k}: not a chart coordinate")
            elif not (isinstance(v, list) and len(v) == 2 and all(isinstance(a, (int, float)) for a in v)):
                problems.append(f"task.box.{k}: expected [lo, hi]")
    # expression syntax check for every string leaf of the structure block
    if chart is not None:
        for p, s in _walk_expressions(sb, "structure"):
            if s in objects:
                continue
            err = _expression_error(chart, s)
            if err:
                problems.append(f"{p}: {err}")
    if problems:
        raise SpecError(problems)
    return GeometrySpec(path, chart, objects, sb, tb, data)


def _expression_error(chart, s):
    """Syntax check of a structure-block expression (scalar, form or multivector)."""
    try:
        parse_form(chart, s)
        return None
    except SymbolicError as exc:
        first = exc
    try:
        parse_multivector(chart, s)
        return None
    except SymbolicError:
        return str(first)


# helpers for tasks


def _resolve(spec, value, kind):
    if isinstance(value, str) and value in spec.objects:
        return spec.objects[value]
    return _parse_object(spec.chart, kind, value)


def _linspace(lo, hi, n):
    if n == 1:
        return [0.5 * (lo + hi)]
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def sample_grid(chart: Chart, box, n, coords=None):
    coords = list(coords if coords is not None else chart.coords)
    axes = []
    for c in coords:
        lo, hi = box.get(c, [-0.2, 0.2]) if box else (-0.2, 0.2)
        axes.append(_linspace(float(lo), float(hi), n))
    pts = [()]
    for ax in axes:
        pts = [p + (a,) for p in pts for a in ax]
    return pts


def _n_grid(spec, n):
    chart = spec.chart
    box = spec.task.get("box", {}) or {}
    return sample_grid(chart, box, n, chart.transverse)


def _samples(spec, n):
    return sample_grid(spec.chart, spec.task.get("box", {}) or {}, n)


def _anchored_bundle(spec):
    b = spec.structure.get("anchored")
    if b is None:
        raise SpecError(["structure.anchored: required for this task"])
    chart = spec.chart
    anchor = b["anchor"]
    structure = None
    if b.get("structure"):
        structure = {}
        for key, f in b["structure"].items():
            k, i, j = (int(t) for t in str(key).split(","))
            structure[(k, i, j)] = chart.parse(str(f))
    return anchored.AnchoredBundle(chart, [[str(e) for e in row] for row in anchor], structure,
                                   lie=bool(b.get("lie", False)), name=str(b.get("name", "E")))


def _courant(spec):
    b = spec.structure.get("courant")
    if b is None:
        raise SpecError(["structure.courant: required for this task"])
    chart = spec.chart
    if "exact" in b:
        eta = b["exact"].get("eta") if b["exact"] else None
        return courant.CourantData.exact(chart, parse_form(chart, str(eta), degree=3) if eta else None)
    if "action" in b:
        a = b["action"]
        c = {}
        for key, v in (a.get("structure") or {}).items():
            k, i, j = (int(t) for t in str(key).split(","))
            c[(k, i, j)] = Fraction(str(v))
        return courant.CourantData.action(chart, c, [[Fraction(str(v)) for v in row] for row in a["metric"]],
                                          [str(f) for f in a["action"]])
    if "raw" in b:
        r = b["raw"]
        gamma = {}
        for key, f in (r.get("gamma") or {}).items():
            k, i, j = (int(t) for t in str(key).split(","))
            gamma[(k, i, j)] = chart.parse(str(f))
        return courant.CourantData(chart, [[Fraction(str(v)) for v in row] for row in r["pairing"]],
                                   [[str(e) for e in row] for row in r["anchor"]], gamma, kind="raw")
    raise SpecError(["structure.courant: give one of exact/action/raw"])


def _courant_section(A, value):
    chart = A.chart
    if isinstance(value, str):
        if A.kind != "exact":
            raise SpecError(["sections of non-exact Courant algebroids are lists of components"])
        return A.exact_section(*courant.parse_exact_section(chart, value))
    return A.section([str(v) for v in value])


def _random_poly(chart, rng, degree=2, terms=3):
    p = Poly(chart)
    for _ in range(terms):
        exps = [0] * chart.dim
        for _ in range(rng.randint(0, degree)):
            exps[rng.randrange(chart.dim)] += 1
        p = p + Poly.monomial(chart, tuple(exps), Fraction(rng.randint(-3, 3), rng.randint(1, 2)))
    return p


# tasks


def _task_check_axioms(spec, opts, rep):
    rng = random.Random(opts["seed"])
    if "anchored" in spec.structure:
        E = _anchored_bundle(spec)
        rep.add("jacobi", float(E.jacobi_residual()), 0.0)
        rep.add("anchor_compatibility", float(E.anchor_compatibility_residual()), 0.0)
        return rep
    A = _courant(spec)
    k = int(spec.task.get("random_sections", 2))
    secs = [tuple(_random_poly(A.chart, rng) for _ in range(A.rank)) for _ in range(k)]
    out = courant.axioms_check(A, secs)
    rep.merge(out)
    return rep


def _task_euler(spec, opts, rep):
    chart = spec.chart
    dc = defspace.DeformationChart(chart)
    if "field" in spec.task:
        X = _resolve(spec, spec.task["field"], "vector")
    elif "anchored" in spec.structure:
        E = _anchored_bundle(spec)
        sigma = anchored.euler_section(E, _n_grid(spec, opts["grid"]))
        rep.artifacts["sigma"] = [str(f) for f in sigma]
        X = E.anchor_of(sigma)
    else:
        raise SpecError(["task.field: required unless an anchored structure is given"])
    er = eulerflow.euler_like_check(X)
    rep.add("euler_like", 0.0 if er else 1.0, 0.0, str(er.witness or ""))
    rep.artifacts["field"] = str(X)
    if er:
        W = eulerflow.w_field(X, dc)
        rep.artifacts["W"] = str(W)
        psi = eulerflow.TubularEmbedding(X, dc, order=opts["jet_order"])
        rep.artifacts["psi_jet"] = [str(c) for c in psi.jet.comps]
        samples = _samples(spec, opts["grid"])
        rel = [psi.relatedness_residual(np.asarray(v, float)) for v in samples]
        rep.add_max("relatedness", rel, opts["tol"], [f"v={v}" for v in samples])
    return rep


def _task_split_foliation(spec, opts, rep):
    b = spec.structure.get("foliation")
    if b is None:
        raise SpecError(["structure.foliation: required for this task"])
    gens = [_resolve(spec, g, "vector") for g in b["generators"]]
    out = eulerflow.foliation_split_verify(gens, spec.chart, _samples(spec, opts["grid"]),
                                           order=opts["jet_order"], tol=opts["tol"],
                                           fit_grid=_n_grid(spec, opts["grid"]))
    rep.merge(out)
    return rep


def _task_split_anchored(spec, opts, rep):
    E = _anchored_bundle(spec)
    if "sigma" in spec.task:
        sigma = E.section([str(v) for v in spec.task["sigma"]])
    else:
        sigma = anchored.euler_section(E, _n_grid(spec, opts["grid"]))
    iso = anchored.splitting_iso(E, sigma, _samples(spec, opts["grid"]), tol=opts["tol"], order=opts["jet_order"])
    rep.merge(iso.report)
    return rep


def _task_split_courant(spec, opts, rep):
    A = _courant(spec)
    sigma = _courant_section(A, spec.task["sigma"])
    samples = _samples(spec, opts["grid"])
    if "alpha" in spec.task:
        alpha = _resolve(spec, spec.task["alpha"], "form")
        rep.merge(courant.gauge_change_of_sigma(A, sigma, alpha, samples, tol=opts["tol"],
                                                order=max(opts["jet_order"], 4)))
        iso = courant.courant_splitting(A, sigma, samples, tol=opts["tol"], order=opts["jet_order"])
        for r in iso.report.residuals:
            if r.name == "dorfman_preservation":
                rep.add("sigma." + r.name, r.value, r.tol, r.witness)
    else:
        iso = courant.courant_splitting(A, sigma, samples, tol=opts["tol"], order=opts["jet_order"])
        rep.merge(iso.report)
    return rep


def _poisson(spec):
    b = spec.structure.get("poisson")
    if b is None:
        raise SpecError(["structure.poisson: required for this task"])
    return _resolve(spec, b["pi"], "bivector")


def _task_weinstein(spec, opts, rep):
    pi = _poisson(spec)
    alpha = _resolve(spec, spec.task["alpha"], "form") if "alpha" in spec.task else None
    out = bialgebroid.weinstein_normal_form(pi, _samples(spec, opts["grid"]), alpha=alpha,
                                            grid=_n_grid(spec, opts["grid"]), order=opts["jet_order"],
                                            tol=opts["tol"])
    rep.merge(out)
    return rep


def _task_moser(spec, opts, rep):
    pi = _poisson(spec)
    m = spec.task.get("moser") or {}
    s_name = str(m.get("param", "s"))
    chart = spec.chart
    S = Chart(chart.name + "[s]", list(chart.coords) + [s_name], invertible=chart.invertible)
    nu = parse_form(S, str(m["nu_s"]), degree=2)
    alpha = parse_form(S, str(m["alpha_s"]), degree=1)
    out = bialgebroid.moser_manin(pi, nu, alpha, _samples(spec, opts["grid"]), s_max=float(m.get("s_max", 1.0)),
                                  steps=int(m.get("steps", 64)), tol=opts["tol"])
    rep.merge(out)
    return rep


def _task_defspace_lift(spec, opts, rep):
    chart = spec.chart
    dc = defspace.DeformationChart(chart)
    theta, _ = defspace.canonical_fields(dc)
    lifts = spec.task.get("lift") or {}
    t = dc.tvar()
    for key, value in lifts.items():
        kind = key.rstrip("s") if key.endswith("s") else key
        items = value if isinstance(value, list) else [value]
        for k, item in enumerate(items):
            label = f"{kind}{k}"
            if kind == "scalar":
                f = _resolve(spec, item, "scalar")
                ft = defspace.lift_scalar(f, dc)
                rep.artifacts[label] = str(ft)
                rep.add(f"{label}.theta_weight", 0.0 if theta(ft) == -ft else 1.0, 0.0)
            elif kind == "vector":
                Y = _resolve(spec, item, "vector")
                hat = defspace.lift_vector_hat(Y, dc)
                rep.artifacts[label + ".hat"] = str(hat)
                try:
                    D = defspace.lift_vector_tangent(Y, dc)
                except defspace.NotTangentToN:
                    rep.artifacts[label + ".tangent"] = "not tangent to N"
                    continue
                rep.artifacts[label + ".tangent"] = str(D)
                rep.add(f"{label}.t_times_lift", 0.0 if D.scale(t) == hat else 1.0, 0.0)
            elif kind == "form":
                a = _resolve(spec, item, "form")
                la_ = defspace.lift_form(a, dc)
                rep.artifacts[label] = str(la_)
            else:
                raise SpecError([f"task.lift.{key}: expected scalar/vector/form"])
    rep.add("theta_t", 0.0 if theta(t) == t else 1.0, 0.0)
    rep.artifacts["theta"] = str(theta)
    return rep


RUNNERS = {
    "check-axioms": _task_check_axioms,
    "euler": _task_euler,
    "split-foliation": _task_split_foliation,
    "split-anchored": _task_split_anchored,
    "split-courant": _task_split_courant,
    "weinstein": _task_weinstein,
    "moser": _task_moser,
    "defspace-lift": _task_defspace_lift,
}


def _options(spec, seed=None, tol=None, jet_order=None, grid=None):
    t = spec.task
    return {
        "seed": int(seed if seed is not None else t.get("seed", spec.raw.get("seed", 0))),
        "tol": float(tol if tol is not None else t.get("tol", 1e-6)),
        "jet_order": int(jet_order if jet_order is not None else t.get("jet_order", 4)),
        "grid": int(grid if grid is not None else t.get("grid", 3)),
    }


def run_task(spec: GeometrySpec, task=None, **overrides):
    """Run the spec's task (or ``task``); returns (Report, options, elapsed ms)."""
    task = task or spec.task.get("name")
    if task not in RUNNERS:
        raise SpecError([f"task.name: unknown task {task!r} (valid: {', '.join(TASKS)})"])
    if spec.task.get("name") not in (None, task):
        raise SpecError([f"task.name: spec is for {spec.task.get('name')!r}, not {task!r}"])
    opts = _options(spec, **overrides)
    np.random.seed(opts["seed"])
    rep = Report(task)
    start = time.perf_counter()
    try:
        RUNNERS[task](spec, opts, rep)
    except (SymbolicError, SpecError, RuntimeError, ValueError, KeyError, np.linalg.LinAlgError) as exc:
        rep.errors.append({"operation": task, "type": type(exc).__name__,
                           "message": str(exc) if not isinstance(exc, KeyError) else f"missing field {exc}"})
    elapsed = (time.perf_counter() - start) * 1000.0
    return rep, opts, elapsed


# output


def _clean(v):
    if isinstance(v, bool) or v is None or isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v) or math.isinf(v):
            return str(v)
        return float(f"{v:.6g}")
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    return str(v)


def report_dict(rep: Report, seed, timing_ms):
    return {
        "schema_version": SCHEMA_VERSION,
        "task": rep.task,
        "status": rep.status,
        "residuals": [r.as_dict() for r in rep.residuals],
        "skipped": list(rep.skipped),
        "errors": _clean(rep.errors),
        "artifacts": _clean(rep.artifacts),
        "seed": seed,
        "timing_ms": round(float(timing_ms), 3),
    }


def emit_report(rep: Report, fmt="json", seed=0, timing_ms=0.0, stream=None) -> int:
    stream = stream or sys.stdout
    if fmt == "json":
        stream.write(json.dumps(report_dict(rep, seed, timing_ms), sort_keys=True, indent=2) + "\n")
    else:
        stream.write(f"task: {rep.task}\nstatus: {rep.status}\n")
        width = max((len(r.name) for r in rep.residuals), default=4)
        for r in rep.residuals:
            mark = "ok  " if r.passed else "FAIL"
            line = f"  {mark} {r.name:<{width}}  {r.value:.3e}  (tol {r.tol:.1e})"
            if r.witness and not r.passed:
                line += f"  at {r.witness}"
            stream.write(line + "\n")
        for s in rep.skipped:
            stream.write(f"  skip {s}\n")
        for e in rep.errors:
            stream.write(f"  error in {e['operation']}: {e['type']}: {e['message']}\n")
        stream.write(f"seed: {seed}  time: {timing_ms:.1f} ms\n")
    return EXIT[rep.status]


# click wiring


def _common(fn):
    fn = click.option("--grid", type=int, default=None, help="Grid points per axis.")(fn)
    fn = click.option("--jet-order", type=int, default=None, help="Truncation order K of jets.")(fn)
    fn = click.option("--tol", type=float, default=None, help="Residual tolerance.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Seed for random trials.")(fn)
    fn = click.option("--format", "fmt", type=click.Choice(["json", "text"]), default="json")(fn)
    fn = click.option("--spec", "spec_path", type=click.Path(dir_okay=False), required=True,
                      help="YAML geometry spec.")(fn)
    return fn


def _invoke(task, spec_path, fmt, seed, tol, jet_order, grid):
    try:
        spec = load_spec(spec_path)
        rep, opts, ms = run_task(spec, task, seed=seed, tol=tol, jet_order=jet_order, grid=grid)
        seed_used = opts["seed"]
    except SpecError as exc:
        rep = Report(task)
        for p in exc.problems:
            rep.errors.append({"operation": "load_spec", "type": "SpecError", "message": p})
        seed_used, ms = seed or 0, 0.0
    code = emit_report(rep, fmt, seed_used, ms)
    sys.exit(code)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def main():
    """Normal-form computations for Euler-like vector fields, algebroids and Poisson structures."""


def _make(task):
    @_common
    def cmd(spec_path, fmt, seed, tol, jet_order, grid):
        _invoke(task, spec_path, fmt, seed, tol, jet_order, grid)

    cmd.__doc__ = f"Run the {task} task on a spec file."
    return main.command(name=task)(cmd)


for _t in TASKS:
    _make(_t)


if __name__ == "__main__":
    main()
