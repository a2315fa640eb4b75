"""Running a scenario's stages and writing their artifacts."""

import logging

import numpy as np

from .completion import (
    CERTIFIED,
    candidate_f,
    completed_metric,
    completeness_certificate,
    default_levels,
    lipschitz_check,
    obstruction_check,
)
from .distance import (
    NONPROPER_EVIDENCE,
    backward_distance,
    build_graph,
    forward_distance,
    properness_indicator,
    scaled_properness_agreement,
)
from .exceptions import FinslerError
from .io import ArtifactWriter, field_rows
from .metric import ProjectiveChange
from .mollifier import choose_radius, mollify
from .scenario import scalar_function
from .spacetime import fermat_projection_check, integrate_null_geodesic

log = logging.getLogger(__name__)

FERMAT_GAP_TOL = 0.02
RATE_TOL = 1e-9
DEFAULT_ALPHAS = ((1, 1), (0.75, 0.25), (2, 1))


class Context:
    """State shared by the stages of one run."""

    def __init__(self, scenario, writer):
        self.scenario = scenario
        self.writer = writer
        self.domain = scenario.build_domain()
        self.metric = scenario.build_metric(self.domain)
        self.p = scenario.base_node(self.domain)
        self.graph = None
        self.dplus = None
        self.dminus = None
        self.f = None
        self.f_smooth = None
        self.eps1 = 0.0
        self.levels = None
        self.properness = None


def _base_edge_weights(F, domain, p, h):
    """Changed east and west edge weights at the base node."""
    x = np.asarray(domain.point(p))
    e = np.zeros(domain.dimension)
    e[0] = h
    mid_e, mid_w = x + e / 2, x - e / 2
    pe = tuple(np.add(p, np.eye(domain.dimension, dtype=int)[0]))
    pw = tuple(np.subtract(p, np.eye(domain.dimension, dtype=int)[0]))
    flat = np.ravel_multi_index
    t = np.array([flat(p, domain.shape), flat(p, domain.shape)])
    hd = np.array([flat(pe, domain.shape), flat(pw, domain.shape)])
    w = F.edge_weights(t, hd, np.stack([mid_e, mid_w]), np.stack([e, -e]))
    return {"east": float(w[0]), "west": float(w[1])}


def stage_distances(ctx, params):
    ctx.graph = build_graph(ctx.domain, ctx.metric, ctx.scenario.stencil)
    ctx.dplus = forward_distance(ctx.graph, ctx.p)
    ctx.dminus = backward_distance(ctx.graph, ctx.p)
    w = ctx.writer
    head = {"base_point": list(ctx.p)}
    w.write_grid("dplus", ctx.dplus.values, ctx.domain, "distances", orientation="forward", **head)
    w.write_grid("dminus", ctx.dminus.values, ctx.domain, "distances", orientation="backward", **head)
    n = ctx.domain.dimension
    cols = [f"x{i + 1}" for i in range(n)] + ["dplus", "dminus"]
    w.write_csv("distances.csv", cols, field_rows(ctx.domain, ctx.dplus.values, ctx.dminus.values), "distances")
    report = {
        "base_node": list(ctx.p),
        "base_point": list(ctx.domain.point(ctx.p)),
        "nodes": ctx.domain.n_nodes,
        "edges": ctx.graph.n_edges,
        "stencil": len(ctx.graph.offsets),
        "unreachable_forward": ctx.dplus.unreachable,
        "unreachable_backward": ctx.dminus.unreachable,
    }
    w.write_json("distances.json", report, "distances")
    return report, True


def stage_properness(ctx, params):
    total = ctx.dplus.values + ctx.dminus.values
    levels = params.get("levels") or default_levels(total, ctx.domain)
    alphas = [tuple(a) for a in params.get("alphas", DEFAULT_ALPHAS)]
    ctx.levels = [float(c) for c in levels]
    ctx.properness = properness_indicator(ctx.dplus, ctx.dminus, ctx.levels, ctx.graph.offsets)
    scaling = scaled_properness_agreement(ctx.dplus, ctx.dminus, ctx.levels, alphas, ctx.graph.offsets)
    report = {"properness": ctx.properness.to_dict(), "scaling": scaling}
    ctx.writer.write_json("properness.json", report, "properness")
    return {"overall": ctx.properness.overall, "scaling_agree": scaling["agree"]}, scaling["agree"]


def _ensure_candidate(ctx):
    if ctx.f is None:
        ctx.f = candidate_f(ctx.dplus, ctx.dminus)
        ctx.writer.write_grid("f_candidate", ctx.f.values, ctx.domain, "mollify", base_point=list(ctx.p))
    return ctx.f


def stage_mollify(ctx, params):
    f = _ensure_candidate(ctx)
    if ctx.scenario.lipschitz_mode:
        ctx.f_smooth = f
        ctx.eps1 = 0.0
        report = {"skipped": "lipschitz mode: the candidate function is used directly"}
        ctx.writer.write_json("mollifier.json", report, "mollify")
        return report, True
    eps1 = float(params.get("eps1", 0.05))
    eps2 = float(params.get("eps2", 0.5))
    if params.get("radius") is not None:
        f_s, rep = mollify(f, ctx.graph, params["radius"], eps1, eps2, params.get("half_width"))
        r = float(params["radius"])
    else:
        r, f_s, rep = choose_radius(f, ctx.graph, eps1, eps2, params.get("r0"), params.get("half_width"))
    ctx.f_smooth = f_s
    ctx.eps1 = eps1
    ctx.writer.write_grid("f_smooth", f_s.values, ctx.domain, "mollify", base_point=list(ctx.p), radius=r)
    ctx.writer.write_json("mollifier.json", rep.to_dict(), "mollify")
    return {"radius": r, "k": rep.k, "passes": rep.passes}, rep.passes


def _obstruction(ctx, params):
    R = params.get("R") or max(ctx.levels or [1.0])
    specs = params.get("functions") or [{"id": "candidate", "scale": 0.5}]
    f = candidate_f(ctx.dplus, ctx.dminus)
    results = []
    for spec in specs:
        fa = scalar_function(spec, ctx.domain, f)
        res = obstruction_check(ctx.metric, fa, ctx.dplus, ctx.dminus, R, ctx.scenario.stencil)
        res["function"] = spec
        results.append(res)
    ok = all(r["passes"] for r in results)
    return {"R": float(R), "passes": ok, "functions": results}, ok


def stage_completion(ctx, params):
    if ctx.f_smooth is None:
        ctx.f_smooth = _ensure_candidate(ctx)
        ctx.eps1 = 0.0
    if ctx.properness.overall == NONPROPER_EVIDENCE:
        obstruction, ok = _obstruction(ctx, params.get("obstruction", {}))
        report = {
            "refused": True,
            "reason": "D+ + D- has a sublevel set reaching a hole or an open end",
            "properness": ctx.properness.overall,
            "obstruction": obstruction,
        }
        ctx.writer.write_json("completion.json", report, "completion")
        return {"refused": True, "obstruction_passes": ok}, ok
    change = completed_metric(ctx.metric, ctx.f_smooth, ctx.graph, ctx.scenario.stencil)
    cert = completeness_certificate(change, ctx.dplus, ctx.dminus, ctx.f_smooth, ctx.eps1, ctx.scenario.stencil)
    h = ctx.domain.h
    report = {
        "refused": False,
        "certificate": cert.to_dict(),
        "candidate_lipschitz_excess": lipschitz_check(ctx.f, ctx.graph) if ctx.f is not None else None,
        "base_edge_weights": {
            "F": _base_edge_weights(ctx.metric, ctx.domain, ctx.p, h),
            "F+df/2": _base_edge_weights(change, ctx.domain, ctx.p, h),
            "F+df": _base_edge_weights(ProjectiveChange(ctx.metric, ctx.f_smooth), ctx.domain, ctx.p, h),
        },
    }
    ctx.writer.write_json("completion.json", report, "completion")
    return {"verdict": cert.verdict, "max_equality_gap": cert.max_equality_gap}, cert.verdict == CERTIFIED


def stage_obstruction(ctx, params):
    report, ok = _obstruction(ctx, params)
    ctx.writer.write_json("obstruction.json", report, "obstruction")
    return {"passes": ok}, ok


def stage_geodesic(ctx, params):
    S = ctx.scenario.build_stationary(ctx.domain)
    steps = int(params.get("steps", 256))
    dtau = float(params.get("dtau", 1.0 / steps))
    geo = integrate_null_geodesic(S, params["x0"], params["v0"], steps, dtau)
    n = ctx.domain.dimension
    cols = ["tau", "t"] + [f"x{i + 1}" for i in range(n)] + ["null_defect"]
    ctx.writer.write_csv("geodesic.csv", cols, geo.to_rows(), "geodesic")
    rep = fermat_projection_check(S, geo, stencil=ctx.scenario.stencil)
    rep["initial_tdot"] = float(geo.tdot[0])
    ctx.writer.write_json("fermat.json", rep, "geodesic")
    ok = not geo.exited and rep["max_rate_gap"] <= RATE_TOL and abs(rep["relative_gap"]) <= FERMAT_GAP_TOL
    return {"relative_gap": rep["relative_gap"], "initial_tdot": rep["initial_tdot"]}, ok


STAGES = {
    "distances": stage_distances,
    "properness": stage_properness,
    "mollify": stage_mollify,
    "completion": stage_completion,
    "obstruction": stage_obstruction,
    "geodesic": stage_geodesic,
}


def scenario_document(scenario):
    """The resolved scenario as written next to the artifacts."""
    return {
        "name": scenario.name,
        "description": scenario.description,
        "metric": scenario.metric,
        "domain": scenario.domain,
        "base_point": list(scenario.base_point) if scenario.base_point is not None else None,
        "stencil": scenario.stencil,
        "seed": scenario.seed,
        "lipschitz_mode": scenario.lipschitz_mode,
        "spacetime": scenario.spacetime,
        "pipeline": [{"stage": s.name, **s.params} for s in scenario.pipeline],
    }


def run_scenario(scenario, out_dir):
    """Run every stage in order; stop at the first failure.

    Returns ``(ok, summary)`` where ``summary`` lists each stage's outcome.
    Artifacts written before a failure are kept and listed in the manifest.
    """
    writer = ArtifactWriter(out_dir)
    writer.write_json("scenario.json", scenario_document(scenario), "config")
    ctx = Context(scenario, writer)
    summary = []
    ok = True
    for stage in scenario.pipeline:
        log.info("stage %s", stage.name)
        try:
            result, passed = STAGES[stage.name](ctx, stage.params)
        except FinslerError as exc:
            result, passed = {"error": f"{type(exc).__name__}: {exc}"}, False
        summary.append({"stage": stage.name, "passed": bool(passed), **result})
        if not passed:
            ok = False
            break
    writer.write_json("summary.json", summary, "summary")
    writer.write_manifest(scenario.name, "ok" if ok else f"failed at stage {summary[-1]['stage']}")
    return ok, summary
