"""Invariant suites run by ``finsler-completion verify``.

Every suite returns ``{"name", "passed", "margin", "tolerance", ...}`` where
``margin`` is the measured worst value compared against ``tolerance``.
"""

import numpy as np
from scipy.integrate import quad

from .completion import candidate_f, default_levels, lipschitz_check, quarter_identity_residuals
from .distance import (
    backward_distance,
    build_graph,
    forward_distance,
    scaled_properness_agreement,
    shortest_path,
)
from .exceptions import FinslerError
from .grid import GridDomain, ScalarField, stencil_offsets
from .metric import CustomMetric, ProjectiveChange, check_positive_homogeneous
from .spacetime import slice_change_roundtrip, spacelike_slice_check

EXACT_TOL = 1e-12


def random_admissible_function(domain, graph, rng, ratio=0.5, modes=4):
    """Random smooth ``f`` with ``|f(y) - f(x)| <= ratio * weight(x -> y)`` on every edge.

    A random affine part plus a few random sine modes, rescaled so the
    largest edge ratio equals ``ratio``; ``F + df`` then keeps at least
    ``1 - ratio`` of every edge weight.
    """
    x = domain.coordinates()
    n = domain.dimension
    vals = x @ rng.normal(size=n)
    extent = max(domain.extent)
    for _ in range(modes):
        k = rng.normal(size=n) * 2 * np.pi / extent
        vals = vals + rng.normal() * np.sin(x @ k + rng.uniform(0, 2 * np.pi))
    flat = vals.ravel()
    r = np.max(np.abs(flat[graph.heads] - flat[graph.tails]) / graph.weights)
    return ScalarField(domain, vals * (ratio / r))


def _result(name, margin, tol, **extra):
    return {"name": name, "passed": bool(margin <= tol), "margin": float(margin), "tolerance": tol, **extra}


def triangle_suite(graph, Dplus, Dminus, rng, samples=4):
    """Edge relaxation plus sampled triangle inequalities for dist+."""
    flat_p = Dplus.values.ravel()
    flat_m = Dminus.values.ravel()
    w = graph.weights
    worst = max(
        float(np.max(flat_p[graph.heads] - flat_p[graph.tails] - w)),
        float(np.max(flat_m[graph.tails] - flat_m[graph.heads] - w)),
    )
    nodes = np.argwhere(graph.domain.mask)
    for y in nodes[rng.choice(len(nodes), size=samples, replace=False)]:
        dy = forward_distance(graph, tuple(y)).values
        ok = np.isfinite(dy)
        # dist+(p, x) <= dist+(p, y) + dist+(y, x)
        worst = max(worst, float(np.max((Dplus.values - Dplus[tuple(y)] - dy)[ok])))
        # dist+(y, p) <= dist+(y, x) + dist+(x, p)
        worst = max(worst, float(np.max((Dminus[tuple(y)] - dy - Dminus.values)[ok])))
    return _result("triangle_inequality", worst, EXACT_TOL)


def projective_change_suite(F, graph, Dplus, Dminus, rng, corrupt_scale=None, count=3):
    """Length and distance identities for ``F + df`` with random admissible ``f``.

    ``corrupt_scale`` rescales the first edge out of the base node in the
    changed graph; it exists to show the suite detects a broken weight.
    """
    domain = graph.domain
    p = Dplus.base_point
    worst = 0.0
    nodes = np.argwhere(domain.mask)
    for _ in range(count):
        f = random_admissible_function(domain, graph, rng)
        changed = build_graph(domain, ProjectiveChange(F, f), len(graph.offsets))
        if corrupt_scale is not None:
            pid = np.ravel_multi_index(p, domain.shape)
            k = int(np.flatnonzero(changed.tails == pid)[0])
            changed.weights[k] *= corrupt_scale
            changed._csr = None
        dp = forward_distance(changed, p).values
        dm = backward_distance(changed, p).values
        fv = f.values
        m = domain.mask
        worst = max(worst, float(np.max(np.abs(dp - (Dplus.values + fv - fv[p]))[m])))
        worst = max(worst, float(np.max(np.abs(dm - (Dminus.values - fv + fv[p]))[m])))
        target = tuple(nodes[rng.integers(len(nodes))])
        path = shortest_path(graph, p, target)
        lhs = changed.path_length(path)
        rhs = graph.path_length(path) + fv[target] - fv[p]
        worst = max(worst, abs(lhs - rhs))
    return _result("projective_change_identity", worst, EXACT_TOL)


def candidate_lipschitz_suite(graph, Dplus, Dminus, rng, samples=4):
    f = candidate_f(Dplus, Dminus)
    nodes = np.argwhere(graph.domain.mask)
    pick = nodes[rng.choice(len(nodes), size=2 * samples, replace=False)]
    pairs = [(tuple(a), tuple(b)) for a, b in zip(pick[:samples], pick[samples:])]
    return _result("candidate_lipschitz", lipschitz_check(f, graph, pairs), EXACT_TOL)


def quarter_identity_suite(F, graph, Dplus, Dminus):
    fwd, bwd = quarter_identity_residuals(F, Dplus, Dminus, len(graph.offsets))
    return _result("quarter_identity", max(fwd, bwd), EXACT_TOL, forward=fwd, backward=bwd)


def reversal_suite(F, graph, Dminus):
    """``dist-`` of ``F`` equals ``dist+`` of the reversed metric ``F(x, -v)``."""
    rev = CustomMetric(lambda x, v: F(x, -v), graph.domain.dimension, graph.domain)
    rgraph = build_graph(graph.domain, rev, len(graph.offsets))
    d = forward_distance(rgraph, Dminus.base_point).values
    m = graph.domain.mask
    return _result("reversal_duality", float(np.max(np.abs(d - Dminus.values)[m])), EXACT_TOL)


def homogeneity_suite(F, domain, rng, samples=32):
    nodes = domain.coordinates()[domain.mask]
    pts = nodes[rng.choice(len(nodes), size=min(samples, len(nodes)), replace=False)]
    rep = check_positive_homogeneous(F, pts)
    margin = rep.max_relative_violation if rep.positive else np.inf
    return _result("positive_homogeneity", margin, 1e-12, min_unit_value=rep.min_unit_value)


def scaling_suite(Dplus, Dminus, levels, offsets):
    res = scaled_properness_agreement(Dplus, Dminus, levels, offsets=offsets)
    verdicts = [row["report"]["overall"] for row in res["alphas"]]
    return _result("scaling_agreement", 0.0 if res["agree"] else 1.0, 0.0, verdicts=verdicts)


def refinement_ladder(scenario, levels=3):
    """Graph distance along the first axis from the base point on ``h, h/2, h/4``.

    The reference value integrates ``F(x, e1)`` along the segment. Passes when
    the error never increases (up to rounding).
    """
    dom0 = scenario.build_domain()
    box = GridDomain.box(scenario.domain["lower"], scenario.domain["upper"], dom0.h)
    p = scenario.base_node(dom0)
    x0 = np.asarray(dom0.point(p))
    room = np.asarray(box.origin)[0] + box.extent[0] - x0[0]
    length = dom0.h * max(1, int(0.5 * room / dom0.h))
    errors = []
    ref = None
    for k in range(levels):
        h = dom0.h / 2**k
        dom = GridDomain.box(scenario.domain["lower"], scenario.domain["upper"], h)
        try:
            F = scenario.build_metric(dom)
        except FinslerError as exc:
            return {"name": "refinement_ladder", "passed": True, "skipped": str(exc)}
        if ref is None:
            e1 = np.eye(dom.dimension)[0]
            ref, _ = quad(lambda s: float(F(x0 + s * e1, e1)), 0.0, length, epsabs=1e-13, epsrel=1e-13, limit=200)
        g = build_graph(dom, F, scenario.stencil)
        a = dom.nearest_node(x0)
        b = dom.nearest_node(x0 + length * np.eye(dom.dimension)[0])
        errors.append(abs(float(forward_distance(g, a)[b]) - ref))
    increase = max(e1 - e0 for e0, e1 in zip(errors[:-1], errors[1:]))
    return _result("refinement_ladder", increase, EXACT_TOL, errors=errors, reference=ref, segment_length=length)


def slice_suite(scenario, domain, graph, rng):
    S = scenario.build_stationary(domain)
    worst = 0.0
    for scheme in ("edge-difference", "central-difference"):
        S_s = type(S)(*S._raw, domain, S.dimension, None, scheme)
        f = random_admissible_function(domain, graph, rng, ratio=0.25)
        spacelike, margin = spacelike_slice_check(S_s, f)
        if not spacelike:
            return _result("slice_roundtrip", np.inf, EXACT_TOL, spacelike_margin=margin)
        worst = max(worst, slice_change_roundtrip(S_s, f, domain, scenario.stencil)["max_weight_difference"])
    return _result("slice_roundtrip", worst, EXACT_TOL)


def run_suites(scenario):
    """All suites for one scenario; returns ``(all_passed, results)``."""
    rng = np.random.default_rng(scenario.seed)
    domain = scenario.build_domain()
    F = scenario.build_metric(domain)
    graph = build_graph(domain, F, scenario.stencil)
    p = scenario.base_node(domain)
    Dplus = forward_distance(graph, p)
    Dminus = backward_distance(graph, p)
    stage = scenario.stage("properness")
    levels = (stage.params.get("levels") if stage else None) or default_levels(Dplus.values + Dminus.values, domain)
    corrupt = scenario.verify.get("corrupt_weight", {}).get("scale")
    results = [
        triangle_suite(graph, Dplus, Dminus, rng),
        projective_change_suite(F, graph, Dplus, Dminus, rng, corrupt),
        candidate_lipschitz_suite(graph, Dplus, Dminus, rng),
        quarter_identity_suite(F, graph, Dplus, Dminus),
        reversal_suite(F, graph, Dminus),
        homogeneity_suite(F, domain, rng),
        scaling_suite(Dplus, Dminus, levels, stencil_offsets(domain.dimension, scenario.stencil)),
    ]
    results.append(refinement_ladder(scenario))
    if scenario.spacetime is not None or scenario.stage("geodesic") is not None:
        results.append(slice_suite(scenario, domain, graph, rng))
    return all(r["passed"] for r in results), results
