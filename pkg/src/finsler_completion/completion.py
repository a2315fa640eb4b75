"""Completing a Finsler metric by a trivial projective change, or proving it cannot be done.

With ``D+`` and ``D-`` the forward and backward distances from a base node
``p``, the function ``f = (D- - D+) / 2`` is 1-Lipschitz for ``dist+``. If
``f_s`` is a (1 + eps2)-Lipschitz approximation of ``f`` with
``|f_s - f| <= eps1``, then on the graph

    dist+_{F + df_s/2}(p, x) = D+(x) + (f_s(x) - f_s(p)) / 2
                            >= 3/4 D+(x) + 1/4 D-(x) - eps1,

and symmetrically ``dist-_{F + df_s/2}(p, x) >= 1/4 D+(x) + 3/4 D-(x) - eps1``.
With ``eps1 = 0`` (use ``f`` itself) both bounds are equalities. The
constant ``eps1`` is the tolerance-parametrised version of the ``1`` that
appears for ``|f_s - f| <= 1``.

When ``D+ + D-`` has a noncompact sublevel set ``B_R``, every admissible
``f`` satisfies ``|f(x) - f(p)| <= R`` on ``B_R`` and both changed distances
stay below ``3R`` there, so no change can be complete.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_levels, check_node, check_positive_scalar, check_same_grid
from .distance import (
    NONPROPER_EVIDENCE,
    _check_pair,
    backward_distance,
    build_graph,
    classify_sublevels,
    forward_distance,
    properness_indicator,
    scaled_properness_agreement,
)
from .exceptions import AdmissibilityError, GraphConstructionError
from .grid import ScalarField
from .metric import ProjectiveChange, admissibility_margin
from .mollifier import choose_radius, lipschitz_bound_check

CERTIFIED = "CERTIFIED"
FAILED = "FAILED"
EXACT_TOL = 1e-12


def candidate_f(Dplus, Dminus):
    """``f = (D- - D+) / 2``; vanishes at the base point."""
    domain = _check_pair(Dplus, Dminus)
    vals = (Dminus.values - Dplus.values) / 2
    if not np.all(np.isfinite(vals[domain.mask])):
        raise ValueError("distance fields contain unreachable nodes")
    return ScalarField(domain, vals)


def lipschitz_check(f, graph, pair_samples=()):
    """Largest ``f(x) - f(y) - dist+(x, y)`` over all edges and the sampled pairs.

    Adjacent pairs use the edge weight, which bounds ``dist+`` from above;
    ``pair_samples`` are ``(x, y)`` node pairs measured with true graph
    distances.
    """
    check_same_grid(f, graph)
    flat = f.values.ravel()
    worst = float(np.max(flat[graph.tails] - flat[graph.heads] - graph.weights))
    by_source = {}
    for x, y in pair_samples:
        by_source.setdefault(tuple(x), []).append(tuple(y))
    for x, ys in by_source.items():
        dist = forward_distance(graph, x)
        for y in ys:
            worst = max(worst, float(f[x] - f[y] - dist[y]))
    return worst


def completed_metric(F, f_smooth, graph=None, stencil=None):
    """Return ``F + d(f_smooth) / 2``, rejecting it if it is not positive.

    Positivity is checked on every graph edge (edge-difference scheme) and at
    every node over the unit direction fan (central differences). If
    ``f_smooth`` is 1.5-Lipschitz, each changed edge weight is at least a
    quarter of the original.
    """
    change = ProjectiveChange(F, f_smooth * 0.5)
    domain = f_smooth.domain
    stencil = stencil if stencil is not None else (len(graph.offsets) if graph is not None else None)
    try:
        build_graph(domain, change, stencil)
    except GraphConstructionError as exc:
        raise AdmissibilityError(f"F + df/2 has a nonpositive edge: {exc}") from exc
    margin, x, v = admissibility_margin(change)
    if not margin > 0:
        raise AdmissibilityError(
            f"F + df/2 is not positive: {margin:.6g} at x={x}, v={v}", worst_point=x, worst_direction=v, margin=margin
        )
    return change


@dataclass
class CompletionCertificate:
    base_point: tuple
    eps1: float
    constant: float
    forward_margin: np.ndarray = field(repr=False)
    backward_margin: np.ndarray = field(repr=False)
    admissibility_margin: float = np.nan
    approximation_error: float = np.nan
    identity_residual: float = np.nan
    lipschitz_excess: float = np.nan
    verdict: str = FAILED
    failing_nodes: list = field(default_factory=list)
    reasons: list = field(default_factory=list)

    @property
    def min_forward_margin(self):
        return float(np.nanmin(self.forward_margin))

    @property
    def min_backward_margin(self):
        return float(np.nanmin(self.backward_margin))

    @property
    def max_equality_gap(self):
        """Largest distance between a changed distance and its 3/4-1/4 combination."""
        gaps = np.abs(np.concatenate([self.forward_margin.ravel(), self.backward_margin.ravel()]) - self.eps1)
        return float(np.nanmax(gaps))

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "base_point": list(self.base_point),
            "eps1": self.eps1,
            "constant": self.constant,
            "min_forward_margin": self.min_forward_margin,
            "min_backward_margin": self.min_backward_margin,
            "max_forward_margin": float(np.nanmax(self.forward_margin)),
            "max_backward_margin": float(np.nanmax(self.backward_margin)),
            "max_equality_gap": self.max_equality_gap,
            "admissibility_margin": self.admissibility_margin,
            "approximation_error": self.approximation_error,
            "identity_residual": self.identity_residual,
            "lipschitz_excess": self.lipschitz_excess,
            "failing_nodes": [list(n) for n in self.failing_nodes[:20]],
            "reasons": self.reasons,
        }


def completeness_certificate(change, Dplus, Dminus, f_smooth, eps1=0.0, stencil=None, tol=EXACT_TOL):
    """Check the 3/4-1/4 lower bounds for the changed metric at every node.

    ``change`` must be ``F + d(f_smooth) / 2`` with the edge-difference
    scheme. The bound constant is ``C(eps1) = eps1``.
    """
    domain = _check_pair(Dplus, Dminus)
    eps1 = check_positive_scalar(eps1, "eps1", allow_zero=True)
    p = Dplus.base_point
    f = candidate_f(Dplus, Dminus)
    graph = build_graph(domain, change, stencil)
    dp = forward_distance(graph, p).values
    dm = backward_distance(graph, p).values
    Dp, Dm = Dplus.values, Dminus.values
    fs = f_smooth.values
    half = change.f.values
    fwd = dp - (0.75 * Dp + 0.25 * Dm - eps1)
    bwd = dm - (0.25 * Dp + 0.75 * Dm - eps1)
    m = domain.mask
    residual = max(
        float(np.max(np.abs(dp - (Dp + half - half[p]))[m])),
        float(np.max(np.abs(dm - (Dm + half[p] - half))[m])),
    )
    approx = float(np.max(np.abs(fs - f.values)[m]))
    adm, _, _ = admissibility_margin(change)
    base_graph = build_graph(domain, change.base, stencil)
    lip = lipschitz_bound_check(f_smooth, base_graph, 0.5)
    bad = m & ((fwd < -tol) | (bwd < -tol))
    reasons = []
    if bad.any():
        reasons.append("lower bound violated")
    if approx > eps1 + tol:
        reasons.append(f"|f_smooth - f| = {approx:.3g} exceeds eps1 = {eps1:.3g}")
    if not adm > 0:
        reasons.append("F + df/2 not admissible")
    verdict = CERTIFIED if not reasons else FAILED
    failing = [tuple(int(i) for i in n) for n in np.argwhere(bad)]
    return CompletionCertificate(
        base_point=tuple(p),
        eps1=eps1,
        constant=eps1,
        forward_margin=np.where(m, fwd, np.nan),
        backward_margin=np.where(m, bwd, np.nan),
        admissibility_margin=adm,
        approximation_error=approx,
        identity_residual=residual,
        lipschitz_excess=lip,
        verdict=verdict,
        failing_nodes=failing,
        reasons=reasons,
    )


def quarter_identity_residuals(F, Dplus, Dminus, stencil=None):
    """Exact-f check: residuals of ``dist+- of F + df/2`` against ``3/4 D+- + 1/4 D-+``."""
    f = candidate_f(Dplus, Dminus)
    change = ProjectiveChange(F, f * 0.5)
    graph = build_graph(Dplus.domain, change, stencil)
    p = Dplus.base_point
    dp = forward_distance(graph, p).values
    dm = backward_distance(graph, p).values
    m = Dplus.domain.mask
    fwd = np.abs(dp - (0.75 * Dplus.values + 0.25 * Dminus.values))[m]
    bwd = np.abs(dm - (0.25 * Dplus.values + 0.75 * Dminus.values))[m]
    return float(fwd.max()), float(bwd.max())


def obstruction_check(F, f_any, Dplus, Dminus, R, stencil=None, tol=EXACT_TOL):
    """Verify the bounds that rule out completing ``F`` when ``B_R`` is not compact.

    For every node of ``B_R = {D+ + D- <= R}`` checks

    (a) ``dist+_{F+df}(p, x) = D+(x) + f(x) - f(p) <= R + f(x) - f(p)`` and the
        backward mirror,
    (b) ``|f(p) - f(x)| <= R``,
    (c) both changed distances are ``<= 3R``.
    """
    domain = _check_pair(Dplus, Dminus)
    R = check_positive_scalar(R, "R")
    p = Dplus.base_point
    change = ProjectiveChange(F, f_any)
    try:
        graph = build_graph(domain, change, stencil)
    except GraphConstructionError as exc:
        raise AdmissibilityError(f"f is not admissible for F: {exc}") from exc
    dp = forward_distance(graph, p).values
    dm = backward_distance(graph, p).values
    Dp, Dm = Dplus.values, Dminus.values
    fv = f_any.values
    ball = domain.mask & (Dp + Dm <= R)
    if not ball.any():
        raise ValueError(f"B_R is empty for R={R}")
    df = fv - fv[p]
    res_fwd = float(np.max(np.abs(dp - (Dp + df))[ball]))
    res_bwd = float(np.max(np.abs(dm - (Dm - df))[ball]))
    a_fwd = float(np.max((dp - (R + df))[ball]))
    a_bwd = float(np.max((dm - (R - df))[ball]))
    b = float(np.max((np.abs(df) - R)[ball]))
    c = float(max(np.max(dp[ball]), np.max(dm[ball])) - 3 * R)
    checks = {
        "distance_identity_residual": max(res_fwd, res_bwd),
        "a_forward_excess": a_fwd,
        "a_backward_excess": a_bwd,
        "b_excess": b,
        "c_excess": c,
    }
    passes = max(res_fwd, res_bwd) <= tol and a_fwd <= tol and a_bwd <= tol and b <= tol and c <= tol
    verdict = classify_sublevels(Dp + Dm, domain, [R], graph.offsets).overall
    return {"R": R, "ball_nodes": int(ball.sum()), "checks": checks, "passes": bool(passes), "ball_verdict": verdict}


def default_levels(total, domain):
    """0.1, 0.2 and 0.3 times the smallest ``total`` on a truncation face.

    Staying well inside the grid leaves room for the enlarged sets probed by
    the scaling check.
    """
    cut = np.zeros(domain.shape, dtype=bool)
    for label, nodes in domain.face_nodes().items():
        if label not in domain.open_ends:
            cut |= nodes
    cut &= domain.mask
    reach = float(np.min(total[cut])) if cut.any() else float(np.nanmax(total[domain.mask]))
    return [0.1 * reach, 0.2 * reach, 0.3 * reach]


class FinslerCompletion(BaseEstimator):
    """Distance fields, properness verdict and (when possible) a completing change.

    Parameters
    ----------
    base_point : sequence of float, optional
        Point ``p``; snapped to the nearest node. Defaults to the grid centre.
    stencil : int, optional
        Stencil size (see :func:`~finsler_completion.grid.stencil_offsets`).
    lipschitz_mode : bool
        Use ``f`` itself instead of a mollified version.
    eps1, eps2 : float
        Mollifier tolerances.
    levels : sequence of float, optional
        Levels for the properness test; default is 0.1, 0.2 and 0.3 times the
        smallest ``D+ + D-`` on a truncation face, which leaves room for the
        enlarged sets probed by the scaling check.
    alphas : sequence of pairs
        Weight pairs for the scaling check.
    """

    def __init__(self, base_point=None, stencil=None, lipschitz_mode=False, eps1=0.05, eps2=0.5,
                 levels=None, alphas=((1, 1), (0.75, 0.25), (2, 1)), r0=None):
        self.base_point = base_point
        self.stencil = stencil
        self.lipschitz_mode = lipschitz_mode
        self.eps1 = eps1
        self.eps2 = eps2
        self.levels = levels
        self.alphas = alphas
        self.r0 = r0

    def fit(self, metric, domain):
        if self.base_point is None:
            p = tuple(s // 2 for s in domain.shape)
        else:
            p = domain.nearest_node(self.base_point)
        p = check_node(domain, p)
        self.graph_ = build_graph(domain, metric, self.stencil)
        self.base_node_ = p
        self.dplus_ = forward_distance(self.graph_, p)
        self.dminus_ = backward_distance(self.graph_, p)
        total = self.dplus_.values + self.dminus_.values
        levels = check_levels(self.levels if self.levels is not None else default_levels(total, domain))
        self.levels_ = levels
        self.properness_ = properness_indicator(self.dplus_, self.dminus_, levels, self.graph_.offsets)
        self.scaling_ = scaled_properness_agreement(self.dplus_, self.dminus_, levels, self.alphas, self.graph_.offsets)
        self.f_ = candidate_f(self.dplus_, self.dminus_)
        self.lipschitz_violation_ = lipschitz_check(self.f_, self.graph_)
        self.mollifier_report_ = None
        if self.lipschitz_mode:
            self.f_smooth_ = self.f_
            eps1 = 0.0
        else:
            r, smooth, report = choose_radius(self.f_, self.graph_, self.eps1, self.eps2, self.r0)
            self.f_smooth_ = smooth
            self.mollifier_report_ = report
            eps1 = self.eps1
        self.refusal_ = None
        self.change_ = None
        self.certificate_ = None
        if self.properness_.overall == NONPROPER_EVIDENCE:
            self.refusal_ = "D+ + D- shows a noncompact sublevel set; no trivial projective change is complete"
            return self
        self.change_ = completed_metric(metric, self.f_smooth_, self.graph_)
        self.certificate_ = completeness_certificate(
            self.change_, self.dplus_, self.dminus_, self.f_smooth_, eps1, len(self.graph_.offsets)
        )
        return self

    def transform(self, X):
        """Values of the completing function at points ``X`` (shape ``(m, n)``)."""
        check_is_fitted(self, "f_smooth_")
        return self.f_smooth_.at(np.atleast_2d(X))
