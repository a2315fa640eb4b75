"""Smoothing a dist+-Lipschitz function while keeping its Lipschitz constant.

The construction convolves ``f`` with a compactly supported, radially
symmetric, mass-one bump on overlapping boxes ("patches") and glues the local
results with a partition of unity::

    f_smooth = sum_p mu_p * (sigma * f)_p

Convolution happens in grid coordinates, which serve as the local chart.
Patches whose kernel footprint would leave the grid or touch a hole keep the
raw ``f`` (a zero-error, 1-Lipschitz local approximation), so the glued field
is defined on every unmasked node.

Lipschitz bounds are stated edge by edge in the orientation used by the
completion argument: ``f(x) - f(y) <= (1 + eps2) * weight(x -> y)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_scalar
from .exceptions import DomainError, ResolutionError
from .grid import ScalarField

EDGE_TOL = 1e-9


def _bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@dataclass(frozen=True)
class BumpKernel:
    """Tabulated bump ``sigma`` on the lattice points of the open ``r``-ball."""

    radius: float
    h: float
    offsets: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @property
    def dimension(self):
        return self.offsets.shape[1]

    @property
    def weights(self):
        """``sigma(xi) * h**n``; sums to one."""
        return self.values * self.h**self.dimension

    @property
    def reach(self):
        return int(np.abs(self.offsets).max())

    @property
    def mass(self):
        return float(self.weights.sum())

    def total_variation(self, axis):
        """``sum |w(o) - w(o - e_axis)|`` over the union of supports."""
        lookup = {tuple(o): w for o, w in zip(self.offsets.tolist(), self.weights)}
        keys = set(lookup)
        e = np.zeros(self.dimension, dtype=int)
        e[axis] = 1
        keys |= {tuple(np.add(k, e)) for k in lookup}
        return float(sum(abs(lookup.get(k, 0.0) - lookup.get(tuple(np.subtract(k, e)), 0.0)) for k in keys))


def bump_kernel(r, h, dimension=2):
    """Bump ``exp(-1 / (1 - |xi/r|^2))`` renormalised to discrete mass one."""
    r = check_positive_scalar(r, "r")
    h = check_positive_scalar(h, "h")
    if r < 2 * h:
        raise ValueError(f"kernel radius {r:g} must be at least 2h = {2 * h:g}")
    reach = int(math.ceil(r / h))
    grids = np.meshgrid(*[np.arange(-reach, reach + 1)] * dimension, indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=-1)
    dist = np.linalg.norm(offsets * h, axis=-1)
    keep = dist < r
    offsets = offsets[keep]
    raw = _bump(dist[keep] / r)
    values = raw / (raw.sum() * h**dimension)
    offsets.setflags(write=False)
    values.setflags(write=False)
    return BumpKernel(float(r), float(h), offsets, values)


@dataclass
class Patch:
    """One element of the cover.

    ``support`` holds the node ranges where ``mu`` may be nonzero; ``box``
    extends it by the stencil reach so that every edge touching the support
    has both endpoints inside ``box``. ``mu`` is tabulated on ``box``.
    """

    center: tuple
    support: tuple
    box: tuple
    mu: np.ndarray = field(repr=False)
    smoothing: bool = True

    @property
    def slices(self):
        return tuple(slice(lo, hi) for lo, hi in self.box)


@dataclass
class PatchCover:
    domain: object
    half_width: int
    patches: list
    overlap: np.ndarray = field(repr=False)

    @property
    def k(self):
        return int(self.overlap[self.domain.mask].max())

    def partition_sum(self):
        total = np.zeros(self.domain.shape)
        for p in self.patches:
            total[p.slices] += p.mu
        return total


def brick_cover(domain, half_width, kernel_reach=0, stencil_reach=1):
    """Regular brick of boxes with 50% overlap and bump-profile weights.

    Centres sit every ``half_width`` nodes, each weight is a product of 1-d
    bumps supported on ``(c - half_width, c + half_width)``, and the weights are
    normalised by their sum. At most ``2**n`` weights are nonzero at a node.
    A patch is a smoothing patch when its box dilated by ``kernel_reach`` stays
    inside the grid and avoids every masked node.
    """
    B = int(half_width)
    if B < 1:
        raise ValueError("half_width must be at least one node")
    shape = domain.shape
    centers_1d = [np.arange(0, n + B - 1, B) for n in shape]
    raw_patches = []
    total = np.zeros(shape)
    for center in np.stack(np.meshgrid(*centers_1d, indexing="ij"), axis=-1).reshape(-1, domain.dimension):
        support = tuple((max(0, c - B + 1), min(n, c + B)) for c, n in zip(center, shape))
        if any(lo >= hi for lo, hi in support):
            continue
        box = tuple((max(0, lo - stencil_reach), min(n, hi + stencil_reach)) for (lo, hi), n in zip(support, shape))
        profile = np.ones(1)
        for axis, (c, (lo, hi)) in enumerate(zip(center, box)):
            prof = _bump((np.arange(lo, hi) - c) / B)
            profile = np.multiply.outer(profile, prof) if axis else prof
        sl = tuple(slice(lo, hi) for lo, hi in box)
        total[sl] += profile
        dil = [(lo - kernel_reach, hi + kernel_reach) for lo, hi in box]
        inside = all(lo >= 0 and hi <= n for (lo, hi), n in zip(dil, shape))
        smoothing = inside and bool(domain.mask[tuple(slice(lo, hi) for lo, hi in dil)].all())
        raw_patches.append((tuple(int(c) for c in center), support, box, profile, smoothing))
    patches = []
    overlap = np.zeros(shape, dtype=int)
    for center, support, box, profile, smoothing in raw_patches:
        sl = tuple(slice(lo, hi) for lo, hi in box)
        mu = np.where(domain.mask[sl], profile / total[sl], 0.0)
        overlap[sl] += mu > 0
        patches.append(Patch(center, support, box, mu, smoothing))
    return PatchCover(domain, B, patches, overlap)


def convolve_patch(f, kernel, patch):
    """Convolve ``f`` with ``kernel`` on the patch box.

    Returns values on ``patch.box``. Raises DomainError when the kernel
    footprint leaves the grid or touches a masked node.
    """
    dom = f.domain
    reach = kernel.reach
    box = patch.box if isinstance(patch, Patch) else tuple(patch)
    dil = [(lo - reach, hi + reach) for lo, hi in box]
    if any(lo < 0 or hi > n for (lo, hi), n in zip(dil, dom.shape)):
        raise DomainError("kernel footprint leaves the grid; patches must stay r away from the boundary")
    if not dom.mask[tuple(slice(lo, hi) for lo, hi in dil)].all():
        raise DomainError("kernel footprint touches a masked node; patches must avoid holes by r")
    vals = f.values
    out = np.zeros(tuple(hi - lo for lo, hi in box))
    for off, w in zip(kernel.offsets, kernel.weights):
        sl = tuple(slice(lo - o, hi - o) for (lo, hi), o in zip(box, off))
        out += w * vals[sl]
    return out


def epsilon1_check(f, f_tilde, region=None):
    """Maximum of ``|f_tilde - f|`` over ``region`` (default: all unmasked nodes)."""
    a = f.values if isinstance(f, ScalarField) else np.asarray(f)
    b = f_tilde.values if isinstance(f_tilde, ScalarField) else np.asarray(f_tilde)
    region = np.isfinite(a) & np.isfinite(b) if region is None else region
    if not region.any():
        return 0.0
    return float(np.max(np.abs(b - a)[region]))


def edge_weight_table(graph):
    """Edge weights as an array ``grid + (n_offsets,)``; NaN where no edge exists."""
    W = np.full((graph.domain.mask.size, len(graph.offsets)), np.nan)
    W[graph.tails, graph.edge_offset_index] = graph.weights
    return W.reshape(graph.domain.shape + (len(graph.offsets),))


def _edge_pairs(shape, off):
    src = tuple(slice(max(0, -c), s - max(0, c)) for c, s in zip(off, shape))
    dst = tuple(slice(max(0, c), s - max(0, -c)) for c, s in zip(off, shape))
    return src, dst


def lipschitz_bound_check(f_tilde, graph, eps2=0.0, region=None):
    """Largest ``f(x) - f(y) - (1 + eps2) * weight(x -> y)`` over graph edges.

    Only edges with both ends in ``region`` (default: where ``f_tilde`` is
    finite) count. PASS iff the result is ``<= 1e-9``.
    """
    vals = f_tilde.values if isinstance(f_tilde, ScalarField) else np.asarray(f_tilde)
    ok = np.isfinite(vals) if region is None else (region & np.isfinite(vals))
    tails, heads = graph.tails, graph.heads
    flat = vals.ravel()
    okf = ok.ravel()
    use = okf[tails] & okf[heads]
    if not use.any():
        return -np.inf
    excess = flat[tails[use]] - flat[heads[use]] - (1 + eps2) * graph.weights[use]
    return float(excess.max())


def second_difference_check(f, f_tilde_box, kernel, patch):
    """Discrete smoothness bound on a smoothing patch.

    Summation by parts gives, for every axis ``e`` and support node ``x``,
    ``|f~(x+e) - 2 f~(x) + f~(x-e)| <= max|f(z+e) - f(z)| * TV_e(sigma h^n)``.
    Returns the largest ratio of the left side to the bound (``<= 1`` passes).
    """
    dom = f.domain
    worst = 0.0
    box = patch.box
    sup = patch.support
    for axis in range(dom.dimension):
        inner = []
        for a, ((blo, bhi), (slo, shi)) in enumerate(zip(box, sup)):
            lo, hi = max(slo, blo + (a == axis)), min(shi, bhi - (a == axis))
            inner.append((lo, hi))
        if any(lo >= hi for lo, hi in inner):
            continue
        loc = lambda shift: tuple(  # noqa: E731
            slice(lo - blo + (shift if a == axis else 0), hi - blo + (shift if a == axis else 0))
            for a, ((lo, hi), (blo, _)) in enumerate(zip(inner, box))
        )
        d2 = f_tilde_box[loc(1)] - 2 * f_tilde_box[loc(0)] + f_tilde_box[loc(-1)]
        reach = kernel.reach + 1
        dil = tuple(slice(max(0, lo - reach), min(n, hi + reach)) for (lo, hi), n in zip(inner, dom.shape))
        sub = f.values[dil]
        lip = np.nanmax(np.abs(np.diff(sub, axis=axis)))
        bound = lip * kernel.total_variation(axis)
        if bound > 0:
            worst = max(worst, float(np.abs(d2).max() / bound))
        elif np.abs(d2).max() > 1e-12:
            worst = np.inf
    return worst


@dataclass
class GlueResult:
    field: ScalarField
    max_main_excess: float
    max_correction: float
    max_total_excess: float
    decomposition_residual: float


def glue(patch_results, cover, graph=None, eps2=0.0):
    """Blend patch-local fields with the partition of unity.

    When a graph is given, every edge difference of the result is split into
    the convex combination of patch differences plus the correction
    ``sum_i (mu_i(x) - mu_i(y)) (f_i(x) - f(x))`` and both parts are measured
    against ``(1 + eps2) * weight``.
    """
    dom = cover.domain
    psum = cover.partition_sum()
    deficit = np.abs(psum[dom.mask] - 1).max()
    if deficit > 1e-12:
        raise ValueError(f"partition of unity deficit {deficit:.3g}")
    out = np.zeros(dom.shape)
    for p, vals in zip(cover.patches, patch_results):
        out[p.slices] += p.mu * np.nan_to_num(vals)
    out = np.where(dom.mask, out, np.nan)
    glued = ScalarField(dom, out)
    if graph is None:
        return GlueResult(glued, np.nan, np.nan, np.nan, np.nan)

    n_off = len(graph.offsets)
    main = np.zeros(dom.shape + (n_off,))
    corr = np.zeros(dom.shape + (n_off,))
    for p, vals in zip(cover.patches, patch_results):
        vals = np.nan_to_num(vals)
        ref = np.nan_to_num(out[p.slices])
        for k, off in enumerate(graph.offsets):
            src, dst = _edge_pairs(vals.shape, off)
            gsrc = tuple(slice(lo + s.start, lo + s.stop) for (lo, _), s in zip(p.box, src))
            main[gsrc + (k,)] += p.mu[dst] * (vals[src] - vals[dst])
            corr[gsrc + (k,)] += (p.mu[src] - p.mu[dst]) * (vals[src] - ref[src])
    W = edge_weight_table(graph)
    has = np.isfinite(W)
    total = np.full(W.shape, np.nan)
    for k, off in enumerate(graph.offsets):
        src, dst = _edge_pairs(dom.shape, off)
        total[src + (k,)] = out[src] - out[dst]
    residual = float(np.max(np.abs(total - main - corr)[has])) if has.any() else 0.0
    return GlueResult(
        glued,
        max_main_excess=float(np.max((main - (1 + eps2) * W)[has])),
        max_correction=float(np.max(np.abs(corr)[has] / W[has])),
        max_total_excess=float(np.max((total - (1 + eps2) * W)[has])),
        decomposition_residual=residual,
    )


@dataclass
class MollifierReport:
    radius: float
    eps1: float
    eps2: float
    eps1_patch: float
    eps2_patch: float
    k: int
    n_patches: int
    n_smoothing: int
    patch_eps1: list
    patch_excess: list
    patch_smoothness: list
    glued_eps1: float
    glued_excess: float
    glue_main_excess: float
    glue_max_correction: float
    glue_residual: float
    edge_excess_histogram: dict

    @property
    def passes(self):
        return (
            max(self.patch_eps1, default=0.0) <= self.eps1_patch
            and max(self.patch_excess, default=-np.inf) <= EDGE_TOL
            and self.glued_eps1 <= self.eps1
            and self.glued_excess <= EDGE_TOL
        )

    def to_dict(self):
        out = {k: v for k, v in self.__dict__.items()}
        out["passes"] = self.passes
        return out


def _excess_histogram(vals, graph, eps2):
    flat = vals.ravel()
    ex = (flat[graph.tails] - flat[graph.heads]) / graph.weights - (1 + eps2)
    counts, edges = np.histogram(ex, bins=10)
    return {"bin_edges": edges.tolist(), "counts": counts.tolist()}


def mollify(f, graph, radius, eps1, eps2, half_width=None):
    """Smooth ``f`` at kernel radius ``radius`` and measure every certificate.

    Returns ``(f_smooth, report)``. ``half_width`` (nodes) defaults to twice
    the kernel reach.
    """
    dom = f.domain
    kernel = bump_kernel(radius, dom.h, dom.dimension)
    B = int(half_width) if half_width is not None else max(4, 2 * kernel.reach)
    s_reach = int(np.abs(graph.offsets).max())
    cover = brick_cover(dom, B, kernel.reach, s_reach)
    k = cover.k
    eps1_p, eps2_p = eps1 / (2 * k), eps2 / 2
    raw = np.nan_to_num(f.values)
    results, p_eps, p_exc, p_smooth = [], [], [], []
    for p in cover.patches:
        if p.smoothing:
            vals = convolve_patch(f, kernel, p)
            p_smooth.append(second_difference_check(f, vals, kernel, p))
        else:
            vals = raw[p.slices].copy()
        results.append(vals)
        local = np.full(dom.shape, np.nan)
        local[p.slices] = np.where(dom.mask[p.slices], vals, np.nan)
        sup = np.zeros(dom.shape, dtype=bool)
        sup[tuple(slice(lo, hi) for lo, hi in p.support)] = True
        p_eps.append(epsilon1_check(f.values, local, sup & dom.mask))
        p_exc.append(lipschitz_bound_check(local, graph, eps2_p))
    g = glue(results, cover, graph, eps2)
    f_smooth = g.field
    report = MollifierReport(
        radius=float(radius),
        eps1=float(eps1),
        eps2=float(eps2),
        eps1_patch=float(eps1_p),
        eps2_patch=float(eps2_p),
        k=k,
        n_patches=len(cover.patches),
        n_smoothing=sum(p.smoothing for p in cover.patches),
        patch_eps1=[float(e) for e in p_eps],
        patch_excess=[float(e) for e in p_exc],
        patch_smoothness=[float(s) for s in p_smooth],
        glued_eps1=epsilon1_check(f, f_smooth),
        glued_excess=lipschitz_bound_check(f_smooth, graph, eps2),
        glue_main_excess=g.max_main_excess,
        glue_max_correction=g.max_correction,
        glue_residual=g.decomposition_residual,
        edge_excess_histogram=_excess_histogram(f_smooth.values, graph, eps2),
    )
    return f_smooth, report


def choose_radius(f, graph, eps1, eps2, r0=None, half_width=None):
    """Halve the kernel radius from ``r0`` (default: width / 8) until every check passes.

    Returns ``(r, f_smooth, report)``. Raises ResolutionError once ``r`` would
    drop below ``2h``.
    """
    eps1 = check_positive_scalar(eps1, "eps1")
    eps2 = check_positive_scalar(eps2, "eps2")
    dom = f.domain
    r = dom.width / 8 if r0 is None else check_positive_scalar(r0, "r0")
    last = None
    while r >= 2 * dom.h:
        f_smooth, report = mollify(f, graph, r, eps1, eps2, half_width)
        if report.passes:
            return r, f_smooth, report
        last = report
        r /= 2
    detail = ""
    if last is not None:
        detail = f" (last try r={last.radius:g}: patch eps1 {max(last.patch_eps1):.3g} vs {last.eps1_patch:.3g})"
    raise ResolutionError(f"no kernel radius >= 2h = {2 * dom.h:g} meets the tolerances; refine the grid{detail}")


class LipschitzMollifier(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` picks the radius, ``transform`` smooths.

    Parameters
    ----------
    graph : StencilGraph
        Graph of the metric whose distance defines the Lipschitz condition.
    eps1 : float
        Allowed sup-norm deviation from the input.
    eps2 : float
        Allowed growth of the Lipschitz constant, ``1 + eps2``.
    radius : float, optional
        Fixed kernel radius; skips the halving search.
    r0 : float, optional
        First radius tried by the search.
    half_width : int, optional
        Patch half-width in nodes.
    """

    def __init__(self, graph=None, eps1=0.05, eps2=0.5, radius=None, r0=None, half_width=None):
        self.graph = graph
        self.eps1 = eps1
        self.eps2 = eps2
        self.radius = radius
        self.r0 = r0
        self.half_width = half_width

    def fit(self, X, y=None):
        if self.graph is None:
            raise ValueError("LipschitzMollifier needs a graph")
        if X.domain != self.graph.domain:
            raise ValueError("field and graph live on different domains")
        if self.radius is None:
            r, smooth, report = choose_radius(X, self.graph, self.eps1, self.eps2, self.r0, self.half_width)
        else:
            r = self.radius
            smooth, report = mollify(X, self.graph, r, self.eps1, self.eps2, self.half_width)
        self.radius_ = r
        self.report_ = report
        self._fitted_input = X
        self._fitted_output = smooth
        return self

    def transform(self, X):
        check_is_fitted(self, "radius_")
        if X is self._fitted_input:
            return self._fitted_output
        smooth, _ = mollify(X, self.graph, self.radius_, self.eps1, self.eps2, self.half_width)
        return smooth
