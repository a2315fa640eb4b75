"""Stationary spacetimes ``-dt^2 + 2 w_i dx^i dt + g_ij dx^i dx^j`` and their Randers metrics.

Writing the Lorentz metric as ``-(dt - w dx)^2 + (g + w w^T) dx dx`` shows that
a null vector ``(t', x')`` with ``t' > 0`` has ``t' = F(x, x')`` for the
Randers metric ``F(x, v) = sqrt((g + w w^T)(v, v)) + w(v)``. Changing the time
coordinate to ``t - f(x)`` replaces ``w`` by ``w + df`` while the quadratic part
``g + w w^T`` is unchanged, so ``F`` becomes ``F + df``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from ._validation import check_spd, check_vectors
from .distance import build_graph, forward_distance
from .grid import direction_fan, stencil_offsets
from .metric import (
    CENTRAL_DIFFERENCE,
    EDGE_DIFFERENCE,
    GRADIENT_SCHEMES,
    Coefficient,
    ProjectiveChange,
    RandersMetric,
)


class StationaryMetric:
    """Spatial data ``(g, omega)`` of a stationary spacetime, plus an optional slice shift.

    ``shift`` is a scalar field ``f``; the effective one-form is
    ``omega + df`` and the effective spatial metric is
    ``g + omega omega^T - (omega + df)(omega + df)^T``.
    """

    def __init__(self, g, omega, domain=None, dimension=None, shift=None, gradient_scheme=EDGE_DIFFERENCE):
        if gradient_scheme not in GRADIENT_SCHEMES:
            raise ValueError(f"gradient_scheme must be one of {GRADIENT_SCHEMES}")
        self._raw = (g, omega)
        self.base = RandersMetric(g, omega, domain, dimension)
        self.dimension = self.base.dimension
        self.domain = domain if domain is not None else (shift.domain if shift is not None else None)
        self.shift = shift
        self.gradient_scheme = gradient_scheme
        self._grad = None

    def _shift_gradient(self, x):
        if self.shift is None:
            return np.zeros(np.shape(x)[:-1] + (self.dimension,))
        if self._grad is None:
            self._grad = Coefficient(np.nan_to_num(self.shift.gradient()), (self.dimension,), self.shift.domain)
        return self._grad(x)

    def quadratic_part(self, x):
        """``g + omega omega^T``; invariant under slice shifts."""
        return self.base.coefficients(x)[0]

    def omega_at(self, x):
        return self.base.omega(x) + self._shift_gradient(x)

    def g_at(self, x):
        w = self.omega_at(x)
        return self.quadratic_part(x) - w[..., :, None] * w[..., None, :]


def randers_from_stationary(S):
    """Randers metric ``sqrt((g + w w^T)(v, v)) + w(v)`` of a stationary metric.

    A shifted metric is returned as ``F + df``: with the edge-difference
    scheme as a :class:`ProjectiveChange`, with central differences as a
    Randers metric whose one-form carries the interpolated gradient.
    """
    if S.shift is None:
        return S.base
    if S.gradient_scheme == EDGE_DIFFERENCE:
        return ProjectiveChange(S.base, S.shift, EDGE_DIFFERENCE)
    metric = RandersMetric(S.g_at, S.omega_at, S.domain, dimension=S.dimension)
    nodes = S.domain.coordinates()[S.domain.mask]
    check_spd(S.g_at(nodes), where=lambda i: tuple(int(k) for k in np.argwhere(S.domain.mask)[i[0]]))
    return metric


def shift_slice(S, f, gradient_scheme=None):
    """Move to the slice ``{t = f(x)}``: ``omega -> omega + df``, ``g + w w^T`` fixed."""
    scheme = gradient_scheme or S.gradient_scheme
    if S.shift is not None and scheme != S.gradient_scheme:
        raise ValueError("cannot mix gradient schemes across successive slice shifts")
    shift = f if S.shift is None else S.shift + f
    g, omega = S._raw
    return StationaryMetric(g, omega, S.domain if S.domain is not None else f.domain, S.dimension, shift, scheme)


def spacelike_slice_check(S, f, direction_fan_=None):
    """Whether ``{t = f(x)}`` is space-like: ``F(x, v) + df(v) > 0`` on unit fan directions.

    Returns ``(spacelike, margin)`` where ``margin`` is the minimum over nodes
    and directions; ``df`` uses central differences.
    """
    dom = f.domain
    fan = direction_fan_ if direction_fan_ is not None else direction_fan(
        dom.dimension, offsets=stencil_offsets(dom.dimension)
    )
    fan = np.asarray(fan, dtype=float)
    x = dom.coordinates()[dom.mask]
    a = S.quadratic_part(x)
    w = S.omega_at(x) + np.nan_to_num(f.gradient())[dom.mask]
    q = np.einsum("ki,pij,kj->pk", fan, a, fan)
    vals = np.sqrt(q) + w @ fan.T
    margin = float(vals.min())
    return margin > 0, margin


def slice_change_roundtrip(S, f, domain=None, stencil=None):
    """Compare edge weights of ``randers(shift(S, f))`` and ``randers(S) + df``.

    Returns the largest absolute weight difference together with the
    induced east and west edge weights at the grid centre.
    """
    domain = domain if domain is not None else f.domain
    left = build_graph(domain, randers_from_stationary(shift_slice(S, f)), stencil)
    right = build_graph(domain, ProjectiveChange(randers_from_stationary(S), f, S.gradient_scheme), stencil)
    diff = float(np.max(np.abs(left.weights - right.weights)))
    return {"max_weight_difference": diff, "edges": left.n_edges}


def assemble_lorentz(S, x):
    """Matrix of ``G`` in coordinates ``(t, x^1..x^n)``: ``G_tt = -1``, ``G_ti = w_i``, ``G_ij = g_ij``."""
    x = check_vectors(x, S.dimension, "x")
    n = S.dimension
    out = np.zeros(x.shape[:-1] + (n + 1, n + 1))
    w = S.omega_at(x)
    out[..., 0, 0] = -1.0
    out[..., 0, 1:] = w
    out[..., 1:, 0] = w
    out[..., 1:, 1:] = S.g_at(x)
    return out


def lorentz_signature(S, points):
    """Counts of negative and positive eigenvalues of ``G`` at each point."""
    eig = np.linalg.eigvalsh(assemble_lorentz(S, points))
    return np.sum(eig < 0, axis=-1), np.sum(eig > 0, axis=-1)


def null_time_rate(S, x, v):
    """Future root ``t' > 0`` of ``G((t', v), (t', v)) = 0``."""
    w = S.omega_at(x)
    g = S.g_at(x)
    b = np.einsum("...i,...i->...", w, v)
    c = np.einsum("...i,...ij,...j->...", v, g, v)
    return b + np.sqrt(b * b + c)


def christoffel(S, x, step):
    """Christoffel symbols ``Gamma[mu, alpha, beta]`` of ``G`` at ``x`` by central differences."""
    n = S.dimension
    G = assemble_lorentz(S, x)
    dG = np.zeros((n + 1, n + 1, n + 1))
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        dG[k + 1] = (assemble_lorentz(S, x + e) - assemble_lorentz(S, x - e)) / (2 * step)
    lower = 0.5 * (np.transpose(dG, (1, 0, 2)) + np.transpose(dG, (1, 2, 0)) - dG)
    return np.einsum("mn,nab->mab", np.linalg.inv(G), lower)


@dataclass
class NullGeodesic:
    tau: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    tdot: np.ndarray = field(repr=False)
    xdot: np.ndarray = field(repr=False)
    null_defect: np.ndarray = field(repr=False)
    dtau: float = 0.0
    exited: bool = False

    def to_rows(self):
        """Rows ``(tau, t, x^1..x^n, null defect)``."""
        return np.column_stack([self.tau, self.t, self.x, self.null_defect])


def integrate_null_geodesic(S, x0, v0, steps, dtau, fd_step=None):
    """Integrate the future-directed null geodesic with spatial velocity ``v0`` (RK4).

    The initial ``t'`` solves the null condition. Integration stops early,
    with ``exited=True``, when the curve leaves the grid box.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if not np.any(v0):
        raise ValueError("initial spatial velocity must be nonzero")
    n = S.dimension
    domain = S.domain
    fd = fd_step if fd_step is not None else (domain.h if domain is not None else 1e-3)
    tdot0 = float(null_time_rate(S, x0, v0))
    y = np.concatenate([[0.0], x0, [tdot0], v0])

    def rhs(state):
        pos = state[1 : n + 1]
        vel = state[n + 1 :]
        gam = christoffel(S, pos, fd)
        acc = -np.einsum("mab,a,b->m", gam, vel, vel)
        return np.concatenate([vel, acc])

    def defect(state):
        G = assemble_lorentz(S, state[1 : n + 1])
        vel = state[n + 1 :]
        return float(abs(vel @ G @ vel))

    def inside(state, margin):
        if domain is None:
            return True
        pos = state[1 : n + 1]
        lo = np.asarray(domain.origin) + margin
        hi = np.asarray(domain.origin) + np.asarray(domain.extent) - margin
        return bool(np.all(pos >= lo) and np.all(pos <= hi))

    states = [y]
    exited = False
    for _ in range(int(steps)):
        if not inside(y, fd):
            exited = True
            break
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dtau * k1)
        k3 = rhs(y + 0.5 * dtau * k2)
        k4 = rhs(y + dtau * k3)
        y = y + dtau / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        states.append(y)
    if not inside(states[-1], 0.0):
        states.pop()
        exited = True
    arr = np.array(states)
    return NullGeodesic(
        tau=dtau * np.arange(len(arr)),
        t=arr[:, 0],
        x=arr[:, 1 : n + 1],
        tdot=arr[:, n + 1],
        xdot=arr[:, n + 2 :],
        null_defect=np.array([defect(s) for s in arr]),
        dtau=float(dtau),
        exited=exited,
    )


def fermat_projection_check(S, geodesic, graph=None, stencil=None):
    """Compare a null geodesic with the Randers geometry of its projection.

    (a) ``t'`` against ``F(x, x')`` along the curve;
    (b) F-length of the projected curve against the graph distance ``dist+``
        between the nodes nearest to its endpoints.
    """
    F = randers_from_stationary(S)
    domain = S.domain
    speed = F(geodesic.x, geodesic.xdot)
    scale = np.maximum(1.0, np.linalg.norm(geodesic.xdot, axis=-1))
    rate_gap = float(np.max(np.abs(geodesic.tdot - speed) / scale))
    length = float(simpson(speed, x=geodesic.tau))
    report = {
        "max_rate_gap": rate_gap,
        "max_null_defect": float(geodesic.null_defect.max()),
        "f_length": length,
        "time_elapsed": float(geodesic.t[-1] - geodesic.t[0]),
        "exited": geodesic.exited,
    }
    if domain is not None:
        graph = graph if graph is not None else build_graph(domain, F, stencil)
        a = domain.nearest_node(geodesic.x[0])
        b = domain.nearest_node(geodesic.x[-1])
        dist = float(forward_distance(graph, a)[b])
        report.update(
            start_node=list(a),
            end_node=list(b),
            graph_distance=dist,
            relative_gap=(length - dist) / dist if dist > 0 else 0.0,
        )
    return report


__all__ = [
    "CENTRAL_DIFFERENCE",
    "EDGE_DIFFERENCE",
    "NullGeodesic",
    "StationaryMetric",
    "assemble_lorentz",
    "fermat_projection_check",
    "integrate_null_geodesic",
    "lorentz_signature",
    "randers_from_stationary",
    "shift_slice",
    "slice_change_roundtrip",
    "spacelike_slice_check",
]
