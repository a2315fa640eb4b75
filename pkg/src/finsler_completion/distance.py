"""Forward and backward distance fields on stencil graphs, and properness tests.

The manifold is replaced by a directed graph on the unmasked grid nodes. The
edge ``x -> y`` carries the weight ``F(midpoint(x, y), y - x)``, a consistent
discretisation of the forward length functional. Distances are exact graph
shortest-path values, so triangle inequalities and the behaviour under
``F + df`` hold to rounding error rather than to discretisation error.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from ._validation import check_alphas, check_levels, check_node, check_same_grid
from .exceptions import GraphConstructionError
from .grid import stencil_offsets

FORWARD = "forward"
BACKWARD = "backward"

COMPACT_LIKE = "COMPACT-LIKE"
INCONCLUSIVE = "INCONCLUSIVE"
NONPROPER_EVIDENCE = "NONPROPER-EVIDENCE"
_SEVERITY = {COMPACT_LIKE: 0, INCONCLUSIVE: 1, NONPROPER_EVIDENCE: 2}


class StencilGraph:
    """Directed graph on unmasked nodes; edges stored as flat grid indices."""

    def __init__(self, domain, offsets, tails, heads, weights, edge_offset_index):
        self.domain = domain
        self.offsets = np.asarray(offsets)
        self.tails = np.asarray(tails)
        self.heads = np.asarray(heads)
        self.weights = np.asarray(weights, dtype=float)
        self.edge_offset_index = np.asarray(edge_offset_index)
        node_id = np.full(domain.mask.size, -1)
        node_id[domain.mask.ravel()] = np.arange(domain.n_nodes)
        self.node_id = node_id
        self.flat_nodes = np.flatnonzero(domain.mask.ravel())
        self._csr = None
        self._lookup = None

    @property
    def n_edges(self):
        return len(self.weights)

    @property
    def csr(self):
        if self._csr is None:
            n = self.domain.n_nodes
            self._csr = csr_matrix(
                (self.weights, (self.node_id[self.tails], self.node_id[self.heads])), shape=(n, n)
            )
        return self._csr

    def reversed(self):
        """The graph with every edge direction flipped (weights kept)."""
        return StencilGraph(self.domain, -self.offsets, self.heads, self.tails, self.weights, self.edge_offset_index)

    def weight(self, tail, head):
        """Weight of the edge between two node multi-indices."""
        if self._lookup is None:
            self._lookup = {(int(t), int(h)): i for i, (t, h) in enumerate(zip(self.tails, self.heads))}
        t = int(np.ravel_multi_index(tuple(tail), self.domain.shape))
        h = int(np.ravel_multi_index(tuple(head), self.domain.shape))
        return float(self.weights[self._lookup[(t, h)]])

    def path_length(self, nodes):
        """Sum of edge weights along a sequence of adjacent node multi-indices."""
        return float(sum(self.weight(a, b) for a, b in zip(nodes[:-1], nodes[1:])))

    def node_coordinates(self, flat):
        idx = np.stack(np.unravel_index(flat, self.domain.shape), axis=-1)
        return np.asarray(self.domain.origin) + self.domain.h * idx

    def __repr__(self):
        return f"StencilGraph(nodes={self.domain.n_nodes}, edges={self.n_edges}, stencil={len(self.offsets)})"


def build_graph(domain, F, stencil=None):
    """Build the stencil graph of ``F`` (a metric or a projective change) on ``domain``.

    Knight-move edges of the 16-neighbour stencil additionally require the two
    nodes straddling the edge midpoint to be unmasked, so edges never jump
    over a hole.
    """
    offsets = stencil_offsets(domain.dimension, stencil)
    shape = domain.shape
    mask = domain.mask
    flat_index = np.arange(mask.size).reshape(shape)
    tails, heads, off_idx = [], [], []
    for k, o in enumerate(offsets):
        src = tuple(slice(max(0, -c), s - max(0, c)) for c, s in zip(o, shape))
        dst = tuple(slice(max(0, c), s - max(0, -c)) for c, s in zip(o, shape))
        valid = mask[src] & mask[dst]
        for inner in {tuple(np.floor(o / 2).astype(int)), tuple(np.ceil(o / 2).astype(int))}:
            if any(inner) and tuple(inner) != tuple(o):
                sl = tuple(slice(max(0, -c) + i, s - max(0, c) + i) for c, i, s in zip(o, inner, shape))
                valid &= mask[sl]
        tails.append(flat_index[src][valid])
        heads.append(flat_index[dst][valid])
        off_idx.append(np.full(int(valid.sum()), k))
    tails = np.concatenate(tails)
    heads = np.concatenate(heads)
    off_idx = np.concatenate(off_idx)
    origin = np.asarray(domain.origin)
    x_tail = origin + domain.h * np.stack(np.unravel_index(tails, shape), axis=-1)
    vectors = domain.h * offsets[off_idx].astype(float)
    midpoints = x_tail + 0.5 * vectors
    weights = np.asarray(F.edge_weights(tails, heads, midpoints, vectors), dtype=float)
    bad = ~(weights > 0) | ~np.isfinite(weights)
    if np.any(bad):
        i = int(np.argmax(bad))
        t = np.unravel_index(tails[i], shape)
        h = np.unravel_index(heads[i], shape)
        raise GraphConstructionError(
            f"nonpositive edge weight {weights[i]:.6g} on edge {tuple(map(int, t))} -> {tuple(map(int, h))}"
        )
    return StencilGraph(domain, offsets, tails, heads, weights, off_idx)


@dataclass(frozen=True)
class DistanceField:
    """Graph distance from (forward) or to (backward) a base node."""

    domain: object
    base_point: tuple
    orientation: str
    values: np.ndarray = field(repr=False)

    @property
    def unreachable(self):
        return int(np.sum(np.isinf(self.values[self.domain.mask])))

    def __getitem__(self, node):
        return self.values[tuple(node)]


def _solve(graph, p, orientation):
    p = check_node(graph.domain, p)
    pid = graph.node_id[np.ravel_multi_index(p, graph.domain.shape)]
    csr = graph.csr if orientation == FORWARD else graph.csr.T.tocsr()
    dist = dijkstra(csr, directed=True, indices=int(pid))
    values = np.full(graph.domain.shape, np.nan)
    values.ravel()[graph.flat_nodes] = dist
    values.setflags(write=False)
    return DistanceField(graph.domain, p, orientation, values)


def forward_distance(graph, p):
    """``D+(x) = dist+(p, x)``: shortest path lengths from ``p``."""
    return _solve(graph, p, FORWARD)


def backward_distance(graph, p):
    """``D-(x) = dist-(p, x) = dist+(x, p)``: shortest path lengths into ``p``."""
    return _solve(graph, p, BACKWARD)


def shortest_path(graph, source, target):
    """Node multi-indices of one shortest path ``source -> target``."""
    shape = graph.domain.shape
    s = graph.node_id[np.ravel_multi_index(check_node(graph.domain, source), shape)]
    t = graph.node_id[np.ravel_multi_index(check_node(graph.domain, target), shape)]
    _, pred = dijkstra(graph.csr, directed=True, indices=int(s), return_predecessors=True)
    if pred[t] < 0 and s != t:
        raise ValueError("target is unreachable")
    chain = [int(t)]
    while chain[-1] != s:
        chain.append(int(pred[chain[-1]]))
    flat = graph.flat_nodes[np.array(chain[::-1])]
    return [tuple(int(i) for i in np.unravel_index(k, shape)) for k in flat]


# ---------------------------------------------------------------------------
# properness


@dataclass
class PropernessReport:
    levels: list
    verdicts: list
    details: list
    overall: str

    def to_dict(self):
        return {
            "levels": [float(c) for c in self.levels],
            "verdicts": list(self.verdicts),
            "details": self.details,
            "overall": self.overall,
        }


def classify_sublevels(values, domain, levels, offsets=None):
    """Three-way classification of the sublevel sets ``{values <= c}``.

    A sublevel set is NONPROPER-EVIDENCE when it contains a node next to a
    masked hole or on an open-end face, INCONCLUSIVE when it reaches a
    truncation face, and COMPACT-LIKE otherwise.
    """
    levels = check_levels(levels)
    offsets = stencil_offsets(domain.dimension) if offsets is None else offsets
    near_hole = domain.hole_adjacent(offsets)
    faces = domain.face_nodes()
    open_faces = np.zeros(domain.shape, dtype=bool)
    cut_faces = np.zeros(domain.shape, dtype=bool)
    for label, nodes in faces.items():
        if label in domain.open_ends:
            open_faces |= nodes
        else:
            cut_faces |= nodes
    finite = np.where(domain.mask, values, np.inf)
    verdicts, details = [], []
    for c in levels:
        sub = finite <= c
        hole = int(np.sum(sub & near_hole))
        ends = int(np.sum(sub & open_faces))
        cut = int(np.sum(sub & cut_faces))
        if hole or ends:
            verdict = NONPROPER_EVIDENCE
        elif cut:
            verdict = INCONCLUSIVE
        else:
            verdict = COMPACT_LIKE
        verdicts.append(verdict)
        details.append(
            {"level": float(c), "nodes": int(sub.sum()), "hole_contacts": hole, "open_end_contacts": ends,
             "truncation_contacts": cut, "verdict": verdict}
        )
    overall = max(verdicts, key=_SEVERITY.__getitem__)
    return PropernessReport(list(levels), verdicts, details, overall)


def _check_pair(Dplus, Dminus):
    if Dplus.orientation != FORWARD or Dminus.orientation != BACKWARD:
        raise ValueError("expected a forward and a backward distance field")
    if tuple(Dplus.base_point) != tuple(Dminus.base_point):
        raise ValueError("distance fields have different base points")
    return check_same_grid(Dplus, Dminus)


def properness_indicator(Dplus, Dminus, levels, offsets=None):
    """Classify the sublevel sets of ``D+ + D-`` at each level."""
    domain = _check_pair(Dplus, Dminus)
    return classify_sublevels(Dplus.values + Dminus.values, domain, levels, offsets)


def scaled_properness_agreement(Dplus, Dminus, levels, alphas=((1, 1), (0.75, 0.25), (2, 1)), offsets=None):
    """Compare verdicts of ``a1 D+ + a2 D-`` with those of ``D+ + D-``.

    For each pair the weighted sum is probed at levels ``a_max * c``. Then
    ``{D+ + D- <= c} <= {a.D <= a_max c} <= {D+ + D- <= (a_max / a_min) c}``,
    which is checked node by node, together with the matching ordering of
    verdict severities. The pair agrees when its overall verdict equals the
    reference one.
    """
    domain = _check_pair(Dplus, Dminus)
    levels = check_levels(levels)
    alphas = check_alphas(alphas)
    total = Dplus.values + Dminus.values
    reference = classify_sublevels(total, domain, levels, offsets)
    m = domain.mask
    finite = total[m][np.isfinite(total[m])]
    tol = 1e-12 * max(1.0, float(finite.max()) if finite.size else 1.0)
    rows = []
    agree = True
    for a1, a2 in alphas:
        combo = a1 * Dplus.values + a2 * Dminus.values
        amin, amax = min(a1, a2), max(a1, a2)
        ratio = amax / amin
        rep = classify_sublevels(combo, domain, amax * levels, offsets)
        outer = classify_sublevels(total, domain, ratio * levels, offsets)
        inclusions = True
        ordered = True
        for i, c in enumerate(levels):
            probe = m & (combo <= amax * c)
            inner = m & (total <= c)
            inclusions &= bool(np.all(combo[inner] <= amax * c + tol))
            inclusions &= bool(np.all(total[probe] <= ratio * c + tol))
            lo, mid, hi = reference.verdicts[i], rep.verdicts[i], outer.verdicts[i]
            ordered &= _SEVERITY[lo] <= _SEVERITY[mid] <= _SEVERITY[hi]
        same = rep.overall == reference.overall
        agree &= same and inclusions and ordered
        rows.append(
            {"alpha": [a1, a2], "report": rep.to_dict(), "inclusions_hold": inclusions,
             "severity_sandwich_holds": ordered, "agrees": same}
        )
    return {"reference": reference.to_dict(), "alphas": rows, "agree": bool(agree)}
