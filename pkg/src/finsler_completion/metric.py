"""Finsler metrics on grid charts and their trivial projective changes.

Two families are provided. :class:`RandersMetric` stores a Riemannian metric
``g`` and a drift one-form ``omega`` and evaluates

    F(x, v) = sqrt((g_ij + w_i w_j) v^i v^j) + w_i v^i,

which is positive for ``v != 0`` whenever ``g`` is positive definite.
:class:`CustomMetric` wraps any vectorised callable ``F(x, v)``.

:class:`ProjectiveChange` represents ``F + df``. On graphs its edge weights use
the edge difference ``f(head) - f(tail)``; that makes the change of length of a
path exactly ``f(end) - f(start)``.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ._validation import check_spd, check_vectors
from .exceptions import AdmissibilityError, ConfigError, DomainError
from .grid import direction_fan, stencil_offsets

EDGE_DIFFERENCE = "edge-difference"
CENTRAL_DIFFERENCE = "central-difference"
GRADIENT_SCHEMES = (EDGE_DIFFERENCE, CENTRAL_DIFFERENCE)


class Coefficient:
    """A constant, analytic (callable) or tabulated coefficient field.

    ``trailing`` is the per-point shape: ``(n,)`` for a covector, ``(n, n)``
    for a matrix. Tabulated data must have shape ``domain.shape + trailing``
    and is interpolated multilinearly between nodes.
    """

    def __init__(self, value, trailing, domain=None):
        self.trailing = tuple(trailing)
        self.domain = domain
        if callable(value):
            self.kind = "analytic"
            self._func = value
            return
        arr = np.asarray(value, dtype=float)
        if arr.shape == self.trailing:
            self.kind = "constant"
            self.value = arr
            self._func = lambda x: np.broadcast_to(arr, np.shape(x)[:-1] + self.trailing)
        elif domain is not None and arr.shape == domain.shape + self.trailing:
            self.kind = "tabulated"
            self.value = arr
            interp = RegularGridInterpolator(domain.axes(), arr, bounds_error=True)

            def _tab(x):
                x = np.asarray(x, dtype=float)
                try:
                    return interp(x.reshape(-1, x.shape[-1])).reshape(x.shape[:-1] + self.trailing)
                except ValueError as exc:
                    raise DomainError(str(exc)) from exc

            self._func = _tab
        else:
            raise ValueError(
                f"coefficient of shape {arr.shape} is neither per-point {self.trailing} "
                "nor tabulated on the domain"
            )

    def __call__(self, x):
        return np.asarray(self._func(np.asarray(x, dtype=float)), dtype=float)

    def on_nodes(self, domain):
        if self.kind == "tabulated":
            return self.value
        return self(domain.coordinates())


class MetricField:
    """Common interface: ``F(x, v)`` vectorised over leading axes."""

    dimension = None
    kind = None
    domain = None

    def __call__(self, x, v):
        raise NotImplementedError

    def edge_weights(self, tails, heads, midpoints, vectors):
        """Weights of directed edges given flat node indices, midpoints and displacement vectors."""
        return self(midpoints, vectors)


class RandersMetric(MetricField):
    """Randers metric built from a Riemannian ``g`` and a one-form ``omega``."""

    def __init__(self, g, omega, domain=None, dimension=None):
        if dimension is not None:
            n = dimension
        elif not callable(omega):
            n = np.asarray(omega).shape[-1]
        elif not callable(g):
            n = np.asarray(g).shape[-1]
        else:
            raise ValueError("dimension is required when both g and omega are callables")
        self.dimension = int(n)
        self.domain = domain
        self.g = Coefficient(g, (n, n), domain)
        self.omega = Coefficient(omega, (n,), domain)
        tabulated = "tabulated" in (self.g.kind, self.omega.kind)
        self.kind = "tabulated-randers" if tabulated else "analytic-randers"
        if self.g.kind == "constant":
            check_spd(self.g.value)
        elif domain is not None:
            gn = self.g.on_nodes(domain)
            check_spd(gn[domain.mask], where=lambda i: tuple(int(k) for k in np.argwhere(domain.mask)[i[0]]))

    def coefficients(self, x):
        """Return ``(a, omega)`` at ``x`` where ``a = g + omega omega^T``."""
        g = self.g(x)
        w = self.omega(x)
        return g + w[..., :, None] * w[..., None, :], w

    def __call__(self, x, v):
        x = check_vectors(x, self.dimension, "x")
        v = check_vectors(v, self.dimension, "v")
        a, w = self.coefficients(x)
        q = np.einsum("...i,...ij,...j->...", v, a, v)
        return np.sqrt(np.maximum(q, 0.0)) + np.einsum("...i,...i->...", w, v)

    def positivity_margin(self, x):
        """Closed-form positivity test ``1 - |omega|^2_{a^{-1}}``; F > 0 on v != 0 iff this is > 0."""
        a, w = self.coefficients(x)
        return 1.0 - np.einsum("...i,...i->...", w, np.linalg.solve(a, w[..., None])[..., 0])

    def __repr__(self):
        return f"RandersMetric(kind={self.kind!r}, dimension={self.dimension})"


class CustomMetric(MetricField):
    """Wrap a vectorised callable ``func(x, v)`` as a metric field."""

    kind = "custom"

    def __init__(self, func, dimension, domain=None):
        self.func = func
        self.dimension = int(dimension)
        self.domain = domain

    def __call__(self, x, v):
        x = check_vectors(x, self.dimension, "x")
        v = check_vectors(v, self.dimension, "v")
        out = np.asarray(self.func(x, v), dtype=float)
        return np.where(np.all(v == 0, axis=-1), 0.0, out)

    def __repr__(self):
        return f"CustomMetric(dimension={self.dimension})"


class ProjectiveChange(MetricField):
    """The metric ``base + df`` for a scalar field ``f``.

    ``gradient_scheme`` selects how ``df`` enters graph edge weights: the
    default edge difference ``f(head) - f(tail)``, or the central-difference
    gradient interpolated at the edge midpoint. Pointwise evaluation always
    uses the central-difference gradient.
    """

    def __init__(self, base, f, gradient_scheme=EDGE_DIFFERENCE):
        if gradient_scheme not in GRADIENT_SCHEMES:
            raise ValueError(f"gradient_scheme must be one of {GRADIENT_SCHEMES}")
        self.base = base
        self.f = f
        self.gradient_scheme = gradient_scheme
        self.dimension = base.dimension
        self.domain = f.domain
        self.kind = getattr(base, "kind", None)
        self._grad = None

    @property
    def gradient(self):
        if self._grad is None:
            self._grad = Coefficient(np.nan_to_num(self.f.gradient()), (self.dimension,), self.f.domain)
        return self._grad

    def __call__(self, x, v):
        v = check_vectors(v, self.dimension, "v")
        return self.base(x, v) + np.einsum("...i,...i->...", self.gradient(x), v)

    def edge_weights(self, tails, heads, midpoints, vectors):
        w = self.base.edge_weights(tails, heads, midpoints, vectors)
        if self.gradient_scheme == EDGE_DIFFERENCE:
            flat = self.f.values.ravel()
            return w + (flat[heads] - flat[tails])
        return w + np.einsum("...i,...i->...", self.gradient(midpoints), vectors)

    def __repr__(self):
        return f"ProjectiveChange(base={self.base!r}, scheme={self.gradient_scheme!r})"


def eval_metric(F, x, v, domain=None):
    """Evaluate ``F(x, v)`` at a single point, checking that ``x`` is on the manifold."""
    domain = domain if domain is not None else F.domain
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if domain is not None:
        if not domain.contains(x):
            raise DomainError(f"point {x.tolist()} lies outside the domain")
        node = domain.nearest_node(x)
        if not domain.mask[node]:
            raise DomainError(f"point {x.tolist()} lies on masked node {node}")
    if not np.any(v):
        return 0.0
    return float(F(x, v))


@dataclass(frozen=True)
class HomogeneityReport:
    max_relative_violation: float
    min_unit_value: float
    worst_point: tuple
    worst_direction: tuple
    closed_form_margin: float | None = None

    @property
    def positive(self):
        ok = self.min_unit_value > 0
        if self.closed_form_margin is not None:
            ok = ok and self.closed_form_margin > 0
        return bool(ok)

    def to_dict(self):
        return {
            "max_relative_violation": self.max_relative_violation,
            "min_unit_value": self.min_unit_value,
            "worst_point": list(self.worst_point),
            "worst_direction": list(self.worst_direction),
            "closed_form_margin": self.closed_form_margin,
            "positive": self.positive,
        }


def check_positive_homogeneous(F, sample_points, direction_fan=None, lambdas=(0.5, 2.0, 10.0)):
    """Probe positivity and positive 1-homogeneity of ``F`` on samples.

    Violations are reported, never raised.
    """
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if pts.size == 0:
        raise ValueError("sample_points must be nonempty")
    fan = direction_fan if direction_fan is not None else _default_fan(F.dimension)
    fan = np.atleast_2d(np.asarray(fan, dtype=float))
    xs = np.broadcast_to(pts[:, None, :], (len(pts), len(fan), F.dimension))
    vs = np.broadcast_to(fan[None, :, :], xs.shape)
    base = F(xs, vs)
    viol = 0.0
    for lam in lambdas:
        scaled = F(xs, lam * vs)
        ref = lam * base
        rel = np.abs(scaled - ref) / np.maximum(np.abs(ref), np.finfo(float).tiny)
        viol = max(viol, float(rel.max()))
    i, j = np.unravel_index(np.argmin(base), base.shape)
    margin = None
    if isinstance(F, RandersMetric):
        margin = float(F.positivity_margin(pts).min())
    return HomogeneityReport(
        max_relative_violation=viol,
        min_unit_value=float(base[i, j]),
        worst_point=tuple(pts[i].tolist()),
        worst_direction=tuple(fan[j].tolist()),
        closed_form_margin=margin,
    )


def _default_fan(dimension):
    return direction_fan(dimension, offsets=stencil_offsets(dimension))


def admissibility_margin(change, fan=None):
    """Minimum of ``F(x, v) + d_x f(v)`` over unmasked nodes and unit fan directions.

    Returns ``(margin, worst_point, worst_direction)``; ``df`` is the
    central-difference gradient.
    """
    dom = change.f.domain
    fan = fan if fan is not None else _default_fan(dom.dimension)
    fan = np.asarray(fan, dtype=float)
    x = dom.coordinates()[dom.mask]
    grad = np.nan_to_num(change.f.gradient())[dom.mask]
    xs = np.broadcast_to(x[:, None, :], (len(x), len(fan), dom.dimension))
    vs = np.broadcast_to(fan[None], xs.shape)
    vals = change.base(xs, vs) + np.einsum("pi,ki->pk", grad, fan)
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    return float(vals[i, j]), tuple(x[i].tolist()), tuple(fan[j].tolist())


def apply_projective_change(F, f, gradient_scheme=EDGE_DIFFERENCE, fan=None):
    """Return ``F + df`` after checking admissibility on nodes and fan directions."""
    change = ProjectiveChange(F, f, gradient_scheme)
    margin, x, v = admissibility_margin(change, fan)
    if not margin > 0:
        raise AdmissibilityError(
            f"F + df is not positive: value {margin:.6g} at x={x}, v={v}",
            worst_point=x,
            worst_direction=v,
            margin=margin,
        )
    return change


# ---------------------------------------------------------------------------
# JSON metric documents

def _modulated(base, amplitude, wavelength):
    base = np.asarray(base, dtype=float)
    k = 2 * np.pi / float(wavelength)

    def omega(x):
        mod = np.sin(k * x[..., 0])
        for axis in range(1, x.shape[-1]):
            mod = mod * np.cos(k * x[..., axis])
        return base * (1 + amplitude * mod)[..., None]

    return omega


def _axial(base, amplitude, wavelength):
    base = float(base)
    k = 2 * np.pi / float(wavelength)

    def omega(x):
        out = np.zeros(np.shape(x))
        out[..., 0] = base + amplitude * np.sin(k * x[..., 0])
        return out

    return omega


def _conformal_bump(dimension, amplitude, center, width):
    center = np.asarray(center, dtype=float)

    def g(x):
        r2 = np.sum((x - center) ** 2, axis=-1)
        s = 1 + amplitude * np.exp(-r2 / width**2)
        return s[..., None, None] * np.eye(dimension)

    return g


OMEGA_FAMILIES = {"modulated": _modulated, "axial": _axial}


def _load_array(spec, trailing, domain, base_dir):
    if "tabulated" in spec:
        arr = np.asarray(spec["tabulated"], dtype=float)
    else:
        path = Path(base_dir or ".") / spec["file"]
        arr = np.fromfile(path, dtype="<f8")
    shape = domain.shape + trailing if domain is not None else None
    if shape is not None and arr.size == int(np.prod(shape)):
        arr = arr.reshape(shape)
    return arr


def _g_from_spec(spec, n, domain, base_dir):
    if spec in (None, "identity"):
        return np.eye(n)
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    if "diag" in spec:
        return np.diag(np.asarray(spec["diag"], dtype=float))
    if "constant" in spec:
        return np.asarray(spec["constant"], dtype=float)
    if spec.get("id") == "conformal-bump":
        return _conformal_bump(n, spec["amplitude"], spec.get("center", [0.0] * n), spec["width"])
    if "tabulated" in spec or "file" in spec:
        return _load_array(spec, (n, n), domain, base_dir)
    raise ConfigError(f"unrecognised g specification {spec!r}")


def _omega_from_spec(spec, n, domain, base_dir):
    if spec is None:
        return np.zeros(n)
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    family = OMEGA_FAMILIES.get(spec.get("id"))
    if family is not None:
        params = {k: v for k, v in spec.items() if k != "id"}
        return family(**params)
    if "tabulated" in spec or "file" in spec:
        return _load_array(spec, (n,), domain, base_dir)
    raise ConfigError(f"unrecognised omega specification {spec!r}")


def load_metric(doc, domain=None, base_dir=None):
    """Build a metric from a JSON document (dict, JSON string or path).

    Recognised form::

        {"kind": "randers", "dimension": 2,
         "g": "identity" | {"diag": [...]} | {"constant": [[...]]}
              | {"id": "conformal-bump", ...} | {"tabulated": [...]} | {"file": "g.f64"},
         "omega": [..] | {"id": "modulated" | "axial", ...} | {"tabulated": [...]} | {"file": ...}}

    Tabulated data is row-major float64 with shape ``grid + (n, n)`` or ``grid + (n,)``.
    """
    if isinstance(doc, (str, Path)) and Path(doc).exists():
        base_dir = base_dir or Path(doc).parent
        doc = json.loads(Path(doc).read_text())
    elif isinstance(doc, str):
        doc = json.loads(doc)
    if doc.get("kind", "randers") != "randers":
        raise ConfigError(f"only 'randers' metrics can be loaded from JSON, got {doc.get('kind')!r}")
    n = doc.get("dimension") or (domain.dimension if domain is not None else None)
    if n is None:
        raise ConfigError("metric document needs a 'dimension' or a domain")
    g = _g_from_spec(doc.get("g"), n, domain, base_dir)
    omega = _omega_from_spec(doc.get("omega"), n, domain, base_dir)
    return RandersMetric(g, omega, domain, dimension=n)
