"""Rectangular grid charts with masks, scalar fields on them, and stencils.

A :class:`GridDomain` is the discrete stand-in for the manifold: an
axis-aligned lattice of spacing ``h`` whose ``mask`` marks the nodes that
belong to the manifold. Masked nodes model punctures (ends at finite
distance); domain faces are either artificial truncation or, when listed in
``open_ends``, genuine ends of the manifold.
"""

from itertools import product

import numpy as np
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator

from ._validation import check_positive_scalar
from .exceptions import DomainError

AXIS_NAMES = "xyz"

DEFAULT_STENCIL = {1: 2, 2: 8, 3: 26}


def face_labels(dimension):
    return [f"{AXIS_NAMES[a]}{s}" for a in range(dimension) for s in "-+"]


class GridDomain:
    """Masked rectangular lattice.

    Parameters
    ----------
    origin : sequence of float
        Coordinates of node ``(0, ..., 0)``.
    shape : sequence of int
        Number of nodes per axis.
    h : float
        Grid spacing, shared by all axes.
    mask : bool array of ``shape``, optional
        True where the node belongs to the manifold. Defaults to all True.
    open_ends : iterable of str, optional
        Faces (``"x-"``, ``"x+"``, ``"y-"``, ...) that are ends of the manifold
        rather than truncation of a larger one.
    """

    def __init__(self, origin, shape, h, mask=None, open_ends=()):
        self.origin = tuple(float(o) for o in origin)
        self.shape = tuple(int(s) for s in shape)
        self.h = check_positive_scalar(h, "h")
        if len(self.origin) != len(self.shape) or not 1 <= len(self.shape) <= 3:
            raise ValueError("origin and shape must have the same length, between 1 and 3")
        if any(s < 2 for s in self.shape):
            raise ValueError(f"each axis needs at least two nodes, got shape {self.shape}")
        if mask is None:
            mask = np.ones(self.shape, dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != self.shape:
            raise ValueError(f"mask shape {mask.shape} does not match grid shape {self.shape}")
        if not mask.any():
            raise ValueError("domain has no unmasked node")
        mask = mask.copy()
        mask.setflags(write=False)
        self.mask = mask
        valid = set(face_labels(self.dimension))
        unknown = set(open_ends) - valid
        if unknown:
            raise ValueError(f"unknown face labels {sorted(unknown)}; expected a subset of {sorted(valid)}")
        self.open_ends = frozenset(open_ends)
        _, ncomp = ndimage.label(self.mask, structure=np.ones((3,) * self.dimension))
        if ncomp != 1:
            raise ValueError(f"unmasked nodes form {ncomp} components; the manifold must be connected")

    @classmethod
    def box(cls, lower, upper, h, open_ends=()):
        """Lattice covering ``[lower, upper]`` with spacing ``h``."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        counts = (upper - lower) / h
        if np.any(np.abs(counts - np.round(counts)) > 1e-9):
            raise ValueError("box extents must be integer multiples of h")
        shape = tuple(int(round(c)) + 1 for c in counts)
        return cls(lower, shape, h, open_ends=open_ends)

    def with_holes(self, holes):
        """Return a copy with closed Euclidean balls ``(center, radius)`` masked out."""
        x = self.coordinates()
        mask = self.mask.copy()
        for center, radius in holes:
            d = np.linalg.norm(x - np.asarray(center, dtype=float), axis=-1)
            mask &= d > radius
        return GridDomain(self.origin, self.shape, self.h, mask, self.open_ends)

    @property
    def dimension(self):
        return len(self.shape)

    @property
    def n_nodes(self):
        return int(self.mask.sum())

    @property
    def extent(self):
        return tuple(self.h * (s - 1) for s in self.shape)

    @property
    def width(self):
        """Shortest side length."""
        return min(self.extent)

    def axes(self):
        return [o + self.h * np.arange(s) for o, s in zip(self.origin, self.shape)]

    def coordinates(self):
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def point(self, node):
        return np.asarray(self.origin) + self.h * np.asarray(node, dtype=float)

    def nearest_node(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.round((x - np.asarray(self.origin)) / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.shape)):
            raise DomainError(f"point {x.tolist()} lies outside the grid")
        return tuple(int(i) for i in idx)

    def contains(self, x):
        """True where the points ``x`` lie inside the grid box (ignores the mask)."""
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.origin)
        hi = lo + np.asarray(self.extent)
        tol = 1e-12 * max(1.0, float(np.abs(hi).max()))
        return np.all((x >= lo - tol) & (x <= hi + tol), axis=-1)

    def face_nodes(self):
        """Map face label to a boolean grid array of the unmasked nodes on that face."""
        out = {}
        for axis in range(self.dimension):
            for side, index in (("-", 0), ("+", self.shape[axis] - 1)):
                arr = np.zeros(self.shape, dtype=bool)
                sl = [slice(None)] * self.dimension
                sl[axis] = index
                arr[tuple(sl)] = True
                out[f"{AXIS_NAMES[axis]}{side}"] = arr & self.mask
        return out

    def hole_adjacent(self, offsets):
        """Unmasked nodes having a masked in-grid neighbour under ``offsets``."""
        out = np.zeros(self.shape, dtype=bool)
        padded = np.pad(~self.mask, 2, constant_values=False)
        for off in offsets:
            sl = tuple(slice(2 + o, 2 + o + s) for o, s in zip(off, self.shape))
            out |= padded[sl]
        return out & self.mask

    def __eq__(self, other):
        if not isinstance(other, GridDomain):
            return NotImplemented
        return (
            self.origin == other.origin
            and self.shape == other.shape
            and self.h == other.h
            and self.open_ends == other.open_ends
            and np.array_equal(self.mask, other.mask)
        )

    def __hash__(self):
        return hash((self.origin, self.shape, self.h))

    def __repr__(self):
        holes = self.mask.size - self.n_nodes
        return f"GridDomain(origin={self.origin}, shape={self.shape}, h={self.h}, masked={holes})"


class ScalarField:
    """Real values on the unmasked nodes of a domain (NaN on masked ones)."""

    def __init__(self, domain, values):
        values = np.array(values, dtype=float)
        if values.shape != domain.shape:
            raise ValueError(f"values shape {values.shape} does not match grid shape {domain.shape}")
        values[~domain.mask] = np.nan
        if not np.all(np.isfinite(values[domain.mask])):
            raise ValueError("scalar field must be finite at every unmasked node")
        values.setflags(write=False)
        self.domain = domain
        self.values = values

    @classmethod
    def from_function(cls, domain, func):
        """Tabulate ``func(coords)`` where ``coords`` has shape ``grid + (n,)``."""
        return cls(domain, func(domain.coordinates()))

    @classmethod
    def constant(cls, domain, value=0.0):
        return cls(domain, np.full(domain.shape, float(value)))

    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.domain != self.domain:
                raise ValueError("fields live on different grid domains")
            return other.values
        return float(other)

    def __add__(self, other):
        return ScalarField(self.domain, np.nan_to_num(self.values) + np.nan_to_num(self._other(other)))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.domain, np.nan_to_num(self.values) - np.nan_to_num(self._other(other)))

    def __neg__(self):
        return ScalarField(self.domain, -np.nan_to_num(self.values))

    def __mul__(self, c):
        return ScalarField(self.domain, np.nan_to_num(self.values) * float(c))

    __rmul__ = __mul__

    def __getitem__(self, node):
        return self.values[tuple(node)]

    def gradient(self):
        """Central-difference gradient, one-sided next to masks and faces.

        Returns an array of shape ``grid + (n,)``; zero along axes where a node
        has no unmasked neighbour at all.
        """
        dom = self.domain
        v = np.nan_to_num(self.values)
        grad = np.zeros(dom.shape + (dom.dimension,))
        for axis in range(dom.dimension):
            fwd = np.zeros(dom.shape, dtype=bool)
            bwd = np.zeros(dom.shape, dtype=bool)
            vf = np.zeros(dom.shape)
            vb = np.zeros(dom.shape)
            n = dom.shape[axis]
            hi = [slice(None)] * dom.dimension
            lo = [slice(None)] * dom.dimension
            hi[axis] = slice(1, n)
            lo[axis] = slice(0, n - 1)
            hi, lo = tuple(hi), tuple(lo)
            fwd[lo] = dom.mask[hi]
            vf[lo] = v[hi]
            bwd[hi] = dom.mask[lo]
            vb[hi] = v[lo]
            g = np.zeros(dom.shape)
            both = fwd & bwd
            g[both] = (vf[both] - vb[both]) / (2 * dom.h)
            only_f = fwd & ~bwd
            g[only_f] = (vf[only_f] - v[only_f]) / dom.h
            only_b = bwd & ~fwd
            g[only_b] = (v[only_b] - vb[only_b]) / dom.h
            grad[..., axis] = np.where(dom.mask, g, np.nan)
        return grad

    def interpolator(self, values=None):
        vals = self.values if values is None else values
        return RegularGridInterpolator(self.domain.axes(), vals, bounds_error=True)

    def at(self, points):
        """Multilinear interpolation at arbitrary points inside the grid."""
        points = np.asarray(points, dtype=float)
        try:
            out = self.interpolator()(points)
        except ValueError as exc:
            raise DomainError(str(exc)) from exc
        if np.any(np.isnan(out)):
            raise DomainError("interpolation touched a masked node")
        return out

    def __repr__(self):
        vals = self.values[self.domain.mask]
        return f"ScalarField(min={vals.min():.6g}, max={vals.max():.6g}, domain={self.domain!r})"


def stencil_offsets(dimension, size=None):
    """Integer neighbour offsets of a stencil.

    Supported sizes: 2 in 1D; 4, 8 and 16 in 2D; 6 and 26 in 3D. The
    16-neighbour stencil adds the knight moves ``(±1, ±2)``, ``(±2, ±1)``.
    """
    if size is None:
        size = DEFAULT_STENCIL[dimension]
    if dimension == 1 and size == 2:
        return np.array([[-1], [1]])
    if (dimension, size) in ((2, 4), (3, 6)):
        eye = np.eye(dimension, dtype=int)
        return np.concatenate([eye, -eye])
    if (dimension, size) in ((2, 8), (3, 26)):
        offs = [o for o in product((-1, 0, 1), repeat=dimension) if any(o)]
        return np.array(offs)
    if (dimension, size) == (2, 16):
        offs = [o for o in product((-1, 0, 1), repeat=2) if any(o)]
        offs += [(a * i, b * j) for i, j in ((1, 2), (2, 1)) for a in (-1, 1) for b in (-1, 1)]
        return np.array(offs)
    raise ValueError(f"unsupported stencil size {size} in dimension {dimension}")


def direction_fan(dimension, count=None, offsets=None):
    """Unit directions used to probe positivity: a uniform fan plus stencil directions."""
    if dimension == 1:
        dirs = np.array([[-1.0], [1.0]])
    elif dimension == 2:
        count = 16 if count is None else count
        theta = 2 * np.pi * np.arange(count) / count
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    else:
        count = 48 if count is None else count
        # Fibonacci sphere
        k = np.arange(count) + 0.5
        z = 1 - 2 * k / count
        phi = np.pi * (1 + 5**0.5) * k
        rho = np.sqrt(1 - z * z)
        dirs = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
    if offsets is not None:
        offs = np.asarray(offsets, dtype=float)
        dirs = np.concatenate([dirs, offs / np.linalg.norm(offs, axis=-1, keepdims=True)])
    return dirs
