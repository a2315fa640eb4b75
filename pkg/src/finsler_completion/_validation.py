"""Input validation helpers, in the spirit of ``sklearn.utils.validation``."""

import numbers

import numpy as np

from .exceptions import DataError, DomainError


def check_positive_scalar(value, name, *, allow_zero=False):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValueError(f"{name} must be {bound}, got {value!r}")
    return float(value)


def check_levels(levels):
    levels = np.atleast_1d(np.asarray(levels, dtype=float))
    if levels.ndim != 1 or levels.size == 0:
        raise ValueError("levels must be a nonempty 1-d sequence")
    if np.any(~np.isfinite(levels)) or np.any(levels <= 0):
        raise ValueError(f"levels must be positive and finite, got {levels.tolist()}")
    return levels


def check_alphas(alphas):
    out = []
    for pair in alphas:
        a1, a2 = (float(a) for a in pair)
        if not (a1 > 0 and a2 > 0):
            raise ValueError(f"alpha pairs must be strictly positive, got {pair!r}")
        out.append((a1, a2))
    if not out:
        raise ValueError("at least one alpha pair is required")
    return out


def check_vectors(x, dimension, name="x"):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (dimension,):
        raise ValueError(f"{name} must have trailing dimension {dimension}, got shape {x.shape}")
    return x


def check_spd(matrices, where=None):
    """Raise DataError naming the first node where a matrix is not SPD."""
    m = np.asarray(matrices, dtype=float)
    if not np.allclose(m, np.swapaxes(m, -1, -2), rtol=1e-12, atol=1e-12):
        raise DataError("metric matrix g is not symmetric")
    eig = np.linalg.eigvalsh(m)
    bad = eig[..., 0] <= 0
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(np.atleast_1d(bad))[0])
        loc = where(idx) if where is not None else idx
        raise DataError(f"g is not positive definite at node {loc} (min eigenvalue {eig[..., 0].min():.3g})")
    return m


def check_same_grid(*fields):
    first = fields[0].domain
    for fld in fields[1:]:
        if fld.domain is not first and fld.domain != first:
            raise ValueError("fields live on different grid domains")
    return first


def check_node(domain, node):
    node = tuple(int(i) for i in node)
    if len(node) != domain.dimension:
        raise DomainError(f"node index {node} has wrong dimension")
    if any(i < 0 or i >= s for i, s in zip(node, domain.shape)):
        raise DomainError(f"node {node} lies outside the grid {domain.shape}")
    if not domain.mask[node]:
        raise DomainError(f"node {node} is masked")
    return node
