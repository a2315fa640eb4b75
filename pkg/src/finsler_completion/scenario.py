"""Scenario documents: one JSON file describing a metric, a grid and a pipeline.

Example::

    {
      "name": "constant-randers-b05",
      "metric": {"g": "identity", "omega": [0.5, 0.0]},
      "domain": {"lower": [-2, -2], "upper": [2, 2], "h": 0.03125},
      "base_point": [0, 0],
      "stencil": 8,
      "pipeline": [
        {"stage": "distances"},
        {"stage": "properness"},
        {"stage": "mollify", "eps1": 0.05, "eps2": 0.5},
        {"stage": "completion"}
      ]
    }

Keys starting with ``_`` are annotations and ignored. See the README for the
full list of keys and stage parameters.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import ConfigError
from .grid import GridDomain, ScalarField, face_labels
from .metric import _g_from_spec, _omega_from_spec, load_metric
from .spacetime import StationaryMetric

STAGE_PARAMS = {
    "distances": set(),
    "properness": {"levels", "alphas"},
    "mollify": {"eps1", "eps2", "r0", "radius", "half_width"},
    "completion": {"obstruction"},
    "obstruction": {"R", "functions"},
    "geodesic": {"x0", "v0", "steps", "dtau"},
}
STAGE_REQUIRES = {
    "distances": (),
    "properness": ("distances",),
    "mollify": ("distances",),
    "completion": ("distances", "properness"),
    "obstruction": ("distances",),
    "geodesic": (),
}
TOP_LEVEL = {"name", "description", "metric", "domain", "base_point", "stencil", "seed", "lipschitz_mode",
             "pipeline", "spacetime", "verify"}
STENCILS = {1: (2,), 2: (4, 8, 16), 3: (6, 26)}


@dataclass(frozen=True)
class Stage:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    name: str
    metric: dict
    domain: dict
    pipeline: tuple
    base_point: tuple = None
    stencil: int = None
    seed: int = 0
    lipschitz_mode: bool = False
    spacetime: dict = None
    verify: dict = field(default_factory=dict)
    description: str = ""
    source: Path = None

    @property
    def stage_names(self):
        return [s.name for s in self.pipeline]

    def stage(self, name):
        for s in self.pipeline:
            if s.name == name:
                return s
        return None

    def with_overrides(self, h=None, stencil=None, lipschitz_mode=None, seed=None):
        """Copy with command-line overrides applied."""
        changes = {}
        if h is not None:
            changes["domain"] = {**self.domain, "h": float(h)}
        if stencil is not None:
            changes["stencil"] = int(stencil)
        if lipschitz_mode:
            changes["lipschitz_mode"] = True
        if seed is not None:
            changes["seed"] = int(seed)
        out = replace(self, **changes)
        _validate_semantics(out)
        return out

    def build_domain(self):
        d = self.domain
        try:
            dom = GridDomain.box(d["lower"], d["upper"], d["h"], d.get("open_ends", ()))
            holes = [(hole["center"], hole["radius"]) for hole in d.get("holes", [])]
            return dom.with_holes(holes) if holes else dom
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"domain: {exc}") from exc

    def build_metric(self, domain):
        try:
            return load_metric(self.metric, domain, self.source.parent if self.source else None)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"metric: {exc}") from exc

    def build_stationary(self, domain):
        spec = self.spacetime if self.spacetime is not None else self.metric
        n = domain.dimension
        base = self.source.parent if self.source else None
        try:
            g = _g_from_spec(spec.get("g", self.metric.get("g")), n, domain, base)
            w = _omega_from_spec(spec.get("omega", self.metric.get("omega")), n, domain, base)
            return StationaryMetric(g, w, domain, dimension=n)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"spacetime: {exc}") from exc

    def base_node(self, domain):
        if self.base_point is None:
            return tuple(s // 2 for s in domain.shape)
        try:
            return domain.nearest_node(self.base_point)
        except ValueError as exc:
            raise ConfigError(f"base_point: {exc}") from exc


def scalar_function(spec, domain, candidate=None):
    """Scalar field from a small JSON description.

    ``{"id": "linear", "gradient": [...], "offset": c}``,
    ``{"id": "sine", "amplitude": A, "wavelength": L, "axis": i}`` or
    ``{"id": "candidate", "scale": s}`` (``s`` times the candidate function).
    """
    kind = spec.get("id")
    if kind == "linear":
        grad = np.asarray(spec["gradient"], dtype=float)
        return ScalarField.from_function(domain, lambda x: x @ grad + spec.get("offset", 0.0))
    if kind == "sine":
        k = 2 * np.pi / float(spec["wavelength"])
        axis = int(spec.get("axis", 0))
        return ScalarField.from_function(domain, lambda x: spec["amplitude"] * np.sin(k * x[..., axis]))
    if kind == "candidate":
        if candidate is None:
            raise ConfigError("function 'candidate' needs the distances stage")
        return candidate * float(spec.get("scale", 0.5))
    raise ConfigError(f"unknown function id {kind!r}")


def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _check_number(value, path, positive=True):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
        _fail(path, f"expected a number, got {value!r}")
    if positive and value <= 0:
        _fail(path, f"must be positive, got {value!r}")


def _check_vector(value, n, path):
    if not isinstance(value, list) or len(value) != n:
        _fail(path, f"expected a list of {n} numbers")
    for i, v in enumerate(value):
        _check_number(v, f"{path}[{i}]", positive=False)


def _validate_semantics(sc):
    d = sc.domain
    if not isinstance(d, dict):
        _fail("domain", "expected an object")
    for key in ("lower", "upper", "h"):
        if key not in d:
            _fail(f"domain.{key}", "missing")
    if not isinstance(d["lower"], list) or not 1 <= len(d["lower"]) <= 3:
        _fail("domain.lower", "expected a list of 1 to 3 numbers")
    n = len(d["lower"])
    _check_vector(d["lower"], n, "domain.lower")
    _check_vector(d["upper"], n, "domain.upper")
    _check_number(d["h"], "domain.h")
    for i, hole in enumerate(d.get("holes", [])):
        _check_vector(hole.get("center"), n, f"domain.holes[{i}].center")
        _check_number(hole.get("radius"), f"domain.holes[{i}].radius")
    for i, face in enumerate(d.get("open_ends", [])):
        if face not in face_labels(n):
            _fail(f"domain.open_ends[{i}]", f"unknown face {face!r}; expected one of {face_labels(n)}")
    if sc.base_point is not None:
        _check_vector(list(sc.base_point), n, "base_point")
    if sc.stencil is not None and sc.stencil not in STENCILS[n]:
        _fail("stencil", f"{sc.stencil} is not available in dimension {n}; choose from {STENCILS[n]}")
    if not isinstance(sc.metric, dict):
        _fail("metric", "expected an object")
    if not isinstance(sc.seed, int) or isinstance(sc.seed, bool):
        _fail("seed", "expected an integer")
    seen = set()
    for i, stage in enumerate(sc.pipeline):
        where = f"pipeline[{i}]"
        missing = [r for r in STAGE_REQUIRES[stage.name] if r not in seen]
        if stage.name == "completion" and not sc.lipschitz_mode and "mollify" not in seen:
            missing.append("mollify (or set lipschitz_mode)")
        if missing:
            _fail(where, f"stage {stage.name!r} must come after {', '.join(missing)}")
        p = stage.params
        for key in ("eps1", "eps2", "r0", "radius", "R", "dtau"):
            if key in p and p[key] is not None:
                _check_number(p[key], f"{where}.{key}")
        if "levels" in p and p["levels"] is not None:
            if not isinstance(p["levels"], list) or not p["levels"]:
                _fail(f"{where}.levels", "expected a nonempty list")
            for j, c in enumerate(p["levels"]):
                _check_number(c, f"{where}.levels[{j}]")
        if "alphas" in p:
            for j, pair in enumerate(p["alphas"]):
                if not isinstance(pair, list) or len(pair) != 2:
                    _fail(f"{where}.alphas[{j}]", "expected a pair")
                for k, a in enumerate(pair):
                    _check_number(a, f"{where}.alphas[{j}][{k}]")
        if stage.name == "geodesic":
            for key in ("x0", "v0"):
                if key not in p:
                    _fail(f"{where}.{key}", "missing")
                _check_vector(p[key], n, f"{where}.{key}")
            if "steps" in p and (not isinstance(p["steps"], int) or p["steps"] < 1):
                _fail(f"{where}.steps", "expected a positive integer")
        seen.add(stage.name)


def parse_scenario(doc, source=None):
    """Validate a decoded scenario document and return a :class:`Scenario`."""
    if not isinstance(doc, dict):
        _fail("<root>", "expected a JSON object")
    doc = {k: v for k, v in doc.items() if not k.startswith("_")}
    unknown = sorted(set(doc) - TOP_LEVEL)
    if unknown:
        _fail(unknown[0], f"unknown key; expected one of {sorted(TOP_LEVEL)}")
    for key in ("name", "metric", "domain", "pipeline"):
        if key not in doc:
            _fail(key, "missing")
    if not isinstance(doc["name"], str) or not doc["name"]:
        _fail("name", "expected a nonempty string")
    if not isinstance(doc["pipeline"], list) or not doc["pipeline"]:
        _fail("pipeline", "expected a nonempty list of stages")
    stages = []
    for i, entry in enumerate(doc["pipeline"]):
        where = f"pipeline[{i}]"
        if isinstance(entry, str):
            entry = {"stage": entry}
        if not isinstance(entry, dict) or "stage" not in entry:
            _fail(where, "expected a stage name or an object with a 'stage' key")
        name = entry["stage"]
        if name not in STAGE_PARAMS:
            _fail(f"{where}.stage", f"unknown stage {name!r}; expected one of {sorted(STAGE_PARAMS)}")
        params = {k: v for k, v in entry.items() if k != "stage" and not k.startswith("_")}
        extra = sorted(set(params) - STAGE_PARAMS[name])
        if extra:
            _fail(f"{where}.{extra[0]}", f"unknown parameter for stage {name!r}")
        stages.append(Stage(name, params))
    if len({s.name for s in stages}) != len(stages):
        _fail("pipeline", "each stage may appear at most once")
    base = doc.get("base_point")
    sc = Scenario(
        name=doc["name"],
        metric=doc["metric"],
        domain=doc["domain"],
        pipeline=tuple(stages),
        base_point=tuple(base) if base is not None else None,
        stencil=doc.get("stencil"),
        seed=doc.get("seed", 0),
        lipschitz_mode=bool(doc.get("lipschitz_mode", False)),
        spacetime=doc.get("spacetime"),
        verify=doc.get("verify", {}),
        description=doc.get("description", ""),
        source=Path(source) if source is not None else None,
    )
    _validate_semantics(sc)
    return sc


def load_scenario(path):
    """Read and validate a scenario file; errors carry line or field locations."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return parse_scenario(doc, path)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def bundled_dir():
    return Path(__file__).parent / "scenarios"


def bundled_scenarios():
    """Paths of the scenario files shipped with the package, sorted by name."""
    return sorted(bundled_dir().glob("*.json"))


def resolve(name_or_path):
    """A path, or the name of a bundled scenario."""
    p = Path(name_or_path)
    if p.exists():
        return p
    candidate = bundled_dir() / f"{name_or_path}.json"
    if candidate.exists():
        return candidate
    raise ConfigError(f"{name_or_path}: no such file or bundled scenario")
