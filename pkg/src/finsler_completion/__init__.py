"""Forward/backward distances of Finsler metrics on grids, and completing them by ``F + df``."""

from .completion import (
    CompletionCertificate,
    FinslerCompletion,
    candidate_f,
    completed_metric,
    completeness_certificate,
    lipschitz_check,
    obstruction_check,
)
from .distance import (
    DistanceField,
    StencilGraph,
    backward_distance,
    build_graph,
    forward_distance,
    properness_indicator,
    scaled_properness_agreement,
    shortest_path,
)
from .exceptions import (
    AdmissibilityError,
    ConfigError,
    DataError,
    DomainError,
    FinslerError,
    GraphConstructionError,
    ResolutionError,
)
from .grid import GridDomain, ScalarField, direction_fan, stencil_offsets
from .metric import (
    CustomMetric,
    ProjectiveChange,
    RandersMetric,
    admissibility_margin,
    apply_projective_change,
    check_positive_homogeneous,
    eval_metric,
    load_metric,
)
from .mollifier import LipschitzMollifier, bump_kernel, choose_radius, mollify
from .spacetime import (
    StationaryMetric,
    assemble_lorentz,
    fermat_projection_check,
    integrate_null_geodesic,
    randers_from_stationary,
    shift_slice,
    slice_change_roundtrip,
    spacelike_slice_check,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError",
    "CompletionCertificate",
    "ConfigError",
    "CustomMetric",
    "DataError",
    "DistanceField",
    "DomainError",
    "FinslerCompletion",
    "FinslerError",
    "GraphConstructionError",
    "GridDomain",
    "LipschitzMollifier",
    "ProjectiveChange",
    "RandersMetric",
    "ResolutionError",
    "ScalarField",
    "StationaryMetric",
    "StencilGraph",
    "admissibility_margin",
    "apply_projective_change",
    "assemble_lorentz",
    "backward_distance",
    "build_graph",
    "bump_kernel",
    "candidate_f",
    "check_positive_homogeneous",
    "choose_radius",
    "completed_metric",
    "completeness_certificate",
    "direction_fan",
    "eval_metric",
    "fermat_projection_check",
    "forward_distance",
    "integrate_null_geodesic",
    "lipschitz_check",
    "load_metric",
    "mollify",
    "obstruction_check",
    "properness_indicator",
    "randers_from_stationary",
    "scaled_properness_agreement",
    "shift_slice",
    "shortest_path",
    "slice_change_roundtrip",
    "spacelike_slice_check",
    "stencil_offsets",
]
