"""Surface-electrode rf trap design toolkit with fiber light collection.

Core modules:

* layout     electrode geometry, JSON round trip, validation
* fields     gapless-plane basis potentials, fields, hessians
* trap       pseudopotential, rf null, secular modes, trap depth
* control    dc shim sets, stray-field compensation, micromotion
* photonics  fluorescence lineshape and fiber collection efficiency
* experiment scan protocols with deterministic photon-count sampling
* service    FastAPI wrapper exposing the operations over HTTP
* cli        command-line thin client of the service layer
"""

from .errors import (
    ConfigError,
    ConvergenceError,
    FibertrapError,
    FieldEvaluationError,
    InfeasibleError,
    LayoutParseError,
    LayoutValidationError,
    SaddleSearchError,
    SolverError,
    UnstableConfigurationError,
)
from .layout import (
    ElectrodeLayout,
    ElectrodePatch,
    Polygon,
    Role,
    build_ring_trap_layout,
    example_layout,
    parse_layout,
    serialize_layout,
    validate_layout,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "ElectrodeLayout",
    "ElectrodePatch",
    "FibertrapError",
    "FieldEvaluationError",
    "InfeasibleError",
    "LayoutParseError",
    "LayoutValidationError",
    "Polygon",
    "Role",
    "SaddleSearchError",
    "SolverError",
    "UnstableConfigurationError",
    "build_ring_trap_layout",
    "example_layout",
    "parse_layout",
    "serialize_layout",
    "validate_layout",
    "__version__",
]
