"""Shift-consistent completion of sparse tensors for recommender systems."""

from .canonical import (
    CanonicalResult,
    ConvergenceConfig,
    ShiftVector,
    apply_shift,
    csa,
    residual,
)
from .completion import (
    CompletionResult,
    SupportReport,
    check_support,
    mca,
    scca,
    verify_shift_consistency,
    verify_uniqueness,
)
from .errors import (
    ConformanceError,
    ConvergenceError,
    CoordinateError,
    DomainError,
    InvalidOrderError,
    ParseError,
    PatternError,
    ShiftrecError,
)
from .kernels import get_backend, set_backend
from .tensor import (
    SparseTensor,
    SubtensorCatalog,
    SubtensorId,
    catalog,
    known_coords_of,
    read_coo,
    subtensors_containing,
    write_coo,
)

__version__ = "0.1.0"
