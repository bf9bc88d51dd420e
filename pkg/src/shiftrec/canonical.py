"""Canonical shifting: center every k-dimensional subtensor on its known entries.

Shift coefficients follow the subtract convention::

    canonical(alpha) = t(alpha) - sum_{i : alpha in A_i} S[i]

so :func:`csa` records ``S[i] -= rho_i`` for every mean correction
``rho_i`` it applies, and the completion step can impute with ``+sum S``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import kernels
from .errors import ConformanceError, ConvergenceError, InvalidOrderError
from .tensor import SparseTensor, SubtensorCatalog, catalog

log = logging.getLogger(__name__)

__all__ = [
    "ShiftVector",
    "ConvergenceConfig",
    "CanonicalResult",
    "apply_shift",
    "csa",
    "residual",
    "null_shift_deviation",
    "default_order",
    "DEFAULT_EPSILON",
    "DEFAULT_MAX_SWEEPS",
]

DEFAULT_EPSILON = 1e-18
DEFAULT_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class ShiftVector:
    """One real coefficient per subtensor of ``catalog(shape, k)``."""

    shape: tuple[int, ...]
    k: int
    coefficients: np.ndarray

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=np.float64).reshape(-1)
        n = len(self.catalog)
        if coef.shape[0] != n:
            raise ConformanceError(
                f"shift vector has {coef.shape[0]} coefficients, catalog has {n}"
            )
        coef.setflags(write=False)
        object.__setattr__(self, "shape", tuple(self.shape))
        object.__setattr__(self, "coefficients", coef)

    @property
    def catalog(self) -> SubtensorCatalog:
        return catalog(self.shape, self.k)

    def __len__(self) -> int:
        return self.coefficients.shape[0]

    @classmethod
    def zeros(cls, shape, k: int) -> "ShiftVector":
        return cls(tuple(shape), k, np.zeros(len(catalog(shape, k))))

    @classmethod
    def random(cls, shape, k: int, rng, scale: float = 1.0) -> "ShiftVector":
        rng = np.random.default_rng(rng)
        n = len(catalog(shape, k))
        return cls(tuple(shape), k, rng.normal(scale=scale, size=n))

    def __add__(self, other: "ShiftVector") -> "ShiftVector":
        self._check_same(other)
        return ShiftVector(self.shape, self.k, self.coefficients + other.coefficients)

    def __sub__(self, other: "ShiftVector") -> "ShiftVector":
        self._check_same(other)
        return ShiftVector(self.shape, self.k, self.coefficients - other.coefficients)

    def __neg__(self) -> "ShiftVector":
        return ShiftVector(self.shape, self.k, -self.coefficients)

    def _check_same(self, other):
        if (self.shape, self.k) != (other.shape, other.k):
            raise ConformanceError("shift vectors belong to different catalogs")

    def sums_at(self, idx0: np.ndarray, backend=None) -> np.ndarray:
        """``sum_{i : alpha in A_i} S[i]`` for each 0-based coordinate row."""
        members = self.catalog.member_positions(idx0)
        return kernels.sum_member_shifts(self.coefficients, members, backend=backend)


@dataclass(frozen=True)
class ConvergenceConfig:
    """Per-sweep squared-correction threshold and sweep cap."""

    epsilon: float = DEFAULT_EPSILON
    max_sweeps: int = DEFAULT_MAX_SWEEPS

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if int(self.max_sweeps) < 1:
            raise ValueError(f"max_sweeps must be >= 1, got {self.max_sweeps}")


@dataclass(frozen=True)
class CanonicalResult:
    canonical: SparseTensor
    shifts: ShiftVector
    sweeps_used: int
    final_sweep_variance: float
    seconds: float = field(default=0.0, compare=False)
    backend: str = field(default="", compare=False)


def apply_shift(
    t: SparseTensor,
    s: ShiftVector,
    direction: Literal["forward", "inverse"] = "forward",
) -> SparseTensor:
    """Shift the known entries of ``t`` by ``s``.

    ``forward`` subtracts the coefficients of every subtensor containing each
    known entry; ``inverse`` adds them back.
    """
    if s.shape != t.shape:
        raise ConformanceError(f"shift vector is for shape {s.shape}, tensor has {t.shape}")
    if direction not in ("forward", "inverse"):
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    total = s.sums_at(t.index_array)
    if direction == "forward":
        return t.with_values(t.values - total)
    return t.with_values(t.values + total)


def default_order(cat: SubtensorCatalog) -> np.ndarray:
    """Default visit order: groups sorted by their fixed dimensions, anchors row-major.

    This is the catalog's group order reversed, so for a matrix the rows are
    centered before the columns.
    """
    return np.concatenate(
        [np.arange(g.offset, g.offset + g.size, dtype=np.int64) for g in reversed(cat.groups)]
    )


def _validate_order(order, n_sub: int) -> np.ndarray:
    order = np.asarray(order, dtype=np.int64).reshape(-1)
    if order.shape[0] != n_sub or not np.array_equal(np.sort(order), np.arange(n_sub)):
        raise ValueError("order must be a permutation of catalog positions")
    return order


def csa(
    t: SparseTensor,
    k: int,
    cfg: ConvergenceConfig | None = None,
    *,
    order=None,
    backend: str | None = None,
) -> CanonicalResult:
    """Canonical Shifting Algorithm.

    Repeated Gauss-Seidel sweeps over the subtensor catalog. Each visit to a
    subtensor with known entries subtracts their current mean. A sweep's
    variance is the sum of squared corrections applied during it; iteration
    stops after the first sweep whose variance is below ``cfg.epsilon``.

    Parameters
    ----------
    t : SparseTensor
    k : int
        Subtensor order, ``1 <= k < t.ndim``.
    cfg : ConvergenceConfig, optional
    order : array_like of int, optional
        Permutation of catalog positions giving the visit order within a
        sweep. Default is :func:`default_order`.
    backend : {"compiled", "python"}, optional
        Sweep kernel; defaults to :func:`shiftrec.kernels.get_backend`.

    Raises
    ------
    InvalidOrderError
        If ``k`` is out of range.
    ConvergenceError
        If ``cfg.max_sweeps`` sweeps pass without reaching ``cfg.epsilon``.
    """
    cfg = cfg or ConvergenceConfig()
    if not (1 <= k < t.ndim):
        raise InvalidOrderError(f"subtensor order k={k} invalid for d={t.ndim}; need 1 <= k < d")
    cat = catalog(t.shape, k)
    n_sub = len(cat)
    order = default_order(cat) if order is None else _validate_order(order, n_sub)
    members = cat.member_positions(t.index_array)
    sweeper = kernels.make_sweeper(members, cat._offsets, n_sub, order, backend=backend)

    vals = np.array(t.values, dtype=np.float64)
    shifts = np.zeros(n_sub, dtype=np.float64)
    t0 = time.perf_counter()
    v = 0.0
    sweeps = 0
    if t.nnz:
        while True:
            v = sweeper.sweep(vals, shifts)
            sweeps += 1
            if v < cfg.epsilon:
                break
            if sweeps >= cfg.max_sweeps:
                raise ConvergenceError(sweeps, v, cfg.epsilon)
    else:
        sweeps = 1
    elapsed = time.perf_counter() - t0
    log.debug("csa k=%d nnz=%d sweeps=%d v=%.3e %.3fs (%s)",
              k, t.nnz, sweeps, v, elapsed, sweeper.backend)
    return CanonicalResult(
        canonical=t.with_values(vals),
        shifts=ShiftVector(t.shape, k, shifts),
        sweeps_used=sweeps,
        final_sweep_variance=float(v),
        seconds=elapsed,
        backend=sweeper.backend,
    )


def _subtensor_sums(t: SparseTensor, k: int):
    cat = catalog(t.shape, k)
    members = cat.member_positions(t.index_array).reshape(-1)
    vals = np.repeat(t.values, cat.n_groups)
    sums = np.bincount(members, weights=vals, minlength=len(cat))
    counts = np.bincount(members, minlength=len(cat))
    return sums, counts


def residual(t: SparseTensor, k: int) -> float:
    """Largest ``|sum of known entries| / count`` over non-empty subtensors.

    Zero exactly when ``t`` is in canonical form for order ``k``.
    """
    if not (1 <= k < t.ndim):
        raise InvalidOrderError(f"subtensor order k={k} invalid for d={t.ndim}; need 1 <= k < d")
    if t.nnz == 0:
        return 0.0
    sums, counts = _subtensor_sums(t, k)
    nz = counts > 0
    return float(np.max(np.abs(sums[nz]) / counts[nz]))


def null_shift_deviation(t: SparseTensor, a: ShiftVector, b: ShiftVector) -> float:
    """Largest ``|sum_{i : alpha in A_i} (b - a)[i]|`` over known ``alpha``.

    Near zero when ``b - a`` is a null shift for ``t``'s known set.
    """
    if t.nnz == 0:
        return 0.0
    return float(np.max(np.abs((b - a).sums_at(t.index_array))))
