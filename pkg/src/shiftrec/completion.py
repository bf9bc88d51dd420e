"""Shift-consistent completion, full-support certification and audits.

:func:`scca` runs canonical shifting and imputes each unknown entry as the
sum of the shift coefficients of the subtensors that contain it. Known
entries pass through untouched.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse

from .canonical import (
    CanonicalResult,
    default_order,
    ConvergenceConfig,
    ShiftVector,
    apply_shift,
    csa,
    null_shift_deviation,
)
from .errors import CoordinateError, InvalidOrderError
from .tensor import SparseTensor, catalog

log = logging.getLogger(__name__)

__all__ = [
    "CompletionResult",
    "SupportCertificate",
    "SupportReport",
    "UniquenessReport",
    "scca",
    "mca",
    "expand_shifts",
    "check_support",
    "verify_shift_consistency",
    "verify_uniqueness",
    "random_orders",
    "DEFAULT_SUPPORT_BUDGET",
]

DEFAULT_SUPPORT_BUDGET = 10_000


def expand_shifts(s: ShiftVector) -> np.ndarray:
    """Dense tensor whose entry at ``alpha`` is ``sum_{i : alpha in A_i} S[i]``."""
    cat = s.catalog
    d = len(s.shape)
    out = np.zeros(s.shape, dtype=np.float64)
    for g in cat.groups:
        block = s.coefficients[g.offset:g.offset + g.size].reshape(g.extents)
        view = [1] * d
        for j, n in zip(g.comp, g.extents):
            view[j] = n
        out += block.reshape(view)
    return out


@dataclass(frozen=True)
class CompletionResult:
    """A completed tensor, kept implicitly as source values plus shift coefficients.

    ``completed`` materialises the full grid as a :class:`SparseTensor`;
    :meth:`dense` and :meth:`predict` avoid that for large grids.
    """

    source: SparseTensor
    shifts: ShiftVector
    diagnostics: CanonicalResult

    @property
    def k(self) -> int:
        return self.shifts.k

    @property
    def shape(self) -> tuple[int, ...]:
        return self.source.shape

    @property
    def imputed_mask(self) -> np.ndarray:
        """Dense boolean mask of the originally unknown entries."""
        return ~self.source.known_mask()

    @property
    def sweeps(self) -> int:
        return self.diagnostics.sweeps_used

    def dense(self) -> np.ndarray:
        out = expand_shifts(self.shifts).reshape(-1)
        out[self.source.linear_index] = self.source.values
        return out.reshape(self.shape)

    @cached_property
    def completed(self) -> SparseTensor:
        full = self.dense()
        idx = np.indices(self.shape).reshape(len(self.shape), -1).T
        return SparseTensor(self.shape, idx, full.reshape(-1), one_based=False)

    def imputation_at(self, idx0) -> np.ndarray:
        """Shift-sum imputation at 0-based coordinates, ignoring known values."""
        return self.shifts.sums_at(np.asarray(idx0, dtype=np.int64))

    def predict(self, coords, *, one_based: bool = True) -> np.ndarray:
        """Completed values at the given coordinates (known entries pass through)."""
        idx = np.asarray(coords, dtype=np.int64).reshape(-1, len(self.shape))
        if one_based:
            idx = idx - 1
        ext = np.asarray(self.shape)
        if np.any((idx < 0) | (idx >= ext)):
            raise CoordinateError("coordinate out of bounds")
        out = self.imputation_at(idx)
        lin = np.ravel_multi_index(idx.T, self.shape)
        pos = np.searchsorted(self.source.linear_index, lin)
        pos = np.minimum(pos, max(self.source.nnz - 1, 0))
        if self.source.nnz:
            hit = self.source.linear_index[pos] == lin
            out[hit] = self.source.values[pos[hit]]
        return out

    def __getitem__(self, alpha) -> float:
        return float(self.predict([alpha])[0])

    @cached_property
    def support(self) -> "SupportReport":
        return check_support(self.source, certificates=False)


def scca(
    t: SparseTensor,
    k: int,
    cfg: ConvergenceConfig | None = None,
    *,
    order=None,
    backend: str | None = None,
) -> CompletionResult:
    """Shift-consistent completion of ``t`` with order-``k`` subtensors."""
    res = csa(t, k, cfg, order=order, backend=backend)
    return CompletionResult(source=t, shifts=res.shifts, diagnostics=res)


def mca(t: SparseTensor, cfg: ConvergenceConfig | None = None, **kwargs) -> CompletionResult:
    """Matrix completion: :func:`scca` with ``k = 1`` on a 2-d tensor."""
    if t.ndim != 2:
        raise InvalidOrderError(f"mca requires a matrix, got d={t.ndim}")
    return scca(t, 1, cfg, **kwargs)


# ---------------------------------------------------------------------------
# Full support
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SupportCertificate:
    """Witness that unknown ``alpha`` is the free corner of a known hypercube."""

    alpha: tuple[int, ...]
    s: tuple[int, ...]
    corners: tuple[tuple[int, ...], ...]


@dataclass
class SupportReport:
    fully_supported: bool
    certificates: dict = field(default_factory=dict)
    unsupported: list = field(default_factory=list)
    inconclusive: list = field(default_factory=list)
    n_unknown: int = 0

    @property
    def n_supported(self) -> int:
        return self.n_unknown - len(self.unsupported) - len(self.inconclusive)

    def summary(self) -> dict:
        return {
            "fully_supported": self.fully_supported,
            "n_unknown": self.n_unknown,
            "n_supported": self.n_supported,
            "n_unsupported": len(self.unsupported),
            "n_inconclusive": len(self.inconclusive),
        }


def _deltas(d: int) -> np.ndarray:
    return np.array([p for p in itertools.product((0, 1), repeat=d) if any(p)], dtype=np.int64)


def _axis_values(lo: int, hi: int, m: int) -> list[int]:
    # nonzero offsets in [lo, hi] with |v| <= m, ordered by (|v|, negative last)
    vals = []
    for a in range(1, m + 1):
        if a <= hi:
            vals.append(a)
        if -a >= lo:
            vals.append(-a)
    return vals


def _find_certificate(alpha0, shape, mask, deltas, budget):
    """Search offsets by increasing max-norm.

    Returns ``(s, exhausted)``; ``s`` is None when nothing was found and
    ``exhausted`` tells whether the whole offset space was searched.
    """
    d = len(shape)
    lo = [-a for a in alpha0]
    hi = [n - 1 - a for a, n in zip(alpha0, shape)]
    reach = max(max(-l, h) for l, h in zip(lo, hi))
    if any(h == 0 and l == 0 for l, h in zip(lo, hi)):
        return None, True
    checked = 0
    base = np.asarray(alpha0, dtype=np.int64)
    for m in range(1, reach + 1):
        axes = [_axis_values(l, h, m) for l, h in zip(lo, hi)]
        if any(not ax for ax in axes):
            continue
        cand = np.array(list(itertools.product(*axes)), dtype=np.int64)
        cand = cand[np.abs(cand).max(axis=1) == m]
        if cand.size == 0:
            continue
        truncated = budget is not None and checked + cand.shape[0] > budget
        if truncated:
            cand = cand[: budget - checked]
        corners = base + deltas[None, :, :] * cand[:, None, :]
        ok = mask[tuple(corners[..., j] for j in range(d))].all(axis=1)
        hit = np.flatnonzero(ok)
        if hit.size:
            return tuple(int(x) for x in cand[hit[0]]), True
        checked += cand.shape[0]
        if truncated:
            return None, False
    return None, True


def _matrix_supported(t: SparseTensor) -> np.ndarray:
    """Dense boolean: unknown (i, j) has a known rectangle (i, q), (p, j), (p, q)."""
    m, n = t.shape
    idx = t.index_array
    M = sparse.csr_matrix(
        (np.ones(t.nnz, dtype=np.float32), (idx[:, 0], idx[:, 1])), shape=(m, n)
    )
    out = np.zeros((m, n), dtype=bool)
    MT = M.T.tocsr()
    chunk = max(1, min(m, 4_000_000 // max(m, 1)))
    for r0 in range(0, m, chunk):
        rows = M[r0:r0 + chunk]
        share = (rows @ MT)  # rows sharing a known column
        share.data[:] = 1.0
        reach = share @ M
        dense = reach.toarray() > 0
        out[r0:r0 + chunk] = dense
    out[idx[:, 0], idx[:, 1]] = False
    return out


def check_support(
    t: SparseTensor,
    *,
    budget: int | None = DEFAULT_SUPPORT_BUDGET,
    certificates: bool = True,
) -> SupportReport:
    """Certify full support: every unknown entry completes a known hypercube.

    Offsets ``s`` must have every component nonzero. For matrices the
    classification is exact (a sparse product); for ``d != 2`` each unknown
    is searched by increasing max-norm of ``s`` up to ``budget`` candidates,
    and unknowns whose search hits the budget are reported as inconclusive.
    With ``certificates=True`` a certificate holding the first offset in
    search order is recorded for every supported unknown.
    """
    unknown = t.unknown_index_array()
    report = SupportReport(fully_supported=True, n_unknown=int(unknown.shape[0]))
    if unknown.shape[0] == 0:
        return report
    mask = t.known_mask()
    deltas = _deltas(t.ndim)

    exact = None
    if t.ndim == 2:
        exact = _matrix_supported(t)

    for row in unknown:
        alpha0 = tuple(int(x) for x in row)
        alpha = tuple(a + 1 for a in alpha0)
        if exact is not None:
            if not exact[alpha0]:
                report.unsupported.append(alpha)
                continue
            if not certificates:
                continue
            s, _ = _find_certificate(alpha0, t.shape, mask, deltas, None)
        else:
            s, exhausted = _find_certificate(alpha0, t.shape, mask, deltas, budget)
            if s is None:
                if not exhausted:
                    report.inconclusive.append(alpha)
                else:
                    report.unsupported.append(alpha)
                continue
            if not certificates:
                continue
        sv = np.asarray(s)
        corners = tuple(
            tuple(int(x) + 1 for x in np.asarray(alpha0) + dl * sv) for dl in deltas
        )
        report.certificates[alpha] = SupportCertificate(alpha, s, corners)
    report.fully_supported = not report.unsupported and not report.inconclusive
    return report


# ---------------------------------------------------------------------------
# Audits
# ---------------------------------------------------------------------------


def verify_shift_consistency(
    t: SparseTensor,
    k: int,
    trials: int = 10,
    seed=0,
    cfg: ConvergenceConfig | None = None,
    *,
    shifts: list[ShiftVector] | None = None,
    scale: float = 1.0,
) -> float:
    """Max ``|T (-) scca(t) - scca(T (-) t)|`` over the grid and over trials.

    Random shift vectors are drawn from ``seed`` unless ``shifts`` is given.
    """
    base = scca(t, k, cfg).dense()
    if shifts is None:
        rng = np.random.default_rng(seed)
        shifts = [ShiftVector.random(t.shape, k, rng, scale=scale) for _ in range(trials)]
    worst = 0.0
    for T in shifts:
        lhs = base - expand_shifts(T)
        rhs = scca(apply_shift(t, T, "forward"), k, cfg).dense()
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def random_orders(shape, k: int, n: int, seed=0) -> list[np.ndarray]:
    """Default order, plain catalog order, then ``n - 2`` random permutations."""
    cat = catalog(shape, k)
    size = len(cat)
    rng = np.random.default_rng(seed)
    orders = [default_order(cat), np.arange(size)]
    while len(orders) < n:
        orders.append(rng.permutation(size))
    return orders[:n]


@dataclass(frozen=True)
class UniquenessReport:
    max_deviation: float
    null_shift_deviation: float
    guaranteed: bool
    n_orders: int
    support: SupportReport | None = None


def verify_uniqueness(
    t: SparseTensor,
    k: int,
    orders=None,
    cfg: ConvergenceConfig | None = None,
    *,
    support: SupportReport | None = None,
) -> UniquenessReport:
    """Complete ``t`` under several sweep orders and compare.

    ``max_deviation`` is the largest pairwise difference of completed values;
    ``null_shift_deviation`` the largest ``|sum T|`` over known entries for
    ``T`` the difference of two runs' shift vectors. ``guaranteed`` is False
    when full support does not hold, in which case agreement is not implied.
    """
    if orders is None:
        orders = random_orders(t.shape, k, 3)
    if support is None:
        support = check_support(t, certificates=False)
    runs = [scca(t, k, cfg, order=o) for o in orders]
    dense = [r.dense() for r in runs]
    dev = 0.0
    null = 0.0
    for a, b in itertools.combinations(range(len(runs)), 2):
        dev = max(dev, float(np.max(np.abs(dense[a] - dense[b]))))
        null = max(null, null_shift_deviation(t, runs[a].shifts, runs[b].shifts))
    if not support.fully_supported:
        log.warning("uniqueness not guaranteed: %d unknown entries lack support",
                    len(support.unsupported) + len(support.inconclusive))
    return UniquenessReport(
        max_deviation=dev,
        null_shift_deviation=null,
        guaranteed=support.fully_supported,
        n_orders=len(runs),
        support=support,
    )
