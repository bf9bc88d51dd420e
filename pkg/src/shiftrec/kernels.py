"""Sweep kernels for canonical shifting, compiled or pure numpy.

The compiled Cython kernel is used when the extension imported; otherwise
the numpy implementation below runs. Both visit subtensors in the same
order and agree to floating-point round-off. Call :func:`set_backend` (or
pass ``backend=`` to :func:`make_sweeper`) to force one of them.
"""

from __future__ import annotations

import logging

import numpy as np

try:
    from . import _csa_kernel
except ImportError:  # extension not built
    _csa_kernel = None

log = logging.getLogger(__name__)

HAVE_COMPILED = _csa_kernel is not None
_backend = "compiled" if HAVE_COMPILED else "python"

# Above this many entries per subtensor, the numpy path adds a second,
# residual-based pass to the mean.
COMPENSATE_ABOVE = 1024


def available_backends() -> list[str]:
    return ["compiled", "python"] if HAVE_COMPILED else ["python"]


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    """Select ``"compiled"`` or ``"python"`` for subsequent sweeps."""
    global _backend
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and not HAVE_COMPILED:
        raise RuntimeError("compiled kernel is not available in this installation")
    _backend = name


def _resolve(backend):
    backend = backend or _backend
    if backend == "compiled" and not HAVE_COMPILED:
        raise RuntimeError("compiled kernel is not available in this installation")
    if backend not in ("compiled", "python"):
        raise ValueError(f"unknown backend {backend!r}")
    return backend


class _Run:
    """Consecutive subtensors of one group; disjoint, so updated together."""

    __slots__ = ("entries", "local", "positions", "counts", "compensate")

    def __init__(self, entries, local, positions, counts):
        self.entries = entries  # None means "every entry"
        self.local = local
        self.positions = positions
        self.counts = counts
        self.compensate = bool(counts.size) and int(counts.max()) > COMPENSATE_ABOVE


def plan_runs(members: np.ndarray, offsets: np.ndarray, n_sub: int, order) -> list[_Run]:
    """Split a visit order into maximal runs of same-group subtensors.

    Subtensors without known entries are dropped; they never move.
    """
    counts = np.bincount(members.reshape(-1), minlength=n_sub)
    order = np.asarray(order, dtype=np.int64)
    order = order[counts[order] > 0]
    group = np.searchsorted(offsets, order, side="right") - 1
    breaks = np.flatnonzero(np.diff(group)) + 1
    runs = []
    for seg in np.split(np.arange(order.size), breaks):
        if seg.size == 0:
            continue
        pos = order[seg]
        col = members[:, int(group[seg[0]])]
        lut = np.full(n_sub, -1, dtype=np.int64)
        lut[pos] = np.arange(pos.size)
        local = lut[col]
        sel = local >= 0
        if sel.all():
            entries = None
        else:
            entries = np.flatnonzero(sel)
            local = np.ascontiguousarray(local[entries])
        runs.append(_Run(entries, local, pos, counts[pos].astype(np.float64)))
    return runs


class CompiledSweeper:
    backend = "compiled"

    def __init__(self, members, offsets, n_sub, order):
        self.runs = plan_runs(members, offsets, n_sub, order)
        width = max((r.positions.size for r in self.runs), default=0)
        self._sums = np.empty(width)
        self._comp = np.empty(width)
        self._all = np.empty(0, dtype=np.int64)

    def sweep(self, vals: np.ndarray, shifts: np.ndarray) -> float:
        v = 0.0
        for run in self.runs:
            v += _csa_kernel.center_run(
                vals, shifts,
                self._all if run.entries is None else run.entries,
                run.local, run.positions, run.counts, self._sums, self._comp,
            )
        return v


class PythonSweeper:
    backend = "python"

    def __init__(self, members, offsets, n_sub, order):
        self.runs = plan_runs(members, offsets, n_sub, order)

    def sweep(self, vals: np.ndarray, shifts: np.ndarray) -> float:
        v = 0.0
        for run in self.runs:
            cur = vals if run.entries is None else vals[run.entries]
            n = run.positions.size
            mean = np.bincount(run.local, weights=cur, minlength=n) / run.counts
            if run.compensate:
                mean += np.bincount(run.local, weights=cur - mean[run.local], minlength=n) / run.counts
            rho = -mean
            if run.entries is None:
                vals += rho[run.local]
            else:
                vals[run.entries] = cur + rho[run.local]
            shifts[run.positions] -= rho
            v += float(rho @ rho)
        return v


def make_sweeper(members: np.ndarray, offsets: np.ndarray, n_sub: int, order=None, backend=None):
    """Build a sweeper for the entry/subtensor incidence ``members``.

    ``members[e, g]`` is the catalog position of the group-``g`` subtensor
    holding entry ``e``. ``order`` is a permutation of catalog positions;
    ``None`` means catalog order.
    """
    backend = _resolve(backend)
    members = np.ascontiguousarray(members, dtype=np.int64)
    if order is None:
        order = np.arange(n_sub, dtype=np.int64)
    cls = CompiledSweeper if backend == "compiled" else PythonSweeper
    return cls(members, np.asarray(offsets, dtype=np.int64), n_sub, order)


def sum_member_shifts(shifts: np.ndarray, members: np.ndarray, backend=None) -> np.ndarray:
    """``out[e] = sum_g shifts[members[e, g]]``."""
    if _resolve(backend) == "compiled":
        return _csa_kernel.scatter_sums(
            np.ascontiguousarray(shifts, dtype=np.float64),
            np.ascontiguousarray(members, dtype=np.int64),
        )
    return shifts[members].sum(axis=1)
