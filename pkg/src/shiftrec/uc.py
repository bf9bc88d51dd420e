"""Unit-consistent completion realised as log-domain shift-consistent completion.

Scaling a subtensor by a positive constant becomes a shift after taking
logs, so ``ucca(t) = exp(scca(log t))`` inherits consistency under positive
rescaling of any subtensor. Reports label this method "UC (log-bridge)".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .canonical import ConvergenceConfig, ShiftVector
from .completion import CompletionResult, expand_shifts, scca
from .errors import DomainError
from .tensor import SparseTensor

__all__ = ["UCCompletionResult", "ucca", "check_positive", "UC_LABEL"]

UC_LABEL = "UC (log-bridge)"


def check_positive(t: SparseTensor) -> None:
    if t.nnz and not np.all(t.values > 0):
        bad = np.flatnonzero(~(t.values > 0))[0]
        coord = tuple(int(i) + 1 for i in t.index_array[bad])
        raise DomainError(
            f"UC completion needs strictly positive known entries; {coord} = {float(t.values[bad])!r}"
        )


@dataclass(frozen=True)
class UCCompletionResult(CompletionResult):
    """Completion in the multiplicative domain.

    ``shifts`` are the log-domain coefficients; imputations are
    ``exp(sum of coefficients)`` and known entries pass through unchanged.
    """

    log_result: CompletionResult | None = None

    def dense(self) -> np.ndarray:
        out = np.exp(expand_shifts(self.shifts)).reshape(-1)
        out[self.source.linear_index] = self.source.values
        return out.reshape(self.shape)

    def imputation_at(self, idx0) -> np.ndarray:
        return np.exp(self.shifts.sums_at(np.asarray(idx0, dtype=np.int64)))


def ucca(
    t: SparseTensor,
    k: int,
    cfg: ConvergenceConfig | None = None,
    **kwargs,
) -> UCCompletionResult:
    """Scale-consistent completion of a strictly positive tensor.

    Raises
    ------
    DomainError
        If any known value is not strictly positive.
    """
    check_positive(t)
    logged = t.with_values(np.log(t.values))
    res = scca(logged, k, cfg, **kwargs)
    return UCCompletionResult(
        source=t, shifts=res.shifts, diagnostics=res.diagnostics, log_result=res
    )
