"""Recommender layer: predictions, top-N lists, consensus ordering and fairness.

Recommendations use subtensors of order ``d - 1``. For a ratings matrix
that means one coefficient per user and one per item.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .canonical import ConvergenceConfig
from .completion import CompletionResult, scca
from .errors import CoordinateError, PatternError
from .tensor import SparseTensor
from .uc import ucca

log = logging.getLogger(__name__)

__all__ = [
    "Recommender",
    "TopN",
    "ConsensusPattern",
    "ConsensusCheck",
    "FairnessReport",
    "recommend",
    "top_n",
    "top_n_all",
    "verify_consensus",
    "fairness_probe",
    "pick_probe_user",
    "METHODS",
]

METHODS = ("sc", "uc")


def _complete(t: SparseTensor, method: str, cfg, **kwargs) -> CompletionResult:
    method = method.lower()
    if method == "sc":
        return scca(t, t.ndim - 1, cfg, **kwargs)
    if method == "uc":
        return ucca(t, t.ndim - 1, cfg, **kwargs)
    raise ValueError(f"method must be one of {METHODS}, got {method!r}")


@dataclass(frozen=True)
class Recommender:
    source: SparseTensor
    completed: CompletionResult
    method: str = "sc"

    @classmethod
    def fit(cls, t: SparseTensor, method: str = "sc", cfg: ConvergenceConfig | None = None,
            **kwargs) -> "Recommender":
        """Complete ``t`` with order ``d - 1`` subtensors by SC or UC."""
        if t.ndim < 2:
            raise CoordinateError("a recommender needs at least a 2-d tensor")
        return cls(t, _complete(t, method, cfg, **kwargs), method.lower())

    @property
    def shape(self):
        return self.source.shape

    def predict(self, coords) -> np.ndarray:
        return self.completed.predict(coords)

    def dense(self) -> np.ndarray:
        return self.completed.dense()


def recommend(r: Recommender, alpha) -> float:
    """Completed value at ``alpha``: the rating if known, the imputation otherwise."""
    alpha = r.source.check_coord(alpha)
    return float(r.completed.predict([alpha])[0])


@dataclass(frozen=True)
class TopN:
    user: int
    items: tuple[int, ...]

    def __len__(self):
        return len(self.items)


def _ranked_unrated(pred: np.ndarray, known: np.ndarray) -> np.ndarray:
    """Per-row item order: unrated items by descending prediction, ties by item id."""
    key = np.where(known, np.inf, -pred)
    return np.argsort(key, axis=-1, kind="stable")


def top_n(r: Recommender, user: int, N: int) -> TopN:
    """The ``N`` best unrated items for ``user`` (1-based), best first."""
    if r.source.ndim != 2:
        raise CoordinateError("top_n needs a users x items matrix")
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    m, n = r.shape
    if not (1 <= user <= m):
        raise CoordinateError(f"user {user} out of range 1..{m}")
    items = np.arange(n)
    coords = np.stack([np.full(n, user - 1), items], axis=1)
    pred = r.completed.predict(coords, one_based=False)
    known = r.source.known_mask()[user - 1]
    order = _ranked_unrated(pred, known)
    n_unrated = int((~known).sum())
    return TopN(user, tuple(int(i) + 1 for i in order[: min(N, n_unrated)]))


def top_n_all(dense_pred: np.ndarray, known: np.ndarray, N: int) -> list[tuple[int, ...]]:
    """Top-N item tuples (1-based) for every row of a dense prediction matrix."""
    order = _ranked_unrated(dense_pred, known)
    n_unrated = (~known).sum(axis=1)
    return [tuple((order[u, : min(N, n_unrated[u])] + 1).tolist()) for u in range(order.shape[0])]


# ---------------------------------------------------------------------------
# Consensus ordering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConsensusPattern:
    """Slices ``gamma`` along ``axis`` that share one known set and are strictly ordered on it.

    ``sigma`` and ``sigma_bar`` are 0-based coordinate arrays over the
    remaining ``d - 1`` dimensions.
    """

    gamma: tuple[int, ...]
    axis: int
    sigma: np.ndarray
    sigma_bar: np.ndarray

    @classmethod
    def from_tensor(cls, t: SparseTensor, gamma: Sequence[int], axis: int | None = None
                    ) -> "ConsensusPattern":
        """Validate ``gamma`` (1-based slice indices) against ``t``.

        Raises
        ------
        PatternError
            Unequal known sets, ties or reversals on the common known set,
            an empty common known set, or repeated/out-of-range indices.
        """
        d = t.ndim
        axis = d if axis is None else int(axis)
        if not (1 <= axis <= d):
            raise PatternError(f"axis {axis} out of range for d={d}")
        gamma = tuple(int(g) for g in gamma)
        n_ax = t.shape[axis - 1]
        if len(gamma) < 2:
            raise PatternError("a consensus pattern needs at least two slices")
        if len(set(gamma)) != len(gamma) or any(not (1 <= g <= n_ax) for g in gamma):
            raise PatternError(f"gamma {gamma} must be distinct indices in 1..{n_ax}")
        dense = np.moveaxis(t.to_dense(), axis - 1, 0)
        known = np.moveaxis(t.known_mask(), axis - 1, 0)
        first = known[gamma[0] - 1]
        for g in gamma[1:]:
            if not np.array_equal(known[g - 1], first):
                raise PatternError(f"slices {gamma[0]} and {g} have different known sets")
        if not first.any():
            raise PatternError("common known set is empty")
        vals = dense[[g - 1 for g in gamma]][:, first]
        if not np.all(np.diff(vals, axis=0) > 0):
            raise PatternError("slices are not strictly increasing in gamma order on the common known set")
        return cls(gamma, axis, np.argwhere(first), np.argwhere(~first))

    @property
    def D(self) -> int:
        return len(self.gamma)


@dataclass
class ConsensusCheck:
    ok: bool
    n_checked: int
    violations: list = field(default_factory=list)


def verify_consensus(r: Recommender, pat: ConsensusPattern) -> ConsensusCheck:
    """Check that completed values keep the ``gamma`` order on the common unknown set.

    Violations are ``(alpha, gamma_a, gamma_b, value_a, value_b)`` with 1-based
    ``alpha`` over the non-``axis`` dimensions.

    Raises
    ------
    PatternError
        If the pattern does not hold on ``r.source`` or the completion did
        not use order ``d - 1`` (a precondition failure, not a violation).
    """
    d = r.source.ndim
    if r.completed.k != d - 1:
        raise PatternError(f"consensus ordering needs k = d - 1 = {d - 1}, got k = {r.completed.k}")
    ConsensusPattern.from_tensor(r.source, pat.gamma, pat.axis)
    dense = np.moveaxis(r.dense(), pat.axis - 1, 0)
    sel = tuple(pat.sigma_bar.T)
    vals = np.stack([dense[g - 1][sel] for g in pat.gamma])  # (D, |sigma_bar|)
    violations = []
    bad = np.argwhere(np.diff(vals, axis=0) <= 0)
    for a, col in bad:
        alpha = tuple(int(x) + 1 for x in pat.sigma_bar[col])
        violations.append((alpha, pat.gamma[a], pat.gamma[a + 1],
                           float(vals[a, col]), float(vals[a + 1, col])))
    return ConsensusCheck(not violations, int(pat.sigma_bar.shape[0]), violations)


# ---------------------------------------------------------------------------
# Fairness probe
# ---------------------------------------------------------------------------


@dataclass
class FairnessReport:
    shifted_user: int
    method: str
    delta: float
    factor: float | None
    changed: dict  # N -> number of other users whose top-N changed
    max_other_deviation: float
    shifted_user_deviation: float

    @property
    def ok(self) -> bool:
        return all(c == 0 for c in self.changed.values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "changed_user_count"])
        for n in sorted(self.changed):
            w.writerow([n, self.changed[n]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "shifted_user": self.shifted_user,
            "method": self.method,
            "delta": self.delta,
            "factor": self.factor,
            "changed": {str(k): v for k, v in sorted(self.changed.items())},
            "max_other_deviation": self.max_other_deviation,
            "shifted_user_deviation": self.shifted_user_deviation,
        }


def pick_probe_user(t: SparseTensor, scale_max: float, gap: float = 1.0) -> int:
    """First user (1-based) whose highest rating is exactly ``scale_max - gap``."""
    m = t.shape[0]
    best = np.full(m, -np.inf)
    np.maximum.at(best, t.index_array[:, 0], t.values)
    hit = np.flatnonzero(best == scale_max - gap)
    if hit.size == 0:
        raise ValueError(f"no user has maximum rating {scale_max - gap}")
    return int(hit[0]) + 1


def fairness_probe(
    t: SparseTensor,
    user: int,
    delta: float = 1.0,
    Ns: Sequence[int] = tuple(range(1, 26)),
    method: str = "sc",
    cfg: ConvergenceConfig | None = None,
    *,
    factor: float | None = None,
) -> FairnessReport:
    """Shift one user's ratings and count top-N changes for everyone else.

    For ``sc`` every rating of ``user`` gets ``+delta``. For ``uc`` the
    ratings are multiplied by ``factor``, defaulting to
    ``(max + delta) / max`` of that user's ratings so the highest rating moves
    up by ``delta``. ``shifted_user_deviation`` is the largest deviation of
    the shifted user's imputation change from ``delta`` (``sc``) or of its
    ratio from ``factor`` (``uc``).
    """
    if t.ndim != 2:
        raise CoordinateError("fairness probe needs a users x items matrix")
    m, n = t.shape
    if not (1 <= user <= m):
        raise CoordinateError(f"user {user} out of range 1..{m}")
    rows = t.index_array[:, 0]
    mine = rows == user - 1
    if not mine.any():
        raise ValueError(f"user {user} has no ratings")
    vals = np.array(t.values)
    method = method.lower()
    if method == "sc":
        vals[mine] += delta
    elif method == "uc":
        if factor is None:
            top = float(vals[mine].max())
            factor = (top + delta) / top
        vals[mine] *= factor
    else:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    shifted = t.with_values(vals)

    before = Recommender.fit(t, method, cfg).dense()
    after = Recommender.fit(shifted, method, cfg).dense()
    known = t.known_mask()
    others = np.ones(m, dtype=bool)
    others[user - 1] = False
    other_dev = float(np.max(np.abs(after[others] - before[others]), initial=0.0))
    unrated = ~known[user - 1]
    if unrated.any():
        if method == "sc":
            own = after[user - 1, unrated] - before[user - 1, unrated]
            own_dev = float(np.max(np.abs(own - delta)))
        else:
            own = after[user - 1, unrated] / before[user - 1, unrated]
            own_dev = float(np.max(np.abs(own - factor)))
    else:
        own_dev = 0.0

    rank_a = _ranked_unrated(before, known)
    rank_b = _ranked_unrated(after, known)
    n_unrated = (~known).sum(axis=1)
    changed = {}
    for N in Ns:
        if N < 1:
            raise ValueError(f"N must be >= 1, got {N}")
        width = min(int(N), n)
        live = np.arange(width)[None, :] < n_unrated[:, None]
        differs = ((rank_a[:, :width] != rank_b[:, :width]) & live).any(axis=1)
        differs[user - 1] = False
        changed[int(N)] = int(differs.sum())
    return FairnessReport(user, method, float(delta), factor, changed, other_dev, own_dev)
