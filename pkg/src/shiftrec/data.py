"""Dataset ingestion, synthetic instances and train/test splitting.

MovieLens files use 0 for "no rating" only implicitly (absent lines); the
parsers here never treat a value as missing. External user/item ids are
remapped densely in ascending numeric order onto ``1..m`` and ``1..n``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .canonical import ShiftVector
from .completion import check_support, expand_shifts
from .errors import ParseError
from .tensor import SparseTensor, _parse_coo_lines, open_text

log = logging.getLogger(__name__)

__all__ = [
    "RatingScale",
    "RatingsDataset",
    "parse_movielens",
    "write_dataset",
    "read_dataset",
    "SyntheticSpec",
    "SyntheticInstance",
    "generate",
    "generate_full_support",
    "SplitSpec",
    "Split",
    "split",
    "discretize",
    "consensus_instance",
    "SCALES",
    "DEFAULT_FRACTIONS",
]


@dataclass(frozen=True)
class RatingScale:
    low: float
    high: float
    step: float

    def contains(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        k = (values - self.low) / self.step
        on_lattice = np.abs(k - np.round(k)) < 1e-9
        return (values >= self.low - 1e-12) & (values <= self.high + 1e-12) & on_lattice

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.low, self.high, self.step)


SCALES = {
    "ml100k": RatingScale(1.0, 5.0, 1.0),
    "ml1m": RatingScale(1.0, 5.0, 1.0),
    "ml10m": RatingScale(0.5, 5.0, 0.5),
}

_DELIMS = {"ml100k": "\t", "ml1m": "::", "ml10m": "::"}
_FIELDS = ("user", "item", "rating", "timestamp")

DEFAULT_FRACTIONS = tuple(round(0.1 * i, 1) for i in range(1, 11))


@dataclass(frozen=True)
class RatingsDataset:
    """Users x items rating matrix with its external id maps."""

    matrix: SparseTensor
    user_ids: np.ndarray  # external id of dense user index i (1-based) at [i - 1]
    item_ids: np.ndarray
    scale: RatingScale
    flavor: str = "custom"

    @property
    def n_users(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_items(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_ratings(self) -> int:
        return self.matrix.nnz

    @property
    def sparsity(self) -> float:
        return self.matrix.sparsity

    def stats(self) -> dict:
        return {
            "flavor": self.flavor,
            "users": self.n_users,
            "items": self.n_items,
            "ratings": self.n_ratings,
            "sparsity": self.sparsity,
        }

    def user_index(self, external_id) -> int:
        pos = int(np.searchsorted(self.user_ids, external_id))
        if pos >= self.user_ids.size or self.user_ids[pos] != external_id:
            raise KeyError(external_id)
        return pos + 1

    def item_index(self, external_id) -> int:
        pos = int(np.searchsorted(self.item_ids, external_id))
        if pos >= self.item_ids.size or self.item_ids[pos] != external_id:
            raise KeyError(external_id)
        return pos + 1


def _parse_line_slow(fields: list[str], lineno: int, path) -> tuple[int, int, float]:
    if len(fields) != 4:
        raise ParseError(f"expected 4 fields, got {len(fields)}", path=path, line=lineno)
    out = []
    for name, raw, conv in zip(_FIELDS, fields, (int, int, float, int)):
        try:
            out.append(conv(raw.strip()))
        except ValueError:
            raise ParseError(f"malformed {name} {raw.strip()!r}", path=path, line=lineno, field=name) from None
    return out[0], out[1], out[2]


def parse_movielens(path, flavor: str = "ml100k") -> RatingsDataset:
    """Parse a MovieLens ratings file (``u.data`` or ``ratings.dat``).

    ``ml100k`` is tab-separated ``user item rating timestamp``; ``ml1m`` and
    ``ml10m`` use ``UserID::MovieID::Rating::Timestamp``. Timestamps are
    dropped. Gzip-compressed files are accepted.

    Raises
    ------
    ParseError
        Malformed line (with line number and field), rating outside the
        flavor's scale, or a repeated (user, item) pair.
    """
    if flavor not in SCALES:
        raise ValueError(f"unknown flavor {flavor!r}; expected one of {sorted(SCALES)}")
    delim = _DELIMS[flavor]
    scale = SCALES[flavor]
    with open_text(path) as fh:
        lines = fh.read().splitlines()
    linenos = [i for i, ln in enumerate(lines, start=1) if ln.strip()]
    rows = [lines[i - 1].split(delim) for i in linenos]
    try:
        if any(len(r) != 4 for r in rows):
            raise ValueError
        users = np.array([r[0] for r in rows], dtype=np.int64)
        items = np.array([r[1] for r in rows], dtype=np.int64)
        ratings = np.array([r[2] for r in rows], dtype=np.float64)
        np.array([r[3] for r in rows], dtype=np.int64)
    except ValueError:
        # locate the first bad line for the error message
        for lineno, r in zip(linenos, rows):
            _parse_line_slow(r, lineno, path)
        raise ParseError("unparseable content", path=path) from None
    ok = scale.contains(ratings)
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise ParseError(
            f"rating {ratings[bad]!r} outside scale {scale.as_tuple()}",
            path=path, line=linenos[bad], field=rows[bad][2],
        )
    user_ids, u = np.unique(users, return_inverse=True)
    item_ids, v = np.unique(items, return_inverse=True)
    key = u.astype(np.int64) * item_ids.size + v
    order = np.argsort(key, kind="stable")
    dup = np.flatnonzero(key[order][1:] == key[order][:-1])
    if dup.size:
        second = int(order[dup[0] + 1])
        raise ParseError(
            f"duplicate rating for user {users[second]} item {items[second]}",
            path=path, line=linenos[second],
        )
    matrix = SparseTensor(
        (user_ids.size, item_ids.size), np.stack([u, v], axis=1), ratings, one_based=False
    )
    log.info("parsed %s: %d users, %d items, %d ratings", path, *matrix.shape, matrix.nnz)
    return RatingsDataset(matrix, user_ids, item_ids, scale, flavor)


def write_dataset(ds: RatingsDataset, path) -> None:
    """Write a dataset as COO text; id maps and scale travel in comment lines."""
    with open_text(path, "wt") as fh:
        fh.write(f"# flavor {ds.flavor}\n")
        fh.write("# scale " + " ".join(repr(float(x)) for x in ds.scale.as_tuple()) + "\n")
        fh.write("# users " + " ".join(str(int(x)) for x in ds.user_ids) + "\n")
        fh.write("# items " + " ".join(str(int(x)) for x in ds.item_ids) + "\n")
        fh.write("# shape " + " ".join(str(n) for n in ds.matrix.shape) + "\n")
        for (i, j), val in zip(ds.matrix.coords.tolist(), ds.matrix.values.tolist()):
            fh.write(f"{i} {j} {val!r}\n")


def read_dataset(path) -> RatingsDataset:
    """Inverse of :func:`write_dataset`."""
    meta = {}
    with open_text(path) as fh:
        lines = fh.read().splitlines()
    for ln in lines:
        if ln.startswith("#"):
            parts = ln[1:].split()
            if parts and parts[0] in ("flavor", "scale", "users", "items"):
                meta[parts[0]] = parts[1:]
    matrix = _parse_coo_lines(lines, path=path)
    if matrix.ndim != 2:
        raise ParseError("ratings dataset must be a matrix", path=path)
    users = np.array(meta.get("users", range(1, matrix.shape[0] + 1)), dtype=np.int64)
    items = np.array(meta.get("items", range(1, matrix.shape[1] + 1)), dtype=np.int64)
    if users.size != matrix.shape[0] or items.size != matrix.shape[1]:
        raise ParseError("id map length does not match shape", path=path)
    scale = RatingScale(*(float(x) for x in meta["scale"])) if "scale" in meta else RatingScale(
        float(matrix.values.min(initial=0.0)), float(matrix.values.max(initial=1.0)), 1.0
    )
    flavor = meta.get("flavor", ["custom"])[0]
    return RatingsDataset(matrix, users, items, scale, flavor)


# ---------------------------------------------------------------------------
# Synthetic instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic instance.

    The ground truth is a sum (``additive``) or product (``multiplicative``)
    of per-subtensor factors for subtensors of order ``k`` (default
    ``d - 1``: one factor per index of each dimension). Additive factors are
    uniform in ``factor_range``; multiplicative factors are log-uniform in it.
    """

    shape: tuple[int, ...]
    model: str = "additive"
    factor_range: tuple[float, float] = (-1.0, 1.0)
    base: float = 0.0
    noise: float = 0.0
    known_fraction: float = 0.5
    discretize: tuple[float, float, float] | None = None
    k: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if self.model not in ("additive", "multiplicative"):
            raise ValueError(f"model must be 'additive' or 'multiplicative', got {self.model!r}")
        if not (0.0 < self.known_fraction <= 1.0):
            raise ValueError(f"known_fraction must be in (0, 1], got {self.known_fraction}")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        lo, hi = self.factor_range
        if hi < lo:
            raise ValueError("factor_range must be (low, high) with low <= high")
        if self.model == "multiplicative" and lo <= 0:
            raise ValueError("multiplicative factors must be positive")
        if self.model == "multiplicative" and self.base <= 0:
            object.__setattr__(self, "base", 1.0)
        k = len(self.shape) - 1 if self.k is None else int(self.k)
        if not (1 <= k < len(self.shape)):
            raise ValueError(f"k={k} invalid for d={len(self.shape)}")
        object.__setattr__(self, "k", k)


@dataclass(frozen=True)
class SyntheticInstance:
    masked: SparseTensor
    truth: np.ndarray
    spec: SyntheticSpec
    seed: object = None

    def truth_at(self, idx0: np.ndarray) -> np.ndarray:
        return self.truth[tuple(np.asarray(idx0).T)]


def discretize(values: np.ndarray, scale) -> np.ndarray:
    """Round to the nearest scale step and clamp into ``[low, high]``."""
    low, high, step = scale
    out = low + np.round((np.asarray(values, dtype=np.float64) - low) / step) * step
    return np.clip(out, low, high)


def generate(spec: SyntheticSpec, seed=0) -> SyntheticInstance:
    """Draw a synthetic tensor and its ground truth; deterministic given ``seed``."""
    rng = np.random.default_rng(seed)
    lo, hi = spec.factor_range
    shifts = ShiftVector.zeros(spec.shape, spec.k)
    n = len(shifts)
    if spec.model == "additive":
        coef = rng.uniform(lo, hi, size=n)
        truth = spec.base + expand_shifts(ShiftVector(spec.shape, spec.k, coef))
    else:
        coef = rng.uniform(math.log(lo), math.log(hi), size=n)
        truth = spec.base * np.exp(expand_shifts(ShiftVector(spec.shape, spec.k, coef)))
    if spec.noise > 0:
        truth = truth + rng.normal(scale=spec.noise, size=truth.shape)
    if spec.discretize is not None:
        truth = discretize(truth, spec.discretize)
    size = truth.size
    n_known = size if spec.known_fraction >= 1.0 else int(round(spec.known_fraction * size))
    n_known = max(n_known, 1)
    lin = np.sort(rng.choice(size, size=n_known, replace=False))
    idx = np.stack(np.unravel_index(lin, spec.shape), axis=1)
    masked = SparseTensor(spec.shape, idx, truth.reshape(-1)[lin], one_based=False)
    return SyntheticInstance(masked, truth, spec, seed)


def generate_full_support(spec: SyntheticSpec, seed=0, max_tries: int = 200) -> SyntheticInstance:
    """Like :func:`generate`, redrawing until the masked tensor is fully supported."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        inst = generate(spec, rng.integers(2**63))
        if check_support(inst.masked, certificates=False).fully_supported:
            return inst
    raise RuntimeError(f"no fully supported draw in {max_tries} tries for {spec}")


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.test_fraction < 1.0):
            raise ValueError(f"test_fraction must be in (0, 1), got {self.test_fraction}")
        fr = tuple(float(f) for f in self.fractions)
        if not fr or any(not (0.0 < f <= 1.0) for f in fr):
            raise ValueError("sweep fractions must lie in (0, 1]")
        object.__setattr__(self, "fractions", fr)


@dataclass
class Split:
    """A fixed test set and a nested family of training subsamples.

    Unpacks as ``train, test`` where ``test`` is a list of
    ``(coord, value)`` pairs with 1-based coordinates.
    """

    source: SparseTensor
    train_positions: np.ndarray  # positions into source, in draw order
    test_positions: np.ndarray
    spec: SplitSpec
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def train(self) -> SparseTensor:
        return self.at(1.0)

    @property
    def test_coords(self) -> np.ndarray:
        return self.source.coords[np.sort(self.test_positions)]

    @property
    def test_values(self) -> np.ndarray:
        return self.source.values[np.sort(self.test_positions)]

    @property
    def test(self) -> list[tuple[tuple[int, ...], float]]:
        return [(tuple(c), float(v)) for c, v in zip(self.test_coords.tolist(), self.test_values)]

    def n_train_at(self, fraction: float) -> int:
        return int(math.floor(fraction * self.train_positions.size + 1e-9))

    def at(self, fraction: float) -> SparseTensor:
        """Training tensor holding the first ``floor(fraction * n_train)`` drawn entries."""
        if fraction not in self._cache:
            pos = np.sort(self.train_positions[: self.n_train_at(fraction)])
            s = self.source
            self._cache[fraction] = SparseTensor(
                s.shape, s.index_array[pos], s.values[pos], one_based=False
            )
        return self._cache[fraction]

    def degenerate(self, fraction: float = 1.0) -> dict:
        """Per-dimension count of indices with no training entry (affects support)."""
        train = self.at(fraction)
        out = {}
        for j, n in enumerate(train.shape):
            seen = np.zeros(n, dtype=bool)
            seen[train.index_array[:, j]] = True
            out[j + 1] = int(n - seen.sum())
        return out

    def __iter__(self):
        yield self.train
        yield self.test


def split(data, spec: SplitSpec | None = None) -> Split:
    """Uniform random holdout of ``floor(test_fraction * nnz)`` known entries."""
    spec = spec or SplitSpec()
    t = data.matrix if isinstance(data, RatingsDataset) else data
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(t.nnz)
    n_test = int(math.floor(spec.test_fraction * t.nnz + 1e-9))
    sp = Split(t, perm[n_test:], perm[:n_test], spec)
    empty = sp.degenerate(1.0)
    if any(empty.values()):
        log.warning("split leaves indices without training entries: %s", empty)
    return sp


# ---------------------------------------------------------------------------
# Consensus-pattern instances
# ---------------------------------------------------------------------------


def consensus_instance(
    shape: Sequence[int],
    D: int = 2,
    *,
    axis: int | None = None,
    known_fraction: float = 0.6,
    common_fraction: float = 0.5,
    margin: float = 0.1,
    seed=0,
):
    """Random tensor containing a valid consensus ordering along ``axis``.

    ``D`` slices along ``axis`` (1-based, default last) share one known set
    covering about ``common_fraction`` of the slice grid, and are strictly
    increasing (gaps of at least ``margin``) on it in the drawn order
    ``gamma``. Other slices get ``known_fraction`` random known entries.

    Returns ``(tensor, gamma)`` with ``gamma`` 1-based.
    """
    shape = tuple(int(n) for n in shape)
    d = len(shape)
    axis = d if axis is None else int(axis)
    if not (1 <= axis <= d):
        raise ValueError(f"axis {axis} out of range for d={d}")
    n_ax = shape[axis - 1]
    if not (2 <= D <= n_ax):
        raise ValueError(f"D={D} needs 2 <= D <= {n_ax}")
    rng = np.random.default_rng(seed)
    gamma = rng.choice(n_ax, size=D, replace=False)
    values = rng.uniform(1.0, 5.0, size=shape)
    mask = rng.random(shape) < known_fraction
    slice_shape = shape[: axis - 1] + shape[axis:]
    n_slice = math.prod(slice_shape)
    n_common = min(max(1, int(round(common_fraction * n_slice))), max(n_slice - 1, 1))
    common = np.zeros(n_slice, dtype=bool)
    common[rng.choice(n_slice, size=n_common, replace=False)] = True
    common = common.reshape(slice_shape)
    base = rng.uniform(1.0, 3.0, size=slice_shape)
    steps = rng.uniform(margin, 1.0, size=(D,) + slice_shape)
    levels = base + np.cumsum(steps, axis=0)
    values = np.moveaxis(values, axis - 1, 0)
    mask = np.moveaxis(mask, axis - 1, 0)
    for r, g in enumerate(gamma):
        mask[g] = common
        values[g] = levels[r]
    values = np.moveaxis(values, 0, axis - 1)
    mask = np.moveaxis(mask, 0, axis - 1)
    t = SparseTensor.from_dense(values, mask)
    return t, tuple(int(g) + 1 for g in gamma)
