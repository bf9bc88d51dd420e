"""Sparse d-dimensional tensors with an explicit known-entry set.

Coordinates at every public interface are 1-based tuples. Internally the
known entries are kept as a row-major sorted ``(nnz, d)`` array of 0-based
indices next to a parallel ``float64`` value array; both are read-only.

A value of ``0`` is a legitimate known value here. Treating zero as
"missing" is a file-format convention handled by the parsers in
:mod:`shiftrec.data`.
"""

from __future__ import annotations

import gzip
import io
import itertools
import math
import os
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import CoordinateError, InvalidOrderError, ParseError

__all__ = [
    "SparseTensor",
    "SubtensorId",
    "SubtensorCatalog",
    "catalog",
    "subtensors_containing",
    "known_coords_of",
    "read_coo",
    "write_coo",
    "open_text",
]


def _check_shape(shape) -> tuple[int, ...]:
    shape = tuple(int(n) for n in shape)
    if len(shape) < 1:
        raise ValueError("shape must have at least one dimension")
    if any(n < 1 for n in shape):
        raise ValueError(f"every extent must be >= 1, got {shape}")
    return shape


class SparseTensor:
    """Immutable sparse tensor: a shape plus a map from known coordinates to values.

    Parameters
    ----------
    shape : sequence of int
        Extents ``(n_1, ..., n_d)``.
    coords : array_like, shape (nnz, d)
        Known coordinates, 1-based unless ``one_based=False``.
    values : array_like, shape (nnz,)
        Values at those coordinates.
    one_based : bool
        Whether ``coords`` are 1-based (default) or 0-based.
    """

    __slots__ = ("_shape", "_idx", "_vals", "_lin")

    def __init__(self, shape, coords=(), values=(), *, one_based: bool = True):
        shape = _check_shape(shape)
        d = len(shape)
        idx = np.asarray(coords, dtype=np.int64)
        if idx.size == 0:
            idx = idx.reshape(0, d)
        if idx.ndim != 2 or idx.shape[1] != d:
            raise CoordinateError(f"coords must have shape (nnz, {d}), got {idx.shape}")
        vals = np.asarray(values, dtype=np.float64).reshape(-1)
        if vals.shape[0] != idx.shape[0]:
            raise ValueError(
                f"{idx.shape[0]} coordinates but {vals.shape[0]} values"
            )
        if one_based:
            idx = idx - 1
        ext = np.asarray(shape, dtype=np.int64)
        bad = np.any((idx < 0) | (idx >= ext), axis=1)
        if bad.any():
            first = idx[np.argmax(bad)] + 1
            raise CoordinateError(f"coordinate {tuple(first.tolist())} out of bounds for shape {shape}")
        lin = np.ravel_multi_index(idx.T, shape) if d > 0 else np.zeros(0, np.int64)
        lin = np.asarray(lin, dtype=np.int64)
        order = np.argsort(lin, kind="stable")
        lin = lin[order]
        if lin.size > 1:
            dup = np.flatnonzero(lin[1:] == lin[:-1])
            if dup.size:
                c = np.unravel_index(lin[dup[0]], shape)
                raise ValueError(f"duplicate coordinate {tuple(int(x) + 1 for x in c)}")
        idx = np.ascontiguousarray(idx[order])
        vals = np.ascontiguousarray(vals[order])
        for a in (idx, vals, lin):
            a.setflags(write=False)
        self._shape = shape
        self._idx = idx
        self._vals = vals
        self._lin = lin

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_dict(cls, shape, entries: Mapping[Sequence[int], float]) -> "SparseTensor":
        """Build from ``{(i1, ..., id): value}`` with 1-based keys."""
        shape = _check_shape(shape)
        if not entries:
            return cls(shape)
        coords = [tuple(k) for k in entries]
        return cls(shape, coords, [entries[k] for k in entries])

    @classmethod
    def from_dense(cls, array, mask=None) -> "SparseTensor":
        """Build from a dense array. ``mask`` marks known entries; default is ``~isnan``."""
        a = np.asarray(array, dtype=np.float64)
        if mask is None:
            mask = ~np.isnan(a)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape:
            raise ValueError("mask shape differs from array shape")
        idx = np.argwhere(mask)
        return cls(a.shape, idx, a[mask], one_based=False)

    def with_values(self, values) -> "SparseTensor":
        """Same known set, new values (given in this tensor's internal order)."""
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.shape[0] != self.nnz:
            raise ValueError(f"expected {self.nnz} values, got {values.shape[0]}")
        out = object.__new__(SparseTensor)
        vals = np.array(values, dtype=np.float64)
        vals.setflags(write=False)
        out._shape = self._shape
        out._idx = self._idx
        out._lin = self._lin
        out._vals = vals
        return out

    # -- basic properties -----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self._shape

    @property
    def ndim(self) -> int:
        return len(self._shape)

    @property
    def size(self) -> int:
        return math.prod(self._shape)

    @property
    def nnz(self) -> int:
        """Number of known entries, ``|sigma(A)|``."""
        return int(self._vals.shape[0])

    @property
    def n_unknown(self) -> int:
        return self.size - self.nnz

    @property
    def index_array(self) -> np.ndarray:
        """0-based known coordinates, shape ``(nnz, d)``, row-major sorted (read-only)."""
        return self._idx

    @property
    def linear_index(self) -> np.ndarray:
        """Row-major linear index of each known entry (read-only, ascending)."""
        return self._lin

    @property
    def values(self) -> np.ndarray:
        """Known values aligned with :attr:`index_array` (read-only)."""
        return self._vals

    @property
    def coords(self) -> np.ndarray:
        """1-based known coordinates, shape ``(nnz, d)``."""
        return self._idx + 1

    @property
    def sparsity(self) -> float:
        """Fraction of the grid that is unknown."""
        return 1.0 - self.nnz / self.size

    def __len__(self) -> int:
        return self.nnz

    def __repr__(self) -> str:
        return f"SparseTensor(shape={self._shape}, nnz={self.nnz})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseTensor):
            return NotImplemented
        return (
            self._shape == other._shape
            and np.array_equal(self._lin, other._lin)
            and np.array_equal(self._vals, other._vals)
        )

    __hash__ = None

    # -- lookup ---------------------------------------------------------------

    def check_coord(self, alpha) -> tuple[int, ...]:
        """Validate a 1-based coordinate and return it as a tuple of ints."""
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.ndim:
            raise CoordinateError(f"expected {self.ndim} indices, got {len(alpha)}")
        for a, n in zip(alpha, self._shape):
            if a < 1 or a > n:
                raise CoordinateError(f"coordinate {alpha} out of bounds for shape {self._shape}")
        return alpha

    def _position(self, alpha) -> int:
        """Position of a 1-based coordinate in the internal arrays, or -1."""
        alpha = self.check_coord(alpha)
        lin = int(np.ravel_multi_index(tuple(a - 1 for a in alpha), self._shape))
        pos = int(np.searchsorted(self._lin, lin))
        if pos < self.nnz and self._lin[pos] == lin:
            return pos
        return -1

    def __contains__(self, alpha) -> bool:
        return self._position(alpha) >= 0

    def get(self, alpha, default=None):
        pos = self._position(alpha)
        return float(self._vals[pos]) if pos >= 0 else default

    def __getitem__(self, alpha) -> float:
        pos = self._position(alpha)
        if pos < 0:
            raise KeyError(tuple(alpha))
        return float(self._vals[pos])

    def items(self) -> Iterator[tuple[tuple[int, ...], float]]:
        for row, v in zip(self._idx.tolist(), self._vals.tolist()):
            yield tuple(i + 1 for i in row), v

    def to_dict(self) -> dict:
        return dict(self.items())

    def known_mask(self) -> np.ndarray:
        """Dense boolean mask of ``sigma(A)``."""
        mask = np.zeros(self.size, dtype=bool)
        mask[self._lin] = True
        return mask.reshape(self._shape)

    def to_dense(self, fill: float = np.nan) -> np.ndarray:
        out = np.full(self.size, fill, dtype=np.float64)
        out[self._lin] = self._vals
        return out.reshape(self._shape)

    def unknown_index_array(self) -> np.ndarray:
        """0-based coordinates of ``sigma-bar(A)``, row-major order."""
        mask = np.ones(self.size, dtype=bool)
        mask[self._lin] = False
        lin = np.flatnonzero(mask)
        return np.stack(np.unravel_index(lin, self._shape), axis=1).astype(np.int64)

    def unknown_coords(self) -> list[tuple[int, ...]]:
        return [tuple(i + 1 for i in row) for row in self.unknown_index_array().tolist()]


# ---------------------------------------------------------------------------
# Subtensor catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class SubtensorId:
    """A k-dimensional subtensor: free dimensions ``pi`` and fixed complement ``anchor``.

    Both are 1-based: ``pi`` lists dimension numbers, ``anchor`` gives the
    fixed index for each dimension not in ``pi`` (in ascending dimension order).
    """

    pi: tuple[int, ...]
    anchor: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.pi)


@dataclass(frozen=True)
class _Group:
    pi: tuple[int, ...]  # 0-based free dims
    comp: tuple[int, ...]  # 0-based fixed dims
    extents: tuple[int, ...]  # extents of the fixed dims
    offset: int
    size: int


class SubtensorCatalog:
    """Deterministic enumeration of every k-dimensional subtensor of a shape.

    Ordering is lexicographic over ``pi`` subsets, then row-major over the
    anchor. Positions are 0-based and index :class:`ShiftVector` coefficients.
    The catalog is never materialised; ids are computed on demand.
    """

    def __init__(self, shape, k: int):
        shape = _check_shape(shape)
        d = len(shape)
        if not (1 <= k < d):
            raise InvalidOrderError(f"subtensor order k={k} invalid for d={d}; need 1 <= k < d")
        self.shape = shape
        self.k = int(k)
        groups = []
        offset = 0
        for pi in itertools.combinations(range(d), k):
            comp = tuple(j for j in range(d) if j not in pi)
            extents = tuple(shape[j] for j in comp)
            size = math.prod(extents)
            groups.append(_Group(pi, comp, extents, offset, size))
            offset += size
        self.groups: tuple[_Group, ...] = tuple(groups)
        self._len = offset
        self._offsets = np.array([g.offset for g in groups] + [offset], dtype=np.int64)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def n_groups(self) -> int:
        """Number of ``pi`` subsets, ``C(d, k)``."""
        return len(self.groups)

    def __len__(self) -> int:
        return self._len

    def __eq__(self, other) -> bool:
        if not isinstance(other, SubtensorCatalog):
            return NotImplemented
        return self.shape == other.shape and self.k == other.k

    def __hash__(self) -> int:
        return hash((self.shape, self.k))

    def __repr__(self) -> str:
        return f"SubtensorCatalog(shape={self.shape}, k={self.k}, size={self._len})"

    def group_of(self, i: int) -> int:
        return int(np.searchsorted(self._offsets, i, side="right") - 1)

    def __getitem__(self, i: int) -> SubtensorId:
        i = int(i)
        if i < 0:
            i += self._len
        if not (0 <= i < self._len):
            raise IndexError(f"catalog position {i} out of range")
        g = self.groups[self.group_of(i)]
        anchor = np.unravel_index(i - g.offset, g.extents)
        return SubtensorId(
            tuple(p + 1 for p in g.pi), tuple(int(a) + 1 for a in anchor)
        )

    def __iter__(self) -> Iterator[SubtensorId]:
        for g in self.groups:
            pi1 = tuple(p + 1 for p in g.pi)
            for anchor in itertools.product(*(range(1, n + 1) for n in g.extents)):
                yield SubtensorId(pi1, anchor)

    def index(self, sid: SubtensorId) -> int:
        """Catalog position of a subtensor id."""
        pi = tuple(p - 1 for p in sid.pi)
        for g in self.groups:
            if g.pi == pi:
                if len(sid.anchor) != len(g.extents) or any(
                    a < 1 or a > n for a, n in zip(sid.anchor, g.extents)
                ):
                    raise CoordinateError(f"anchor {sid.anchor} out of bounds for {sid.pi}")
                return g.offset + int(
                    np.ravel_multi_index(tuple(a - 1 for a in sid.anchor), g.extents)
                )
        raise KeyError(sid)

    def member_positions(self, idx0: np.ndarray) -> np.ndarray:
        """Catalog positions of the subtensors containing each 0-based coordinate.

        Returns an int64 array of shape ``(len(idx0), C(d, k))``; column ``g``
        holds the position within group ``g``.
        """
        idx0 = np.asarray(idx0, dtype=np.int64).reshape(-1, self.ndim)
        out = np.empty((idx0.shape[0], len(self.groups)), dtype=np.int64)
        for c, g in enumerate(self.groups):
            if idx0.shape[0]:
                local = np.ravel_multi_index(tuple(idx0[:, j] for j in g.comp), g.extents)
            else:
                local = np.zeros(0, dtype=np.int64)
            out[:, c] = g.offset + local
        return out


def catalog(shape, k: int) -> SubtensorCatalog:
    """All k-dimensional subtensors of ``shape`` in deterministic order."""
    return SubtensorCatalog(shape, k)


def subtensors_containing(cat: SubtensorCatalog, alpha) -> list[tuple[int, SubtensorId]]:
    """The ``C(d, k)`` subtensors containing coordinate ``alpha`` (1-based)."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != cat.ndim:
        raise CoordinateError(f"expected {cat.ndim} indices, got {len(alpha)}")
    if any(a < 1 or a > n for a, n in zip(alpha, cat.shape)):
        raise CoordinateError(f"coordinate {alpha} out of bounds for shape {cat.shape}")
    out = []
    for g in cat.groups:
        anchor = tuple(alpha[j] for j in g.comp)
        pos = g.offset + int(np.ravel_multi_index(tuple(a - 1 for a in anchor), g.extents))
        out.append((pos, SubtensorId(tuple(p + 1 for p in g.pi), anchor)))
    return out


def known_coords_of(t: SparseTensor, sid: SubtensorId) -> list[tuple[int, ...]]:
    """Known coordinates of ``t`` lying in subtensor ``sid``, in row-major order."""
    comp = [j for j in range(t.ndim) if (j + 1) not in sid.pi]
    if len(comp) != len(sid.anchor):
        raise CoordinateError(f"subtensor {sid} does not match a {t.ndim}-d tensor")
    idx = t.index_array
    sel = np.ones(t.nnz, dtype=bool)
    for j, a in zip(comp, sid.anchor):
        sel &= idx[:, j] == a - 1
    return [tuple(i + 1 for i in row) for row in idx[sel].tolist()]


# ---------------------------------------------------------------------------
# COO text format
# ---------------------------------------------------------------------------


def open_text(path, mode: str = "rt"):
    """Open a text file, transparently decompressing ``.gz`` (by magic bytes)."""
    path = os.fspath(path)
    if "r" in mode:
        with open(path, "rb") as fh:
            magic = fh.read(2)
        if magic == b"\x1f\x8b":
            return gzip.open(path, mode, encoding="utf-8")
        return open(path, mode, encoding="utf-8")
    if path.endswith(".gz"):
        return gzip.open(path, mode, encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def _parse_coo_lines(lines: Iterable[str], path=None) -> SparseTensor:
    shape = None
    coords, vals = [], []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts and parts[0] == "shape":
                if shape is not None:
                    raise ParseError("repeated shape header", path=path, line=lineno)
                try:
                    shape = tuple(int(p) for p in parts[1:])
                    _check_shape(shape)
                except ValueError as exc:
                    raise ParseError(f"bad shape header: {exc}", path=path, line=lineno) from None
            continue
        if shape is None:
            raise ParseError("entry before '# shape' header", path=path, line=lineno)
        parts = line.split()
        if len(parts) != len(shape) + 1:
            raise ParseError(
                f"expected {len(shape)} indices and a value, got {len(parts)} fields",
                path=path, line=lineno,
            )
        try:
            coord = tuple(int(p) for p in parts[:-1])
        except ValueError:
            raise ParseError("non-integer index", path=path, line=lineno, field=line) from None
        try:
            value = float(parts[-1])
        except ValueError:
            raise ParseError("non-numeric value", path=path, line=lineno, field=parts[-1]) from None
        if any(c < 1 or c > n for c, n in zip(coord, shape)):
            raise ParseError(f"index {coord} out of bounds for shape {shape}", path=path, line=lineno)
        coords.append(coord)
        vals.append(value)
    if shape is None:
        raise ParseError("missing '# shape' header", path=path)
    try:
        return SparseTensor(shape, np.array(coords, dtype=np.int64).reshape(-1, len(shape)), vals)
    except ValueError as exc:
        raise ParseError(str(exc), path=path) from None


def read_coo(path) -> SparseTensor:
    """Read a tensor from the COO text format (``# shape n1 ... nd`` header)."""
    with open_text(path) as fh:
        return _parse_coo_lines(fh, path=path)


def loads_coo(text: str) -> SparseTensor:
    return _parse_coo_lines(io.StringIO(text))


def dumps_coo(t: SparseTensor, comments: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    _write_coo(t, buf, comments)
    return buf.getvalue()


def _write_coo(t: SparseTensor, fh, comments: Sequence[str]) -> None:
    for c in comments:
        fh.write(f"# {c}\n")
    fh.write("# shape " + " ".join(str(n) for n in t.shape) + "\n")
    for row, v in zip(t.coords.tolist(), t.values.tolist()):
        fh.write(" ".join(map(str, row)) + " " + repr(float(v)) + "\n")


def write_coo(t: SparseTensor, path, comments: Sequence[str] = ()) -> None:
    """Write ``t`` in COO text format. Values use shortest round-trip repr."""
    with open_text(path, "wt") as fh:
        _write_coo(t, fh, comments)
