"""Uniform Cartesian meshes, cell lookup and the discrete shift operator.

Cells are numbered with a 0-based flat index, row-major with the *first*
spatial axis fastest::

    id = i_0 + N_x * i_1 (+ N_x**2 * i_2 ...)

so a flat value vector reshaped with ``values.reshape(grid.shape)`` is
indexed as ``arr[i_{d-1}, ..., i_0]``. The 1-based formula
``(id_y - 1) * N_x + id_x`` used in some references maps onto this by
subtracting one from every index.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "OutsideDomain",
    "CartesianGrid",
    "Field",
    "GridShift",
    "cell_centre",
    "locate",
    "shift_field",
    "shift_values",
    "snap_shift",
    "halo",
    "write_field",
    "read_field",
]

PointLike = Union[float, Sequence[float], np.ndarray]

# guards floor(c/dx) against c/dx landing a few ulps below an integer
_SNAP_EPS = 1e-9

FIELD_MAGIC = b"TROM"
FIELD_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class OutsideDomain(ValueError):
    """A point lies outside the computational domain."""


@dataclass(frozen=True)
class CartesianGrid:
    """Uniform mesh of ``cells_per_axis**dim`` square cells.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1 or 2 (higher works but is untested).
    cells_per_axis : int
        Number of cells ``N_x`` along every axis.
    origin : sequence of float
        Lower corner of the domain.
    extent : float or sequence of float
        Side length of the domain. All axes must have the same length
        since ``dx`` is shared.
    """

    dim: int
    cells_per_axis: int
    origin: tuple = (0.0,)
    extent: float = 1.0

    def __post_init__(self):
        origin = tuple(float(o) for o in np.atleast_1d(self.origin))
        if len(origin) == 1 and self.dim > 1:
            origin = origin * self.dim
        ext = np.atleast_1d(np.asarray(self.extent, dtype=float))
        if ext.size > 1:
            if not np.allclose(ext, ext[0], rtol=1e-12, atol=0.0):
                raise ValueError("all axes must share the same extent")
            ext = ext[:1]
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "extent", float(ext[0]))
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if len(self.origin) != self.dim:
            raise ValueError(f"origin has {len(self.origin)} entries, expected {self.dim}")
        if self.cells_per_axis < 2:
            raise ValueError("need at least 2 cells per axis")
        if not self.extent > 0:
            raise ValueError("extent must be positive")

    @classmethod
    def from_bounds(cls, lower: PointLike, upper: PointLike, cells_per_axis: int) -> "CartesianGrid":
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        return cls(len(lower), cells_per_axis, tuple(lower), tuple(upper - lower))

    @property
    def n_x(self) -> int:
        return self.cells_per_axis

    @property
    def dx(self) -> float:
        return self.extent / self.cells_per_axis

    @property
    def N(self) -> int:
        return self.cells_per_axis**self.dim

    @property
    def shape(self) -> tuple:
        """numpy shape of a reshaped field; axis order is reversed w.r.t. space."""
        return (self.cells_per_axis,) * self.dim

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + self.extent

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    def np_axis(self, axis: int) -> int:
        """numpy axis of a reshaped field that runs along spatial ``axis``."""
        return self.dim - 1 - axis

    def to_array(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(self.shape)

    # -- index maps -------------------------------------------------------
    def multi_index(self, ids) -> np.ndarray:
        """Decode flat ids into an ``(n, dim)`` integer array."""
        ids = np.asarray(ids, dtype=np.int64)
        out = np.empty(ids.shape + (self.dim,), dtype=np.int64)
        rest = ids
        for a in range(self.dim):
            out[..., a] = rest % self.cells_per_axis
            rest = rest // self.cells_per_axis
        return out

    def flat_index(self, multi) -> np.ndarray:
        multi = np.asarray(multi, dtype=np.int64)
        ids = np.zeros(multi.shape[:-1], dtype=np.int64)
        stride = 1
        for a in range(self.dim):
            ids = ids + multi[..., a] * stride
            stride *= self.cells_per_axis
        return ids

    def cell_centre(self, id: int) -> np.ndarray:
        id = int(id)
        if not 0 <= id < self.N:
            raise IndexError(f"cell id {id} out of range [0, {self.N})")
        return self.cell_centres(np.array([id]))[0]

    def cell_centres(self, ids=None) -> np.ndarray:
        """Centres of ``ids`` (all cells if None) as an ``(n, dim)`` array."""
        if ids is None:
            ids = np.arange(self.N)
        return self.lower + (self.multi_index(ids) + 0.5) * self.dx

    def axis_centres(self) -> np.ndarray:
        """1D coordinates of the cell centres along any axis (offset by origin of axis 0)."""
        return (np.arange(self.cells_per_axis) + 0.5) * self.dx

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[-1] != self.dim:
            pts = pts.reshape(-1, self.dim)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=-1)

    def locate_many(self, points) -> np.ndarray:
        """Vectorised :meth:`locate`; points outside the domain map to -1."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        rel = (pts - self.lower) / self.dx
        idx = np.floor(rel).astype(np.int64)
        nx = self.cells_per_axis
        # exact right boundary belongs to the last cell
        on_edge = np.isclose(rel, nx, rtol=0.0, atol=1e-12)
        idx = np.where(on_edge, nx - 1, idx)
        inside = np.all((idx >= 0) & (idx < nx), axis=-1)
        ids = self.flat_index(np.clip(idx, 0, nx - 1))
        return np.where(inside, ids, -1)

    def locate(self, x: PointLike) -> int:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,):
            raise ValueError(f"expected a point with {self.dim} coordinates")
        id = int(self.locate_many(x[None, :])[0])
        if id < 0:
            raise OutsideDomain(f"point {x.tolist()} outside domain")
        return id

    def neighbours(self, ids) -> np.ndarray:
        """Face neighbours as ``(n, dim, 2)`` ids (lower, upper); -1 outside."""
        ids = np.asarray(ids, dtype=np.int64)
        multi = self.multi_index(ids)
        out = np.empty(ids.shape + (self.dim, 2), dtype=np.int64)
        stride = 1
        nx = self.cells_per_axis
        for a in range(self.dim):
            i = multi[..., a]
            out[..., a, 0] = np.where(i > 0, ids - stride, -1)
            out[..., a, 1] = np.where(i < nx - 1, ids + stride, -1)
            stride *= nx
        return out


def _as_grid(grid_or_field) -> CartesianGrid:
    return grid_or_field.grid if isinstance(grid_or_field, Field) else grid_or_field


@dataclass(frozen=True, eq=False)
class Field:
    """Finite-volume cell averages on a :class:`CartesianGrid`."""

    grid: CartesianGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != self.grid.N:
            raise ValueError(f"field has {v.size} values, grid has {self.grid.N} cells")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: CartesianGrid) -> "Field":
        return cls(grid, np.zeros(grid.N))

    @classmethod
    def from_function(cls, grid: CartesianGrid, func) -> "Field":
        """Midpoint-rule projection: sample ``func`` at cell centres."""
        return cls(grid, np.asarray(func(grid.cell_centres()), dtype=float))

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def norm(self) -> float:
        """Discrete L2 norm ``sqrt(dx**dim * sum(v**2))``."""
        return float(np.sqrt(self.grid.cell_volume) * np.linalg.norm(self.values))

    def mass(self) -> float:
        return float(self.grid.cell_volume * self.values.sum())

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)

    def __mul__(self, a: float) -> "Field":
        return Field(self.grid, a * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True)
class GridShift:
    """Shift by an integer number of cells per axis."""

    offset: tuple

    def __post_init__(self):
        object.__setattr__(self, "offset", tuple(int(o) for o in np.atleast_1d(self.offset)))

    def __add__(self, other: "GridShift") -> "GridShift":
        return GridShift(tuple(a + b for a, b in zip(self.offset, other.offset)))

    def __neg__(self) -> "GridShift":
        return GridShift(tuple(-a for a in self.offset))

    def physical(self, grid: CartesianGrid) -> np.ndarray:
        return np.asarray(self.offset, dtype=float) * grid.dx

    @property
    def is_zero(self) -> bool:
        return not any(self.offset)


def cell_centre(grid: CartesianGrid, id: int) -> np.ndarray:
    return grid.cell_centre(id)


def locate(grid: CartesianGrid, x: PointLike) -> int:
    return grid.locate(x)


def snap_shift(c: PointLike, grid: CartesianGrid) -> GridShift:
    """Project a physical shift onto whole cells, ``floor(c / dx)`` per axis.

    Note the asymmetry of ``floor``: -0.26 with ``dx = 0.25`` becomes -2 cells.
    """
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.size == 1 and grid.dim > 1:
        c = np.repeat(c, grid.dim)
    return GridShift(tuple(np.floor(c / grid.dx + _SNAP_EPS).astype(np.int64)))


def snap_counts(c: np.ndarray, dx: float) -> np.ndarray:
    """Array form of :func:`snap_shift`."""
    return np.floor(np.asarray(c, dtype=float) / dx + _SNAP_EPS).astype(np.int64)


def shift_values(values: np.ndarray, grid: CartesianGrid, offset) -> np.ndarray:
    """``out(x) = values(x - offset*dx)`` with zero fill, on a flat vector."""
    offset = np.atleast_1d(np.asarray(offset, dtype=np.int64))
    arr = np.asarray(values).reshape(grid.shape)
    out = np.zeros_like(arr)
    nx = grid.cells_per_axis
    dst, src = [], []
    for ax in range(grid.dim):
        s = int(offset[grid.dim - 1 - ax])
        if abs(s) >= nx:
            return out.reshape(-1)
        if s >= 0:
            dst.append(slice(s, nx))
            src.append(slice(0, nx - s))
        else:
            dst.append(slice(0, nx + s))
            src.append(slice(-s, nx))
    out[tuple(dst)] = arr[tuple(src)]
    return out.reshape(-1)


def shift_field(u: Field, c: GridShift) -> Field:
    """Apply ``T[c]``: cell ``i`` receives ``u`` at ``centre(i) - c``, zero outside."""
    if len(c.offset) != u.grid.dim:
        raise ValueError("shift dimension does not match grid")
    return Field(u.grid, shift_values(u.values, u.grid, c.offset))


def gather_shifted(values: np.ndarray, grid: CartesianGrid, multi: np.ndarray, offset) -> np.ndarray:
    """Rows ``multi`` (``(n, dim)`` cell multi-indices) of the shifted vector.

    Costs O(n); this is the reduced-mesh form of :func:`shift_values`.
    """
    src = multi - np.asarray(offset, dtype=np.int64)
    nx = grid.cells_per_axis
    ok = np.all((src >= 0) & (src < nx), axis=-1)
    ids = grid.flat_index(np.where(ok[..., None], src, 0))
    return np.where(ok, values[ids], 0.0)


def halo(grid: CartesianGrid, ids: Iterable[int]) -> np.ndarray:
    """``ids`` together with their face neighbours, ascending, clipped at the boundary."""
    ids = np.unique(np.asarray(list(ids) if not isinstance(ids, np.ndarray) else ids, dtype=np.int64))
    if ids.size and (ids[0] < 0 or ids[-1] >= grid.N):
        raise IndexError("cell id out of range")
    nb = grid.neighbours(ids).reshape(-1)
    return np.union1d(ids, nb[nb >= 0])


def write_field(path, u: Field) -> None:
    """Binary snapshot: header ``TROM``, version, dim, N_x (u32 LE), then float64 LE values."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FIELD_MAGIC, FIELD_VERSION, u.grid.dim, u.grid.cells_per_axis))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def read_field_header(path) -> tuple:
    with open(path, "rb") as fh:
        magic, version, dim, nx = _HEADER.unpack(fh.read(_HEADER.size))
    if magic != FIELD_MAGIC:
        raise ValueError(f"{path}: not a field snapshot (magic {magic!r})")
    if version != FIELD_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    return dim, nx


def read_field(path, grid: CartesianGrid | None = None) -> Field:
    """Read a snapshot; without ``grid`` a unit-cube grid with matching size is assumed."""
    dim, nx = read_field_header(path)
    if grid is None:
        grid = CartesianGrid(dim, nx, (0.0,) * dim, 1.0)
    elif (grid.dim, grid.cells_per_axis) != (dim, nx):
        raise ValueError(f"{path}: stored grid dim={dim}, N_x={nx} does not match {grid}")
    raw = Path(path).read_bytes()[_HEADER.size:]
    values = np.frombuffer(raw, dtype="<f8")
    if values.size != grid.N:
        raise ValueError(f"{path}: truncated ({values.size} of {grid.N} values)")
    return Field(grid, values.astype(float))
