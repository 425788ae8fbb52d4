"""Reduced-mesh hyper-reduction, fixed and online-adaptive.

Offline, residual snapshots are collected from full-mesh runs, optionally
moved back to the reference sample, and the cells with the largest row norm
form ``E_off``. Online, the adaptive variant translates ``E_off`` by the
interpolated shift ``c_m(z, z_ref)`` at every step.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, HyperReductionError
from .grid import CartesianGrid, shift_values, snap_counts
from .rom import ReducedModel, run_rom
from .shifts import ShiftTable

__all__ = [
    "ResidualSnapshots",
    "ReducedMesh",
    "FixedMesh",
    "AdaptiveMesh",
    "collect_residual_snapshots",
    "time_stepping_runner",
    "shift_residuals",
    "row_norms",
    "select_reduced_mesh",
    "adapt_reduced_mesh",
    "save_reduced_mesh",
    "load_reduced_mesh",
    "interior_samples",
]

# residual entries at or below this magnitude are dropped in sparse storage
SPARSE_DROP = 1e-14
SPARSE_MIN_N = 20000


@dataclass
class ResidualSnapshots:
    """Residual vectors as columns of an ``N x ncols`` matrix.

    ``matrix`` is a dense array or a ``scipy.sparse`` CSC matrix.
    ``params[j]`` is the ``(t, mu)`` of column ``j``.
    """

    matrix: object
    params: list
    shifted: bool = False

    @property
    def shape(self) -> tuple:
        return self.matrix.shape

    @property
    def sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def column(self, j: int) -> np.ndarray:
        if self.sparse:
            return self.matrix[:, [j]].toarray().ravel()
        return np.asarray(self.matrix[:, j])

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.sparse else np.asarray(self.matrix)

    def digest(self) -> str:
        h = hashlib.sha256()
        if self.sparse:
            m = self.matrix.tocsc()
            for arr in (m.data, m.indices, m.indptr):
                h.update(np.ascontiguousarray(arr).tobytes())
        else:
            h.update(np.ascontiguousarray(self.matrix, dtype=float).tobytes())
        return h.hexdigest()[:16]

    @classmethod
    def from_columns(cls, columns: Sequence[np.ndarray], params: list, shifted: bool = False,
                     sparse: Optional[bool] = None) -> "ResidualSnapshots":
        if not columns:
            raise ValueError("no residual columns")
        n = len(columns[0])
        if sparse is None:
            sparse = n >= SPARSE_MIN_N
        if not sparse:
            return cls(np.column_stack(columns), list(params), shifted)
        rows, cols, vals = [], [], []
        for j, c in enumerate(columns):
            nz = np.flatnonzero(np.abs(c) > SPARSE_DROP)
            rows.append(nz)
            cols.append(np.full(nz.size, j))
            vals.append(c[nz])
        mat = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(n, len(columns)))
        return cls(mat, list(params), shifted)


@dataclass
class ReducedMesh:
    ids: np.ndarray
    provenance: str = "offline"
    shift: Optional[tuple] = None

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)

    def __len__(self):
        return len(self.ids)


def interior_samples(lo: float, hi: float, m: int) -> np.ndarray:
    """``m`` uniformly spaced points strictly inside ``[lo, hi]``."""
    return lo + (hi - lo) * np.arange(1, m + 1) / (m + 1)


def time_stepping_runner(model: ReducedModel, mode: str = "shifted") -> Callable:
    """Runner for :func:`collect_residual_snapshots` using full-mesh time stepping.

    Residuals of the first step are skipped, so ``K`` steps give ``K - 1`` columns.
    """

    def runner(mu):
        run = run_rom(model, mu, mode=mode, keep_residuals=True)
        if run.diverged:
            raise HyperReductionError(f"training run mu={mu} diverged")
        return [((float(run.times[k + 1]), float(mu)), run.residuals[k]) for k in range(1, len(run.residuals))]

    return runner


def collect_residual_snapshots(mus: Iterable[float], runner: Callable, sparse: Optional[bool] = None
                               ) -> ResidualSnapshots:
    """Residual matrix from training runs, run-major then time-minor."""
    columns, params = [], []
    for j, mu in enumerate(mus):
        try:
            out = runner(mu)
        except Exception as exc:
            raise type(exc)(f"training run {j} (mu={mu}) failed: {exc}") from exc
        for z, r in out:
            params.append(tuple(z))
            columns.append(np.asarray(r, dtype=float))
    return ResidualSnapshots.from_columns(columns, params, False, sparse)


def shift_residuals(S: ResidualSnapshots, table: ShiftTable, grid: CartesianGrid) -> ResidualSnapshots:
    """Move every column back to the reference sample.

    The pull-back offset is ``-floor(c_m(z, z_ref)/dx)``, the exact inverse of
    the whole-cell translation applied online by :class:`AdaptiveMesh`.
    """
    cols = []
    for j, z in enumerate(S.params):
        c = table.interpolate_many(z, [table.ref])[0]
        cols.append(shift_values(S.column(j), grid, -snap_counts(c, grid.dx)))
    return ResidualSnapshots.from_columns(cols, S.params, True, S.sparse)


def row_norms(S: ResidualSnapshots) -> np.ndarray:
    """Row 2-norms, accumulated column by column so dense and sparse agree bitwise."""
    n, ncols = S.shape
    r2 = np.zeros(n)
    if S.sparse:
        m = S.matrix.tocsc()
        for j in range(ncols):
            lo, hi = m.indptr[j], m.indptr[j + 1]
            r2[m.indices[lo:hi]] += m.data[lo:hi] ** 2
    else:
        M = np.asarray(S.matrix)
        for j in range(ncols):
            r2 += M[:, j] ** 2
    return np.sqrt(r2)


def select_reduced_mesh(S: ResidualSnapshots, n: int) -> np.ndarray:
    """Ids of the ``n`` rows with the largest norm, descending; ties by ascending id."""
    N = S.shape[0]
    if not 1 <= n <= N:
        raise ConfigurationError(f"reduced mesh size {n} not in [1, {N}]")
    r = row_norms(S)
    return np.argsort(-r, kind="stable")[:n]


class FixedMesh:
    """Parameter-independent reduced mesh."""

    name = "fixed"

    def __init__(self, ids):
        self.ids = np.asarray(ids, dtype=np.int64)
        if self.ids.size == 0:
            raise HyperReductionError("reduced mesh is empty")

    def select(self, z, basis=None) -> np.ndarray:
        return self.ids


class AdaptiveMesh:
    """``E_off`` translated by the snapped reference shift of the current basis.

    A whole-cell translation is injective, so only cells leaving the domain
    are dropped and no deduplication is needed; the work is O(n).
    """

    name = "adaptive"

    def __init__(self, ids, grid: CartesianGrid, table: Optional[ShiftTable] = None):
        self.ids = np.asarray(ids, dtype=np.int64)
        if self.ids.size == 0:
            raise HyperReductionError("reduced mesh is empty")
        self.grid = grid
        self.table = table
        self._multi = grid.multi_index(self.ids)

    def select(self, z, basis=None) -> np.ndarray:
        if basis is not None and basis.ref_offset is not None:
            offset = basis.ref_offset
        else:
            offset = snap_counts(self.table.interpolate_many(z, [self.table.ref])[0], self.grid.dx)
        return _translate(self._multi, offset, self.grid)


def _translate(multi: np.ndarray, offset, grid: CartesianGrid) -> np.ndarray:
    moved = multi + np.asarray(offset, dtype=np.int64)
    nx = grid.cells_per_axis
    ok = np.all((moved >= 0) & (moved < nx), axis=1)
    moved = moved[ok]
    flat = moved[:, 0].copy()
    stride = nx
    for a in range(1, grid.dim):
        flat += moved[:, a] * stride
        stride *= nx
    return flat


def adapt_reduced_mesh(e_off, table: ShiftTable, z, grid: CartesianGrid,
                       transform: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> ReducedMesh:
    """Move ``E_off`` with the parameter.

    Each cell centre is displaced by ``floor(c_m(z, z_ref)/dx) * dx`` and the
    containing cell is looked up; centres leaving the domain are dropped.
    ``transform``, if given, replaces the displacement by an arbitrary map of
    the ``(n, dim)`` centre array (duplicates are then removed, first kept).
    """
    e_off = np.asarray(getattr(e_off, "ids", e_off), dtype=np.int64)
    if e_off.size == 0:
        raise HyperReductionError("offline reduced mesh is empty")
    if transform is None:
        offset = snap_counts(table.interpolate_many(z, [table.ref])[0], grid.dx)
        ids = _translate(grid.multi_index(e_off), offset, grid)
        shift = tuple(int(o) for o in offset)
    else:
        found = grid.locate_many(transform(grid.cell_centres(e_off)))
        found = found[found >= 0]
        _, first = np.unique(found, return_index=True)
        ids = found[np.sort(first)]
        shift = None
    if ids.size == 0:
        raise HyperReductionError(f"all reduced mesh cells left the domain at z={tuple(z)}")
    return ReducedMesh(ids, "adapted", shift)


def save_reduced_mesh(path, ids, z_ref=None, source: str = "") -> None:
    ids = np.asarray(getattr(ids, "ids", ids), dtype=np.int64)
    lines = [f"# n = {ids.size}"]
    if z_ref is not None:
        lines.append(f"# z_ref = {' '.join(repr(float(v)) for v in z_ref)}")
    lines.append(f"# source = {source}")
    lines.extend(str(int(i)) for i in ids)
    Path(path).write_text("\n".join(lines) + "\n")


def load_reduced_mesh(path) -> ReducedMesh:
    header, ids = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            header[key.strip()] = value.strip()
        elif line.strip():
            ids.append(int(line))
    if "n" in header and int(header["n"]) != len(ids):
        raise ValueError(f"{path}: header says {header['n']} ids, found {len(ids)}")
    return ReducedMesh(np.array(ids, dtype=np.int64), "offline")
