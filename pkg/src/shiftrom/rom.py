"""Shifted-snapshot reduced-order model driven by residual minimization.

For a target ``z = (t, mu)`` inside a parameter element the reduced space is
spanned by the four corner snapshots, each translated by the interpolated
shift ``c_m(z, z_i)`` snapped to whole cells. One time step solves

    alpha_{k+1} = argmin_y || A[E](t_{k+1}) y - b[E](t_k) ||,
    b(t_k) = U_m(t_k) + dt * F(U_m(t_k)),

over a reduced mesh ``E`` (the full mesh when ``E`` is None). Only rows of
``A`` and stencil values of ``U_m`` on ``E`` are ever formed, so a
hyper-reduced step costs O(#E).
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import HyperReductionError, StoreError
from .fv import FomConfig, divergence, iterate_fom, stencil_divergence
from .grid import CartesianGrid, Field, shift_values, snap_counts
from .sampling import ParamElement, ParamGrid, containing_element
from .shifts import ShiftTable

__all__ = [
    "SnapshotStore",
    "RomBasis",
    "RomCoeffs",
    "RomRun",
    "ReducedModel",
    "assemble_basis",
    "minnorm_lsq",
    "compute_b",
    "init_coeffs",
    "rom_step",
    "run_rom",
    "static_fit",
    "shifted_residual_defects",
]

SHIFTED = "shifted"
PLAIN = "plain"


class SnapshotStore:
    """FOM snapshots at every parameter sample, one row per sample id."""

    def __init__(self, grid: CartesianGrid, param_grid: ParamGrid, data):
        data = np.array(data, dtype=float)
        if data.shape != (param_grid.m, grid.N):
            raise ValueError(f"snapshot array has shape {data.shape}, expected {(param_grid.m, grid.N)}")
        self.grid = grid
        self.param_grid = param_grid
        self.data = data
        self.data.setflags(write=False)

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, i: int) -> np.ndarray:
        if not 0 <= int(i) < len(self):
            raise StoreError(f"no snapshot for sample {i}")
        return self.data[int(i)]

    def field(self, i: int) -> Field:
        return Field(self.grid, self[i])

    def support(self, i: int) -> np.ndarray:
        """Ids of the nonzero cells of snapshot ``i`` (cached)."""
        cache = self.__dict__.setdefault("_support", {})
        if i not in cache:
            cache[i] = np.flatnonzero(self[i])
        return cache[i]

    @classmethod
    def from_fom(cls, config: FomConfig, param_grid: ParamGrid) -> "SnapshotStore":
        """Run the FOM once per parameter sample, recording the time samples."""
        times = config.step_times()
        dt = config.time_step
        wanted = {}
        for i_t, t in enumerate(param_grid.t_samples):
            k = int(np.argmin(np.abs(times - t)))
            if abs(times[k] - t) > 1e-9 * max(1.0, t) + 1e-12:
                raise ValueError(f"time sample {t} is not a FOM step time (dt={dt})")
            wanted[k] = i_t
        data = np.empty((param_grid.m, config.grid.N))
        last = max(wanted)
        for i_mu, mu in enumerate(param_grid.mu_samples):
            for k, _, u in iterate_fom(config, mu):
                if k in wanted:
                    data[param_grid.sample_id(wanted[k], i_mu)] = u
                if k >= last:
                    break
        return cls(config.grid, param_grid, data)


def _stencil_multi(multi: np.ndarray) -> np.ndarray:
    """``(n, 1 + 2 dim, dim)``: the cell, then lower/upper neighbour per axis."""
    n, dim = multi.shape
    out = np.repeat(multi[:, None, :], 1 + 2 * dim, axis=1)
    for a in range(dim):
        out[:, 1 + 2 * a, a] -= 1
        out[:, 2 + 2 * a, a] += 1
    return out


@dataclass(eq=False)
class RomBasis:
    """Lazy ``N x 4`` matrix of (shifted) corner snapshots."""

    element: ParamElement
    offsets: np.ndarray
    store: SnapshotStore
    z: tuple = ()
    ref_offset: Optional[np.ndarray] = None

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.int64).reshape(4, self.store.grid.dim)
        self._sid = np.asarray(self.element.sample_ids)
        grid = self.store.grid
        strides = grid.cells_per_axis ** np.arange(grid.dim)
        # flat position of column j's source for cell 0, in the flattened store
        self._base = self._sid * grid.N - self.offsets @ strides
        self._flat_data = self.store.data.reshape(-1)

    @property
    def grid(self) -> CartesianGrid:
        return self.store.grid

    def column(self, j: int) -> np.ndarray:
        return shift_values(self.store[self._sid[j]], self.grid, self.offsets[j])

    def full(self) -> np.ndarray:
        return np.column_stack([self.column(j) for j in range(4)])

    def rows_multi(self, multi: np.ndarray) -> np.ndarray:
        """Rows for cells given as multi-indices ``(..., dim)``; cells off the mesh give 0."""
        nx = self.grid.cells_per_axis
        # column j reads cell m - o_j, valid while lo_j <= m < hi_j on every axis
        lo = np.maximum(self.offsets, 0)
        hi = np.minimum(self.offsets, 0) + nx
        ok = None
        flat = np.zeros(multi.shape[:-1], dtype=np.int64)
        stride = 1
        for a in range(self.grid.dim):
            m = multi[..., a]
            flat += m * stride
            stride *= nx
            m = m[..., None]
            cond = (m >= lo[:, a]) & (m < hi[:, a])
            ok = cond if ok is None else ok & cond
        src = flat[..., None] + self._base
        return np.where(ok, self._flat_data.take(np.where(ok, src, 0)), 0.0)
    def support(self) -> np.ndarray:
        """Sorted ids where some column can be nonzero; every other row of ``A`` vanishes."""
        parts = []
        for j in range(4):
            multi = self.grid.multi_index(self.store.support(self._sid[j])) + self.offsets[j]
            ok = np.all((multi >= 0) & (multi < self.grid.cells_per_axis), axis=1)
            parts.append(self.grid.flat_index(multi[ok]))
        return np.unique(np.concatenate(parts))

    def rows(self, ids) -> np.ndarray:
        return self.rows_multi(self.grid.multi_index(np.asarray(ids, dtype=np.int64)))

    def reconstruct(self, alpha, ids=None) -> np.ndarray:
        if ids is None:
            out = np.zeros(self.grid.N)
            for j in range(4):
                if alpha[j] != 0.0:
                    out += alpha[j] * self.column(j)
            return out
        return self.rows(ids) @ alpha


@dataclass(eq=False)
class RomCoeffs:
    alpha: np.ndarray
    z: tuple
    basis: RomBasis

    def reconstruct(self, ids=None) -> np.ndarray:
        return self.basis.reconstruct(self.alpha, ids)


def assemble_basis(element: ParamElement, z, table: Optional[ShiftTable], store: SnapshotStore,
                   mode: str = SHIFTED) -> RomBasis:
    """Corner snapshots of ``element``, shifted by ``floor(c_m(z, z_i) / dx)`` in shifted mode."""
    for sid in element.sample_ids:
        store[sid]
    dim = store.grid.dim
    z = (float(z[0]), float(z[1]))
    if mode == PLAIN or table is None:
        if mode == SHIFTED:
            raise ValueError("shifted mode needs a shift table")
        return RomBasis(element, np.zeros((4, dim), dtype=np.int64), store, z, np.zeros(dim, dtype=np.int64))
    if mode != SHIFTED:
        raise ValueError(f"unknown basis mode {mode!r}")
    c = table.interpolate_many(z, list(element.sample_ids) + [table.ref])
    counts = snap_counts(c, store.grid.dx)
    return RomBasis(element, counts[:4], store, z, counts[4])


def minnorm_lsq(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares solution via a truncated SVD.

    Singular values below ``max(n, k) * eps * s_max`` are treated as zero.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1:
        raise ValueError("need at least one row")
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or not s[0] > 0:
        return np.zeros(A.shape[1])
    keep = s > max(A.shape) * np.finfo(float).eps * s[0]
    return vt[keep].T @ ((u[:, keep].T @ b) / s[keep])


def compute_b(coeffs: RomCoeffs, flux, mu, dt: float, ids=None) -> np.ndarray:
    """``b = U_m + dt F(U_m)`` on ``ids`` (full mesh if None).

    ``U_m`` is only reconstructed on the stencil of ``ids``.
    """
    basis = coeffs.basis
    grid = basis.grid
    if ids is None:
        u = basis.reconstruct(coeffs.alpha)
        return u + dt * divergence(u, grid, flux, mu)
    multi = grid.multi_index(np.asarray(ids, dtype=np.int64))
    return _b_on_multi(basis, coeffs.alpha, multi, flux, mu, dt)


def _b_on_multi(basis: RomBasis, alpha, multi, flux, mu, dt) -> np.ndarray:
    st = basis.rows_multi(_stencil_multi(multi)) @ alpha
    centre = st[:, 0]
    f = stencil_divergence(centre, st[:, 1::2], st[:, 2::2], basis.grid.dx, flux, mu)
    return centre + dt * f


def init_coeffs(basis: RomBasis, u0) -> RomCoeffs:
    """Best approximation of the initial data in the span of the basis."""
    u0 = u0.values if isinstance(u0, Field) else np.asarray(u0, dtype=float)
    return RomCoeffs(minnorm_lsq(basis.full(), u0), basis.z, basis)


def rom_step(coeffs: RomCoeffs, basis_next: RomBasis, flux, mu, dt: float, ids=None) -> RomCoeffs:
    """Advance one step, minimizing the residual on ``ids`` (full mesh if None)."""
    if ids is None:
        A = basis_next.full()
        b = compute_b(coeffs, flux, mu, dt)
    else:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            raise HyperReductionError("reduced mesh is empty")
        multi = basis_next.grid.multi_index(ids)
        A = basis_next.rows_multi(multi)
        b = _b_on_multi(coeffs.basis, coeffs.alpha, multi, flux, mu, dt)
    return RomCoeffs(minnorm_lsq(A, b), basis_next.z, basis_next)


@dataclass
class ReducedModel:
    """Offline artefacts needed online: FOM setup, snapshots, shift table."""

    config: FomConfig
    store: SnapshotStore
    table: Optional[ShiftTable] = None

    @property
    def grid(self) -> CartesianGrid:
        return self.config.grid

    @property
    def param_grid(self) -> ParamGrid:
        return self.store.param_grid

    @property
    def dt(self) -> float:
        return self.config.time_step

    def basis(self, z, mode: str = SHIFTED) -> RomBasis:
        return assemble_basis(containing_element(self.param_grid, z), z, self.table, self.store, mode)


@dataclass
class RomRun:
    """Trajectory of one online run for a fixed ``mu``."""

    mu: float
    times: np.ndarray
    coeffs: list
    timings: dict
    mesh_sizes: np.ndarray
    residuals: Optional[list] = None
    diverged: bool = False

    @property
    def alphas(self) -> np.ndarray:
        return np.array([c.alpha for c in self.coeffs])

    def reconstruct(self, k: int = -1) -> np.ndarray:
        return self.coeffs[k].reconstruct()

    @property
    def online_time(self) -> float:
        return float(sum(v.sum() for v in self.timings.values()))


class _Timer:
    __slots__ = ("t",)

    def __init__(self):
        self.t = time.perf_counter()

    def lap(self) -> float:
        now = time.perf_counter()
        dt, self.t = now - self.t, now
        return dt


def run_rom(model: ReducedModel, mu: float, t_end: Optional[float] = None, mesh=None,
            mode: str = SHIFTED, keep_residuals: bool = False) -> RomRun:
    """Online phase for one parameter ``mu`` from ``t_0 = 0`` to ``t_end``.

    ``mesh`` selects the reduced mesh per step: None for the full mesh, or an
    object with ``select(z, basis) -> ids`` (see :mod:`shiftrom.hyper`).
    Per-step wall-clock time is split into ``adapt``, ``A``, ``b`` and ``ls``.
    With ``keep_residuals`` the full-mesh residual ``U_m(t_{k+1}) - b(t_k)``
    of every step is stored (full-mesh runs only).
    """
    cfg = model.config
    times = cfg.step_times()
    if t_end is None:
        t_end = times[-1]
    times = times[times <= t_end + 1e-12]
    K = len(times) - 1
    flux, grid = cfg.flux, cfg.grid
    timings = {key: np.zeros(K) for key in ("adapt", "A", "b", "ls")}
    sizes = np.zeros(K, dtype=np.int64)

    basis0 = model.basis((times[0], mu), mode)
    coeffs = [init_coeffs(basis0, cfg.initial_field(mu))]
    residuals = [] if keep_residuals else None
    diverged = False
    with np.errstate(all="ignore"):
        for k in range(K):
            tm = _Timer()
            z = (float(times[k + 1]), float(mu))
            dt = float(times[k + 1] - times[k])
            basis = model.basis(z, mode)
            if mesh is None:
                ids = None
                A = basis.full()
                timings["A"][k] = tm.lap()
                b = compute_b(coeffs[-1], flux, mu, dt)
                sizes[k] = grid.N
            else:
                a_time = tm.lap()
                ids = mesh.select(z, basis)
                timings["adapt"][k] = tm.lap()
                if len(ids) == 0:
                    raise HyperReductionError(f"reduced mesh empty at z={z}")
                multi = grid.multi_index(ids)
                A = basis.rows_multi(multi)
                timings["A"][k] = a_time + tm.lap()
                b = _b_on_multi(coeffs[-1].basis, coeffs[-1].alpha, multi, flux, mu, dt)
                sizes[k] = len(ids)
            timings["b"][k] = tm.lap()
            alpha = minnorm_lsq(A, b) if np.all(np.isfinite(b)) else np.full(4, np.nan)
            timings["ls"][k] = tm.lap()
            nxt = RomCoeffs(alpha, z, basis)
            if keep_residuals:
                full_b = b if ids is None else compute_b(coeffs[-1], flux, mu, dt)
                residuals.append(nxt.reconstruct() - full_b)
            coeffs.append(nxt)
            if not np.all(np.isfinite(alpha)):
                diverged = True
                break
    return RomRun(float(mu), times[: len(coeffs)], coeffs, timings, sizes, residuals, diverged)


def static_fit(z, basis: RomBasis, b, ids=None) -> RomCoeffs:
    """Least-squares fit of a given full-mesh vector ``b`` without time stepping.

    An empty ``ids`` yields the zero solution with a warning.
    """
    b = b.values if isinstance(b, Field) else np.asarray(b, dtype=float)
    if ids is None:
        return RomCoeffs(minnorm_lsq(basis.full(), b), tuple(z), basis)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        warnings.warn("empty reduced mesh; returning the zero solution", RuntimeWarning, stacklevel=2)
        return RomCoeffs(np.zeros(4), tuple(z), basis)
    return RomCoeffs(minnorm_lsq(basis.rows(ids), b[ids]), tuple(z), basis)


def shifted_residual_defects(model: ReducedModel, run: RomRun) -> np.ndarray:
    """Per-step ``||T[-c_m(t_{k+1}, z_ref)] Res_k - Res*_k||_inf`` for a full-mesh run.

    ``Res*_k = U~(t_{k+1}) - (Id + dt F) U~(t_k)`` where ``U~`` recombines the
    corner snapshots moved to the reference sample with the same coefficients.
    """
    if run.residuals is None:
        raise ValueError("run was made without keep_residuals")
    grid, flux, table = model.grid, model.config.flux, model.table
    dx = grid.dx

    def stationary(c: RomCoeffs) -> np.ndarray:
        sids = c.basis.element.sample_ids
        offs = snap_counts(-table.to_ref[list(sids)], dx)
        out = np.zeros(grid.N)
        for j in range(4):
            out += c.alpha[j] * shift_values(model.store[sids[j]], grid, offs[j])
        return out

    out = []
    for k, res in enumerate(run.residuals):
        nxt = run.coeffs[k + 1]
        dt = float(run.times[k + 1] - run.times[k])
        shifted = shift_values(res, grid, -nxt.basis.ref_offset)
        prev = stationary(run.coeffs[k])
        star = stationary(nxt) - (prev + dt * divergence(prev, grid, flux, run.mu))
        out.append(float(np.max(np.abs(shifted - star))))
    return np.array(out)
