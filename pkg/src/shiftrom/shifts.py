"""Offline shift calibration and online shift interpolation.

A shift ``c(z_j, z_i)`` moves the snapshot at ``z_i`` onto the one at
``z_j``: ``u(x, z_j) ~ u(x - c(z_j, z_i), z_i)``. Shifts are calibrated by
enumerating candidate offsets that match detected discontinuities and
picking the one with the smallest L2 misfit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .errors import ConfigurationError, ParameterDomainError
from .grid import CartesianGrid, Field, shift_values
from .sampling import ParamGrid

__all__ = [
    "CalibrationWarning",
    "ShiftCalibration",
    "ShiftTable",
    "detect_discontinuity",
    "candidate_offsets",
    "shift_misfits",
    "calibrate_shift",
    "calibrate_shift_report",
    "build_shift_table",
    "barycentric_weights",
    "lagrange_weights",
    "interpolate_shift",
    "save_shift_table",
    "load_shift_table",
]

RANGE_FLOOR = 1e-12
DEFAULT_THRESHOLD = 0.25
DEFAULT_CAP = 20000
# above this many candidate-cell products the misfits go through FFT correlation
_DIRECT_LIMIT = 2_000_000


class CalibrationWarning(UserWarning):
    """Calibration fell back to a zero shift."""


def detect_discontinuity(u: Field, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Cells whose largest jump to a face neighbour exceeds ``threshold * range(u)``.

    Returns sorted cell ids; empty when the field is (numerically) constant.
    """
    if not 0 < threshold < 1:
        raise ConfigurationError("threshold must lie in (0, 1)")
    grid = u.grid
    arr = u.as_array()
    rng = float(arr.max() - arr.min())
    if rng < RANGE_FLOOR:
        return np.empty(0, dtype=np.int64)
    jump = np.zeros_like(arr)
    for ax in range(grid.dim):
        d = np.abs(np.diff(arr, axis=ax))
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        jump[tuple(lo)] = np.maximum(jump[tuple(lo)], d)
        jump[tuple(hi)] = np.maximum(jump[tuple(hi)], d)
    return np.flatnonzero(jump.reshape(-1) > threshold * rng)


def _encode(offsets: np.ndarray, nx: int) -> np.ndarray:
    base = 2 * nx - 1
    code = np.zeros(offsets.shape[0], dtype=np.int64)
    for a in range(offsets.shape[1] - 1, -1, -1):
        code = code * base + (offsets[:, a] + nx - 1)
    return code


def _decode(codes: np.ndarray, nx: int, dim: int) -> np.ndarray:
    base = 2 * nx - 1
    out = np.empty((codes.size, dim), dtype=np.int64)
    rest = codes.copy()
    for a in range(dim):
        out[:, a] = rest % base - (nx - 1)
        rest //= base
    return out


def candidate_offsets(grid: CartesianGrid, d_from: np.ndarray, d_to: np.ndarray,
                      cap: int = DEFAULT_CAP, seed: int = 0) -> np.ndarray:
    """Whole-cell offsets ``centre(x_to) - centre(x_from)`` over both discontinuity sets.

    Duplicates are merged and the zero offset is always included. When more
    than ``cap`` distinct offsets remain, the ones produced by the most
    cell pairs are kept (ties ordered by a seeded permutation).
    """
    nx = grid.cells_per_axis
    m_to = grid.multi_index(d_to)
    m_from = grid.multi_index(d_from)
    rng = np.random.default_rng(seed)
    limit = 4_000_000
    if len(m_to) * len(m_from) > limit:
        keep = int(math.sqrt(limit))
        if len(m_to) > keep:
            m_to = m_to[np.sort(rng.choice(len(m_to), keep, replace=False))]
        if len(m_from) > keep:
            m_from = m_from[np.sort(rng.choice(len(m_from), keep, replace=False))]
    diffs = (m_to[:, None, :] - m_from[None, :, :]).reshape(-1, grid.dim)
    codes, counts = np.unique(_encode(diffs, nx), return_counts=True)
    zero = _encode(np.zeros((1, grid.dim), dtype=np.int64), nx)[0]
    if codes.size + 1 > cap:
        order = np.lexsort((rng.permutation(codes.size), -counts))
        codes = codes[order[: max(cap - 1, 0)]]
    codes = np.union1d(codes, [zero])
    return _decode(codes, nx, grid.dim)


def _direct_misfits(a: np.ndarray, b: np.ndarray, grid: CartesianGrid, offsets: np.ndarray) -> np.ndarray:
    return np.array([np.sum((shift_values(a, grid, o) - b) ** 2) for o in offsets])


def _fft_misfits(a: np.ndarray, b: np.ndarray, grid: CartesianGrid, offsets: np.ndarray) -> np.ndarray:
    A = a.reshape(grid.shape)
    B = b.reshape(grid.shape)
    flip = tuple(slice(None, None, -1) for _ in range(grid.dim))
    cross = fftconvolve(B, A[flip], mode="full")
    inside = fftconvolve(np.ones_like(B), (A * A)[flip], mode="full")
    nx = grid.cells_per_axis
    # numpy axes run opposite to spatial axes
    idx = tuple(offsets[:, grid.dim - 1 - ax] + nx - 1 for ax in range(grid.dim))
    return inside[idx] - 2.0 * cross[idx] + np.sum(B * B)


def shift_misfits(a: np.ndarray, b: np.ndarray, grid: CartesianGrid, offsets: np.ndarray,
                  method: str = "auto") -> np.ndarray:
    """Squared discrete misfit ``sum((T[o] a - b)**2)`` for each whole-cell offset ``o``."""
    offsets = np.asarray(offsets, dtype=np.int64).reshape(-1, grid.dim)
    if method == "auto":
        method = "direct" if len(offsets) * grid.N <= _DIRECT_LIMIT else "fft"
    if method == "direct":
        return _direct_misfits(a, b, grid, offsets)
    if method == "fft":
        return _fft_misfits(a, b, grid, offsets)
    raise ValueError(f"unknown method {method!r}")


@dataclass
class ShiftCalibration:
    shift: np.ndarray
    offset: tuple
    misfit: float
    n_candidates: int
    degenerate: bool = False


def calibrate_shift_report(u_from: Field, u_to: Field, threshold: float = DEFAULT_THRESHOLD,
                           cap: int = DEFAULT_CAP, seed: int = 0, method: str = "auto") -> ShiftCalibration:
    """Full result of :func:`calibrate_shift`."""
    grid = u_from.grid
    if u_to.grid != grid:
        raise ValueError("fields live on different grids")
    d_from = detect_discontinuity(u_from, threshold)
    d_to = detect_discontinuity(u_to, threshold)
    a, b = u_from.values, u_to.values
    if d_from.size == 0 or d_to.size == 0:
        warnings.warn("empty discontinuity set; using zero shift", CalibrationWarning, stacklevel=3)
        zero = np.zeros(grid.dim)
        return ShiftCalibration(zero, (0,) * grid.dim, float(np.sum((a - b) ** 2)), 1, True)
    offsets = candidate_offsets(grid, d_from, d_to, cap, seed)
    mis = shift_misfits(a, b, grid, offsets, method)
    scale = float(np.sum(a * a) + np.sum(b * b))
    tol = 1e-9 * scale + 1e-300
    near = np.flatnonzero(mis <= mis.min() + tol)
    if len(near) > 1 or method != "direct":
        # exact re-evaluation removes FFT round-off before tie-breaking
        exact = _direct_misfits(a, b, grid, offsets[near])
        keep = exact <= exact.min() + 1e-12 * scale
        near = near[keep]
        mis[near] = exact[keep]
    cand = offsets[near]
    # smaller shift first, then lexicographic on (axis 0, axis 1, ...)
    keys = [cand[:, a] for a in range(grid.dim - 1, -1, -1)] + [np.sum(cand * cand, axis=1)]
    best = near[np.lexsort(keys)[0]]
    off = offsets[best]
    return ShiftCalibration(off * grid.dx, tuple(int(o) for o in off), float(mis[best]), len(offsets))


def calibrate_shift(u_from: Field, u_to: Field, threshold: float = DEFAULT_THRESHOLD,
                    cap: int = DEFAULT_CAP, seed: int = 0) -> np.ndarray:
    """Physical shift ``c`` minimising ``||T[c] u_from - u_to||`` over matched discontinuities."""
    return calibrate_shift_report(u_from, u_to, threshold, cap, seed).shift


# -- tables ---------------------------------------------------------------

@dataclass
class ShiftTable:
    """Calibrated shifts between parameter samples.

    ``to_ref[j]`` holds ``c(z_j, z_ref)``. In ``composed`` mode cross terms
    follow from additivity, ``c(z_j, z_i) = c(z_j, z_ref) - c(z_i, z_ref)``;
    ``pairwise`` mode stores every ``c(z_j, z_i)`` in ``pairs[j, i]``.
    """

    param_grid: ParamGrid
    ref: int
    to_ref: np.ndarray
    mode: str = "composed"
    pairs: Optional[np.ndarray] = None
    interpolation: str = "global"
    additivity_defect: Optional[float] = None
    degenerate: list = field(default_factory=list)

    def __post_init__(self):
        self.to_ref = np.atleast_2d(np.asarray(self.to_ref, dtype=float))
        if self.mode not in ("composed", "pairwise"):
            raise ConfigurationError(f"unknown shift table mode {self.mode!r}")
        if self.interpolation not in ("global", "bilinear"):
            raise ConfigurationError(f"unknown interpolation {self.interpolation!r}")
        if self.mode == "pairwise" and self.pairs is None:
            raise ConfigurationError("pairwise table needs the pair array")

    @property
    def dim(self) -> int:
        return self.to_ref.shape[1]

    @property
    def z_ref(self) -> tuple:
        return self.param_grid.sample(self.ref)

    def shift(self, j: int, i: int) -> np.ndarray:
        """``c(z_j, z_i)``."""
        if self.mode == "pairwise":
            return self.pairs[j, i]
        return self.to_ref[j] - self.to_ref[i]

    def column(self, i: int) -> np.ndarray:
        """``c(., z_i)`` at every sample, shape ``(m, dim)``."""
        if self.mode == "pairwise":
            return self.pairs[:, i]
        return self.to_ref - self.to_ref[i]

    def weights(self, z) -> np.ndarray:
        return lagrange_weights(self.param_grid, z, self.interpolation)

    def interpolate_many(self, z, targets: Sequence[int]) -> np.ndarray:
        """``c_m(z, z_i)`` for each sample id in ``targets``, shape ``(len, dim)``."""
        w = self.weights(z)
        if self.mode == "pairwise":
            return np.stack([w @ self.pairs[:, i] for i in targets])
        base = w @ self.to_ref
        return base - self.to_ref[list(targets)]


def barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def _axis_weights(nodes: np.ndarray, bary: np.ndarray, x: float) -> np.ndarray:
    d = x - nodes
    hit = np.flatnonzero(np.abs(d) <= 1e-14 * max(1.0, abs(nodes[0]), abs(nodes[-1])))
    if hit.size:
        w = np.zeros_like(nodes)
        w[hit[0]] = 1.0
        return w
    lam = bary / d
    return lam / lam.sum()


def _hat_weights(nodes: np.ndarray, x: float, i: int) -> np.ndarray:
    w = np.zeros_like(nodes)
    s = (x - nodes[i]) / (nodes[i + 1] - nodes[i])
    w[i], w[i + 1] = 1.0 - s, s
    return w


def lagrange_weights(pg: ParamGrid, z, interpolation: str = "global") -> np.ndarray:
    """Weights ``w`` over all samples with ``f(z) ~ sum_j w_j f(z_j)``.

    ``global`` is tensor-product Lagrange through every node (barycentric
    form); ``bilinear`` only uses the corners of the containing element.
    """
    t, mu = float(z[0]), float(z[1])
    if not pg.contains((t, mu)):
        raise ParameterDomainError(f"parameter {(t, mu)} outside the sampled domain")
    if interpolation == "global":
        wt = _axis_weights(pg.t_samples, pg.t_weights, t)
        wm = _axis_weights(pg.mu_samples, pg.mu_weights, mu)
    else:
        i_t, i_mu = pg.element_index((t, mu))
        wt = _hat_weights(pg.t_samples, t, i_t)
        wm = _hat_weights(pg.mu_samples, mu, i_mu)
    # sample index runs t-fastest
    return np.outer(wm, wt).reshape(-1)


def interpolate_shift(table: ShiftTable, z, against: int) -> np.ndarray:
    """``c_m(z, z_i)`` by Lagrange interpolation of ``z_j -> c(z_j, z_i)``; not snapped."""
    return table.interpolate_many(z, [against])[0]


def build_shift_table(snapshots, param_grid: ParamGrid, grid: CartesianGrid, ref: Optional[int] = None,
                      mode: str = "composed", threshold: float = DEFAULT_THRESHOLD, cap: int = DEFAULT_CAP,
                      seed: int = 0, interpolation: str = "global", validate: bool = True) -> ShiftTable:
    """Calibrate shifts between all samples.

    ``snapshots`` is indexable by sample id and yields flat value vectors or
    :class:`Field` objects. ``ref`` defaults to the sample nearest the
    centre of the parameter domain.
    """
    m = param_grid.m
    if ref is None:
        ref = param_grid.centroid_sample()

    def fld(i):
        s = snapshots[i]
        return s if isinstance(s, Field) else Field(grid, s)

    degenerate = []

    def cal(j, i):
        # c(z_j, z_i): moves snapshot i onto snapshot j
        if j == i:
            return np.zeros(grid.dim)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", CalibrationWarning)
            rep = calibrate_shift_report(fld(i), fld(j), threshold, cap, seed)
        if rep.degenerate or caught:
            degenerate.append((j, i))
        return rep.shift

    if mode == "pairwise":
        pairs = np.zeros((m, m, grid.dim))
        for j in range(m):
            for i in range(m):
                pairs[j, i] = cal(j, i)
        return ShiftTable(param_grid, ref, pairs[:, ref].copy(), "pairwise", pairs, interpolation,
                          degenerate=degenerate)
    if mode != "composed":
        raise ConfigurationError(f"unknown shift table mode {mode!r}")
    to_ref = np.array([cal(j, ref) for j in range(m)]).reshape(m, grid.dim)
    defect = None
    if validate and m > 1:
        rng = np.random.default_rng(seed)
        n_check = math.ceil(m / 4)
        defect = 0.0
        for _ in range(n_check):
            j, i = rng.choice(m, 2, replace=False)
            direct = cal(int(j), int(i))
            defect = max(defect, float(np.max(np.abs(direct - (to_ref[j] - to_ref[i])))))
    return ShiftTable(param_grid, ref, to_ref, "composed", None, interpolation, defect, degenerate)


def save_shift_table(path, table: ShiftTable) -> None:
    t_ref, mu_ref = table.z_ref
    pg = table.param_grid
    lines = [
        "# shift table",
        f"# z_ref = {t_ref!r} {mu_ref!r}",
        f"# ref_index = {table.ref}",
        f"# mode = {table.mode}",
        f"# interpolation = {table.interpolation}",
        f"# dim = {table.dim}",
        f"# t_range = {pg.t_range[0]!r} {pg.t_range[1]!r}",
        f"# mu_range = {pg.mu_range[0]!r} {pg.mu_range[1]!r}",
        f"# n_t = {pg.n_t}",
        f"# n_mu = {pg.n_mu}",
    ]
    if table.additivity_defect is not None:
        lines.append(f"# additivity_defect = {table.additivity_defect!r}")
    for j, (t, mu) in enumerate(pg.samples):
        lines.append(" ".join(repr(float(v)) for v in (t, mu, *table.to_ref[j])))
    if table.mode == "pairwise":
        lines.append("# pairwise")
        m = pg.m
        for j in range(m):
            for i in range(m):
                lines.append(f"{j} {i} " + " ".join(repr(float(v)) for v in table.pairs[j, i]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_shift_table(path) -> ShiftTable:
    header, rows, pair_rows = {}, [], []
    in_pairs = False
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body == "pairwise":
                in_pairs = True
            elif "=" in body:
                key, _, value = body.partition("=")
                header[key.strip()] = value.strip()
            continue
        (pair_rows if in_pairs else rows).append([float(v) for v in line.split()])
    tr = [float(v) for v in header["t_range"].split()]
    mr = [float(v) for v in header["mu_range"].split()]
    pg = ParamGrid(tuple(tr), tuple(mr), int(header["n_t"]), int(header["n_mu"]))
    dim = int(header["dim"])
    to_ref = np.array(rows)[:, 2:2 + dim]
    pairs = None
    if header["mode"] == "pairwise":
        pairs = np.zeros((pg.m, pg.m, dim))
        for r in pair_rows:
            pairs[int(r[0]), int(r[1])] = r[2:2 + dim]
    defect = float(header["additivity_defect"]) if "additivity_defect" in header else None
    return ShiftTable(pg, int(header["ref_index"]), to_ref, header["mode"], pairs,
                      header.get("interpolation", "global"), defect)
