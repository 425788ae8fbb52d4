"""Test cases, error and runtime metrics, and experiment orchestration.

Three benchmark problems are defined:

``advection1d``
    ``u_t + mu u_x = 0`` on ``[0, 3]`` with a box of height ``mu`` on
    ``[0.5, 1]`` as initial data.
``box2d``
    A box that moves with ``(t, mu)`` and decays like ``exp(-mu t)``; there
    is no time stepping, the full-order solution is the cell-average
    projection of the exact function.
``transport2d``
    ``u_t + cos(mu) u_x + sin(mu) u_y = 0`` on ``[-1, 1]^2`` with the
    indicator of the disc of radius 0.2 as initial data.

Every case is described by a text config file (see ``configs/``).
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, UndefinedReferenceError
from .fv import FomConfig, LinearAdvection, iterate_fom
from .grid import CartesianGrid, Field, read_field, write_field
from .hyper import (AdaptiveMesh, FixedMesh, ResidualSnapshots, interior_samples,
                    collect_residual_snapshots, load_reduced_mesh, save_reduced_mesh,
                    select_reduced_mesh, shift_residuals, time_stepping_runner)
from .rom import PLAIN, SHIFTED, ReducedModel, SnapshotStore, assemble_basis, minnorm_lsq, run_rom
from .sampling import ParamGrid, containing_element
from .shifts import ShiftTable, build_shift_table, load_shift_table, save_shift_table

__all__ = [
    "PRESETS",
    "VARIANTS",
    "TestCase",
    "ErrorReport",
    "RuntimeReport",
    "Experiment",
    "OfflineData",
    "load_case",
    "parse_config",
    "case_to_config",
    "compute_error",
    "gauss_legendre_projection",
    "build_offline",
    "save_offline",
    "load_offline",
    "run_experiment",
    "run_variants",
    "mesh_sweep",
    "emit_report",
]

PRESETS = ("test1", "test2", "test3", "test1-small", "test2-small", "test3-small")

# variant -> (basis mode, reduced mesh kind)
VARIANTS = {
    "Adp-SS": (SHIFTED, "adaptive"),
    "N-Adp-SS": (SHIFTED, "fixed"),
    "SS": (SHIFTED, None),
    "S": (PLAIN, None),
}

UNSTABLE_ERROR = 1e6

REPORT_COLUMNS = ("case", "variant", "N_x", "N_t", "N_mu", "n", "n_pct", "E", "C",
                  "C_adapt", "C_A", "C_b", "C_ls", "unstable_flag")


# -- problems ---------------------------------------------------------------

def _gauss_legendre(order: int) -> tuple:
    xi, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * xi, 0.5 * w


def gauss_legendre_projection(func: Callable[[np.ndarray], np.ndarray], grid: CartesianGrid,
                              ids=None, order: int = 5) -> np.ndarray:
    """Cell averages of ``func`` by a tensor Gauss-Legendre rule per cell.

    ``func`` maps an ``(M, dim)`` array of points to ``M`` values.
    """
    xi, w = _gauss_legendre(order)
    centres = grid.cell_centres(ids)
    mesh = np.stack(np.meshgrid(*([xi] * grid.dim), indexing="ij"), axis=-1).reshape(-1, grid.dim)
    weight = np.prod(np.stack(np.meshgrid(*([w] * grid.dim), indexing="ij"), axis=-1).reshape(-1, grid.dim),
                     axis=1)
    pts = centres[:, None, :] + grid.dx * mesh[None, :, :]
    vals = np.asarray(func(pts.reshape(-1, grid.dim)), dtype=float).reshape(len(centres), -1)
    return vals @ weight


class Problem:
    """Interface of a benchmark problem."""

    name = "problem"
    dim = 1
    static = False

    def flux(self):
        raise NotImplementedError

    def initial(self, x: np.ndarray, mu: float) -> np.ndarray:
        raise NotImplementedError

    def project(self, grid: CartesianGrid, t: float, mu: float, ids=None) -> np.ndarray:
        raise NotImplementedError


class Advection1D(Problem):
    name = "advection1d"

    def flux(self):
        return LinearAdvection(lambda mu: [mu], dim=1, label="advection1d")

    def initial(self, x, mu):
        x = x[:, 0]
        return np.where((x >= 0.5) & (x <= 1.0), mu, 0.0)


class Transport2D(Problem):
    name = "transport2d"
    dim = 2
    radius = 0.2

    def flux(self):
        return LinearAdvection(lambda mu: [math.cos(mu), math.sin(mu)], dim=2, label="transport2d")

    def initial(self, x, mu):
        return np.where(np.sum(x * x, axis=1) <= self.radius**2, 1.0, 0.0)


class MovingBox2D(Problem):
    """``exp(-mu t)`` on ``|x1 - (mu + t)| <= 0.3, |x2 - t| <= 0.3``."""

    name = "box2d"
    dim = 2
    static = True
    half_width = 0.3
    order = 5

    def centre(self, t, mu) -> tuple:
        return mu + t, t

    def exact(self, x: np.ndarray, t: float, mu: float) -> np.ndarray:
        c1, c2 = self.centre(t, mu)
        inside = (np.abs(x[:, 0] - c1) <= self.half_width) & (np.abs(x[:, 1] - c2) <= self.half_width)
        return np.where(inside, math.exp(-mu * t), 0.0)

    def _axis_fraction(self, coords: np.ndarray, dx: float, centre: float) -> np.ndarray:
        xi, w = _gauss_legendre(self.order)
        pts = coords[..., None] + dx * xi
        return (np.abs(pts - centre) <= self.half_width) @ w

    def project(self, grid, t, mu, ids=None):
        # the box is a tensor product, so the 5x5 rule factorises per axis
        c = self.centre(t, mu)
        amp = math.exp(-mu * t)
        if ids is None:
            axis = [self._axis_fraction(grid.lower[a] + grid.axis_centres(), grid.dx, c[a]) for a in range(2)]
            return amp * np.outer(axis[1], axis[0]).reshape(-1)
        centres = grid.cell_centres(np.asarray(ids, dtype=np.int64))
        f0 = self._axis_fraction(centres[:, 0], grid.dx, c[0])
        f1 = self._axis_fraction(centres[:, 1], grid.dx, c[1])
        return amp * f0 * f1


PROBLEMS = {p.name: p for p in (Advection1D, Transport2D, MovingBox2D)}


# -- cases ------------------------------------------------------------------

@dataclass(frozen=True)
class TestCase:
    """Everything needed to run one benchmark configuration."""

    label: str
    problem: str
    n_x: int
    lower: tuple
    upper: tuple
    t_range: tuple
    mu_range: tuple
    n_t: int
    n_mu: int
    m_hyp: int
    n_pct: float
    dt: Optional[str] = None
    cfl_fraction: float = 1.0
    threshold: float = 0.25
    cap: int = 20000
    seed: int = 0
    interpolation: str = "global"
    shift_mode: str = "composed"
    z_ref: Optional[int] = None
    target_mu: int = 40
    target_t: Optional[int] = None
    variants: tuple = tuple(VARIANTS)
    repeats: int = 3
    sweep_n: tuple = ()
    n: Optional[int] = None

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigurationError(f"unknown problem {self.problem!r}")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigurationError(f"unknown variant {v!r}")
        if self.n_x < 2:
            raise ConfigurationError("n_x must be at least 2")

    @property
    def spec(self) -> Problem:
        return PROBLEMS[self.problem]()

    @property
    def static(self) -> bool:
        return self.spec.static

    @property
    def grid(self) -> CartesianGrid:
        return CartesianGrid.from_bounds(self.lower, self.upper, self.n_x)

    @property
    def N(self) -> int:
        return self.n_x ** len(self.lower)

    @property
    def param_grid(self) -> ParamGrid:
        return ParamGrid(self.t_range, self.mu_range, self.n_t, self.n_mu)

    @property
    def n_reduced(self) -> int:
        """Reduced mesh size: ``n`` if set, else ``n_pct`` percent of ``N``."""
        if self.n is not None:
            return int(self.n)
        return max(1, int(round(self.n_pct / 100.0 * self.N)))

    def time_step(self) -> Optional[float]:
        if self.dt in (None, "", "cfl"):
            return None
        if self.dt == "inv_nx":
            return 1.0 / self.n_x
        return float(self.dt)

    def fom_config(self) -> FomConfig:
        if self.static:
            raise ConfigurationError(f"{self.label} has no time stepping")
        p = self.spec
        return FomConfig(self.grid, p.flux(), p.initial, self.t_range[1], self.mu_range,
                         dt=self.time_step(), cfl_fraction=self.cfl_fraction)

    def target_mus(self) -> np.ndarray:
        return np.linspace(*self.mu_range, self.target_mu)

    def target_times(self) -> np.ndarray:
        if self.target_t is None:
            return self.fom_config().step_times()
        return np.linspace(*self.t_range, self.target_t)

    def with_overrides(self, **kw) -> "TestCase":
        unknown = set(kw) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ConfigurationError(f"unknown case fields {sorted(unknown)}")
        return dataclasses.replace(self, **kw)


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


_FIELDS = {
    # (section, key): (field, parser)
    ("case", "label"): ("label", str),
    ("case", "problem"): ("problem", str),
    ("grid", "cells"): ("n_x", int),
    ("grid", "lower"): ("lower", _floats),
    ("grid", "upper"): ("upper", _floats),
    ("fv", "dt"): ("dt", lambda s: s.strip() or None),
    ("fv", "cfl_fraction"): ("cfl_fraction", float),
    ("sampling", "t_range"): ("t_range", _floats),
    ("sampling", "mu_range"): ("mu_range", _floats),
    ("sampling", "n_t"): ("n_t", int),
    ("sampling", "n_mu"): ("n_mu", int),
    ("shifts", "threshold"): ("threshold", float),
    ("shifts", "cap"): ("cap", int),
    ("shifts", "seed"): ("seed", int),
    ("shifts", "interpolation"): ("interpolation", str),
    ("shifts", "mode"): ("shift_mode", str),
    ("shifts", "z_ref"): ("z_ref", lambda s: int(s) if s.strip() else None),
    ("hyper", "m_hyp"): ("m_hyp", int),
    ("hyper", "n_pct"): ("n_pct", float),
    ("hyper", "n"): ("n", lambda s: int(s) if s.strip() else None),
    ("bench", "target_mu"): ("target_mu", int),
    ("bench", "target_t"): ("target_t", lambda s: int(s) if s.strip() else None),
    ("bench", "variants"): ("variants", lambda s: tuple(s.split())),
    ("bench", "repeats"): ("repeats", int),
    ("bench", "sweep_n"): ("sweep_n", lambda s: tuple(int(v) for v in s.split())),
}


FIELD_PARSERS = {name: parse for name, parse in _FIELDS.values()}


def parse_config(text: str) -> dict:
    """Case fields from config text with ``[section]`` headers and ``key = value`` lines."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string(text)
    out = {}
    for section in cp.sections():
        for key, value in cp.items(section):
            if (section, key) not in _FIELDS:
                raise ConfigurationError(f"unknown config key [{section}] {key}")
            name, parse = _FIELDS[(section, key)]
            try:
                out[name] = parse(value)
            except ValueError as exc:
                raise ConfigurationError(f"bad value for [{section}] {key}: {value!r}") from exc
    return out


def case_to_config(case: TestCase) -> str:
    """Config text that :func:`load_case` turns back into ``case``."""
    sections: dict = {}
    for (section, key), (name, _) in _FIELDS.items():
        value = getattr(case, name)
        if value is None:
            text = ""
        elif isinstance(value, tuple):
            text = " ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        sections.setdefault(section, []).append(f"{key} = {text}")
    if case.static:
        sections.pop("fv", None)
    return "\n".join(f"[{sec}]\n" + "\n".join(lines) + "\n" for sec, lines in sections.items())


def config_text(name: str) -> str:
    """Text of a shipped preset config."""
    if name not in PRESETS:
        raise ConfigurationError(f"no preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("shiftrom").joinpath("configs", f"{name}.cfg").read_text()


def load_case(source, **overrides) -> TestCase:
    """Case from a preset name or a config file path, with field overrides."""
    if str(source) in PRESETS:
        text = config_text(source)
    elif Path(source).is_file():
        text = Path(source).read_text()
    else:
        raise ConfigurationError(f"{source!r} is neither a preset ({', '.join(PRESETS)}) nor a file")
    values = parse_config(text)
    values.update({k: v for k, v in overrides.items() if v is not None})
    missing = {"label", "problem", "n_x", "lower", "upper", "t_range", "mu_range",
               "n_t", "n_mu", "m_hyp", "n_pct"} - set(values)
    if missing:
        raise ConfigurationError(f"config lacks {sorted(missing)}")
    return TestCase(**values)


# -- metrics ----------------------------------------------------------------

def compute_error(u_N, u_m) -> float:
    """Relative discrete L2 error ``||u_N - u_m|| / ||u_N||``."""
    a = u_N.values if isinstance(u_N, Field) else np.asarray(u_N, dtype=float)
    b = u_m.values if isinstance(u_m, Field) else np.asarray(u_m, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    ref = float(np.linalg.norm(a))
    if ref == 0.0:
        raise UndefinedReferenceError("reference solution is zero")
    with np.errstate(all="ignore"):
        err = float(np.linalg.norm(a - b)) / ref
    return err if np.isfinite(err) else math.inf


@dataclass
class ErrorReport:
    """Per-target relative errors and their maximum ``E``."""

    variant: str
    errors: np.ndarray
    diverged: int = 0

    @property
    def E(self) -> float:
        e = np.asarray(self.errors, dtype=float)
        if e.size == 0:
            return math.nan
        return math.inf if not np.all(np.isfinite(e)) else float(e.max())

    @property
    def unstable(self) -> bool:
        return self.diverged > 0 or not self.E <= UNSTABLE_ERROR


@dataclass
class RuntimeReport:
    """Median online wall time per target and the mean split over targets."""

    per_target: np.ndarray
    split: dict
    steps: int = 1

    @property
    def C(self) -> float:
        return float(np.mean(self.per_target)) if len(self.per_target) else math.nan

    @property
    def per_step(self) -> float:
        return float(sum(self.split.values())) / max(self.steps, 1)


@dataclass
class Experiment:
    case: TestCase
    variant: str
    n: int
    error: ErrorReport
    runtime: RuntimeReport

    @property
    def n_pct(self) -> float:
        return 100.0 * self.n / self.case.N

    def row(self) -> dict:
        c = self.case
        s = self.runtime.split
        return {
            "case": c.label, "variant": self.variant, "N_x": c.n_x, "N_t": c.n_t, "N_mu": c.n_mu,
            "n": self.n, "n_pct": round(self.n_pct, 6), "E": float(self.error.E),
            "C": float(self.runtime.C), "C_adapt": float(s.get("adapt", 0.0)), "C_A": float(s.get("A", 0.0)),
            "C_b": float(s.get("b", 0.0)), "C_ls": float(s.get("ls", 0.0)), "unstable_flag": int(self.error.unstable),
        }


# -- offline ----------------------------------------------------------------

@dataclass
class OfflineData:
    """Snapshots, shift table and (lazily) residual snapshots of a case."""

    case: TestCase
    store: SnapshotStore
    table: ShiftTable
    model: Optional[ReducedModel] = None
    timings: dict = field(default_factory=dict)
    _residuals: dict = field(default_factory=dict, repr=False)
    _meshes: dict = field(default_factory=dict, repr=False)

    @property
    def grid(self) -> CartesianGrid:
        return self.store.grid

    def residuals(self, shifted: bool) -> ResidualSnapshots:
        if False not in self._residuals:
            t0 = time.perf_counter()
            if self.case.static:
                self._residuals[False] = _static_residuals(self)
            else:
                mus = interior_samples(*self.case.mu_range, self.case.m_hyp)
                self._residuals[False] = collect_residual_snapshots(mus, time_stepping_runner(self.model))
            self.timings["residuals"] = time.perf_counter() - t0
        if shifted and True not in self._residuals:
            self._residuals[True] = shift_residuals(self._residuals[False], self.table, self.grid)
        return self._residuals[shifted]

    def reduced_mesh(self, n: int, adaptive: bool) -> np.ndarray:
        """``E_off`` of size ``n``: from shifted residuals when adaptive."""
        key = (int(n), bool(adaptive))
        if key not in self._meshes:
            self._meshes[key] = select_reduced_mesh(self.residuals(adaptive), n)
        return self._meshes[key]

    def mesh(self, n: int, kind: Optional[str]):
        if kind is None:
            return None
        ids = self.reduced_mesh(n, kind == "adaptive")
        return AdaptiveMesh(ids, self.grid, self.table) if kind == "adaptive" else FixedMesh(ids)

    def basis(self, z, mode: str = SHIFTED):
        return assemble_basis(containing_element(self.store.param_grid, z), z, self.table, self.store, mode)


def _static_snapshots(case: TestCase) -> SnapshotStore:
    grid, pg, p = case.grid, case.param_grid, case.spec
    data = np.array([p.project(grid, *pg.sample(i)) for i in range(pg.m)])
    return SnapshotStore(grid, pg, data)


def _static_residuals(off: OfflineData) -> ResidualSnapshots:
    """Full-mesh fit residuals ``A alpha - b`` for ``m_hyp`` interior ``mu`` times every target time.

    The columns run over ``mu`` first and time second, like the residuals of
    a time-stepping run. Interior ``t`` samples alone would often sit on
    whole-cell shifts, where the fit is exact and the residual vanishes.
    """
    case, grid, p = off.case, off.grid, off.case.spec
    cols, params = [], []
    for mu in interior_samples(*case.mu_range, case.m_hyp):
        for t in case.target_times():
            basis = off.basis((t, mu))
            b = p.project(grid, t, mu)
            A = basis.full()
            alpha = minnorm_lsq(*_nonzero_rows(A, b))
            cols.append(A @ alpha - b)
            params.append((float(t), float(mu)))
    return ResidualSnapshots.from_columns(cols, params)


def build_offline(case: TestCase) -> OfflineData:
    """Snapshots and shift table (residual snapshots are built on first use)."""
    t0 = time.perf_counter()
    model = None
    if case.static:
        store = _static_snapshots(case)
    else:
        store = SnapshotStore.from_fom(case.fom_config(), case.param_grid)
    t1 = time.perf_counter()
    table = build_shift_table(store, case.param_grid, case.grid, ref=case.z_ref, mode=case.shift_mode,
                              threshold=case.threshold, cap=case.cap, seed=case.seed,
                              interpolation=case.interpolation)
    t2 = time.perf_counter()
    if not case.static:
        model = ReducedModel(case.fom_config(), store, table)
    return OfflineData(case, store, table, model, {"snapshots": t1 - t0, "shifts": t2 - t1})


def save_offline(off: OfflineData, directory, meshes: Sequence[int] = ()) -> Path:
    """Write the case config, snapshots, shift table and ``E_off`` lists of sizes ``meshes``."""
    d = Path(directory)
    (d / "snapshots").mkdir(parents=True, exist_ok=True)
    (d / "case.cfg").write_text(case_to_config(off.case))
    for i in range(len(off.store)):
        write_field(d / "snapshots" / f"snapshot_{i:04d}.bin", off.store.field(i))
    save_shift_table(d / "shift_table.txt", off.table)
    for n in meshes:
        for adaptive in (True, False):
            S = off.residuals(adaptive)
            name = f"e_off_{'adaptive' if adaptive else 'fixed'}_{int(n)}.txt"
            save_reduced_mesh(d / name, off.reduced_mesh(n, adaptive), off.table.z_ref, S.digest())
    return d


def load_offline(directory, case: Optional[TestCase] = None) -> OfflineData:
    """Inverse of :func:`save_offline`; ``case`` replaces the stored config if given."""
    d = Path(directory)
    case = case or load_case(d / "case.cfg")
    grid, pg = case.grid, case.param_grid
    files = sorted((d / "snapshots").glob("snapshot_*.bin"))
    if len(files) != pg.m:
        raise ConfigurationError(f"{d}: found {len(files)} snapshots, expected {pg.m}")
    store = SnapshotStore(grid, pg, np.array([read_field(f, grid).values for f in files]))
    table = load_shift_table(d / "shift_table.txt")
    model = None if case.static else ReducedModel(case.fom_config(), store, table)
    off = OfflineData(case, store, table, model)
    for f in d.glob("e_off_*_*.txt"):
        _, _, kind, n = f.stem.split("_")
        off._meshes[(int(n), kind == "adaptive")] = load_reduced_mesh(f).ids
    return off


# -- online -----------------------------------------------------------------

def _nonzero_rows(A: np.ndarray, b: np.ndarray) -> tuple:
    # rows that vanish in A and b do not change the least-squares solution
    keep = np.any(A != 0.0, axis=1) | (b != 0.0)
    if not keep.any():
        keep[0] = True
    return A[keep], b[keep]


_SPLIT = ("adapt", "A", "b", "ls")


def _time_stepping(off: OfflineData, variant: str, n: int, repeats: int) -> tuple:
    case, model = off.case, off.model
    mode, kind = VARIANTS[variant]
    mesh = off.mesh(n, kind)
    cfg = model.config
    mus = case.target_mus()
    errors = np.zeros((len(mus), len(cfg.step_times())))
    walls, splits = np.zeros(len(mus)), np.zeros((len(mus), len(_SPLIT)))
    diverged, steps = 0, 0
    for j, mu in enumerate(mus):
        w, s = [], []
        for r in range(max(repeats, 1)):
            t0 = time.perf_counter()
            run = run_rom(model, mu, mesh=mesh, mode=mode)
            w.append(time.perf_counter() - t0)
            s.append([run.timings[key].sum() for key in _SPLIT])
            if r == 0:
                first = run
        walls[j] = np.median(w)
        splits[j] = np.median(np.array(s), axis=0)
        steps = max(steps, len(first.times) - 1)
        diverged += int(first.diverged)
        for k, _, u in iterate_fom(cfg, mu):
            if k < len(first.coeffs):
                errors[j, k] = compute_error(u, first.coeffs[k].reconstruct())
            else:
                errors[j, k:] = math.inf
                break
    split = dict(zip(_SPLIT, splits.mean(axis=0)))
    return ErrorReport(variant, errors, diverged), RuntimeReport(walls, split, steps)


def _static_one(off: OfflineData, mode: str, mesh, z) -> tuple:
    """One static fit at ``z``: ``(error, mesh size, split times)``.

    The full-mesh fit only forms rows inside the support of ``A`` or ``b``;
    the dropped rows are zero and do not change the solution.
    """
    grid, p = off.grid, off.case.spec
    t, mu = z
    t0 = time.perf_counter()
    basis = off.basis(z, mode)
    t1 = time.perf_counter()
    if mesh is None:
        t2 = t1
        b_full = p.project(grid, t, mu)
        t3 = time.perf_counter()
        rows = np.union1d(basis.support(), np.flatnonzero(b_full))
        A = basis.rows(rows)
        t4 = time.perf_counter()
        b = b_full[rows]
        alpha = minnorm_lsq(A, b) if len(rows) else np.zeros(4)
        t5 = time.perf_counter()
        split = [0.0, (t1 - t0) + (t4 - t3), t3 - t2, t5 - t4]
        ref = float(np.linalg.norm(b_full))
        if ref == 0.0:
            raise UndefinedReferenceError(f"reference solution is zero at z={z}")
        return float(np.linalg.norm(b - A @ alpha)) / ref, grid.N, split
    ids = mesh.select(z, basis)
    t2 = time.perf_counter()
    A = basis.rows(ids)
    t3 = time.perf_counter()
    b = p.project(grid, t, mu, ids)
    t4 = time.perf_counter()
    alpha = minnorm_lsq(A, b) if len(ids) else np.zeros(4)
    t5 = time.perf_counter()
    split = [t2 - t1, (t1 - t0) + (t3 - t2), t4 - t3, t5 - t4]
    u_N = p.project(grid, t, mu)
    sup = basis.support()
    diff2 = float(np.sum(u_N * u_N)) - float(np.sum(u_N[sup] ** 2))
    diff2 += float(np.sum((u_N[sup] - basis.rows(sup) @ alpha) ** 2))
    ref = float(np.linalg.norm(u_N))
    if ref == 0.0:
        raise UndefinedReferenceError(f"reference solution is zero at z={z}")
    with np.errstate(all="ignore"):
        err = math.sqrt(max(diff2, 0.0)) / ref
    return (err if np.isfinite(err) else math.inf), len(ids), split


def _static(off: OfflineData, variant: str, n: int, repeats: int) -> tuple:
    case = off.case
    mode, kind = VARIANTS[variant]
    mesh = off.mesh(n, kind)
    ts, mus = case.target_times(), case.target_mus()
    errors = np.zeros((len(mus), len(ts)))
    walls = np.zeros(errors.size)
    splits = np.zeros((errors.size, len(_SPLIT)))
    idx = 0
    for j, mu in enumerate(mus):
        for i, t in enumerate(ts):
            z = (float(t), float(mu))
            runs = [_static_one(off, mode, mesh, z) for _ in range(max(repeats, 1))]
            errors[j, i] = runs[0][0]
            s = np.array([r[2] for r in runs])
            walls[idx] = np.median(s.sum(axis=1))
            splits[idx] = np.median(s, axis=0)
            idx += 1
    split = dict(zip(_SPLIT, splits.mean(axis=0)))
    return ErrorReport(variant, errors, 0), RuntimeReport(walls, split, 1)


def static_error(off: OfflineData, variant: str, z, n: int) -> tuple:
    """Relative error of one static fit at ``z``; returns ``(error, mesh size)``."""
    mode, kind = VARIANTS[variant]
    err, size, _ = _static_one(off, mode, off.mesh(n, kind), (float(z[0]), float(z[1])))
    return err, size


def run_experiment(case: TestCase, variant: str, overrides: Optional[dict] = None,
                   offline: Optional[OfflineData] = None, repeats: Optional[int] = None) -> Experiment:
    """Offline (unless given) then online over the target set for one variant.

    Unstable runs are reported through :attr:`ErrorReport.unstable`, not raised.
    """
    if overrides:
        case = case.with_overrides(**overrides)
    if variant not in VARIANTS:
        raise ConfigurationError(f"unknown variant {variant!r}")
    if offline is None:
        offline = build_offline(case)
    elif offline.case.n_reduced != case.n_reduced:
        offline = dataclasses.replace(offline, case=case)
    repeats = case.repeats if repeats is None else repeats
    kind = VARIANTS[variant][1]
    n = case.n_reduced if kind else case.N
    fn = _static if case.static else _time_stepping
    err, rt = fn(offline, variant, n, repeats)
    return Experiment(case, variant, n, err, rt)


def run_variants(case: TestCase, variants: Optional[Sequence[str]] = None, repeats: Optional[int] = None,
                 offline: Optional[OfflineData] = None) -> list:
    """One experiment per variant sharing a single offline phase."""
    offline = offline or build_offline(case)
    return [run_experiment(case, v, offline=offline, repeats=repeats) for v in (variants or case.variants)]


def mesh_sweep(case: TestCase, sizes: Optional[Sequence[int]] = None,
               variants: Sequence[str] = ("Adp-SS", "N-Adp-SS"), repeats: Optional[int] = None,
               offline: Optional[OfflineData] = None) -> list:
    """Hyper-reduced variants at several reduced mesh sizes."""
    sizes = sizes or case.sweep_n
    if not sizes:
        raise ConfigurationError("no reduced mesh sizes to sweep")
    offline = offline or build_offline(case)
    out = []
    for n in sizes:
        c = case.with_overrides(n=int(n))
        for v in variants:
            out.append(run_experiment(c, v, offline=offline, repeats=repeats))
    return out


# -- reports ----------------------------------------------------------------

def _write_rows(path: Path, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def emit_report(reports: Sequence[Experiment], path) -> list:
    """Write the summary CSV plus error-vs-n and error-vs-runtime plot data.

    Returns the written paths. The plot files share the summary schema and
    are named ``<stem>_error_vs_n.csv`` and ``<stem>_error_vs_runtime.csv``.
    """
    if not reports:
        raise ValueError("no reports to write")
    path = Path(path)
    rows = [r.row() for r in reports]
    _write_rows(path, rows)
    by_n = sorted(rows, key=lambda r: (r["case"], r["variant"], r["n"]))
    by_c = sorted(rows, key=lambda r: (r["case"], r["variant"], r["C"]))
    p_n = path.with_name(path.stem + "_error_vs_n.csv")
    p_c = path.with_name(path.stem + "_error_vs_runtime.csv")
    _write_rows(p_n, by_n)
    _write_rows(p_c, by_c)
    return [path, p_n, p_c]


def read_report(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
