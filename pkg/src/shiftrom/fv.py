"""First-order finite-volume full-order model.

Explicit Euler in time, local Lax-Friedrichs (LLF) numerical flux in space,
zero ghost cells on every boundary face. ``F(U)`` denotes the discrete flux
divergence so that one step reads ``U_next = U + dt * F(U)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DegenerateFluxError, HaloError
from .grid import CartesianGrid, Field, read_field, write_field

__all__ = [
    "FluxModel",
    "LinearAdvection",
    "Burgers",
    "FomConfig",
    "Trajectory",
    "cfl_dt",
    "llf_flux",
    "apply_F",
    "divergence",
    "stencil_divergence",
    "fom_step",
    "iterate_fom",
    "run_fom",
    "save_trajectory",
    "load_trajectory",
]


class FluxModel:
    """Scalar flux ``f(u, mu)`` with one component per spatial axis.

    Subclasses implement :meth:`flux`, :meth:`derivative` and
    :meth:`derivative_bound`.
    """

    label = "flux"
    #: ``F`` commutes with whole-cell shifts (no explicit x dependence)
    translation_invariant = True

    def __init__(self, dim: int):
        self.dim = dim

    def flux(self, u, mu, axis: int):
        raise NotImplementedError

    def derivative(self, u, mu, axis: int):
        raise NotImplementedError

    def derivative_bound(self, mu) -> np.ndarray:
        """Upper bound of ``|df/du|`` per axis over the solution range."""
        raise NotImplementedError

    def sup_derivative(self, mu_range: Sequence[float], samples: int = 2001) -> float:
        """Largest per-axis bound over ``mu_range`` (sampled, endpoints included)."""
        lo, hi = float(mu_range[0]), float(mu_range[-1])
        mus = np.linspace(lo, hi, samples) if hi > lo else np.array([lo])
        return float(max(np.max(self.derivative_bound(m)) for m in mus))


class LinearAdvection(FluxModel):
    """``f_a(u, mu) = v_a(mu) * u`` with a parameter-dependent velocity."""

    def __init__(self, velocity: Callable[[float], Sequence[float]], dim: int = 1, label: str = "linear"):
        super().__init__(dim)
        self.velocity = velocity
        self.label = label

    def _v(self, mu) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.velocity(mu), dtype=float))

    def flux(self, u, mu, axis):
        return self._v(mu)[axis] * u

    def derivative(self, u, mu, axis):
        return np.full_like(np.asarray(u, dtype=float), self._v(mu)[axis])

    def derivative_bound(self, mu):
        return np.abs(self._v(mu))


class Burgers(FluxModel):
    """``f(u) = u**2 / 2`` on every axis; bound uses ``u_max``."""

    label = "burgers"

    def __init__(self, dim: int = 1, u_max: float = 1.0):
        super().__init__(dim)
        self.u_max = u_max

    def flux(self, u, mu, axis):
        return 0.5 * np.asarray(u) ** 2

    def derivative(self, u, mu, axis):
        return np.asarray(u, dtype=float)

    def derivative_bound(self, mu):
        return np.full(self.dim, abs(self.u_max))


def llf_flux(flux: FluxModel, mu, axis: int, u_left, u_right):
    """Local Lax-Friedrichs flux across a face normal to ``axis``."""
    if isinstance(flux, LinearAdvection):
        a = flux._v(mu)[axis]
        return 0.5 * a * (u_left + u_right) - 0.5 * abs(a) * (u_right - u_left)
    lam = np.maximum(np.abs(flux.derivative(u_left, mu, axis)), np.abs(flux.derivative(u_right, mu, axis)))
    return 0.5 * (flux.flux(u_left, mu, axis) + flux.flux(u_right, mu, axis)) - 0.5 * lam * (u_right - u_left)


def cfl_dt(grid: CartesianGrid, flux: FluxModel, mu_range: Sequence[float], fraction: float = 1.0) -> float:
    """Largest stable step ``fraction * dx / (2 sup|f'|)``."""
    if not 0 < fraction <= 1:
        raise ConfigurationError("CFL fraction must lie in (0, 1]")
    bound = flux.sup_derivative(mu_range)
    if not bound > 0:
        raise DegenerateFluxError("flux derivative bound is zero")
    dt = fraction * grid.dx / (2.0 * bound)
    if not math.isfinite(dt):
        raise DegenerateFluxError(f"flux derivative bound {bound!r} is too small for a finite step")
    return dt


def divergence(values: np.ndarray, grid: CartesianGrid, flux: FluxModel, mu) -> np.ndarray:
    """``F(U)`` on the whole mesh for a flat value vector."""
    arr = np.asarray(values, dtype=float).reshape(grid.shape)
    out = np.zeros_like(arr)
    for a in range(grid.dim):
        ax = grid.np_axis(a)
        pad = [(0, 0)] * grid.dim
        pad[ax] = (1, 1)
        p = np.pad(arr, pad)
        h = llf_flux(flux, mu, a, p[_along(grid.dim, ax, slice(0, -1))], p[_along(grid.dim, ax, slice(1, None))])
        out -= h[_along(grid.dim, ax, slice(1, None))] - h[_along(grid.dim, ax, slice(0, -1))]
    return (out / grid.dx).reshape(-1)


def _along(ndim: int, ax: int, s: slice) -> tuple:
    idx = [slice(None)] * ndim
    idx[ax] = s
    return tuple(idx)


def stencil_divergence(centre: np.ndarray, lower: np.ndarray, upper: np.ndarray, dx: float,
                       flux: FluxModel, mu) -> np.ndarray:
    """``F`` from stencil values: ``centre`` (n,), ``lower``/``upper`` (n, dim)."""
    out = np.zeros_like(centre)
    for a in range(lower.shape[1]):
        out -= llf_flux(flux, mu, a, centre, upper[:, a]) - llf_flux(flux, mu, a, lower[:, a], centre)
    return out / dx


def apply_F(u, flux: FluxModel, mu, ids=None, grid: Optional[CartesianGrid] = None) -> np.ndarray:
    """Evaluate ``F`` on the cells ``ids`` (every cell if None).

    ``u`` is a :class:`Field` or a mapping ``cell id -> value`` which must
    cover the halo of ``ids``; ``grid`` is required in the mapping case.
    """
    if isinstance(u, Field):
        grid = u.grid
        if ids is None:
            return divergence(u.values, grid, flux, mu)
        ids = np.asarray(ids, dtype=np.int64)
        lookup = lambda q: np.where(q >= 0, u.values[np.maximum(q, 0)], 0.0)  # noqa: E731
        centre = u.values[ids]
    else:
        if grid is None:
            raise ValueError("grid is required when u is a mapping")
        if ids is None:
            ids = np.arange(grid.N)
        ids = np.asarray(ids, dtype=np.int64)
        values: Mapping[int, float] = u

        def lookup(q):
            out = np.zeros(q.shape)
            for pos, cell in np.ndenumerate(q):
                if cell < 0:
                    continue
                try:
                    out[pos] = values[int(cell)]
                except KeyError:
                    raise HaloError(f"value for halo cell {int(cell)} not provided") from None
            return out

        centre = lookup(ids)
    nb = grid.neighbours(ids)
    return stencil_divergence(centre, lookup(nb[..., 0]), lookup(nb[..., 1]), grid.dx, flux, mu)


def fom_step(u: Field, flux: FluxModel, mu, dt: float) -> Field:
    if not dt > 0:
        raise ConfigurationError("time step must be positive")
    return Field(u.grid, u.values + dt * divergence(u.values, u.grid, flux, mu))


@dataclass
class FomConfig:
    """Full-order model setup.

    ``initial(x, mu)`` receives cell centres as an ``(N, dim)`` array.
    ``dt`` overrides the CFL step when given; ``cfl_fraction`` scales it
    otherwise.
    """

    grid: CartesianGrid
    flux: FluxModel
    initial: Callable[[np.ndarray, float], np.ndarray]
    final_time: float
    mu_range: Sequence[float]
    dt: Optional[float] = None
    cfl_fraction: float = 1.0

    def __post_init__(self):
        if self.final_time < 0:
            raise ConfigurationError("final time must be non-negative")
        self._cfl = {}

    def _cfl_dt(self, fraction: float) -> float:
        # the sup over mu samples the flux, so keep it per fraction
        key = (fraction, tuple(self.mu_range), self.grid)
        if key not in self._cfl:
            self._cfl[key] = cfl_dt(self.grid, self.flux, self.mu_range, fraction)
        return self._cfl[key]

    @property
    def time_step(self) -> float:
        if self.dt is not None:
            if not self.dt > 0:
                raise ConfigurationError("time step must be positive")
            return float(self.dt)
        return self._cfl_dt(self.cfl_fraction)

    @property
    def dt_overridden(self) -> bool:
        if self.dt is None:
            return False
        return self.dt > self._cfl_dt(1.0) * (1 + 1e-12)

    def step_times(self) -> np.ndarray:
        """``0 = t_0 < ... < t_K = T``; a final partial step lands on ``T``."""
        dt = self.time_step
        T = self.final_time
        k = int(math.ceil(T / dt - 1e-9)) if T > 0 else 0
        times = np.arange(k + 1) * dt
        if k:
            times[-1] = T
        return times

    def initial_field(self, mu) -> Field:
        return Field(self.grid, np.asarray(self.initial(self.grid.cell_centres(), mu), dtype=float))


@dataclass
class Trajectory:
    times: np.ndarray
    fields: list
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def at(self, t: float) -> Field:
        k = int(np.argmin(np.abs(self.times - t)))
        return self.fields[k]


def iterate_fom(config: FomConfig, mu) -> Iterator[tuple]:
    """Yield ``(k, t_k, values)`` for every step, starting with the initial data."""
    times = config.step_times()
    u = config.initial_field(mu).values.copy()
    yield 0, float(times[0]), u
    grid, flux = config.grid, config.flux
    for k in range(1, len(times)):
        u = u + (times[k] - times[k - 1]) * divergence(u, grid, flux, mu)
        yield k, float(times[k]), u


def _record_steps(times: np.ndarray, record_times, dt: float) -> list:
    steps = []
    for t in np.atleast_1d(np.asarray(record_times, dtype=float)):
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > 0.5 * dt + 1e-12:
            raise ConfigurationError(f"record time {t} is not on the time grid (dt={dt})")
        steps.append(k)
    return steps


def run_fom(config: FomConfig, mu, record_times=None) -> Trajectory:
    """Evolve to ``final_time``; keep the fields at ``record_times`` (default: only T)."""
    times = config.step_times()
    dt = config.time_step
    if record_times is None:
        record_times = [times[-1]]
    steps = _record_steps(times, record_times, dt)
    wanted = set(steps)
    kept = {}
    for k, _, u in iterate_fom(config, mu):
        if k in wanted:
            kept[k] = Field(config.grid, u)
        if k >= max(steps):
            break
    meta = {
        "mu": mu,
        "dt": dt,
        "steps": len(times) - 1,
        "cfl_fraction": config.cfl_fraction if config.dt is None else None,
        "dt_override": config.dt is not None,
        "cfl_violated": config.dt_overridden,
    }
    return Trajectory(times[steps], [kept[k] for k in steps], meta)


def save_trajectory(directory, traj: Trajectory) -> None:
    """Field snapshot files ``field_XXXX.bin`` plus a ``manifest.txt``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = []
    for i, f in enumerate(traj.fields):
        name = f"field_{i:04d}.bin"
        write_field(d / name, f)
        names.append(name)
    mu = traj.metadata.get("mu")
    lines = [
        f"mu = {' '.join(repr(float(m)) for m in np.atleast_1d(mu))}" if mu is not None else "mu =",
        f"dt = {traj.metadata.get('dt')!r}",
        f"steps = {traj.metadata.get('steps')}",
        f"times = {' '.join(repr(float(t)) for t in traj.times)}",
        f"files = {' '.join(names)}",
    ]
    for key in ("cfl_fraction", "dt_override", "cfl_violated"):
        if key in traj.metadata:
            lines.append(f"{key} = {traj.metadata[key]}")
    (d / "manifest.txt").write_text("\n".join(lines) + "\n")


def load_trajectory(directory, grid: CartesianGrid) -> Trajectory:
    d = Path(directory)
    manifest = {}
    for line in (d / "manifest.txt").read_text().splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            manifest[key.strip()] = value.strip()
    times = np.array([float(t) for t in manifest["times"].split()])
    fields = [read_field(d / name, grid) for name in manifest["files"].split()]
    meta = {"dt": float(manifest["dt"]), "steps": int(manifest["steps"])}
    if manifest.get("mu"):
        mus = [float(m) for m in manifest["mu"].split()]
        meta["mu"] = mus[0] if len(mus) == 1 else mus
    return Trajectory(times, fields, meta)
