"""Uniform tensor sampling of the (time, parameter) domain."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ParameterDomainError

__all__ = ["ParamGrid", "ParamElement", "build_param_grid", "containing_element"]

_TIE_EPS = 1e-9


@dataclass(frozen=True)
class ParamElement:
    """A cell of the parameter grid with its four corner samples.

    Vertices run counter-clockwise from the lower-left corner:
    ``(t1, mu1), (t2, mu1), (t2, mu2), (t1, mu2)``.
    """

    index: tuple
    vertices: tuple
    sample_ids: tuple

    @property
    def t_bounds(self) -> tuple:
        return self.vertices[0][0], self.vertices[1][0]

    @property
    def mu_bounds(self) -> tuple:
        return self.vertices[0][1], self.vertices[3][1]


@dataclass(frozen=True)
class ParamGrid:
    """Tensor grid of ``N_t x N_mu`` samples, endpoints included.

    Sample ``i`` has time index ``i % N_t`` and parameter index ``i // N_t``.
    """

    t_range: tuple
    mu_range: tuple
    n_t: int
    n_mu: int

    def __post_init__(self):
        if self.n_t < 2 or self.n_mu < 2:
            raise ConfigurationError("need at least two samples per parameter axis")
        for lo, hi in (self.t_range, self.mu_range):
            if not hi > lo:
                raise ConfigurationError(f"empty range [{lo}, {hi}]")
        object.__setattr__(self, "t_range", tuple(float(v) for v in self.t_range))
        object.__setattr__(self, "mu_range", tuple(float(v) for v in self.mu_range))

    @cached_property
    def t_samples(self) -> np.ndarray:
        return np.linspace(*self.t_range, self.n_t)

    @cached_property
    def mu_samples(self) -> np.ndarray:
        return np.linspace(*self.mu_range, self.n_mu)

    @cached_property
    def t_weights(self) -> np.ndarray:
        """Barycentric weights of the time nodes."""
        return _barycentric(self.t_samples)

    @cached_property
    def mu_weights(self) -> np.ndarray:
        return _barycentric(self.mu_samples)

    @property
    def m(self) -> int:
        return self.n_t * self.n_mu

    @cached_property
    def samples(self) -> np.ndarray:
        """All samples as an ``(m, 2)`` array of ``(t, mu)``."""
        tt, mm = np.meshgrid(self.t_samples, self.mu_samples)
        return np.column_stack([tt.ravel(), mm.ravel()])

    @property
    def spacing(self) -> tuple:
        return ((self.t_range[1] - self.t_range[0]) / (self.n_t - 1),
                (self.mu_range[1] - self.mu_range[0]) / (self.n_mu - 1))

    @property
    def n_elements(self) -> int:
        return (self.n_t - 1) * (self.n_mu - 1)

    def sample_id(self, i_t: int, i_mu: int) -> int:
        return i_t + self.n_t * i_mu

    def sample(self, i: int) -> tuple:
        return float(self.t_samples[i % self.n_t]), float(self.mu_samples[i // self.n_t])

    def contains(self, z: Sequence[float]) -> bool:
        t, mu = z
        tol_t = 1e-12 * max(1.0, abs(self.t_range[1]))
        tol_mu = 1e-12 * max(1.0, abs(self.mu_range[1]))
        return (self.t_range[0] - tol_t <= t <= self.t_range[1] + tol_t
                and self.mu_range[0] - tol_mu <= mu <= self.mu_range[1] + tol_mu)

    def centroid_sample(self) -> int:
        """Sample closest to the centre of the domain (first one on ties)."""
        centre = np.array([np.mean(self.t_range), np.mean(self.mu_range)])
        scale = np.array([self.t_range[1] - self.t_range[0], self.mu_range[1] - self.mu_range[0]])
        d = np.linalg.norm((self.samples - centre) / scale, axis=1)
        return int(np.flatnonzero(d <= d.min() * (1 + 1e-12) + 1e-15)[0])

    def element(self, i_t: int, i_mu: int) -> ParamElement:
        ts, ms = self.t_samples, self.mu_samples
        corners = ((i_t, i_mu), (i_t + 1, i_mu), (i_t + 1, i_mu + 1), (i_t, i_mu + 1))
        return ParamElement(
            index=(i_t, i_mu),
            vertices=tuple((float(ts[a]), float(ms[b])) for a, b in corners),
            sample_ids=tuple(self.sample_id(a, b) for a, b in corners),
        )

    def element_index(self, z: Sequence[float]) -> tuple:
        if not self.contains(z):
            raise ParameterDomainError(f"parameter {tuple(z)} outside {self.t_range} x {self.mu_range}")
        ht, hm = self.spacing
        i_t = int(np.floor((z[0] - self.t_range[0]) / ht + _TIE_EPS))
        i_mu = int(np.floor((z[1] - self.mu_range[0]) / hm + _TIE_EPS))
        return min(max(i_t, 0), self.n_t - 2), min(max(i_mu, 0), self.n_mu - 2)


def _barycentric(nodes: np.ndarray) -> np.ndarray:
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def build_param_grid(t_range: Sequence[float], mu_range: Sequence[float], n_t: int, n_mu: int) -> ParamGrid:
    return ParamGrid(tuple(t_range), tuple(mu_range), int(n_t), int(n_mu))


def containing_element(grid: ParamGrid, z: Sequence[float]) -> ParamElement:
    """Element whose half-open box ``[t1, t2) x [mu1, mu2)`` holds ``z``.

    The far boundaries ``t = T`` and ``mu = mu_max`` are folded into the last
    element, so every point of the closed domain maps to exactly one element.
    """
    return grid.element(*grid.element_index(z))
