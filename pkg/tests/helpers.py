"""Shared set-ups for the hyper-reduction tests and the acceptance suite."""

import numpy as np

from shiftrom.grid import CartesianGrid
from shiftrom.hyper import (
    ResidualSnapshots,
    adapt_reduced_mesh,
    interior_samples,
    select_reduced_mesh,
    shift_residuals,
)
from shiftrom.sampling import build_param_grid
from shiftrom.shifts import ShiftTable

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict = {}


def moving_indicator_error(x, z):
    """``z (2 - z)`` on ``[z - 0.2, z]``, zero elsewhere."""
    return np.where((x >= z - 0.2) & (x <= z), z * (2 - z), 0.0)


def moving_indicator_meshes(N=2000, n=100, n_sweep=41):
    """Fixed and adapted reduced meshes for the moving indicator residual.

    Returns the grid, the sweep values, and per swept ``z`` the fraction of
    fixed and of adapted mesh cells whose centre lies in ``[z - 0.2, z]``.
    """
    grid = CartesianGrid(1, N, (-2.0,), 4.0)
    x = grid.cell_centres()[:, 0]
    train = interior_samples(0.0, 2.0, 5)
    # parameters are (t, mu) pairs; the indicator only moves with mu = z
    params = [(0.0, float(z)) for z in train]
    S = ResidualSnapshots.from_columns([moving_indicator_error(x, z) for z in train], params)
    pg = build_param_grid((0.0, 1.0), (0.0, 2.0), 2, 2)
    # c(z, z_ref) = mu - 0 with z_ref = (0, 0)
    table = ShiftTable(pg, 0, pg.samples[:, 1:2].copy())
    fixed = select_reduced_mesh(S, n)
    e_off = select_reduced_mesh(shift_residuals(S, table, grid), n)
    sweep = np.linspace(0.0, 2.0, n_sweep)
    frac_fixed, frac_adapted = [], []
    for z in sweep:
        inside = lambda ids: np.mean((x[ids] >= z - 0.2) & (x[ids] <= z))  # noqa: E731
        frac_fixed.append(inside(fixed))
        frac_adapted.append(inside(adapt_reduced_mesh(e_off, table, (0.0, z), grid).ids))
    return grid, sweep, np.array(frac_fixed), np.array(frac_adapted), fixed, e_off
