import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shiftrom.bench import Advection1D
from shiftrom.errors import HyperReductionError, StoreError
from shiftrom.fv import FomConfig, divergence
from shiftrom.grid import CartesianGrid, shift_values
from shiftrom.rom import (
    PLAIN,
    SHIFTED,
    ReducedModel,
    RomCoeffs,
    SnapshotStore,
    assemble_basis,
    compute_b,
    init_coeffs,
    minnorm_lsq,
    rom_step,
    run_rom,
    shifted_residual_defects,
    static_fit,
)
from shiftrom.sampling import build_param_grid, containing_element
from shiftrom.shifts import ShiftTable, build_shift_table

THETA = 0.02


def make_model(nx=100, n_t=2, n_mu=2, dt=None):
    p = Advection1D()
    g = CartesianGrid(1, nx, (0.0,), 3.0)
    cfg = FomConfig(g, p.flux(), p.initial, 0.5, (1.0, 3.0), dt=dt)
    pg = build_param_grid((0.0, 0.5), (1.0, 3.0), n_t, n_mu)
    store = SnapshotStore.from_fom(cfg, pg)
    return ReducedModel(cfg, store, build_shift_table(store, pg, g, threshold=THETA))


@pytest.fixture(scope="module")
def model():
    return make_model()


@pytest.fixture
def random_store(rng):
    g = CartesianGrid(1, 30, (0.0,), 1.0)
    pg = build_param_grid((0, 1), (0, 1), 2, 2)
    data = np.zeros((4, 30))
    data[:, 8:20] = rng.normal(size=(4, 12))
    return SnapshotStore(g, pg, data)


# -- minnorm_lsq ------------------------------------------------------------------

def test_minnorm_orthonormal_columns(rng):
    q, _ = np.linalg.qr(rng.normal(size=(12, 4)))
    b = rng.normal(size=12)
    assert minnorm_lsq(q, b) == pytest.approx(q.T @ b, abs=1e-13)


def test_minnorm_zero_rhs(rng):
    assert minnorm_lsq(rng.normal(size=(6, 4)), np.zeros(6)).tolist() == [0.0] * 4


def test_minnorm_duplicated_columns():
    v = np.array([1.0, 2.0, -1.0])
    assert minnorm_lsq(np.column_stack([v, v]), v) == pytest.approx([0.5, 0.5])


def test_minnorm_zero_matrix():
    assert minnorm_lsq(np.zeros((3, 4)), np.ones(3)).tolist() == [0.0] * 4


def test_minnorm_needs_rows():
    with pytest.raises(ValueError):
        minnorm_lsq(np.zeros((0, 4)), np.zeros(0))


def test_minnorm_matches_pseudoinverse_on_200_systems():
    r = np.random.default_rng(2024)
    worst = 0.0
    for k in range(200):
        n = int(r.integers(1, 12))
        A = r.normal(size=(n, 4))
        if k % 3 == 0:
            A[:, 3] = A[:, 0] - 2 * A[:, 1]  # rank deficient
        if k % 7 == 0:
            A[:, 2] = A[:, 1]
        b = r.normal(size=n)
        rcond = max(n, 4) * np.finfo(float).eps
        worst = max(worst, np.max(np.abs(minnorm_lsq(A, b) - np.linalg.pinv(A, rcond=rcond) @ b)))
    assert worst <= 1e-10


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 15), st.integers(0, 2**31))
def test_minnorm_is_a_least_squares_minimizer(n, seed):
    r = np.random.default_rng(seed)
    A, b = r.normal(size=(n, 4)), r.normal(size=n)
    x = minnorm_lsq(A, b)
    # normal equations hold and x has no component in the null space
    assert np.allclose(A.T @ (A @ x - b), 0, atol=1e-9 * max(1, np.abs(b).max()))
    ref = np.linalg.lstsq(A, b, rcond=None)[0]
    assert np.linalg.norm(x) <= np.linalg.norm(ref) + 1e-9


# -- basis --------------------------------------------------------------------------

def test_basis_at_vertex_has_raw_first_column(model):
    z = model.param_grid.sample(0)
    el = containing_element(model.param_grid, z)
    B = assemble_basis(el, z, model.table, model.store, SHIFTED)
    assert np.array_equal(B.column(0), model.store[el.sample_ids[0]])


def test_plain_basis_is_raw(model):
    z = (0.3, 2.1)
    el = containing_element(model.param_grid, z)
    B = assemble_basis(el, z, None, model.store, PLAIN)
    for j, sid in enumerate(el.sample_ids):
        assert np.array_equal(B.column(j), model.store[sid])


def test_shifted_basis_uses_snapped_offsets(random_store):
    pg, g = random_store.param_grid, random_store.grid
    # c(z_j, z_ref) affine in t: interpolation is exact
    table = ShiftTable(pg, 0, np.array([[0.0], [0.2], [0.0], [0.2]]))
    z = (0.5, 0.3)
    B = assemble_basis(containing_element(pg, z), z, table, random_store)
    # vertices are samples 0, 1, 3, 2; c_m(z, z_j) = 0.1 - to_ref[j] -> 3, -3, -3, 3 cells
    assert B.element.sample_ids == (0, 1, 3, 2)
    assert B.offsets.ravel().tolist() == [3, -3, -3, 3]
    for j, sid in enumerate(B.element.sample_ids):
        assert np.array_equal(B.column(j), shift_values(random_store[sid], g, B.offsets[j]))


def test_basis_rows_match_full(model, rng):
    B = model.basis((0.37, 2.6))
    ids = rng.choice(model.grid.N, 25, replace=False)
    assert np.array_equal(B.rows(ids), B.full()[ids])
    sup = B.support()
    full = B.full()
    off = np.setdiff1d(np.arange(model.grid.N), sup)
    assert not full[off].any()


def test_rows_multi_off_mesh_is_zero(model):
    B = model.basis((0.2, 2.0))
    multi = np.array([[-1], [model.grid.N]])
    assert not B.rows_multi(multi).any()


def test_store_errors(random_store):
    with pytest.raises(StoreError):
        random_store[4]
    with pytest.raises(ValueError):
        SnapshotStore(random_store.grid, random_store.param_grid, np.zeros((3, 30)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_reconstruction_is_linear(seed):
    r = np.random.default_rng(seed)
    g = CartesianGrid(1, 20, (0.0,), 1.0)
    store = SnapshotStore(g, build_param_grid((0, 1), (0, 1), 2, 2), r.normal(size=(4, 20)))
    pg = store.param_grid
    B = assemble_basis(containing_element(pg, (0.5, 0.5)), (0.5, 0.5), None, store, PLAIN)
    a1, a2 = r.normal(size=4), r.normal(size=4)
    assert np.allclose(B.reconstruct(a1 + a2), B.reconstruct(a1) + B.reconstruct(a2))
    ids = np.arange(0, 20, 3)
    assert np.allclose(B.reconstruct(a1, ids), B.reconstruct(a1)[ids])


# -- b, init, step -------------------------------------------------------------------

def test_compute_b_zero_dt(model):
    B = model.basis((0.1, 1.5))
    c = RomCoeffs(np.array([0.3, 0.2, 0.4, 0.1]), B.z, B)
    ids = np.arange(10, 60)
    assert np.allclose(compute_b(c, model.config.flux, 1.5, 0.0, ids), c.reconstruct()[ids])


def test_compute_b_full_matches_fom_step(model):
    B = model.basis((0.1, 1.5))
    c = RomCoeffs(np.array([0.3, 0.2, 0.4, 0.1]), B.z, B)
    u = c.reconstruct()
    dt = model.dt
    expected = u + dt * divergence(u, model.grid, model.config.flux, 1.5)
    assert np.allclose(compute_b(c, model.config.flux, 1.5, dt), expected, atol=1e-14)
    ids = np.array([0, 5, 33, 99])
    assert np.allclose(compute_b(c, model.config.flux, 1.5, dt, ids), expected[ids], atol=1e-14)


def test_init_coeffs_examples(random_store):
    pg = random_store.param_grid
    B = assemble_basis(containing_element(pg, (0.2, 0.2)), (0.2, 0.2), None, random_store, PLAIN)
    assert init_coeffs(B, B.column(0)).alpha == pytest.approx([1, 0, 0, 0], abs=1e-10)
    assert init_coeffs(B, np.zeros(30)).alpha.tolist() == [0.0] * 4
    target = B.full() @ np.array([0.5, -1.0, 2.0, 0.25])
    resid = B.full() @ init_coeffs(B, target).alpha - target
    assert np.linalg.norm(resid) <= 1e-10 * np.linalg.norm(target)


def test_rom_step_exact_representability(model):
    B0 = model.basis((0.0, 2.0))
    c0 = init_coeffs(B0, model.config.initial_field(2.0))
    B1 = model.basis((0.0, 2.0))
    nxt = rom_step(c0, B1, model.config.flux, 2.0, 0.0)
    # dt = 0 and the same basis: b = A alpha is reproduced exactly
    b = c0.reconstruct()
    assert np.linalg.norm(nxt.reconstruct() - b) <= 1e-10 * np.linalg.norm(b)
    assert nxt.alpha == pytest.approx(c0.alpha, abs=1e-10)


def test_rom_step_empty_mesh(model):
    B = model.basis((0.0, 2.0))
    c = init_coeffs(B, model.config.initial_field(2.0))
    with pytest.raises(HyperReductionError):
        rom_step(c, B, model.config.flux, 2.0, model.dt, ids=[])


def test_reduced_mesh_cannot_beat_full_mesh(model, rng):
    z = (0.3, 2.2)
    B = model.basis(z)
    b = model.store[1] * 0.7 + rng.normal(scale=0.01, size=model.grid.N)
    full = static_fit(z, B, b)
    ids = rng.choice(model.grid.N, 12, replace=False)
    red = static_fit(z, B, b, ids)
    r_full = np.linalg.norm(full.reconstruct() - b)
    r_red = np.linalg.norm(red.reconstruct() - b)
    assert r_full <= r_red + 1e-12


def test_static_fit_column_is_unit_vector(random_store):
    pg = random_store.param_grid
    B = assemble_basis(containing_element(pg, (0.2, 0.2)), (0.2, 0.2), None, random_store, PLAIN)
    fit = static_fit((0.2, 0.2), B, B.column(2))
    assert fit.alpha == pytest.approx([0, 0, 1, 0], abs=1e-10)


def test_static_fit_empty_mesh_gives_zero(random_store):
    pg = random_store.param_grid
    B = assemble_basis(containing_element(pg, (0.2, 0.2)), (0.2, 0.2), None, random_store, PLAIN)
    with pytest.warns(RuntimeWarning):
        fit = static_fit((0.2, 0.2), B, B.column(2), [])
    assert fit.alpha.tolist() == [0.0] * 4


# -- run_rom ------------------------------------------------------------------------------

def test_run_rom_t_end_zero(model):
    run = run_rom(model, 2.0, t_end=0.0)
    assert len(run.coeffs) == 1 and run.times.tolist() == [0.0]
    u0 = model.config.initial_field(2.0).values
    assert np.linalg.norm(run.reconstruct() - u0) <= 1e-10 * np.linalg.norm(u0)


def test_run_rom_records_timing_split(model):
    run = run_rom(model, 2.0, t_end=0.05)
    assert set(run.timings) == {"adapt", "A", "b", "ls"}
    assert all(len(v) == len(run.times) - 1 for v in run.timings.values())
    assert run.online_time > 0 and not run.diverged


def _dense_oracle(model, mu):
    """Full-mesh SS-ROM written out with plain numpy."""
    g, pg, table = model.grid, model.param_grid, model.table
    S = model.store.data
    N, dx = g.N, g.dx
    times = model.config.step_times()
    (t0, t1), (m0, m1) = pg.t_range, pg.mu_range

    def basis(t):
        s, r = (t - t0) / (t1 - t0), (mu - m0) / (m1 - m0)
        w = np.array([(1 - s) * (1 - r), s * (1 - r), (1 - s) * r, s * r])
        c_z = w @ table.to_ref[:, 0]  # c(z, z_ref)
        A = np.zeros((N, 4))
        for j in range(4):
            o = int(math.floor((c_z - table.to_ref[j, 0]) / dx + 1e-9))
            src = np.arange(N) - o
            ok = (src >= 0) & (src < N)
            A[ok, j] = S[j, src[ok]]
        return A

    def F(u):
        up = np.concatenate([[0.0], u])  # mu > 0: upwind from the left, zero ghost
        return -mu * (up[1:] - up[:-1]) / dx

    A = basis(times[0])
    alpha = np.linalg.lstsq(A, model.config.initial_field(mu).values, rcond=None)[0]
    out = [A @ alpha]
    for k in range(len(times) - 1):
        u = A @ alpha
        b = u + (times[k + 1] - times[k]) * F(u)
        A = basis(times[k + 1])
        alpha = np.linalg.lstsq(A, b, rcond=None)[0]
        out.append(A @ alpha)
    return np.array(out)


def test_full_mesh_trajectory_matches_dense_oracle(model):
    mu = 1.7
    run = run_rom(model, mu)
    ours = np.array([c.reconstruct() for c in run.coeffs])
    ref = _dense_oracle(model, mu)
    assert ours.shape == ref.shape
    assert np.max(np.abs(ours - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_hyper_reduced_run_with_full_id_set_matches_full(model):
    from shiftrom.hyper import FixedMesh

    a = run_rom(model, 2.3, t_end=0.1)
    b = run_rom(model, 2.3, t_end=0.1, mesh=FixedMesh(np.arange(model.grid.N)))
    assert np.allclose(a.alphas, b.alphas, rtol=1e-10, atol=1e-12)


def test_plain_rom_is_worse_than_shifted(model):
    from shiftrom.bench import compute_error
    from shiftrom.fv import run_fom

    mu = 2.0
    ref = run_fom(model.config, mu).fields[0].values
    e_ss = compute_error(ref, run_rom(model, mu).reconstruct())
    e_s = compute_error(ref, run_rom(model, mu, mode=PLAIN).reconstruct())
    assert e_ss < 0.3 < e_s


# -- shifted residuals versus stationary residuals ------------------------------------------

def residual_defects(n_steps):
    m = make_model(nx=300, dt=0.5 / n_steps)
    run = run_rom(m, 1.7, t_end=0.1, keep_residuals=True)
    return shifted_residual_defects(m, run)


def test_shifted_residual_defect_exact_between_cell_crossings():
    d = residual_defects(600)
    # Only steps where the snapped reference shift moves by a cell carry an O(1)
    # defect: mu * t_end / dx of them. Elsewhere what is left comes from the
    # LLF diffusion tails being cut off by the zero fill at the boundary.
    assert np.sum(d > 1e-6) == round(1.7 * 0.1 / 0.01)
    assert np.min(d) <= 1e-12


def test_shifted_residual_defect_decays_first_order():
    steps = np.array([300, 600, 1200, 2400])
    mean = np.array([residual_defects(k).mean() for k in steps])
    slope = np.polyfit(np.log(0.5 / steps), np.log(mean), 1)[0]
    assert slope >= 0.9


def test_defects_need_kept_residuals(model):
    with pytest.raises(ValueError):
        shifted_residual_defects(model, run_rom(model, 2.0, t_end=0.01))
