import math

import numpy as np
import pytest

from shiftrom.bench import (
    PRESETS,
    REPORT_COLUMNS,
    Advection1D,
    ErrorReport,
    MovingBox2D,
    RuntimeReport,
    case_to_config,
    compute_error,
    config_text,
    emit_report,
    gauss_legendre_projection,
    load_case,
    load_offline,
    mesh_sweep,
    parse_config,
    read_report,
    run_experiment,
    run_variants,
    save_offline,
    static_error,
    build_offline,
)
from shiftrom.errors import ConfigurationError, UndefinedReferenceError
from shiftrom.grid import CartesianGrid


# -- error metric ------------------------------------------------------------------

def test_error_examples():
    assert compute_error([1.0, 0.0], [1.0, 1.0]) == 1.0
    u = np.array([0.3, -2.0, 1.0])
    assert compute_error(u, u) == 0.0
    assert compute_error(u, np.zeros(3)) == 1.0


def test_error_zero_reference():
    with pytest.raises(UndefinedReferenceError):
        compute_error(np.zeros(4), np.ones(4))


def test_error_shape_checked():
    with pytest.raises(ValueError):
        compute_error(np.ones(3), np.ones(4))


def test_error_nonfinite_is_inf():
    assert compute_error([1.0, 2.0], [np.nan, 0.0]) == math.inf


def test_error_report_flags():
    assert not ErrorReport("SS", np.array([0.1, 0.2])).unstable
    assert ErrorReport("SS", np.array([0.1, np.inf])).unstable
    assert ErrorReport("SS", np.array([0.1, 0.2]), diverged=1).unstable
    assert ErrorReport("SS", np.array([0.1, 2e6])).unstable
    assert ErrorReport("SS", np.array([0.1, 0.2])).E == 0.2


def test_runtime_report():
    r = RuntimeReport(np.array([1.0, 3.0]), {"adapt": 1.0, "A": 2.0, "b": 3.0, "ls": 4.0}, steps=5)
    assert r.C == 2.0 and r.per_step == 2.0


# -- projection --------------------------------------------------------------------

def test_projection_of_polynomials_is_exact():
    g = CartesianGrid(2, 3, (0.0, 0.0), 1.5)
    vals = gauss_legendre_projection(lambda p: p[:, 0] ** 3 * p[:, 1] ** 2, g)
    c = g.cell_centres()
    h = g.dx / 2
    # exact cell averages of x^3 and y^2
    ax = ((c[:, 0] + h) ** 4 - (c[:, 0] - h) ** 4) / (4 * g.dx)
    ay = ((c[:, 1] + h) ** 3 - (c[:, 1] - h) ** 3) / (3 * g.dx)
    assert vals == pytest.approx(ax * ay, rel=1e-13)


def test_moving_box_projection_matches_quadrature():
    p = MovingBox2D()
    g = CartesianGrid(2, 40, (-0.5, -0.5), 0.075)
    exact = p.project(g, 0.4, 0.7)
    quad = gauss_legendre_projection(lambda x: p.exact(x, 0.4, 0.7), g, order=40)
    assert np.max(np.abs(exact - quad)) < 0.02
    # cell averages integrate to the box area
    assert exact.sum() * g.dx ** 2 == pytest.approx(np.sum(quad) * g.dx ** 2, rel=1e-3)


def test_advection_initial_box():
    p = Advection1D()
    x = np.array([[0.25], [0.6], [0.9], [1.2]])
    assert p.initial(x, 2.0).tolist() == [0.0, 2.0, 2.0, 0.0]


# -- configs -----------------------------------------------------------------------

@pytest.mark.parametrize("name", PRESETS)
def test_presets_load_and_round_trip(name):
    case = load_case(name)
    rebuilt = parse_config(case_to_config(case))
    for key, value in rebuilt.items():
        assert getattr(case, key) == value


def test_preset_sizes():
    assert load_case("test1").N == 1000
    assert load_case("test2").N == 600 ** 2
    assert load_case("test3").N == 800 ** 2
    assert load_case("test3").param_grid.m == 36


def test_config_file_round_trip(tmp_path):
    case = load_case("test3-small", n_x=40, target_mu=7)
    path = tmp_path / "c.cfg"
    path.write_text(case_to_config(case))
    assert load_case(path) == case


def test_unknown_key_rejected():
    with pytest.raises(ConfigurationError):
        parse_config("[grid]\ncolour = red\n")
    with pytest.raises(ConfigurationError):
        parse_config("[grid]\ncells = many\n")
    with pytest.raises(ConfigurationError):
        config_text("test9")
    with pytest.raises(ConfigurationError):
        load_case("test1", problem="heat")
    with pytest.raises(ConfigurationError):
        load_case("test1").with_overrides(colour="red")


def test_missing_keys_rejected(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("[case]\nlabel = x\n")
    with pytest.raises(ConfigurationError):
        load_case(path)


def test_reduced_mesh_size():
    case = load_case("test1")
    assert case.n_reduced == 5
    assert case.with_overrides(n=123).n_reduced == 123


def test_time_step_options():
    case = load_case("test1-small")
    assert case.time_step() is None
    assert case.with_overrides(dt="inv_nx").time_step() == 1 / case.n_x
    assert case.with_overrides(dt="0.001").time_step() == 0.001


# -- experiments ----------------------------------------------------------------------

def test_run_experiment_reports(tiny_test1):
    ex = run_experiment(tiny_test1.case, "SS", offline=tiny_test1)
    assert ex.n == 100 and len(ex.error.errors) == 4
    assert 0 < ex.error.E < 0.3 and not ex.error.unstable
    assert set(ex.runtime.split) == {"adapt", "A", "b", "ls"}
    assert ex.runtime.C > 0
    row = ex.row()
    assert tuple(row) == REPORT_COLUMNS
    assert all(type(row[k]) is float for k in ("E", "C", "C_adapt", "C_A", "C_b", "C_ls"))


def test_plain_variant_is_worse(tiny_test1):
    ss, s = run_variants(tiny_test1.case, ["SS", "S"], offline=tiny_test1)
    assert ss.error.E < s.error.E


def test_unknown_variant(tiny_test1):
    with pytest.raises(ConfigurationError):
        run_experiment(tiny_test1.case, "XS", offline=tiny_test1)


def test_mesh_sweep_sizes(tiny_test1):
    out = mesh_sweep(tiny_test1.case, offline=tiny_test1)
    assert [(e.variant, e.n) for e in out] == [("Adp-SS", 10), ("N-Adp-SS", 10),
                                                ("Adp-SS", 20), ("N-Adp-SS", 20)]
    with pytest.raises(ConfigurationError):
        mesh_sweep(tiny_test1.case.with_overrides(sweep_n=()), offline=tiny_test1)


def test_emit_report(tiny_test1, tmp_path):
    with pytest.raises(ValueError):
        emit_report([], tmp_path / "r.csv")
    reports = run_variants(tiny_test1.case, ["SS", "S"], offline=tiny_test1)
    paths = emit_report(reports, tmp_path / "r.csv")
    assert [p.name for p in paths] == ["r.csv", "r_error_vs_n.csv", "r_error_vs_runtime.csv"]
    rows = read_report(paths[0])
    assert [r["variant"] for r in rows] == ["SS", "S"]
    assert list(rows[0]) == list(REPORT_COLUMNS)
    assert float(rows[0]["E"]) == reports[0].error.E
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == ",".join(REPORT_COLUMNS)


def test_offline_round_trip(tiny_test1, tmp_path):
    save_offline(tiny_test1, tmp_path, meshes=[10])
    back = load_offline(tmp_path)
    assert back.case == tiny_test1.case
    assert np.array_equal(back.store.data, tiny_test1.store.data)
    assert np.array_equal(back.table.to_ref, tiny_test1.table.to_ref)
    assert np.array_equal(back.reduced_mesh(10, True), tiny_test1.reduced_mesh(10, True))
    assert np.array_equal(back.reduced_mesh(10, False), tiny_test1.reduced_mesh(10, False))


def test_load_offline_counts_snapshots(tiny_test1, tmp_path):
    save_offline(tiny_test1, tmp_path)
    next((tmp_path / "snapshots").glob("*.bin")).unlink()
    with pytest.raises(ConfigurationError):
        load_offline(tmp_path)


def test_static_case_runs():
    case = load_case("test2-small", n_x=40, target_mu=4, target_t=4, repeats=1)
    off = build_offline(case)
    err, n = static_error(off, "SS", (0.5, 0.5), case.N)
    assert n <= case.N and 0 <= err < 0.5
    adp = run_experiment(case, "Adp-SS", offline=off)
    assert adp.n == case.n_reduced and adp.error.errors.size == 16
    assert not adp.error.unstable
    # a fixed mesh that misses the moving box gives alpha = 0 and error one
    fixed = run_experiment(case, "N-Adp-SS", offline=off)
    assert fixed.error.E == pytest.approx(1.0, abs=0.05)
