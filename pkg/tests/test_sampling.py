import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shiftrom.errors import ConfigurationError, ParameterDomainError
from shiftrom.sampling import build_param_grid, containing_element


def test_two_by_two_grid():
    pg = build_param_grid((0, 1), (0, 1), 2, 2)
    assert {tuple(s) for s in pg.samples.tolist()} == {(0, 0), (1, 0), (0, 1), (1, 1)}
    assert pg.n_elements == 1


def test_time_samples():
    pg = build_param_grid((0, 0.5), (0, 1), 3, 2)
    assert pg.t_samples.tolist() == pytest.approx([0.0, 0.25, 0.5])


def test_test3_sizes():
    pg = build_param_grid((0, 0.5), (0, 2 * np.pi), 6, 6)
    assert pg.m == 36 and pg.n_elements == 25


def test_sample_ids_run_time_fastest():
    pg = build_param_grid((0, 1), (10, 20), 3, 2)
    assert pg.sample(1) == (0.5, 10.0)
    assert pg.sample(3) == (0.0, 20.0)
    assert pg.sample_id(1, 1) == 4


def test_too_few_samples():
    with pytest.raises(ConfigurationError):
        build_param_grid((0, 1), (0, 1), 1, 3)
    with pytest.raises(ConfigurationError):
        build_param_grid((0, 1), (1, 1), 2, 2)


def test_element_vertex_order():
    pg = build_param_grid((0, 1), (0, 1), 3, 3)
    el = containing_element(pg, (0.7, 0.2))
    assert el.index == (1, 0)
    assert el.vertices == ((0.5, 0.0), (1.0, 0.0), (1.0, 0.5), (0.5, 0.5))
    assert el.sample_ids == (1, 2, 5, 4)


def test_vertex_belongs_to_element_above_right():
    pg = build_param_grid((0, 1), (0, 1), 3, 3)
    assert containing_element(pg, (0.5, 0.5)).index == (1, 1)
    assert containing_element(pg, (0.5, 0.0)).vertices[0] == (0.5, 0.0)


def test_far_corner_folds_into_last_element():
    pg = build_param_grid((0, 1), (0, 1), 3, 3)
    assert containing_element(pg, (1.0, 1.0)).index == (1, 1)
    assert containing_element(pg, (1.0, 0.1)).index == (1, 0)


def test_outside_domain():
    pg = build_param_grid((0, 1), (0, 1), 3, 3)
    with pytest.raises(ParameterDomainError):
        containing_element(pg, (1.2, 0.5))


def test_centroid_sample():
    pg = build_param_grid((0, 1), (0, 1), 3, 3)
    assert pg.sample(pg.centroid_sample()) == (0.5, 0.5)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 8), st.integers(2, 8), st.floats(0, 1), st.floats(0, 1))
def test_every_point_has_nearby_vertices(n_t, n_mu, a, b):
    pg = build_param_grid((0, 2), (-1, 3), n_t, n_mu)
    z = (2 * a, -1 + 4 * b)
    el = containing_element(pg, z)
    ht, hm = pg.spacing
    t1, t2 = el.t_bounds
    m1, m2 = el.mu_bounds
    assert t1 < t2 and m1 < m2
    assert t1 - 1e-12 <= z[0] <= t2 + 1e-12 and m1 - 1e-12 <= z[1] <= m2 + 1e-12
    for t, mu in el.vertices:
        assert abs(t - z[0]) <= ht * (1 + 1e-9) and abs(mu - z[1]) <= hm * (1 + 1e-9)
