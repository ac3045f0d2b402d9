import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointopt import (
    DensityState,
    SimpLaw,
    build_filter,
    build_part_mesh,
    chain_to_design,
    project,
    project_derivative,
    simp_modulus,
)


def test_filter_degenerates_to_identity():
    mesh = build_part_mesh(4, 3, 1.0, (0, 0))
    h = build_filter(mesh, 1.0).toarray()
    np.testing.assert_allclose(h, np.eye(mesh.n_elements), atol=1e-14)


def test_filter_preserves_uniform_fields():
    mesh = build_part_mesh(6, 5, 1.0, (0, 0))
    h = build_filter(mesh, 2.5)
    np.testing.assert_allclose(h @ np.full(30, 0.37), 0.37, rtol=1e-13)


def test_filter_strip_hand_value():
    # 3x1 strip, r = 1.5, field (0, 1, 0): conic weights (0.5, 1.5, 0.5).
    mesh = build_part_mesh(3, 1, 1.0, (0, 0))
    h = build_filter(mesh, 1.5)
    filtered = h @ np.array([0.0, 1.0, 0.0])
    assert filtered[1] == pytest.approx(1.5 / 2.5, rel=1e-13)


def test_filter_rows_sum_to_one():
    mesh = build_part_mesh(7, 6, 1.0, (0, 0))
    h = build_filter(mesh, 2.2)
    np.testing.assert_allclose(np.asarray(h.sum(axis=1)).ravel(), 1.0, rtol=1e-13)


def test_filter_is_linear():
    mesh = build_part_mesh(5, 4, 1.0, (0, 0))
    h = build_filter(mesh, 1.8)
    rng = np.random.default_rng(0)
    r1, r2 = rng.random(20), rng.random(20)
    np.testing.assert_allclose(
        h @ (2.0 * r1 - 0.5 * r2), 2.0 * (h @ r1) - 0.5 * (h @ r2), rtol=1e-12
    )


def test_filter_never_mixes_parts():
    from conftest import make_two_part_assembly

    a = make_two_part_assembly(joints_spec=())
    field = np.zeros(a.n_e)
    field[a.part_element_slices[0]] = 1.0
    filtered = a.filter_op @ field
    assert np.abs(filtered[a.part_element_slices[1]]).max() == 0.0


def test_filter_rejects_bad_radius():
    mesh = build_part_mesh(3, 3, 1.0, (0, 0))
    with pytest.raises(ValueError):
        build_filter(mesh, 0.0)


def test_projection_fixed_points():
    assert project(np.array([0.5]), 8.0)[0] == pytest.approx(0.5, abs=1e-14)
    assert project(np.array([0.0]), 4.0)[0] == pytest.approx(0.0, abs=1e-14)
    assert project(np.array([1.0]), 4.0)[0] == pytest.approx(1.0, abs=1e-14)


def test_projection_direct_formula_value():
    expected = (math.tanh(4.0) + math.tanh(8.0 * 0.1)) / (2.0 * math.tanh(4.0))
    assert project(np.array([0.6]), 8.0)[0] == pytest.approx(expected, rel=1e-14)


@given(
    st.floats(0.0, 1.0),
    st.floats(0.0, 1.0),
    st.floats(0.5, 32.0),
)
@settings(max_examples=60, deadline=None)
def test_projection_monotone(a, b, beta):
    lo, hi = sorted((a, b))
    pa, pb = project(np.array([lo, hi]), beta)
    assert pa <= pb + 1e-14
    assert 0.0 <= pa <= 1.0 and 0.0 <= pb <= 1.0


def test_projection_derivative_positive_and_symmetric():
    t = np.linspace(0.0, 0.5, 11)
    d_left = project_derivative(0.5 - t, 6.0)
    d_right = project_derivative(0.5 + t, 6.0)
    assert d_left.min() > 0.0
    np.testing.assert_allclose(d_left, d_right, rtol=1e-13)


def test_projection_derivative_matches_fd():
    rng = np.random.default_rng(1)
    x = rng.uniform(0.05, 0.95, 16)
    h = 1e-6
    fd = (project(x + h, 6.0) - project(x - h, 6.0)) / (2 * h)
    np.testing.assert_allclose(project_derivative(x, 6.0), fd, rtol=1e-8)


def test_simp_endpoints_and_midpoint():
    law = SimpLaw(e0=1.0, e_min=1e-9, p=3.0)
    assert simp_modulus(np.array([1.0]), law)[0] == pytest.approx(1.0)
    assert simp_modulus(np.array([0.0]), law)[0] == pytest.approx(1e-9)
    assert simp_modulus(np.array([0.5]), law)[0] == pytest.approx(0.125, rel=1e-6)
    assert simp_modulus(np.array([0.0]), law)[0] > 0.0


def test_simp_law_validation():
    with pytest.raises(ValueError):
        SimpLaw(e0=1.0, e_min=0.1, p=3.0)
    with pytest.raises(ValueError):
        SimpLaw(e0=1.0, e_min=1e-9, p=0.5)


def test_chain_identity_filter_is_projection_slope():
    mesh = build_part_mesh(3, 2, 1.0, (0, 0))
    h = build_filter(mesh, 0.9)  # identity
    rho = np.linspace(0.2, 0.8, 6)
    state = DensityState.forward(rho, h, beta=4.0)
    g = np.ones(6)
    out = chain_to_design(g, state)
    np.testing.assert_allclose(out, state.projection_slope(), rtol=1e-13)


def test_filter_transpose_preserves_totals():
    mesh = build_part_mesh(6, 4, 1.0, (0, 0))
    h = build_filter(mesh, 2.1)
    g = np.random.default_rng(2).random(24)
    assert (h.T @ g).sum() == pytest.approx(g.sum(), rel=1e-12)


def test_chain_matches_fd_of_composed_functional():
    """FD oracle for d/drho of f(project(filter(rho))) with a smooth f."""
    mesh = build_part_mesh(3, 2, 1.0, (0, 0))
    h = build_filter(mesh, 1.6)
    rng = np.random.default_rng(3)
    rho = rng.uniform(0.3, 0.7, 6)
    w = rng.random(6)
    beta = 4.0

    def f(r):
        return float(w @ project(h @ r, beta) ** 2)

    state = DensityState.forward(rho, h, beta)
    analytic = chain_to_design(2.0 * w * state.rho_bar, state)
    step = 1e-6
    fd = np.empty(6)
    for i in range(6):
        rp, rm = rho.copy(), rho.copy()
        rp[i] += step
        rm[i] -= step
        fd[i] = (f(rp) - f(rm)) / (2 * step)
    np.testing.assert_allclose(analytic, fd, rtol=1e-6)


def test_density_state_fields_in_unit_interval():
    mesh = build_part_mesh(5, 5, 1.0, (0, 0))
    h = build_filter(mesh, 2.0)
    rng = np.random.default_rng(4)
    state = DensityState.forward(rng.random(25), h, beta=8.0)
    for field in (state.rho_tilde, state.rho_bar):
        assert field.min() >= -1e-14
        assert field.max() <= 1.0 + 1e-14
