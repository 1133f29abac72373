import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semloss import _kernels
from semloss.dataset import TABLE_NAMES, MetricGrid, embedded_table, snr_input
from semloss.fitter import random_unified_params, relative_error
from semloss.unified import (
    PUBLISHED_SETS,
    TermParams,
    UnifiedGradient,
    UnifiedParams,
    analytic_gradient,
    eval_grid,
    eval_point,
    finite_diff_gradient,
    gradient_arrays,
    jacobian_arrays,
    published_params,
    residuals,
    sse,
    term_intermediates,
)

from conftest import direct_xi, synthetic_grid

ACC_ROW1 = TermParams(-128.798, -7.955, 0.859, 2.765, -1.475e-3, 0.008)


def _random_params(n_c, seed, grid=None):
    grid = grid or embedded_table("evit-accuracy")
    return random_unified_params(grid, n_c, np.random.default_rng(seed))


# -- term intermediates ------------------------------------------------------

def test_sigmoid_midpoint():
    # mu3 * x + mu4 = 0 at gamma = 0 dB (x = 1)
    t = TermParams(1.0, 1.0, 2.0, -2.0, 0.0, 0.0)
    assert term_intermediates(t, 0.0, 4.0).sigma == 0.5


def test_flat_rho_factor():
    t = TermParams(1.0, 1.0, 0.3, 0.1, 0.0, 0.0)
    out = term_intermediates(t, 3.0, 7.0)
    assert out.eta == 1.0 and out.beta == 1.0


def test_published_row_intermediates_by_hand():
    x = 10 ** 0.8
    sigma = 1 / (1 + math.exp(-0.859 * x - 2.765))
    eta = math.exp(-1.475e-3 * 2)
    out = term_intermediates(ACC_ROW1, 8.0, 2.0)
    assert out.sigma == pytest.approx(sigma, rel=1e-14)
    assert out.eta == pytest.approx(eta, rel=1e-14)
    assert out.beta == pytest.approx(eta + 0.008 * 2, rel=1e-14)


def test_db_scale_uses_gamma_directly():
    out = term_intermediates(ACC_ROW1, -2.0, 4.0, snr_scale="db")
    assert out.sigma == pytest.approx(1 / (1 + math.exp(0.859 * 2.0 - 2.765)), rel=1e-14)


def test_exponent_clamp_keeps_values_finite():
    t = TermParams(1.0, 1.0, 1e6, 0.0, 1e6, 0.0)
    out = term_intermediates(t, 8.0, 12.0)
    assert 0.0 < out.sigma <= 1.0
    assert math.isfinite(out.eta) and out.eta == pytest.approx(math.exp(500.0))
    p = UnifiedParams(0.0, (TermParams(1.0, 1.0, -1e6, 0.0, -1e6, 0.0),))
    assert math.isfinite(eval_point(p, 8.0, 12.0))


# -- evaluation ---------------------------------------------------------------

def test_empty_model_is_constant():
    p = UnifiedParams(5.0)
    assert eval_point(p, -3.0, 7.0) == 5.0
    assert eval_point(p, 8.0, 2.0) == 5.0


def test_single_flat_term():
    p = UnifiedParams(0.0, (TermParams(1.0, 0.0, 0.7, -0.2, 0.0, 0.0),))
    assert eval_point(p, -6.0, 12.0) == 1.0
    assert eval_point(p, 8.0, 2.0) == 1.0


def test_published_point_near_measured():
    p = published_params("evit-accuracy")
    value = eval_point(p, 8.0, 2.0)
    assert abs(value - 97.7051) <= 2.0
    terms = [t.as_tuple() for t in p.terms]
    assert value == pytest.approx(direct_xi(62.683, terms, 8.0, 2.0), rel=1e-13)


@pytest.mark.parametrize("name", PUBLISHED_SETS)
def test_published_sets_reproduce_their_tables(name):
    grid = embedded_table(name)
    rmse = math.sqrt(sse(published_params(name), grid) / grid.n_cells)
    assert rmse <= 2.0


def test_eval_grid_matches_reference_evaluation():
    p = _random_params(6, 3)
    grid = embedded_table("evit-accuracy")
    out = eval_grid(p, grid)
    assert out.shape == grid.shape == (9, 5)
    terms = [t.as_tuple() for t in p.terms]
    for i, g in enumerate(grid.gamma_axis):
        for j, r in enumerate(grid.rho_axis):
            assert out[i, j] == pytest.approx(direct_xi(p.mu0, terms, g, r), rel=1e-12, abs=1e-9)
            assert out[i, j] == eval_point(p, g, r)


def test_eval_grid_zero_model():
    grid = embedded_table("djscc-ssim")
    assert np.all(eval_grid(UnifiedParams(0.0), grid) == 0.0)


def test_published_residuals_are_small():
    p = published_params("evit-accuracy")
    assert np.max(np.abs(residuals(p, embedded_table("evit-accuracy")))) < 2.0


# -- residuals and sse --------------------------------------------------------

def test_perfect_fit_has_zero_residuals():
    p = UnifiedParams(2.0, (TermParams(1.0, 3.0, 0.5, -0.5, -0.04, 0.02),))
    grid = synthetic_grid(p)
    # the reference grid is built with plain math, so allow rounding only
    assert np.max(np.abs(residuals(p, grid))) < 1e-12
    assert sse(p, grid) < 1e-24


def test_mean_offset_residuals_sum_to_zero():
    grid = embedded_table("djscc-mse")
    r = residuals(UnifiedParams(float(grid.values.mean())), grid)
    assert abs(r.sum()) < 1e-9


def test_sse_of_unit_grid():
    grid = MetricGrid("ones", [0.0, 1.0], [1.0, 2.0], np.ones((2, 2)))
    assert sse(UnifiedParams(0.0), grid) == 4.0


@pytest.mark.parametrize("name", TABLE_NAMES)
def test_sse_is_sum_of_squared_residuals(name):
    grid = embedded_table(name)
    p = _random_params(3, 11, grid)
    r = residuals(p, grid)
    assert sse(p, grid) == float(np.sum(r ** 2))
    assert sse(p, grid) == pytest.approx(grid.n_cells * np.mean(r ** 2), rel=1e-14)


# -- invariants ---------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 6), st.floats(-8, 8), st.floats(1, 12))
def test_term_order_does_not_matter(seed, n_c, gamma, rho):
    p = _random_params(n_c, seed)
    order = np.random.default_rng(seed).permutation(n_c)
    a, b = eval_point(p, gamma, rho), eval_point(p.permuted(order), gamma, rho)
    if n_c <= 2:
        assert a == b
    else:
        assert abs(a - b) <= 1e-10 * max(abs(a), abs(b), 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-1e3, 1e3), st.floats(-8, 8), st.floats(1, 12))
def test_offset_shift_adds_delta(seed, delta, gamma, rho):
    p = _random_params(4, seed)
    base = eval_point(p, gamma, rho)
    shifted = eval_point(p.shifted(delta), gamma, rho)
    # mu0 is added last, so the shift costs at most one extra rounding
    assert abs(shifted - (base + delta)) <= 4 * np.finfo(float).eps * max(abs(base), abs(delta), 1.0)


@pytest.mark.parametrize("delta", [0.5, -3.0, 1024.0])
def test_offset_shift_exact_on_representable_values(delta):
    # integer amplitudes with beta = 1 keep every intermediate exact
    p = UnifiedParams(7.0, (TermParams(3.0, 0.0, 1.0, 0.0, 0.0, 0.0),
                            TermParams(-2.0, 0.0, 0.3, 1.0, 0.0, 0.0)))
    assert eval_point(p.shifted(delta), 4.0, 6.0) == eval_point(p, 4.0, 6.0) + delta


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.lists(st.floats(-8, 8), min_size=2, max_size=6), st.floats(1, 12))
def test_no_sigmoid_amplitude_means_no_snr_dependence(seed, gammas, rho):
    terms = _random_params(3, seed).term_array()
    terms[1] = 0.0
    p = UnifiedParams.from_arrays(1.5, terms)
    values = {eval_point(p, g, rho) for g in gammas}
    assert len(values) == 1


# -- gradients ----------------------------------------------------------------

def test_zero_residual_gives_zero_gradient():
    p = UnifiedParams(2.0, (TermParams(1.0, 3.0, 0.5, -0.5, -0.04, 0.02),))
    x = snr_input(np.array([-2.0, 0.0, 3.0]))
    rho = np.array([2.0, 6.0])
    values = eval_grid(p, MetricGrid("m", [-2.0, 0.0, 3.0], rho, np.zeros((3, 2))))
    d0, dt, total = gradient_arrays(p.mu0, p.term_array(), x, rho, values)
    assert d0 == 0.0 and np.all(dt == 0.0) and total == 0.0


@pytest.mark.parametrize("name", TABLE_NAMES)
def test_offset_gradient_closed_form(name):
    grid = embedded_table(name)
    p = _random_params(6, 5, grid)
    g = analytic_gradient(p, grid)
    assert g.d_mu0 == pytest.approx(-2.0 * residuals(p, grid).sum(), rel=1e-12)


def test_gradient_at_origin():
    grid = embedded_table("evit-accuracy")
    p = UnifiedParams.from_arrays(0.0, np.zeros((6, 6)))
    exact = analytic_gradient(p, grid)
    assert exact.d_mu0 == pytest.approx(-2.0 * grid.values.sum(), rel=1e-14)
    approx = finite_diff_gradient(p, grid)
    assert relative_error(exact.flat(), approx.flat()).max() < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    grid = embedded_table("evit-accuracy")
    p = _random_params(6, seed)
    exact = analytic_gradient(p, grid).flat()
    approx = finite_diff_gradient(p, grid).flat()
    assert relative_error(exact, approx).max() < 1e-6


def test_offset_finite_difference_is_exact_for_quadratic():
    grid = embedded_table("djscc-psnr")
    p = _random_params(2, 9, grid)
    for h in (1e-3, 1.0, 10.0):
        approx = finite_diff_gradient(p, grid, h=h).d_mu0
        assert approx == pytest.approx(analytic_gradient(p, grid).d_mu0, rel=1e-12)


def test_halving_step_quarters_the_error():
    grid = embedded_table("evit-accuracy")
    p = _random_params(2, 4)
    exact = analytic_gradient(p, grid).groups()
    coarse = finite_diff_gradient(p, grid, h=2e-2).groups()
    fine = finite_diff_gradient(p, grid, h=1e-2).groups()
    for name in ("mu3", "mu4"):
        ratio = np.abs(coarse[name] - exact[name]) / np.abs(fine[name] - exact[name])
        assert np.all((ratio > 3.5) & (ratio < 4.5)), (name, ratio)


def test_finite_difference_rejects_bad_step():
    grid = embedded_table("evit-accuracy")
    with pytest.raises(ValueError):
        finite_diff_gradient(UnifiedParams(0.0), grid, h=0.0)


def test_jacobian_reproduces_gradient():
    grid = embedded_table("evit-recall")
    p = _random_params(4, 2, grid)
    x = snr_input(grid.gamma_axis)
    jac = jacobian_arrays(p.mu0, p.term_array(), x, grid.rho_axis)
    eps = residuals(p, grid).ravel()
    np.testing.assert_allclose(-2.0 * jac.T @ eps, analytic_gradient(p, grid).flat(), rtol=1e-10)


def test_kernel_step_matches_reference_gradient():
    grid = embedded_table("djscc-ssim")
    p = _random_params(6, 8, grid)
    alphas = np.array([1e-4, 1e-4, 1e-4, 1e-9, 1e-9, 1e-10, 1e-10])
    terms = p.term_array().copy()
    x = snr_input(grid.gamma_axis)
    mu0, loss = _kernels.step_once(np.ascontiguousarray(grid.values), x, grid.rho_axis,
                                   p.mu0, terms, alphas)
    g = analytic_gradient(p, grid)
    assert loss == pytest.approx(sse(p, grid), rel=1e-12)
    assert mu0 == pytest.approx(p.mu0 - alphas[0] * g.d_mu0, rel=1e-12)
    expected = p.term_array() - alphas[1:, None] * g.terms
    np.testing.assert_allclose(terms, expected, rtol=1e-12)


def test_gradient_groups_shape():
    g = UnifiedGradient(1.0, np.arange(12.0).reshape(6, 2))
    groups = g.groups()
    assert list(groups) == [f"mu{i}" for i in range(7)]
    assert groups["mu3"].tolist() == [4.0, 5.0]
    assert g.flat().size == 13


# -- parameter containers -----------------------------------------------------

def test_dict_round_trip_is_lossless():
    p = _random_params(5, 21)
    assert UnifiedParams.from_dict(p.to_dict()) == p


def test_term_count_mismatch_rejected():
    d = _random_params(2, 1).to_dict()
    d["n_c"] = 3
    with pytest.raises(ValueError):
        UnifiedParams.from_dict(d)


def test_non_finite_parameters_rejected():
    with pytest.raises(ValueError):
        TermParams(1.0, float("nan"), 0.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        UnifiedParams(float("inf"))


def test_published_rate_column_is_descaled():
    p = published_params("evit-accuracy")
    assert p.terms[0].mu5 == pytest.approx(-1.475e-3, rel=1e-15)
    assert p.n_c == 6 and p.mu0 == 62.683


def test_unknown_published_set():
    with pytest.raises(KeyError, match="evit-accuracy"):
        published_params("nosuch")
