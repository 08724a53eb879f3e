"""Kernels, closed-form moments, truncation budget, and the fidelity of
the discretized stochastic integrals.

The discretization tests are deterministic: the variance of every
simulated functional is a known quadratic form of its weight vector, so
it can be compared against independent quadrature of the kernel energy
without any Monte Carlo noise.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from fbmdrift import (
    BrownianDriver,
    diff_quotient_error,
    drh_relative_tail,
    drh_tail_variance,
    integrated_var_drh,
    kernel_f,
    kernel_f_prime,
    make_grid,
    make_hurst_params,
    sample_driver,
    simulate_decomposition,
    solve_truncation_depth,
    var_drh,
    var_wh,
)
from fbmdrift.decomposition import TruncationWarning, _decomp_weights

P75 = make_hurst_params(0.75)


def accept_grid():
    return make_grid(0.0, 1.0, 1.0e4, 2000, 200)


# ---------------------------------------------------------------------------
# scalar kernels
# ---------------------------------------------------------------------------

def test_kernel_f_values():
    assert kernel_f(2.0, 0.0, 1.0, P75) == pytest.approx(2**0.25 - 1.0, rel=1e-14)
    assert kernel_f(2.0, 0.0, 1.0, P75) == pytest.approx(0.189207, abs=1e-6)
    # vanishes as t -> s+
    assert kernel_f(1.0 + 1e-12, 0.5, 1.0, P75) == pytest.approx(0.0, abs=1e-9)
    # the (s-q) term vanishes as q -> s-
    assert kernel_f(2.0, 1.0 - 1e-14, 1.0, P75) == pytest.approx(1.0, abs=1e-3)


def test_kernel_f_domain():
    with pytest.raises(ValueError):
        kernel_f(2.0, 1.5, 1.0, P75)  # q > s
    with pytest.raises(ValueError):
        kernel_f(1.0, 0.0, 1.0, P75)  # t == s
    with pytest.raises(ValueError):
        kernel_f(0.5, 0.0, 1.0, P75)  # t < s


def test_kernel_f_prime_values():
    assert kernel_f_prime(2.0, 1.0, P75) == pytest.approx(0.25, rel=1e-14)
    assert kernel_f_prime(1e8, 0.0, P75) == pytest.approx(0.0, abs=1e-5)
    near_half = make_hurst_params(0.5001)
    assert kernel_f_prime(2.0, 1.0, near_half) == pytest.approx(1e-4, rel=1e-10)
    with pytest.raises(ValueError):
        kernel_f_prime(1.0, 1.0, P75)
    with pytest.raises(ValueError):
        kernel_f_prime(1.0, 2.0, P75)


# ---------------------------------------------------------------------------
# closed-form moments
# ---------------------------------------------------------------------------

def test_var_wh_values():
    assert var_wh(1.0, 0.0, P75) == pytest.approx(P75.c_H**2 / 1.5, rel=1e-14)
    assert var_wh(1.0, 0.0, P75) == pytest.approx(0.762760, abs=1e-6)
    assert var_wh(2.0, 0.0, P75) == pytest.approx(0.762760 * 2**1.5, abs=3e-6)
    assert var_wh(3.0, 1.0, P75) == var_wh(2.0, 0.0, P75)
    with pytest.raises(ValueError):
        var_wh(0.0, 0.0, P75)


def test_var_drh_values():
    assert var_drh(1.0, 0.0, P75) == pytest.approx(0.143017, abs=1e-6)
    assert var_drh(4.0, 0.0, P75) == pytest.approx(0.143017 / 2.0, abs=1e-6)
    assert var_drh(1e8, 0.0, P75) == pytest.approx(0.0, abs=1e-4)
    with pytest.raises(ValueError):
        var_drh(0.0, 0.0, P75)


def test_integrated_var_drh_values():
    assert integrated_var_drh(0.0, 1.0, P75) == pytest.approx(0.286035, abs=1e-6)
    assert integrated_var_drh(0.0, 1e-9, P75) == pytest.approx(0.0, abs=1e-4)
    with pytest.raises(ValueError):
        integrated_var_drh(1.0, 1.0, P75)


@pytest.mark.parametrize("H", [0.55, 0.6, 0.75, 0.9])
def test_integrated_matches_quadrature_of_pointwise(H):
    # independent adaptive quadrature with the algebraic endpoint weight
    p = make_hurst_params(H)
    val, _ = quad(lambda t: 1.0, 0.0, 1.0, weight="alg", wvar=(2 * H - 2, 0.0))
    val *= p.c_H**2 * (H - 0.5) / 2.0
    assert integrated_var_drh(0.0, 1.0, p) == pytest.approx(val, rel=1e-9)


# ---------------------------------------------------------------------------
# truncation budget
# ---------------------------------------------------------------------------

def test_tail_variance_formula():
    # direct kernel-energy integral beyond the depth
    a = P75.a
    L = 50.0
    exact = P75.c_H**2 * a * a * quad(lambda u: (1.0 + u) ** (2 * a - 2), L, np.inf)[0]
    assert drh_tail_variance(1.0, L, P75) == pytest.approx(exact, rel=1e-10)
    assert drh_relative_tail(1.0, L, P75) == pytest.approx(
        drh_tail_variance(1.0, L, P75) / var_drh(1.0, 0.0, P75), rel=1e-12
    )


def test_auto_depth_modest_budget_uncapped():
    # (ratio0/tol)^(1/(2-2H)) - 1 horizons; at H=0.75 and tol=0.02 this is 2499
    L = solve_truncation_depth(1.0, P75, tol=0.02)
    assert L == pytest.approx(2499.0, rel=1e-12)
    assert drh_relative_tail(1.0, L, P75) == pytest.approx(0.02, rel=1e-3)


def test_auto_depth_caps_with_warning():
    with pytest.warns(TruncationWarning):
        L = solve_truncation_depth(1.0, P75, tol=1e-4)
    assert L == 1.0e4
    # loose budgets need no more than one horizon of history
    assert solve_truncation_depth(1.0, P75, tol=5.0) == 1.0


# ---------------------------------------------------------------------------
# discretization fidelity (deterministic, against quadrature oracles)
# ---------------------------------------------------------------------------

def test_discrete_variances_match_kernel_energy():
    g = accept_grid()
    w = _decomp_weights(g, P75)
    a, L, c2 = P75.a, g.L, P75.c_H**2

    v_dr = w.refined_to_source(w.Wdr[-1])
    exact_dr = c2 * a * a * quad(lambda u: (1 + u) ** (2 * a - 2), 0, L, limit=500)[0]
    assert float(v_dr @ v_dr) == pytest.approx(exact_dr, rel=1e-3)

    v_r = w.refined_to_source(w.Wr[-1])
    f2 = lambda u: ((1 + u) ** a - u**a) ** 2
    exact_r = c2 * (
        quad(f2, 0, 100, limit=500)[0] + quad(f2, 100, L, limit=500)[0]
    )
    assert float(v_r @ v_r) == pytest.approx(exact_r, rel=1e-3)

    v_w = w.Wf[-1] * np.sqrt(g.dt_future)
    assert float(v_w @ v_w) == pytest.approx(var_wh(1.0, 0.0, P75), rel=1e-4)

    # reconstruction at the horizon, against the unit increment variance
    total = float(v_r @ v_r) + float(v_w @ v_w)
    assert total == pytest.approx(1.0, abs=2.5e-3)


def test_discrete_cell_variances_integrate_closed_form():
    # per-cell evaluation points reproduce int Var DR_H exactly up to the
    # reported truncation deficit and the graded-refinement error
    g = accept_grid()
    w = _decomp_weights(g, P75)
    V = w.refined_to_source(w.Wdrc)
    disc = float(np.einsum("ij,ij->i", V, V).sum() * g.dt_future)
    tail = (
        P75.c_H**2 * P75.a**2 / (2 - 2 * P75.H)
        * quad(lambda t: (t + g.L) ** (2 * P75.H - 2), 0, 1)[0]
    )
    assert disc == pytest.approx(integrated_var_drh(0.0, 1.0, P75) - tail, rel=1e-3)


def test_cell_times_sit_inside_cells():
    g = make_grid(0.0, 1.0, 100.0, 50, 40)
    for H in (0.55, 0.75, 0.95):
        w = _decomp_weights(g, make_hurst_params(H))
        off = w.cell_offsets
        nodes = g.future_nodes - g.s
        assert np.all(off > nodes[:-1])
        assert np.all(off < nodes[1:])
    # at H = 3/4 the first evaluation point is a quarter cell in
    w = _decomp_weights(g, P75)
    assert w.cell_offsets[0] == pytest.approx(g.dt_future / 4.0, rel=1e-12)


# ---------------------------------------------------------------------------
# path simulation contracts
# ---------------------------------------------------------------------------

def small_grid():
    return make_grid(0.0, 1.0, 50.0, 100, 20)


def test_path_origin_and_reconstruction():
    g = small_grid()
    path = simulate_decomposition(sample_driver(g, 4), P75)
    assert path.w[0] == 0.0 and path.r[0] == 0.0 and path.dr[0] == 0.0
    assert np.array_equal(path.increment, path.w + path.r)
    assert path.times.shape == (21,)
    assert path.dr_cells.shape == (20,)
    assert path.tail_relative == pytest.approx(drh_relative_tail(1.0, 50.0, P75))


def test_path_deterministic():
    g = small_grid()
    p1 = simulate_decomposition(sample_driver(g, 11), P75)
    p2 = simulate_decomposition(sample_driver(g, 11), P75)
    for attr in ("w", "r", "dr", "increment", "dr_cells"):
        assert np.array_equal(getattr(p1, attr), getattr(p2, attr))


def test_measurability_split():
    # past functionals ignore the future window and vice versa
    g = small_grid()
    d = sample_driver(g, 21)
    base = simulate_decomposition(d, P75)

    inc = d.increments.copy()
    inc[g.n_past:] = inc[g.n_past:][::-1].copy()
    permuted_future = BrownianDriver(grid=g, seed=d.seed, increments=inc)
    pf = simulate_decomposition(permuted_future, P75)
    assert np.array_equal(pf.r, base.r)
    assert np.array_equal(pf.dr, base.dr)
    assert np.array_equal(pf.dr_cells, base.dr_cells)
    assert not np.array_equal(pf.w, base.w)

    inc2 = d.increments.copy()
    inc2[: g.n_past] = inc2[: g.n_past][::-1].copy()
    permuted_past = BrownianDriver(grid=g, seed=d.seed, increments=inc2)
    pp = simulate_decomposition(permuted_past, P75)
    assert np.array_equal(pp.w, base.w)
    assert not np.array_equal(pp.r, base.r)


def test_driver_shape_guard():
    g = small_grid()
    with pytest.raises(ValueError):
        BrownianDriver(grid=g, seed=0, increments=np.zeros(7))


# ---------------------------------------------------------------------------
# difference quotient
# ---------------------------------------------------------------------------

def test_diff_quotient_domain():
    g = small_grid()
    d = sample_driver(g, 3)
    with pytest.raises(ValueError):
        diff_quotient_error(d, P75, 0.5, 0.0, 100)
    with pytest.raises(ValueError):
        diff_quotient_error(d, P75, 0.5, 0.3, 100)  # |delta| >= (t-s)/2
    with pytest.raises(ValueError):
        diff_quotient_error(d, P75, 0.0, 0.1, 100)  # t == s
    with pytest.raises(ValueError):
        diff_quotient_error(d, P75, 0.5, 0.1, 0)


def test_diff_quotient_converges_with_common_streams():
    g = make_grid(0.0, 1.0, 100.0, 200, 40)
    d = sample_driver(g, 314)
    errs = [
        diff_quotient_error(d, P75, 0.5, delta, 20_000)
        for delta in (0.1, 0.05, 0.025)
    ]
    assert errs[0] > errs[1] > errs[2]
    for hi, lo in zip(errs, errs[1:]):
        assert 0.3 <= lo / hi <= 0.8
    # negative steps are allowed and comparable in size
    back = diff_quotient_error(d, P75, 0.5, -0.05, 20_000)
    assert back == pytest.approx(errs[1], rel=0.25)


def test_diff_quotient_deterministic():
    g = small_grid()
    d = sample_driver(g, 17)
    a = diff_quotient_error(d, P75, 0.5, 0.1, 500)
    b = diff_quotient_error(d, P75, 0.5, 0.1, 500)
    assert a == b
