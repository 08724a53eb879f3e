"""Grid, parameter and driver contracts, and the exact Gaussian oracle."""

import numpy as np
import pytest

from fbmdrift import (
    fbm_covariance,
    make_grid,
    make_hurst_params,
    sample_driver,
    simulate_fbm_exact,
)


# ---------------------------------------------------------------------------
# normalization constant
# ---------------------------------------------------------------------------

def _mpmath_c(H):
    import mpmath as mp

    mp.mp.dps = 50
    Hm = mp.mpf(repr(H))
    return float(
        mp.sqrt(
            2 * Hm * mp.gamma(mp.mpf(3) / 2 - Hm)
            / (mp.gamma(mp.mpf(1) / 2 + Hm) * mp.gamma(2 - 2 * Hm))
        )
    )


def test_c_h_at_three_quarters():
    p = make_hurst_params(0.75)
    assert p.c_H == pytest.approx(_mpmath_c(0.75), rel=1e-13)
    assert p.c_H == pytest.approx(1.069645, abs=1e-6)
    assert p.c_H**2 == pytest.approx(1.144139, abs=1e-6)


def test_c_h_continuity_toward_brownian_case():
    p = make_hurst_params(0.5001)
    assert p.c_H == pytest.approx(_mpmath_c(0.5001), rel=1e-12)
    assert abs(p.c_H - 1.0) < 5e-4


@pytest.mark.parametrize("H", [0.5, 1.0, 0.49, 1.01, 0.0, -0.3])
def test_hurst_domain_rejected(H):
    with pytest.raises(ValueError):
        make_hurst_params(H)


def test_c_h_finite_positive_sweep():
    for H in np.arange(0.51, 1.0, 0.01):
        p = make_hurst_params(float(H))
        assert np.isfinite(p.c_H) and p.c_H > 0.0


# ---------------------------------------------------------------------------
# time grid
# ---------------------------------------------------------------------------

def test_grid_cell_widths():
    g = make_grid(0.0, 1.0, 10.0, 1000, 100)
    assert g.dt_past == pytest.approx(0.01)
    assert g.dt_future == pytest.approx(0.01)
    g2 = make_grid(1.0, 2.0, 5.0, 500, 200)
    assert g2.dt_future == pytest.approx(0.005)


def test_grid_nodes_hit_endpoints():
    g = make_grid(0.5, 2.5, 7.0, 35, 17)
    assert g.past_nodes[0] == 0.5 - 7.0
    assert g.past_nodes[-1] == 0.5
    assert g.future_nodes[0] == 0.5
    assert g.future_nodes[-1] == 2.5
    assert np.all(np.diff(g.past_nodes) > 0)
    assert np.all(np.diff(g.future_nodes) > 0)


@pytest.mark.parametrize(
    "args",
    [
        (0.0, 0.0, 1.0, 10, 10),   # T == s
        (0.0, -1.0, 1.0, 10, 10),  # T < s
        (0.0, 1.0, 0.0, 10, 10),   # L == 0
        (0.0, 1.0, -2.0, 10, 10),  # L < 0
        (0.0, 1.0, 1.0, 0, 10),    # n_past < 1
        (0.0, 1.0, 1.0, 10, 1),    # n_future < 2
    ],
)
def test_grid_rejects_bad_arguments(args):
    with pytest.raises(ValueError):
        make_grid(*args)


# ---------------------------------------------------------------------------
# driver sampling
# ---------------------------------------------------------------------------

def test_driver_deterministic_and_shaped():
    g = make_grid(0.0, 1.0, 2.0, 40, 20)
    d1 = sample_driver(g, 123)
    d2 = sample_driver(g, 123)
    assert np.array_equal(d1.increments, d2.increments)
    assert d1.increments.shape == (60,)
    d3 = sample_driver(g, 124)
    assert not np.array_equal(d1.increments, d3.increments)


def test_driver_normalized_increment_moments():
    # pool 1e6 normalized increments across seeds
    g = make_grid(0.0, 1.0, 4.0, 500, 500)
    scale = np.concatenate(
        [np.full(500, np.sqrt(g.dt_past)), np.full(500, np.sqrt(g.dt_future))]
    )
    acc = np.empty((1000, 1000))
    for i in range(1000):
        acc[i] = sample_driver(g, 5000 + i).increments / scale
    z = acc.ravel()
    assert abs(z.mean()) < 3e-3
    assert abs(z.var() - 1.0) < 5e-3


# ---------------------------------------------------------------------------
# covariance oracle
# ---------------------------------------------------------------------------

def test_fbm_covariance_values():
    p = make_hurst_params(0.75)
    assert fbm_covariance(1.0, 1.0, p) == pytest.approx(1.0)
    assert fbm_covariance(1.0, 2.0, p) == pytest.approx(np.sqrt(2.0), rel=1e-12)
    assert fbm_covariance(0.0, 5.0, make_hurst_params(0.9)) == 0.0
    # 0.5*(0.5^1.5 + 1 - 0.5^1.5) for the half/full pair
    assert fbm_covariance(0.5, 1.0, p) == pytest.approx(0.5, rel=1e-14)


def test_fbm_covariance_rejects_negative_times():
    p = make_hurst_params(0.75)
    with pytest.raises(ValueError):
        fbm_covariance(-0.5, 1.0, p)


def test_exact_oracle_empty_and_deterministic():
    p = make_hurst_params(0.75)
    assert simulate_fbm_exact(np.array([]), p, 1).size == 0
    a = simulate_fbm_exact(np.array([0.5, 1.0]), p, 9)
    b = simulate_fbm_exact(np.array([0.5, 1.0]), p, 9)
    assert np.array_equal(a, b)


def test_exact_oracle_rejects_nonincreasing_times():
    p = make_hurst_params(0.75)
    with pytest.raises(ValueError):
        simulate_fbm_exact(np.array([0.5, 0.5]), p, 1)
    with pytest.raises(ValueError):
        simulate_fbm_exact(np.array([1.0, 0.5]), p, 1)
    with pytest.raises(ValueError):
        simulate_fbm_exact(np.array([-1.0, 0.5]), p, 1)


def test_exact_oracle_terminal_variance():
    p = make_hurst_params(0.75)
    n = 100_000
    draws = np.fromiter(
        (simulate_fbm_exact(np.array([1.0]), p, 10_000 + i)[0] for i in range(n)),
        dtype=float,
        count=n,
    )
    var = float(np.mean(draws * draws))
    se = float(np.std(draws * draws, ddof=1) / np.sqrt(n))
    assert abs(var - 1.0) <= 3.0 * se


def test_exact_oracle_pair_covariance():
    p = make_hurst_params(0.75)
    n = 100_000
    draws = np.vstack(
        [simulate_fbm_exact(np.array([0.5, 1.0]), p, 77_000 + i) for i in range(n)]
    )
    prod = draws[:, 0] * draws[:, 1]
    cov = float(np.mean(prod))
    se = float(np.std(prod, ddof=1) / np.sqrt(n))
    assert abs(cov - 0.5) <= 3.0 * se
