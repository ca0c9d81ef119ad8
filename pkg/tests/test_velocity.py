from __future__ import annotations

import math

import numpy as np
import pytest

from vplsolver.velocity import (build_grid, discrete_moment, double_factorial, gaussian_moment_1d,
                                l2v_inner, maxwellian, moment_table, normalized_gaussian_moment,
                                pair_norm)

SQ2PI = math.sqrt(2 * math.pi)


def test_grid_n16_mass(grid16):
    assert grid16.size == 4096
    assert abs(np.sum(grid16.weights * grid16.mu) - 1.0) <= 1e-6


def test_grid_n4_coarse_mass_matches_product_rule():
    # at n=4 (h=3) the midpoint rule misses ~half the mass; the oracle is the
    # product of the exact 1D midpoint sums, not the continuous value 1
    g = build_grid(4)
    h = 3.0
    nodes = np.array([-4.5, -1.5, 1.5, 4.5])
    one_d = np.sum(h * np.exp(-nodes ** 2 / 2)) / SQ2PI
    assert np.isclose(np.sum(g.weights * g.mu), one_d ** 3, rtol=1e-14)
    assert g.mass_error == pytest.approx(one_d ** 3 - 1.0)


@pytest.mark.parametrize("n,v_max", [(5, 6.0), (2, 6.0), (8, 0.0), (8, -1.0)])
def test_grid_rejects_bad_parameters(n, v_max):
    with pytest.raises(ValueError):
        build_grid(n, v_max)


def test_grid_reflection_closure(grid8):
    v = grid8.nodes
    m = grid8.mirror_index
    assert np.array_equal(v[m][:, 0], -v[:, 0])
    assert np.array_equal(v[m][:, 1:], v[:, 1:])
    # full inversion maps nodes to nodes
    s = {tuple(x) for x in np.round(v, 12)}
    assert all(tuple(x) in s for x in np.round(-v, 12))
    assert np.all(grid8.weights > 0)


def test_sqrt_mu_consistent(grid8):
    assert np.allclose(grid8.sqrt_mu ** 2, grid8.mu)
    assert np.allclose(grid8.mu, maxwellian(grid8.nodes))


@pytest.mark.parametrize("p,expected", [(0, 1), (2, 1), (4, 3), (6, 15), (10, 945)])
def test_gaussian_moment_double_factorial(p, expected):
    assert gaussian_moment_1d(p) == pytest.approx(expected * SQ2PI, rel=1e-15)


@pytest.mark.parametrize("p", [-2, 3, 1])
def test_gaussian_moment_rejects(p):
    with pytest.raises(ValueError):
        gaussian_moment_1d(p)


def test_double_factorial_convention():
    assert double_factorial(-1) == 1
    assert double_factorial(0) == 1
    assert double_factorial(7) == 105


def test_odd_moments_exactly_zero(grid16):
    for e in [(1, 0, 0), (0, 3, 0), (2, 1, 4), (5, 5, 5)]:
        assert discrete_moment(grid16, e) == 0.0


def test_even_moments_match_oracle(grid16):
    for e in [(2, 0, 0), (2, 2, 0), (4, 2, 2), (0, 0, 6)]:
        ref = normalized_gaussian_moment(e)
        assert discrete_moment(grid16, e) == pytest.approx(ref, rel=1e-4)


def test_moment_table_rows(grid16):
    rows = moment_table(grid16)
    assert [r["p"] for r in rows] == [0, 2, 4, 6, 8, 10]
    for r in rows[:-1]:
        assert r["rel_err"] <= 1e-4


def test_moment_p10_improves_with_v_max():
    err6 = moment_table(build_grid(16, 6.0))[-1]["rel_err"]
    err7 = moment_table(build_grid(16, 7.0))[-1]["rel_err"]
    assert err7 < 1e-4 < err6


def test_gaussian_integral_constants(grid16):
    m2m2 = discrete_moment(grid16, (4, 0, 0)) - discrete_moment(grid16, (2, 0, 0))
    m2j2 = discrete_moment(grid16, (2, 2, 0)) - discrete_moment(grid16, (2, 0, 0))
    seven = (discrete_moment(grid16, (4, 2, 0)) + discrete_moment(grid16, (2, 4, 0))
             + discrete_moment(grid16, (2, 2, 2)))
    assert m2m2 == pytest.approx(2.0, rel=1e-4)
    assert abs(m2j2) <= 1e-4
    assert seven == pytest.approx(7.0, rel=1e-4)


def test_l2v_inner_examples(grid16):
    s = grid16.sqrt_mu
    v = grid16.nodes
    assert l2v_inner(grid16, s, s) == pytest.approx(1.0, abs=1e-6)
    assert abs(l2v_inner(grid16, v[:, 0] * s, v[:, 1] * s)) <= 1e-12
    assert l2v_inner(grid16, v[:, 0] * s, v[:, 0] * s) == pytest.approx(1.0, rel=1e-4)


def test_l2v_inner_hermitian(grid8, rng):
    f = rng.standard_normal(grid8.size) + 1j * rng.standard_normal(grid8.size)
    g = rng.standard_normal(grid8.size) + 1j * rng.standard_normal(grid8.size)
    assert l2v_inner(grid8, f, g) == pytest.approx(np.conj(l2v_inner(grid8, g, f)))
    ff = l2v_inner(grid8, f, f)
    assert abs(ff.imag) < 1e-12 and ff.real >= 0
    assert l2v_inner(grid8, 2j * f, g) == pytest.approx(2j * l2v_inner(grid8, f, g))


def test_pair_norm(grid8):
    pair = np.stack([grid8.sqrt_mu, grid8.sqrt_mu])
    assert pair_norm(grid8, pair) == pytest.approx(np.sqrt(2 * np.sum(grid8.weights * grid8.mu)))


def test_derivative_exact_on_quadratics(grid8):
    u = grid8.nodes[:, 0] ** 2 - 3 * grid8.nodes[:, 1] + 2
    d = grid8.grad(u)
    assert np.allclose(d[0], 2 * grid8.nodes[:, 0])
    assert np.allclose(d[1], -3)
    assert np.allclose(d[2], 0)


def test_grad_transpose(grid8, rng):
    u = rng.standard_normal((2, grid8.size))
    g = rng.standard_normal((3, 2, grid8.size))
    lhs = np.sum(grid8.grad(u) * g)
    rhs = np.sum(u * grid8.grad_T(g))
    assert lhs == pytest.approx(rhs, rel=1e-12)
