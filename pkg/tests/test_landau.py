from __future__ import annotations

import numpy as np
import pytest

from vplsolver.landau import (DissipationNormSpec, apply_A_and_K, apply_Gamma, apply_L, assemble_L,
                              build_tensors, gamma_direct, k_bound_ratio, l2D_norm, l2D_profile,
                              l2D_sigma_form, phi_kernel, sigma_growth_exponent, smooth_cutoff,
                              validate_weight_params, weight_params_for_gamma, weight_w)
from vplsolver.macro import kernel_functions, project
from vplsolver.velocity import build_grid, l2v_inner, pair_norm


def random_pair(grid, rng, decay=0.5):
    return rng.standard_normal((2, grid.size)) * grid.sqrt_mu ** decay


# -- kernel -----------------------------------------------------------------

def test_phi_examples():
    assert np.allclose(phi_kernel([1.0, 0, 0], -2.0), np.diag([0, 1, 1]))
    assert np.allclose(phi_kernel([0, 2.0, 0], 0.0), 4 * np.diag([1, 0, 1]))
    assert np.allclose(phi_kernel([0, 0, 0], -2.0), 0)


def test_phi_annihilates_argument(rng):
    u = rng.standard_normal((100, 3))
    for gamma in (-2.0, -1.0, 0.0, 1.0):
        phi = phi_kernel(u, gamma)
        assert np.max(np.abs(np.einsum("nij,nj->ni", phi, u))) < 1e-12
        assert np.allclose(phi, np.swapaxes(phi, 1, 2))
        ev = np.linalg.eigvalsh(phi)
        r = np.linalg.norm(u, axis=1) ** (gamma + 2)
        assert np.allclose(ev, np.stack([np.zeros(100), r, r], axis=1), atol=1e-12)


def test_smooth_cutoff_limits():
    r = np.array([0.0, 0.4, 0.5, 1.0, 1.01, 5.0])
    chi = smooth_cutoff(r, 0.5)
    assert chi[0] == 1 and chi[1] == 1 and chi[2] == 1
    assert chi[-1] == 0 and chi[-2] == 0
    assert np.all(np.diff(smooth_cutoff(np.linspace(0, 2, 200), 0.5)) <= 0)


# -- tensors ----------------------------------------------------------------

def test_sigma_at_origin_isotropic(tensors16):
    s0 = tensors16.sigma_at([[0.0, 0.0, 0.0]])[0]
    assert np.allclose(s0, (2.0 / 3.0) * np.eye(3), atol=1e-6)


def test_sigma_psd(tensors8):
    s = np.moveaxis(tensors8.sigma_ij, -1, 0)
    assert np.allclose(s, np.swapaxes(s, 1, 2))
    assert np.min(np.linalg.eigvalsh(s)) > -1e-12


def test_sigma_i_vanishes_at_origin():
    g = build_grid(16)
    t = build_tensors(g, -1.0)
    # sigma^i is odd: the four innermost nodes around the origin cancel in pairs
    inner = np.argsort(g.speed2)[:8]
    assert np.allclose(t.sigma_i[:, inner].sum(axis=1), 0, atol=1e-12)


@pytest.mark.parametrize("gamma", [-2.0, -1.0, 0.0])
def test_sigma_growth_rate(gamma):
    g = build_grid(16)
    p, C = sigma_growth_exponent(build_tensors(g, gamma))
    assert abs(p - (gamma + 2)) <= 0.3
    assert C > 0


def test_build_tensors_rejects_gamma(grid8):
    with pytest.raises(ValueError):
        build_tensors(grid8, -3.0)


# -- linearized operator -------------------------------------------------------

def test_kernel_examples(tensors16, grid16):
    s = grid16.sqrt_mu
    v = grid16.nodes
    scale = max(pair_norm(grid16, apply_L(tensors16, grid16, random_pair(grid16, np.random.default_rng(0))))
                / pair_norm(grid16, random_pair(grid16, np.random.default_rng(0))), 1.0)
    for f in (np.stack([s, s]), np.stack([s, 0 * s]), np.stack([v[:, 1] * s] * 2),
              np.stack([(grid16.speed2 - 3) * s] * 2)):
        assert pair_norm(grid16, apply_L(tensors16, grid16, f)) / (scale * pair_norm(grid16, f)) < 1e-8


def test_self_adjoint(tensors8, grid8, rng):
    f, g = random_pair(grid8, rng), random_pair(grid8, rng)
    a = l2v_inner(grid8, apply_L(tensors8, grid8, f), g)
    b = l2v_inner(grid8, f, apply_L(tensors8, grid8, g))
    assert a == pytest.approx(b, rel=1e-12)


def test_dense_matches_matrix_free(tensors8, grid8, rng):
    mats = assemble_L(tensors8)
    f = random_pair(grid8, rng)
    assert np.allclose(mats.apply(f), apply_L(tensors8, grid8, f), rtol=1e-12, atol=1e-12)


def test_null_space_dimension_on_hermite_span(tensors8, grid8):
    # low-order polynomial pairs: the collision invariants span a 6-dimensional
    # null space (a_+, a_-, b_1..3, c); every other combination is damped
    v, r2, s = grid8.nodes, grid8.speed2, grid8.sqrt_mu
    polys = [np.ones(grid8.size), v[:, 0], v[:, 1], v[:, 2], v[:, 0] ** 2, v[:, 1] ** 2, v[:, 2] ** 2,
             v[:, 0] * v[:, 1], v[:, 0] * v[:, 2], v[:, 1] * v[:, 2], r2 * v[:, 0], r2 * v[:, 1], r2 * v[:, 2]]
    basis = []
    for p in polys:
        basis.append(np.stack([p * s, 0 * s]))
        basis.append(np.stack([0 * s, p * s]))
    B = np.array(basis).reshape(len(basis), -1)
    w = np.sqrt(np.concatenate([grid8.weights] * 2))
    Q, _ = np.linalg.qr((B * w).T)
    LB = np.array([apply_L(tensors8, grid8, (q / w).reshape(2, -1)).reshape(-1) * w for q in Q.T])
    sv = np.linalg.svd(LB @ Q, compute_uv=False)
    sv = np.sort(sv)
    assert np.all(sv[:6] < 1e-10 * sv[-1])
    assert sv[6] > 1e-3 * sv[-1]


def test_coercivity_on_microscopic_part(tensors8, grid8, rng):
    spec = DissipationNormSpec(-2.0)
    ratios = []
    for _ in range(50):
        f = random_pair(grid8, rng)
        _, micro = project(grid8, f)
        lhs = -np.real(l2v_inner(grid8, apply_L(tensors8, grid8, f), f))
        ratios.append(lhs / l2D_norm(spec, grid8, micro))
    assert min(ratios) > 0


def test_splitting_identity(tensors8, grid8, rng):
    f = random_pair(grid8, rng)
    A, K = apply_A_and_K(tensors8, grid8, f)
    Lf = apply_L(tensors8, grid8, f)
    assert pair_norm(grid8, -A + K - Lf) <= 1e-10 * pair_norm(grid8, Lf)


def test_A_coercive_and_K_bounded(tensors8, grid8, rng):
    spec = DissipationNormSpec(-2.0)
    c0, ck = [], []
    for _ in range(50):
        f = random_pair(grid8, rng)
        A, _ = apply_A_and_K(tensors8, grid8, f)
        c0.append(np.real(l2v_inner(grid8, A, f)) / l2D_norm(spec, grid8, f))
        ck.append(k_bound_ratio(tensors8, grid8, f))
    assert min(c0) > 0
    assert np.isfinite(max(ck)) and max(ck) < 10 * min(ck)


def test_weighted_coercivity_with_compact_remainder(tensors8, grid8, rng):
    """(w^2 (-L) g, g) >= c0 |g|_{D,w}^2 for g supported outside a ball."""
    w = weight_w(0.0, grid8.nodes, 0.05, 2.0, 1.0)
    spec = DissipationNormSpec(-2.0, weight=w)
    outside = np.sqrt(grid8.speed2) > 3.0
    ratios = []
    for _ in range(20):
        g = random_pair(grid8, rng) * outside
        lhs = -np.real(l2v_inner(grid8, w ** 2 * apply_L(tensors8, grid8, g), g))
        ratios.append(lhs / l2D_norm(spec, grid8, g))
    assert min(ratios) > 0


def test_trilinear_constant_stable(tensors8, grid8):
    w = weight_w(0.0, grid8.nodes, 0.05, 2.0, 1.0)
    spec = DissipationNormSpec(-2.0, weight=w)
    dn = lambda f: np.sqrt(l2D_norm(spec, grid8, f))  # noqa: E731

    def batch(seed):
        r = np.random.default_rng(seed)
        out = []
        for _ in range(10):
            g1, g2, g3 = (random_pair(grid8, r) for _ in range(3))
            lhs = abs(l2v_inner(grid8, w ** 2 * apply_Gamma(tensors8, grid8, g1, g2), g3))
            rhs = (pair_norm(grid8, w * g1) * dn(g2) + dn(g1) * pair_norm(grid8, w * g2)) * dn(g3)
            out.append(lhs / rhs)
        return max(out)

    c1, c2 = batch(1), batch(2)
    assert max(c1, c2) / min(c1, c2) < 3


# -- Gamma --------------------------------------------------------------------

def test_gamma_of_maxwellian_vanishes(tensors8, grid8):
    s = np.stack([grid8.sqrt_mu] * 2)
    assert np.max(np.abs(apply_Gamma(tensors8, grid8, s, s))) < 1e-14


def test_gamma_bilinear(tensors8, grid8, rng):
    f, g1, g2 = (random_pair(grid8, rng) for _ in range(3))
    lhs = apply_Gamma(tensors8, grid8, f, g1 + 2 * g2)
    rhs = apply_Gamma(tensors8, grid8, f, g1) + 2 * apply_Gamma(tensors8, grid8, f, g2)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-15)


def test_gamma_matches_direct_summation(tensors8, grid8, rng):
    f, g = random_pair(grid8, rng, 1.0), random_pair(grid8, rng, 1.0)
    ref = gamma_direct(grid8, -2.0, f, g)
    got = apply_Gamma(tensors8, grid8, f, g)
    assert np.max(np.abs(got - ref)) <= 1e-8 * np.max(np.abs(ref))


def test_gamma_conserves_collision_invariants(tensors8, grid8, rng):
    f, g = random_pair(grid8, rng), random_pair(grid8, rng)
    G = apply_Gamma(tensors8, grid8, f, f)
    for psi in kernel_functions(grid8)[[0, 1, 2, 5]]:
        assert abs(l2v_inner(grid8, G, psi)) < 1e-13 * pair_norm(grid8, G)


# -- dissipation norm and weight ----------------------------------------------------

def test_l2D_basic(grid8, tensors8, rng):
    spec = DissipationNormSpec(-2.0)
    assert l2D_norm(spec, grid8, np.zeros((2, grid8.size))) == 0
    f = random_pair(grid8, rng)
    assert l2D_norm(spec, grid8, 2 * f) == pytest.approx(4 * l2D_norm(spec, grid8, f), rel=1e-14)
    assert l2D_profile(spec, grid8, f).shape == (2,)


def test_l2D_equivalent_to_sigma_form(rng):
    # ratio of the two forms stays inside a fixed band on several grids
    ratios = []
    for n in (8, 12):
        g = build_grid(n)
        t = build_tensors(g, -2.0)
        spec = DissipationNormSpec(-2.0)
        s = g.sqrt_mu[None]
        for f in (s, random_pair(g, rng)[:1]):
            ratios.append(l2D_norm(spec, g, f) / l2D_sigma_form(t, g, f))
    assert min(ratios) > 0
    assert max(ratios) / min(ratios) < 10


def test_weight_function():
    v = build_grid(8).nodes
    assert np.all(weight_w(3.0, v, 0.0, 2.0, 1.0) == 1.0)
    w = [weight_w(t, v, 0.1, 2.0, 1.0) for t in (0.0, 1.0, 10.0, 1e6)]
    assert all(np.all(a >= b) for a, b in zip(w, w[1:]))
    assert np.allclose(w[-1], 1.0, atol=1e-4)
    with pytest.raises(ValueError):
        validate_weight_params(0.2, 2.0, 1.0)
    with pytest.raises(ValueError):
        weight_w(0.0, v, 0.2, 2.0, 1.0)


def test_weight_exponent_selection():
    assert weight_params_for_gamma(-2.0, 0.05, 1.0) == (0.05, 2.0, 1.0)
    assert weight_params_for_gamma(-1.5, 0.05, 1.0)[1] == 1.5
    assert weight_params_for_gamma(-1.0, 0.05, 1.0)[0] == 0.0
