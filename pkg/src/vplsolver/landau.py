"""Landau kernel, Maxwellian convolution tensors and the linearized operators.

Discretization
--------------
Everything is written in the conjugated variable ``h = f / sqrt(mu)``.  For
``F = mu (1 + h)`` the Landau flux reduces to

    Q(G, F) = div_v  int phi(v - v*) mu mu* [ h_G(v*) grad h_F(v) - h_F(v) grad h_G(v*) ] dv*

because ``phi(u) u = 0`` kills the drift terms.  Integrals over ``v*`` are
lattice sums, ``grad`` is the lattice derivative of :class:`VelocityGrid`
(exact on quadratics) and ``div`` is minus its transpose.  The linearized
operator therefore comes out as a symmetric quadratic form

    sum_a (L_a f, g_a) = -1/2 sum_{a,b} sum_{v,v*} w w* mu mu*
                         (D k_a - D* k_b) . phi(v - v*) (D h_a - D* h_b)

whose null space contains the six collision invariants exactly, whatever
the resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp

from .velocity import VelocityGrid, pair_norm

# unique tensor components (i <= j) in storage order
PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
_PAIR_INDEX = {}
for _p, (_i, _j) in enumerate(PAIRS):
    _PAIR_INDEX[(_i, _j)] = _p
    _PAIR_INDEX[(_j, _i)] = _p


def phi_kernel(u, gamma: float) -> np.ndarray:
    """Landau kernel ``(I - u u^T / |u|^2) |u|^{gamma + 2}``.

    Vectorized over leading axes of ``u`` (shape (..., 3)).  At ``u = 0`` the
    zero tensor is returned (for ``gamma = -2`` this is a convention on a
    single node).
    """
    u = np.asarray(u, dtype=float)
    r2 = np.sum(u * u, axis=-1)
    safe = np.where(r2 > 0, r2, 1.0)
    proj = np.eye(3) - u[..., :, None] * u[..., None, :] / safe[..., None, None]
    scale = np.where(r2 > 0, safe ** ((gamma + 2.0) / 2.0), 0.0)
    return proj * scale[..., None, None]


def smooth_cutoff(r: np.ndarray, eps: float) -> np.ndarray:
    """C-infinity ``chi(r)``: 1 for ``r < eps``, 0 for ``r > 2 eps``."""
    r = np.asarray(r, dtype=float)
    s = np.clip((r - eps) / eps, 0.0, 1.0)

    def bump(t):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)

    a = bump(1.0 - s)
    b = bump(s)
    return a / (a + b)


class LatticeConvolver:
    """Translation-invariant lattice sums ``sum_{v*} w K(v - v*) u(v*)`` by FFT.

    Holds the transforms of a set of kernels sampled on all lattice offsets.
    """

    def __init__(self, grid: VelocityGrid, kernels: np.ndarray):
        # kernels: (K, 2n-1, 2n-1, 2n-1) sampled at offsets -(n-1)..(n-1)
        n = grid.n_per_axis
        self.grid = grid
        self.m = 2 * n
        padded = np.zeros((kernels.shape[0], self.m, self.m, self.m))
        idx = np.arange(-(n - 1), n) % self.m
        padded[np.ix_(np.arange(kernels.shape[0]), idx, idx, idx)] = kernels
        self.khat = sfft.rfftn(padded * grid.cell_volume, axes=(1, 2, 3))

    def _forward(self, u: np.ndarray) -> np.ndarray:
        # axis-by-axis transform of the zero-padded field; padding zeros are
        # never touched, which roughly halves the work of a full rfftn
        n, m = self.grid.n_per_axis, self.m
        lead = u.shape[:-1]
        u3 = u.reshape(lead + (n, n, n))
        a = sfft.rfft(u3, n=m, axis=-1)
        a = sfft.fft(a, n=m, axis=-2)
        return sfft.fft(a, n=m, axis=-3)

    def _inverse(self, uh: np.ndarray) -> np.ndarray:
        # inverse transform keeping only the first n samples along each axis
        n, m = self.grid.n_per_axis, self.m
        a = sfft.ifft(uh, axis=-3)[..., :n, :, :]
        a = sfft.ifft(a, axis=-2)[..., :n, :]
        out = sfft.irfft(a, n=m, axis=-1)[..., :n]
        return out.reshape(out.shape[:-3] + (n ** 3,))

    def apply(self, which: int, u: np.ndarray) -> np.ndarray:
        """Convolve real or complex node fields with kernel ``which``."""
        if np.iscomplexobj(u):
            return self.apply(which, u.real) + 1j * self.apply(which, u.imag)
        return self._inverse(self.khat[which] * self._forward(u))

    def apply_all(self, u: np.ndarray, kernel_ids) -> np.ndarray:
        """Stack of convolutions of ``u`` with several kernels: (len(ids), ..., N)."""
        if np.iscomplexobj(u):
            return self.apply_all(u.real, kernel_ids) + 1j * self.apply_all(u.imag, kernel_ids)
        uh = self._forward(u)
        return np.stack([self._inverse(self.khat[k] * uh) for k in kernel_ids])

    def apply_vector(self, u3: np.ndarray, kernel_of) -> np.ndarray:
        """``out_i = sum_j K_{ij} * u3_j`` for a 3-vector field ``u3`` (3, ..., N)."""
        if np.iscomplexobj(u3):
            return self.apply_vector(u3.real, kernel_of) + 1j * self.apply_vector(u3.imag, kernel_of)
        uh = [self._forward(u3[j]) for j in range(3)]
        out = []
        for i in range(3):
            acc = sum(self.khat[kernel_of(i, j)] * uh[j] for j in range(3))
            out.append(self._inverse(acc))
        return np.stack(out)


def _offset_vectors(grid: VelocityGrid) -> np.ndarray:
    n = grid.n_per_axis
    d = np.arange(-(n - 1), n) * grid.h
    g = np.stack(np.meshgrid(d, d, d, indexing="ij"), axis=-1)
    return g


def _kernel_components(grid: VelocityGrid, gamma: float, weight=None) -> np.ndarray:
    off = _offset_vectors(grid)
    phi = phi_kernel(off, gamma)
    if weight is not None:
        phi = phi * weight(np.sqrt(np.sum(off ** 2, axis=-1)))[..., None, None]
    return np.stack([phi[..., i, j] for i, j in PAIRS])


@dataclass(eq=False)
class CollisionTensors:
    """Maxwellian convolutions of the Landau kernel on a velocity lattice.

    ``sigma_ij`` has shape (3, 3, N), ``sigma_i`` (3, N), ``div_sigma_ij``
    (3, N) holding ``sum_i d_i sigma^{ij}``, and ``div_sigma_i`` (N,).
    """

    grid: VelocityGrid
    gamma: float
    R: float
    eps: float
    sigma_ij: np.ndarray = field(repr=False)
    sigma_i: np.ndarray = field(repr=False)
    div_sigma_ij: np.ndarray = field(repr=False)
    div_sigma_i: np.ndarray = field(repr=False)
    conv: LatticeConvolver = field(repr=False)
    conv_near: LatticeConvolver = field(repr=False)
    conv_far: LatticeConvolver = field(repr=False)

    def kernel_index(self, i: int, j: int) -> int:
        return _PAIR_INDEX[(i, j)]

    def sigma_at(self, points) -> np.ndarray:
        """Lattice quadrature of ``phi * mu`` at arbitrary points (P, 3) -> (P, 3, 3)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        g = self.grid
        out = np.empty((len(pts), 3, 3))
        for p, x in enumerate(pts):
            phi = phi_kernel(x[None, :] - g.nodes, self.gamma)
            out[p] = np.einsum("nij,n->ij", phi, g.weights * g.mu)
        return out

    @property
    def inner_mask(self) -> np.ndarray:
        return np.sqrt(self.grid.speed2) <= self.R


def build_tensors(grid: VelocityGrid, gamma: float, R: float = 5.0, eps: float = 0.5) -> CollisionTensors:
    """Precompute ``sigma^{ij}``, ``sigma^i`` and their divergences for exponent ``gamma``."""
    if not -2.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [-2, 1], got {gamma}")
    if not R > 0 or not eps > 0:
        raise ValueError("R and eps must be positive")
    comps = _kernel_components(grid, gamma)
    conv = LatticeConvolver(grid, comps)
    near = LatticeConvolver(grid, _kernel_components(grid, gamma, lambda r: smooth_cutoff(r, eps)))
    far = LatticeConvolver(grid, _kernel_components(grid, gamma, lambda r: 1.0 - smooth_cutoff(r, eps)))

    s6 = conv.apply_all(grid.mu, range(6))
    sigma = np.empty((3, 3, grid.size))
    for p, (i, j) in enumerate(PAIRS):
        sigma[i, j] = s6[p]
        sigma[j, i] = s6[p]
    sigma_i = 0.5 * np.einsum("ijn,nj->in", sigma, grid.nodes)
    # centred differences (lattice derivative) of the tensor fields
    dsig = grid.grad(sigma)            # (3 [deriv], 3, 3, N)
    div_ij = np.einsum("iijn->jn", dsig)
    div_i = np.einsum("iin->n", grid.grad(sigma_i))
    return CollisionTensors(grid, float(gamma), float(R), float(eps), sigma, sigma_i,
                            div_ij, div_i, conv, near, far)


# ---------------------------------------------------------------------------
# linearized operator
# ---------------------------------------------------------------------------

def _check(tensors: CollisionTensors, grid: VelocityGrid, f: np.ndarray) -> None:
    if not tensors.grid.same_as(grid):
        raise ValueError("collision tensors were built on a different velocity grid")
    if np.shape(f)[-1] != grid.size:
        raise ValueError("field does not live on this grid")


def _diffusion_flux(tensors: CollisionTensors, gh: np.ndarray) -> np.ndarray:
    # 2 mu sigma grad h, with gh of shape (3, ..., N)
    g = tensors.grid
    return 2.0 * g.mu * np.einsum("ijn,j...n->i...n", tensors.sigma_ij, gh)


def _cross_flux(tensors: CollisionTensors, gh_sum: np.ndarray, convolver: LatticeConvolver) -> np.ndarray:
    # mu [phi * (mu grad h)], summed over the field species
    g = tensors.grid
    return g.mu * convolver.apply_vector(g.mu * gh_sum, tensors.kernel_index)


def _from_flux(grid: VelocityGrid, flux: np.ndarray) -> np.ndarray:
    return -grid.inv_sqrt_mu * grid.grad_T(flux)


def apply_diffusion(tensors: CollisionTensors, grid: VelocityGrid, f: np.ndarray) -> np.ndarray:
    """Diffusion part ``2 d_i(sigma^{ij} d_j f) - 2 sigma^{ij} v_i v_j f / 4 + 2 (d_i sigma^i) f``.

    Species-diagonal; acts on the last axis of ``f`` (any leading shape).
    """
    gh = grid.grad(f * grid.inv_sqrt_mu)
    return _from_flux(grid, _diffusion_flux(tensors, gh))


def apply_convolution_part(tensors: CollisionTensors, grid: VelocityGrid, f: np.ndarray,
                           which: str = "full") -> np.ndarray:
    """Convolution part ``-sum_b mu^{-1/2} d_i {mu [phi^{ij} * (mu d_j (mu^{-1/2} f_b))]}``.

    ``which`` selects the kernel: ``"full"`` (phi), ``"near"`` (phi chi, the
    ``A_1`` piece) or ``"far"`` (phi (1 - chi), the ``K_1`` piece).  Returns the
    same value for both species, broadcast to the pair shape.
    """
    convolver = {"full": tensors.conv, "near": tensors.conv_near, "far": tensors.conv_far}[which]
    gh = grid.grad((f[0] + f[1]) * grid.inv_sqrt_mu)
    out = -_from_flux(grid, _cross_flux(tensors, gh, convolver))
    return np.broadcast_to(out, f.shape).copy()


def apply_L(tensors: CollisionTensors, grid: VelocityGrid, f: np.ndarray) -> np.ndarray:
    """Linearized Landau operator ``[L_+ f, L_- f]`` on a pair ``f`` of shape (2, ..., N)."""
    _check(tensors, grid, f)
    f = np.asarray(f)
    return apply_diffusion(tensors, grid, f) + apply_convolution_part(tensors, grid, f)


def apply_A_and_K(tensors: CollisionTensors, grid: VelocityGrid, f: np.ndarray):
    """Split ``L f = -A f + K f`` with the ball ``|v| <= R`` and the cutoff ``chi``.

    Returns ``(A f, K f)``.  ``-A`` collects the diffusion part, the outer part
    of ``2 (d_i sigma^i) f``, the near-diagonal convolution ``A_1`` and
    ``K_1 - 1_R K_1 1_R``; ``K`` is ``2 (d_i sigma^i) 1_R f + 1_R K_1 1_R f``.
    """
    _check(tensors, grid, f)
    f = np.asarray(f)
    inner = tensors.inner_mask
    potential = 2.0 * tensors.div_sigma_i
    diff = apply_diffusion(tensors, grid, f)
    a1 = apply_convolution_part(tensors, grid, f, "near")
    k1 = apply_convolution_part(tensors, grid, f, "far")
    k1_ball = inner * apply_convolution_part(tensors, grid, inner * f, "far")
    k_part = potential * inner * f + k1_ball
    # the pointwise potential is carried inside the weak-form diffusion part,
    # so only its inner piece is moved over to K
    minus_a = (diff - potential * inner * f) + a1 + (k1 - k1_ball)
    return -minus_a, k_part


# ---------------------------------------------------------------------------
# dense assembly (direct lattice sums)
# ---------------------------------------------------------------------------

def direct_kernel_matrix(grid: VelocityGrid, gamma: float, i: int, j: int) -> np.ndarray:
    """Dense ``w phi^{ij}(v_p - v_q)`` over all node pairs."""
    n = grid.n_per_axis
    idx = np.stack(np.unravel_index(np.arange(grid.size), grid.shape3), axis=1)
    comps = _kernel_components(grid, gamma)[_PAIR_INDEX[(i, j)]]
    out = np.empty((grid.size, grid.size))
    step = max(1, 2 ** 22 // grid.size)
    for s in range(0, grid.size, step):
        d = idx[s:s + step, None, :] - idx[None, :, :] + (n - 1)
        out[s:s + step] = comps[d[..., 0], d[..., 1], d[..., 2]]
    return out * grid.cell_volume


@dataclass(eq=False)
class LinearizedMatrices:
    """Dense ``L`` restricted to species sum and difference.

    For ``s = f_+ + f_-`` and ``d = f_+ - f_-``: ``(Lf)_+ + (Lf)_- = L_sum s`` and
    ``(Lf)_+ - (Lf)_- = L_diff d``.
    """

    L_sum: np.ndarray = field(repr=False)
    L_diff: np.ndarray = field(repr=False)

    def apply(self, f: np.ndarray) -> np.ndarray:
        s = np.tensordot(f[0] + f[1], self.L_sum, axes=([-1], [1]))
        d = np.tensordot(f[0] - f[1], self.L_diff, axes=([-1], [1]))
        return np.stack([0.5 * (s + d), 0.5 * (s - d)])


def assemble_L(tensors: CollisionTensors) -> LinearizedMatrices:
    """Assemble the dense operator by direct (non-FFT) lattice sums."""
    g = tensors.grid
    D = g.grad_sparse()
    S = sp.diags(g.inv_sqrt_mu)
    M = sp.diags(g.mu)
    # T_j = mu D_j mu^{-1/2}
    T = [(M @ Dj @ S).tocsr() for Dj in D]
    B = [(Dj @ S).tocsr() for Dj in D]
    diag = sp.csr_matrix((g.size, g.size))
    for i in range(3):
        for j in range(3):
            diag = diag + B[i].T @ sp.diags(2.0 * g.mu * tensors.sigma_ij[i, j]) @ B[j]
    L_diag = -(diag.toarray())
    cross = np.zeros((g.size, g.size))
    for i, j in PAIRS:
        phi = direct_kernel_matrix(g, tensors.gamma, i, j)
        y = np.asarray((T[j].T @ phi).T)      # phi @ T_j, phi symmetric
        block = np.asarray(T[i].T @ y)
        cross += block
        if i != j:
            cross += block.T
        del phi, y
    L_sum = L_diag + 2.0 * cross
    L_sum = 0.5 * (L_sum + L_sum.T)
    L_diag = 0.5 * (L_diag + L_diag.T)
    return LinearizedMatrices(L_sum, L_diag)


# ---------------------------------------------------------------------------
# nonlinear operator
# ---------------------------------------------------------------------------

def apply_Gamma(tensors: CollisionTensors, grid: VelocityGrid, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Bilinear collision term ``Gamma(f, g)`` for pairs of shape (2, ..., N).

    ``Gamma_a(f, g) = mu^{-1/2} Q(sqrt(mu) (f_+ + f_-), sqrt(mu) g_a)``.
    """
    _check(tensors, grid, f)
    _check(tensors, grid, g)
    f = np.asarray(f)
    g = np.asarray(g)
    hf = (f[0] + f[1]) * grid.inv_sqrt_mu
    hg = g * grid.inv_sqrt_mu
    a = tensors.conv.apply_all(grid.mu * hf, range(6))          # phi^{ij} * (mu h_f)
    dhf = grid.grad(hf)
    b = tensors.conv.apply_vector(grid.mu * dhf, tensors.kernel_index)  # sum_j phi^{ij} * (mu d_j h_f)
    dhg = grid.grad(hg)                                         # (3, 2, ..., N)
    flux = []
    for i in range(3):
        acc = sum(a[_PAIR_INDEX[(i, j)]][None] * dhg[j] for j in range(3))
        flux.append(grid.mu * (acc - hg * b[i][None]))
    return _from_flux(grid, np.stack(flux))


def landau_Q_direct(grid: VelocityGrid, gamma: float, G: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Landau ``Q(G, F)`` by explicit summation over all node pairs.

    Uses the drift-free flux ``mu mu* phi [H_G(v*) grad H_F(v) - H_F(v) grad H_G(v*)]``
    with ``H = . / mu``; no FFTs.  Intended for small grids.
    """
    HG = G / grid.mu
    HF = F / grid.mu
    dG = grid.grad(HG)
    dF = grid.grad(HF)
    diff = grid.nodes[:, None, :] - grid.nodes[None, :, :]
    phi = phi_kernel(diff, gamma)                 # (N, N, 3, 3)
    wmu = grid.weights * grid.mu
    term1 = np.einsum("pqij,q,jp->ip", phi, wmu * HG, dF)
    term2 = np.einsum("pqij,q,jq->ip", phi, wmu, dG) * HF[None, :]
    flux = grid.mu * (term1 - term2)
    return -grid.grad_T(flux)


def gamma_direct(grid: VelocityGrid, gamma: float, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Oracle for :func:`apply_Gamma` built on :func:`landau_Q_direct`."""
    G = grid.sqrt_mu * (f[0] + f[1])
    return np.stack([grid.inv_sqrt_mu * landau_Q_direct(grid, gamma, G, grid.sqrt_mu * g[a])
                     for a in range(2)])


# ---------------------------------------------------------------------------
# norms and weights
# ---------------------------------------------------------------------------

@dataclass
class DissipationNormSpec:
    gamma: float
    weight: np.ndarray | None = None

    def __post_init__(self):
        if self.weight is not None and np.any(np.asarray(self.weight) <= 0):
            raise ValueError("velocity weight must be positive")


def l2D_profile(spec: DissipationNormSpec, grid: VelocityGrid, f: np.ndarray) -> np.ndarray:
    """Squared dissipation norm summed over the node axis only (leading axes kept).

    Three-term form
    ``|w <v>^{g/2} P_v grad f|^2 + |w <v>^{(g+2)/2} (I-P_v) grad f|^2 + |w <v>^{(g+2)/2} f|^2``
    with ``P_v`` the projection on ``v/|v|``.  ``v = 0`` is never a node of the
    cell-centred lattice; there ``P_v`` would be taken as zero.
    """
    f = np.asarray(f)
    w = 1.0 if spec.weight is None else np.asarray(spec.weight)
    jv2 = 1.0 + grid.speed2
    r = np.sqrt(grid.speed2)
    unit = np.where(r[:, None] > 0, grid.nodes / np.where(r > 0, r, 1.0)[:, None], 0.0)
    gf = grid.grad(f)
    radial = np.einsum("ni,i...n->...n", unit, gf)
    par = np.abs(radial) ** 2
    tot = np.sum(np.abs(gf) ** 2, axis=0)
    perp = np.maximum(tot - par, 0.0)
    dens = w ** 2 * (jv2 ** (spec.gamma / 2) * par
                     + jv2 ** ((spec.gamma + 2) / 2) * (perp + np.abs(f) ** 2))
    return np.sum(grid.weights * dens, axis=-1)


def l2D_norm(spec: DissipationNormSpec, grid: VelocityGrid, f: np.ndarray) -> float:
    """Squared ``|f|_{L^2_{D,w}}`` (three-term form), summed over all leading axes."""
    return float(np.sum(l2D_profile(spec, grid, f)))


def l2D_sigma_form(tensors: CollisionTensors, grid: VelocityGrid, f: np.ndarray,
                   weight: np.ndarray | None = None, per_leading: bool = False):
    """Squared ``|f|_{L^2_{D,w}}`` in the sigma form.

    ``sum w^2 (sigma^{ij} d_i f conj(d_j f) + sigma^{ij} (v_i/2)(v_j/2) |f|^2)``.
    With ``per_leading`` the sum over the last axis only is returned.
    """
    f = np.asarray(f)
    w2 = 1.0 if weight is None else np.asarray(weight) ** 2
    gf = grid.grad(f)
    sig = tensors.sigma_ij
    grad_term = np.real(np.einsum("ijn,i...n,j...n->...n", sig, gf, np.conj(gf)))
    sv = np.einsum("ijn,ni,nj->n", sig, grid.nodes, grid.nodes) / 4.0
    dens = w2 * (grad_term + sv * np.abs(f) ** 2)
    out = np.sum(grid.weights * dens, axis=-1)
    return out if per_leading else float(np.sum(out))


def weight_w(t: float, v: np.ndarray, q: float, theta: float, N: float) -> np.ndarray:
    """Velocity weight ``exp(q <v>^theta / (1 + t)^N)`` at nodes ``v`` (..., 3)."""
    validate_weight_params(q, theta, N)
    jv = np.sqrt(1.0 + np.sum(np.asarray(v, dtype=float) ** 2, axis=-1))
    return np.exp(q * jv ** theta / (1.0 + t) ** N)


def validate_weight_params(q: float, theta: float, N: float) -> None:
    if not 1.0 <= theta <= 2.0:
        raise ValueError(f"theta must lie in [1, 2], got {theta}")
    if q < 0:
        raise ValueError(f"q must be non-negative, got {q}")
    if theta == 2.0 and q >= 0.125:
        raise ValueError(f"q must be below 1/8 when theta = 2, got {q}")
    if N < 0:
        raise ValueError(f"N must be non-negative, got {N}")


def weight_params_for_gamma(gamma: float, q: float, N: float) -> tuple[float, float, float]:
    """Weight exponents per regime: ``theta = -gamma`` for gamma in [-2, -1), no weight otherwise."""
    if gamma < -1.0:
        return q, -gamma, N
    return 0.0, 1.0, N


# ---------------------------------------------------------------------------
# measured constants
# ---------------------------------------------------------------------------

def k_bound_ratio(tensors: CollisionTensors, grid: VelocityGrid, f: np.ndarray) -> float:
    """``|K f|_{L^2_v} / |mu^{1/10} f|_{L^2_v}`` for one pair ``f``."""
    _, k = apply_A_and_K(tensors, grid, f)
    return float(pair_norm(grid, k) / pair_norm(grid, grid.mu ** 0.1 * f))


def sigma_growth_exponent(tensors: CollisionTensors, r_min: float = 2.0, r_max: float | None = None):
    """Fit ``|sigma(v)| ~ C (1 + |v|)^p`` along the v1 axis; returns ``(p, C)``."""
    g = tensors.grid
    r_max = g.v_max - 1.0 if r_max is None else r_max
    rs = np.linspace(r_min, r_max, 12)
    pts = np.stack([rs, np.zeros_like(rs), np.zeros_like(rs)], axis=1)
    norms = np.linalg.norm(tensors.sigma_at(pts), ord=2, axis=(1, 2))
    p, logc = np.polyfit(np.log1p(rs), np.log(norms), 1)
    return float(p), float(np.exp(logc))
