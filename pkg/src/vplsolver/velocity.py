"""Velocity lattice, Maxwellian, quadrature and Gaussian moments.

The lattice is a uniform cell-centred Cartesian grid on ``[-v_max, v_max]^3``
with ``n`` nodes per axis.  Because ``n`` is even, the node set is closed
under ``v -> -v`` and under every single-axis reflection, so odd moments of
even weights vanish by exact node pairing.

Fields on the lattice are plain numpy arrays whose trailing axis runs over
the ``n**3`` nodes (C order in ``(i1, i2, i3)``).  A two-species pair is an
array with a leading axis of length 2 (``[f_plus, f_minus]``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi


def maxwellian(v: np.ndarray) -> np.ndarray:
    """Global Maxwellian ``(2 pi)^{-3/2} exp(-|v|^2 / 2)`` for ``v`` of shape (..., 3)."""
    v = np.asarray(v, dtype=float)
    return TWO_PI ** -1.5 * np.exp(-0.5 * np.sum(v * v, axis=-1))


def _derivative_matrix(n: int, h: float) -> np.ndarray:
    """1D first-derivative matrix: centred inside, 2nd-order one-sided at the ends.

    Exact on quadratics, which is what keeps the discrete collision null space
    exact.
    """
    m = np.zeros((n, n))
    for i in range(1, n - 1):
        m[i, i - 1] = -1.0
        m[i, i + 1] = 1.0
    m[0, :3] = [-3.0, 4.0, -1.0]
    m[-1, -3:] = [1.0, -4.0, 3.0]
    return m / (2.0 * h)


@dataclass(frozen=True, eq=False)
class VelocityGrid:
    n_per_axis: int
    v_max: float
    axis: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    sqrt_mu: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return 2.0 * self.v_max / self.n_per_axis

    @property
    def size(self) -> int:
        return self.n_per_axis ** 3

    @property
    def shape3(self) -> tuple[int, int, int]:
        n = self.n_per_axis
        return (n, n, n)

    @property
    def cell_volume(self) -> float:
        return self.h ** 3

    @cached_property
    def speed2(self) -> np.ndarray:
        return np.sum(self.nodes ** 2, axis=1)

    @cached_property
    def inv_sqrt_mu(self) -> np.ndarray:
        return 1.0 / self.sqrt_mu

    @cached_property
    def deriv_matrix(self) -> np.ndarray:
        return _derivative_matrix(self.n_per_axis, self.h)

    @cached_property
    def mirror_index(self) -> np.ndarray:
        """Index permutation realizing ``v1 -> -v1``."""
        idx = np.arange(self.size).reshape(self.shape3)
        return idx[::-1, :, :].ravel()

    @cached_property
    def mass_error(self) -> float:
        """Measured ``sum(w mu) - 1`` (truncation plus quadrature error)."""
        return float(np.sum(self.weights * self.mu) - 1.0)

    def same_as(self, other: "VelocityGrid") -> bool:
        return (self.n_per_axis == other.n_per_axis
                and self.v_max == other.v_max)

    # -- discrete calculus -------------------------------------------------
    def grad(self, u: np.ndarray) -> np.ndarray:
        """Discrete gradient of node fields ``u`` (..., N) -> (3, ..., N)."""
        u = np.asarray(u)
        lead = u.shape[:-1]
        u3 = u.reshape(lead + self.shape3)
        m = self.deriv_matrix
        k = len(lead)
        out = np.empty((3,) + lead + self.shape3, dtype=np.result_type(u, float))
        for ax in range(3):
            out[ax] = np.moveaxis(np.tensordot(m, u3, axes=([1], [k + ax])), 0, k + ax)
        return out.reshape((3,) + lead + (self.size,))

    def grad_T(self, g: np.ndarray) -> np.ndarray:
        """Transpose of :meth:`grad`: ``sum_i D_i^T g_i`` for ``g`` of shape (3, ..., N)."""
        g = np.asarray(g)
        lead = g.shape[1:-1]
        k = len(lead)
        mt = self.deriv_matrix.T
        out = np.zeros(lead + self.shape3, dtype=np.result_type(g, float))
        for ax in range(3):
            gi = g[ax].reshape(lead + self.shape3)
            out += np.moveaxis(np.tensordot(mt, gi, axes=([1], [k + ax])), 0, k + ax)
        return out.reshape(lead + (self.size,))

    def grad_sparse(self):
        """The three derivative operators as sparse (N, N) matrices."""
        import scipy.sparse as sp

        n = self.n_per_axis
        m = sp.csr_matrix(self.deriv_matrix)
        eye = sp.identity(n, format="csr")
        return [
            sp.kron(sp.kron(m, eye), eye, format="csr"),
            sp.kron(sp.kron(eye, m), eye, format="csr"),
            sp.kron(sp.kron(eye, eye), m, format="csr"),
        ]


def build_grid(n_per_axis: int, v_max: float = 6.0) -> VelocityGrid:
    """Build the cell-centred velocity lattice.

    Raises
    ------
    ValueError
        If ``n_per_axis`` is odd or below 4, or ``v_max`` is not positive.
    """
    if int(n_per_axis) != n_per_axis or n_per_axis < 4 or n_per_axis % 2:
        raise ValueError(f"n_per_axis must be an even integer >= 4, got {n_per_axis}")
    if not v_max > 0:
        raise ValueError(f"v_max must be positive, got {v_max}")
    n = int(n_per_axis)
    h = 2.0 * v_max / n
    axis = -v_max + (np.arange(n) + 0.5) * h
    # symmetrize to kill last-bit asymmetry so odd moments pair off exactly
    axis = 0.5 * (axis - axis[::-1])
    g1, g2, g3 = np.meshgrid(axis, axis, axis, indexing="ij")
    nodes = np.stack([g1.ravel(), g2.ravel(), g3.ravel()], axis=1)
    mu = maxwellian(nodes)
    weights = np.full(n ** 3, h ** 3)
    return VelocityGrid(n, float(v_max), axis, nodes, weights, mu, np.sqrt(mu))


def double_factorial(k: int) -> int:
    """``k!!`` with ``(-1)!! = 0!! = 1``."""
    if k < -1:
        raise ValueError("double factorial undefined below -1")
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


def gaussian_moment_1d(p: int) -> float:
    """Analytic ``int z^p exp(-z^2/2) dz = (p-1)!! sqrt(2 pi)`` for even ``p >= 0``."""
    if int(p) != p or p < 0 or p % 2:
        raise ValueError(f"p must be an even non-negative integer, got {p}")
    return double_factorial(int(p) - 1) * np.sqrt(TWO_PI)


def normalized_gaussian_moment(exponents) -> float:
    """Analytic ``int v1^p1 v2^p2 v3^p3 mu dv`` (zero if any exponent is odd)."""
    out = 1.0
    for p in exponents:
        if p % 2:
            return 0.0
        out *= gaussian_moment_1d(p) / np.sqrt(TWO_PI)
    return out


def discrete_moment(grid: VelocityGrid, exponents, weight: np.ndarray | None = None) -> float:
    """Quadrature ``sum w v1^p1 v2^p2 v3^p3 mu``, optionally times an extra node weight.

    Odd exponents are returned as exactly zero: the cell-centred lattice pairs
    every node with its reflection, so the sum cancels term by term; the pairing
    is done explicitly to avoid floating-point summation-order residue.
    """
    p = tuple(int(e) for e in exponents)
    if len(p) != 3 or any(e < 0 for e in p):
        raise ValueError("exponents must be three non-negative integers")
    if any(e % 2 for e in p) and weight is None:
        return 0.0
    integrand = grid.weights * grid.mu
    for ax, e in enumerate(p):
        if e:
            integrand = integrand * grid.nodes[:, ax] ** e
    if weight is not None:
        integrand = integrand * weight
    return float(np.sum(integrand))


def moment_table(grid: VelocityGrid, p_max: int = 10) -> list[dict]:
    """Relative error of the 1D discrete moments against the analytic values."""
    rows = []
    for p in range(0, p_max + 1, 2):
        exact = gaussian_moment_1d(p) / np.sqrt(TWO_PI)
        got = discrete_moment(grid, (p, 0, 0))
        rows.append({"p": p, "discrete": got, "exact": exact,
                     "rel_err": abs(got - exact) / exact})
    return rows


def l2v_inner(grid: VelocityGrid, f: np.ndarray, g: np.ndarray) -> complex:
    """``sum w f conj(g)`` over nodes (and over species for pairs)."""
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape != g.shape:
        raise ValueError(f"shape mismatch {f.shape} vs {g.shape}")
    if f.shape[-1] != grid.size:
        raise ValueError(f"field has {f.shape[-1]} nodes, grid has {grid.size}")
    return complex(np.sum(grid.weights * f * np.conj(g)))


def l2v_norm(grid: VelocityGrid, f: np.ndarray) -> np.ndarray:
    """``|f|_{L^2_v}`` over the last (node) axis."""
    return np.sqrt(np.sum(grid.weights * np.abs(f) ** 2, axis=-1))


def pair_norm(grid: VelocityGrid, f: np.ndarray) -> np.ndarray:
    """``L^2_v`` norm of a species pair ``(2, ..., N)``, summed over species."""
    return np.sqrt(np.sum(grid.weights * np.abs(f) ** 2, axis=(0, -1)))
