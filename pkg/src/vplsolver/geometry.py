"""Spatial representations and field solvers.

Torus
    ``T^d = [-pi, pi]^d`` (``d`` = 1, 2 or 3) with the transform
    ``f^(k) = int e^{-i k.x} f dx`` and inverse ``f(x) = (2 pi)^{-d} sum_k f^(k) e^{i k.x}``.
    Wave vectors are stored as 3-vectors (unused axes zero).  Quadratic terms
    are formed on ``3 k_max + 1`` collocation points per axis, which makes the
    Galerkin truncation of a product of two truncated fields exact.

Channel
    ``[-1, 1] x T^2``: a cell-centred grid in ``x1`` times transverse modes
    ``kbar`` (a :class:`TorusModes` living on axes 2 and 3).  Specular
    reflection is imposed by ghost cells mirrored in ``v1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from itertools import product

import numpy as np
import scipy.linalg as sla

from .velocity import VelocityGrid

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# torus modes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TorusModes:
    """Retained integer wave vectors ``|k_i| <= k_max`` on ``dim`` periodic axes.

    ``axes`` gives the physical axes the modes live on (default the first
    ``dim`` axes; the channel uses ``(1, 2)``).
    """

    dim: int
    k_max: int
    axes: tuple = None
    modes: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if int(self.k_max) != self.k_max or self.k_max < 0:
            raise ValueError(f"k_max must be a non-negative integer, got {self.k_max}")
        axes = tuple(range(self.dim)) if self.axes is None else tuple(self.axes)
        if len(axes) != self.dim:
            raise ValueError("axes must list one physical axis per dimension")
        object.__setattr__(self, "axes", axes)
        rng = range(-self.k_max, self.k_max + 1)
        ks = np.array(list(product(rng, repeat=self.dim)), dtype=int).reshape(-1, self.dim)
        full = np.zeros((len(ks), 3), dtype=int)
        full[:, list(axes)] = ks
        object.__setattr__(self, "modes", full)

    @property
    def size(self) -> int:
        return len(self.modes)

    @cached_property
    def zero_index(self) -> int:
        return int(np.flatnonzero(~self.modes.any(axis=1))[0])

    @cached_property
    def neg_index(self) -> np.ndarray:
        """Index of ``-k`` for every retained ``k``."""
        lookup = {tuple(k): i for i, k in enumerate(self.modes)}
        return np.array([lookup[tuple(-k)] for k in self.modes])

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.modes.astype(float) ** 2, axis=1)

    @property
    def n_colloc(self) -> int:
        return 3 * self.k_max + 1

    @property
    def volume(self) -> float:
        return TWO_PI ** self.dim

    @cached_property
    def _fft_index(self):
        sub = self.modes[:, list(self.axes)] % self.n_colloc
        return tuple(sub[:, d] for d in range(self.dim))

    @cached_property
    def points(self) -> np.ndarray:
        """Collocation points (P, 3) in C order (unused axes zero)."""
        x = TWO_PI * np.arange(self.n_colloc) / self.n_colloc
        g = np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"), axis=-1).reshape(-1, self.dim)
        out = np.zeros((len(g), 3))
        out[:, list(self.axes)] = g
        return out

    def label(self, i: int) -> str:
        return "(" + ",".join(str(int(c)) for c in self.modes[i][list(self.axes)]) + ")"

    # -- transforms ------------------------------------------------------
    def to_physical(self, fhat: np.ndarray, axis: int = 0) -> np.ndarray:
        """Values at the collocation points; the mode axis is replaced by a point axis."""
        fhat = np.moveaxis(np.asarray(fhat), axis, 0)
        nc = self.n_colloc
        grid = np.zeros((nc,) * self.dim + fhat.shape[1:], dtype=complex)
        grid[self._fft_index] = fhat
        vals = np.fft.ifftn(grid, axes=tuple(range(self.dim))) * (nc ** self.dim / self.volume)
        vals = vals.reshape((nc ** self.dim,) + fhat.shape[1:])
        return np.moveaxis(vals, 0, axis)

    def from_physical(self, vals: np.ndarray, axis: int = 0) -> np.ndarray:
        """Retained Fourier coefficients of collocation data (exact Galerkin truncation)."""
        vals = np.moveaxis(np.asarray(vals), axis, 0)
        nc = self.n_colloc
        grid = vals.reshape((nc,) * self.dim + vals.shape[1:])
        hat = np.fft.fftn(grid, axes=tuple(range(self.dim))) * (self.volume / nc ** self.dim)
        return np.moveaxis(hat[self._fft_index], 0, axis)

    def integrate(self, fhat: np.ndarray, axis: int = 0) -> np.ndarray:
        """``int f dx`` = the zero mode."""
        return np.take(fhat, self.zero_index, axis=axis)

    def parseval(self, fhat: np.ndarray, ghat: np.ndarray | None = None, axis: int = 0):
        """``int f conj(g) dx = (2 pi)^{-d} sum_k f^ conj(g^)``."""
        ghat = fhat if ghat is None else ghat
        return np.sum(fhat * np.conj(ghat), axis=axis) / self.volume

    def symmetrize(self, fhat: np.ndarray, axis: int = 0) -> np.ndarray:
        """Project onto conjugate-symmetric data (real physical fields)."""
        f = np.moveaxis(np.asarray(fhat), axis, 0)
        out = 0.5 * (f + np.conj(f[self.neg_index]))
        return np.moveaxis(out, 0, axis)

    def symmetry_defect(self, fhat: np.ndarray, axis: int = 0) -> float:
        f = np.moveaxis(np.asarray(fhat), axis, 0)
        return float(np.max(np.abs(f - np.conj(f[self.neg_index])), initial=0.0))


# ---------------------------------------------------------------------------
# Poisson on the torus
# ---------------------------------------------------------------------------

@dataclass
class FieldState:
    """Potential and field.  ``phi``: (M,) or (X, M); ``E``: (3, ...) matching."""

    phi: np.ndarray
    E: np.ndarray


def poisson_torus(modes: TorusModes, rho: np.ndarray) -> FieldState:
    """``|k|^2 phi^ = rho^`` (``phi^(0) = 0``), ``E^ = -i k phi^``."""
    rho = np.asarray(rho)
    if rho.shape[0] != modes.size:
        raise ValueError("rho must have one entry per retained mode")
    k2 = modes.k2.reshape((-1,) + (1,) * (rho.ndim - 1))
    phi = np.where(k2 > 0, rho / np.where(k2 > 0, k2, 1.0), 0.0)
    k = modes.modes.T.astype(float).reshape((3, -1) + (1,) * (rho.ndim - 1))
    return FieldState(phi, -1j * k * phi[None])


def gauss_residual(modes: TorusModes, E: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``i k . E^ - rho^`` per mode (zero mode excluded)."""
    r = 1j * np.einsum("jm...,mj->m...", E, modes.modes.astype(float)) - rho
    r[modes.zero_index] = 0.0
    return r


# ---------------------------------------------------------------------------
# channel
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChannelGrid:
    """Cell-centred grid on ``[-1, 1]`` with transverse Fourier modes."""

    n_x1: int
    kbar_max: int = 0

    def __post_init__(self):
        if int(self.n_x1) != self.n_x1 or self.n_x1 < 4 or self.n_x1 % 2:
            raise ValueError(f"n_x1 must be an even integer >= 4, got {self.n_x1}")
        if not 0 <= self.kbar_max <= 2:
            raise ValueError(f"kbar_max must lie in [0, 2], got {self.kbar_max}")

    @property
    def dx(self) -> float:
        return 2.0 / self.n_x1

    @cached_property
    def nodes_x1(self) -> np.ndarray:
        x = -1.0 + (np.arange(self.n_x1) + 0.5) * self.dx
        return 0.5 * (x - x[::-1])

    @cached_property
    def faces_x1(self) -> np.ndarray:
        return -1.0 + np.arange(self.n_x1 + 1) * self.dx

    @cached_property
    def transverse(self) -> TorusModes:
        return TorusModes(2, self.kbar_max, axes=(1, 2))

    def integrate(self, u: np.ndarray, axis: int = 0) -> np.ndarray:
        """``int_{-1}^{1} u dx1`` by the midpoint rule."""
        return np.sum(u, axis=axis) * self.dx


@lru_cache(maxsize=64)
def _elliptic_matrix(n: int, dx: float, kbar2: float, bc: str) -> tuple:
    main = np.full(n, 2.0)
    ghost = 1.0 if bc == "neumann" else -1.0
    main[0] -= ghost
    main[-1] -= ghost
    A = (np.diag(main) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)) / dx ** 2
    A = A + kbar2 * np.eye(n)
    singular = bc == "neumann" and kbar2 == 0
    if singular:
        A = A + np.ones((n, n)) / (n * dx ** 2)
    return sla.lu_factor(A), singular


class IncompatibleSourceError(ValueError):
    """Pure Neumann problem with a source of nonzero mean."""


def elliptic_solve_1d(grid: ChannelGrid, kbar2: float, source: np.ndarray, bc: str,
                      compat_tol: float = 1e-10) -> np.ndarray:
    """Solve ``-u'' + kbar2 u = s`` on the cell-centred ``x1`` grid.

    ``bc`` is ``"dirichlet"`` (``u(+-1) = 0``, ghost ``-u``) or ``"neumann"``
    (``u'(+-1) = 0``, ghost ``u``).  For Neumann with ``kbar2 = 0`` the source
    must have zero mean (relative tolerance ``compat_tol``) and the solution is
    fixed by zero mean.  ``source`` may carry trailing axes.
    """
    if bc not in ("dirichlet", "neumann"):
        raise ValueError(f"bc must be 'dirichlet' or 'neumann', got {bc!r}")
    if kbar2 < 0:
        raise ValueError("kbar2 must be non-negative")
    s = np.asarray(source)
    if s.shape[0] != grid.n_x1:
        raise ValueError("source must have one value per x1 node")
    lu, singular = _elliptic_matrix(grid.n_x1, grid.dx, float(kbar2), bc)
    if singular:
        mean = np.mean(s, axis=0)
        scale = np.max(np.abs(s), initial=0.0)
        if np.any(np.abs(mean) > compat_tol * max(scale, 1e-300)) and scale > 0:
            raise IncompatibleSourceError(
                f"pure Neumann problem needs a zero-mean source; mean = {np.max(np.abs(mean)):.3e}")
        s = s - mean
    if np.iscomplexobj(s):
        return sla.lu_solve(lu, s.real) + 1j * sla.lu_solve(lu, s.imag)
    return sla.lu_solve(lu, s)


def derivative_x1(grid: ChannelGrid, u: np.ndarray, bc: str) -> np.ndarray:
    """Face values of ``u'`` (n_x1 + 1, ...) using the same ghost rule as the solver."""
    ghost = 1.0 if bc == "neumann" else -1.0
    lo = ghost * u[:1]
    hi = ghost * u[-1:]
    ext = np.concatenate([lo, u, hi], axis=0)
    return (ext[1:] - ext[:-1]) / grid.dx


def second_derivative_x1(grid: ChannelGrid, u: np.ndarray, bc: str) -> np.ndarray:
    d = derivative_x1(grid, u, bc)
    return (d[1:] - d[:-1]) / grid.dx


def elliptic_constants(grid: ChannelGrid, kbar2: float, source: np.ndarray, bc: str) -> dict:
    """Measured ratios of the elliptic estimates for one solve.

    ``full``: ``(|u''| + |k||u'| + |k|^2 |u|) / |s|``; ``first``: ``(|u'| + |k||u|)``
    over the same norm of the source (the form used with a derivative source).
    """
    u = elliptic_solve_1d(grid, kbar2, source, bc)
    kb = np.sqrt(kbar2)
    nrm = lambda x: float(np.sqrt(np.sum(np.abs(x) ** 2) * grid.dx))  # noqa: E731
    du = derivative_x1(grid, u, bc)
    d2 = second_derivative_x1(grid, u, bc)
    ns = nrm(source)
    return {"full": (nrm(d2) + kb * nrm(du) + kbar2 * nrm(u)) / ns,
            "first": (nrm(du) + kb * nrm(u)) / ns, "solution": u}


@dataclass
class ChannelField:
    """Channel potential at cells and field at cells / faces.

    ``phi``: (X, M); ``E``: (3, X, M) at cells; ``E1_faces``: (X+1, M).
    """

    phi: np.ndarray
    E: np.ndarray
    E1_faces: np.ndarray


def poisson_channel(grid: ChannelGrid, rho: np.ndarray) -> ChannelField:
    """``-phi'' + |kbar|^2 phi = rho`` with ``phi'(+-1) = 0`` per transverse mode."""
    tm = grid.transverse
    rho = np.asarray(rho)
    phi = np.zeros(rho.shape, dtype=complex)
    for m in range(tm.size):
        phi[:, m] = elliptic_solve_1d(grid, float(tm.k2[m]), rho[:, m], "neumann")
    e1f = -derivative_x1(grid, phi, "neumann")
    e1f[0] = 0.0
    e1f[-1] = 0.0
    E = np.zeros((3,) + rho.shape, dtype=complex)
    E[0] = 0.5 * (e1f[1:] + e1f[:-1])
    kb = tm.modes.T.astype(float)
    E[1] = -1j * kb[1][None, :] * phi
    E[2] = -1j * kb[2][None, :] * phi
    return ChannelField(phi, E, e1f)


def channel_field_energy(grid: ChannelGrid, fld: ChannelField) -> float:
    """``int |E|^2 dx`` with the x1 component evaluated on faces."""
    tm = grid.transverse
    e1 = np.sum(np.abs(fld.E1_faces) ** 2) * grid.dx
    e23 = np.sum(np.abs(fld.E[1:]) ** 2) * grid.dx
    return float((e1 + e23) / tm.volume)


# ---------------------------------------------------------------------------
# test potentials of the macroscopic estimates
# ---------------------------------------------------------------------------

def torus_test_potentials(k, a_plus, a_minus, b, c) -> dict:
    """Algebraic test potentials for one mode ``k`` (``|k| >= 1``)."""
    k = np.asarray(k, dtype=float)
    k2 = float(k @ k)
    if k2 == 0:
        raise ValueError("test potentials are not defined at k = 0")
    b = np.asarray(b)
    diff = (a_plus - a_minus) / k2
    total = (a_plus + a_minus) / k2
    return {"phi_c": c / k2, "phi_b": b / k2,
            "phi_a_sum": (total, total), "phi_a_diff": (diff, -diff)}


def channel_bc_table(derivative: str) -> dict:
    """Boundary conditions of the channel test potentials.

    ``derivative`` is ``"x1"`` (``d = d_{x1}``) or one of ``"I"``, ``"x2"``, ``"x3"``.
    """
    if derivative not in ("x1", "I", "x2", "x3"):
        raise ValueError(f"unknown derivative {derivative!r}")
    if derivative == "x1":
        return {"phi_c": "dirichlet", "phi_b": ("neumann", "dirichlet", "dirichlet"),
                "phi_a": "dirichlet"}
    return {"phi_c": "neumann", "phi_b": ("dirichlet", "neumann", "neumann"), "phi_a": "neumann"}


def channel_test_potentials(grid: ChannelGrid, kbar2: float, derivative: str,
                            d_a_plus, d_a_minus, d_b, d_c) -> dict:
    """Solve the channel test-potential problems for one transverse mode.

    Inputs are the differentiated coefficients ``d a_pm``, ``d b_j`` (3, X) and
    ``d c`` on the x1 nodes.
    """
    table = channel_bc_table(derivative)
    phi_c = elliptic_solve_1d(grid, kbar2, d_c, table["phi_c"])
    phi_b = np.stack([elliptic_solve_1d(grid, kbar2, np.asarray(d_b)[j], table["phi_b"][j])
                      for j in range(3)])
    diff = np.asarray(d_a_plus) - np.asarray(d_a_minus)
    phi_ad = elliptic_solve_1d(grid, kbar2, diff, table["phi_a"])
    phi_as = elliptic_solve_1d(grid, kbar2, np.asarray(d_a_plus) + np.asarray(d_a_minus), table["phi_a"])
    return {"phi_c": phi_c, "phi_b": phi_b, "phi_a_diff": (phi_ad, -phi_ad),
            "phi_a_sum": (phi_as, phi_as), "bc": table}


# ---------------------------------------------------------------------------
# specular reflection
# ---------------------------------------------------------------------------

def specular_ghosts(vgrid: VelocityGrid, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ghost cells for ``f`` (..., X, M, N): ``ghost(v1) = interior(-v1)`` at both walls.

    The x1 axis is the third from last.
    """
    mirror = vgrid.mirror_index
    return f[..., 0, :, :][..., mirror], f[..., -1, :, :][..., mirror]


def specular_defect(vgrid: VelocityGrid, f: np.ndarray) -> float:
    """Max violation of the discrete specular condition at the wall faces.

    The wall trace is the mean of the first interior cell and its ghost; the
    condition ``trace(v1) = trace(-v1)`` holds identically for mirrored ghosts.
    """
    lo, hi = specular_ghosts(vgrid, f)
    tr_lo = 0.5 * (f[..., 0, :, :] + lo)
    tr_hi = 0.5 * (f[..., -1, :, :] + hi)
    m = vgrid.mirror_index
    return float(max(np.max(np.abs(tr_lo - tr_lo[..., m])), np.max(np.abs(tr_hi - tr_hi[..., m]))))


def boundary_flux_sum(vgrid: VelocityGrid, f: np.ndarray) -> complex:
    """``sum_v w v1 (|f(1)|^2 - |f(-1)|^2)`` at the wall traces, summed over mirrored pairs.

    Each pair ``(v1, -v1)`` contributes ``v1 (|f(v1)|^2 - |f(-v1)|^2)`` with equal
    moduli, so every term cancels identically.
    """
    lo, hi = specular_ghosts(vgrid, f)
    tr_lo = 0.5 * (f[..., 0, :, :] + lo)
    tr_hi = 0.5 * (f[..., -1, :, :] + hi)
    v1 = vgrid.nodes[:, 0]
    pos = v1 > 0
    m = vgrid.mirror_index
    total = 0.0
    for tr, sign in ((tr_hi, 1.0), (tr_lo, -1.0)):
        a = np.abs(tr[..., pos]) ** 2
        b = np.abs(tr[..., m][..., pos]) ** 2
        total += sign * np.sum(vgrid.weights[pos] * v1[pos] * (a - b))
    return total
