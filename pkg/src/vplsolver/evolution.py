"""Time integration of the perturbation system on the torus and in the channel.

One step is the Strang splitting

    C(dt/2)  ->  H(dt)  ->  C(dt/2)

* ``C`` is the linearized collision flow ``exp(tau L)``.  ``L`` is symmetric
  and mode independent, so its two blocks (species sum and difference) are
  diagonalized once; ``C`` is then exact, unconditionally stable and keeps
  the collision invariants to round-off.
* ``H`` carries transport, the field source ``+-E.v sqrt(mu)``, the field
  drift ``-+E.mu^{-1/2} grad_v(sqrt(mu) f)`` (in
  summation-by-parts form) and ``Gamma(f, f)``.  On the torus
  it is a Lawson (integrating-factor) Heun step with the exact phase
  ``exp(-i v.k dt)``; in the channel it is the SSP Heun step with first-order
  upwind (or centred) fluxes in ``x1`` and mirrored ghost cells.

Quadratic terms are evaluated on collocation points and truncated back to the
retained modes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from dataclasses import field as dc_field
from pathlib import Path

import numpy as np

from . import io as vio
from .geometry import (ChannelField, ChannelGrid, FieldState, TorusModes, channel_field_energy,
                       poisson_channel, poisson_torus, specular_ghosts)
from .landau import (CollisionTensors, apply_Gamma, apply_L, assemble_L, build_tensors,
                     validate_weight_params)
from .macro import coefficients, kernel_functions, moment_record
from .velocity import VelocityGrid, build_grid

log = logging.getLogger(__name__)

__all__ = ["InitialCondition", "SolverConfig", "SpectralState", "CollisionPropagator",
           "TorusModel", "ChannelModel", "build_model", "run", "NumericalAbort"]


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class InitialCondition:
    """Initial-data family.

    ``kind``: ``"cosine"`` (single mode ``mode`` times a fixed velocity profile),
    ``"random"`` (low modes ``|k_i| <= k_init`` with random Hermite-type profiles,
    seeded), ``"zero"``.  ``amplitude`` is ``sup_x |f(x)|_{L^2_v}``-normalized:
    ``(2 pi)^{-d} ||f^||_{L^1_k L^2_v} = amplitude``.
    """

    kind: str = "cosine"
    amplitude: float = 1e-3
    mode: tuple = (1, 0, 0)
    seed: int = 0
    k_init: int = 2

    def __post_init__(self):
        if self.kind not in ("cosine", "random", "zero"):
            raise ValueError(f"initial.kind must be cosine, random or zero, got {self.kind!r}")
        if not self.amplitude >= 0:
            raise ValueError("initial.amplitude must be non-negative")
        self.mode = tuple(int(m) for m in self.mode)
        if len(self.mode) != 3:
            raise ValueError("initial.mode must have three components")


@dataclass
class SolverConfig:
    geometry: str = "torus"
    gamma: float = -2.0
    n_v: int = 16
    v_max: float = 6.0
    dim: int = 1
    k_max: int = 8
    n_x1: int = 32
    kbar_max: int = 0
    dt: float = 0.05
    t_end: float = 10.0
    q: float = 0.0
    theta: float = 2.0
    N: float = 1.0
    R: float = 5.0
    eps: float = 0.5
    nonlinearity: str = "full"          # full | linearized
    field: bool = True                  # electrostatic coupling on/off
    collision: bool = True
    flux: str = "upwind"                # channel x1 flux: upwind | centred
    cfl: float = 0.9
    normalize: bool = True
    diag_every: int = 1
    record_moments: bool = False
    tol_cons: float = 1e-6
    cache_dir: str | None = None
    initial: InitialCondition = dc_field(default_factory=InitialCondition)

    def __post_init__(self):
        if isinstance(self.initial, dict):
            self.initial = InitialCondition(**self.initial)
        if self.geometry not in ("torus", "channel"):
            raise ValueError(f"geometry must be torus or channel, got {self.geometry!r}")
        if not -2.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [-2, 1], got {self.gamma}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= self.dt:
            raise ValueError("t_end must be at least dt")
        validate_weight_params(self.q, self.theta, self.N)
        if self.nonlinearity not in ("full", "linearized"):
            raise ValueError("nonlinearity must be full or linearized")
        if self.flux not in ("upwind", "centred"):
            raise ValueError("flux must be upwind or centred")
        if not self.R > 0 or not self.eps > 0:
            raise ValueError("R and eps must be positive")
        if self.diag_every < 1:
            raise ValueError("diag_every must be >= 1")
        if self.geometry == "channel":
            h = 2.0 * self.v_max / self.n_v
            vmax1 = self.v_max - 0.5 * h
            limit = self.cfl * (2.0 / self.n_x1) / vmax1
            if self.dt > limit * (1 + 1e-12):
                raise ValueError(f"dt = {self.dt} violates the x1 CFL limit {limit:.4g}")

    @property
    def n_steps(self) -> int:
        n = self.t_end / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError("t_end must be an integer multiple of dt")
        return int(round(n))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["initial"]["mode"] = list(d["initial"]["mode"])
        return d


@dataclass
class SpectralState:
    """``f``: (2, M, N) on the torus, (2, X, M, N) in the channel; ``t``: time."""

    f: np.ndarray
    t: float = 0.0

    def copy(self) -> "SpectralState":
        return SpectralState(self.f.copy(), self.t)


class NumericalAbort(RuntimeError):
    """Raised when the state stops being finite; carries the last good state."""

    def __init__(self, message: str, last_good: SpectralState):
        super().__init__(message)
        self.last_good = last_good


# ---------------------------------------------------------------------------
# collision flow
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class CollisionPropagator:
    """``exp(tau L)`` from the eigen-decompositions of the sum/difference blocks."""

    lam_sum: np.ndarray
    vec_sum: np.ndarray
    lam_diff: np.ndarray
    vec_diff: np.ndarray

    @classmethod
    def from_tensors(cls, tensors: CollisionTensors, cache_dir=None) -> "CollisionPropagator":
        g = tensors.grid
        key = vio.cache_key(n=g.n_per_axis, v_max=g.v_max, gamma=tensors.gamma,
                            R=tensors.R, eps=tensors.eps, what="collision-eig")
        path = None
        if cache_dir is not None:
            path = Path(cache_dir) / f"collision-{key}.bin"
            if path.exists():
                try:
                    _, arr = vio.read_container(path, "collision")
                    return cls(arr["lam_sum"], arr["vec_sum"], arr["lam_diff"], arr["vec_diff"])
                except vio.FormatError:
                    log.warning("ignoring unreadable cache file %s", path)
        mats = assemble_L(tensors)
        ls, vs = np.linalg.eigh(mats.L_sum)
        del mats.L_sum
        ld, vd = np.linalg.eigh(mats.L_diff)
        out = cls(ls, vs, ld, vd)
        if path is not None:
            vio.write_container(path, "collision",
                                {"n": g.n_per_axis, "v_max": g.v_max, "gamma": tensors.gamma,
                                 "R": tensors.R, "eps": tensors.eps},
                                {"lam_sum": ls, "vec_sum": vs, "lam_diff": ld, "vec_diff": vd})
        return out

    @staticmethod
    def _flow(vec, lam, u, tau):
        shape = u.shape
        flat = u.reshape(-1, shape[-1])
        real = np.concatenate([flat.real, flat.imag]) if np.iscomplexobj(flat) else flat
        decay = np.exp(np.minimum(lam, 0.0) * tau)
        out = ((real @ vec) * decay) @ vec.T
        if np.iscomplexobj(flat):
            n = flat.shape[0]
            out = out[:n] + 1j * out[n:]
        return out.reshape(shape)

    def apply(self, f: np.ndarray, tau: float) -> np.ndarray:
        s = self._flow(self.vec_sum, self.lam_sum, f[0] + f[1], tau)
        d = self._flow(self.vec_diff, self.lam_diff, f[0] - f[1], tau)
        return np.stack([0.5 * (s + d), 0.5 * (s - d)])

    def generator(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense sum/difference blocks ``V diag(lam) V^T``."""
        return ((self.vec_sum * self.lam_sum) @ self.vec_sum.T,
                (self.vec_diff * self.lam_diff) @ self.vec_diff.T)


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------

_SIGN = np.array([1.0, -1.0])


def field_drift(grid: VelocityGrid, E: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``-+ E . mu^{-1/2} grad_v(mu^{1/2} f_pm)``; ``E`` (3, P), ``f`` (2, P, N).

    The velocity derivative is taken as ``-D^T`` (``D`` the grid difference
    matrix, exact on quadratics): its column sums against ``1, v, |v|^2`` are
    then exact, so the drift changes mass, momentum and energy exactly as the
    continuous term does.  In the interior ``-D^T = D``.
    """
    u = f * grid.sqrt_mu                                  # (2, P, N)
    flux = E[:, None, :, None] * u[None]                  # (3, 2, P, N)
    acc = -grid.grad_T(flux) * grid.inv_sqrt_mu
    return -_SIGN[:, None, None] * acc


def field_source(grid: VelocityGrid, E: np.ndarray) -> np.ndarray:
    """``+- E . v sqrt(mu)`` for ``E`` (3, ...) -> (2, ..., N)."""
    ev = np.tensordot(np.moveaxis(E, 0, -1), grid.nodes.T, axes=([-1], [0])) * grid.sqrt_mu
    return np.stack([ev, -ev])


def _profile(grid: VelocityGrid, plus, minus) -> np.ndarray:
    """Pair from polynomial coefficient callables times sqrt(mu), unit L^2_v norm."""
    f = np.stack([plus(grid.nodes) * grid.sqrt_mu, minus(grid.nodes) * grid.sqrt_mu])
    return f / np.sqrt(np.sum(grid.weights * f ** 2))


def _hermite_basis(grid: VelocityGrid) -> np.ndarray:
    v = grid.nodes
    r2 = grid.speed2
    polys = [np.ones(len(v)), v[:, 0], v[:, 1], v[:, 2], v[:, 0] ** 2 - 1, v[:, 0] * v[:, 1],
             v[:, 1] * v[:, 2], r2 - 3, v[:, 0] * (r2 - 5), (v[:, 1] ** 2 - v[:, 2] ** 2)]
    return np.array(polys) * grid.sqrt_mu


@dataclass
class Laws:
    """Global quantities of the conservation laws."""

    mass_plus: float
    mass_minus: float
    momentum: np.ndarray
    kinetic: float
    field_energy: float
    c0: float

    @property
    def energy(self) -> float:
        return self.kinetic + self.field_energy


class _ModelBase:
    config: SolverConfig
    grid: VelocityGrid
    tensors: CollisionTensors | None
    propagator: CollisionPropagator | None

    def _setup_velocity(self):
        cfg = self.config
        self.grid = build_grid(cfg.n_v, cfg.v_max)
        need = cfg.collision or cfg.nonlinearity == "full"
        self.tensors = build_tensors(self.grid, cfg.gamma, cfg.R, cfg.eps) if need else None
        self.propagator = None
        if cfg.collision:
            cache = vio.default_cache_dir() if cfg.cache_dir is None else cfg.cache_dir
            self.propagator = CollisionPropagator.from_tensors(self.tensors, cache or None)

    def gamma_term(self, fx: np.ndarray) -> np.ndarray:
        """``Gamma(f, f)`` pointwise for real physical data ``fx`` (2, P, N)."""
        return apply_Gamma(self.tensors, self.grid, fx, fx)

    def collide(self, f: np.ndarray, tau: float) -> np.ndarray:
        if self.propagator is None:
            return f
        return self.propagator.apply(f, tau)

    def L(self, f: np.ndarray) -> np.ndarray:
        if not self.config.collision:
            return np.zeros_like(f)
        return apply_L(self.tensors, self.grid, f)


# ---------------------------------------------------------------------------
# torus
# ---------------------------------------------------------------------------

class TorusModel(_ModelBase):
    def __init__(self, config: SolverConfig):
        self.config = config
        self._setup_velocity()
        self.modes = TorusModes(config.dim, config.k_max)
        k = self.modes.modes.astype(float)
        self.kv = k @ self.grid.nodes.T                      # (M, N)
        # modes handled explicitly; the others follow by conjugate symmetry
        first = np.array([next((c for c in row if c != 0), 0) for row in self.modes.modes])
        self.half = np.flatnonzero(first >= 0)
        self.others = np.flatnonzero(first < 0)

    # -- fields -------------------------------------------------------------
    def rho(self, f):
        s = self.grid.weights * self.grid.sqrt_mu
        return (f[0] - f[1]) @ s

    def field(self, f) -> FieldState:
        if not self.config.field:
            z = np.zeros(self.modes.size, dtype=complex)
            return FieldState(z, np.zeros((3, self.modes.size), dtype=complex))
        return poisson_torus(self.modes, self.rho(f))

    def field_energy(self, E) -> float:
        return float(np.sum(self.modes.parseval(E, axis=1)).real)

    # -- right-hand side pieces ----------------------------------------------
    def nonlinear(self, f, E) -> np.ndarray:
        """``g``: field drift plus ``Gamma(f, f)`` in mode space."""
        cfg = self.config
        if cfg.nonlinearity != "full":
            return np.zeros_like(f)
        fx = self.modes.to_physical(f, axis=1).real
        out = np.zeros_like(fx)
        if cfg.field:
            Ex = self.modes.to_physical(E, axis=1).real
            out += field_drift(self.grid, Ex, fx)
        out += self.gamma_term(fx)
        return self.modes.from_physical(out, axis=1)

    def explicit(self, f) -> np.ndarray:
        fld = self.field(f)
        out = self.nonlinear(f, fld.E)
        if self.config.field:
            out = out + field_source(self.grid, fld.E)
        return out

    def rhs(self, f) -> np.ndarray:
        """Full time derivative (transport, field, collision, Gamma)."""
        return -1j * self.kv[None] * f + self.explicit(f) + self.L(f)

    def _phase(self, f, tau):
        return np.exp(-1j * self.kv * tau)[None] * f

    def _fill(self, f):
        f = f.copy()
        f[:, self.others] = np.conj(f[:, self.modes.neg_index[self.others]])
        return f

    def hyperbolic(self, f, dt) -> np.ndarray:
        n0 = self.explicit(f)
        u1 = self._phase(f + dt * n0, dt)
        n1 = self.explicit(u1)
        return self._phase(f + 0.5 * dt * n0, dt) + 0.5 * dt * n1

    def collide_modes(self, f, tau):
        if self.propagator is None:
            return f
        out = np.empty_like(f)
        out[:, self.half] = self.collide(f[:, self.half], tau)
        out[:, self.others] = np.conj(out[:, self.modes.neg_index[self.others]])
        return out

    def step(self, f) -> np.ndarray:
        dt = self.config.dt
        f = self.collide_modes(f, 0.5 * dt)
        f = self._fill(self.hyperbolic(f, dt))
        return self.collide_modes(f, 0.5 * dt)

    # -- global quantities -----------------------------------------------------
    def laws(self, f, E=None) -> Laws:
        g = self.grid
        if E is None:
            E = self.field(f).E
        f0 = f[:, self.modes.zero_index]
        s = g.weights * g.sqrt_mu
        mom = np.array([np.sum((f0[0] + f0[1]) * s * g.nodes[:, j]).real for j in range(3)])
        kin = float(np.sum((f0[0] + f0[1]) * s * g.speed2).real)
        c0 = float(np.sum((f0[0] + f0[1]) * s * (g.speed2 - 3.0)).real / 12.0)
        return Laws(float(np.sum(f0[0] * s).real), float(np.sum(f0[1] * s).real), mom, kin,
                    self.field_energy(E), c0)

    def state_norm(self, f) -> float:
        """``||f||_{L^2_{x,v}}``."""
        return float(np.sqrt(np.sum(self.modes.parseval(f, axis=1) * self.grid.weights).real))

    def law_scale(self, f) -> float:
        """Magnitude scale for relative drifts of the conservation laws."""
        r2 = self.grid.speed2
        psi = float(np.sqrt(np.sum(self.grid.weights * self.grid.mu * (1 + r2) ** 2)))
        return psi * math.sqrt(self.modes.volume) * self.state_norm(f) + self.field_energy(self.field(f).E)

    # -- initial data ---------------------------------------------------------
    def initial_state(self) -> SpectralState:
        ic = self.config.initial
        g = self.grid
        M = self.modes.size
        f = np.zeros((2, M, g.size), dtype=complex)
        vol = self.modes.volume
        if ic.kind == "cosine" and ic.amplitude > 0:
            k0 = np.zeros(3, dtype=int)
            k0[: self.config.dim] = ic.mode[: self.config.dim]
            if not k0.any() or np.abs(k0).max() > self.config.k_max:
                raise ValueError("initial.mode must be a nonzero retained wave vector")
            idx = [i for i, k in enumerate(self.modes.modes) if (k == k0).all() or (k == -k0).all()]
            prof = _profile(g, lambda v: 1.0 + v[:, 0] + 0.5 * (v[:, 0] ** 2 - 1),
                            lambda v: 0.5 + v[:, 0] + 0.5 * (v[:, 0] ** 2 - 1))
            for i in idx:
                f[:, i] = 0.5 * vol * ic.amplitude * prof
        elif ic.kind == "random" and ic.amplitude > 0:
            rng = np.random.default_rng(ic.seed)
            basis = _hermite_basis(g)
            for i, k in enumerate(self.modes.modes):
                if np.abs(k).max() <= ic.k_init:
                    c = rng.standard_normal((2, len(basis))) + 1j * rng.standard_normal((2, len(basis)))
                    f[:, i] = c @ basis
            f = self.modes.symmetrize(f, axis=1)
            l1 = np.sum(np.sqrt(np.sum(g.weights * np.abs(f) ** 2, axis=(0, 2))))
            f *= ic.amplitude * vol / l1
        state = SpectralState(f, 0.0)
        if self.config.normalize:
            state = SpectralState(self.normalize(state.f), 0.0)
        return state

    def normalize(self, f) -> np.ndarray:
        """Correct the zero mode so the conservation laws hold with value zero."""
        g = self.grid
        f = f.copy()
        W = self.field_energy(self.field(f).E)
        f[:, self.modes.zero_index] = _normalize_zero_mode(g, f[:, self.modes.zero_index], W, (0, 1, 2))
        return f


def _law_functionals(grid: VelocityGrid, components) -> np.ndarray:
    """Rows: pairs psi with law_i(f) = sum w (psi_+ f_+ + psi_- f_-)."""
    s = grid.sqrt_mu
    z = np.zeros_like(s)
    rows = [np.stack([s, z]), np.stack([z, s])]
    for j in components:
        rows.append(np.stack([grid.nodes[:, j] * s] * 2))
    rows.append(np.stack([grid.speed2 * s] * 2))
    return np.array(rows)


def _normalize_zero_mode(grid: VelocityGrid, f0: np.ndarray, W: float, components,
                         length: float = 1.0) -> np.ndarray:
    """Subtract collision-invariant combinations so that the laws read
    ``mass_pm = 0``, ``momentum_j = 0`` (j in components), ``kinetic = -W``.

    ``length`` multiplies each value (x1 cells are summed by the caller).
    """
    rows = _law_functionals(grid, components)              # (L, 2, N)
    basis = kernel_functions(grid)
    keep = [0, 1] + [2 + j for j in components] + [5]
    basis = basis[keep]
    gram = np.einsum("lan,ban,n->lb", rows, basis, grid.weights) * length
    current = np.einsum("lan,a...n,n->l...", rows, f0, grid.weights) * length
    target = np.zeros(len(rows))
    target[-1] = -W
    resid = current - target.reshape((-1,) + (1,) * (current.ndim - 1))
    alpha = np.linalg.solve(gram, resid.reshape(len(rows), -1)).reshape(resid.shape)
    corr = np.einsum("l...,lan->a...n", alpha, basis)
    return f0 - corr


# ---------------------------------------------------------------------------
# channel
# ---------------------------------------------------------------------------

class ChannelModel(_ModelBase):
    def __init__(self, config: SolverConfig):
        self.config = config
        self._setup_velocity()
        self.cgrid = ChannelGrid(config.n_x1, config.kbar_max)
        self.tmodes = self.cgrid.transverse
        kb = self.tmodes.modes.astype(float)
        self.kv = kb @ self.grid.nodes.T                     # (M, N) transverse phase
        v1 = self.grid.nodes[:, 0]
        self.v1p = np.maximum(v1, 0.0)
        self.v1m = np.minimum(v1, 0.0)

    def rho(self, f):
        s = self.grid.weights * self.grid.sqrt_mu
        return (f[0] - f[1]) @ s                             # (X, M)

    def field(self, f) -> ChannelField:
        X, M = f.shape[1], f.shape[2]
        if not self.config.field:
            z = np.zeros((X, M), dtype=complex)
            return ChannelField(z, np.zeros((3, X, M), dtype=complex), np.zeros((X + 1, M), dtype=complex))
        rho = self.rho(f)
        # the k=0 charge has zero mean by the conservation laws; remove round-off
        zi = self.tmodes.zero_index
        rho[:, zi] -= np.mean(rho[:, zi])
        return poisson_channel(self.cgrid, rho)

    def field_energy(self, fld: ChannelField) -> float:
        return channel_field_energy(self.cgrid, fld)

    def ghosts(self, f):
        return specular_ghosts(self.grid, f)

    def transport(self, f) -> np.ndarray:
        """``-d_x1(v1 f) - i vbar.kbar f`` with mirrored ghosts."""
        lo, hi = self.ghosts(f)
        ext = np.concatenate([lo[:, None], f, hi[:, None]], axis=1)   # (2, X+2, M, N)
        left, right = ext[:, :-1], ext[:, 1:]
        if self.config.flux == "upwind":
            flux = self.v1p * left + self.v1m * right
        else:
            flux = 0.5 * self.grid.nodes[:, 0] * (left + right)
        div = (flux[:, 1:] - flux[:, :-1]) / self.cgrid.dx
        return -div - 1j * self.kv[None, None] * f

    def nonlinear(self, f, E) -> np.ndarray:
        cfg = self.config
        if cfg.nonlinearity != "full":
            return np.zeros_like(f)
        X = f.shape[1]
        fx = self.tmodes.to_physical(f, axis=2).real               # (2, X, P, N)
        P = fx.shape[2]
        flat = fx.reshape(2, X * P, -1)
        out = np.zeros_like(flat)
        if cfg.field:
            Ex = self.tmodes.to_physical(E, axis=2).real.reshape(3, X * P)
            out += field_drift(self.grid, Ex, flat)
        out += self.gamma_term(flat)
        return self.tmodes.from_physical(out.reshape(fx.shape), axis=2)

    def explicit(self, f) -> np.ndarray:
        fld = self.field(f)
        out = self.transport(f) + self.nonlinear(f, fld.E)
        if self.config.field:
            out = out + field_source(self.grid, fld.E)
        return out

    def rhs(self, f) -> np.ndarray:
        return self.explicit(f) + self.L(f)

    def hyperbolic(self, f, dt):
        u1 = f + dt * self.explicit(f)
        return 0.5 * f + 0.5 * (u1 + dt * self.explicit(u1))

    def step(self, f):
        dt = self.config.dt
        f = self.collide(f, 0.5 * dt)
        f = self.hyperbolic(f, dt)
        return self.collide(f, 0.5 * dt)

    def dx1(self, f) -> np.ndarray:
        """Centred ``d_x1 f`` at cells with mirrored ghosts."""
        lo, hi = self.ghosts(f)
        ext = np.concatenate([lo[:, None], f, hi[:, None]], axis=1)
        return (ext[:, 2:] - ext[:, :-2]) / (2 * self.cgrid.dx)

    def laws(self, f, fld=None) -> Laws:
        g = self.grid
        if fld is None:
            fld = self.field(f)
        f0 = f[:, :, self.tmodes.zero_index]                         # (2, X, N)
        dx = self.cgrid.dx
        s = g.weights * g.sqrt_mu
        fs = f0[0] + f0[1]
        mom = np.array([float(np.sum(fs * s * g.nodes[:, j]).real) * dx for j in range(3)])
        kin = float(np.sum(fs * s * g.speed2).real) * dx
        c0 = float(np.sum(fs * s * (g.speed2 - 3.0)).real) * dx / 12.0
        return Laws(float(np.sum(f0[0] * s).real) * dx, float(np.sum(f0[1] * s).real) * dx,
                    mom, kin, self.field_energy(fld), c0)

    def state_norm(self, f) -> float:
        return float(np.sqrt(np.sum(np.abs(f) ** 2 * self.grid.weights) * self.cgrid.dx / self.tmodes.volume))

    def law_scale(self, f) -> float:
        r2 = self.grid.speed2
        psi = float(np.sqrt(np.sum(self.grid.weights * self.grid.mu * (1 + r2) ** 2)))
        vol = 2.0 * self.tmodes.volume
        return psi * math.sqrt(vol) * self.state_norm(f) + self.field_energy(self.field(f))

    def initial_state(self) -> SpectralState:
        ic = self.config.initial
        g = self.grid
        X, M = self.cgrid.n_x1, self.tmodes.size
        f = np.zeros((2, X, M, g.size), dtype=complex)
        x = self.cgrid.nodes_x1
        zi = self.tmodes.zero_index
        if ic.kind == "cosine" and ic.amplitude > 0:
            m = max(1, ic.mode[0])
            prof = _profile(g, lambda v: 1.0 + 0.5 * (v[:, 0] ** 2 - 1) + v[:, 1],
                            lambda v: 0.5 + 0.5 * (v[:, 0] ** 2 - 1) + v[:, 1])
            f[:, :, zi] = ic.amplitude * self.tmodes.volume * np.cos(m * np.pi * x)[None, :, None] * prof[:, None]
        elif ic.kind == "random" and ic.amplitude > 0:
            rng = np.random.default_rng(ic.seed)
            basis = _hermite_basis(g)
            for mi in range(M):
                for j in range(1, 4):
                    c = rng.standard_normal((2, len(basis))) + (1j * rng.standard_normal((2, len(basis)))
                                                                if mi != zi else 0)
                    f[:, :, mi] += np.cos(j * np.pi * x)[None, :, None] * (c @ basis)[:, None] / j
            f = self.tmodes.symmetrize(f, axis=2)
            nrm = np.sum(np.sqrt(np.sum(g.weights * np.abs(f) ** 2, axis=(0, 3)) * self.cgrid.dx).sum(axis=0))
            f *= ic.amplitude * self.tmodes.volume / max(nrm, 1e-300)
        state = SpectralState(f, 0.0)
        if self.config.normalize:
            state = SpectralState(self.normalize(f), 0.0)
        return state

    def normalize(self, f) -> np.ndarray:
        f = f.copy()
        zi = self.tmodes.zero_index
        W = self.field_energy(self.field(f))
        X = self.cgrid.n_x1
        dx = self.cgrid.dx
        # constant-in-x1 correction of the transverse zero mode
        total = f[:, :, zi].sum(axis=1) * dx                          # (2, N) integral over x1
        corrected = _normalize_zero_mode(self.grid, total, W, (1, 2))
        f[:, :, zi] += ((corrected - total) / (X * dx))[:, None, :]
        return f


def build_model(config: SolverConfig):
    return TorusModel(config) if config.geometry == "torus" else ChannelModel(config)


# ---------------------------------------------------------------------------
# run loop
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    config: SolverConfig
    model: object
    series: object
    final: SpectralState
    initial: SpectralState
    moments: list = dc_field(default_factory=list)
    moment_times: list = dc_field(default_factory=list)


def torus_moment_record(model: TorusModel, f: np.ndarray):
    fld = model.field(f)
    g = model.nonlinear(f, fld.E)
    Lf = model.L(f)
    return moment_record(model.grid, f, fld.E, g, Lf, model.modes.modes)


def run(config: SolverConfig, model=None, state: SpectralState | None = None,
        checkpoint_dir=None, progress=None) -> RunResult:
    """Integrate to ``t_end``; records diagnostics every ``diag_every`` steps.

    Raises :class:`NumericalAbort` (after writing ``abort.ckpt`` to
    ``checkpoint_dir`` if given) when the state stops being finite.
    """
    from .diagnostics import DiagnosticsSeries, snapshot

    model = build_model(config) if model is None else model
    state = model.initial_state() if state is None else state
    initial = state.copy()
    series = DiagnosticsSeries(model)
    series.append(snapshot(model, state))
    moments, mtimes = [], []
    if config.record_moments and config.geometry == "torus":
        moments.append(torus_moment_record(model, state.f))
        mtimes.append(state.t)
    # a restarted state continues on the same time lattice up to t_end
    start = int(round(state.t / config.dt))
    if abs(start * config.dt - state.t) > 1e-9 * max(1.0, state.t) or start > config.n_steps:
        raise ValueError(f"state time {state.t} is not a step of this run")
    n = config.n_steps
    f = state.f
    for it in range(start + 1, n + 1):
        new = model.step(f)
        if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > 1e100:
            last = SpectralState(f, (it - 1) * config.dt)
            if checkpoint_dir is not None:
                save_checkpoint(Path(checkpoint_dir) / "abort.ckpt", last, config)
            raise NumericalAbort(f"non-finite state at step {it} (t = {it * config.dt:.4g})", last)
        f = new
        t = it * config.dt
        if it % config.diag_every == 0 or it == n:
            series.append(snapshot(model, SpectralState(f, t)))
        if config.record_moments and config.geometry == "torus":
            moments.append(torus_moment_record(model, f))
            mtimes.append(t)
        if progress is not None:
            progress(it, n)
    final = SpectralState(f, n * config.dt)
    if checkpoint_dir is not None:
        save_checkpoint(Path(checkpoint_dir) / "final.ckpt", final, config)
    return RunResult(config, model, series, final, initial, moments, mtimes)


def save_checkpoint(path, state: SpectralState, config: SolverConfig) -> None:
    vio.write_container(path, "checkpoint", {"t": state.t, "config": config.to_dict()},
                        {"f": state.f})


def load_checkpoint(path) -> tuple[SpectralState, SolverConfig]:
    meta, arrays = vio.read_container(path, "checkpoint")
    cfg = meta["config"]
    cfg["initial"] = InitialCondition(**cfg["initial"])
    return SpectralState(np.asarray(arrays["f"], dtype=complex), float(meta["t"])), SolverConfig(**cfg)


def with_overrides(config: SolverConfig, **kw) -> SolverConfig:
    return replace(config, **kw)
