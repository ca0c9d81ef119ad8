"""Invariant suites that need no time evolution (the ``verify`` subcommand).

Each check returns a :class:`CheckResult` with the measured value, the
tolerance it is compared with and the verdict.  The suites are cheap enough
to run from the command line (a few seconds at the default grids).
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import (ChannelGrid, IncompatibleSourceError, TorusModes, boundary_flux_sum,
                       elliptic_solve_1d, gauss_residual, poisson_torus, specular_defect,
                       specular_ghosts)
from .landau import apply_A_and_K, apply_Gamma, apply_L, build_tensors, gamma_direct
from .macro import REFERENCE_PAIRING_VALUES, kernel_functions, pairing_constants
from .velocity import build_grid, moment_table, pair_norm


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return (f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.value:.3e} "
                f"(tol {self.tol:.1e}){'  ' + self.detail if self.detail else ''}")

    def to_dict(self) -> dict:
        return asdict(self)


def _result(name, value, tol, detail="", le=True) -> CheckResult:
    value = float(value)
    ok = bool(value <= tol) if le else bool(value >= tol)
    return CheckResult(name, value, float(tol), ok, detail)


# ---------------------------------------------------------------------------
# velocity space / collision operator
# ---------------------------------------------------------------------------

def check_moments(n: int = 16, v_max: float = 6.0, p_max: int = 10, tol: float = 1e-4) -> list:
    """Discrete 1D Gaussian moments against the analytic values, one result per p."""
    grid = build_grid(n, v_max)
    return [_result(f"moment p={row['p']}", row["rel_err"], tol, f"n={n}, v_max={v_max}")
            for row in moment_table(grid, p_max)]


def check_pairing(n: int = 16, v_max: float = 6.0, tol: float = 1e-4) -> list:
    """Quadrature values of the fluid-system constants against their exact values."""
    grid = build_grid(n, v_max)
    table = pairing_constants(grid)
    out = []
    for name, ref in REFERENCE_PAIRING_VALUES.items():
        quad, _ = table[name]
        err = abs(quad - ref) / abs(ref) if ref != 0 else abs(quad)
        out.append(_result(f"pairing {name}", err, tol, f"quadrature {quad:.8g} vs {ref:g}"))
    return out


def check_kernel(n: int = 16, gamma: float = -2.0, v_max: float = 6.0, tol: float = 1e-8,
                 seed: int = 0) -> CheckResult:
    """``|L psi| / (|L| scale)`` over the collision invariants.

    The operator scale is the largest ``|L f| / |f|`` over a few random pairs.
    """
    grid = build_grid(n, v_max)
    tensors = build_tensors(grid, gamma)
    rng = np.random.default_rng(seed)
    scale = 0.0
    for _ in range(4):
        f = rng.standard_normal((2, grid.size)) * grid.sqrt_mu ** 0.5
        scale = max(scale, pair_norm(grid, apply_L(tensors, grid, f)) / pair_norm(grid, f))
    worst = 0.0
    for psi in kernel_functions(grid):
        worst = max(worst, pair_norm(grid, apply_L(tensors, grid, psi)) / (scale * pair_norm(grid, psi)))
    return _result("kernel of L", worst, tol, f"n={n}, gamma={gamma}")


def check_splitting(n: int = 12, gamma: float = -2.0, tol: float = 1e-10, seed: int = 0) -> CheckResult:
    """``|(-A + K) f - L f| / |L f|`` for random pairs."""
    grid = build_grid(n)
    tensors = build_tensors(grid, gamma)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(3):
        f = rng.standard_normal((2, grid.size)) * grid.sqrt_mu ** 0.5
        A, K = apply_A_and_K(tensors, grid, f)
        Lf = apply_L(tensors, grid, f)
        worst = max(worst, pair_norm(grid, -A + K - Lf) / pair_norm(grid, Lf))
    return _result("A/K splitting", worst, tol, f"n={n}, gamma={gamma}")


def check_gamma_oracle(n: int = 8, gamma: float = -2.0, tol: float = 1e-8, seed: int = 0) -> CheckResult:
    """FFT-based ``Gamma`` against direct double summation of the Landau operator."""
    grid = build_grid(n)
    tensors = build_tensors(grid, gamma)
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((2, grid.size)) * grid.sqrt_mu
    g = rng.standard_normal((2, grid.size)) * grid.sqrt_mu
    t0 = time.perf_counter()
    ref = gamma_direct(grid, gamma, f, g)
    elapsed = time.perf_counter() - t0
    got = apply_Gamma(tensors, grid, f, g)
    err = np.max(np.abs(got - ref)) / np.max(np.abs(ref))
    return _result("Gamma vs direct summation", err, tol, f"n={n}, oracle {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# fields and boundaries
# ---------------------------------------------------------------------------

ELLIPTIC_CASES = (("dirichlet", 0.0), ("dirichlet", 1.0), ("neumann", 0.0), ("neumann", 1.0))


def manufactured_error(n_x1: int, bc: str, kbar2: float) -> float:
    """Max error of the 1D elliptic solve for a manufactured eigenfunction."""
    grid = ChannelGrid(n_x1)
    x = grid.nodes_x1
    exact = np.sin(np.pi * x) if bc == "dirichlet" else np.cos(np.pi * x)
    u = elliptic_solve_1d(grid, kbar2, (np.pi ** 2 + kbar2) * exact, bc)
    return float(np.max(np.abs(u - exact)))


def elliptic_order(bc: str, kbar2: float, sizes=(32, 64, 128)) -> float:
    """Observed convergence order from the two finest grids of ``sizes``."""
    errs = [manufactured_error(n, bc, kbar2) for n in sizes]
    return float(np.log(errs[-2] / errs[-1]) / np.log(sizes[-1] / sizes[-2]))


def check_elliptic(tol: float = 0.1) -> list:
    out = [_result(f"elliptic order {bc} kbar2={k2:g}", abs(elliptic_order(bc, k2) - 2.0), tol)
           for bc, k2 in ELLIPTIC_CASES]
    grid = ChannelGrid(32)
    try:
        elliptic_solve_1d(grid, 0.0, np.ones(32), "neumann")
        rejected = 0.0
    except IncompatibleSourceError:
        rejected = 1.0
    out.append(_result("incompatible Neumann source rejected", rejected, 1.0, le=False))
    return out


def check_poisson(k_max: int = 4, dim: int = 3, seed: int = 0) -> CheckResult:
    modes = TorusModes(dim, k_max)
    rng = np.random.default_rng(seed)
    rho = modes.symmetrize(rng.standard_normal(modes.size) + 1j * rng.standard_normal(modes.size))
    rho[modes.zero_index] = 0.0
    fld = poisson_torus(modes, rho)
    res = np.max(np.abs(gauss_residual(modes, fld.E, rho))) / np.max(np.abs(rho))
    return _result("Gauss law ik.E = rho", res, 1e-14)


def check_specular(n: int = 8, n_x1: int = 8, seed: int = 0) -> list:
    vg = build_grid(n)
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((2, n_x1, 1, vg.size)) + 1j * rng.standard_normal((2, n_x1, 1, vg.size))
    lo, hi = specular_ghosts(vg, f)
    mirror = float(max(np.max(np.abs(lo - f[:, 0][..., vg.mirror_index])),
                       np.max(np.abs(hi - f[:, -1][..., vg.mirror_index]))))
    return [_result("specular ghost mirror", mirror, 0.0),
            _result("specular wall trace", specular_defect(vg, f), 0.0),
            _result("boundary flux sum", abs(boundary_flux_sum(vg, f)), 0.0)]


def verify_suite(gamma: float = -2.0, n: int = 16, v_max: float = 6.0) -> list:
    """All no-evolution invariant checks for one collision exponent."""
    out = []
    out += check_moments(n, v_max)
    out += check_pairing(n, v_max)
    out.append(check_kernel(n, gamma, v_max))
    out.append(check_splitting(12, gamma))
    out.append(check_gamma_oracle(8, gamma))
    out += check_elliptic()
    out.append(check_poisson())
    out += check_specular()
    return out
