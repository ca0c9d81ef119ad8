"""Macroscopic projection, moment functionals and fluid-system residuals.

Conventions: a pair ``f`` has shape ``(2, ..., N)``; macroscopic coefficients
carry the leading shape ``...`` (e.g. one value per Fourier mode).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .velocity import VelocityGrid, discrete_moment, normalized_gaussian_moment


@dataclass
class MacroCoeffs:
    a_plus: np.ndarray
    a_minus: np.ndarray
    b: np.ndarray        # (3, ...)
    c: np.ndarray

    def swapped(self) -> "MacroCoeffs":
        return MacroCoeffs(self.a_minus, self.a_plus, self.b, self.c)


@dataclass
class MomentFunctionals:
    theta: np.ndarray    # (3, 3, ...)
    lam: np.ndarray      # (3, ...)
    G: np.ndarray        # (3, ...)


def kernel_functions(grid: VelocityGrid) -> np.ndarray:
    """The six collision invariants as pairs, shape (6, 2, N).

    Order: [1,0]sqrt(mu), [0,1]sqrt(mu), [1,1]v_j sqrt(mu) (j=1..3), [1,1](|v|^2-3)sqrt(mu).
    """
    s = grid.sqrt_mu
    z = np.zeros_like(s)
    out = [np.stack([s, z]), np.stack([z, s])]
    for j in range(3):
        out.append(np.stack([grid.nodes[:, j] * s] * 2))
    out.append(np.stack([(grid.speed2 - 3.0) * s] * 2))
    return np.array(out)


def _pair_moment(grid: VelocityGrid, f: np.ndarray, psi: np.ndarray) -> np.ndarray:
    # sum_v w f psi over the node axis; f (..., N), psi (N,)
    return np.tensordot(f, grid.weights * psi, axes=([-1], [0]))


def coefficients(grid: VelocityGrid, f: np.ndarray) -> MacroCoeffs:
    """``a_pm = (sqrt mu, f_pm)``, ``b_j = (v_j sqrt mu, f_+ + f_-)/2``, ``c = ((|v|^2-3) sqrt mu, f_+ + f_-)/12``."""
    f = np.asarray(f)
    s = grid.sqrt_mu
    a_p = _pair_moment(grid, f[0], s)
    a_m = _pair_moment(grid, f[1], s)
    fs = f[0] + f[1]
    b = np.stack([0.5 * _pair_moment(grid, fs, grid.nodes[:, j] * s) for j in range(3)])
    c = _pair_moment(grid, fs, (grid.speed2 - 3.0) * s) / 12.0
    return MacroCoeffs(a_p, a_m, b, c)


def reconstruct(grid: VelocityGrid, m: MacroCoeffs) -> np.ndarray:
    """``P f`` from coefficients: ``(a_pm + v.b + (|v|^2-3) c) sqrt(mu)`` per species."""
    s = grid.sqrt_mu
    common = (np.tensordot(np.moveaxis(m.b, 0, -1), grid.nodes.T, axes=([-1], [0]))
              + np.asarray(m.c)[..., None] * (grid.speed2 - 3.0))
    plus = (np.asarray(m.a_plus)[..., None] + common) * s
    minus = (np.asarray(m.a_minus)[..., None] + common) * s
    return np.stack([plus, minus])


def project(grid: VelocityGrid, f: np.ndarray):
    """Return ``(MacroCoeffs, f - P f)``."""
    m = coefficients(grid, f)
    return m, np.asarray(f) - reconstruct(grid, m)


def theta_weight(grid: VelocityGrid, j: int, m: int) -> np.ndarray:
    """``(v_j v_m - delta_jm) sqrt(mu)``."""
    v = grid.nodes
    return (v[:, j] * v[:, m] - (1.0 if j == m else 0.0)) * grid.sqrt_mu


def lambda_weight(grid: VelocityGrid, j: int) -> np.ndarray:
    """``(|v|^2 - 5) v_j sqrt(mu) / 10``."""
    return 0.1 * (grid.speed2 - 5.0) * grid.nodes[:, j] * grid.sqrt_mu


def theta_of(grid: VelocityGrid, u: np.ndarray) -> np.ndarray:
    """``Theta_jm(u)`` for a single-species field ``u`` (..., N) -> (3, 3, ...)."""
    out = np.empty((3, 3) + u.shape[:-1], dtype=np.result_type(u, float))
    for j in range(3):
        for m in range(j, 3):
            out[j, m] = _pair_moment(grid, u, theta_weight(grid, j, m))
            out[m, j] = out[j, m]
    return out


def lambda_of(grid: VelocityGrid, u: np.ndarray) -> np.ndarray:
    return np.stack([_pair_moment(grid, u, lambda_weight(grid, j)) for j in range(3)])


def velocity_moment(grid: VelocityGrid, u: np.ndarray) -> np.ndarray:
    """``(u, v sqrt(mu))`` -> (3, ...)."""
    return np.stack([_pair_moment(grid, u, grid.nodes[:, j] * grid.sqrt_mu) for j in range(3)])


def moment_functionals(grid: VelocityGrid, f: np.ndarray) -> MomentFunctionals:
    """Theta and Lambda of ``{I-P}f . [1,1]`` and ``G = ({I-P}f . [1,-1], v sqrt(mu))``."""
    _, r = project(grid, f)
    return MomentFunctionals(theta_of(grid, r[0] + r[1]), lambda_of(grid, r[0] + r[1]),
                             velocity_moment(grid, r[0] - r[1]))


# ---------------------------------------------------------------------------
# pairing constants
# ---------------------------------------------------------------------------

def _poly_mul(p, q):
    out = {}
    for ea, ca in p.items():
        for eb, cb in q.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            out[e] = out.get(e, 0.0) + ca * cb
    return out


def _poly(*terms):
    return {tuple(e): float(c) for e, c in terms}


SPEED2 = _poly(((2, 0, 0), 1), ((0, 2, 0), 1), ((0, 0, 2), 1))


def _shift(p, c):
    q = dict(p)
    q[(0, 0, 0)] = q.get((0, 0, 0), 0.0) + c
    return q


def gaussian_poly_integral(poly: dict) -> float:
    """``int P(v) mu dv`` for a polynomial given as ``{exponents: coefficient}``.

    Exact: each monomial goes through the double-factorial oracle.
    """
    return float(sum(c * normalized_gaussian_moment(e) for e, c in poly.items()))


def quadrature_poly_integral(grid: VelocityGrid, poly: dict) -> float:
    return float(sum(c * discrete_moment(grid, e) for e, c in poly.items()))


def _pairing_polys() -> dict:
    v1sq = _poly(((2, 0, 0), 1))
    v2sq = _poly(((0, 2, 0), 1))
    return {
        # momentum-equation constants
        "vm2(vm2-1)": _poly_mul(v1sq, _shift(v1sq, -1.0)),
        "vm2(vj2-1)": _poly_mul(v1sq, _shift(v2sq, -1.0)),
        "vm2vj2|v|2": _poly_mul(_poly_mul(v1sq, v2sq), SPEED2),
        # c-pairing: ((|v|^2-3) c, (|v|^2-5) v_j^2) -> factor 10
        "c_factor": _poly_mul(_poly_mul(_shift(SPEED2, -3.0), _shift(SPEED2, -5.0)), v1sq),
        # a-pairing: -(a, v_j^2 (|v|^2-10)) -> factor 5
        "a_factor": {e: -c for e, c in _poly_mul(v1sq, _shift(SPEED2, -10.0)).items()},
        # projection and Lambda normalizations
        "(|v|2-3)2": _poly_mul(_shift(SPEED2, -3.0), _shift(SPEED2, -3.0)),
        "v1^2(|v|2-5)2": _poly_mul(v1sq, _poly_mul(_shift(SPEED2, -5.0), _shift(SPEED2, -5.0))),
        # a-pairing orthogonality: ((|v|^2-3), v_j^2 (|v|^2-10)) = 0
        "(|v|2-3)v1^2(|v|2-10)": _poly_mul(_shift(SPEED2, -3.0), _poly_mul(v1sq, _shift(SPEED2, -10.0))),
    }


REFERENCE_PAIRING_VALUES = {
    "vm2(vm2-1)": 2.0, "vm2(vj2-1)": 0.0, "vm2vj2|v|2": 7.0,
    "c_factor": 10.0, "a_factor": 5.0,
}


def pairing_constants(grid: VelocityGrid) -> dict:
    """Gaussian constants of the fluid-type system: ``name -> (quadrature, exact)``.

    ``exact`` comes from monomial expansion through :func:`gaussian_moment_1d`;
    ``quadrature`` from :func:`discrete_moment` on ``grid``.
    """
    return {name: (quadrature_poly_integral(grid, p), gaussian_poly_integral(p))
            for name, p in _pairing_polys().items()}


def macro_pairing(grid: VelocityGrid, kind: str, k, m: MacroCoeffs) -> complex:
    """``-sum_pm (P_pm f, i v.k Phi_pm)`` for the test functions of the macroscopic estimates.

    ``kind`` is ``"c"`` (``Phi = (|v|^2-5) i v.k phi_c sqrt(mu)`` with ``|k|^2 phi_c = c``),
    ``"a_sum"`` or ``"a_diff"`` (``Phi = (|v|^2-10) i v.k phi_a sqrt(mu)``).  Scalars
    per coefficient; assembled entirely by quadrature over the grid.  For ``"c"``
    the value is per species.
    """
    k = np.asarray(k, dtype=float)
    k2 = float(k @ k)
    if k2 == 0:
        raise ValueError("test functions need |k| >= 1")
    kv = grid.nodes @ k
    s = grid.sqrt_mu
    Pf = reconstruct(grid, m)
    if kind == "c":
        phi = m.c / k2
        Phi = (grid.speed2 - 5.0) * 1j * kv * phi * s
        return complex(-np.sum(grid.weights * Pf[0] * np.conj(1j * kv * Phi)))
    if kind == "a_sum":
        phis = [(m.a_plus + m.a_minus) / k2] * 2
    elif kind == "a_diff":
        phis = [(m.a_plus - m.a_minus) / k2, (m.a_minus - m.a_plus) / k2]
    else:
        raise ValueError(f"unknown test-function kind {kind!r}")
    total = 0.0
    for a in range(2):
        Phi = (grid.speed2 - 10.0) * 1j * kv * phis[a] * s
        total += -np.sum(grid.weights * Pf[a] * np.conj(1j * kv * Phi))
    return complex(total)


# ---------------------------------------------------------------------------
# residuals of the Fourier fluid-type system
# ---------------------------------------------------------------------------

EQUATIONS = (
    "continuity",          # d_t (a+ + a-)/2 + ik.b
    "momentum_j",          # d_t b_j + ik_j((a+ + a-)/2 + 2c) + 1/2 ik_m Theta_jm - 1/2 sum (g, v_j sqrt mu)
    "energy",              # d_t c + 1/3 ik.b + 5/6 ik_j Lambda_j - 1/12 sum (g, (|v|^2-3) sqrt mu)
    "theta_jm",            # d_t(1/2 Theta_jm + 2c delta) + ik_j b_m + ik_m b_j - 1/2 sum Theta(g + h)
    "lambda_j",            # 1/2 d_t Lambda_j + ik_j c - 1/2 sum Lambda(g + h)
    "charge",              # d_t(a+ - a-) + ik.G
    "current",             # d_t G + ik(a+ - a-) - 2E + ik.Theta([1,-1]) - ((g + Lf)[1,-1], v sqrt mu)
    "gauss",               # ik.E - (a+ - a-)
)


@dataclass
class MomentRecord:
    """Per-step moments needed by the residual evaluator (torus; leading axis = modes)."""

    a_plus: np.ndarray
    a_minus: np.ndarray
    b: np.ndarray
    c: np.ndarray
    theta_sum: np.ndarray
    lam_sum: np.ndarray
    G: np.ndarray
    theta_diff: np.ndarray
    E: np.ndarray
    g_v: np.ndarray          # 1/2 sum (g, v sqrt mu)
    g_c: np.ndarray          # 1/12 sum (g, (|v|^2-3) sqrt mu)
    gh_theta: np.ndarray     # 1/2 sum Theta(g + h)
    gh_lambda: np.ndarray    # 1/2 sum Lambda(g + h)
    gl_diff: np.ndarray      # ((g + Lf)[1,-1], v sqrt mu)


def moment_record(grid: VelocityGrid, f: np.ndarray, E: np.ndarray, g: np.ndarray,
                  Lf: np.ndarray, k: np.ndarray) -> MomentRecord:
    """Collect the moments of one torus snapshot.

    ``f``, ``g``, ``Lf``: (2, M, N); ``E``: (3, M); ``k``: (M, 3) real wave vectors.
    """
    m, r = project(grid, f)
    kv = grid.nodes @ np.asarray(k, dtype=float).T        # (N, M)
    h = -1j * kv.T[None] * r + Lf
    gs = g[0] + g[1]
    ghs = gs + h[0] + h[1]
    s = grid.sqrt_mu
    return MomentRecord(
        a_plus=m.a_plus, a_minus=m.a_minus, b=m.b, c=m.c,
        theta_sum=theta_of(grid, r[0] + r[1]), lam_sum=lambda_of(grid, r[0] + r[1]),
        G=velocity_moment(grid, r[0] - r[1]), theta_diff=theta_of(grid, r[0] - r[1]),
        E=np.asarray(E),
        g_v=0.5 * velocity_moment(grid, gs),
        g_c=_pair_moment(grid, gs, (grid.speed2 - 3.0) * s) / 12.0,
        gh_theta=0.5 * theta_of(grid, ghs),
        gh_lambda=0.5 * lambda_of(grid, ghs),
        gl_diff=velocity_moment(grid, (g[0] + Lf[0]) - (g[1] + Lf[1])),
    )


def _dt(series, dt):
    x = np.asarray(series)
    d = np.empty_like(x)
    d[1:-1] = (x[2:] - x[:-2]) / (2 * dt)
    d[0] = (-3 * x[0] + 4 * x[1] - x[2]) / (2 * dt)
    d[-1] = (3 * x[-1] - 4 * x[-2] + x[-3]) / (2 * dt)
    return d


def moment_residuals(records: list[MomentRecord], k: np.ndarray, dt: float,
                     interior_only: bool = True) -> dict:
    """Pointwise residuals of the Fourier fluid-type system.

    Returns a dict ``equation_id -> array (T, M)`` of absolute residuals
    (maximum over vector/tensor components).  Time derivatives are centred,
    one-sided at the ends; with ``interior_only`` the two end rows are dropped.
    """
    if len(records) < 3:
        raise ValueError("need at least 3 records for centred differences")
    if not dt > 0:
        raise ValueError("dt must be positive")

    def stack(name):
        return np.stack([getattr(r, name) for r in records])

    ik = 1j * np.asarray(k, dtype=float).T                 # (3, M)
    ap, am, b, c = stack("a_plus"), stack("a_minus"), stack("b"), stack("c")
    th, lam, G, thd, E = stack("theta_sum"), stack("lam_sum"), stack("G"), stack("theta_diff"), stack("E")
    gv, gc, ght, ghl, gld = (stack(n) for n in ("g_v", "g_c", "gh_theta", "gh_lambda", "gl_diff"))
    half_sum = 0.5 * (ap + am)

    res = {}
    res["continuity"] = np.abs(_dt(half_sum, dt) + np.einsum("jm,tjm->tm", ik, b))
    mom = (_dt(b, dt) + ik[None] * (half_sum + 2 * c)[:, None]
           + 0.5 * np.einsum("mk,tjmk->tjk", ik, th) - gv)
    res["momentum_j"] = np.abs(mom).max(axis=1)
    en = _dt(c, dt) + np.einsum("jm,tjm->tm", ik, b) / 3 + 5 / 6 * np.einsum("jm,tjm->tm", ik, lam) - gc
    res["energy"] = np.abs(en)
    tt = 0.5 * th + 2 * np.einsum("jm,tk->tjmk", np.eye(3), c)
    thr = (_dt(tt, dt) + ik[None, :, None] * b[:, None] + ik[None, None, :] * b[:, :, None] - ght)
    res["theta_jm"] = np.abs(thr).max(axis=(1, 2))
    lr = 0.5 * _dt(lam, dt) + ik[None] * c[:, None] - ghl
    res["lambda_j"] = np.abs(lr).max(axis=1)
    res["charge"] = np.abs(_dt(ap - am, dt) + np.einsum("jm,tjm->tm", ik, G))
    cur = (_dt(G, dt) + ik[None] * (ap - am)[:, None] - 2 * E
           + np.einsum("mk,tjmk->tjk", ik, thd) - gld)
    res["current"] = np.abs(cur).max(axis=1)
    res["gauss"] = np.abs(np.einsum("jm,tjm->tm", ik, E) - (ap - am))
    if interior_only:
        res = {key: val[1:-1] for key, val in res.items()}
    return res


def write_residual_csv(path, residuals: dict, times: np.ndarray, mode_labels) -> None:
    """CSV with columns ``t, mode, equation_id, residual``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mode", "equation_id", "residual"])
        for eq, arr in residuals.items():
            for it in range(arr.shape[0]):
                for im in range(arr.shape[1]):
                    w.writerow([repr(float(times[it])), mode_labels[im], eq, repr(float(arr[it, im]))])
