"""Norms, energy/dissipation functionals, conservation and decay reports.

Every snapshot stores *instantaneous* per-mode quantities with a leading
"derivative" axis ``alpha`` (torus: only ``alpha = 0``; channel:
``alpha in {I, d_x1, d_x2, d_x3}``).  The time-sup and time-integral norms of
the functionals are folded afterwards, with the sup/integral taken inside the
mode sum as in ``L^1_k L^inf_T`` and ``L^1_k L^2_T``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .landau import DissipationNormSpec, l2D_profile, weight_w
from .macro import coefficients, project

ALPHA_TORUS = ("I",)
ALPHA_CHANNEL = ("I", "x1", "x2", "x3")


@dataclass
class FunctionalRecord:
    """Instantaneous norms at time ``t``; arrays are (A, M) = (alpha, mode)."""

    t: float
    l2v: np.ndarray
    E: np.ndarray
    l2D: np.ndarray
    l2D_micro: np.ndarray
    macro: np.ndarray
    l2v_w: np.ndarray
    l2D_w: np.ndarray
    growth_w: np.ndarray            # sqrt(qN) |<v>^{theta/2} (1+t)^{-(N+1)/2} w f|
    laws: dict = field(default_factory=dict)

    @property
    def l1k_l2v(self) -> float:
        return float(np.sum(self.l2v[0]))

    @property
    def l1k_E(self) -> float:
        return float(np.sum(self.E[0]))


def _weights(model, t):
    cfg = model.config
    w = weight_w(t, model.grid.nodes, cfg.q, cfg.theta, cfg.N)
    jv = np.sqrt(1.0 + model.grid.speed2)
    growth = np.sqrt(cfg.q * cfg.N) * jv ** (cfg.theta / 2) * (1 + t) ** (-(cfg.N + 1) / 2) * w
    return w, growth


def _mode_norms(model, f, w, growth):
    """Per-mode (and, for the channel, x1-integrated) norms of one pair field.

    ``f``: (2, M, N) on the torus, (2, X, M, N) in the channel.
    """
    g = model.grid
    spec = DissipationNormSpec(model.config.gamma)
    spec_w = DissipationNormSpec(model.config.gamma, weight=w)
    _, micro = project(g, f)
    out = {
        "l2v": np.sum(g.weights * np.abs(f) ** 2, axis=(0, -1)),
        "l2D": np.sum(l2D_profile(spec, g, f), axis=0),
        "l2D_micro": np.sum(l2D_profile(spec, g, micro), axis=0),
        "l2v_w": np.sum(g.weights * np.abs(w * f) ** 2, axis=(0, -1)),
        "l2D_w": np.sum(l2D_profile(spec_w, g, f), axis=0),
        "growth_w": np.sum(g.weights * np.abs(growth * f) ** 2, axis=(0, -1)),
    }
    m = coefficients(g, f)
    mac = (np.abs(m.a_plus) ** 2 + np.abs(m.a_minus) ** 2 + np.sum(np.abs(m.b) ** 2, axis=0)
           + np.abs(m.c) ** 2)
    out["macro"] = mac
    if f.ndim == 4:                                   # channel: integrate over x1
        dx = model.cgrid.dx
        out = {k: np.sum(v, axis=0) * dx for k, v in out.items()}
    return {k: np.sqrt(np.maximum(v.real, 0.0)) for k, v in out.items()}


def snapshot(model, state) -> FunctionalRecord:
    """Instantaneous functional record of a state."""
    f = state.f
    w, growth = _weights(model, state.t)
    if model.config.geometry == "torus":
        fld = model.field(f)
        norms = [_mode_norms(model, f, w, growth)]
        Eabs = [np.sqrt(np.sum(np.abs(fld.E) ** 2, axis=0))]
        laws = model.laws(f, fld.E)
    else:
        fld = model.field(f)
        kb = model.tmodes.modes.astype(float)
        derivs = [f, model.dx1(f), 1j * kb[None, None, :, 1, None] * f, 1j * kb[None, None, :, 2, None] * f]
        norms = [_mode_norms(model, d, w, growth) for d in derivs]
        dx = model.cgrid.dx
        # field: |alpha| <= 1 derivatives of E at cells
        E = fld.E
        Eext = np.concatenate([E[:, :1], E, E[:, -1:]], axis=1)
        dE1 = (Eext[:, 2:] - Eext[:, :-2]) / (2 * dx)
        Ed = [E, dE1, 1j * kb[None, None, :, 1] * E, 1j * kb[None, None, :, 2] * E]
        Eabs = [np.sqrt(np.sum(np.abs(e) ** 2, axis=(0, 1)) * dx) for e in Ed]
        laws = model.laws(f, fld)
    stack = lambda key: np.array([n[key] for n in norms])  # noqa: E731
    rec = FunctionalRecord(
        t=float(state.t), l2v=stack("l2v"), E=np.array(Eabs), l2D=stack("l2D"),
        l2D_micro=stack("l2D_micro"), macro=stack("macro"), l2v_w=stack("l2v_w"),
        l2D_w=stack("l2D_w"), growth_w=stack("growth_w"),
        laws={"mass_plus": laws.mass_plus, "mass_minus": laws.mass_minus,
              "momentum_1": float(laws.momentum[0]), "momentum_2": float(laws.momentum[1]),
              "momentum_3": float(laws.momentum[2]), "kinetic": laws.kinetic,
              "field_energy": laws.field_energy, "energy": laws.energy, "c0": laws.c0,
              "c0_plus_W12": laws.c0 + laws.field_energy / 12.0})
    return rec


energy_functionals = snapshot


class DiagnosticsSeries:
    """Time-ordered list of :class:`FunctionalRecord` with folding helpers."""

    def __init__(self, model=None):
        self.records: list[FunctionalRecord] = []
        self.model = model
        self.scale = None

    def append(self, rec: FunctionalRecord) -> None:
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    @property
    def t(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def array(self, name: str) -> np.ndarray:
        """(T, A, M) stack of a per-mode quantity."""
        return np.stack([getattr(r, name) for r in self.records])

    def law(self, name: str) -> np.ndarray:
        return np.array([r.laws[name] for r in self.records])

    # -- instantaneous scalar series --------------------------------------
    def instantaneous(self, functional_id: str) -> np.ndarray:
        """Scalar time series used for decay fits.

        ``"f+E"``: ``||f^||_{L^1_k L^2_v} + ||E^||_{L^1_k}`` (alpha = 0);
        ``"f+E_alpha"``: the same summed over all derivative orders (channel);
        ``"fw"``: ``||w f^||_{L^1_k L^2_v}``; any per-mode field name gives its
        L^1_k sum at alpha = 0.
        """
        if functional_id == "f+E":
            return self.array("l2v")[:, 0].sum(axis=1) + self.array("E")[:, 0].sum(axis=1)
        if functional_id == "f+E_alpha":
            return self.array("l2v").sum(axis=(1, 2)) + self.array("E").sum(axis=(1, 2))
        if functional_id == "fw":
            return self.array("l2v_w")[:, 0].sum(axis=1)
        return self.array(functional_id)[:, 0].sum(axis=1)

    # -- folds ----------------------------------------------------------
    def fold_sup(self, name: str, delta: float = 0.0) -> float:
        """``sum_alpha sum_k sup_t e^{delta t} q(t, k)``."""
        x = self.array(name) * np.exp(delta * self.t)[:, None, None]
        return float(np.sum(np.max(x, axis=0)))

    def fold_l2(self, name: str, delta: float = 0.0) -> float:
        """``sum_alpha sum_k (int e^{2 delta t} q(t, k)^2 dt)^{1/2}`` by the trapezoid rule."""
        x = (self.array(name) * np.exp(delta * self.t)[:, None, None]) ** 2
        return float(np.sum(np.sqrt(trapezoid(x, self.t, axis=0))))

    def functionals(self, delta: float = 0.0, upto: int | None = None) -> dict:
        """``E_T``, ``D_T`` and weighted forms over the first ``upto`` records."""
        sub = self if upto is None else self._prefix(upto)
        ET = sub.fold_sup("l2v", delta) + sub.fold_sup("E", delta)
        DT = sub.fold_l2("l2D", delta) + sub.fold_l2("E", delta)
        ETw = sub.fold_sup("l2v_w", delta)
        DTw = sub.fold_l2("l2D_w", delta) + sub.fold_l2("growth_w", delta)
        ET_plain = sub.fold_sup("l2v", delta)
        DT_plain = sub.fold_l2("l2D", delta)
        return {"E_T": ET, "D_T": DT, "E_Tw": ETw, "D_Tw": DTw,
                "E_T_f": ET_plain, "D_T_f": DT_plain}

    def _prefix(self, n: int) -> "DiagnosticsSeries":
        s = DiagnosticsSeries(self.model)
        s.records = self.records[:n]
        return s

    # -- output --------------------------------------------------------
    def to_rows(self):
        """``(t, functional_id, value)`` rows for CSV output."""
        ids = ("f+E", "l2v", "E", "l2D", "l2D_micro", "macro", "fw", "l2D_w")
        series = {i: self.instantaneous(i) for i in ids}
        law_names = list(self.records[0].laws) if self.records else []
        for it, t in enumerate(self.t):
            for i in ids:
                yield (t, i, float(series[i][it]))
            for name in law_names:
                yield (t, "law:" + name, float(self.records[it].laws[name]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "functional_id", "value"])
            for t, i, v in self.to_rows():
                w.writerow([repr(float(t)), i, repr(v)])


# ---------------------------------------------------------------------------
# decay fits
# ---------------------------------------------------------------------------

@dataclass
class DecayFit:
    delta_hat: float
    window: tuple
    r_squared: float
    functional_id: str
    intercept: float = 0.0


def fit_decay(t, values, window=None, functional_id: str = "f+E") -> DecayFit:
    """Least-squares fit ``log y = log C - delta t`` over ``window`` (default ``[0.2 T, T]``)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    if window is None:
        window = (0.2 * t[-1], t[-1])
    lo, hi = window
    if lo < t[0] - 1e-12 or hi > t[-1] + 1e-12 or hi <= lo:
        raise ValueError(f"window {window} must lie inside the run [{t[0]}, {t[-1]}]")
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if sel.sum() < 2:
        raise ValueError("need at least two samples in the fit window")
    ys = y[sel]
    if np.any(ys <= 0):
        raise ValueError("functional must be positive on the fit window")
    A = np.stack([np.ones(sel.sum()), t[sel]], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(ys), rcond=None)
    pred = A @ coef
    resid = np.log(ys) - pred
    tot = np.sum((np.log(ys) - np.mean(np.log(ys))) ** 2)
    r2 = 1.0 if tot == 0 else float(max(0.0, 1.0 - np.sum(resid ** 2) / tot))
    return DecayFit(float(-coef[1]), (float(lo), float(hi)), r2, functional_id, float(coef[0]))


def fit_series(series: DiagnosticsSeries, functional_id: str = "f+E", window=None) -> DecayFit:
    return fit_decay(series.t, series.instantaneous(functional_id), window, functional_id)


# ---------------------------------------------------------------------------
# conservation
# ---------------------------------------------------------------------------

TORUS_LAWS = ("mass_plus", "mass_minus", "momentum_1", "momentum_2", "momentum_3", "energy")
CHANNEL_LAWS = ("mass_plus", "mass_minus", "momentum_2", "momentum_3", "energy")


def checked_laws(geometry: str = "torus", linearized: bool = False) -> tuple:
    """Laws asserted for a run.

    The energy law and the k = 0 identity are consequences of the full
    nonlinear system (the field energy is quadratic); a linearized run only
    conserves the linear laws.  The x1-momentum is exchanged with the channel
    walls and is never asserted there.
    """
    names = TORUS_LAWS if geometry == "torus" else CHANNEL_LAWS
    if linearized:
        return tuple(n for n in names if n != "energy")
    return names + ("c0_plus_W12",)


def conservation_report(series: DiagnosticsSeries, scale: float, geometry: str = "torus",
                        tol: float | None = None, linearized: bool = False) -> dict:
    """Maximum drift of every asserted conservation law relative to ``scale``.

    ``scale`` is the magnitude scale of the initial state (see
    ``model.law_scale``); a zero scale (zero run) reports absolute drifts.
    """
    out = {}
    for name in checked_laws(geometry, linearized):
        x = series.law(name)
        drift = float(np.max(np.abs(x - x[0]))) if len(x) else 0.0
        rel = drift / scale if scale > 0 else drift
        entry = {"initial": float(x[0]), "max_abs_drift": drift, "rel_drift": rel}
        if tol is not None:
            entry["pass"] = bool(rel <= tol)
        out[name] = entry
    return out


# ---------------------------------------------------------------------------
# macroscopic report
# ---------------------------------------------------------------------------

def macro_report(series: DiagnosticsSeries, initial_l1: float) -> dict:
    """Both sides of the macroscopic dissipation inequality instance.

    left  = ``||(a, b, c)||_{L^1_k L^2_T} + ||E||_{L^1_k L^2_T}``
    right = ``||f||_{L^1_k L^inf_T L^2_v} + ||f_0||_{L^1_k L^2_v} + ||{I-P}f||_{L^1_k L^2_T L^2_D}
             + ||E||_{L^1_k L^inf_T} ||E||_{L^1_k L^2_T}
             + (||E||_{L^1_k L^inf_T} + ||f||_{L^1_k L^inf_T L^2_v}) ||f||_{L^1_k L^2_T L^2_D}``

    Also reports the k = 0 instance ``(int |c0|^2 dt)^{1/2} <= C sup||E||_{L^1_k} ||E||_{L^1_k L^2_T}``
    with the explicit constant ``C = (2 pi)^{-d} / 12`` that follows from
    ``c0 = -(1/12) int |E|^2 dx`` and Parseval.
    """
    left = series.fold_l2("macro") + series.fold_l2("E")
    Einf = series.fold_sup("E")
    E2 = series.fold_l2("E")
    finf = series.fold_sup("l2v")
    fD = series.fold_l2("l2D")
    right = (finf + initial_l1 + series.fold_l2("l2D_micro") + Einf * E2 + (Einf + finf) * fD)
    t = series.t
    c0 = series.law("c0")
    c0_l2 = float(np.sqrt(trapezoid(c0 ** 2, t)))
    El1 = series.array("E")[:, 0].sum(axis=1)
    sup_l1 = float(np.max(El1))
    l2_l1 = float(np.sqrt(trapezoid(El1 ** 2, t)))
    vol = series.model.modes.volume if series.model is not None and hasattr(series.model, "modes") else 1.0
    C = 1.0 / (12.0 * vol)
    return {"left": float(left), "right": float(right),
            "ratio": float(left / right) if right > 0 else 0.0,
            "k0_left": c0_l2, "k0_right": C * sup_l1 * l2_l1, "k0_constant": C,
            "k0_holds": bool(c0_l2 <= C * sup_l1 * l2_l1 * (1 + 1e-9) + 1e-300)}


def run_summary(result, fits: dict | None = None, extra: dict | None = None) -> dict:
    """JSON-serializable summary of a run: config echo, drifts, fits, functionals."""
    from . import __version__

    series = result.series
    model = result.model
    cfg = result.config
    scale = model.law_scale(result.initial.f)
    cons = conservation_report(series, scale, cfg.geometry, cfg.tol_cons,
                               linearized=cfg.nonlinearity != "full")
    fits = fits or {}
    out = {"version": __version__, "config": cfg.to_dict(),
           "t_final": float(result.final.t), "n_records": len(series),
           "law_scale": scale, "conservation": cons,
           "conservation_pass": all(v["pass"] for v in cons.values()),
           "functionals": {"delta_0": series.functionals(0.0)},
           "decay": {k: (vars(v) if v is not None else None) for k, v in fits.items()}}
    for k, v in fits.items():
        if v is not None and v.delta_hat > 0:
            out["functionals"][f"delta_{k}"] = series.functionals(v.delta_hat)
    if cfg.geometry == "torus":
        l1 = float(np.sum(series.records[0].l2v[0]))
        out["macro"] = macro_report(series, l1)
    if extra:
        out.update(extra)
    return out


def write_json(path, obj) -> None:
    def default(o):
        if isinstance(o, (np.floating,)):
            return float(o)
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, tuple):
            return list(o)
        raise TypeError(type(o))

    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=default)


# ---------------------------------------------------------------------------
# linear per-mode spectrum (decay-rate oracle)
# ---------------------------------------------------------------------------

def mode_generator(model, k) -> np.ndarray:
    """Dense generator of the linearized torus dynamics of one wave vector.

    Acts on the flattened pair ``(f_+, f_-)`` (length ``2N``) as
    ``-i (v.k) f + (+- E.v sqrt(mu)) + L f`` with ``E = -i k rho / |k|^2``.
    """
    g = model.grid
    k = np.asarray(k, dtype=float)
    N = g.size
    if model.propagator is not None:
        Ls, Ld = model.propagator.generator()
        L = np.block([[0.5 * (Ls + Ld), 0.5 * (Ls - Ld)], [0.5 * (Ls - Ld), 0.5 * (Ls + Ld)]])
    else:
        L = np.zeros((2 * N, 2 * N))
    B = L.astype(complex)
    kv = g.nodes @ k
    B[np.arange(2 * N), np.arange(2 * N)] += -1j * np.concatenate([kv, kv])
    if model.config.field:
        s = g.weights * g.sqrt_mu
        rho_row = np.concatenate([s, -s])                        # rho = rho_row . u
        ev = (g.nodes @ (-1j * k / (k @ k))) * g.sqrt_mu          # E.v sqrt(mu) per unit rho
        B += np.outer(np.concatenate([ev, -ev]), rho_row)
    return B


@dataclass
class SpectrumOracle:
    eigenvalue: complex
    weight: float
    rate: float


def spectrum_oracle(model, k, f0, min_weight: float = 1e-2) -> SpectrumOracle:
    """Least-damped eigenvalue of :func:`mode_generator` excited by ``f0``.

    ``f0`` (2, N) is expanded in the eigenvectors; eigenvalues whose
    coefficient carries less than ``min_weight`` of ``|f0|`` are discarded.
    This removes the near-zero modes supported at the corners of the
    truncated velocity box, which the smooth initial data does not excite.
    Among the remaining nonzero eigenvalues the one of smallest modulus
    (which is also the least damped) is returned; ``rate = -Re(lambda)``.
    """
    B = mode_generator(model, k)
    w = np.sqrt(np.concatenate([model.grid.weights] * 2))
    # similarity to the weighted inner product keeps the problem well scaled
    lam, V = np.linalg.eig(w[:, None] * B / w[None, :])
    u = w * np.asarray(f0).reshape(-1)
    coef = np.linalg.lstsq(V, u, rcond=None)[0]
    weight = np.abs(coef) * np.linalg.norm(V, axis=0) / np.linalg.norm(u)
    ok = (weight >= min_weight) & (np.abs(lam) > 1e-10)
    if not ok.any():
        raise ValueError("initial data excites no nonzero eigenvalue")
    idx = np.flatnonzero(ok)
    i = idx[np.argmin(np.abs(lam[idx]))]
    return SpectrumOracle(complex(lam[i]), float(weight[i]), float(-lam[i].real))
