from __future__ import annotations

import json

import numpy as np
import pytest
from conftest import small_config

from vplsolver.diagnostics import (CHANNEL_LAWS, TORUS_LAWS, DiagnosticsSeries, FunctionalRecord, checked_laws,
                                   conservation_report, fit_decay, fit_series, macro_report, mode_generator,
                                   run_summary, snapshot, spectrum_oracle, write_json)
from vplsolver.evolution import InitialCondition, SolverConfig, SpectralState, build_model, run


def synthetic_series(values, t, laws=None):
    s = DiagnosticsSeries()
    for i, (ti, v) in enumerate(zip(t, values)):
        one = np.array([[v]])
        s.append(FunctionalRecord(ti, one, 0 * one, one, one, one, one, one, 0 * one,
                                  laws={k: x[i] for k, x in (laws or {}).items()}))
    return s


# -- decay fits -------------------------------------------------------------------

def test_fit_exact_exponential():
    t = np.linspace(0, 10, 101)
    fit = fit_decay(t, 3.0 * np.exp(-0.4 * t))
    assert fit.delta_hat == pytest.approx(0.4, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.window == (2.0, 10.0)
    assert fit.intercept == pytest.approx(np.log(3.0))


def test_fit_noisy_exponential(rng):
    t = np.linspace(0, 20, 201)
    y = np.exp(-0.25 * t) * np.exp(0.02 * rng.standard_normal(t.size))
    fit = fit_decay(t, y, window=(5.0, 20.0))
    assert fit.delta_hat == pytest.approx(0.25, rel=0.02)
    assert 0.98 <= fit.r_squared <= 1.0


def test_fit_oscillating_decay_still_fits_envelope():
    t = np.linspace(0, 30, 601)
    y = np.exp(-0.2 * t) * (1.0 + 0.3 * np.cos(2.6 * t))
    fit = fit_decay(t, y)
    assert fit.delta_hat == pytest.approx(0.2, rel=0.05)


@pytest.mark.parametrize("window", [(-1.0, 5.0), (2.0, 50.0), (5.0, 5.0)])
def test_fit_rejects_bad_window(window):
    t = np.linspace(0, 10, 11)
    with pytest.raises(ValueError):
        fit_decay(t, np.exp(-t), window=window)


def test_fit_rejects_nonpositive():
    t = np.linspace(0, 10, 11)
    with pytest.raises(ValueError):
        fit_decay(t, np.zeros(11))


# -- folds and functionals --------------------------------------------------------

def test_folds_match_closed_forms():
    t = np.linspace(0, 5, 5001)
    s = synthetic_series(np.exp(-t), t)
    assert s.fold_sup("l2v") == pytest.approx(1.0)
    assert s.fold_sup("l2v", delta=1.0) == pytest.approx(1.0)
    assert s.fold_l2("l2v") == pytest.approx(np.sqrt((1 - np.exp(-10)) / 2), rel=1e-6)
    # with delta equal to the decay rate the weighted integrand is constant
    assert s.fold_l2("l2v", delta=1.0) == pytest.approx(np.sqrt(5.0), rel=1e-9)
    fun = s.functionals(0.5)
    assert fun["E_T"] == pytest.approx(1.0)
    assert fun["E_T_f"] <= fun["E_T"]
    assert s.functionals(0.0, upto=1)["D_T"] == 0.0


def test_instantaneous_ids():
    t = np.linspace(0, 1, 3)
    s = synthetic_series([1.0, 0.5, 0.25], t)
    assert np.allclose(s.instantaneous("f+E"), [1.0, 0.5, 0.25])
    assert np.allclose(s.instantaneous("fw"), [1.0, 0.5, 0.25])
    assert np.allclose(s.instantaneous("l2D"), [1.0, 0.5, 0.25])


def test_csv_output(tmp_path):
    t = np.linspace(0, 1, 3)
    s = synthetic_series([1.0, 0.5, 0.25], t, laws={"energy": np.zeros(3)})
    s.write_csv(tmp_path / "s.csv")
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "t,functional_id,value"
    assert any(",law:energy," in r for r in rows)


# -- conservation ---------------------------------------------------------------------

def test_checked_laws():
    assert checked_laws("torus") == TORUS_LAWS + ("c0_plus_W12",)
    assert "momentum_1" not in checked_laws("channel")
    assert checked_laws("channel") == CHANNEL_LAWS + ("c0_plus_W12",)
    assert "energy" not in checked_laws("torus", linearized=True)


def test_conservation_report():
    t = np.linspace(0, 1, 3)
    laws = {n: np.array([1.0, 1.0 + 1e-9, 1.0]) for n in TORUS_LAWS + ("c0_plus_W12",)}
    rep = conservation_report(synthetic_series([1, 1, 1], t, laws), 1.0, tol=1e-8)
    assert all(v["pass"] for v in rep.values())
    assert rep["energy"]["max_abs_drift"] == pytest.approx(1e-9)
    rep = conservation_report(synthetic_series([1, 1, 1], t, laws), 1.0, tol=1e-10)
    assert not any(v["pass"] for v in rep.values())


# -- snapshots of real states ------------------------------------------------------------

def test_zero_run_functionals(cache_dir):
    res = run(small_config(cache_dir, t_end=0.2, initial=InitialCondition(kind="zero")))
    fun = res.series.functionals(0.3)
    assert all(v == 0 for v in fun.values())
    assert conservation_report(res.series, 0.0)["energy"]["max_abs_drift"] == 0.0


def test_weighted_equals_unweighted_when_q_zero(cache_dir):
    m = build_model(small_config(cache_dir, q=0.0))
    rec = snapshot(m, m.initial_state())
    assert np.allclose(rec.l2v_w, rec.l2v) and np.allclose(rec.l2D_w, rec.l2D)
    assert np.all(rec.growth_w == 0)


def test_weighted_dominates_when_q_positive(cache_dir):
    m = build_model(small_config(cache_dir, q=0.05, theta=2.0))
    rec = snapshot(m, m.initial_state())
    assert np.all(rec.l2v_w >= rec.l2v) and np.all(rec.l2D_w >= rec.l2D * (1 - 1e-12))
    for name in ("l2v", "E", "l2D", "l2D_micro", "macro", "l2v_w", "l2D_w", "growth_w"):
        assert np.all(getattr(rec, name) >= 0)


def test_macro_report_and_summary(cache_dir, tmp_path):
    res = run(small_config(cache_dir, t_end=0.5))
    rep = macro_report(res.series, float(np.sum(res.series.records[0].l2v[0])))
    assert rep["left"] > 0 and rep["right"] > 0 and rep["k0_holds"]
    assert rep["k0_constant"] == pytest.approx(1 / (12 * 2 * np.pi))
    fit = fit_series(res.series)
    summary = run_summary(res, {"f+E": fit})
    write_json(tmp_path / "s.json", summary)
    back = json.loads((tmp_path / "s.json").read_text())
    assert back["conservation_pass"] is True
    assert set(back["functionals"]) >= {"delta_0"}
    assert back["config"]["n_v"] == 8


def test_spectrum_oracle_consistent_with_generator(cache_dir):
    cfg = SolverConfig(n_v=8, k_max=1, dt=0.05, t_end=0.1, nonlinearity="linearized", cache_dir=cache_dir)
    m = build_model(cfg)
    B = mode_generator(m, (1, 0, 0))
    assert B.shape == (2 * m.grid.size, 2 * m.grid.size)
    f0 = m.initial_state().f[:, list(map(tuple, m.modes.modes)).index((1, 0, 0))]
    orc = spectrum_oracle(m, (1, 0, 0), f0)
    assert orc.rate > 0 and orc.weight >= 1e-2
    assert orc.eigenvalue.real == pytest.approx(-orc.rate)


def test_constant_series_has_zero_rate():
    t = np.linspace(0, 10, 11)
    assert fit_decay(t, np.full(11, 2.0)).delta_hat == pytest.approx(0.0, abs=1e-12)


def test_unit_maxwellian_mode_normalization(cache_dir):
    m = build_model(small_config(cache_dir))
    f = np.zeros((2, m.modes.size, m.grid.size), complex)
    i = list(map(tuple, m.modes.modes)).index((1, 0, 0))
    f[0, i] = m.grid.sqrt_mu / np.sqrt(np.sum(m.grid.weights * m.grid.mu))
    rec = snapshot(m, SpectralState(f, 0.0))
    assert rec.l1k_l2v == pytest.approx(1.0, rel=1e-14)


def test_linearized_run_conserves_linear_laws(cache_dir):
    cfg = small_config(cache_dir, nonlinearity="linearized", t_end=2.0,
                       initial=InitialCondition(kind="random", amplitude=1e-2, k_init=2, seed=4))
    res = run(cfg)
    rep = conservation_report(res.series, res.model.law_scale(res.initial.f), linearized=True)
    assert all(v["rel_drift"] <= 1e-10 for v in rep.values())
    assert {"mass_plus", "mass_minus"} <= set(rep)


def test_macro_ratio_stable_across_resolutions(cache_dir):
    ratios = []
    for n in (8, 10, 12):
        res = run(small_config(cache_dir, n_v=n, k_max=2, t_end=2.0))
        rep = macro_report(res.series, float(np.sum(res.series.records[0].l2v[0])))
        ratios.append(rep["ratio"])
    assert min(ratios) > 0 and max(ratios) / min(ratios) <= 3
