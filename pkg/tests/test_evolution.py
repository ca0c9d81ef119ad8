from __future__ import annotations

import numpy as np
import pytest
from conftest import small_config

from vplsolver.evolution import (InitialCondition, NumericalAbort, SolverConfig, SpectralState, build_model,
                                 field_drift, load_checkpoint, run, save_checkpoint)
from vplsolver.geometry import gauss_residual, specular_defect
from vplsolver.macro import project, reconstruct
from vplsolver.velocity import pair_norm


# -- configuration --------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    {"dt": 0.0}, {"t_end": 0.01, "dt": 0.05}, {"gamma": -3.0}, {"geometry": "sphere"},
    {"q": 0.2, "theta": 2.0}, {"nonlinearity": "half"}, {"flux": "muscl"}, {"R": -1.0},
    {"diag_every": 0}, {"geometry": "channel", "dt": 0.5},
])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_initial_condition_rejects():
    with pytest.raises(ValueError):
        InitialCondition(kind="gauss")
    with pytest.raises(ValueError):
        InitialCondition(amplitude=-1.0)
    with pytest.raises(ValueError):
        InitialCondition(mode=(1, 0))


def test_n_steps_requires_multiple():
    with pytest.raises(ValueError):
        SolverConfig(dt=0.3, t_end=1.0).n_steps


# -- right-hand side --------------------------------------------------------------

def test_rhs_zero_at_equilibrium(cache_dir):
    m = build_model(small_config(cache_dir))
    f = np.zeros((2, m.modes.size, m.grid.size), complex)
    assert np.all(m.rhs(f) == 0)


def test_rhs_free_streaming(cache_dir, rng):
    m = build_model(small_config(cache_dir, field=False, collision=False, nonlinearity="linearized"))
    f = rng.standard_normal((2, m.modes.size, m.grid.size)) + 0j
    assert np.allclose(m.rhs(f), -1j * m.kv[None] * f, atol=1e-14)


def test_drift_convolution_matches_direct_product(cache_dir, rng):
    m = build_model(small_config(cache_dir, k_max=2))
    modes, g = m.modes, m.grid
    E = modes.symmetrize(rng.standard_normal((3, modes.size)) + 1j * rng.standard_normal((3, modes.size)),
                         axis=1)
    E[:, np.abs(modes.modes[:, 0]) > 1] = 0          # keep the product inside the retained set
    f = rng.standard_normal((2, modes.size, g.size)) + 1j * rng.standard_normal((2, modes.size, g.size))
    f = modes.symmetrize(f, axis=1)
    f[:, np.abs(modes.modes[:, 0]) > 1] = 0
    fast = modes.from_physical(field_drift(g, modes.to_physical(E, axis=1).real,
                                           modes.to_physical(f, axis=1).real), axis=1)
    direct = np.zeros_like(f)
    lookup = {tuple(k): i for i, k in enumerate(modes.modes)}
    for i, k in enumerate(modes.modes):
        for j, kp in enumerate(modes.modes):
            idx = lookup.get(tuple(k - kp))
            if idx is not None:
                direct[:, i] += field_drift(g, E[:, idx:idx + 1], f[:, j:j + 1])[:, 0] / modes.volume
    assert np.allclose(fast, direct, atol=1e-12)


# -- stepping -------------------------------------------------------------------------

def test_zero_data_stays_zero(cache_dir):
    res = run(small_config(cache_dir, initial=InitialCondition(kind="zero")))
    assert np.all(res.final.f == 0)


def test_free_streaming_phase_rotation(cache_dir):
    cfg = small_config(cache_dir, field=False, collision=False, nonlinearity="linearized", normalize=False)
    res = run(cfg)
    m = res.model
    exact = np.exp(-1j * m.kv * cfg.t_end)[None] * res.initial.f
    assert np.max(np.abs(res.final.f - exact)) <= 1e-10 * np.max(np.abs(exact)) * cfg.n_steps


def test_linearized_norm_nonincreasing(cache_dir):
    cfg = small_config(cache_dir, field=False, nonlinearity="linearized", t_end=2.0,
                       initial=InitialCondition(kind="random", amplitude=1e-2, k_init=2))
    m = build_model(cfg)
    # oracle: the collision generator has its spectrum in the closed left half-plane
    Ls, Ld = m.propagator.generator()
    assert np.max(np.linalg.eigvalsh(Ls)) < 1e-12 and np.max(np.linalg.eigvalsh(Ld)) < 1e-12
    res = run(cfg, model=m)
    per_mode = res.series.array("l2v")
    assert np.all(np.diff(per_mode, axis=0) <= 1e-12 * per_mode.max())


def test_collision_flow_converges_to_projection(cache_dir):
    m = build_model(SolverConfig(n_v=16, k_max=1, dt=0.05, t_end=0.1, cache_dir=cache_dir))
    g = m.grid
    f = np.stack([g.nodes[:, 0] * g.sqrt_mu * 1.0001, g.nodes[:, 0] * g.sqrt_mu])
    coeffs, micro = project(g, f)
    out = m.propagator.apply(f, 50.0)
    assert pair_norm(g, out - reconstruct(g, coeffs)) < 1e-2 * pair_norm(g, micro)


def test_conjugate_symmetry_and_poisson(cache_dir):
    res = run(small_config(cache_dir, initial=InitialCondition(kind="random", amplitude=1e-2, seed=3)))
    m, f = res.model, res.final.f
    assert m.modes.symmetry_defect(f, axis=1) < 1e-14
    fld = m.field(f)
    assert np.max(np.abs(gauss_residual(m.modes, fld.E, m.rho(f)))) < 1e-14


def test_normalization_enforces_conservation_laws(cache_dir):
    cfg = small_config(cache_dir, initial=InitialCondition(kind="random", amplitude=0.05, seed=1, k_init=1))
    m = build_model(cfg)
    state = m.initial_state()
    laws = m.laws(state.f)
    assert abs(laws.mass_plus) < 1e-15 and abs(laws.mass_minus) < 1e-15
    assert np.max(np.abs(laws.momentum)) < 1e-15
    assert abs(laws.energy) < 1e-15 * max(laws.field_energy, 1.0)
    cfg_raw = small_config(cache_dir, normalize=False,
                           initial=InitialCondition(kind="random", amplitude=0.05, seed=1, k_init=1))
    raw = build_model(cfg_raw).initial_state()
    assert abs(build_model(cfg_raw).laws(raw.f).mass_plus) > 1e-6


def test_checkpoint_restart_reproduces(cache_dir, tmp_path):
    cfg = small_config(cache_dir, t_end=0.5, initial=InitialCondition(kind="random", amplitude=1e-2, seed=2))
    full = run(cfg)
    half = run(small_config(cache_dir, t_end=0.25,
                            initial=InitialCondition(kind="random", amplitude=1e-2, seed=2)))
    save_checkpoint(tmp_path / "mid.ckpt", half.final, cfg)
    state, cfg2 = load_checkpoint(tmp_path / "mid.ckpt")
    assert state.t == pytest.approx(0.25) and cfg2 == cfg
    resumed = run(cfg2, state=state)
    assert np.array_equal(resumed.final.f, full.final.f)
    with pytest.raises(ValueError):
        run(cfg, state=SpectralState(state.f, 0.13))


def test_numerical_abort(cache_dir, tmp_path):
    cfg = small_config(cache_dir, t_end=0.2)
    m = build_model(cfg)
    m.step = lambda f: f * np.nan
    with pytest.raises(NumericalAbort) as exc:
        run(cfg, model=m, checkpoint_dir=tmp_path)
    assert exc.value.last_good.t == 0.0
    assert (tmp_path / "abort.ckpt").exists()


def test_run_writes_final_checkpoint(cache_dir, tmp_path):
    cfg = small_config(cache_dir, t_end=0.1)
    res = run(cfg, checkpoint_dir=tmp_path)
    state, _ = load_checkpoint(tmp_path / "final.ckpt")
    assert np.array_equal(state.f, res.final.f)


# -- channel ---------------------------------------------------------------------------

def test_channel_short_run(cache_dir):
    cfg = SolverConfig(geometry="channel", n_v=8, n_x1=8, dt=0.04, t_end=0.4, cache_dir=cache_dir,
                       initial=InitialCondition(amplitude=1e-2))
    res = run(cfg)
    m, f = res.model, res.final.f
    assert specular_defect(m.grid, f) == 0.0
    trans = res.series.law("momentum_2"), res.series.law("momentum_3")
    scale = m.law_scale(res.initial.f)
    for series in trans:
        assert np.max(np.abs(series - series[0])) <= cfg.tol_cons * scale
    mp = res.series.law("mass_plus")
    assert np.max(np.abs(mp - mp[0])) <= 1e-12 * scale
