"""Shared fixtures: a session-wide operator cache and the expensive runs."""

from __future__ import annotations

import os
import time

import numpy as np
import pytest

from vplsolver.config import build_scenario, preset
from vplsolver.evolution import InitialCondition, SolverConfig, run
from vplsolver.landau import build_tensors
from vplsolver.velocity import build_grid


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    """Collision eigen-decompositions are cached per session (or in $VPLSOLVER_CACHE_DIR)."""
    env = os.environ.get("VPLSOLVER_CACHE_DIR")
    return env if env else str(tmp_path_factory.mktemp("operator-cache"))


@pytest.fixture(scope="session")
def grid8():
    return build_grid(8)


@pytest.fixture(scope="session")
def grid16():
    return build_grid(16)


@pytest.fixture(scope="session")
def tensors8(grid8):
    return build_tensors(grid8, -2.0)


@pytest.fixture(scope="session")
def tensors16(grid16):
    return build_tensors(grid16, -2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_config(cache_dir, **kw) -> SolverConfig:
    base = dict(n_v=8, k_max=4, dt=0.05, t_end=1.0, cache_dir=cache_dir,
                initial=InitialCondition(amplitude=1e-2))
    base.update(kw)
    return SolverConfig(**base)


def preset_config(name: str, cache_dir: str, **overrides) -> SolverConfig:
    sc = build_scenario(preset(name), environ={})
    cfg = sc.solver
    cfg.cache_dir = cache_dir
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


def timed_run(cfg: SolverConfig):
    """Run and attach the wall-clock time (operator setup included) as ``elapsed``."""
    t0 = time.perf_counter()
    res = run(cfg)
    res.elapsed = time.perf_counter() - t0
    return res


@pytest.fixture(scope="session")
def run_neg1(cache_dir):
    """gamma = -1 single-mode torus run, amplitude 1e-3, t_end = 10 (n = 16, k_max = 8)."""
    return timed_run(preset_config("torus-gamma-neg1", cache_dir))


@pytest.fixture(scope="session")
def run_neg2(cache_dir):
    return timed_run(preset_config("torus-gamma-neg2-smalldata", cache_dir))


@pytest.fixture(scope="session")
def run_zero(cache_dir):
    return timed_run(preset_config("torus-gamma-0", cache_dir))


@pytest.fixture(scope="session")
def run_linear(cache_dir):
    return timed_run(preset_config("torus-linear-single-mode", cache_dir))


@pytest.fixture(scope="session")
def run_channel(cache_dir):
    return timed_run(preset_config("channel-quasi1d", cache_dir))
