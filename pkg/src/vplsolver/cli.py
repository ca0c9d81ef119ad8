"""Command-line entry point: ``vplsolver run | verify | sweep | presets``.

Exit codes: 0 all configured checks pass, 1 a check failed, 2 usage or
configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .checks import verify_suite
from .config import PRESETS, ConfigError, Scenario, build_scenario, parse_config, preset
from .diagnostics import fit_series, run_summary, write_json
from .evolution import NumericalAbort, run, save_checkpoint
from .macro import moment_residuals, write_residual_csv

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3
ROUNDOFF = 1e-12
DECAY_R2 = 0.98

log = logging.getLogger("vplsolver")


def _threads(n):
    if n is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def _load(args) -> Scenario:
    if args.config and args.preset:
        raise ConfigError("use either --config or --preset, not both")
    if args.config:
        sc = parse_config(args.config)
        if args.seed is not None or args.out is not None:
            sc = build_scenario(sc.raw, seed=args.seed, out_dir=args.out)
        return sc
    if args.preset:
        return build_scenario(preset(args.preset), seed=args.seed, out_dir=args.out)
    raise ConfigError("a scenario is required: pass --config PATH or --preset NAME")


def _fit(series, functional_id, window):
    try:
        return fit_series(series, functional_id, window)
    except ValueError as exc:
        log.info("no decay fit: %s", exc)
        return None


def execute(scenario: Scenario, out: Path, write_checkpoints: bool | None = None) -> tuple[int, dict]:
    """Run one scenario, write its artifacts to ``out``; returns ``(exit_code, summary)``."""
    out.mkdir(parents=True, exist_ok=True)
    cfg = scenario.solver
    ckpt = scenario.checkpoints if write_checkpoints is None else write_checkpoints
    try:
        result = run(cfg, checkpoint_dir=out if ckpt else None)
    except NumericalAbort as exc:
        save_checkpoint(out / "abort.ckpt", exc.last_good, cfg)
        summary = {"version": __version__, "scenario": scenario.name, "config": cfg.to_dict(),
                   "aborted": True, "message": str(exc), "t_last_good": exc.last_good.t}
        write_json(out / "summary.json", summary)
        return EXIT_ABORT, summary
    result.series.write_csv(out / "series.csv")
    fit = _fit(result.series, scenario.fit_functional, scenario.fit_window)
    extra = {"scenario": scenario.name, "aborted": False}
    if result.moments:
        dt = cfg.dt
        res = moment_residuals(result.moments, result.model.modes.modes, dt)
        times = np.asarray(result.moment_times)[1:-1]
        labels = [result.model.modes.label(i) for i in range(result.model.modes.size)]
        write_residual_csv(out / "moment_residuals.csv", res, times, labels)
        extra["moment_residual_max"] = {k: float(v.max()) for k, v in res.items()}
    summary = run_summary(result, {scenario.fit_functional: fit}, extra)
    write_json(out / "summary.json", summary)
    return (EXIT_OK if summary["conservation_pass"] else EXIT_CHECK), summary


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    sc = _load(args)
    out = Path(sc.out_dir)
    with _threads(args.threads):
        code, summary = execute(sc, out)
    if summary.get("aborted"):
        print(f"ABORT  {summary['message']}")
    else:
        for law, entry in summary["conservation"].items():
            print(f"{'PASS' if entry['pass'] else 'FAIL'}  {law}: rel drift {entry['rel_drift']:.3e}")
        for fid, fit in summary["decay"].items():
            if fit is not None:
                print(f"fit    {fid}: delta_hat = {fit['delta_hat']:.4g}, r^2 = {fit['r_squared']:.4f}")
    print(f"summary: {out / 'summary.json'}")
    return code


def cmd_verify(args) -> int:
    sc = _load(args) if (args.config or args.preset) else None
    gamma = sc.solver.gamma if sc else -2.0
    n = sc.solver.n_v if sc else 16
    v_max = sc.solver.v_max if sc else 6.0
    out = Path(args.out or (sc.out_dir if sc else "out"))
    out.mkdir(parents=True, exist_ok=True)
    with _threads(args.threads):
        results = verify_suite(gamma, n, v_max)
    for r in results:
        print(r.line())
    write_json(out / "verify.json", {"version": __version__, "gamma": gamma, "n_v": n, "v_max": v_max,
                                     "checks": [r.to_dict() for r in results]})
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def amplitude_sweep(sc: Scenario, out: Path) -> tuple[int, dict]:
    rows = []
    for i, amp in enumerate(sc.sweep.amplitudes):
        cfg = replace(sc.solver, initial=replace(sc.solver.initial, amplitude=amp))
        sub = replace(sc, solver=cfg, sweep=None)
        code, summary = execute(sub, out / f"amp-{i:02d}", write_checkpoints=False)
        fit = None if summary.get("aborted") else summary["decay"].get(sc.fit_functional)
        rows.append({"amplitude": amp, "exit": code, "aborted": bool(summary.get("aborted")),
                     "delta_hat": None if fit is None else fit["delta_hat"],
                     "r_squared": None if fit is None else fit["r_squared"],
                     "conservation_pass": summary.get("conservation_pass", False)})
    ok = [r["amplitude"] for r in rows if not r["aborted"] and r["delta_hat"] is not None
          and r["delta_hat"] > 0 and r["r_squared"] >= DECAY_R2 and r["conservation_pass"]]
    # empirical threshold: largest amplitude up to which every run decays cleanly
    # and keeps its conservation laws
    threshold = None
    for r in rows:
        if r["amplitude"] in ok:
            threshold = r["amplitude"]
        else:
            break
    table = {"version": __version__, "scenario": sc.name, "kind": "amplitude", "runs": rows,
             "empirical_threshold": threshold}
    return (EXIT_OK if all(r["exit"] != EXIT_ABORT for r in rows) else EXIT_ABORT), table


def refinement_constants(level_residuals: list, stability: float = 3.0) -> dict:
    """Residual constants ``C = max r / (dt^2 + h^2)`` per equation and level.

    ``level_residuals``: list of ``(h, dt, {equation: max residual})``.  An
    equation whose residual is at round-off on every level is reported as
    exact; otherwise the constant is stable when ``max C / min C <= stability``.
    """
    eqs = level_residuals[0][2].keys()
    out = {}
    for eq in eqs:
        vals = [r[eq] for _, _, r in level_residuals]
        consts = [r[eq] / (dt ** 2 + h ** 2) for h, dt, r in level_residuals]
        if max(vals) <= ROUNDOFF:
            out[eq] = {"constants": consts, "ratio": 1.0, "exact": True, "stable": True}
            continue
        ratio = max(consts) / min(consts) if min(consts) > 0 else float("inf")
        out[eq] = {"constants": consts, "ratio": ratio, "exact": False, "stable": bool(ratio <= stability)}
    return out


def refinement_sweep(sc: Scenario, out: Path) -> tuple[int, dict]:
    levels = []
    for i, (n_v, dt) in enumerate(sc.sweep.levels):
        cfg = replace(sc.solver, n_v=n_v, dt=dt, record_moments=True)
        sub = replace(sc, solver=cfg, sweep=None)
        code, summary = execute(sub, out / f"level-{i:02d}", write_checkpoints=False)
        if code == EXIT_ABORT:
            return EXIT_ABORT, {"scenario": sc.name, "kind": "refinement", "aborted_level": i}
        h = 2.0 * cfg.v_max / n_v
        amp = max(cfg.initial.amplitude, 1e-300)
        res = {k: v / amp for k, v in summary["moment_residual_max"].items()}
        levels.append((h, dt, res))
    consts = refinement_constants(levels)
    table = {"version": __version__, "scenario": sc.name, "kind": "refinement",
             "levels": [{"h": h, "dt": dt, "residual_over_amplitude": r} for h, dt, r in levels],
             "equations": consts, "stable": all(v["stable"] for v in consts.values())}
    return (EXIT_OK if table["stable"] else EXIT_CHECK), table


def cmd_sweep(args) -> int:
    sc = _load(args)
    if sc.sweep is None:
        raise ConfigError("scenario has no 'sweep' section")
    out = Path(sc.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with _threads(args.threads):
        if sc.sweep.kind == "amplitude":
            code, table = amplitude_sweep(sc, out)
        else:
            code, table = refinement_sweep(sc, out)
    write_json(out / "sweep.json", table)
    print(json.dumps({k: v for k, v in table.items() if k != "levels"}, indent=2, default=float))
    return code


def cmd_presets(args) -> int:
    for name in sorted(PRESETS):
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vplsolver", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"vplsolver {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH", help="scenario YAML file")
        sp.add_argument("--preset", metavar="NAME", help="named preset scenario (see 'presets')")
        sp.add_argument("--seed", type=int, help="seed for random initial data")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        sp.add_argument("--threads", type=int, metavar="INT", help="BLAS/FFT thread limit")

    common(sub.add_parser("run", help="integrate one scenario"))
    common(sub.add_parser("verify", help="invariant suites without time evolution"))
    common(sub.add_parser("sweep", help="amplitude or refinement sweep"))
    sub.add_parser("presets", help="list preset scenarios")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:                   # argparse usage errors exit 2 already
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": cmd_run, "verify": cmd_verify, "sweep": cmd_sweep, "presets": cmd_presets}
    try:
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise ConfigError("--threads must be a positive integer")
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
