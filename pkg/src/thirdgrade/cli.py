"""Command-line entry point: ``thirdgrade simulate|mc|converge|verify``.

Exit codes: 0 success, 1 verification failure, 2 invalid input, 3 blow-up.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .basis import BasisSpec, ResolutionError
from .config import RunConfig, load_config
from .io import manifest, write_csv, write_json, write_ledger, write_snapshots
from .montecarlo import ESTIMATORS, dt_convergence, galerkin_convergence, run_ensemble
from .operators import Params
from .sde import ConfigError, GalerkinSystem, simulate_path, validate
from .verify import DEFAULT_PARAMS, DEFAULT_SPEC, estimate_constants, run_suite

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_BLOWUP = 0, 1, 2, 3


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _load(args) -> tuple[RunConfig, object]:
    rc = RunConfig() if args.config is None else load_config(args.config)
    rc = rc.with_overrides(
        seed=args.seed,
        linear_test_mode=args.linear_test_mode,
        allow_unsafe=args.allow_unsafe_noise,
        scheme=getattr(args, "scheme", None),
    )
    cfg = rc.to_sim()
    validate(cfg)
    rc.basis.grid_n = cfg.basis.grid_n
    return rc, cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    start = time.perf_counter()
    rc, cfg = _load(args)
    system = GalerkinSystem(cfg)
    res = simulate_path(cfg, system=system)
    out = _out_dir(args)
    outputs = [write_ledger(out / "ledger.csv", res.ledger)]
    if cfg.snapshot_times:
        outputs.append(write_snapshots(out / "snapshots.csv", res.snapshots, system.basis.modes))
    result = {
        "steps": len(res.ledger) - 1,
        "blowup_step": res.blowup,
        "stopped": res.stopped,
        "tau_M": res.tau_M,
        "final_v_sq": float(res.ledger["v_sq"][-1]),
    }
    outputs.append(out / "manifest.json")
    write_json(
        out / "manifest.json",
        manifest("simulate", rc.model_dump(), cfg.seed, outputs, time.perf_counter() - start, {"result": result}),
    )
    if res.blowup is not None:
        _err(f"blow-up at step {res.blowup} (t = {res.blowup * cfg.dt:g}); last finite state kept")
        return EXIT_BLOWUP
    print(f"simulate: {result['steps']} steps, final ||Y||_V^2 = {result['final_v_sq']:.6g}, output in {out}")
    return EXIT_OK


def cmd_mc(args) -> int:
    start = time.perf_counter()
    if args.paths < 1:
        raise ConfigError(f"--paths must be >= 1, got {args.paths}")
    if args.parallel < 1:
        raise ConfigError(f"--parallel must be >= 1, got {args.parallel}")
    rc, cfg = _load(args)
    rep = run_ensemble(cfg, args.paths, args.parallel, exp_lambda=rc.run.exp_lambda)
    out = _out_dir(args)
    cols = ("path", "seed", "blowup", "stopped", "tau_M") + ESTIMATORS + ("final_v_sq",)
    outputs = [
        write_json(out / "ensemble.json", rep.as_dict()),
        write_csv(out / "paths.csv", cols, ([p[c] for c in cols] for p in rep.per_path)),
    ]
    outputs.append(out / "manifest.json")
    write_json(
        out / "manifest.json",
        manifest("mc", rc.model_dump(), cfg.seed, outputs, time.perf_counter() - start, {"paths": args.paths}),
    )
    print(f"mc: {args.paths} paths, {rep.blowup_count} blow-ups")
    for name in ESTIMATORS:
        print(f"  {name:10s} {rep.estimators[name]:.6g} +- {rep.std_errors[name]:.2g}")
    return EXIT_OK


def _parse_list(text: str, kind):
    try:
        vals = [kind(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"malformed list {text!r}") from None
    if not vals:
        raise ConfigError(f"empty list {text!r}")
    return vals


def cmd_converge(args) -> int:
    start = time.perf_counter()
    if (args.levels is None) == (args.dts is None):
        raise ConfigError("give exactly one of --levels or --dts")
    rc, cfg = _load(args)
    out = _out_dir(args)
    if args.levels is not None:
        levels = _parse_list(args.levels, int)
        rows = galerkin_convergence(cfg, levels, n_paths=args.paths)
        cols = ("coarse", "fine", "sup_dist_sq", "int_dist_sq", "ratio", "predicted_tail")
        table = write_csv(out / "levels.csv", cols, ([r.as_dict()[c] for c in cols] for r in rows))
        report = {"levels": levels, "rows": [r.as_dict() for r in rows]}
        print("converge: level distances")
        for r in rows:
            ratio = "" if r.ratio is None else f"  ratio {r.ratio:.3g}"
            print(f"  {r.coarse:4d} -> {r.fine:4d}  E sup ||dY||_V^2 = {r.sup_dist_sq:.4e}{ratio}")
    else:
        dts = _parse_list(args.dts, float)
        study = dt_convergence(cfg, dts, n_paths=args.paths)
        cols = ("dt_coarse", "dt_fine", "mean_error")
        table = write_csv(
            out / "dt.csv", cols, ((study.dts[j], study.dts[j + 1], e) for j, e in enumerate(study.errors))
        )
        report = study.as_dict()
        print(f"converge: observed strong order {study.fitted_order:.3f} (pairwise {study.orders})")
    outputs = [table, write_json(out / "converge.json", report), out / "manifest.json"]
    write_json(out / "manifest.json", manifest("converge", rc.model_dump(), cfg.seed, outputs, time.perf_counter() - start))
    return EXIT_OK


def _parse_spec(text: str | None) -> BasisSpec:
    if not text:
        return DEFAULT_SPEC
    vals = {"kmax": DEFAULT_SPEC.kmax, "lmax": DEFAULT_SPEC.lmax, "alpha1": DEFAULT_SPEC.alpha1, "grid_n": None}
    for part in text.split(","):
        key, _, val = part.partition("=")
        key = key.strip()
        if key not in vals or not val:
            raise ConfigError(f"malformed --spec entry {part!r}; use kmax=,lmax=,alpha1=,grid_n=")
        vals[key] = float(val) if key == "alpha1" else int(val)
    try:
        return BasisSpec(vals["kmax"], vals["lmax"], vals["alpha1"], vals["grid_n"])
    except (ResolutionError, ValueError) as err:
        raise ConfigError(str(err)) from None


def cmd_verify(args) -> int:
    start = time.perf_counter()
    if args.trials < 1:
        raise ConfigError(f"--trials must be >= 1, got {args.trials}")
    spec = _parse_spec(args.spec)
    if not spec.resolves_quartics:
        raise ConfigError(f"grid_n={spec.grid_n} does not resolve quartic terms; need >= {spec.quartic_grid}")
    seed = args.seed if args.seed is not None else 0
    params = Params(DEFAULT_PARAMS.nu, spec.alpha1, DEFAULT_PARAMS.alpha2, DEFAULT_PARAMS.beta)
    scale = 1.0 if args.debug_break_convention else None
    results = run_suite(spec, params, args.trials, seed, strain_scale=scale)
    constants = estimate_constants(spec, max(10, args.trials), seed)
    print(f"{'check':26s} {'kind':10s} {'max residual':>13s} {'tol':>8s}  result")
    for r in results:
        print(f"{r.name:26s} {r.kind:10s} {r.max_residual:13.3e} {r.tolerance:8.0e}  {'PASS' if r.passed else 'FAIL'}")
    print("constants: " + ", ".join(f"{k}={v:.4g}" for k, v in constants.items() if k != "sample"))
    ok = all(r.passed for r in results)
    if args.out:
        out = _out_dir(args)
        report = {"checks": [r.as_dict() for r in results], "constants": constants, "all_pass": ok}
        outputs = [write_json(out / "verify.json", report), out / "manifest.json"]
        echo = {"spec": {"kmax": spec.kmax, "lmax": spec.lmax, "alpha1": spec.alpha1, "grid_n": spec.grid_n},
                "trials": args.trials, "broken_convention": bool(args.debug_break_convention)}
        write_json(out / "manifest.json", manifest("verify", echo, seed, outputs, time.perf_counter() - start))
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thirdgrade", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default):
        sp.add_argument("--config", help="JSON run configuration (defaults apply when omitted)")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--allow-unsafe-noise", action="store_true", help="accept noise violating the growth condition")
        sp.add_argument("--linear-test-mode", action="store_true", help="drop convection (needs beta = 0, alpha1 + alpha2 = 0)")
        sp.add_argument("--scheme", choices=("euler_maruyama", "semi_implicit"))

    sp = sub.add_parser("simulate", help="integrate one path and write its energy ledger")
    common(sp, "out/simulate")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("mc", help="Monte Carlo ensemble of moment estimators")
    common(sp, "out/mc")
    sp.add_argument("--paths", type=int, default=10)
    sp.add_argument("--parallel", type=int, default=1)
    sp.set_defaults(func=cmd_mc)

    sp = sub.add_parser("converge", help="coupled-path Galerkin or time-step refinement study")
    common(sp, "out/converge")
    sp.add_argument("--levels", help="comma-separated square mode counts, e.g. 4,9,16")
    sp.add_argument("--dts", help="comma-separated time steps, each a power-of-two multiple of the finest")
    sp.add_argument("--paths", type=int, default=10)
    sp.set_defaults(func=cmd_converge)

    sp = sub.add_parser("verify", help="run the identity and inequality suite")
    sp.add_argument("--spec", help="basis, e.g. kmax=4,lmax=4,alpha1=1,grid_n=34")
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="directory for verify.json and manifest.json")
    sp.add_argument("--debug-break-convention", action="store_true", help="build operators from A = D (suite self-test)")
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        _err(str(err))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
