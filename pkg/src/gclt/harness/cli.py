"""Command line interface.

Exit codes: 0 when every graded verdict passes, 2 on a statistical
failure, 1 on any error (bad config, domain violation, I/O).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from ..analytics import Method, Rectangle, lambda_moment_detail, limit_constant
from ..functionals import parse_test_function
from ..kernels import alpha2_of, check_hypotheses, parse_kernel
from ..sampling import TimeGrid, sample_ensemble, save_ensemble
from .experiments import (ConfigError, ExperimentConfig, MomentReport, ks_report,
                          run_clt_experiment, run_increment_experiment, run_tightness_scan)
from .report import emit_report

EXIT_OK, EXIT_ERROR, EXIT_STAT = 0, 1, 2


def _floats(text: str):
    return tuple(float(x) for x in text.split(",") if x.strip())


def load_config_file(path) -> dict:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # python < 3.11
            import tomli as tomllib
        return tomllib.loads(raw.decode())
    return json.loads(raw)


def _add_config_flags(p: argparse.ArgumentParser, seed_required: bool = True) -> None:
    p.add_argument("--config", help="TOML or JSON file with ExperimentConfig fields")
    p.add_argument("--kernel")
    p.add_argument("--f", dest="f")
    p.add_argument("--d", type=int)
    p.add_argument("--n-ladder", type=_floats)
    p.add_argument("--t1", type=float)
    p.add_argument("--t2", type=float)
    p.add_argument("--n-steps", type=int)
    p.add_argument("--n-paths", type=int)
    p.add_argument("--epsilons", type=_floats)
    p.add_argument("--alpha2", type=float)
    p.add_argument("--max-order", type=int)
    p.add_argument("--ks-paths", type=int)
    p.add_argument("--seed", type=int, required=seed_required)
    p.add_argument("--output", help="report path (.json or .csv)")


def build_config(args) -> ExperimentConfig:
    data = load_config_file(args.config) if getattr(args, "config", None) else {}
    for fld in dataclasses.fields(ExperimentConfig):
        val = getattr(args, fld.name, None)
        if val is not None:
            data[fld.name] = val
    return ExperimentConfig.from_mapping(data)


def _finish(report: MomentReport, output: str | None) -> int:
    if output:
        fmt = "csv" if output.lower().endswith(".csv") else "json"
        emit_report(report, output, fmt)
    for r in report.rows:
        if r.verdict != "info":
            print(f"{r.verdict.upper():4s} {r.experiment}:{r.quantity} "
                  f"empirical={r.empirical:.6g} theoretical={r.theoretical:.6g}")
    return EXIT_OK if report.passed else EXIT_STAT


def cmd_simulate(args) -> int:
    kernel = parse_kernel(args.kernel)
    ens = sample_ensemble(kernel, TimeGrid(args.t_max, args.n_steps), args.d, args.n_paths,
                          args.seed, args.pair_index)
    save_ensemble(ens, args.out)
    print(json.dumps({"kernel": kernel.spec(), "n_paths": ens.n_paths, "dim": ens.dim,
                      "n_steps": ens.grid.n_steps, "jitter": ens.jitter, "out": args.out}))
    return EXIT_OK


def cmd_check_hypotheses(args) -> int:
    kernel = parse_kernel(args.kernel)
    diag = check_hypotheses(kernel, config_samples=args.samples, seed=args.seed)
    print(json.dumps(dataclasses.asdict(diag), indent=2))
    return EXIT_OK


def cmd_constant(args) -> int:
    kernel = parse_kernel(args.kernel)
    f = parse_test_function(args.f, args.d)
    alpha2 = alpha2_of(kernel) if args.alpha2 is None else args.alpha2
    c = limit_constant(f, kernel.hurst, args.d, alpha2, N=args.N)
    print(json.dumps({"prefactor": c.prefactor, "spectral_integral": c.spectral_integral,
                      "value": c.value, "error_estimate": c.error_estimate}))
    return EXIT_OK


def cmd_moments(args) -> int:
    kernel = parse_kernel(args.kernel)
    method = Method(args.method)
    rect = [Rectangle(0.0, args.t1, 0.0, args.t2)]
    out = []
    for m in args.orders:
        kw = {"seed": args.seed, "samples": args.samples} if method is Method.MC else {}
        val, err = lambda_moment_detail(kernel, rect, [m], args.d, method, **kw)
        out.append({"order": m, "value": val, "error_estimate": err})
    print(json.dumps({"kernel": kernel.spec(), "method": method.value, "moments": out},
                     indent=2))
    return EXIT_OK


def cmd_clt_check(args) -> int:
    cfg = build_config(args)
    rep = run_clt_experiment(cfg)
    if args.increments:
        rects = [(0.0, cfg.t1 / 2, 0.0, cfg.t2 / 2), (cfg.t1 / 2, cfg.t1, cfg.t2 / 2, cfg.t2)]
        for m in ((1, 1), (2, 2)):
            rep.extend(run_increment_experiment(cfg, rects, m))
    return _finish(rep, cfg.output)


def cmd_tightness(args) -> int:
    cfg = build_config(args)
    res = run_tightness_scan(cfg, args.gaps, args.m)
    return _finish(res.report, cfg.output)


def cmd_ks(args) -> int:
    cfg = build_config(args)
    seeds = range(cfg.seed, cfg.seed + args.repetitions)
    rep = ks_report(cfg, seeds, args.d_multiplier)
    return _finish(rep, cfg.output)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gclt", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample an ensemble and write it in binary form")
    p.add_argument("--kernel", required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--t-max", type=float, default=1.0)
    p.add_argument("--n-steps", type=int, default=128)
    p.add_argument("--n-paths", type=int, default=1000)
    p.add_argument("--pair-index", type=int, default=0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check-hypotheses", help="nondeterminism and increment diagnostics")
    p.add_argument("--kernel", required=True)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_check_hypotheses)

    p = sub.add_parser("constant", help="limit constant D for a kernel and test function")
    p.add_argument("--kernel", required=True)
    p.add_argument("--f", required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--alpha2", type=float)
    p.add_argument("--N", type=int, default=2)
    p.set_defaults(func=cmd_constant)

    p = sub.add_parser("moments", help="moments of the limit at (t1, t2)")
    p.add_argument("--kernel", required=True)
    p.add_argument("--orders", type=lambda s: [int(x) for x in s.split(",")], default=[2, 4])
    p.add_argument("--t1", type=float, default=1.0)
    p.add_argument("--t2", type=float, default=1.0)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--method", choices=[m.value for m in Method], default="quadrature")
    p.add_argument("--samples", type=int, default=400_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("clt-check", help="moment comparison along the n ladder")
    _add_config_flags(p)
    p.add_argument("--increments", action="store_true",
                   help="also run mixed moments on two disjoint rectangles")
    p.set_defaults(func=cmd_clt_check)

    p = sub.add_parser("tightness", help="increment-moment scaling exponent")
    _add_config_flags(p)
    p.add_argument("--gaps", type=_floats, default=(1 / 16, 1 / 8, 1 / 4, 1 / 2))
    p.add_argument("--m", type=int, default=1)
    p.set_defaults(func=cmd_tightness)

    p = sub.add_parser("ks", help="two-sample KS against the mixture reference")
    _add_config_flags(p)
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--d-multiplier", type=float, default=4.0)
    p.set_defaults(func=cmd_ks)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors are errors (1), not statistical failures (2); --help is 0
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    try:
        return args.func(args)
    except (ConfigError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
