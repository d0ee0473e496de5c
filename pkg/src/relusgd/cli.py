"""Command line entry point: ``relusgd {grid,train,bounds,audit,gen}``.

Exit codes: 0 success, 1 bad configuration or arguments, 2 runtime failure,
3 when ``audit`` finds violated invariants.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import List, Optional

from .datagen import GenSpec, gen_adversarial, gen_separable, write_csv
from .harness import (ConfigError, ExperimentSpec, cell_dataset, grid_csv, load_config,
                      run_bounds_report, run_grid, run_trial)
from .reportio import load_report, save_report
from .trainer import audit_step_invariants

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VIOLATION = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _spec(args) -> ExperimentSpec:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if args.config is None:
        raise ConfigError("--config is required")
    return load_config(args.config, overrides)


def _write(text: str, out: Optional[str]):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_grid(args) -> int:
    spec = _spec(args)
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    result = run_grid(spec, threads=args.threads)
    _write(grid_csv(result, timing=args.timing), args.out or spec.output)
    return EXIT_OK


def cmd_train(args) -> int:
    spec = _spec(args)
    n = spec.n or spec.n_values[0]
    k = spec.k or spec.k_values[0]
    variant = spec.variants[0]
    # keep the traces whenever they can be audited later
    data = cell_dataset(spec, n, 0)
    if args.out and data.separator is not None and variant != "leaky" and not spec.audit:
        spec = dataclasses.replace(spec, audit=True)
    _, report = run_trial(spec, variant, n, k, 0)
    summary = {
        "variant": variant, "n": report.n, "k": k,
        "converged": report.converged, "stuck": report.stuck,
        "tau_k": report.tau_k, "passes": report.passes,
        "final_loss": report.final_loss, "final_error": report.final_error,
        "audit_violations": len(report.audit_violations),
    }
    print(json.dumps(summary))
    if args.out:
        save_report(report, args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    spec = _spec(args)
    report = load_report(args.report) if args.report else None
    _write(run_bounds_report(spec, report).to_json(), args.out or spec.output)
    return EXIT_OK


def cmd_audit(args) -> int:
    try:
        report = load_report(args.report)
    except (OSError, ValueError, KeyError) as e:
        raise ConfigError(f"cannot load report {args.report}: {e}") from e
    violations = audit_step_invariants(report)
    for v in violations:
        print(v)
    print(f"{report.tau_k} updates audited, {len(violations)} violations")
    return EXIT_VIOLATION if violations else EXIT_OK


def cmd_gen(args) -> int:
    if args.d is None or args.d < 1:
        raise ConfigError("--d must be a positive integer")
    if args.adversarial:
        data = gen_adversarial(args.d)
    else:
        if args.n is None:
            raise ConfigError("--n is required unless --adversarial")
        try:
            data = gen_separable(GenSpec(args.d, args.n, args.distribution, args.seed or 0))
        except ValueError as e:
            raise ConfigError(str(e)) from e
    if args.out is None:
        raise ConfigError("--out is required")
    write_csv(data, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="relusgd", description="Noise-injected SGD for two-layer ReLU networks.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="key=value or JSON config file")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--out", help="output path (default: stdout or config 'output')")

    g = sub.add_parser("grid", help="run a success-rate grid and write CSV")
    common(g)
    g.add_argument("--threads", type=int, default=1)
    g.add_argument("--timing", action="store_true", help="fill the wall_ms column")
    g.set_defaults(func=cmd_grid)

    t = sub.add_parser("train", help="train one network; --out saves an auditable report")
    common(t)
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("bounds", help="evaluate closed-form bounds as JSON")
    common(b)
    b.add_argument("--report", help="saved train report for a-posteriori bounds")
    b.set_defaults(func=cmd_bounds)

    a = sub.add_parser("audit", help="replay a saved report against the proof invariants")
    a.add_argument("report")
    a.set_defaults(func=cmd_audit)

    gen = sub.add_parser("gen", help="write a dataset as CSV")
    common(gen, config=False)
    gen.add_argument("--adversarial", action="store_true")
    gen.add_argument("--d", type=int)
    gen.add_argument("--n", type=int)
    gen.add_argument("--distribution", default="gaussian", choices=("gaussian", "uniform"))
    gen.set_defaults(func=cmd_gen)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
