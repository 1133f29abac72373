"""Command-line entry point.

Exit status: 0 on success, 2 for bad input (unknown table, malformed file,
bad flag values), 3 for numerical failure (every start diverged, gradient
check failed).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field

from . import __version__
from .baselines import GSigmoidParams, SumExpParams, eval_gsigmoid, eval_sumexp
from .dataset import TABLE_NAMES, GridError, embedded_table, load_grid, slice_at_rho
from .evaluation import PUBLISHED_COMPARISON, compare_models, export_surface, residual_table
from .fitter import FitConfig, FitDivergenceError, fit_gsigmoid, fit_sumexp, fit_unified, gradient_check
from .paramfile import ParamFileError, dumps_params, load_params
from .unified import eval_point

log = logging.getLogger("semloss")

OUT_DIR_ENV = "SEMLOSS_OUT_DIR"
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class InputError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    input_ref: str
    outputs: list = field(default_factory=list)
    version: str = __version__
    config: dict = field(default_factory=dict)
    arguments: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


def _write(path, text):
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    return path


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _load_input(args):
    if args.table and args.input:
        raise InputError("give either --table or --input, not both")
    if args.table:
        try:
            return embedded_table(args.table), args.table
        except KeyError:
            raise InputError(
                f"unknown table {args.table!r}; valid tables: {', '.join(TABLE_NAMES)}"
            ) from None
    if args.input:
        try:
            return load_grid(args.input), os.path.abspath(args.input)
        except OSError as exc:
            raise InputError(f"cannot read {args.input}: {exc}") from None
        except GridError as exc:
            raise InputError(str(exc)) from None
    raise InputError(f"no input: pass --table ({', '.join(TABLE_NAMES)}) or --input FILE")


def _resolve_config(args) -> FitConfig:
    values = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as f:
                values = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
    overrides = {
        "seed": args.seed,
        "n_starts": args.starts,
        "max_iters": args.iters,
        "n_c": getattr(args, "n_c", None),
        "snr_scale": args.snr_scale,
        "baseline_starts": args.baseline_starts,
        "workers": args.workers,
        "refine": args.refine,
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return FitConfig.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid configuration: {exc}") from None


def _out_dir(args) -> str:
    path = args.out_dir or os.environ.get(OUT_DIR_ENV) or "semloss-out"
    os.makedirs(path, exist_ok=True)
    return path


def _stem(input_ref: str) -> str:
    base = os.path.basename(input_ref)
    return os.path.splitext(base)[0] if base.endswith(".csv") else base


def _manifest(args, cfg, input_ref, outputs):
    argv = {k: v for k, v in vars(args).items() if k != "func"}
    return RunManifest(
        command=args.command,
        config_hash=cfg.digest(),
        seed=cfg.seed,
        input_ref=input_ref,
        outputs=list(outputs),
        config=cfg.to_dict(),
        arguments=argv,
    )


def cmd_fit(args) -> int:
    grid, ref = _load_input(args)
    cfg = _resolve_config(args)
    out = _out_dir(args)
    stem = f"{_stem(ref)}_{args.model}"
    if args.model != "unified" and args.rho is not None:
        stem += f"_rho{args.rho:g}"
    outputs = []

    if args.model == "unified":
        params, report = fit_unified(grid, cfg)
        resid_path = os.path.join(out, f"{stem}_residuals.csv")
        residual_table(params, grid, resid_path)
        outputs.append(resid_path)
    else:
        if args.rho is None:
            raise InputError(f"--rho is required for --model {args.model}")
        try:
            s = slice_at_rho(grid, args.rho)
        except KeyError as exc:
            raise InputError(exc.args[0]) from None
        fit = fit_gsigmoid if args.model == "gsigmoid" else fit_sumexp
        params, report = fit(s, cfg)

    outputs.insert(0, _write(os.path.join(out, f"{stem}_params.json"), dumps_params(params)))
    outputs.insert(1, _write(os.path.join(out, f"{stem}_report.json"),
                             json.dumps(report.to_dict(), indent=2) + "\n"))
    manifest_path = os.path.join(out, f"{stem}_manifest.json")
    outputs.append(manifest_path)
    _write(manifest_path, _manifest(args, cfg, ref, outputs).to_json())

    print(f"avg MSE {report.final_avg_mse:.6g} (start {report.best_start_index}, "
          f"{report.iterations_used} iterations)")
    for path in outputs:
        print(path)
    return EXIT_OK


def cmd_compare(args) -> int:
    grid, ref = _load_input(args)
    cfg = _resolve_config(args)
    missing = [r for r in args.rhos if r not in grid.rho_axis]
    if missing:
        raise InputError(
            f"rho {', '.join(f'{r:g}' for r in missing)} not in grid; "
            f"available: {', '.join(f'{r:g}' for r in grid.rho_axis)}"
        )
    reference = PUBLISHED_COMPARISON if args.table == "evit-accuracy" else None
    report = compare_models(grid, args.rhos, cfg, reference=reference)
    out = _out_dir(args)
    path = os.path.join(out, f"{_stem(ref)}_compare.json")
    _write(path, report.to_json() + "\n")
    manifest_path = os.path.join(out, f"{_stem(ref)}_compare_manifest.json")
    _write(manifest_path, _manifest(args, cfg, ref, [path, manifest_path]).to_json())
    print(report.format_table())
    print(path)
    return EXIT_OK


def cmd_predict(args) -> int:
    try:
        params = load_params(args.params)
    except OSError as exc:
        raise InputError(f"cannot read {args.params}: {exc}") from None
    except ParamFileError as exc:
        raise InputError(str(exc)) from None
    if isinstance(params, GSigmoidParams):
        value = eval_gsigmoid(params, args.gamma)
    elif isinstance(params, SumExpParams):
        value = eval_sumexp(params, args.gamma)
    else:
        value = eval_point(params, args.gamma, args.rho)
    print(f"{value:#.6g}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    grid, _ = _load_input(args)
    corrupt = None
    if args.corrupt:
        from .unified import UnifiedGradient

        def corrupt(g):
            terms = g.terms.copy()
            terms[2] *= 1.001
            return UnifiedGradient(g.d_mu0, terms)

    report = gradient_check(grid, args.draws, args.seed, n_c=args.n_c,
                            snr_scale=args.snr_scale or "linear", corrupt=corrupt)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_surface(args) -> int:
    try:
        params = load_params(args.params)
    except (OSError, ParamFileError) as exc:
        raise InputError(str(exc)) from None
    if isinstance(params, (GSigmoidParams, SumExpParams)):
        raise InputError("surface export needs a unified parameter set")
    if len(args.gamma_range) != 2 or len(args.rho_range) != 2:
        raise InputError("ranges take two comma-separated values: LO,HI")
    res = [int(v) for v in args.resolution]
    res = (res[0], res[0]) if len(res) == 1 else tuple(res[:2])
    try:
        export_surface(params, args.gamma_range, args.rho_range, res, args.output)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    print(args.output)
    return EXIT_OK


def _add_input(p):
    p.add_argument("--table", help=f"embedded table: {', '.join(TABLE_NAMES)}")
    p.add_argument("--input", help="grid CSV file (gamma_db\\rho header)")


def _add_fit_flags(p):
    p.add_argument("--config", help="JSON file with FitConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--starts", type=int, help="unified-model starts")
    p.add_argument("--baseline-starts", type=int)
    p.add_argument("--iters", type=int, help="iteration budget per start")
    p.add_argument("--snr-scale", choices=("linear", "db"))
    p.add_argument("--workers", type=int)
    p.add_argument("--refine", choices=("lm", "none"),
                   help="least-squares solve after the descent (default lm)")
    p.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./semloss-out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semloss", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model to a grid")
    _add_input(p)
    _add_fit_flags(p)
    p.add_argument("--model", choices=("unified", "gsigmoid", "sumexp"), default="unified")
    p.add_argument("--rho", type=float, help="compression ratio slice for baseline models")
    p.add_argument("--n-c", type=int, help="number of terms in the unified model")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="compare unified and baseline fits on fixed-rho slices")
    _add_input(p)
    _add_fit_flags(p)
    p.add_argument("--rhos", type=_floats, default=[8.0, 12.0])
    p.add_argument("--n-c", type=int)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("predict", help="evaluate a parameter file at one point")
    p.add_argument("params")
    p.add_argument("gamma", type=float, help="SNR in dB")
    p.add_argument("rho", type=float, nargs="?", default=0.0, help="compression ratio")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    _add_input(p)
    p.add_argument("--draws", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-c", type=int, default=6)
    p.add_argument("--snr-scale", choices=("linear", "db"))
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("surface", help="sample a unified model on a uniform grid")
    p.add_argument("params")
    p.add_argument("output")
    p.add_argument("--gamma-range", type=_floats, default=[-7.0, 8.0])
    p.add_argument("--rho-range", type=_floats, default=[2.0, 12.0])
    p.add_argument("--resolution", type=_floats, default=[50.0])
    p.set_defaults(func=cmd_surface)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FitDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
