"""Command-line frontend: detect, segment, simulate, and cv subcommands.

Flags override values from an optional --config TOML file, which overrides
built-in defaults.  Worker count falls back to the REGCPT_WORKERS
environment variable when --workers is not given; 0 means one worker per
CPU.  Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .cpt_process import dump_process_csv
from .data_model import SubGroup, load_csv
from .errors import ConfigError, DataError, NumericError
from .segmentation import segment
from .simlab import PRESETS, load_spec_toml, run_experiment
from .testing import TestConfig, detect

_TEST_DEFAULTS = {
    "alpha": 0.05, "tau0": 0.1, "boot": 100, "seed": 0, "method": "boot2",
    "stride": 1, "group": None, "workers": None, "response": None,
    "min_len": None, "bonferroni": False,
}


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except OSError as e:
        raise DataError(f"cannot read config {path}: {e}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"bad TOML in {path}: {e}")


def _merged(args: argparse.Namespace, key: str):
    """Flag > config file > default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    cfg = getattr(args, "_config_doc", {})
    if key in cfg:
        return cfg[key]
    return _TEST_DEFAULTS.get(key)


def _resolve_worker_flag(args: argparse.Namespace) -> int:
    w = _merged(args, "workers")
    if w is None:
        w = os.environ.get("REGCPT_WORKERS", "0")
    try:
        w = int(w)
    except ValueError:
        raise ConfigError(f"workers must be an integer, got {w!r}")
    if w < 0:
        raise ConfigError(f"workers must be >= 0, got {w}")
    return w


def _test_config(args: argparse.Namespace) -> TestConfig:
    group = _merged(args, "group")
    if isinstance(group, str):
        group = SubGroup.parse(group)
    return TestConfig(
        alpha=float(_merged(args, "alpha")),
        tau0=float(_merged(args, "tau0")),
        B=int(_merged(args, "boot")),
        group=group,
        seed=int(_merged(args, "seed")),
        method=str(_merged(args, "method")),
        stride=int(_merged(args, "stride")),
        bonferroni=bool(_merged(args, "bonferroni")),
    )


def _emit(text: str, out_path: str | None) -> None:
    if out_path is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(out_path, "w", encoding="utf-8") as f:
            f.write(text if text.endswith("\n") else text + "\n")


def _load_input(args: argparse.Namespace):
    response = _merged(args, "response")
    if response is None:
        raise ConfigError("--response is required (column name or 1-based index)")
    if isinstance(response, str) and response.isdigit():
        response = int(response)
    return load_csv(args.input, response)


def cmd_detect(args: argparse.Namespace) -> int:
    data = _load_input(args)
    cfg = _test_config(args)
    workers = _resolve_worker_flag(args)
    out = detect(data, cfg, workers=workers,
                 return_process=args.dump_process is not None)
    if args.dump_process is not None:
        result, proc = out
        dump_process_csv(args.dump_process, proc, cfg.resolved_group(data.p),
                         include_z=args.dump_z)
    else:
        result = out
    _emit(json.dumps(result.to_json_dict(), indent=2, sort_keys=True,
                     allow_nan=True), args.out)
    return 0


def cmd_segment(args: argparse.Namespace) -> int:
    data = _load_input(args)
    cfg = _test_config(args)
    workers = _resolve_worker_flag(args)
    min_len = _merged(args, "min_len")
    min_len = int(min_len) if min_len is not None else None
    want_proc = args.dump_process is not None
    out = segment(data, cfg, min_len=min_len, workers=workers,
                  capture_root_process=want_proc)
    if want_proc:
        result, proc = out
        if proc is not None:
            dump_process_csv(args.dump_process, proc,
                             cfg.resolved_group(data.p), include_z=args.dump_z)
    else:
        result = out
    if any(t.decision == "infeasible" for t in result.trace):
        raise DataError(
            f"n={data.n} is too small to segment (needs at least twice the "
            f"minimum interval length)")
    _emit(json.dumps(result.to_json_dict(), indent=2, sort_keys=True,
                     allow_nan=True), args.out)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    if (args.preset is None) == (args.spec is None):
        raise ConfigError("give exactly one of --preset or --spec")
    if args.preset is not None:
        if args.preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {args.preset!r}; have {sorted(PRESETS)}")
        kwargs = {}
        for key in ("C", "n", "p", "s", "error_law", "cov_model", "method",
                    "group_mode", "alpha", "B", "reps", "seed", "min_len"):
            val = getattr(args, key, None)
            if val is not None:
                kwargs[key] = val
        try:
            spec = PRESETS[args.preset](**kwargs)
        except TypeError as e:
            raise ConfigError(f"preset {args.preset}: {e}")
    else:
        spec = load_spec_toml(args.spec)
    workers = _resolve_worker_flag(args)
    report = run_experiment(spec, workers=workers)
    if args.format == "csv":
        _emit(report.csv_row(), args.out)
    else:
        _emit(report.to_json(), args.out)
    return 0


def cmd_cv(args: argparse.Namespace) -> int:
    from .lasso import DEFAULT_C_GRID, cv_errors

    data = _load_input(args)
    grid = DEFAULT_C_GRID
    if args.grid is not None:
        try:
            grid = tuple(float(c) for c in args.grid.split(","))
        except ValueError:
            raise ConfigError(f"bad --grid {args.grid!r}")
    folds = int(_merged(args, "folds") or 3)
    seed = int(_merged(args, "seed"))
    errs = cv_errors(data.view(0, data.n), grid, folds=folds, seed=seed)
    best = min(zip(errs, grid), key=lambda t: (t[0], t[1]))
    doc = {"C": best[1], "grid": list(grid),
           "cv_error": [float(e) for e in errs], "folds": folds, "seed": seed}
    _emit(json.dumps(doc, indent=2, sort_keys=True), args.out)
    return 0


def _add_common(sp: argparse.ArgumentParser, with_input: bool) -> None:
    if with_input:
        sp.add_argument("--input", required=True, help="CSV data file")
        sp.add_argument("--response",
                        help="response column: header name or 1-based index")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--workers", type=int, default=None,
                    help="0 = one per CPU; falls back to REGCPT_WORKERS")
    sp.add_argument("--config", default=None, help="TOML config file")
    sp.add_argument("--out", default=None, help="write output here, not stdout")


def _add_test_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--tau0", type=float, default=None)
    sp.add_argument("--boot", type=int, default=None, help="bootstrap draws B")
    sp.add_argument("--group", default=None, help='e.g. "1,2,5-9"')
    sp.add_argument("--method", choices=("boot1", "boot2"), default=None)
    sp.add_argument("--stride", type=int, default=None)
    sp.add_argument("--bonferroni", action="store_const", const=True,
                    default=None)
    sp.add_argument("--dump-process", default=None, metavar="CSV",
                    help="write the scan surface here")
    sp.add_argument("--dump-z", action="store_true",
                    help="include per-coordinate z columns in --dump-process")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="regcpt",
        description="Change-point tests for high-dimensional regression")
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="single change-point test")
    _add_common(d, with_input=True)
    _add_test_flags(d)
    d.set_defaults(fn=cmd_detect)

    s = sub.add_parser("segment", help="binary segmentation")
    _add_common(s, with_input=True)
    _add_test_flags(s)
    s.add_argument("--min-len", dest="min_len", type=int, default=None)
    s.set_defaults(fn=cmd_segment)

    m = sub.add_parser("simulate", help="run a simulation experiment")
    _add_common(m, with_input=False)
    m.add_argument("--preset", default=None,
                   help="|".join(sorted(PRESETS)))
    m.add_argument("--spec", default=None, help="experiment TOML file")
    m.add_argument("--C", type=float, default=None, help="jump scale")
    m.add_argument("--n", type=int, default=None)
    m.add_argument("--p", type=int, default=None)
    m.add_argument("--s", type=int, default=None)
    m.add_argument("--error-law", dest="error_law",
                   choices=("normal", "gamma41_std", "t5_std"), default=None)
    m.add_argument("--cov-model", dest="cov_model",
                   choices=("identity", "toeplitz"), default=None)
    m.add_argument("--method", choices=("boot1", "boot2"), default=None)
    m.add_argument("--group-mode", dest="group_mode",
                   choices=("full", "S", "Sc", "fixed"), default=None)
    m.add_argument("--alpha", type=float, default=None)
    m.add_argument("--B", type=int, default=None, help="bootstrap draws")
    m.add_argument("--reps", type=int, default=None)
    m.add_argument("--min-len", dest="min_len", type=int, default=None)
    m.add_argument("--format", choices=("json", "csv"), default="json")
    m.set_defaults(fn=cmd_simulate)

    c = sub.add_parser("cv", help="penalty multiplier cross-validation")
    _add_common(c, with_input=True)
    c.add_argument("--folds", type=int, default=None)
    c.add_argument("--grid", default=None, help='e.g. "1,2,4,8"')
    c.set_defaults(fn=cmd_cv)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        args._config_doc = _load_config(getattr(args, "config", None))
        return args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
