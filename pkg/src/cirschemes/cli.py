"""Command-line front end.

Exit codes: 0 success, 2 gate or precondition rejection, 64 malformed
arguments, 74 I/O failure. Every CSV starts with ``#`` comment lines holding
the run configuration (as JSON) and the library version, then a header row.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CirError, DomainError, UsageError
from .experiments import (
    CHUNK_SIZE,
    positivity_audit,
    sign_flip_study,
    strong_self_convergence,
    weak_moment_error,
)
from .one_factor import simulate_paths
from .params import CirParams, GridSpec, SchemeKind, SchemeSpec, TwoFactorParams, validate
from .randomness import BrownianPath
from .two_factor import simulate_pair_paths

EXIT_OK = 0
EXIT_REJECTED = 2
EXIT_USAGE = 64
EXIT_IO = 74
SCHEMA_VERSION = 1


class UsageExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageExit(message)


def _add_model_flags(p: argparse.ArgumentParser, steps_default: int = 100):
    m = p.add_argument_group("model")
    m.add_argument("--scheme", choices=[k.value for k in SchemeKind], default="sd")
    m.add_argument("--a", type=float, default=None, help="implicitness weight in [0, 1] (sd scheme)")
    m.add_argument("--k", type=float, default=2.0)
    m.add_argument("--l", type=float, default=1.0)
    m.add_argument("--sigma", type=float, default=1.0)
    m.add_argument("--x0", type=float, default=4.0)
    m.add_argument("--lambda11", type=float, default=1.0)
    m.add_argument("--lambda12", type=float, default=0.0)
    m.add_argument("--lambda21", type=float, default=1.0)
    m.add_argument("--lambda22", type=float, default=0.0)
    m.add_argument("--sigma1", type=float, default=1.0)
    m.add_argument("--sigma2", type=float, default=1.0)
    m.add_argument("--x10", type=float, default=1.0)
    m.add_argument("--x20", type=float, default=1.0)
    g = p.add_argument_group("grid")
    g.add_argument("--t-max", type=float, default=1.0)
    g.add_argument("--steps", type=int, default=steps_default, help="number of (coarsest) steps")


def _add_run_flags(p: argparse.ArgumentParser, paths_default: int):
    r = p.add_argument_group("run")
    r.add_argument("--paths", type=int, default=paths_default)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--output", "-o", default="-", help="output file, '-' for stdout")
    r.add_argument("--figure", default=None, help="also render a PNG figure to this path")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cirschemes", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate", help="check a configuration against the scheme's validity gates")
    _add_model_flags(v)

    s = sub.add_parser("simulate", help="write simulated paths as CSV (or JSON)")
    _add_model_flags(s)
    _add_run_flags(s, paths_default=1)
    s.add_argument("--format", choices=["csv", "json"], default="csv")

    c = sub.add_parser("converge", help="strong self-convergence ladder or weak moment error")
    _add_model_flags(c, steps_default=16)
    _add_run_flags(c, paths_default=10_000)
    c.add_argument("--mode", choices=["strong", "weak"], default="strong")
    c.add_argument("--levels", type=int, default=4)
    c.add_argument("--csv", default=None, help="ladder CSV path (default: next to --output)")

    f = sub.add_parser("signflip", help="sign-flip frequency across a dyadic step ladder")
    _add_model_flags(f, steps_default=8)
    _add_run_flags(f, paths_default=10_000)
    f.add_argument("--levels", type=int, default=6)
    f.add_argument("--json", default=None, help="JSON report path (default: next to --output)")

    a = sub.add_parser("audit", help="count negative nodes over many paths")
    _add_model_flags(a, steps_default=1000)
    _add_run_flags(a, paths_default=10_000)

    cmp_ = sub.add_parser("compare", help="sd scheme against truncated Euler on the same Brownian path")
    _add_model_flags(cmp_, steps_default=10_000)
    _add_run_flags(cmp_, paths_default=1)
    return parser


def run_config(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    return {"schema": SCHEMA_VERSION, "version": __version__, "config": cfg}


def _model(args):
    """Build (spec, params, grid); structural errors become usage errors."""
    try:
        spec = SchemeSpec(SchemeKind(args.scheme), args.a if args.scheme == "sd" else None)
        if spec.kind.two_factor:
            params = TwoFactorParams(
                args.k,
                args.l,
                args.lambda11,
                args.lambda12,
                args.lambda21,
                args.lambda22,
                args.sigma1,
                args.sigma2,
                args.x10,
                args.x20,
            )
        else:
            params = CirParams(args.k, args.l, args.sigma, args.x0)
        grid = GridSpec(args.t_max, args.steps)
    except (UsageError, ValueError) as exc:
        raise UsageExit(str(exc)) from None
    if getattr(args, "paths", 0) < 0:
        raise UsageExit("--paths must be >= 0")
    if getattr(args, "workers", 1) < 1:
        raise UsageExit("--workers must be >= 1")
    return spec, params, grid


def _fmt(x) -> str:
    return repr(float(x))


def _open(path: str):
    if path == "-":
        return _Stdout()
    return open(path, "w", newline="\n", encoding="utf-8")


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()
        return False


def _write_comments(fh, args):
    fh.write("# " + json.dumps(run_config(args), sort_keys=True) + "\n")


def _write_json(path: str, obj: dict):
    with _open(path) as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _sibling(path: str, suffix: str) -> str | None:
    if path == "-":
        return None
    return str(Path(path).with_suffix(suffix))


def cmd_validate(args) -> int:
    spec, params, grid = _model(args)
    verdict = validate(spec, params, grid)
    print(verdict)
    for key, value in verdict.details.items():
        print(f"  {key} = {value}")
    return EXIT_OK if verdict else EXIT_REJECTED


def _check_gates(spec, params, grid):
    verdict = validate(spec, params, grid)
    if not verdict:
        raise DomainError(str(verdict))


def cmd_simulate(args) -> int:
    spec, params, grid = _model(args)
    _check_gates(spec, params, grid)
    two = spec.kind.two_factor
    t = grid.nodes()
    t_str = [_fmt(x) for x in t]
    kept = []
    records = []
    with _open(args.output) as fh:
        if args.format == "csv":
            _write_comments(fh, args)
            fh.write("path_id,t,y1,y2\n" if two else "path_id,t,y\n")
        for start in range(0, args.paths, CHUNK_SIZE):
            idx = np.arange(start, min(start + CHUNK_SIZE, args.paths))
            if two:
                values = simulate_pair_paths(params, grid, spec, args.seed, idx).values
            else:
                values = simulate_paths(params, grid, spec, args.seed, idx).values
            if args.figure and len(kept) < 20:
                kept.extend(values[: 20 - len(kept)])
            for pid, row in zip(idx, values):
                if args.format == "json":
                    rec = {"path_id": int(pid)}
                    if two:
                        rec["y1"] = [float(v) for v in row[:, 0]]
                        rec["y2"] = [float(v) for v in row[:, 1]]
                    else:
                        rec["y"] = [float(v) for v in row]
                    records.append(rec)
                    continue
                p = str(int(pid))
                if two:
                    lines = [f"{p},{ts},{_fmt(a)},{_fmt(b)}\n" for ts, (a, b) in zip(t_str, row)]
                else:
                    lines = [f"{p},{ts},{_fmt(y)}\n" for ts, y in zip(t_str, row)]
                fh.write("".join(lines))
        if args.format == "json":
            payload = {**run_config(args), "t": [float(x) for x in t], "paths": records}
            fh.write(json.dumps(payload, sort_keys=True) + "\n")
    if args.figure and kept:
        from .plotting import plot_paths

        plot_paths(t, np.array(kept), args.figure, title=f"{spec.kind.value}, delta={grid.delta:g}")
    return EXIT_OK


def cmd_converge(args) -> int:
    spec, params, grid = _model(args)
    if args.mode == "strong":
        if spec.kind.two_factor:
            raise UsageError("strong mode supports one-factor Brownian-driven schemes only")
        report = strong_self_convergence(params, grid, args.levels, spec, args.paths, args.seed, args.workers)
    else:
        report = weak_moment_error(params, grid, spec, args.paths, args.seed, args.workers)
    payload = {**run_config(args), "report": report.to_dict()}
    _write_json(args.output, payload)

    csv_path = args.csv or _sibling(args.output, ".csv")
    if csv_path:
        with _open(csv_path) as fh:
            _write_comments(fh, args)
            if args.mode == "strong":
                fh.write("delta,strong_error,std_error\n")
                for r in report.ladder:
                    if r.skipped is None:
                        fh.write(f"{_fmt(r.delta)},{_fmt(r.strong_error)},{_fmt(r.std_error)}\n")
            else:
                fh.write("delta,weak_mean_error,weak_var_error,std_error\n")
                for r in report.ladder:
                    var = "" if r.weak_var_error is None else _fmt(r.weak_var_error)
                    fh.write(f"{_fmt(r.delta)},{_fmt(r.weak_mean_error)},{var},{_fmt(r.std_error)}\n")
    if args.figure and args.mode == "strong":
        from .plotting import plot_error_ladder

        rows = [r for r in report.ladder if r.skipped is None and not r.reference]
        plot_error_ladder(
            [r.delta for r in rows],
            [r.strong_error for r in rows],
            [r.std_error for r in rows],
            args.figure,
            fitted_order=report.fitted_order,
            title=f"{spec.kind.value}: fitted order {report.fitted_order:.3f}",
        )
    return EXIT_OK


def cmd_signflip(args) -> int:
    spec, params, grid = _model(args)
    if spec.kind is not SchemeKind.SEMI_DISCRETE_SQUARED:
        raise UsageError("signflip needs --scheme sd")
    report = sign_flip_study(params, grid, args.levels, spec.a, args.paths, args.seed, args.workers)
    with _open(args.output) as fh:
        _write_comments(fh, args)
        fh.write("delta,flip_fraction,flip_std_error,weighted,weighted_std_error\n")
        for r in report.ladder:
            fh.write(
                ",".join(_fmt(x) for x in (r.delta, r.flip_fraction, r.flip_std_error, r.weighted, r.weighted_std_error))
                + "\n"
            )
    json_path = args.json or _sibling(args.output, ".json")
    if json_path:
        _write_json(json_path, {**run_config(args), "report": report.to_dict()})
    if args.figure:
        from .plotting import plot_sign_flips

        rows = report.ladder
        plot_sign_flips(
            [r.delta for r in rows],
            [r.flip_fraction for r in rows],
            [r.flip_std_error for r in rows],
            [r.weighted for r in rows],
            [r.weighted_std_error for r in rows],
            args.figure,
        )
    return EXIT_OK


def cmd_audit(args) -> int:
    spec, params, grid = _model(args)
    res = positivity_audit(spec, params, grid, args.paths, args.seed, args.workers)
    payload = {
        **run_config(args),
        "report": {
            "kind": "audit",
            "negative_nodes": res.negative_nodes,
            "domain_errors": res.domain_errors,
            "n_paths": res.n_paths,
            "n_steps": res.n_steps,
            "min_value": res.min_value if np.isfinite(res.min_value) else None,
            "positivity_preserving": spec.kind.positivity_preserving,
        },
    }
    _write_json(args.output, payload)
    return EXIT_OK


def cmd_compare(args) -> int:
    spec, params, grid = _model(args)
    if spec.kind is not SchemeKind.SEMI_DISCRETE_SQUARED:
        raise UsageError("compare needs --scheme sd")
    _check_gates(spec, params, grid)
    euler = SchemeSpec(SchemeKind.TRUNCATED_EULER)
    t = grid.nodes()
    t_str = [_fmt(x) for x in t]
    diffs = []
    with _open(args.output) as fh:
        _write_comments(fh, args)
        fh.write("path_id,t,y_sd,y_euler\n")
        for start in range(0, args.paths, CHUNK_SIZE):
            idx = np.arange(start, min(start + CHUNK_SIZE, args.paths))
            bp = BrownianPath.generate(args.seed, idx, grid)
            ys = simulate_paths(params, grid, spec, bp).values
            ye = simulate_paths(params, grid, euler, bp).values
            if args.figure and len(diffs) < 20:
                diffs.extend((ys - ye)[: 20 - len(diffs)])
            for pid, a, b in zip(idx, ys, ye):
                p = str(int(pid))
                fh.write("".join(f"{p},{ts},{_fmt(u)},{_fmt(v)}\n" for ts, u, v in zip(t_str, a, b)))
    if args.figure and diffs:
        from .plotting import plot_difference

        plot_difference(t, np.array(diffs), args.figure, title="sd scheme minus truncated Euler")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "signflip": cmd_signflip,
    "audit": cmd_audit,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageExit:
        return EXIT_USAGE
    except (DomainError, UsageError, CirError) as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
