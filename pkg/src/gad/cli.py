"""Command-line front end.

    gad list
    gad run fig3b fig4 --out results --parallel 2
    gad verify fig4

Exit codes: 0 ok, 2 validation error, 3 solver failure, 4 verification failure.
Errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .runner import Overrides, resolve_out_root, run, verify
from .scenario import ScenarioError, catalog, load_scenario

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_VERIFY = 4


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, scenario=None):
        super().__init__(message)
        self.code = code
        self.kind = kind
        self.scenario = scenario


def _emit_error(err: CliError) -> None:
    payload = {"error": err.kind, "message": str(err), "exit_code": err.code}
    if err.scenario:
        payload["scenario"] = err.scenario
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def _positive(name):
    def conv(text):
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number") from None
        if not (math.isfinite(v) and v > 0):
            raise argparse.ArgumentTypeError(f"{name} must be a finite number > 0")
        return v

    return conv


def _overrides(args) -> Overrides:
    return Overrides(dt=args.dt, t_max=args.t_max)


def _load_all(refs):
    scns = []
    for ref in refs:
        try:
            scns.append(load_scenario(ref))
        except ScenarioError as err:
            raise CliError(EXIT_VALIDATION, "validation", str(err), ref) from None
    names = [s.name for s in scns]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise CliError(EXIT_VALIDATION, "validation", f"duplicate scenario names: {', '.join(dup)}")
    return scns


def _run_one(scn, out_root, overrides):
    """Worker body; returns (name, manifest, failure) with failure = (code, kind, message)."""
    try:
        manifest = run(scn, out_root, overrides)
        return scn.name, manifest, None
    except (ValueError, ScenarioError) as err:
        return scn.name, None, (EXIT_VALIDATION, "validation", str(err))
    except Exception as err:  # numerical failure inside a module
        detail = f"{type(err).__name__}: {err}"
        return scn.name, None, (EXIT_SOLVER, "solver", detail)


def cmd_run(args) -> int:
    scns = _load_all(args.scenarios)
    overrides = _overrides(args)
    roots = []
    for scn in scns:
        try:
            roots.append(resolve_out_root(args.out, scn))
        except ValueError as err:
            raise CliError(EXIT_VALIDATION, "validation", str(err), scn.name) from None
    jobs = list(zip(scns, roots))
    if args.parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            results = list(pool.map(_run_one, *zip(*jobs), [overrides] * len(jobs)))
    else:
        results = [_run_one(scn, root, overrides) for scn, root in jobs]
    code = EXIT_OK
    for (name, manifest, failure), root in zip(results, roots):
        if failure is not None:
            fcode, kind, msg = failure
            _emit_error(CliError(fcode, kind, msg, name))
            code = max(code, fcode)
            continue
        print(f"{name}: wrote {len(manifest['files'])} file(s) to {root / name}")
        for case in manifest["cases"]:
            print(f"  {case['label']}: {_summary(case['diagnostics'])}")
        for w in manifest["warnings"]:
            print(f"  warning: {w}")
    return code


def _summary(diag: dict) -> str:
    keys = ("pole_count", "dark_count", "truncation", "route_deviation", "tail_mean_pop_e",
            "steady_population", "max_abs_balance")
    parts = []
    for k in keys:
        if k in diag and diag[k] is not None:
            v = diag[k]
            parts.append(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}")
    return ", ".join(parts)


def cmd_list(args) -> int:
    for name, figure, desc in catalog():
        print(f"{name:<18} {figure:<22} {desc}")
    return EXIT_OK


def cmd_verify(args) -> int:
    scns = _load_all([args.scenario])
    scn = scns[0]
    try:
        checks = verify(scn, _overrides(args))
    except ValueError as err:
        raise CliError(EXIT_VALIDATION, "validation", str(err), scn.name) from None
    except Exception as err:
        raise CliError(EXIT_SOLVER, "solver", f"{type(err).__name__}: {err}", scn.name) from None
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{scn.name}: {len(checks) - len(failed)}/{len(checks)} checks passed")
    if failed:
        raise CliError(
            EXIT_VERIFY, "verification",
            "failed: " + ", ".join(f"{c.case}/{c.name}" for c in failed), scn.name,
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gad", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gad {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def solver_flags(p):
        p.add_argument("--dt", type=_positive("--dt"), default=None,
                       help="time step in units of 1/Omega (snapped to divide tau)")
        p.add_argument("--t-max", dest="t_max", type=_positive("--t-max"), default=None,
                       help="final time in units of 1/Omega")

    p_run = sub.add_parser("run", help="run scenarios (JSON paths or bundled names)")
    p_run.add_argument("scenarios", nargs="+")
    p_run.add_argument("--out", default=None,
                       help="output root; defaults to $GAD_OUT_DIR, then ./gad-out")
    p_run.add_argument("--parallel", type=int, default=1, help="run N scenarios concurrently")
    solver_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_list = sub.add_parser("list", help="list bundled scenarios")
    p_list.set_defaults(func=cmd_list)

    p_ver = sub.add_parser("verify", help="check invariants for one scenario")
    p_ver.add_argument("scenario")
    solver_flags(p_ver)
    p_ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which matches EXIT_VALIDATION
        if exc.code not in (0, None):
            _emit_error(CliError(EXIT_VALIDATION, "validation", "invalid command line"))
        return int(exc.code or 0)
    if getattr(args, "parallel", 1) < 1:
        _emit_error(CliError(EXIT_VALIDATION, "validation", "--parallel must be >= 1"))
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except CliError as err:
        _emit_error(err)
        return err.code
    except Exception as err:
        traceback.print_exc(file=sys.stderr)
        _emit_error(CliError(EXIT_SOLVER, "solver", f"{type(err).__name__}: {err}"))
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
