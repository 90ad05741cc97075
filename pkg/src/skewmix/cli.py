"""Command line entry point: ``skewmix <subcommand> [options]``.

Every subcommand writes UTF-8 CSV whose first line is ``# `` followed by a
JSON object holding the fully resolved configuration (``tower-build``
writes a single JSON document with the configuration under ``"config"``).
``skewmix replay FILE`` reruns the command recorded in such a header.

Exit status: 0 success, 1 usage error, 2 invalid parameters, 3 numerical
failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .cohomology import uni_scan
from .dynamics import SingularitySet, doubling_map, make_fibre, parse_config
from .errors import ConvergenceError, NoiseFloorError, SkewmixError
from .hyperbolic_times import HypTimeParams, certify_cells
from .spectral import build_ulam, dump_matrix, renewal_mass_balance, spectral_radius, verify_renewal
from .statistics import correlation_mc, mode_observable, recurrence_report
from .tower import InducedScheme, twist_control_bound, twist_suprema

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3

_INTERNAL = {"func", "config", "output"}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


# --------------------------------------------------------------------------
# argument helpers
# --------------------------------------------------------------------------


def _a_grid(text: str) -> list[float]:
    """``lo:hi:count`` (inclusive, equispaced) or a comma list."""
    if ":" in text:
        lo, hi, n = text.split(":")
        n = int(n)
        if n < 1:
            raise argparse.ArgumentTypeError("grid count must be >= 1")
        return [float(v) for v in np.linspace(float(lo), float(hi), n)]
    return [float(v) for v in text.split(",") if v]


def _cells(text: str) -> list[tuple[int, int]]:
    """``n,m;n,m;...``"""
    out = []
    for pair in text.split(";"):
        n, m = pair.split(",")
        out.append((int(n), int(m)))
    return out


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _check_a(a: float) -> None:
    if not 0 < a < 1:
        raise ValueError(f"a must lie in (0, 1), got {a}")


def _warn_b(a: float, b: float) -> None:
    upper = 1.0 / (1.0 - a)
    if not 1 < b < upper:
        warnings.warn(f"b={b} lies outside (1, (1-a)^-1) = (1, {upper:.6g}); twist control is not guaranteed")


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------


def _header(cfg: dict) -> str:
    return "# " + json.dumps(cfg, sort_keys=True) + "\n"


def _csv(cfg: dict, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(_header(cfg))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_uni_scan(cfg):
    scheme = InducedScheme(cfg["L"])
    family = {"smooth": "smooth_counterexample"}.get(cfg["fibre"], cfg["fibre"])
    grid = _a_grid(cfg["a_grid"])
    for a in grid:
        _check_a(a)
    rows = uni_scan(scheme, doubling_map(), family, grid, _cells(cfg["cells"]))
    return _csv(cfg, ["a", "n", "m", "obstruction", "status"], ((r.a, r.n, r.m, r.value, r.status) for r in rows))


def cmd_hyp_check(cfg):
    p = HypTimeParams(cfg["b"], cfg["sigma"], cfg["delta"])
    certs = certify_cells(InducedScheme(cfg["L"]), doubling_map(), SingularitySet((1,)), p, cfg["lmax"], cfg["grid"])
    return _csv(
        cfg,
        ["cell", "points", "passed", "failed", "distance_bound_ok", "min_distance_ratio"],
        ((c.cell, c.points, c.passed, c.failed, int(c.distance_bound_ok), c.min_distance_ratio) for c in certs),
    )


def cmd_twist_bound(cfg):
    _check_a(cfg["a"])
    _warn_b(cfg["a"], cfg["b"])
    fib = make_fibre("power", cfg["a"])
    bound = twist_control_bound(fib.twist_constant, cfg["sigma"], cfg["b"], fib.singular_exponent)
    sups = twist_suprema(InducedScheme(cfg["L"]), doubling_map(), fib, cfg["lmax"], cfg["grid"])
    return _csv(cfg, ["cell", "sup_twist", "bound"], ((l + 1, float(s), bound) for l, s in enumerate(sups)))


def cmd_tower_build(cfg):
    doc = InducedScheme(cfg["L"]).describe()
    doc["config"] = cfg
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def cmd_ulam_spectrum(cfg):
    _check_a(cfg["a"])
    scheme, f, fib = InducedScheme(cfg["L"]), doubling_map(), make_fibre("power", cfg["a"])
    rows = []
    for k in range(-cfg["k_max"], cfg["k_max"] + 1):
        op = build_ulam(scheme, f, fib, k, cfg["N"], cfg["q"])
        est = spectral_radius(op, tol=cfg["tol"], max_iter=cfg["max_iter"])
        if cfg["dump"]:
            Path(cfg["dump"]).mkdir(parents=True, exist_ok=True)
            dump_matrix(op, Path(cfg["dump"]) / f"ulam_k{k}.bin")
        rows.append((k, est.radius, est.residual, cfg["N"], cfg["L"]))
    return _csv(cfg, ["k", "radius", "residual", "N", "L"], rows)


def cmd_renewal_check(cfg):
    _check_a(cfg["a"])
    scheme, f, fib = InducedScheme(cfg["L"]), doubling_map(), make_fibre("power", cfg["a"])
    rows = []
    for n in range(1, cfg["n_max"] + 1):
        mass = renewal_mass_balance(scheme, n, cfg["N"])
        for k in range(-cfg["k_max"], cfg["k_max"] + 1):
            rows.append((n, k, verify_renewal(scheme, f, fib, n, k, cfg["N"], cfg["q"]), mass))
    return _csv(cfg, ["n", "k", "deviation", "mass_defect"], rows)


def cmd_correlation(cfg):
    _check_a(cfg["a"])
    k2 = -cfg["k"] if cfg["k2"] is None else cfg["k2"]
    s = correlation_mc(
        doubling_map(),
        make_fibre("power", cfg["a"]),
        mode_observable(cfg["k"]),
        mode_observable(k2),
        cfg["n_max"],
        cfg["samples"],
        cfg["seed"],
        cfg["blocks"],
        cfg["workers"],
    )
    cfg = dict(cfg, resamples=s.resamples)
    return _csv(cfg, ["lag", "re", "im", "stderr"], s.to_rows())


def cmd_recurrence(cfg):
    rep = recurrence_report(
        doubling_map(),
        SingularitySet((1,)),
        cfg["epsilon"],
        cfg["delta"],
        cfg["lambda"],
        _int_list(cfg["N_values"]),
        cfg["grid"],
        cfg["horizon"],
    )
    cfg = dict(cfg, horizon=rep.horizon)
    return _csv(cfg, ["N", "P", "Q"], rep.to_rows())


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skewmix", description="Experiments on the doubling skew-product with a singular fibre map.")
    parser.add_argument("--version", action="version", version=f"skewmix {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help):
        p = sub.add_parser(name, help=help, description=help)
        p.set_defaults(func=func)
        p.add_argument("--config", help="key=value file; explicit flags take precedence")
        p.add_argument("--output", "-o", help="output path (default: stdout)")
        p.add_argument("--L", type=int, default=40, help="truncation level of the inducing scheme")
        return p

    p = add("uni-scan", cmd_uni_scan, "periodic-orbit obstruction over a grid of exponents")
    p.add_argument("--fibre", default="power", choices=["power", "coboundary", "smooth"])
    p.add_argument("--a-grid", default="0.01:0.99:99")
    p.add_argument("--cells", default="1,2", help="cell pairs n,m separated by ';'")

    p = add("hyp-check", cmd_hyp_check, "per-cell certification of return times as hyperbolic times")
    p.add_argument("--b", type=float, default=1.5)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=0.25)
    p.add_argument("--lmax", type=int, default=30)
    p.add_argument("--grid", type=int, default=1000, help="sample points per cell")

    p = add("twist-bound", cmd_twist_bound, "per-cell sup of |DPhi/DF| against the geometric bound")
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--b", type=float, default=1.5)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--lmax", type=int, default=30)
    p.add_argument("--grid", type=int, default=1000)

    add("tower-build", cmd_tower_build, "JSON description of the truncated inducing scheme")

    p = add("ulam-spectrum", cmd_ulam_spectrum, "spectral radius of the Ulam twisted operators per mode")
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--N", type=int, default=1024)
    p.add_argument("--q", type=int, default=8)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=20000)
    p.add_argument("--dump", default=None, help="directory for binary matrix dumps")

    p = add("renewal-check", cmd_renewal_check, "direct versus convolution form of the renewal operators")
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--n-max", type=int, default=5)
    p.add_argument("--k-max", type=int, default=3)
    p.add_argument("--N", type=int, default=256)
    p.add_argument("--q", type=int, default=4)

    p = add("correlation", cmd_correlation, "Monte Carlo correlations of Fourier-mode observables")
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--k2", type=int, default=None, help="mode of the second observable (default -k)")
    p.add_argument("--n-max", type=int, default=60)
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--blocks", type=int, default=64)
    p.add_argument("--workers", type=int, default=1)

    p = add("recurrence", cmd_recurrence, "grid measures of the slow-recurrence sets")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--delta", type=float, default=0.25)
    p.add_argument("--lambda", type=float, default=0.5)
    p.add_argument("--N-values", default="1,2,4,8,16,32")
    p.add_argument("--grid", type=int, default=10**5)
    p.add_argument("--horizon", type=int, default=None, help="default 4 max(N)")

    p = sub.add_parser("replay", help="rerun the command recorded in an output header")
    p.add_argument("source", help="CSV or JSON output of a previous run")
    p.add_argument("--output", "-o")
    return parser


def _read_config(path) -> dict:
    return {k.replace("-", "_"): v for k, v in parse_config(Path(path).read_text()).items()}


def _recorded_argv(path) -> list[str]:
    text = Path(path).read_text()
    if text.startswith("# "):
        cfg = json.loads(text.splitlines()[0][2:])
    else:
        cfg = json.loads(text)["config"]
    argv = [cfg.pop("command")]
    cfg.pop("version", None)
    cfg.pop("resamples", None)
    for k, v in sorted(cfg.items()):
        if v is None:
            continue
        argv += [f"--{k.replace('_', '-')}", str(v)]
    return argv


def _resolve(parser, argv):
    args = parser.parse_args(argv)
    if args.command is None:
        raise _UsageError(parser.format_usage())
    if args.command == "replay":
        return _resolve(parser, _recorded_argv(args.source) + (["--output", args.output] if args.output else []))
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        given = _read_config(args.config)
        known = {a.dest: a for a in sub._actions}
        unknown = set(given) - set(known) - {"command"}
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        sub.set_defaults(**{k: (known[k].type(v) if known[k].type else v) for k, v in given.items() if k in known})
        args = parser.parse_args(argv)
    cfg = {k: v for k, v in vars(args).items() if k not in _INTERNAL}
    cfg["version"] = __version__
    return args, cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, cfg = _resolve(parser, sys.argv[1:] if argv is None else list(argv))
    except _UsageError as e:
        sys.stderr.write(str(e))
        return EXIT_USAGE
    except (ValueError, OSError, json.JSONDecodeError, KeyError) as e:
        sys.stderr.write(f"skewmix: invalid configuration: {e}\n")
        return EXIT_INVALID
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda msg, *a, **k: sys.stderr.write(f"skewmix: warning: {msg}\n")
            text = args.func(cfg)
    except (ConvergenceError, NoiseFloorError, ArithmeticError) as e:
        sys.stderr.write(f"skewmix: numerical failure: {e}\n")
        return EXIT_NUMERIC
    except (ValueError, SkewmixError) as e:
        sys.stderr.write(f"skewmix: invalid parameters: {e}\n")
        return EXIT_INVALID
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
