"""Command line entry point: ``mixedplate --example 1 --levels 5 --out results``.

Settings may also come from a flat ``key=value`` file given with
``--config``; keys mirror the long flag names and flags win over the file.
"""
import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .convergence import ConvergenceError, RunConfig, run
from ..solvers import METHODS, SolverError

_CONVERTERS = {
    "example": int, "order": int, "levels": int, "base_n": int, "reference_extra": int,
    "max_picard": int, "theta": float, "tau": float, "p": float, "tol": float,
    "tol_nl": float,
}
_BOOLEAN = {"allow_any_theta"}
_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def build_parser():
    ap = argparse.ArgumentParser(
        prog="mixedplate",
        description="Convergence study of the stabilized mixed plate elements.")
    a = ap.add_argument
    a("--config", help="key=value file with default settings")
    a("--example", type=int, choices=range(1, 7), help="benchmark 1..6")
    a("--element", choices=("bdm", "vlagrange"), help="space for w = grad u")
    a("--order", type=int, choices=(1, 2), help="k in BDM_k-P_{k+1}")
    a("--theta", type=float, help="symmetrization parameter, -1 or 1")
    a("--allow-any-theta", action="store_true", default=None,
      help="accept theta outside {-1, 1}")
    a("--tau", type=float, help="stabilization parameter (default per example)")
    a("--p", type=float, help="membrane parameter (examples 5 and 6 only)")
    a("--levels", type=int, help="number of reported mesh levels")
    a("--domain", choices=("omega1", "omega2"), help="domain of example 2")
    a("--base-n", type=int, help="subdivisions of the coarsest mesh")
    a("--mesh-file", help="coarsest mesh in the plain text format")
    a("--reference-extra", type=int,
      help="refinements of the reference level beyond the last reported one")
    a("--solver", choices=METHODS, help="linear solver")
    a("--tol", type=float, help="relative residual tolerance of the linear solver")
    a("--tol-nl", type=float, help="Picard increment tolerance")
    a("--max-picard", type=int, help="Picard iteration limit")
    a("--out", help="output directory (default: results/example<N>)")
    a("-v", "--verbose", action="store_true", help="log progress")
    return ap


def read_config_file(path):
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    settings = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown setting {key!r}")
        if key in _BOOLEAN:
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"{path}:{lineno}: {key} expects a boolean")
            settings[key] = value.lower() in ("true", "1", "yes")
        else:
            settings[key] = _CONVERTERS.get(key, str)(value)
    return settings


def config_from_args(args):
    settings = read_config_file(args.config) if args.config else {}
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return RunConfig(**settings)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
    except (ValueError, OSError) as exc:
        parser.error(str(exc))
    out = Path(config.out or f"results/example{config.example}")
    try:
        result = run(config)
    except ConvergenceError as exc:
        exc.partial.write(out)
        print(f"error: {exc}; partial tables written to {out}", file=sys.stderr)
        return 1
    except (SolverError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    result.write(out)
    for name, table in result.tables.items():
        print(f"[{name}]")
        print(table.format())
    print(f"wrote {len(result.tables)} table(s) and manifest.json to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
