"""Convergence studies: solve on a hierarchy of meshes and tabulate errors.

Manufactured examples (1, 3, 4) are measured against the exact solution.
The L-shaped examples (2, 5, 6) are measured against a solution on a mesh
refined ``reference_extra`` times beyond the last reported level.
"""
import csv
import json
import logging
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..assembly import SchemeParams, apply_dirichlet, biharmonic_system
from ..fe_spaces import build_space
from ..mesh import Mesh, domain_mesh, uniform_refine
from ..norms import ErrorReport, eoc, error_report, reference_error_report
from ..solvers import SolverError, SolverOptions, picard_solve, solve_linear
from .cases import REFERENCE_EXAMPLES, get_case, manufactured_case, validate_source

log = logging.getLogger(__name__)

ELEMENTS = ("bdm", "vlagrange")
DEFAULT_BASE_N = {"unit_square": 4, "omega1": 4, "omega2": 6, "omega5": 4, "omega6": 6}
CSV_HEADER = ("h", "e_u", "order_e_u", "grad_e_u", "order_grad_e_u", "e_w", "order_e_w",
              "div_e_w", "order_div_e_w", "grad_e_u_1", "order_grad_e_u_1")


@dataclass(frozen=True)
class RunConfig:
    """Settings of one convergence study.

    ``order`` is k of the pairing BDM_k-P_{k+1} (or vector P_k - P_{k+1}).
    ``tau=None`` picks the example default (10 on the unit square, 200 on
    the L-shapes). ``base_n`` is the subdivision of the coarsest mesh.
    """

    example: int = 1
    element: str = "bdm"
    order: int = 1
    theta: float = 1.0
    tau: float = None
    levels: int = 5
    p: float = None
    domain: str = None
    base_n: int = None
    mesh_file: str = None
    reference_extra: int = 2
    solver: str = "direct"
    tol: float = 1e-10
    tol_nl: float = 1e-10
    max_picard: int = 50
    allow_any_theta: bool = False
    out: str = None

    def __post_init__(self):
        if self.example not in range(1, 7):
            raise ValueError(f"example must be 1..6, got {self.example}")
        if self.element not in ELEMENTS:
            raise ValueError(f"element must be one of {ELEMENTS}, got {self.element!r}")
        if self.order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {self.order}")
        if not self.allow_any_theta and self.theta not in (-1, 1):
            raise ValueError(f"theta must be -1 or 1 (got {self.theta}); "
                             "pass allow_any_theta to test other values")
        if self.tau is not None and not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.p is not None:
            if self.example not in (5, 6):
                raise ValueError(f"p applies to examples 5 and 6 only (example {self.example} "
                                 "has no membrane term)")
            if self.p < 0:
                raise ValueError(f"p must be nonnegative, got {self.p}")
        if self.domain is not None and self.example != 2:
            raise ValueError("only example 2 accepts a domain choice")
        min_levels = 3 if self.is_reference else 2
        if self.levels < min_levels:
            raise ValueError(f"need at least {min_levels} levels, got {self.levels}")
        if self.reference_extra < 1:
            raise ValueError("reference_extra must be at least 1")
        if self.base_n is not None and self.base_n < 1:
            raise ValueError("base_n must be positive")
        if self.max_picard < 1 or not self.tol_nl > 0:
            raise ValueError("max_picard must be >= 1 and tol_nl > 0")
        SolverOptions(self.solver, self.tol)  # validates solver settings

    @property
    def is_reference(self):
        return self.example in REFERENCE_EXAMPLES

    def case(self):
        return get_case(self.example, self.domain, self.p)

    def params(self, case):
        tau = case.tau if self.tau is None else self.tau
        return SchemeParams(self.theta, tau, self.allow_any_theta)

    def solver_options(self):
        return SolverOptions(self.solver, self.tol)


@dataclass
class ConvergenceTable:
    """Error rows of one field over the mesh levels."""

    name: str
    reports: list = field(default_factory=list)

    @property
    def hs(self):
        return np.array([r.h for r in self.reports])

    def errors(self, key):
        return np.array([getattr(r, key) for r in self.reports])

    def orders(self):
        """Observed orders per error column (length ``len(reports) - 1``)."""
        if len(self.reports) < 2:
            return {k: np.zeros(0) for k in ErrorReport.TABLE_FIELDS}
        return {k: eoc(self.hs, self.errors(k)) for k in ErrorReport.TABLE_FIELDS}

    def final_orders(self):
        o = self.orders()
        return tuple(float(o[k][-1]) for k in ErrorReport.TABLE_FIELDS)

    def rows(self):
        """Formatted rows; orders are '--' on the first level."""
        orders = self.orders()
        out = []
        for i, r in enumerate(self.reports):
            row = [f"{r.h:.5e}"]
            for k in ErrorReport.TABLE_FIELDS:
                row.append(f"{getattr(r, k):.5e}")
                row.append("--" if i == 0 else f"{orders[k][i - 1]:.2f}")
            out.append(row)
        return out

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            writer.writerows(self.rows())
        return path

    def format(self):
        widths = [11] * len(CSV_HEADER)
        lines = [" ".join(h.rjust(w) for h, w in zip(CSV_HEADER, widths))]
        lines += [" ".join(c.rjust(w) for c, w in zip(row, widths)) for row in self.rows()]
        return "\n".join(lines)


@dataclass
class RunResult:
    config: RunConfig
    tables: dict
    level_info: list = field(default_factory=list)
    complete: bool = True

    def write(self, out_dir):
        """Write one CSV per table and ``manifest.json`` to ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = []
        for name, table in self.tables.items():
            files.append(table.to_csv(out / f"example{self.config.example}_{name}.csv").name)
        case = self.config.case()
        manifest = {
            "config": asdict(self.config),
            "effective": {"tau": self.config.params(case).tau, "p": case.p,
                          "domain": case.domain},
            "complete": self.complete,
            "tables": files,
            "level_info": self.level_info,
            "versions": {"mixedplate": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=float) + "\n")
        return out


class ConvergenceError(RuntimeError):
    """A level failed; ``partial`` holds the tables of the levels reached."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


def mesh_hierarchy(config, case, count):
    if config.mesh_file is not None:
        mesh = Mesh.load(config.mesh_file)
    else:
        n = config.base_n or DEFAULT_BASE_N[case.domain]
        mesh = domain_mesh(case.domain, n)
    meshes = [mesh]
    for _ in range(count - 1):
        meshes.append(uniform_refine(meshes[-1]))
    return meshes


def _spaces(config, mesh):
    return build_space(mesh, config.element, config.order), \
        build_space(mesh, "lagrange", config.order + 1)


def solve_level(config, case, mesh):
    """Solve one level; returns ``({field: (W, V, w, u)}, info)``.

    Biharmonic runs give the field "u" (w approximating grad u). Von Karman
    runs give "xi" (paired with u ~ grad xi) and "psi" (paired with w ~ grad psi).
    """
    W, V = _spaces(config, mesh)
    params = config.params(case)
    options = config.solver_options()
    info = {"h": mesh.h, "triangles": mesh.num_triangles}
    if case.kind == "biharmonic":
        system = biharmonic_system(W, V, case.coefficient, params, case.f)
        dw, vw = W.set_dirichlet_values(case.u.grad if case.has_exact else None)
        dv, vv = V.set_dirichlet_values(case.u.value if case.has_exact else None)
        system = apply_dirichlet(system, np.concatenate([dw, dv + W.ndofs]),
                                 np.concatenate([vw, vv]))
        x = solve_linear(system, options)
        info["unknowns"] = len(x)
        return {"u": (W, V, x[:W.ndofs], x[W.ndofs:])}, info

    boundary = None
    if case.has_exact:
        boundary = {"u": W.set_dirichlet_values(case.xi.grad),
                    "xi": V.set_dirichlet_values(case.xi.value),
                    "w": W.set_dirichlet_values(case.psi.grad),
                    "psi": V.set_dirichlet_values(case.psi.value)}
    state = picard_solve(W, V, params, case.f, case.g, case.p, options,
                         tol_nl=config.tol_nl, max_picard=config.max_picard,
                         boundary=boundary)
    info.update(unknowns=2 * (W.ndofs + V.ndofs), picard_iterations=state.iterations,
                picard_converged=state.converged, picard_monotone=state.monotone,
                picard_increments=[float(v) for v in state.increments])
    if not state.converged:
        raise SolverError(f"Picard iteration did not converge in {state.iterations} steps "
                          f"(last increment {state.increments[-1]:.3e})")
    return {"xi": (W, V, state.u, state.xi), "psi": (W, V, state.w, state.psi)}, info


def _field_names(case):
    return ("u",) if case.kind == "biharmonic" else ("xi", "psi")


def run_convergence(config):
    """Convergence table(s) of a manufactured example against its exact solution."""
    case = manufactured_case(config.example)
    validate_source(case)
    names = _field_names(case)
    exact = {"u": case.xi, "xi": case.xi, "psi": case.psi}
    result = RunResult(config, {k: ConvergenceTable(k) for k in names})
    for level, mesh in enumerate(mesh_hierarchy(config, case, config.levels)):
        t0 = time.perf_counter()
        try:
            fields_, info = solve_level(config, case, mesh)
        except SolverError as exc:
            result.complete = False
            raise ConvergenceError(f"level {level} (h={mesh.h:.4g}) failed: {exc}",
                                   result) from exc
        for name in names:
            W, V, w, u = fields_[name]
            result.tables[name].reports.append(error_report(W, V, w, u, exact[name]))
        info["seconds"] = round(time.perf_counter() - t0, 3)
        result.level_info.append(info)
        log.info("example %d level %d: h=%.4g (%.1fs)", config.example, level, mesh.h,
                 info["seconds"])
    return result


def run_reference_mode(config):
    """Tables of Example 2, 5 or 6 measured against a finer reference solution.

    The reference lives on the last reported mesh refined
    ``config.reference_extra`` more times; it is not part of the table.
    """
    if not config.is_reference:
        raise ValueError(f"example {config.example} has an exact solution; "
                         "use run_convergence")
    case = config.case()
    names = _field_names(case)
    meshes = mesh_hierarchy(config, case, config.levels + config.reference_extra)
    result = RunResult(config, {k: ConvergenceTable(k) for k in names})
    t0 = time.perf_counter()
    try:
        reference, info = solve_level(config, case, meshes[-1])
    except SolverError as exc:
        result.complete = False
        raise ConvergenceError(f"reference level failed: {exc}", result) from exc
    info.update(reference=True, seconds=round(time.perf_counter() - t0, 3))
    result.level_info.append(info)
    for level, mesh in enumerate(meshes[:config.levels]):
        t0 = time.perf_counter()
        try:
            fields_, info = solve_level(config, case, mesh)
        except SolverError as exc:
            result.complete = False
            raise ConvergenceError(f"level {level} (h={mesh.h:.4g}) failed: {exc}",
                                   result) from exc
        for name in names:
            result.tables[name].reports.append(
                reference_error_report(fields_[name], reference[name]))
        info["seconds"] = round(time.perf_counter() - t0, 3)
        result.level_info.append(info)
    return result


def run(config):
    """Dispatch to the exact-solution or the reference-solution study."""
    return run_reference_mode(config) if config.is_reference else run_convergence(config)
