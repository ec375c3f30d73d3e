"""Linear solvers and the Picard iteration for the von Karman system."""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly
from .norms import discrete_h2_matrix, hdiv_matrix

log = logging.getLogger(__name__)

METHODS = ("direct", "cg", "gmres")
REFINEMENT_STEPS = 3


class SolverError(RuntimeError):
    """Raised when a linear solve fails; carries the achieved residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SolverOptions:
    method: str = "direct"
    tol: float = 1e-10
    max_iter: int = 20000
    precondition: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown solver {self.method!r}; choose from {METHODS}")
        if not 0 < self.tol < 1e-2:
            raise ValueError(f"solver tolerance must lie in (0, 1e-2), got {self.tol}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


def _residual(A, x, b):
    """b - A x accumulated in extended precision.

    The O(h^-4) systems have entries spanning many decades; a double matvec
    alone carries an error near 1e-10 relative to the small load vectors.
    """
    A = sp.csr_matrix(A, dtype=np.longdouble)
    return np.asarray(b, dtype=np.longdouble) - A @ np.asarray(x, dtype=np.longdouble)


def relative_residual(A, x, b):
    r = _residual(A, x, b)
    return float(np.sqrt(np.sum(r * r))) / max(np.linalg.norm(b), 1e-300)


def precision_floor(A, x, b, safety=64.0):
    """Relative residual attainable in double precision for this x."""
    scale = np.linalg.norm(abs(A) @ np.abs(x) + np.abs(b))
    return safety * np.finfo(float).eps * scale / max(np.linalg.norm(b), 1e-300)


def solve_linear(system, options=None):
    """Solve ``system.matrix x = system.rhs``.

    Accepts a :class:`~mixedplate.assembly.SparseSystem` or a ``(A, b)`` pair.
    The relative residual is checked after every solve. A direct solve that
    stalls above ``options.tol`` is still accepted when the residual sits at
    the double-precision floor (see :func:`precision_floor`); only a worse
    residual raises.
    """
    options = SolverOptions() if options is None else options
    if isinstance(system, tuple):
        A, b = system
    else:
        A, b = system.matrix, system.rhs
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1] or A.shape[0] != len(b):
        raise ValueError(f"system is not square/consistent: {A.shape}, rhs {len(b)}")

    if options.method == "direct":
        try:
            lu = spla.splu(A.tocsc())
        except RuntimeError as exc:
            raise SolverError(f"sparse factorization failed: {exc}") from None
        x = lu.solve(b)
        # refinement sweeps recover digits lost to the h^-4 conditioning
        bnorm = max(np.linalg.norm(b), 1e-300)
        for _ in range(REFINEMENT_STEPS):
            r = _residual(A, x, b)
            if float(np.sqrt(np.sum(r * r))) <= 1e-2 * options.tol * bnorm:
                break
            x = (x.astype(np.longdouble) + lu.solve(r.astype(float))).astype(float)
    else:
        M = None
        if options.precondition:
            d = A.diagonal()
            d = np.where(np.abs(d) > 0, d, 1.0)
            M = sp.diags(1.0 / d)
        if options.method == "cg":
            # Jacobi scaling must stay symmetric for CG
            if M is not None:
                s = 1.0 / np.sqrt(np.abs(A.diagonal()) + (A.diagonal() == 0))
                S = sp.diags(s)
                y, info = spla.cg(S @ A @ S, s * b, rtol=options.tol * 1e-2,
                                  atol=0.0, maxiter=options.max_iter)
                x = s * y
            else:
                x, info = spla.cg(A, b, rtol=options.tol, atol=0.0,
                                  maxiter=options.max_iter)
        else:
            x, info = spla.gmres(A, b, M=M, rtol=options.tol * 1e-2, atol=0.0,
                                 restart=200, maxiter=options.max_iter)
        if info < 0:
            raise SolverError(f"{options.method} breakdown (info={info})")

    res = relative_residual(A, x, b)
    if options.method == "direct" and np.isfinite(res) and res > options.tol:
        # Rounding x to double alone leaves a residual near eps |A| |x|; on
        # fine meshes that floor exceeds 1e-10 and no solver can do better.
        floor = precision_floor(A, x, b)
        if res <= floor:
            log.info("direct solve: residual %.2e is at the working-precision floor "
                     "%.2e (tolerance %.1e)", res, floor, options.tol)
            return x
    if not np.isfinite(res) or res > options.tol:
        raise SolverError(
            f"{options.method} solve reached relative residual {res:.3e} "
            f"> tolerance {options.tol:.1e}", residual=res)
    return x


@dataclass
class PicardState:
    """Iterates of the frozen-coefficient von Karman iteration.

    ``u``/``w`` live in the vector space and ``xi``/``psi`` in the scalar
    space; ``increments`` holds the combined-norm size of every update.
    """

    u: np.ndarray
    xi: np.ndarray
    w: np.ndarray
    psi: np.ndarray
    iterations: int = 0
    increments: list = field(default_factory=list)
    converged: bool = False
    monotone: bool = True

    def vector(self):
        return np.concatenate([self.u, self.xi, self.w, self.psi])


def picard_solve(W, V, params, f, g=None, p=0.0, options=None, tol_nl=1e-10,
                 max_picard=50, initial_xi=None, boundary=None, couple=True,
                 degree=None):
    """Picard iteration for the stabilized von Karman scheme (kappa = 1).

    Every step assembles the 4-block system with the cofactor matrix frozen
    at the previous ``xi`` and solves it monolithically. Iteration stops when
    the combined norm (H(div) on u, w; discrete H^2 on xi, psi) of the update
    is at most ``tol_nl``.

    ``boundary`` optionally maps block name ("u", "xi", "w", "psi") to a
    ``(dofs, values)`` pair in that block's numbering; missing blocks get
    homogeneous data. ``couple=False`` drops the cofactor blocks.
    """
    options = SolverOptions() if options is None else options
    nW, nV = W.ndofs, V.ndofs
    B = assembly.assemble_biharmonic(W, V, assembly.Coefficient.constant(1.0),
                                     params, degree)
    M = assembly.assemble_membrane(V, p, degree) if p else None
    f_load = assembly.assemble_load(V, f, degree)
    g_load = assembly.assemble_load(V, g, degree) if g is not None else np.zeros(nV)

    o = assembly.vk_layout(W, V)
    boundary = boundary or {}
    fixed, values = [], []
    for name, space, off in (("u", W, o[0]), ("xi", V, o[1]),
                             ("w", W, o[2]), ("psi", V, o[3])):
        dofs, vals = boundary.get(name, (space.boundary_dofs,
                                         np.zeros(len(space.boundary_dofs))))
        fixed.append(np.asarray(dofs) + off)
        values.append(np.asarray(vals, dtype=float))
    fixed = np.concatenate(fixed)
    values = np.concatenate(values)

    Hd = hdiv_matrix(W)
    H2 = discrete_h2_matrix(V)
    norm_matrix = sp.block_diag([Hd, H2, Hd, H2]).tocsr()

    xi = np.zeros(nV) if initial_xi is None else np.asarray(initial_xi, float).copy()
    state = PicardState(np.zeros(nW), xi, np.zeros(nW), np.zeros(nV))
    previous = state.vector()
    for it in range(1, max_picard + 1):
        C = assembly.assemble_vk_coupling(V, state.xi, degree) if couple else \
            sp.csr_matrix((nV, nV))
        system = assembly.vk_system(B, C, M, W, V, f_load, g_load)
        system = assembly.apply_dirichlet(system, fixed, values)
        x = solve_linear(system, options)
        state.u, state.xi = x[o[0]:o[1]], x[o[1]:o[2]]
        state.w, state.psi = x[o[2]:o[3]], x[o[3]:o[4]]
        d = x - previous
        inc = float(np.sqrt(max(d @ (norm_matrix @ d), 0.0)))
        state.increments.append(inc)
        state.iterations = it
        previous = x
        log.debug("picard iteration %d: increment %.3e", it, inc)
        if len(state.increments) > 1 and inc > state.increments[-2] * (1 + 1e-8) \
                and inc > 1e3 * tol_nl:
            state.monotone = False
        # without coupling the step does not depend on the iterate
        if inc <= tol_nl or not couple:
            state.converged = True
            break
    if not state.monotone:
        log.warning("Picard increments were not monotonically decreasing: %s",
                    ["%.2e" % v for v in state.increments])
    if not state.converged:
        log.warning("Picard iteration did not converge in %d steps (last increment %.3e)",
                    max_picard, state.increments[-1])
    return state
