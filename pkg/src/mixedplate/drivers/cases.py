"""Manufactured solutions and data of the benchmark problems.

Sources are closed forms built from one-dimensional factors:

* a(t) = t^2 (1-t)^2 (clamped polynomial plate),
* s(t) = sin(2 pi t),
* b(t) = sin^2(pi t).
"""
from dataclasses import dataclass

import numpy as np

from ..assembly import Coefficient

PI = np.pi


@dataclass(frozen=True)
class ExactField:
    """A smooth scalar field with its derivatives, all callables of (x, y)."""

    value: object
    grad: object
    hess: object

    def laplacian(self, x, y):
        h = self.hess(x, y)
        return h[0][0] + h[1][1]


@dataclass(frozen=True)
class ManufacturedCase:
    """Problem data of one benchmark.

    For biharmonic cases ``xi`` is the exact u (or None) and ``psi``/``g`` are
    unused. For von Karman cases ``xi``, ``psi`` are the two exact fields.
    """

    example: int
    kind: str  # "biharmonic" or "von_karman"
    domain: str
    f: object
    coefficient: Coefficient
    xi: ExactField = None
    psi: ExactField = None
    g: object = None
    p: float = 0.0
    tau: float = 10.0

    @property
    def has_exact(self):
        return self.xi is not None

    @property
    def u(self):
        return self.xi


def _product_field(a, da, d2a, b=None, db=None, d2b=None):
    """Field a(x) b(y) from 1-D factors (b defaults to a)."""
    if b is None:
        b, db, d2b = a, da, d2a
    return ExactField(
        value=lambda x, y: a(x) * b(y),
        grad=lambda x, y: (da(x) * b(y), a(x) * db(y)),
        hess=lambda x, y: ((d2a(x) * b(y), da(x) * db(y)),
                           (da(x) * db(y), a(x) * d2b(y))),
    )


# clamped polynomial a(t) = t^2 (1 - t)^2
def _a(t):
    return t ** 2 * (1 - t) ** 2


def _a1(t):
    return 2 * t * (1 - t) * (1 - 2 * t)


def _a2(t):
    return 2 - 12 * t + 12 * t ** 2


def _a4(t):
    return np.full(np.shape(t), 24.0)


# s(t) = sin(2 pi t)
def _s(t):
    return np.sin(2 * PI * t)


def _s1(t):
    return 2 * PI * np.cos(2 * PI * t)


def _s2(t):
    return -4 * PI ** 2 * np.sin(2 * PI * t)


# b(t) = sin^2(pi t)
def _b(t):
    return np.sin(PI * t) ** 2


def _b1(t):
    return PI * np.sin(2 * PI * t)


def _b2(t):
    return 2 * PI ** 2 * np.cos(2 * PI * t)


def _b4(t):
    return -8 * PI ** 4 * np.cos(2 * PI * t)


def bracket(hess_a, hess_b):
    """[a, b] = a_xx b_yy + a_yy b_xx - 2 a_xy b_xy from two Hessians."""
    (axx, axy), (_, ayy) = hess_a
    (bxx, bxy), (_, byy) = hess_b
    return axx * byy + ayy * bxx - 2 * axy * bxy


def _example1():
    u = _product_field(_a, _a1, _a2)

    def f(x, y):
        return _a4(x) * _a(y) + 2 * _a2(x) * _a2(y) + _a(x) * _a4(y)

    return ManufacturedCase(1, "biharmonic", "unit_square", f, Coefficient.constant(1.0),
                            xi=u, tau=10.0)


def _example3():
    u = _product_field(_s, _s1, _s2)
    kappa = Coefficient(lambda x, y: x ** 2 + y ** 2 + 1, lambda x, y: (2 * x, 2 * y))

    def f(x, y):
        # Lap(k Lap u) = -8 pi^2 (u Lap k + 2 grad k . grad u + k Lap u)
        val = u.value(x, y)
        ux, uy = u.grad(x, y)
        k = x ** 2 + y ** 2 + 1
        return -8 * PI ** 2 * (4 * val + 4 * (x * ux + y * uy) - 8 * PI ** 2 * k * val)

    return ManufacturedCase(3, "biharmonic", "unit_square", f, kappa, xi=u, tau=10.0)


def _example4():
    xi = _product_field(_a, _a1, _a2)
    psi = _product_field(_b, _b1, _b2)

    def f(x, y):
        bilap = _a4(x) * _a(y) + 2 * _a2(x) * _a2(y) + _a(x) * _a4(y)
        return bilap - bracket(xi.hess(x, y), psi.hess(x, y))

    def g(x, y):
        bilap = _b4(x) * _b(y) + 2 * _b2(x) * _b2(y) + _b(x) * _b4(y)
        return bilap + bracket(xi.hess(x, y), xi.hess(x, y))

    return ManufacturedCase(4, "von_karman", "unit_square", f, Coefficient.constant(1.0),
                            xi=xi, psi=psi, g=g, p=0.0, tau=10.0)


_MANUFACTURED = {1: _example1, 3: _example3, 4: _example4}
REFERENCE_EXAMPLES = (2, 5, 6)


def _const(c):
    c = float(c)
    return lambda x, y: np.full(np.shape(x), c)


def manufactured_case(example):
    """Data and exact solution of Example 1, 3 or 4."""
    if example in REFERENCE_EXAMPLES:
        raise ValueError(
            f"example {example} has no closed-form solution; "
            "use reference_case() / run_reference_mode instead")
    try:
        return _MANUFACTURED[example]()
    except KeyError:
        raise ValueError(f"unknown example {example}") from None


def reference_case(example, domain=None, p=None):
    """Data of the L-shaped examples measured against a fine reference solution.

    Example 2: biharmonic, f = 1 on omega1 (default) or omega2.
    Example 5: von Karman on omega5 with f = g = 10 and p = 0 (default) or 20.
    Example 6: von Karman on omega6 with f = 100, g = 1, p = 20.
    """
    one = Coefficient.constant(1.0)
    if example == 2:
        domain = domain or "omega1"
        if domain not in ("omega1", "omega2"):
            raise ValueError("example 2 runs on omega1 or omega2")
        return ManufacturedCase(2, "biharmonic", domain, _const(1.0), one, tau=200.0)
    if example == 5:
        return ManufacturedCase(5, "von_karman", "omega5", _const(10.0), one,
                                g=_const(10.0), p=0.0 if p is None else float(p),
                                tau=200.0)
    if example == 6:
        return ManufacturedCase(6, "von_karman", "omega6", _const(100.0), one,
                                g=_const(1.0), p=20.0 if p is None else float(p),
                                tau=200.0)
    raise ValueError(f"example {example} is not a reference-solution example")


def get_case(example, domain=None, p=None):
    if example in REFERENCE_EXAMPLES:
        return reference_case(example, domain, p)
    return manufactured_case(example)


# finite-difference check of the sources ----------------------------------------

def _d2(fn, x, y, h, axis):
    c = {-2: -1.0, -1: 16.0, 0: -30.0, 1: 16.0, 2: -1.0}
    dx, dy = (h, 0.0) if axis == 0 else (0.0, h)
    return sum(w * fn(x + k * dx, y + k * dy) for k, w in c.items()) / (12 * h * h)


def _d1(fn, x, y, h, axis):
    c = {-2: 1.0, -1: -8.0, 1: 8.0, 2: -1.0}
    dx, dy = (h, 0.0) if axis == 0 else (0.0, h)
    return sum(w * fn(x + k * dx, y + k * dy) for k, w in c.items()) / (12 * h)


def fd_laplacian(fn, x, y, h):
    return _d2(fn, x, y, h, 0) + _d2(fn, x, y, h, 1)


def fd_hessian(fn, x, y, h):
    hxy = _d1(lambda a, b: _d1(fn, a, b, h, 1), x, y, h, 0)
    return ((_d2(fn, x, y, h, 0), hxy), (hxy, _d2(fn, x, y, h, 1)))


def fd_sources(case, x, y, h=1e-3):
    """Finite-difference evaluation of the PDE operators on the exact solution."""
    if case.kind == "biharmonic":
        k = case.coefficient.kappa
        inner = lambda a, b: k(a, b) * fd_laplacian(case.xi.value, a, b, h)
        return (fd_laplacian(inner, x, y, h),)
    xi, psi = case.xi.value, case.psi.value
    lap = lambda fn: (lambda a, b: fd_laplacian(fn, a, b, h))
    hx, hp = fd_hessian(xi, x, y, h), fd_hessian(psi, x, y, h)
    f = fd_laplacian(lap(xi), x, y, h) - bracket(hx, hp) + case.p * fd_laplacian(xi, x, y, h)
    g = fd_laplacian(lap(psi), x, y, h) + bracket(hx, hx)
    return f, g


def validate_source(case, n_points=200, h=1e-3, rtol=1e-6, seed=0):
    """Compare the closed-form sources with finite differences of the exact
    solution at random interior points; raises ``ValueError`` on mismatch.

    Returns the largest relative deviation (max-norm over the sample).
    """
    if not case.has_exact:
        raise ValueError(f"example {case.example} has no exact solution to check")
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(0.05, 0.95, size=(2, n_points))
    # nested stencils divide by h^4; extended precision keeps roundoff below rtol
    xl, yl = x.astype(np.longdouble), y.astype(np.longdouble)
    approx = [np.asarray(a, dtype=float)
              for a in fd_sources(case, xl, yl, np.longdouble(h))]
    exact = (case.f(x, y),) if case.kind == "biharmonic" else (case.f(x, y), case.g(x, y))
    worst = 0.0
    for a, e in zip(approx, exact):
        worst = max(worst, float(np.max(np.abs(a - e)) / np.max(np.abs(e))))
    if worst > rtol:
        raise ValueError(f"source of example {case.example} disagrees with finite "
                         f"differences: relative deviation {worst:.2e} > {rtol:.0e}")
    return worst
