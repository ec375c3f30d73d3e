"""Quadrature rules on the reference triangle and the unit interval.

Triangle rules are conical (collapsed) products of a Gauss-Jacobi rule and a
Gauss-Legendre rule. They have strictly positive weights and integrate every
polynomial of total degree ``exact_degree`` exactly on

    T = {(x, y) : x >= 0, y >= 0, x + y <= 1}.

Edge rules are Gauss-Legendre rules mapped to [0, 1].
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_TRIANGLE_DEGREE = 14
MAX_EDGE_DEGREE = 20

# Number of edge rules requested so far. Assembly must never touch edges;
# tests reset and inspect this counter.
EDGE_RULE_CALLS = 0


@dataclass(frozen=True)
class QuadRule:
    """A quadrature rule.

    For triangles ``points`` holds barycentric triples (shape ``(n, 3)``) and
    the weights sum to 1/2. For edges ``points`` holds parameters in [0, 1]
    (shape ``(n,)``) and the weights sum to 1.
    """

    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    @property
    def xy(self):
        """Cartesian reference coordinates of a triangle rule, shape (n, 2)."""
        return self.points[:, 1:3]

    def __len__(self):
        return len(self.weights)


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@lru_cache(maxsize=None)
def _triangle_rule(degree):
    npts = degree // 2 + 1
    # y = s with weight (1 - s), x = (1 - s) t
    xi, wj = roots_jacobi(npts, 1.0, 0.0)
    s = 0.5 * (xi + 1.0)
    ws = 0.25 * wj
    eta, wl = np.polynomial.legendre.leggauss(npts)
    t = 0.5 * (eta + 1.0)
    wt = 0.5 * wl

    S, Tt = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    y = S.ravel()
    x = ((1.0 - S) * Tt).ravel()
    bary = np.column_stack([1.0 - x - y, x, y])
    return QuadRule(_frozen(bary), _frozen(W.ravel()), 2 * npts - 1)


def triangle_rule(degree):
    """Return a rule on the reference triangle exact to at least ``degree``."""
    degree = int(degree)
    if degree < 0 or degree > MAX_TRIANGLE_DEGREE:
        raise ValueError(
            f"triangle quadrature degree must be in [0, {MAX_TRIANGLE_DEGREE}], "
            f"got {degree}"
        )
    return _triangle_rule(max(degree, 1))


@lru_cache(maxsize=None)
def _edge_rule(degree):
    npts = degree // 2 + 1
    eta, w = np.polynomial.legendre.leggauss(npts)
    return QuadRule(_frozen(0.5 * (eta + 1.0)), _frozen(0.5 * w), 2 * npts - 1)


def edge_rule(degree):
    """Return a Gauss-Legendre rule on [0, 1] exact to at least ``degree``."""
    global EDGE_RULE_CALLS
    degree = int(degree)
    if degree < 0 or degree > MAX_EDGE_DEGREE:
        raise ValueError(
            f"edge quadrature degree must be in [0, {MAX_EDGE_DEGREE}], got {degree}"
        )
    EDGE_RULE_CALLS += 1
    return _edge_rule(max(degree, 1))


def reset_edge_counter():
    global EDGE_RULE_CALLS
    EDGE_RULE_CALLS = 0


def assembly_degree(lagrange_order):
    """Default rule degree for assembling forms with P_m scalars."""
    return 2 * lagrange_order + 2


def error_degree(lagrange_order):
    """Default rule degree for error norms against exact solutions."""
    return 2 * lagrange_order + 4
