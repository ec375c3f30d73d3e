"""Error measures, quadratic-form matrices and convergence orders.

This is the only module that integrates over mesh edges: the discrete H^2
seminorm

    |v|_{2,h}^2 = sum_K ||D^2 v||_K^2 + sum_F h_F^-1 ||[grad v . n]||_F^2

includes jumps of the normal derivative on interior edges and the one-sided
trace on boundary edges.
"""
import math
from dataclasses import dataclass, fields

import numpy as np
import scipy.sparse as sp

from .quadrature import edge_rule, error_degree, triangle_rule

CHUNK = 4096


def _chunks(n):
    for start in range(0, n, CHUNK):
        yield np.arange(start, min(start + CHUNK, n))


def _vec(field, x, y):
    return np.stack([np.broadcast_to(np.asarray(c, float), np.shape(x))
                     for c in field(x, y)], axis=-1)


def _mat(field, x, y):
    rows = field(x, y)
    return np.stack([_vec(lambda a, b, r=r: r, x, y) for r in rows], axis=-2)


def _scal(field, x, y):
    return np.broadcast_to(np.asarray(field(x, y), float), np.shape(x))


# element integrals against exact fields ---------------------------------------

def _integrate(space, integrand, degree):
    """Sum over cells of integrand(cells, rule, x) weighted by the rule."""
    mesh = space.mesh
    rule = triangle_rule(degree)
    total = 0.0
    for cells in _chunks(mesh.num_triangles):
        _, _, det, _ = mesh.jacobians(cells)
        x = mesh.map_points(rule.xy, cells)
        vals = integrand(cells, rule, x)
        total += float(np.einsum("q,cq,cq->", rule.weights, np.abs(det)[:, None], vals))
    return total


def _degree(space, degree):
    return error_degree(space.order) if degree is None else degree


def l2_error(space, coeffs, exact=None, degree=None):
    """||exact - v_h|| over the mesh; ``exact`` None means 0.

    Scalar spaces take ``exact(x, y)``, vector spaces ``exact(x, y) -> (wx, wy)``.
    """
    vector = space.family != "lagrange"

    def integrand(cells, rule, x):
        v = space.evaluate(coeffs, cells, rule.xy)[0]
        if exact is not None:
            ex = (_vec if vector else _scal)(exact, x[..., 0], x[..., 1])
            v = ex - v
        return np.sum(v ** 2, axis=-1) if vector else v ** 2

    return math.sqrt(_integrate(space, integrand, _degree(space, degree)))


def h1_semi_error(space, coeffs, exact_grad=None, degree=None):
    def integrand(cells, rule, x):
        g = space.evaluate(coeffs, cells, rule.xy)[1]
        if exact_grad is not None:
            g = _vec(exact_grad, x[..., 0], x[..., 1]) - g
        return np.sum(g ** 2, axis=-1)

    return math.sqrt(_integrate(space, integrand, _degree(space, degree)))


def div_error(space, coeffs, exact_div=None, degree=None):
    """Broken ||div(w - w_h)||."""
    def integrand(cells, rule, x):
        d = space.evaluate(coeffs, cells, rule.xy)[1]
        if exact_div is not None:
            d = _scal(exact_div, x[..., 0], x[..., 1]) - d
        return d ** 2

    return math.sqrt(_integrate(space, integrand, _degree(space, degree)))


def hessian_error(space, coeffs, exact_hess=None, degree=None):
    def integrand(cells, rule, x):
        h = space.evaluate(coeffs, cells, rule.xy)[2]
        if exact_hess is not None:
            h = _mat(exact_hess, x[..., 0], x[..., 1]) - h
        return np.sum(h ** 2, axis=(-2, -1))

    return math.sqrt(_integrate(space, integrand, _degree(space, degree)))


def broken_h1_of_gradient(space, coeffs, exact_grad=None, exact_hess=None, degree=None):
    """(||grad e||^2 + ||D^2 e||^2)^(1/2), broken over triangles, e = exact - v_h."""
    return math.hypot(h1_semi_error(space, coeffs, exact_grad, degree),
                      hessian_error(space, coeffs, exact_hess, degree))


# edge jumps -------------------------------------------------------------------

def _edge_traces(space, coeffs, degree):
    """Normal derivatives of v_h on both sides of every edge.

    Returns (points (E,q,2), normals (E,2), side0 (E,q), side1 (E,q) or 0 on
    boundary edges, rule).
    """
    mesh = space.mesh
    er = edge_rule(degree)
    p = mesh.vertices
    a = p[mesh.edges[:, 0]]
    t = p[mesh.edges[:, 1]] - a
    x = a[:, None, :] + er.points[None, :, None] * t[:, None, :]
    n = mesh.edge_normals()
    sides = []
    for s in (0, 1):
        K = mesh.edge_triangles[:, s]
        has = K >= 0
        dn = np.zeros(x.shape[:2])
        if np.any(has):
            x0, _, _, Jinv = mesh.jacobians(K[has])
            xh = np.einsum("cij,cqj->cqi", Jinv, x[has] - x0[:, None, :])
            g = space.evaluate(coeffs, K[has], xh)[1]
            dn[has] = np.einsum("cqd,cd->cq", g, n[has])
        sides.append(dn)
    return x, n, sides[0], sides[1], er


def jump_seminorm_sq(space, coeffs, exact_grad=None, degree=None):
    """sum_F h_F^-1 ||[grad e . n]||_F^2 with e = exact - v_h (exact C^1)."""
    mesh = space.mesh
    degree = 2 * space.order + 4 if degree is None else degree
    x, n, s0, s1, er = _edge_traces(space, coeffs, degree)
    bnd = mesh.boundary_edges
    jump = s0 - s1
    if exact_grad is not None:
        gex = _vec(exact_grad, x[..., 0], x[..., 1])
        jump = np.where(bnd[:, None], np.einsum("eqd,ed->eq", gex, n) - s0, -jump)
    # ||.||_F^2 = h_F * sum_q w_q (.)^2, times h_F^-1
    return float(np.einsum("q,eq->", er.weights, jump ** 2))


def discrete_h2_seminorm(space, coeffs, exact_grad=None, exact_hess=None, degree=None):
    """Broken Hessian norm plus h_F^-1 weighted normal-derivative jumps."""
    hess = hessian_error(space, coeffs, exact_hess, degree)
    return math.sqrt(hess ** 2 + jump_seminorm_sq(space, coeffs, exact_grad, degree))


# quadratic-form matrices ------------------------------------------------------

def _cell_matrix(space, form, degree):
    mesh = space.mesh
    rule = triangle_rule(degree)
    rows, cols, vals = [], [], []
    for cells in _chunks(mesh.num_triangles):
        _, _, det, _ = mesh.jacobians(cells)
        wq = rule.weights[None, :] * np.abs(det)[:, None]
        local = form(space.tabulate(cells, rule.xy), wq)
        d = space.cell_dofs[cells]
        nl = d.shape[1]
        rows.append(np.repeat(d, nl, axis=1).ravel())
        cols.append(np.tile(d, (1, nl)).ravel())
        vals.append(local.ravel())
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(space.ndofs, space.ndofs)).tocsr()
    A.sum_duplicates()
    return A


def mass_matrix(space, degree=None):
    degree = 2 * space.order if degree is None else degree
    if space.family == "lagrange":
        return _cell_matrix(space, lambda t, w: np.einsum("cq,cqj,cqi->cij", w, t[0], t[0]), degree)
    return _cell_matrix(space, lambda t, w: np.einsum("cq,cqjd,cqid->cij", w, t[0], t[0]), degree)


def stiffness_matrix(space, degree=None):
    degree = 2 * space.order if degree is None else degree
    return _cell_matrix(space, lambda t, w: np.einsum("cq,cqjd,cqid->cij", w, t[1], t[1]), degree)


def hessian_matrix(space, degree=None):
    degree = 2 * space.order if degree is None else degree
    return _cell_matrix(space, lambda t, w: np.einsum("cq,cqjab,cqiab->cij", w, t[2], t[2]), degree)


def laplacian_matrix(space, degree=None):
    degree = 2 * space.order if degree is None else degree

    def form(t, w):
        lap = np.trace(t[2], axis1=-2, axis2=-1)
        return np.einsum("cq,cqj,cqi->cij", w, lap, lap)

    return _cell_matrix(space, form, degree)


def hdiv_matrix(space, degree=None):
    """Gram matrix of the H(div) inner product on a vector space."""
    degree = 2 * space.order if degree is None else degree

    def form(t, w):
        return (np.einsum("cq,cqjd,cqid->cij", w, t[0], t[0])
                + np.einsum("cq,cqj,cqi->cij", w, t[1], t[1]))

    return _cell_matrix(space, form, degree)


def jump_matrix(space, degree=None):
    """Gram matrix of sum_F h_F^-1 <[grad v . n], [grad v' . n]>_F."""
    mesh = space.mesh
    degree = 2 * space.order if degree is None else degree
    er = edge_rule(degree)
    p = mesh.vertices
    a = p[mesh.edges[:, 0]]
    t = p[mesh.edges[:, 1]] - a
    x = a[:, None, :] + er.points[None, :, None] * t[:, None, :]
    n = mesh.edge_normals()
    ne, nl = mesh.num_edges, space.local_dim
    blocks, dofs = [], []
    for s, sign in ((0, 1.0), (1, -1.0)):
        K = mesh.edge_triangles[:, s]
        has = K >= 0
        vals = np.zeros((ne, len(er), nl))
        d = np.zeros((ne, nl), dtype=np.int64)
        if np.any(has):
            x0, _, _, Jinv = mesh.jacobians(K[has])
            xh = np.einsum("cij,cqj->cqi", Jinv, x[has] - x0[:, None, :])
            g = space.tabulate(K[has], xh)[1]
            vals[has] = sign * np.einsum("cqnd,cd->cqn", g, n[has])
            d[has] = space.cell_dofs[K[has]]
        blocks.append(vals)
        dofs.append(d)
    vals = np.concatenate(blocks, axis=2)
    d = np.concatenate(dofs, axis=1)
    local = np.einsum("q,eqj,eqi->eij", er.weights, vals, vals)
    m = 2 * nl
    A = sp.coo_matrix((local.ravel(), (np.repeat(d, m, axis=1).ravel(),
                                       np.tile(d, (1, m)).ravel())),
                      shape=(space.ndofs, space.ndofs)).tocsr()
    A.sum_duplicates()
    return A


def discrete_h2_matrix(space, degree=None):
    return (hessian_matrix(space, degree) + jump_matrix(space, degree)).tocsr()


# stability probe --------------------------------------------------------------

class StabilityProbe:
    """Ratio (||v||_1^2 + |v|_{2,h}^2) / (||Lap v||_h^2 + jumps) on V_h."""

    def __init__(self, space):
        self.space = space
        J = jump_matrix(space)
        self.lhs = (mass_matrix(space) + stiffness_matrix(space)
                    + hessian_matrix(space) + J).tocsr()
        self.rhs = (laplacian_matrix(space) + J).tocsr()

    def ratio(self, v):
        v = np.asarray(v, float)
        den = float(v @ (self.rhs @ v))
        num = float(v @ (self.lhs @ v))
        if den <= 1e-28:
            if num > 1e-24:
                raise ArithmeticError(f"stability violated: LHS {num:.3e} with RHS {den:.3e}")
            return 0.0
        return num / den


def stability_ratio(space, v):
    """LHS/RHS of the discrete H^2 stability inequality for v in V_h."""
    return StabilityProbe(space).ratio(v)


# reports and orders -----------------------------------------------------------

@dataclass
class ErrorReport:
    """Errors of one level. ``hdiv_w`` is the broken ||div e_w||."""

    h: float
    l2_u: float
    h1_semi_u: float
    l2_w: float
    hdiv_w: float
    broken_h1_of_grad_u: float
    discrete_h2: float = float("nan")

    TABLE_FIELDS = ("l2_u", "h1_semi_u", "l2_w", "hdiv_w", "broken_h1_of_grad_u")

    def table_values(self):
        return [getattr(self, k) for k in self.TABLE_FIELDS]

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def error_report(W, V, w_h, u_h, exact, degree=None):
    """Errors against a manufactured field.

    ``exact`` provides ``value``, ``grad``, ``hess`` and ``laplacian``
    callables of (x, y).
    """
    h1 = h1_semi_error(V, u_h, exact.grad, degree)
    hs = hessian_error(V, u_h, exact.hess, degree)
    jump = jump_seminorm_sq(V, u_h, exact.grad)
    return ErrorReport(
        h=V.mesh.h,
        l2_u=l2_error(V, u_h, exact.value, degree),
        h1_semi_u=h1,
        l2_w=l2_error(W, w_h, exact.grad, degree),
        hdiv_w=div_error(W, w_h, exact.laplacian, degree),
        broken_h1_of_grad_u=math.hypot(h1, hs),
        discrete_h2=math.sqrt(hs ** 2 + jump),
    )


def reference_error_report(coarse, fine, degree=None):
    """Errors of a coarse solution against a fine one on a nested mesh.

    ``coarse`` and ``fine`` are ``(W, V, w, u)`` tuples. The coarse fields are
    evaluated at quadrature points of the fine triangles (each fine triangle
    lies inside one coarse triangle, found by locating its centroid) and
    the squared differences are integrated on the fine mesh.
    """
    Wc, Vc, wc, uc = coarse
    Wf, Vf, wf, uf = fine
    cmesh, fmesh = Vc.mesh, Vf.mesh
    rule = triangle_rule(_degree(Vc, degree))
    parent, _ = cmesh.locate_points(fmesh.centroids())
    acc = np.zeros(5)
    for cells in _chunks(fmesh.num_triangles):
        _, _, det, _ = fmesh.jacobians(cells)
        wq = rule.weights[None, :] * np.abs(det)[:, None]
        x = fmesh.map_points(rule.xy, cells)
        pc = parent[cells]
        x0, _, _, Jinv = cmesh.jacobians(pc)
        xh = np.einsum("cij,cqj->cqi", Jinv, x - x0[:, None, :])
        u1, g1, h1 = Vf.evaluate(uf, cells, rule.xy)
        u0, g0, h0 = Vc.evaluate(uc, pc, xh)
        w1, d1, _ = Wf.evaluate(wf, cells, rule.xy)
        w0, d0, _ = Wc.evaluate(wc, pc, xh)
        acc += [np.sum(wq * (u1 - u0) ** 2),
                np.sum(wq * np.sum((g1 - g0) ** 2, -1)),
                np.sum(wq * np.sum((w1 - w0) ** 2, -1)),
                np.sum(wq * (d1 - d0) ** 2),
                np.sum(wq * np.sum((h1 - h0) ** 2, (-2, -1)))]
    e = np.sqrt(acc)
    return ErrorReport(h=cmesh.h, l2_u=e[0], h1_semi_u=e[1], l2_w=e[2], hdiv_w=e[3],
                       broken_h1_of_grad_u=math.hypot(e[1], e[4]))


def eoc(hs, errors):
    """Observed orders log(e_{i-1}/e_i) / log(h_{i-1}/h_i), one per pair.

    A pair with a nonpositive error gives ``nan``.
    """
    hs = np.asarray(hs, float)
    errors = np.asarray(errors, float)
    if len(hs) != len(errors):
        raise ValueError("h and error lists differ in length")
    if np.any(np.diff(hs) >= 0):
        raise ValueError("mesh sizes must be strictly decreasing")
    out = np.full(max(len(hs) - 1, 0), np.nan)
    for i in range(1, len(hs)):
        if errors[i - 1] > 0 and errors[i] > 0:
            out[i - 1] = math.log(errors[i - 1] / errors[i]) / math.log(hs[i - 1] / hs[i])
    return out
