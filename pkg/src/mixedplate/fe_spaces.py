"""Continuous Lagrange and H(div)-conforming BDM spaces on triangles.

Lagrange reference bases are stored as coefficient matrices over monomials
on the reference triangle (0,0), (1,0), (0,1); BDM bases as coefficient
matrices over the vector nodal Lagrange basis of the same degree. Physical quantities follow
from the affine map x = x0 + J xhat:

* scalars: grad = J^-T grad_hat, Hessian = J^-T H_hat J^-1;
* BDM (contravariant Piola): w = J w_hat / detJ, div w = div_hat / detJ,
  grad div w = J^-T grad_hat(div_hat) / detJ.

BDM(m) degrees of freedom are normal moments against shifted Legendre
polynomials of degree 0..m on each edge, plus (m >= 2) interior moments
against the first-kind Nedelec space of degree m-1, i.e. [P_{m-2}]^2 plus
(-y, x) times homogeneous polynomials of degree m-2.
"""
from functools import lru_cache

import numpy as np
from scipy.special import eval_sh_legendre

from .mesh import LOCAL_EDGES
from .quadrature import edge_rule, triangle_rule

LAGRANGE_ORDERS = (1, 2, 3, 4)
BDM_ORDERS = (1, 2, 3)

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


# monomial frame ---------------------------------------------------------------

def monomial_exponents(m):
    return [(d - b, b) for d in range(m + 1) for b in range(d + 1)]


def _pw(x, k):
    if k < 0:
        return np.zeros_like(x)
    return x ** k


def tabulate_monomials(exps, pts):
    """Values, gradients and Hessians of x^a y^b at ``pts`` (..., 2)."""
    x, y = pts[..., 0], pts[..., 1]
    vals, grads, hess = [], [], []
    for a, b in exps:
        vals.append(_pw(x, a) * _pw(y, b))
        grads.append(np.stack([a * _pw(x, a - 1) * _pw(y, b),
                               b * _pw(x, a) * _pw(y, b - 1)], axis=-1))
        hxx = a * (a - 1) * _pw(x, a - 2) * _pw(y, b)
        hxy = a * b * _pw(x, a - 1) * _pw(y, b - 1)
        hyy = b * (b - 1) * _pw(x, a) * _pw(y, b - 2)
        hess.append(np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2))
    return np.stack(vals, -1), np.stack(grads, -2), np.stack(hess, -3)


# reference bases --------------------------------------------------------------

class LagrangeReference:
    """Nodal P_m basis on equispaced lattice points.

    Node order: 3 vertices, then m-1 nodes per local edge (running from the
    lower to the higher local vertex), then interior nodes.
    """

    family = "lagrange"

    def __init__(self, m):
        if m not in LAGRANGE_ORDERS:
            raise ValueError(f"unsupported Lagrange order {m}; choose from {LAGRANGE_ORDERS}")
        self.order = m
        self.exps = monomial_exponents(m)
        nodes = [REF_VERTICES[i] for i in range(3)]
        for a, b in LOCAL_EDGES:
            for k in range(1, m):
                nodes.append(REF_VERTICES[a] + k / m * (REF_VERTICES[b] - REF_VERTICES[a]))
        for j in range(1, m):
            for i in range(1, m - j):
                nodes.append(np.array([i / m, j / m]))
        self.nodes = np.array(nodes)
        self.dim = len(self.nodes)
        self.n_edge = m - 1
        self.n_interior = self.dim - 3 - 3 * self.n_edge
        vand, _, _ = tabulate_monomials(self.exps, self.nodes)
        self.vandermonde = vand
        self.coeffs = np.linalg.inv(vand)

    def tabulate(self, pts):
        v, g, h = tabulate_monomials(self.exps, pts)
        C = self.coeffs
        return (v @ C,
                np.einsum("...jd,jk->...kd", g, C),
                np.einsum("...jab,jk->...kab", h, C))


class BDMReference:
    """BDM(m) basis dual to edge normal moments and interior moments."""

    family = "bdm"

    def __init__(self, m):
        if m not in BDM_ORDERS:
            raise ValueError(f"unsupported BDM order {m}; choose from {BDM_ORDERS}")
        self.order = m
        # frame: nodal P_m in each component; far better conditioned than
        # raw monomials (cond 4e2 vs 5e4 for m = 3)
        self.scalar = LagrangeReference(m)
        self.dim = (m + 1) * (m + 2)
        self.n_edge = m + 1
        self.n_interior = m * m - 1
        self.vandermonde = self._dof_matrix()
        self.coeffs = np.linalg.inv(self.vandermonde)

    def _frame(self, pts):
        v, g, h = self.scalar.tabulate(pts)
        z = np.zeros_like(v)
        vals = np.concatenate([np.stack([v, z], -1), np.stack([z, v], -1)], axis=-2)
        div = np.concatenate([g[..., 0], g[..., 1]], axis=-1)
        gdiv = np.concatenate([h[..., 0, :], h[..., 1, :]], axis=-2)
        return vals, div, gdiv

    def interior_test_functions(self, pts):
        """Values (..., n_interior, 2) of the interior moment weights."""
        m = self.order
        out = []
        if m >= 2:
            lo = monomial_exponents(m - 2)
            v, _, _ = tabulate_monomials(lo, pts)
            z = np.zeros_like(v)
            out.append(np.stack([v, z], -1))
            out.append(np.stack([z, v], -1))
            top = [(m - 2 - b, b) for b in range(m - 1)]
            vt, _, _ = tabulate_monomials(top, pts)
            rot = np.stack([-pts[..., 1], pts[..., 0]], -1)
            out.append(vt[..., None] * rot[..., None, :])
        if not out:
            return np.zeros(pts.shape[:-1] + (0, 2))
        return np.concatenate(out, axis=-2)

    def dofs_of(self, field):
        """Apply the reference DOF functionals to ``field(pts) -> (..., k, 2)``."""
        m = self.order
        er = edge_rule(2 * m + 2)
        rows = []
        for a, b in LOCAL_EDGES:
            pa, pb = REF_VERTICES[a], REF_VERTICES[b]
            t = pb - pa
            nu = np.array([t[1], -t[0]])
            pts = pa + er.points[:, None] * t
            vals = field(pts) @ nu  # (q, k)
            for j in range(m + 1):
                rows.append((er.weights * eval_sh_legendre(j, er.points)) @ vals)
        if self.n_interior:
            tr = triangle_rule(2 * m)
            vals = field(tr.xy)  # (q, k, 2)
            q = self.interior_test_functions(tr.xy)  # (q, i, 2)
            rows.extend(np.einsum("q,qid,qkd->ik", tr.weights, q, vals))
        return np.array(rows)

    def _dof_matrix(self):
        return self.dofs_of(lambda p: self._frame(p)[0])

    def tabulate(self, pts):
        v, d, g = self._frame(pts)
        C = self.coeffs
        return (np.einsum("...jd,jk->...kd", v, C), d @ C,
                np.einsum("...jd,jk->...kd", g, C))


@lru_cache(maxsize=None)
def reference_basis(family, m):
    if family == "lagrange":
        return LagrangeReference(m)
    if family == "bdm":
        return BDMReference(m)
    raise ValueError(f"unknown family {family!r}")


# global spaces ----------------------------------------------------------------

def eval_vector_field(field, x, y):
    """Evaluate ``field(x, y)`` as an array of shape (2, *x.shape)."""
    return np.stack([np.broadcast_to(np.asarray(c, dtype=float), np.shape(x))
                     for c in field(x, y)])


class FeSpace:
    """A global finite element space on a mesh.

    Attributes
    ----------
    cell_dofs : (nt, nloc) int array, local-to-global DOF map
    signs : (nt, nloc) float array, orientation factors (BDM edge DOFs)
    boundary_dofs : sorted int array of DOFs whose functionals live on the boundary
    """

    def __init__(self, mesh, family, order):
        self.mesh = mesh
        self.family = family
        self.order = order

    @property
    def local_dim(self):
        return self.cell_dofs.shape[1]

    def _cells(self, cells):
        return np.arange(self.mesh.num_triangles) if cells is None else np.asarray(cells)

    def __repr__(self):
        return f"{type(self).__name__}(order={self.order}, ndofs={self.ndofs})"


class LagrangeSpace(FeSpace):
    """Continuous P_m; the boundary DOFs carry the H^1_0 constraint."""

    def __init__(self, mesh, order):
        super().__init__(mesh, "lagrange", order)
        ref = reference_basis("lagrange", order)
        self.ref = ref
        nv, ne, nt = mesh.num_vertices, mesh.num_edges, mesh.num_triangles
        ned, nint = ref.n_edge, ref.n_interior
        self.ndofs = nv + ned * ne + nint * nt

        dofs = [mesh.triangles]
        orient = mesh.edge_orientation()
        for i in range(3):
            e = mesh.tri_edges[:, i]
            k = np.arange(ned)
            pos = np.where(orient[:, i:i + 1] > 0, k, ned - 1 - k)
            dofs.append(nv + e[:, None] * ned + pos)
        dofs.append(nv + ned * ne + np.arange(nt)[:, None] * nint + np.arange(nint))
        self.cell_dofs = np.hstack(dofs).astype(np.int64)
        self.signs = np.ones(self.cell_dofs.shape)

        bd = [np.flatnonzero(mesh.boundary_vertices)]
        be = np.flatnonzero(mesh.boundary_edges)
        bd.append((nv + be[:, None] * ned + np.arange(ned)).ravel())
        self.boundary_dofs = np.unique(np.concatenate(bd)).astype(np.int64)

        pts = mesh.map_points(ref.nodes)
        self.dof_points = np.empty((self.ndofs, 2))
        self.dof_points[self.cell_dofs] = pts

    def tabulate(self, cells=None, ref_points=None):
        """Physical values, gradients and Hessians, shapes (c,q,n), (c,q,n,2),
        (c,q,n,2,2). ``ref_points`` is (q, 2) or per-cell (c, q, 2)."""
        cells = self._cells(cells)
        v, g, h = self.ref.tabulate(np.asarray(ref_points, dtype=float))
        _, _, _, Jinv = self.mesh.jacobians(cells)
        c = len(cells)
        if v.ndim == 2:
            v = np.broadcast_to(v, (c,) + v.shape)
            g = np.broadcast_to(g, (c,) + g.shape)
            h = np.broadcast_to(h, (c,) + h.shape)
        Ji = Jinv[:, None, None]
        grads = (g[..., None, :] @ Ji)[..., 0, :]
        hess = np.swapaxes(Ji, -1, -2) @ h @ Ji
        return v, grads, hess

    def interpolate(self, field):
        """Nodal interpolant of ``field(x, y)``."""
        x = self.dof_points
        return np.broadcast_to(np.asarray(field(x[:, 0], x[:, 1]), dtype=float),
                               (self.ndofs,)).copy()

    def set_dirichlet_values(self, field=None):
        dofs = self.boundary_dofs
        if field is None:
            return dofs, np.zeros(len(dofs))
        x = self.dof_points[dofs]
        return dofs, np.broadcast_to(np.asarray(field(x[:, 0], x[:, 1]), float),
                                     (len(dofs),)).copy()

    def evaluate(self, coeffs, cells=None, ref_points=None):
        """Values, gradients, Hessians of a discrete field."""
        cells = self._cells(cells)
        v, g, h = self.tabulate(cells, ref_points)
        c = coeffs[self.cell_dofs[cells]]
        return (np.einsum("cqn,cn->cq", v, c),
                np.einsum("cqnd,cn->cqd", g, c),
                np.einsum("cqnab,cn->cqab", h, c))


class VectorSpace(FeSpace):
    """Common interface of the spaces used for w = grad u."""

    def evaluate(self, coeffs, cells=None, ref_points=None):
        """Values (c,q,2), divergence (c,q) and grad-div (c,q,2)."""
        cells = self._cells(cells)
        v, d, g = self.tabulate(cells, ref_points)
        c = coeffs[self.cell_dofs[cells]]
        return (np.einsum("cqnd,cn->cqd", v, c), np.einsum("cqn,cn->cq", d, c),
                np.einsum("cqnd,cn->cqd", g, c))


class BDMSpace(VectorSpace):
    """H_0(div)-type BDM(m) space; boundary DOFs are the normal moments."""

    def __init__(self, mesh, order):
        super().__init__(mesh, "bdm", order)
        ref = reference_basis("bdm", order)
        self.ref = ref
        ne, nt = mesh.num_edges, mesh.num_triangles
        ned, nint = ref.n_edge, ref.n_interior
        self.ndofs = ned * ne + nint * nt

        orient = mesh.edge_orientation()
        j = np.arange(ned)
        flipped = np.where(j % 2 == 0, -1.0, 1.0)  # (-1)^(j+1)
        dofs, signs = [], []
        for i in range(3):
            e = mesh.tri_edges[:, i]
            dofs.append(e[:, None] * ned + j)
            signs.append(np.where(orient[:, i:i + 1] > 0, 1.0, flipped))
        dofs.append(ned * ne + np.arange(nt)[:, None] * nint + np.arange(nint))
        signs.append(np.ones((nt, nint)))
        self.cell_dofs = np.hstack(dofs).astype(np.int64)
        self.signs = np.hstack(signs)

        be = np.flatnonzero(mesh.boundary_edges)
        self.boundary_dofs = np.sort((be[:, None] * ned + j).ravel()).astype(np.int64)

    def tabulate(self, cells=None, ref_points=None):
        """Signed physical values (c,q,n,2), divergences (c,q,n) and
        gradients of divergence (c,q,n,2)."""
        cells = self._cells(cells)
        v, d, g = self.ref.tabulate(np.asarray(ref_points, dtype=float))
        _, J, det, Jinv = self.mesh.jacobians(cells)
        c = len(cells)
        if d.ndim == 2:
            v = np.broadcast_to(v, (c,) + v.shape)
            d = np.broadcast_to(d, (c,) + d.shape)
            g = np.broadcast_to(g, (c,) + g.shape)
        s = self.signs[cells] / det[:, None]
        vals = (v[..., None, :] @ np.swapaxes(J, -1, -2)[:, None, None])[..., 0, :]
        vals *= s[:, None, :, None]
        div = d * s[:, None, :]
        gdiv = (g[..., None, :] @ Jinv[:, None, None])[..., 0, :] * s[:, None, :, None]
        return vals, div, gdiv

    def _edge_moments(self, field, edges, degree):
        mesh = self.mesh
        p = mesh.vertices
        er = edge_rule(degree)
        a = p[mesh.edges[edges, 0]]
        t = p[mesh.edges[edges, 1]] - a
        nu = np.column_stack([t[:, 1], -t[:, 0]])
        x = a[:, None, :] + er.points[None, :, None] * t[:, None, :]
        f = eval_vector_field(field, x[..., 0], x[..., 1])  # (2, e, q)
        fn = f[0] * nu[:, 0:1] + f[1] * nu[:, 1:2]
        leg = np.array([eval_sh_legendre(j, er.points) for j in range(self.ref.n_edge)])
        return np.einsum("q,eq,jq->ej", er.weights, fn, leg)

    def interpolate(self, field, degree=None):
        """Canonical BDM interpolant of a vector field ``field(x, y) -> (2, ...)``."""
        m = self.order
        degree = 2 * m + 6 if degree is None else degree
        mesh = self.mesh
        coeffs = np.empty(self.ndofs)
        ned = self.ref.n_edge
        coeffs[: ned * mesh.num_edges] = self._edge_moments(
            field, np.arange(mesh.num_edges), degree).ravel()
        nint = self.ref.n_interior
        if nint:
            tr = triangle_rule(min(degree, 14))
            x = mesh.map_points(tr.xy)
            f = np.moveaxis(eval_vector_field(field, x[..., 0], x[..., 1]), 0, -1)
            _, _, det, Jinv = mesh.jacobians()
            fhat = det[:, None, None] * np.einsum("cij,cqj->cqi", Jinv, f)
            q = self.ref.interior_test_functions(tr.xy)
            mom = np.einsum("q,qid,cqd->ci", tr.weights, q, fhat)
            coeffs[ned * mesh.num_edges:] = mom.ravel()
        return coeffs

    def set_dirichlet_values(self, field=None, degree=None):
        """Normal-moment boundary DOFs of a vector field given on the boundary."""
        dofs = self.boundary_dofs
        if field is None:
            return dofs, np.zeros(len(dofs))
        degree = 2 * self.order + 6 if degree is None else degree
        be = np.flatnonzero(self.mesh.boundary_edges)
        return dofs, self._edge_moments(field, be, degree).ravel()


class VectorLagrangeSpace(VectorSpace):
    """[P_m]^2 with both components in H^1_0 on the boundary."""

    def __init__(self, mesh, order):
        super().__init__(mesh, "vlagrange", order)
        self.scalar = LagrangeSpace(mesh, order)
        ns = self.scalar.ndofs
        self.ndofs = 2 * ns
        self.cell_dofs = np.hstack([self.scalar.cell_dofs, self.scalar.cell_dofs + ns])
        self.signs = np.ones(self.cell_dofs.shape)
        b = self.scalar.boundary_dofs
        self.boundary_dofs = np.concatenate([b, b + ns])

    def tabulate(self, cells=None, ref_points=None):
        v, g, h = self.scalar.tabulate(cells, ref_points)
        z = np.zeros_like(v)
        vals = np.concatenate([np.stack([v, z], -1), np.stack([z, v], -1)], axis=2)
        div = np.concatenate([g[..., 0], g[..., 1]], axis=2)
        gdiv = np.concatenate([h[..., 0, :], h[..., 1, :]], axis=2)
        return vals, div, gdiv

    def interpolate(self, field):
        x = self.scalar.dof_points
        f = eval_vector_field(field, x[:, 0], x[:, 1])
        return np.concatenate([f[0], f[1]])

    def set_dirichlet_values(self, field=None):
        dofs = self.boundary_dofs
        if field is None:
            return dofs, np.zeros(len(dofs))
        return dofs, self.interpolate(field)[dofs]


def build_space(mesh, family, order):
    """Build ``"lagrange"``, ``"bdm"`` or ``"vlagrange"`` of the given order."""
    if family == "lagrange":
        return LagrangeSpace(mesh, order)
    if family == "bdm":
        return BDMSpace(mesh, order)
    if family == "vlagrange":
        if order not in LAGRANGE_ORDERS:
            raise ValueError(f"unsupported Lagrange order {order}")
        return VectorLagrangeSpace(mesh, order)
    raise ValueError(f"unknown family {family!r}")


def eval_scalar_basis(space, cells, ref_points):
    return space.tabulate(cells, ref_points)


def eval_hdiv_basis(space, cells, ref_points):
    return space.tabulate(cells, ref_points)


def interpolate(space, field):
    return space.interpolate(field)


def set_dirichlet_values(space, field=None):
    return space.set_dirichlet_values(field)
