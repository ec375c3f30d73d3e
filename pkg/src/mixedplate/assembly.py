"""Element-wise assembly of the stabilized mixed biharmonic form.

Unknowns are stacked as ``[w | u]`` with w in a vector space (BDM or vector
Lagrange) and u in a scalar Lagrange space. On each triangle K the form is

    (k div w, div eta) + (grad(k div w), eta - grad v)
    + theta (w - grad u, grad(k div eta))
    + tau / h_K^2 (k (w - grad u), eta - grad v)

with grad(k q) = q grad k + k grad q. Only triangle quadrature is used; no
integral over an edge is ever evaluated here.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .quadrature import assembly_degree, triangle_rule

CHUNK = 4096


@dataclass(frozen=True)
class Coefficient:
    """The plate coefficient kappa and its gradient as callables of (x, y)."""

    kappa: object
    grad_kappa: object

    @classmethod
    def constant(cls, value=1.0):
        value = float(value)
        return cls(lambda x, y: np.full(np.shape(x), value),
                   lambda x, y: (np.zeros(np.shape(x)), np.zeros(np.shape(x))))

    def evaluate(self, x, y):
        k = np.broadcast_to(np.asarray(self.kappa(x, y), float), np.shape(x))
        g = np.stack([np.broadcast_to(np.asarray(c, float), np.shape(x))
                      for c in self.grad_kappa(x, y)], axis=-1)
        if np.any(k <= 0):
            raise ValueError(f"coefficient is not positive (min {k.min():.3g})")
        return k, g


@dataclass(frozen=True)
class SchemeParams:
    theta: float = 1.0
    tau: float = 10.0
    allow_any_theta: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.allow_any_theta and self.theta not in (-1, 1):
            raise ValueError(f"theta must be -1 or 1, got {self.theta}")


@dataclass
class SparseSystem:
    """CSR matrix and right-hand side over stacked unknowns.

    ``offsets`` marks where each block starts; ``boundary_dofs`` lists the
    global indices that may be eliminated as Dirichlet data.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    offsets: tuple
    boundary_dofs: np.ndarray
    fixed_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    fixed_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def shape(self):
        return self.matrix.shape


def _chunks(n):
    for start in range(0, n, CHUNK):
        yield np.arange(start, min(start + CHUNK, n))


def _to_csr(rows, cols, vals, n):
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _scatter(rows, cols, vals, local, row_dofs, col_dofs):
    c, ni, nj = local.shape
    rows.append(np.repeat(row_dofs, nj, axis=1).ravel())
    cols.append(np.tile(col_dofs, (1, ni)).ravel())
    vals.append(local.ravel())


def _check_same_mesh(*spaces):
    mesh = spaces[0].mesh
    if any(s.mesh is not mesh for s in spaces[1:]):
        raise ValueError("spaces are defined on different meshes")
    return mesh


def assemble_biharmonic(W, V, coefficient, params, degree=None):
    """Assemble the mixed form over W x V; returns a CSR matrix.

    Rows are test functions (eta, v), columns trial functions (w, u), with W
    DOFs first.
    """
    mesh = _check_same_mesh(W, V)
    degree = assembly_degree(V.order) if degree is None else degree
    rule = triangle_rule(degree)
    theta, tau = params.theta, params.tau
    nW = W.ndofs
    n = nW + V.ndofs
    rows, cols, vals = [], [], []
    for cells in _chunks(mesh.num_triangles):
        _, _, det, _ = mesh.jacobians(cells)
        x = mesh.map_points(rule.xy, cells)
        k, gk = coefficient.evaluate(x[..., 0], x[..., 1])
        wq = rule.weights[None, :] * np.abs(det)[:, None]
        wk = wq * k
        stab = tau / mesh.h_K[cells] ** 2

        phi, div, gdiv = W.tabulate(cells, rule.xy)
        _, dpsi, _ = V.tabulate(cells, rule.xy)
        # grad(k div phi)
        G = gk[:, :, None, :] * div[..., None] + k[:, :, None, None] * gdiv

        A_ww = (np.einsum("cq,cqj,cqi->cij", wk, div, div)
                + np.einsum("cq,cqjd,cqid->cij", wq, G, phi)
                + theta * np.einsum("cq,cqjd,cqid->cij", wq, phi, G)
                + stab[:, None, None] * np.einsum("cq,cqjd,cqid->cij", wk, phi, phi))
        A_wu = -(theta * np.einsum("cq,cqjd,cqid->cij", wq, dpsi, G)
                 + stab[:, None, None] * np.einsum("cq,cqjd,cqid->cij", wk, dpsi, phi))
        A_uw = -(np.einsum("cq,cqjd,cqid->cij", wq, G, dpsi)
                 + stab[:, None, None] * np.einsum("cq,cqjd,cqid->cij", wk, phi, dpsi))
        A_uu = stab[:, None, None] * np.einsum("cq,cqjd,cqid->cij", wk, dpsi, dpsi)

        dw = W.cell_dofs[cells]
        du = V.cell_dofs[cells] + nW
        _scatter(rows, cols, vals, A_ww, dw, dw)
        _scatter(rows, cols, vals, A_wu, dw, du)
        _scatter(rows, cols, vals, A_uw, du, dw)
        _scatter(rows, cols, vals, A_uu, du, du)
    return _to_csr(rows, cols, vals, n)


def assemble_load(V, f, degree=None, offset=0, size=None):
    """Load vector (f, v) placed at ``offset`` in a vector of length ``size``."""
    mesh = V.mesh
    degree = assembly_degree(V.order) if degree is None else degree
    rule = triangle_rule(degree)
    size = offset + V.ndofs if size is None else size
    b = np.zeros(size)
    for cells in _chunks(mesh.num_triangles):
        _, _, det, _ = mesh.jacobians(cells)
        x = mesh.map_points(rule.xy, cells)
        fx = np.broadcast_to(np.asarray(f(x[..., 0], x[..., 1]), float), x.shape[:2])
        psi, _, _ = V.tabulate(cells, rule.xy)
        loc = np.einsum("cq,cq,cqi->ci", rule.weights[None, :] * np.abs(det)[:, None], fx, psi)
        np.add.at(b, V.cell_dofs[cells].ravel() + offset, loc.ravel())
    return b


def biharmonic_system(W, V, coefficient, params, f, degree=None):
    """Matrix plus load for the [w | u] unknowns."""
    A = assemble_biharmonic(W, V, coefficient, params, degree)
    b = assemble_load(V, f, degree, offset=W.ndofs, size=A.shape[0])
    bd = np.concatenate([W.boundary_dofs, V.boundary_dofs + W.ndofs])
    return SparseSystem(A, b, (0, W.ndofs, A.shape[0]), bd)


def apply_dirichlet(system, dofs, values):
    """Symmetric elimination of prescribed DOF values.

    Known values move to the right-hand side, their rows and columns are
    zeroed and a unit diagonal is placed; symmetry of the matrix is kept.
    """
    dofs = np.asarray(dofs, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    if dofs.shape != values.shape:
        raise ValueError("dofs and values differ in length")
    if not np.all(np.isin(dofs, system.boundary_dofs)):
        bad = dofs[~np.isin(dofs, system.boundary_dofs)]
        raise ValueError(f"Dirichlet data touches non-boundary DOFs, e.g. {bad[:5]}")
    A = system.matrix
    n = A.shape[0]
    x = np.zeros(n)
    x[dofs] = values
    rhs = system.rhs - A @ x
    keep = np.ones(n)
    keep[dofs] = 0.0
    D = sp.diags(keep)
    fixed = sp.diags(1.0 - keep)
    A = (D @ A @ D + fixed).tocsr()
    A.eliminate_zeros()
    A.sort_indices()
    rhs[dofs] = values
    return SparseSystem(A, rhs, system.offsets, system.boundary_dofs,
                        np.concatenate([system.fixed_dofs, dofs]),
                        np.concatenate([system.fixed_values, values]))


def cofactor_2x2(H):
    """Cofactor of symmetric 2x2 matrices, stacked on the last two axes."""
    H = np.asarray(H, dtype=float)
    C = np.empty_like(H)
    C[..., 0, 0] = H[..., 1, 1]
    C[..., 1, 1] = H[..., 0, 0]
    C[..., 0, 1] = -H[..., 1, 0]
    C[..., 1, 0] = -H[..., 0, 1]
    return C


def _scalar_block(V, local_form, degree):
    mesh = V.mesh
    rule = triangle_rule(degree)
    rows, cols, vals = [], [], []
    for cells in _chunks(mesh.num_triangles):
        _, _, det, _ = mesh.jacobians(cells)
        wq = rule.weights[None, :] * np.abs(det)[:, None]
        local = local_form(cells, rule, wq)
        d = V.cell_dofs[cells]
        _scatter(rows, cols, vals, local, d, d)
    return _to_csr(rows, cols, vals, V.ndofs)


def assemble_vk_coupling(V, xi, degree=None):
    """Block C(xi)_ij = (cof(D^2 xi) grad phi_j, grad phi_i), xi a V-coefficient vector."""
    degree = assembly_degree(V.order) if degree is None else degree

    def form(cells, rule, wq):
        _, g, h = V.tabulate(cells, rule.xy)
        hxi = np.einsum("cqnab,cn->cqab", h, xi[V.cell_dofs[cells]])
        cof = cofactor_2x2(hxi)
        return np.einsum("cq,cqab,cqjb,cqia->cij", wq, cof, g, g)

    return _scalar_block(V, form, degree)


def assemble_stiffness(V, degree=None):
    degree = assembly_degree(V.order) if degree is None else degree

    def form(cells, rule, wq):
        _, g, _ = V.tabulate(cells, rule.xy)
        return np.einsum("cq,cqjd,cqid->cij", wq, g, g)

    return _scalar_block(V, form, degree)


def assemble_membrane(V, p, degree=None):
    """Weak form of +p Laplacian(xi) tested with eta: -p (grad xi, grad eta)."""
    if p < 0:
        raise ValueError(f"membrane parameter must be nonnegative, got {p}")
    return (-float(p)) * assemble_stiffness(V, degree)


def vk_layout(W, V):
    """Offsets of the [u | xi | w | psi] blocks of the von Karman system."""
    nW, nV = W.ndofs, V.ndofs
    return (0, nW, nW + nV, 2 * nW + nV, 2 * (nW + nV))


def _embed(block, r0, c0, n):
    b = block.tocoo()
    return sp.coo_matrix((b.data, (b.row + r0, b.col + c0)), shape=(n, n))


def vk_system(B, C, M, W, V, f_load, g_load):
    """Monolithic matrix of one frozen-coefficient von Karman step.

    ``B`` is the biharmonic form over [w | u], ``C`` the cofactor block frozen
    at the previous iterate and ``M`` the membrane block (or None). Block
    rows/columns are ordered [u | xi | w | psi].
    """
    o = vk_layout(W, V)
    n = o[-1]
    parts = [_embed(B, o[0], o[0], n), _embed(B, o[2], o[2], n),
             _embed(C, o[1], o[3], n), _embed(-C, o[3], o[1], n)]
    if M is not None:
        parts.append(_embed(M, o[1], o[1], n))
    A = sum(p.tocsr() for p in parts)
    A.sum_duplicates()
    A.sort_indices()
    rhs = np.zeros(n)
    rhs[o[1]:o[2]] = f_load
    rhs[o[3]:o[4]] = g_load
    bd = np.concatenate([W.boundary_dofs, V.boundary_dofs + o[1],
                         W.boundary_dofs + o[2], V.boundary_dofs + o[3]])
    return SparseSystem(A, rhs, o, bd)
