"""The discrete gradient/jump operator, its adjoints and the quadratic
subproblem solver.

Dual vector fields never appear as pointwise functions here: an RT function
is represented solely by its integral dof vector, laid out exactly like a
Y vector (cell block of per-node 2-vectors, then edge block).  Divergences
are obtained from the adjoint identity (u, div p) = -<p, Lambda u>, so no
reference-to-world vector transform is ever computed.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DgFunction",
    "GradJumpOperator",
    "InnerSolveError",
    "QuadraticSolver",
    "assemble_lambda",
    "pairing",
    "divergence",
    "lumped_zero_mask",
    "riesz",
    "riesz_inverse",
    "inner_y",
    "inner_ystar",
    "assemble_quadratic_solver",
]


class DgFunction:
    """A DG_r function: its space and the nodal coefficient vector."""

    def __init__(self, space, coeffs=None):
        if coeffs is None:
            coeffs = np.zeros(space.dim_dg)
        coeffs = np.asarray(coeffs, dtype=float).ravel()
        if coeffs.size != space.dim_dg:
            raise ValueError(
                f"coefficient vector has length {coeffs.size}, "
                f"expected {space.dim_dg}"
            )
        self.space = space
        self.coeffs = coeffs

    @property
    def degree(self):
        return self.space.degree

    @property
    def mesh(self):
        return self.space.mesh

    def copy(self):
        return DgFunction(self.space, self.coeffs.copy())

    def eval(self, points, cells=None):
        """Point values of the function; points outside the mesh yield 0.

        ``cells`` may carry precomputed owner cell indices (-1 = outside).
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if cells is None:
            cells = self.space.mesh.locate_points(points)
        cells = np.asarray(cells)
        inside = cells >= 0
        out = np.zeros(len(points))
        if inside.any():
            cid = cells[inside]
            ref = self.space.mesh.reference_coords(cid, points[inside])
            basis = self.space.layout.eval_cell(ref)
            u = self.space.cell_matrix(self.coeffs)
            out[inside] = np.einsum("nk,nk->n", basis, u[cid])
        return out


class InnerSolveError(RuntimeError):
    """Inner linear solve failed to reach its tolerance."""

    def __init__(self, residual, iterations):
        super().__init__(
            f"inner solver stalled at relative residual {residual:.3e} "
            f"after {iterations} iterations"
        )
        self.residual = residual
        self.iterations = iterations


class GradJumpOperator:
    """Maps DG_r coefficients to the Y layout: per-cell gradient samples at
    the P_{r-1} nodes and scalar jumps at the edge Lagrange nodes.

    Jumps are coefficient gathers (edge lattice nodes coincide with cell
    lattice nodes), so constants are annihilated exactly.  Cell gradients
    are computed in reference coordinates first and mapped by the
    inverse-transposed Jacobian, which again kills constants exactly.
    """

    def __init__(self, space):
        self.space = space
        mesh = space.mesh
        lay = space.layout
        dofs = space.dofs
        n_k = dofs.n_cell_basis
        n_j = dofs.n_edge_basis

        # facet-node lookup: (facet, orientation index) -> cell node ids
        table = np.empty((3, 2, n_j), dtype=np.int64)
        for f in range(3):
            table[f, 0] = lay.facet_node_ids(f, -1)
            table[f, 1] = lay.facet_node_ids(f, +1)

        oi_plus = (mesh.edge_orientations[:, 0] + 1) // 2
        oi_minus = (mesh.edge_orientations[:, 1] + 1) // 2
        local_plus = table[mesh.edge_facets[:, 0], oi_plus]
        local_minus = table[mesh.edge_facets[:, 1], oi_minus]
        self.jump_plus_cols = mesh.edge_cells[:, [0]] * n_k + local_plus
        self.jump_minus_cols = mesh.edge_cells[:, [1]] * n_k + local_minus

        self._matrix = None

    # -- application ---------------------------------------------------------

    def apply(self, coeffs):
        """Lambda u as a flat Y vector."""
        space = self.space
        out = space.new_y()
        u = np.asarray(coeffs).ravel()
        if space.dofs.n_sub_basis:
            U = space.cell_matrix(u)
            gref = np.einsum("ikd,tk->tid", space.layout.grad_at_sub, U)
            np.einsum("tcd,tid->tic", space.mesh.inv_jacobian_t, gref,
                      out=space.y_cell_view(out))
        space.y_edge_view(out)[:] = u[self.jump_plus_cols] - u[self.jump_minus_cols]
        return out

    def apply_transpose(self, y):
        """Lambda^T applied to a flat Y vector (plain transpose, no weights)."""
        space = self.space
        out = np.zeros(space.dim_dg)
        if space.dofs.n_sub_basis:
            g = space.y_cell_view(y)
            z = np.einsum("tcd,tic->tid", space.mesh.inv_jacobian_t, g)
            out += np.einsum("ikd,tid->tk", space.layout.grad_at_sub, z).ravel()
        ye = space.y_edge_view(y)
        np.add.at(out, self.jump_plus_cols, ye)
        np.subtract.at(out, self.jump_minus_cols, ye)
        return out

    @property
    def matrix(self):
        """Assembled sparse Lambda (dim_y x dim_dg), used for the quadratic
        forms Lambda^T W Lambda."""
        if self._matrix is None:
            self._matrix = self._assemble()
        return self._matrix

    def _assemble(self):
        space = self.space
        mesh = space.mesh
        dofs = space.dofs
        n_k = dofs.n_cell_basis
        n_i = dofs.n_sub_basis
        n_j = dofs.n_edge_basis
        n_t = dofs.num_cells
        n_e = dofs.num_edges

        rows = []
        cols = []
        data = []
        if n_i:
            vals = np.einsum("tcd,ikd->tick",
                             mesh.inv_jacobian_t, space.layout.grad_at_sub)
            t_idx, i_idx, c_idx, k_idx = np.meshgrid(
                np.arange(n_t), np.arange(n_i), np.arange(2), np.arange(n_k),
                indexing="ij")
            rows.append(((t_idx * n_i + i_idx) * 2 + c_idx).ravel())
            cols.append((t_idx * n_k + k_idx).ravel())
            data.append(vals.ravel())

        base = dofs.dim_y_cell
        erows = base + np.arange(n_e * n_j)
        rows += [erows, erows]
        cols += [self.jump_plus_cols.ravel(), self.jump_minus_cols.ravel()]
        data += [np.ones(n_e * n_j), -np.ones(n_e * n_j)]

        mat = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(dofs.dim_y, dofs.dim_dg),
        )
        return mat.tocsr()


def assemble_lambda(space) -> GradJumpOperator:
    return GradJumpOperator(space)


def pairing(p, d):
    """Duality pairing <p, d> of an RT dof vector with a Y vector; exact at
    the coefficient level because the dofs are dual to the nodal bases."""
    return float(np.asarray(p).ravel() @ np.asarray(d).ravel())


def divergence(op, p, lumped=False):
    """div p as a DG_r coefficient vector, defined through the adjoint
    identity (u, div p)_inner = -<p, Lambda u> for all u.

    ``lumped`` selects the lumped DG inner product; entries whose lumped
    weight C_{T,k} vanishes (degree-2 vertex nodes) are set to zero, see
    :attr:`GradJumpOperator.lumped_zero_mask` of the space weights.
    """
    space = op.space
    w = -op.matrix.T.dot(np.asarray(p).ravel())
    if not lumped:
        return space.apply_mass_inverse(w)
    c = space.lumped_weights
    zero = c == 0.0
    out = np.zeros_like(w)
    np.divide(w, c, out=out, where=~zero)
    return out


def lumped_zero_mask(space):
    """Flat DG mask of dofs with vanishing lumped weight (flagged entries of
    the lumped divergence)."""
    return space.lumped_weights == 0.0


def riesz(space, d, scale):
    """Riesz map Y -> Y*: N_{T,i}(p) = scale*c_{T,i}*d_{T,i},
    N_{E,j}(p) = c_{E,j}*d_{E,j}."""
    return space.y_weight_vector(scale) * np.asarray(d).ravel()


def riesz_inverse(space, p, scale):
    w = space.y_weight_vector(scale)
    if (w == 0.0).any():
        raise ZeroDivisionError("zero quadrature weight in Riesz inverse")
    return np.asarray(p).ravel() / w


def inner_y(space, d, e, scale):
    """Lumped inner product on Y."""
    return float(np.asarray(d).ravel()
                 @ (space.y_weight_vector(scale) * np.asarray(e).ravel()))


def inner_ystar(space, p, q, scale):
    """Inner product on Y* induced by the Riesz map (diagonal weights
    1/(scale*c_{T,i}) and 1/c_{E,j})."""
    w = space.y_weight_vector(scale)
    return float(np.asarray(p).ravel() @ (np.asarray(q).ravel() / w))


class QuadraticSolver:
    """Solver for the u-subproblems (M_fid + lam * Lambda^T W Lambda) u = rhs.

    The fidelity block M_fid is the plain DG mass matrix restricted to the
    data cells, or the fully lumped diagonal lam*scale*C_{T,k} when
    ``lumped_fidelity`` is set.  The system is SPD and solved by
    preconditioned CG with a cell-block Jacobi preconditioner; a block
    Gauss-Seidel sweep solver is available as an alternative.
    """

    def __init__(self, space, grad_op, lam, scale, mask=None,
                 lumped_fidelity=False, tol=1e-8, max_iter=2000,
                 method="pcg"):
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        mesh = space.mesh
        if mask is None:
            mask = np.ones(mesh.num_cells, dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ValueError(
                "no data cells: the quadratic subproblem is singular on a "
                "fully masked mesh"
            )
        if lam == 0 and not mask.all():
            raise ValueError("lam = 0 requires data on every cell")
        if method not in ("pcg", "gauss-seidel"):
            raise ValueError(f"unknown inner solver {method!r}")
        self.space = space
        self.mask = mask
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter
        self.method = method

        n_t = mesh.num_cells
        n_k = space.dofs.n_cell_basis
        if lumped_fidelity:
            fid = sp.diags(lam * scale * space.lumped_weights)
        else:
            blocks = np.where(mask[:, None, None],
                              space.mass_ref[None] * mesh.det_jacobian[:, None, None],
                              0.0)
            fid = sp.bsr_matrix(
                (blocks, np.arange(n_t), np.arange(n_t + 1)),
                shape=(space.dim_dg, space.dim_dg),
            )
        self.matrix = fid.tocsr()
        if lam > 0:
            lmat = grad_op.matrix
            w = space.y_weight_vector(scale)
            self.matrix = (self.matrix
                           + lam * (lmat.T @ lmat.multiply(w[:, None]))).tocsr()
        self._build_preconditioner(n_t, n_k)

    def _build_preconditioner(self, n_t, n_k):
        bsr = self.matrix.tobsr(blocksize=(n_k, n_k))
        bsr.sort_indices()
        blocks = np.zeros((n_t, n_k, n_k))
        indptr, indices, data = bsr.indptr, bsr.indices, bsr.data
        for t in range(n_t):
            lo, hi = indptr[t], indptr[t + 1]
            pos = lo + np.searchsorted(indices[lo:hi], t)
            if pos < hi and indices[pos] == t:
                blocks[t] = data[pos]
        try:
            self._block_inv = np.linalg.inv(blocks)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise RuntimeError("singular cell block in preconditioner") from exc
        self._bsr = bsr

    def _precondition(self, r):
        n_t, n_k = self._block_inv.shape[0], self._block_inv.shape[1]
        return np.einsum("tkl,tl->tk",
                         self._block_inv, r.reshape(n_t, n_k)).ravel()

    def solve(self, rhs, x0=None):
        """Solve to relative residual <= tol; raises InnerSolveError on
        stagnation."""
        if self.method == "gauss-seidel":
            return self._solve_gauss_seidel(rhs, x0)
        return self._solve_pcg(rhs, x0)

    def _solve_pcg(self, rhs, x0):
        b = np.asarray(rhs).ravel()
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros_like(b)
        a = self.matrix
        x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
        r = b - a.dot(x)
        z = self._precondition(r)
        p = z.copy()
        rz = r @ z
        for _ in range(self.max_iter):
            res = np.linalg.norm(r) / bnorm
            if res <= self.tol:
                return x
            ap = a.dot(p)
            alpha = rz / (p @ ap)
            x += alpha * p
            r -= alpha * ap
            z = self._precondition(r)
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        res = np.linalg.norm(b - a.dot(x)) / bnorm
        if res <= self.tol:
            return x
        raise InnerSolveError(res, self.max_iter)

    def _solve_gauss_seidel(self, rhs, x0):
        b = np.asarray(rhs).ravel()
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros_like(b)
        bsr = self._bsr
        n_t, n_k = self._block_inv.shape[0], self._block_inv.shape[1]
        x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
        indptr, indices, data = bsr.indptr, bsr.indices, bsr.data
        for _ in range(self.max_iter):
            xb = x.reshape(n_t, n_k)
            for t in range(n_t):
                lo, hi = indptr[t], indptr[t + 1]
                acc = b[t * n_k:(t + 1) * n_k].copy()
                for ptr in range(lo, hi):
                    j = indices[ptr]
                    if j != t:
                        acc -= data[ptr] @ xb[j]
                xb[t] = self._block_inv[t] @ acc
            if np.linalg.norm(b - self.matrix.dot(x)) / bnorm <= self.tol:
                return x
        res = np.linalg.norm(b - self.matrix.dot(x)) / bnorm
        raise InnerSolveError(res, self.max_iter)


def assemble_quadratic_solver(space, grad_op, lam, scale, mask=None,
                              lumped_fidelity=False, tol=1e-8,
                              max_iter=2000, method="pcg") -> QuadraticSolver:
    return QuadraticSolver(space, grad_op, lam, scale, mask=mask,
                           lumped_fidelity=lumped_fidelity, tol=tol,
                           max_iter=max_iter, method=method)
