"""The discrete TV seminorm, the exact TV of a DG function, the dual
constraint set with its projection, and duality witness/oracle machinery.

The seminorm interpolates |grad u|_s at the P_{r-1} cell nodes and the jump
magnitude at the edge Lagrange nodes and integrates the interpolants with
the positive Newton-Cotes weights.  Its value equals the maximum of
<p, Lambda u> over RT dof vectors p in the constraint set P (unit box/ball
bounds per dof), which is what the solvers exploit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .operators import DgFunction

__all__ = [
    "conjugate_exponent",
    "vector_norm",
    "dtv",
    "tv_exact",
    "ConstraintSetSpec",
    "project_feasible",
    "dual_witness",
    "dual_max_bruteforce",
    "infeasibility",
]

_PRIMAL_S = (1, 2, math.inf)


def conjugate_exponent(s):
    """Hoelder conjugate with the conventions 1* = inf and inf* = 1."""
    if s == 1:
        return math.inf
    if s == math.inf:
        return 1
    return s / (s - 1)


def _check_s(s, allowed=_PRIMAL_S):
    if s not in allowed:
        raise ValueError(f"anisotropy s={s!r} not supported here")


def vector_norm(vecs, s):
    """|.|_s of an (..., 2) array of vectors."""
    vecs = np.asarray(vecs)
    if s == 1:
        return np.abs(vecs).sum(axis=-1)
    if s == 2:
        return np.hypot(vecs[..., 0], vecs[..., 1])
    if s == math.inf:
        return np.abs(vecs).max(axis=-1)
    raise ValueError(f"unsupported anisotropy s={s!r}")


def dtv(u: DgFunction, s=2):
    """Discrete TV seminorm: nodal-quadrature value of the TV integrals."""
    _check_s(s)
    space = u.space
    y = space.grad_jump().apply(u.coeffs)
    total = float(
        (space.edge_normal_norms(s)[:, None] * space.edge_weights
         * np.abs(space.y_edge_view(y))).sum()
    )
    if space.dofs.n_sub_basis:
        total += float(
            (space.cell_weights * vector_norm(space.y_cell_view(y), s)).sum()
        )
    return total


# -- exact TV ----------------------------------------------------------------


def _duffy_rule(n):
    """Tensor Gauss rule collapsed onto the reference triangle, symmetrized
    over the three rotations; exact for polynomials up to degree 2n - 2."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    xi, eta = np.meshgrid(x, x, indexing="ij")
    wts = np.outer(w, w) * (1.0 - xi)
    px = xi.ravel()
    py = (eta * (1.0 - xi)).ravel()
    wq = wts.ravel()
    pts = np.column_stack([px, py])
    rot1 = np.column_stack([py, 1.0 - px - py])
    rot2 = np.column_stack([1.0 - px - py, px])
    return (np.vstack([pts, rot1, rot2]),
            np.concatenate([wq, wq, wq]) / 3.0)


_TRI_QUAD = None


def _triangle_quadrature():
    global _TRI_QUAD
    if _TRI_QUAD is None:
        _TRI_QUAD = _duffy_rule(6)  # degree 10
    return _TRI_QUAD


def _edge_abs_integral_affine(v0, v1):
    """Exact integral of |v| over [0, 1] for the affine v(t) = v0 + (v1-v0)t."""
    same = v0 * v1 >= 0
    mean = 0.5 * np.abs(v0 + v1)
    denom = np.where(same, 1.0, np.abs(v0 - v1))
    split = 0.5 * (v0 * v0 + v1 * v1) / denom
    return np.where(same, mean, split)


def _edge_abs_integral_quadratic(v0, vm, v1):
    """Exact integral of |v| over [0, 1] for the quadratic with nodal values
    (v0, vm, v1) at t = 0, 1/2, 1, by splitting at the interior roots."""
    a = 2.0 * v0 - 4.0 * vm + 2.0 * v1
    b = -3.0 * v0 + 4.0 * vm - v1
    c = v0

    r1 = np.zeros_like(a)
    r2 = np.zeros_like(a)
    quad = np.abs(a) > 1e-14 * (np.abs(b) + np.abs(c) + np.abs(a))
    with np.errstate(invalid="ignore", divide="ignore"):
        disc = b * b - 4.0 * a * c
        has_roots = quad & (disc > 0.0)
        sqrt_disc = np.sqrt(np.where(has_roots, disc, 0.0))
        q = -0.5 * (b + np.sign(b + (b == 0)) * sqrt_disc)
        ra = np.where(has_roots & (a != 0), q / np.where(a == 0, 1, a), 0.0)
        rb = np.where(has_roots & (q != 0), c / np.where(q == 0, 1, q), 0.0)
        lin = ~quad & (np.abs(b) > 0)
        rl = np.where(lin, -c / np.where(b == 0, 1, b), 0.0)
    r1 = np.where(has_roots, ra, np.where(lin, rl, 0.0))
    r2 = np.where(has_roots, rb, 0.0)
    r1 = np.clip(r1, 0.0, 1.0)
    r2 = np.clip(r2, 0.0, 1.0)

    ts = np.stack([np.zeros_like(a), np.minimum(r1, r2),
                   np.maximum(r1, r2), np.ones_like(a)], axis=-1)
    anti = a[..., None] * ts ** 3 / 3.0 + b[..., None] * ts ** 2 / 2.0 \
        + c[..., None] * ts
    return np.abs(np.diff(anti, axis=-1)).sum(axis=-1)


def tv_exact(u: DgFunction, s=2):
    """TV seminorm of the DG function itself.

    Edge contributions are integrated exactly by splitting |jump| at its
    roots; cell contributions are exact for r <= 1 (piecewise constant
    gradient) and use a degree-10 symmetric quadrature rule for r = 2.
    """
    _check_s(s)
    space = u.space
    r = space.degree
    y = space.grad_jump().apply(u.coeffs)
    jumps = space.y_edge_view(y)
    norms = space.edge_normal_norms(s)
    lengths = space.mesh.edge_lengths

    if r == 0:
        edge_total = float((np.abs(jumps[:, 0]) * norms * lengths).sum())
    elif r == 1:
        integral = _edge_abs_integral_affine(jumps[:, 0], jumps[:, 1])
        edge_total = float((integral * norms * lengths).sum())
    else:
        integral = _edge_abs_integral_quadratic(
            jumps[:, 0], jumps[:, 1], jumps[:, 2])
        edge_total = float((integral * norms * lengths).sum())

    if r == 0:
        cell_total = 0.0
    elif r == 1:
        grads = space.y_cell_view(y)[:, 0, :]
        cell_total = float((vector_norm(grads, s) * space.mesh.cell_areas).sum())
    else:
        pts, wts = _triangle_quadrature()
        gq = space.layout.eval_cell_grad(pts)            # (nq, n_k, 2)
        cu = space.cell_matrix(u.coeffs)
        gref = np.einsum("qkd,tk->tqd", gq, cu)
        gphys = np.einsum("tcd,tqd->tqc", space.mesh.inv_jacobian_t, gref)
        vals = vector_norm(gphys, s) @ wts               # per cell, ref measure
        cell_total = float((vals * space.mesh.det_jacobian).sum())
    return edge_total + cell_total


# -- constraint set -----------------------------------------------------------


@dataclass
class ConstraintSetSpec:
    """The scaled admissible set beta*P for RT dof vectors.

    Edge dofs are bounded by beta*|n_E|_s*c_{E,j}; each cell dof pair is
    bounded in the conjugate norm by beta*c_{T,i}.  ``scale`` is the Y
    scaling parameter entering the Y* metric (used by the infeasibility
    measure, not by the projection).
    """

    space: object
    beta: float
    s: float = 2
    scale: float = 1.0
    edge_bounds: np.ndarray = field(init=False)
    cell_bounds: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        _check_s(self.s)
        space = self.space
        self.edge_bounds = (self.beta * space.edge_normal_norms(self.s)[:, None]
                            * space.edge_weights)
        self.cell_bounds = self.beta * space.cell_weights


def _project_linf_ball(vecs, radius):
    return np.clip(vecs, -radius[..., None], radius[..., None])


def _project_l2_ball(vecs, radius):
    norms = np.hypot(vecs[..., 0], vecs[..., 1])
    factor = np.ones_like(norms)
    over = norms > radius
    factor[over] = radius[over] / norms[over]
    return vecs * factor[..., None]


def _project_l1_ball(vecs, radius):
    """Exact Euclidean projection of 2-vectors onto |.|_1 <= radius."""
    a = np.abs(vecs)
    inside = a.sum(axis=-1) <= radius
    hi = a.max(axis=-1)
    lo = a.min(axis=-1)
    # threshold: either only the larger component survives, or both do
    theta1 = hi - radius
    theta2 = 0.5 * (hi + lo - radius)
    theta = np.where(lo <= theta1, theta1, theta2)
    theta = np.where(inside, 0.0, np.maximum(theta, 0.0))
    shrunk = np.sign(vecs) * np.maximum(a - theta[..., None], 0.0)
    return np.where(inside[..., None], vecs, shrunk)


def project_feasible(p, spec: ConstraintSetSpec):
    """Project an RT dof vector onto beta*P (componentwise clip on edge
    dofs; conjugate-norm ball projection on each cell dof pair)."""
    space = spec.space
    out = np.array(p, dtype=float)
    edge = space.y_edge_view(out)
    np.clip(edge, -spec.edge_bounds, spec.edge_bounds, out=edge)
    if space.dofs.n_sub_basis:
        cell = space.y_cell_view(out)
        if spec.s == 2:
            cell[:] = _project_l2_ball(cell, spec.cell_bounds)
        elif spec.s == 1:
            cell[:] = _project_linf_ball(cell, spec.cell_bounds)
        else:
            cell[:] = _project_l1_ball(cell, spec.cell_bounds)
    return out


def infeasibility(p, spec: ConstraintSetSpec):
    """Squared Y*-distance-to-feasibility (hinge violations weighted by the
    inverse quadrature weights); zero iff p lies in beta*P."""
    if spec.s not in (1, 2):
        raise ValueError("infeasibility is defined for s in {1, 2}")
    space = spec.space
    edge = space.y_edge_view(np.asarray(p))
    viol = np.maximum(np.abs(edge) - spec.edge_bounds, 0.0)
    total = float((viol ** 2 / space.edge_weights).sum())
    if space.dofs.n_sub_basis:
        cell = space.y_cell_view(np.asarray(p))
        w = spec.scale * space.cell_weights
        if spec.s == 2:
            hinge = np.maximum(vector_norm(cell, 2) - spec.cell_bounds, 0.0)
            total += float((hinge ** 2 / w).sum())
        else:
            hinge = np.maximum(np.abs(cell) - spec.cell_bounds[..., None], 0.0)
            total += float(((hinge ** 2).sum(axis=-1) / w).sum())
    return total


# -- duality ------------------------------------------------------------------


def dual_witness(u: DgFunction, s=2):
    """The maximizer of <p, Lambda u> over the unit constraint set P:
    pairing it with Lambda u reproduces dtv(u, s) exactly."""
    _check_s(s)
    space = u.space
    y = space.grad_jump().apply(u.coeffs)
    p = space.new_y()

    jumps = space.y_edge_view(y)
    space.y_edge_view(p)[:] = (np.sign(jumps)
                               * space.edge_normal_norms(s)[:, None]
                               * space.edge_weights)

    if space.dofs.n_sub_basis:
        w = space.y_cell_view(y)
        c = space.cell_weights
        cell = space.y_cell_view(p)
        if s == math.inf:
            lead = np.argmax(np.abs(w), axis=-1)
            picked = np.take_along_axis(w, lead[..., None], axis=-1)[..., 0]
            vals = np.sign(picked) * c
            cell[:] = 0.0
            np.put_along_axis(cell, lead[..., None], vals[..., None], axis=-1)
        else:
            norms = vector_norm(w, s)
            safe = np.where(norms > 0, norms, 1.0)
            scale = c / safe ** (s - 1)
            cell[:] = (np.sign(w) * np.abs(w) ** (s - 1)
                       * np.where(norms > 0, scale, 0.0)[..., None])
    return p


def dual_max_bruteforce(u: DgFunction, s=2, n_samples=10000, seed=0,
                        include_witness=False):
    """Maximum of <p, Lambda u> over random feasible p (uniform per-dof on
    the constraint boxes, cell pairs projected onto the conjugate ball).
    Weak duality bounds the result by dtv(u, s); meant for small meshes."""
    _check_s(s)
    space = u.space
    if space.mesh.num_cells > 16:
        raise ValueError("brute-force oracle is restricted to small meshes")
    spec = ConstraintSetSpec(space, beta=1.0, s=s)
    rng = np.random.default_rng(seed)
    y = space.grad_jump().apply(u.coeffs)

    eb = spec.edge_bounds.ravel()
    edges = rng.uniform(-1.0, 1.0, size=(n_samples, eb.size)) * eb
    parts = []
    if space.dofs.n_sub_basis:
        cb = spec.cell_bounds.reshape(-1)
        cells = rng.uniform(-1.0, 1.0,
                            size=(n_samples, cb.size, 2)) * cb[None, :, None]
        if s == 2:
            cells = _project_l2_ball(cells, np.broadcast_to(cb, cells.shape[:2]))
        elif s == math.inf:
            cells = _project_l1_ball(cells, np.broadcast_to(cb, cells.shape[:2]))
        # s = 1: the conjugate ball is the box itself
        parts.append(cells.reshape(n_samples, -1))
    parts.append(edges)
    samples = np.concatenate(parts, axis=1)
    values = samples @ y
    best = float(values.max()) if n_samples else -math.inf
    if include_witness:
        best = max(best, float(dual_witness(u, s) @ y))
    return best
