"""Primal/dual solvers for DTV-regularized denoising and inpainting.

All five algorithms share the same discrete ingredients: the gradient/jump
operator, the diagonal Riesz map between gradient samples and RT dofs, and
per-dof prox/projection kernels.  TV-L2 runs stop on the primal-dual gap
plus a feasibility cap; TV-L1 runs stop on iterate stagnation plus the
dual-constraint certificate |lambda g| <= 1.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dtv import ConstraintSetSpec, infeasibility, project_feasible, vector_norm
from .operators import DgFunction, QuadraticSolver, divergence
from .spaces import FeSpace

__all__ = [
    "ProblemSpec",
    "SolverParams",
    "SolverReport",
    "shrink",
    "prox_vector",
    "split_bregman_l2",
    "chambolle_pock_l2",
    "chambolle_projection_l2",
    "chambolle_pock_l1",
    "admm_l1",
    "solve",
    "primal_objective",
    "dual_objective",
    "gap",
    "huber_regularizer",
    "estimate_dual_hessian_norm",
    "estimate_operator_norm_sq",
    "ALGORITHMS",
]

DEFAULT_SCALE = {0: 1.0, 1: 1e-2, 2: 1e-2}
# denoising step sizes per degree (sigma, tau) for the Chambolle-Pock runs
CP_STEP_DEFAULTS = {0: (0.016, 0.1), 1: (0.025, 1e-2), 2: (0.03, 1e-3)}


def shrink(xi, gamma):
    """Soft thresholding max(|xi| - gamma, 0) * sgn(xi)."""
    xi = np.asarray(xi, dtype=float)
    return np.sign(xi) * np.maximum(np.abs(xi) - gamma, 0.0)


def prox_vector(xi, gamma, s=2):
    """Prox of gamma*|.|_s on (..., 2) vectors: componentwise shrink for
    s = 1, radial shrink for s = 2; gamma = 0 is the identity."""
    xi = np.asarray(xi, dtype=float)
    if gamma == 0:
        return xi.copy()
    if s == 1:
        return shrink(xi, gamma)
    if s == 2:
        norms = vector_norm(xi, 2)
        factor = np.zeros_like(norms)
        pos = norms > 0
        factor[pos] = np.maximum(norms[pos] - gamma, 0.0) / norms[pos]
        return xi * factor[..., None]
    raise ValueError(f"unsupported anisotropy s={s!r}")


@dataclass
class ProblemSpec:
    """One denoising/inpainting instance.

    ``f`` holds the data coefficients (a DgFunction or flat array); values
    on masked cells are ignored and treated as zero.  ``omega0`` flags the
    cells carrying data (None means all of them); its complement is the
    inpainting region.
    """

    mesh: object
    degree: int
    f: object
    omega0: object = None
    beta: float = 1e-3
    s: float = 2
    fidelity: str = "l2"
    huber_eps: float = 0.0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive (beta = 0 reduces to u = f "
                             "on the data region and is undefined elsewhere)")
        if self.s not in (1, 2):
            raise ValueError("solvers support s in {1, 2}")
        if self.fidelity not in ("l2", "l1"):
            raise ValueError(f"unknown fidelity {self.fidelity!r}")
        if self.fidelity == "l1" and self.degree not in (0, 1):
            raise ValueError(
                "l1 fidelity needs strictly positive lumped weights, which "
                "restricts the degree to 0 or 1"
            )
        if self.huber_eps < 0:
            raise ValueError("huber_eps must be nonnegative")
        if self.huber_eps > 0 and self.s != 2:
            raise ValueError("the Huber variant is defined for s = 2 only")
        if self.omega0 is not None:
            self.omega0 = np.asarray(self.omega0, dtype=bool)
            if self.omega0.shape != (self.mesh.num_cells,):
                raise ValueError("omega0 must be a per-cell boolean mask")
            if not self.omega0.any():
                raise ValueError("omega0 is empty: nothing pins the solution")


@dataclass
class SolverParams:
    """Algorithm parameters; unset entries fall back to per-degree defaults."""

    lam: float = None
    sigma: float = None
    tau: float = None
    theta: float = 1.0
    scale: float = None
    eps_rel: float = 1e-3
    infeas_cap: float = 1e-11
    max_iter: int = 5000
    change_tol: float = 1e-6
    cg_tol: float = 1e-8
    cg_max_iter: int = 2000
    inner_solver: str = "pcg"
    seed: int = 0

    def __post_init__(self):
        for name in ("lam", "sigma", "tau", "scale"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class SolverReport:
    algorithm: str
    iterations: int = 0
    seconds: float = 0.0
    objective: float = None
    gap: float = None
    infeasibility: float = None
    psnr: float = None
    converged: bool = False
    params: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "algorithm": self.algorithm,
            "params": self.params,
            "iterations": self.iterations,
            "seconds": self.seconds,
            "objective": self.objective,
            "gap": self.gap,
            "infeasibility": self.infeasibility,
            "psnr": self.psnr,
            "converged": self.converged,
            "trace": self.trace,
        }
        out.update(self.extras)
        return out

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)


class _Context:
    """Shared per-solve state: space, operator, masks and stopping data."""

    def __init__(self, prob: ProblemSpec, params: SolverParams, space=None):
        self.prob = prob
        self.params = params
        self.space = space if space is not None else FeSpace(prob.mesh,
                                                             prob.degree)
        if self.space.mesh is not prob.mesh or self.space.degree != prob.degree:
            raise ValueError("space does not match the problem spec")
        self.op = self.space.grad_jump()

        self.mask = (np.ones(prob.mesh.num_cells, dtype=bool)
                     if prob.omega0 is None else prob.omega0)
        n_k = self.space.dofs.n_cell_basis
        self.mask_dof = np.repeat(self.mask, n_k)

        f = prob.f.coeffs if isinstance(prob.f, DgFunction) else prob.f
        f = np.asarray(f, dtype=float).ravel()
        if f.size != self.space.dim_dg:
            raise ValueError("data vector does not match the DG space")
        self.f = np.where(self.mask_dof, f, 0.0)

        self.scale = (params.scale if params.scale is not None
                      else DEFAULT_SCALE[prob.degree])
        self.cs = ConstraintSetSpec(self.space, beta=prob.beta, s=prob.s,
                                    scale=self.scale)
        self.yw = self.space.y_weight_vector(self.scale)
        self.edge_norms = self.space.edge_normal_norms(prob.s)
        self.f_norm_sq = self.space.l2_norm_sq(self.f, mask=self.mask)
        self.gap_floor = 1e-13 * (1.0 + self.f_norm_sq)

        if prob.fidelity == "l2":
            u0 = DgFunction(self.space, self.f.copy())
            self.eta0 = gap(u0, self.space.new_y(), prob, context=self)
        else:
            self.eta0 = None

    # -- objective pieces --------------------------------------------------

    def regularizer(self, y):
        """beta * G(Lambda u) (Huberized when requested) from y = Lambda u."""
        if self.prob.huber_eps > 0:
            return self.prob.beta * huber_regularizer(self.space, y,
                                                      self.prob.huber_eps)
        space = self.space
        total = float((self.edge_norms[:, None] * space.edge_weights
                       * np.abs(space.y_edge_view(y))).sum())
        if space.dofs.n_sub_basis:
            total += float((space.cell_weights
                            * vector_norm(space.y_cell_view(y),
                                          self.prob.s)).sum())
        return self.prob.beta * total

    def fidelity_value(self, u):
        if self.prob.fidelity == "l2":
            return 0.5 * self.space.l2_norm_sq(u - self.f, mask=self.mask)
        res = np.abs(u - self.f) * self.space.lumped_weights
        return float(res[self.mask_dof].sum())

    def objective(self, u, y):
        return self.fidelity_value(u) + self.regularizer(y)

    def eta(self, u, p, y):
        """Primal-dual gap used for stopping (Huber-adjusted if needed)."""
        divp = divergence(self.op, p)
        val = (0.5 * self.space.l2_norm_sq(u - self.f, mask=self.mask)
               + 0.5 * self.space.l2_norm_sq(divp + self.f, mask=self.mask)
               - 0.5 * self.f_norm_sq
               + self.regularizer(y))
        if self.prob.huber_eps > 0:
            w = np.asarray(p).ravel()
            val += self.prob.huber_eps / (2.0 * self.prob.beta) \
                * float(w @ (w / self.yw))
        return val

    def l2_converged(self, eta_val, rho):
        tol = max(self.params.eps_rel * abs(self.eta0), self.gap_floor)
        return abs(eta_val) <= tol and rho <= self.params.infeas_cap

    def lumped_div_bound(self, p):
        """max |lambda g| certificate, i.e. the sup-norm of the lumped
        divergence over the data dofs (and over the masked dofs)."""
        v = np.abs(divergence(self.op, p, lumped=True))
        on = float(v[self.mask_dof].max()) if self.mask_dof.any() else 0.0
        off = float(v[~self.mask_dof].max()) if (~self.mask_dof).any() else 0.0
        return on, off

    def ystar_norm(self, p):
        p = np.asarray(p).ravel()
        return math.sqrt(p @ (p / self.yw))


def estimate_dual_hessian_norm(space, scale=1.0, iterations=60, seed=1):
    """Power-iteration estimate of sup ||div p||_{L2}^2 / ||p||_{Y*}^2, the
    Lipschitz constant of the dual-objective gradient; the projection
    iteration is stable for steps below its inverse."""
    op = space.grad_jump()
    w = space.y_weight_vector(scale)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(space.dim_y)
    lam = 0.0
    for _ in range(iterations):
        kv = -w * op.apply(divergence(op, v))
        lam = (v @ (kv / w)) / (v @ (v / w))
        kv_norm = math.sqrt(kv @ (kv / w))
        if kv_norm == 0.0:
            return 0.0
        v = kv / kv_norm
    return float(lam)


def estimate_operator_norm_sq(space, scale=1.0, iterations=60, seed=1):
    """Power-iteration estimate of sup ||Lambda u||_Y^2 / ||u||_{L2}^2; the
    Chambolle-Pock steps are stable when sigma * tau stays below its
    inverse."""
    op = space.grad_jump()
    w = space.y_weight_vector(scale)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(space.dim_dg)
    lam = 0.0
    for _ in range(iterations):
        kv = space.apply_mass_inverse(op.matrix.T.dot(w * op.apply(v)))
        lam = space.l2_inner(v, kv) / space.l2_norm_sq(v)
        kv_norm = math.sqrt(space.l2_norm_sq(kv))
        if kv_norm == 0.0:
            return 0.0
        v = kv / kv_norm
    return float(lam)


def huber_regularizer(space, y, eps):
    """G_eps(d): the s = 2 regularizer with the magnitude huberized, i.e.
    quadratic |d|^2/(2 eps) below |d| = eps and |d| - eps/2 above (the
    Moreau envelope of the absolute value; eps = 0 gives the plain sum)."""
    cell = space.y_cell_view(y)
    edge = space.y_edge_view(y)

    def branch(mag):
        if eps == 0:
            return mag
        return np.where(mag <= eps, mag * mag / (2.0 * eps), mag - 0.5 * eps)

    total = float((space.edge_weights * branch(np.abs(edge))).sum())
    if space.dofs.n_sub_basis:
        total += float((space.cell_weights * branch(vector_norm(cell, 2))).sum())
    return total


# -- objectives and gap --------------------------------------------------------


def primal_objective(u: DgFunction, prob: ProblemSpec, context=None):
    ctx = context if context is not None else _Context(prob, SolverParams(),
                                                       space=u.space)
    y = ctx.op.apply(u.coeffs)
    return ctx.objective(u.coeffs, y)


def dual_objective(p, prob: ProblemSpec, context=None, space=None):
    ctx = context if context is not None else _Context(prob, SolverParams(),
                                                       space=space)
    if prob.fidelity == "l2":
        divp = divergence(ctx.op, p)
        return 0.5 * ctx.space.l2_norm_sq(divp + ctx.f, mask=ctx.mask)
    divp = divergence(ctx.op, p, lumped=True)
    vals = divp * ctx.f * ctx.space.lumped_weights
    return float(vals[ctx.mask_dof].sum())


def gap(u: DgFunction, p, prob: ProblemSpec, context=None):
    """Primal-dual gap for the TV-L2 problem (sum of both objectives minus
    the constant data term); nonnegative for feasible p."""
    if prob.fidelity != "l2":
        raise ValueError("the primal-dual gap is defined for the l2 fidelity")
    ctx = context if context is not None else _Context(prob, SolverParams(),
                                                       space=u.space)
    y = ctx.op.apply(u.coeffs)
    return ctx.eta(u.coeffs, p, y)


# -- split Bregman ---------------------------------------------------------------


def split_bregman_l2(prob: ProblemSpec, params: SolverParams = None,
                     space=None, reference=None):
    """Split Bregman iteration for the TV-L2 problem (any mask, s in {1,2});
    the dual variable is recovered from the Bregman multipliers."""
    if prob.fidelity != "l2":
        raise ValueError("split_bregman_l2 expects the l2 fidelity")
    if prob.huber_eps > 0:
        raise ValueError("the Huber variant is implemented for the "
                         "Chambolle-Pock solvers")
    params = params or SolverParams()
    ctx = _Context(prob, params, space=space)
    space = ctx.space
    lam = params.lam if params.lam is not None else 1e-3
    qs = QuadraticSolver(space, ctx.op, lam, ctx.scale, mask=ctx.mask,
                         tol=params.cg_tol, max_iter=params.cg_max_iter,
                         method=params.inner_solver)

    u = ctx.f.copy()
    d = space.new_y()
    b = space.new_y()
    mf = space.apply_mass(ctx.f, mask=ctx.mask)
    lmat = ctx.op.matrix
    edge_thr = prob.beta * ctx.edge_norms[:, None] / lam
    cell_thr = prob.beta / (lam * ctx.scale)

    report = SolverReport(algorithm="split-bregman",
                          params=_echo_params(prob, params, lam=lam,
                                              scale=ctx.scale))
    start = time.perf_counter()
    p = space.new_y()
    for n in range(1, params.max_iter + 1):
        rhs = mf + lam * lmat.T.dot(ctx.yw * (d - b))
        u = qs.solve(rhs, x0=u)
        y = ctx.op.apply(u)
        gb = y + b
        space.y_edge_view(d)[:] = shrink(space.y_edge_view(gb), edge_thr)
        if space.dofs.n_sub_basis:
            space.y_cell_view(d)[:] = prox_vector(space.y_cell_view(gb),
                                                  cell_thr, prob.s)
        b = gb - d
        p = lam * ctx.yw * b

        eta_val = ctx.eta(u, p, y)
        rho = infeasibility(p, ctx.cs)
        _record(report, ctx, u, y, eta_val, rho)
        if ctx.l2_converged(eta_val, rho):
            report.converged = True
            break
    _finish(report, ctx, u, start, reference)
    return DgFunction(space, u), p, report


# -- Chambolle-Pock (TV-L2) -------------------------------------------------------


def chambolle_pock_l2(prob: ProblemSpec, params: SolverParams = None,
                      space=None, reference=None):
    """Primal-dual extragradient iteration for TV-L2 (supports masks and the
    Huber variant through `huber_eps`)."""
    if prob.fidelity != "l2":
        raise ValueError("chambolle_pock_l2 expects the l2 fidelity")
    params = params or SolverParams()
    ctx = _Context(prob, params, space=space)
    space = ctx.space
    defaults = CP_STEP_DEFAULTS[prob.degree]
    sigma = params.sigma if params.sigma is not None else defaults[0]
    tau = params.tau if params.tau is not None else defaults[1]
    huber = prob.huber_eps

    u = ctx.f.copy()
    p = space.new_y()
    p_bar = space.new_y()
    sigma_dof = np.where(ctx.mask_dof, sigma, 0.0)
    # prox of tau*(beta*G_eps)^*: the quadratic weight transports to
    # tau*eps/beta ahead of the projection onto beta*P
    huber_factor = 1.0 / (1.0 + tau * huber / prob.beta)

    report = SolverReport(algorithm="chambolle-pock",
                          params=_echo_params(prob, params, sigma=sigma,
                                              tau=tau, scale=ctx.scale))
    start = time.perf_counter()
    for n in range(1, params.max_iter + 1):
        v = divergence(ctx.op, p_bar)
        u = (u + sigma * v + sigma_dof * ctx.f) / (1.0 + sigma_dof)
        y = ctx.op.apply(u)
        q = ctx.yw * y
        candidate = p + tau * q
        if huber > 0:
            candidate = candidate * huber_factor
        p_new = project_feasible(candidate, ctx.cs)
        p_bar = p_new + params.theta * (p_new - p)
        p = p_new

        eta_val = ctx.eta(u, p, y)
        rho = infeasibility(p, ctx.cs)
        _record(report, ctx, u, y, eta_val, rho)
        if ctx.l2_converged(eta_val, rho):
            report.converged = True
            break
    _finish(report, ctx, u, start, reference)
    return DgFunction(space, u), p, report


# -- Chambolle projection (TV-L2, s = 2, full data) ---------------------------------


def chambolle_projection_l2(prob: ProblemSpec, params: SolverParams = None,
                            space=None, reference=None):
    """Semi-implicit dual projection iteration; requires s = 2 and data on
    every cell, and recovers u = div p + f at each step."""
    if prob.fidelity != "l2":
        raise ValueError("chambolle_projection_l2 expects the l2 fidelity")
    if prob.s != 2:
        raise ValueError("the projection algorithm is defined for s = 2")
    if prob.omega0 is not None and not prob.omega0.all():
        raise ValueError("the projection algorithm requires data on every cell")
    if prob.huber_eps > 0:
        raise ValueError("the Huber variant is implemented for the "
                         "Chambolle-Pock solvers")
    params = params or SolverParams()
    ctx = _Context(prob, params, space=space)
    space = ctx.space
    if params.tau is not None:
        tau = params.tau
    else:
        # stable default: just below the inverse dual Hessian norm in the
        # (unscaled) Y* metric the update is written in
        tau = 0.9 / estimate_dual_hessian_norm(space, scale=1.0)

    p = space.new_y()
    report = SolverReport(algorithm="chambolle-projection",
                          params=_echo_params(prob, params, tau=tau,
                                              scale=ctx.scale))
    start = time.perf_counter()
    u = ctx.f.copy()                       # = div p + f at p = 0
    y = ctx.op.apply(u)
    for n in range(1, params.max_iter + 1):
        jumps = space.y_edge_view(y)
        gamma_e = np.abs(jumps) / prob.beta
        pe = space.y_edge_view(p)
        pe[:] = (pe + tau * space.edge_weights * jumps) / (1.0 + tau * gamma_e)
        if space.dofs.n_sub_basis:
            grads = space.y_cell_view(y)
            gamma_t = vector_norm(grads, 2) / prob.beta
            pc = space.y_cell_view(p)
            pc[:] = ((pc + tau * space.cell_weights[..., None] * grads)
                     / (1.0 + tau * gamma_t)[..., None])

        u = divergence(ctx.op, p) + ctx.f
        y = ctx.op.apply(u)
        eta_val = ctx.eta(u, p, y)
        rho = infeasibility(p, ctx.cs)
        _record(report, ctx, u, y, eta_val, rho)
        if ctx.l2_converged(eta_val, rho):
            report.converged = True
            break
    _finish(report, ctx, u, start, reference)
    return DgFunction(space, u), p, report


# -- Chambolle-Pock (TV-L1) ----------------------------------------------------------


def chambolle_pock_l1(prob: ProblemSpec, params: SolverParams = None,
                      space=None, reference=None):
    """Primal-dual iteration for TV-L1: DG_r is identified with its dual via
    the lumped inner product, so the divergence step is lumped and the data
    prox is a per-dof shrink toward f."""
    if prob.fidelity != "l1":
        raise ValueError("chambolle_pock_l1 expects the l1 fidelity")
    params = params or SolverParams()
    ctx = _Context(prob, params, space=space)
    space = ctx.space
    defaults = CP_STEP_DEFAULTS[prob.degree]
    sigma = params.sigma if params.sigma is not None else defaults[0]
    tau = params.tau if params.tau is not None else defaults[1]
    huber = prob.huber_eps

    u = ctx.f.copy()
    p = space.new_y()
    p_bar = space.new_y()
    huber_factor = 1.0 / (1.0 + tau * huber / prob.beta)

    report = SolverReport(algorithm="cp-l1",
                          params=_echo_params(prob, params, sigma=sigma,
                                              tau=tau, scale=ctx.scale))
    start = time.perf_counter()
    stagnant = 0
    for n in range(1, params.max_iter + 1):
        v = divergence(ctx.op, p_bar, lumped=True)
        u_prev = u
        u_bar = u + sigma * v
        u = np.where(ctx.mask_dof,
                     ctx.f + shrink(u_bar - ctx.f, sigma),
                     u_bar)
        y = ctx.op.apply(u)
        q = ctx.yw * y
        candidate = p + tau * q
        if huber > 0:
            candidate = candidate * huber_factor
        p_prev = p
        p_new = project_feasible(candidate, ctx.cs)
        p_bar = p_new + params.theta * (p_new - p)
        p = p_new

        rho = infeasibility(p, ctx.cs)
        bound_on, _ = ctx.lumped_div_bound(p)
        change = max(_relative_change(ctx, u, u_prev),
                     _relative_change_ystar(ctx, p, p_prev))
        stagnant = stagnant + 1 if change <= params.change_tol else 0
        _record(report, ctx, u, y, None, rho,
                extras={"change": change, "multiplier_bound": bound_on})
        if stagnant >= 5 and bound_on <= 1.01 and rho <= params.infeas_cap:
            report.converged = True
            break
    report.extras["multiplier_bound"] = report.trace[-1]["multiplier_bound"]
    _finish(report, ctx, u, start, reference)
    return DgFunction(space, u), p, report


# -- ADMM (TV-L1) ----------------------------------------------------------------------


def admm_l1(prob: ProblemSpec, params: SolverParams = None, space=None,
            reference=None):
    """ADMM for TV-L1 with the double splitting d = Lambda u, e = u - f;
    the dual variable is recovered from the Bregman multipliers and the
    certificate max |lambda g| is reported."""
    if prob.fidelity != "l1":
        raise ValueError("admm_l1 expects the l1 fidelity")
    if prob.huber_eps > 0:
        raise ValueError("the Huber variant is implemented for the "
                         "Chambolle-Pock solvers")
    params = params or SolverParams()
    ctx = _Context(prob, params, space=space)
    space = ctx.space
    lam = params.lam if params.lam is not None else 1.0
    qs = QuadraticSolver(space, ctx.op, lam, ctx.scale, mask=ctx.mask,
                         lumped_fidelity=True, tol=params.cg_tol,
                         max_iter=params.cg_max_iter,
                         method=params.inner_solver)

    u = ctx.f.copy()
    d = space.new_y()
    b = space.new_y()
    e = np.zeros(space.dim_dg)
    g = np.zeros(space.dim_dg)
    lumped = space.lumped_weights
    lmat = ctx.op.matrix
    edge_thr = prob.beta * ctx.edge_norms[:, None] / lam
    cell_thr = prob.beta / (lam * ctx.scale)
    e_thr = 1.0 / (lam * ctx.scale)

    report = SolverReport(algorithm="admm-l1",
                          params=_echo_params(prob, params, lam=lam,
                                              scale=ctx.scale))
    start = time.perf_counter()
    stagnant = 0
    p = space.new_y()
    for n in range(1, params.max_iter + 1):
        rhs = lam * ctx.scale * lumped * (e + ctx.f - g) \
            + lam * lmat.T.dot(ctx.yw * (d - b))
        u_prev = u
        u = qs.solve(rhs, x0=u)
        y = ctx.op.apply(u)
        gb = y + b
        space.y_edge_view(d)[:] = shrink(space.y_edge_view(gb), edge_thr)
        if space.dofs.n_sub_basis:
            space.y_cell_view(d)[:] = prox_vector(space.y_cell_view(gb),
                                                  cell_thr, prob.s)
        z = u - ctx.f + g
        e = np.where(ctx.mask_dof, shrink(z, e_thr), z)
        b = gb - d
        g = g + u - ctx.f - e
        p_prev = p
        p = lam * ctx.yw * b

        rho = infeasibility(p, ctx.cs)
        lam_g = np.abs(lam * g)
        bound_on = float(lam_g[ctx.mask_dof].max())
        bound_off = (float(lam_g[~ctx.mask_dof].max())
                     if (~ctx.mask_dof).any() else 0.0)
        change = max(_relative_change(ctx, u, u_prev),
                     _relative_change_ystar(ctx, p, p_prev))
        stagnant = stagnant + 1 if change <= params.change_tol else 0
        _record(report, ctx, u, y, None, rho,
                extras={"change": change, "multiplier_bound": bound_on})
        if stagnant >= 5 and bound_on <= 1.01 and rho <= params.infeas_cap:
            report.converged = True
            break
    report.extras["multiplier_bound"] = bound_on
    report.extras["multiplier_bound_masked"] = bound_off
    _finish(report, ctx, u, start, reference)
    return DgFunction(space, u), p, report


ALGORITHMS = {
    "split-bregman": split_bregman_l2,
    "chambolle-pock": chambolle_pock_l2,
    "chambolle-projection": chambolle_projection_l2,
    "cp-l1": chambolle_pock_l1,
    "admm-l1": admm_l1,
}


def solve(prob: ProblemSpec, algorithm, params: SolverParams = None,
          space=None, reference=None):
    """Dispatch to one of the five algorithms by name."""
    try:
        fn = ALGORITHMS[algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}") from None
    return fn(prob, params=params, space=space, reference=reference)


# -- shared bookkeeping ------------------------------------------------------------


def _relative_change(ctx, u, u_prev):
    num = math.sqrt(ctx.space.l2_norm_sq(u - u_prev))
    den = math.sqrt(ctx.f_norm_sq) + 1e-300
    return num / den


def _relative_change_ystar(ctx, p, p_prev):
    diff = ctx.ystar_norm(np.asarray(p) - np.asarray(p_prev))
    return diff / max(ctx.ystar_norm(p), 1e-30)


def _record(report, ctx, u, y, eta_val, rho, extras=None):
    entry = {
        "objective": ctx.objective(u, y),
        "gap": eta_val,
        "infeasibility": rho,
    }
    if extras:
        entry.update(extras)
    report.trace.append(entry)
    report.iterations += 1
    report.objective = entry["objective"]
    if eta_val is not None:
        report.gap = eta_val
    report.infeasibility = rho


def _finish(report, ctx, u, start, reference):
    report.seconds = time.perf_counter() - start
    if reference is not None:
        from .metrics import psnr

        ref = reference.coeffs if isinstance(reference, DgFunction) else reference
        report.psnr = psnr(DgFunction(ctx.space, u),
                           DgFunction(ctx.space, np.asarray(ref, dtype=float)))


def _echo_params(prob, params, **resolved):
    out = {
        "beta": prob.beta,
        "s": prob.s,
        "degree": prob.degree,
        "fidelity": prob.fidelity,
        "huber_eps": prob.huber_eps,
        "theta": params.theta,
        "eps_rel": params.eps_rel,
        "infeas_cap": params.infeas_cap,
        "max_iter": params.max_iter,
        "seed": params.seed,
    }
    out.update(resolved)
    return out
