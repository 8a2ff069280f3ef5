"""Two routes to the first nontrivial Neumann (p,q)-eigenpair.

Route A minimizes the Rayleigh quotient directly over the discrete zero
(q-1)-mean class with preconditioned projected descent.  Route B (q = 2
only) runs inverse power iteration: each step solves the p-Laplace problem
with the previous normalized iterate as source, recovers the multiplier
mu_n = ||z||_{L^2}^{-(p-1)} by p-homogeneity, and renormalizes.  Both the
multipliers mu_n and the energies ||w_{n+1}||^p are nonincreasing and
converge to a common eigenvalue.

The inner source problem is strictly convex on the zero-mean subspace and
is solved by damped Newton with sparse factorizations; the tight inner
residuals this affords keep the recorded mu_n sequence monotone to near
machine precision.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .discretization import (
    ScalarField,
    assembly,
    constraint_value,
    grad_norm_p,
    lq_norm,
    p_form_apply,
    project_zero_mean,
    q_form_apply,
    rayleigh_quotient,
)
from .geometry import Mesh

# Smoothing of the degenerate gradient weight (|g|^2 + eps^2)^((p-2)/2);
# the domains have unit diameter scale.
EPS_REGULARIZATION = 1e-10

_ARMIJO_FACTOR = 1e-4


class ConvergenceError(RuntimeError):
    """A solver failed to reach its tolerance; never silently accepted."""


@dataclass
class EigenPair:
    """Computed eigenvalue with its normalized eigenfunction and residuals."""

    lam: float
    u: ScalarField
    weak_residual: float
    constraint_residual: float
    iterations: int
    diagnostics: dict = field(default_factory=dict)


@dataclass
class IterationState:
    """One inverse-iteration step: normalized iterate, multiplier, energy."""

    w: ScalarField
    mu: float
    energy: float
    constraint_residual: float


def _sign_normalize(values: np.ndarray) -> np.ndarray:
    # -u is also an eigenfunction; make the largest-magnitude entry positive.
    peak = int(np.argmax(np.abs(values)))
    return values if values[peak] >= 0.0 else -values


def _project_residual(asm, vec: np.ndarray) -> np.ndarray:
    # Restrict a load functional to the zero-mean test space.
    return vec - asm.mass_vector * (vec.sum() / asm.volume)


def check_weak_residual(u: ScalarField, lam: float, p: float, q: float) -> float:
    """Relative norm of the weak-form defect over zero-mean test functions.

    Assembles r_j = <|grad u|^(p-2) grad u, grad phi_j>
    - lam ||u||_q^(p-q) int |u|^(q-2) u phi_j, projects onto the zero-mean
    test space, and returns ||r|| / ||lhs||.
    """
    asm = assembly(u.mesh)
    lhs = p_form_apply(u, p)
    rhs = lam * lq_norm(u, q) ** (p - q) * q_form_apply(u, q)
    num = np.linalg.norm(_project_residual(asm, lhs - rhs))
    den = np.linalg.norm(_project_residual(asm, lhs))
    if den == 0.0:
        return math.inf if num > 0.0 else 0.0
    return float(num / den)


def default_initial_field(mesh: Mesh) -> ScalarField:
    """Deterministic nonconstant start: x_n projected to zero mean."""
    asm = assembly(mesh)
    return ScalarField(mesh, asm.zero_mean(mesh.nodes[:, -1].copy()))


def _l2_norm(asm, values: np.ndarray) -> float:
    return float(np.sqrt(max(values @ (asm.mass @ values), 0.0)))


def _p_energy(asm, values: np.ndarray, p: float, eps: float, load: np.ndarray) -> float:
    g = asm.gradients(values)
    sq = np.einsum("ci,ci->c", g, g) + eps * eps
    return float(np.sum(asm.volumes * sq ** (p / 2.0)) / p - load @ values)


def solve_p_laplace_source(
    mesh: Mesh,
    p: float,
    f: ScalarField,
    tol: float = 1e-11,
    max_iter: int = 80,
    warm_start: ScalarField | None = None,
    eps: float | None = None,
) -> ScalarField:
    """Zero-mean minimizer of (1/p) int |grad v|^p - int f v.

    The source must have zero mean (pure-Neumann compatibility).  For p = 2
    this is a single factorized solve.  Otherwise damped Newton on the
    (eps-smoothed) convex energy runs until the dual norm of the energy
    gradient drops below ``tol`` relative to the dual norm of the load;
    strict convexity on the zero-mean subspace makes the minimizer unique.
    """
    if not p > 1.0:
        raise ValueError(f"requires p > 1, got p={p}")
    asm = assembly(mesh)
    load = asm.mass @ f.values
    total = float(load.sum())  # equals int f for P1 sources
    if abs(total) > 1e-9 * (np.abs(load).sum() + 1e-300):
        raise ValueError(
            f"source must have zero mean for a pure Neumann problem, "
            f"got int f = {total:.3e}"
        )
    if p == 2.0:
        return ScalarField(mesh, asm.zero_mean(asm.solve_neumann(load)))

    eps = EPS_REGULARIZATION if eps is None else eps
    scale = asm.dual_norm(load)
    if scale == 0.0:
        return ScalarField(mesh, np.zeros(mesh.num_nodes))

    if warm_start is not None:
        v = asm.zero_mean(warm_start.values.copy())
    else:
        # Scaled p=2 solution: exact minimizer along its own ray.
        v0 = asm.solve_neumann(load)
        energy = grad_norm_p(ScalarField(mesh, v0), p)
        pairing = load @ v0
        t = (pairing / energy) ** (1.0 / (p - 1.0)) if energy > 0.0 and pairing > 0.0 else 0.0
        v = asm.zero_mean(t * v0)

    phi = _p_energy(asm, v, p, eps, load)
    # Below this decrement the energy decrease is not representable in
    # float64, so the iterate is converged to working precision.
    def at_float_floor(decrement: float) -> bool:
        return decrement <= 64.0 * np.finfo(float).eps * (abs(phi) + 1e-300)

    for iteration in range(max_iter):
        grad_vec = p_form_apply(ScalarField(mesh, v), p, eps=eps) - load
        if asm.dual_norm(_project_residual(asm, grad_vec)) <= tol * scale:
            return ScalarField(mesh, v)
        g = asm.gradients(v)
        sq = np.einsum("ci,ci->c", g, g) + eps * eps
        w1 = sq ** ((p - 2.0) / 2.0)
        w2 = (p - 2.0) * sq ** ((p - 4.0) / 2.0)
        rank_rows = np.einsum("cik,ci->ck", asm.grads, g)  # d_c = G^T g
        hess = asm.weighted_stiffness(w1, w2, rank_rows)
        lu = asm.bordered_factorization(hess)
        direction = asm.bordered_solve(lu, -grad_vec)
        slope = float(grad_vec @ direction)
        if slope >= 0.0:  # numerically indefinite Hessian; fall back to descent
            direction = -asm.solve_neumann(grad_vec)
            slope = float(grad_vec @ direction)
        if at_float_floor(-slope):
            return ScalarField(mesh, v)
        t = 1.0
        for _ in range(60):
            candidate = v + t * direction
            phi_new = _p_energy(asm, candidate, p, eps, load)
            if phi_new <= phi + _ARMIJO_FACTOR * t * slope:
                break
            t *= 0.5
        else:
            raise ConvergenceError("line search failed in the p-Laplace solve")
        v = asm.zero_mean(candidate)
        phi = phi_new
    raise ConvergenceError(
        f"p-Laplace solve did not reach tol={tol:g} in {max_iter} Newton steps"
    )


def inverse_iteration(
    mesh: Mesh,
    p: float,
    w0: ScalarField | None = None,
    tol: float = 1e-8,
    max_iter: int = 500,
    residual_tol: float = 1e-6,
    inner_tol: float = 1e-11,
    q: float = 2.0,
) -> tuple[EigenPair, list[IterationState]]:
    """Inverse power iteration for the first nontrivial eigenpair (q = 2).

    Each step solves the p-Laplace problem with source w_n, recovers
    mu_n = ||z||_{L^2}^{-(p-1)} (exact by homogeneity of the p-form), and
    sets w_{n+1} = z/||z||.  Stops once the relative change of mu over
    three consecutive steps is below ``tol`` and the weak residual is below
    ``residual_tol``.  Returns the eigenpair and the full iteration trace.
    """
    if q != 2.0:
        raise ValueError("inverse iteration is formulated for q = 2 only")
    asm = assembly(mesh)
    start = w0 if w0 is not None else default_initial_field(mesh)
    w = asm.zero_mean(start.values.copy())
    norm = _l2_norm(asm, w)
    if norm == 0.0:
        raise ValueError("initial field must be nonzero after mean removal")
    w /= norm

    trace: list[IterationState] = []
    mus: list[float] = []
    energy_prev = grad_norm_p(ScalarField(mesh, w), p)
    resid = math.inf
    cres = math.inf
    for iteration in range(1, max_iter + 1):
        # Optimal rescaling of w makes the warm start feasible-monotone.
        theta = energy_prev ** (-1.0 / (p - 1.0)) if energy_prev > 0.0 else 1.0
        warm = ScalarField(mesh, theta * w)
        z = solve_p_laplace_source(
            mesh, p, ScalarField(mesh, w), tol=inner_tol, warm_start=warm
        )
        zv = asm.zero_mean(z.values)
        # Ray-optimal rescale: restores <A z, z> = <B w, z> exactly, which
        # keeps the mu/energy chain monotone under inexact inner solves.
        energy_z = grad_norm_p(ScalarField(mesh, zv), p)
        pairing = float(w @ (asm.mass @ zv))
        if energy_z > 0.0 and pairing > 0.0:
            zv = zv * (pairing / energy_z) ** (1.0 / (p - 1.0))
        s = _l2_norm(asm, zv)
        if s == 0.0:
            raise ConvergenceError("inner solve returned the zero field")
        mu = s ** (-(p - 1.0))
        w = zv / s
        field_w = ScalarField(mesh, w)
        energy_prev = grad_norm_p(field_w, p)
        cres = abs(constraint_value(field_w, 2.0))
        resid = check_weak_residual(field_w, energy_prev, p, 2.0)
        mus.append(mu)
        trace.append(
            IterationState(w=field_w, mu=mu, energy=energy_prev, constraint_residual=cres)
        )
        if len(mus) >= 3:
            recent = mus[-3:]
            drift = max(
                abs(recent[i + 1] - recent[i]) for i in range(len(recent) - 1)
            )
            if drift <= tol * abs(mu) and resid <= residual_tol:
                break
    else:
        raise ConvergenceError(
            f"inverse iteration did not converge in {max_iter} steps "
            f"(last weak residual {resid:.3e})"
        )

    values = _sign_normalize(w)
    u = ScalarField(mesh, values / lq_norm(ScalarField(mesh, values), 2.0))
    lam = rayleigh_quotient(u, p, 2.0)
    pair = EigenPair(
        lam=lam,
        u=u,
        weak_residual=check_weak_residual(u, lam, p, 2.0),
        constraint_residual=abs(constraint_value(u, 2.0)),
        iterations=iteration,
        diagnostics={"mu_final": mus[-1], "energy_final": energy_prev},
    )
    return pair, trace


def minimize_rayleigh(
    mesh: Mesh,
    p: float,
    q: float,
    u0: ScalarField | None = None,
    tol: float = 1e-6,
    max_iter: int = 5000,
) -> EigenPair:
    """Constrained Rayleigh-quotient minimization (route A).

    First-order projected descent: each step solves a linear Neumann
    problem for the quotient gradient (plain stiffness at p = 2, the
    lagged |grad u|^(p-2)-weighted stiffness otherwise), minimizes the
    re-projected quotient along the ray, and renormalizes.  Converged when
    the weak residual drops below ``tol``; stagnation raises instead of
    returning a non-stationary pair.
    """
    if not (p > 1.0 and q > 1.0):
        raise ValueError(f"requires p, q > 1, got p={p}, q={q}")
    asm = assembly(mesh)
    start = u0 if u0 is not None else default_initial_field(mesh)
    if float(np.max(start.values) - np.min(start.values)) == 0.0:
        raise ValueError("initial field must be nonconstant")
    eps = EPS_REGULARIZATION if p < 2.0 else 0.0

    def normalized(values: np.ndarray) -> np.ndarray:
        projected = project_zero_mean(ScalarField(mesh, values), q)
        return projected.values / lq_norm(projected, q)

    u = normalized(start.values)
    history: list[tuple[float, float, float]] = []
    recent_resids: deque = deque(maxlen=25)
    t_prev = 1.0
    resid = math.inf
    rayleigh = math.inf
    for iteration in range(1, max_iter + 1):
        field_u = ScalarField(mesh, u)
        rayleigh = grad_norm_p(field_u, p)  # ||u||_q = 1 after normalization
        kp = p_form_apply(field_u, p, eps=eps)
        mq = q_form_apply(field_u, q)
        defect = kp - rayleigh * mq
        num = np.linalg.norm(_project_residual(asm, defect))
        den = np.linalg.norm(_project_residual(asm, kp))
        resid = num / den if den > 0.0 else 0.0
        history.append((rayleigh, resid, abs(constraint_value(field_u, q))))
        if resid <= tol:
            break
        if (
            len(recent_resids) == recent_resids.maxlen
            and resid >= 0.97 * min(recent_resids)
        ):
            raise ConvergenceError(
                f"Rayleigh descent stagnated at residual {resid:.3e} "
                f"(tolerance {tol:g}) after {iteration} iterations"
            )
        recent_resids.append(resid)
        grad_r = p * defect
        if p == 2.0:
            direction = -asm.solve_neumann(grad_r)
        else:
            # Lagged-weight preconditioner, rebuilt each step: the plain
            # stiffness misjudges the p-energy curvature by |grad u|^(p-2),
            # which varies over orders of magnitude on cusp meshes and
            # strangles the step size; stale weights are nearly as bad.
            g = asm.gradients(u)
            sq = np.einsum("ci,ci->c", g, g)
            floor = 1e-12 * (float(np.mean(sq)) or 1.0)
            weights = (sq + floor) ** ((p - 2.0) / 2.0)
            lagged = asm.bordered_factorization(asm.weighted_stiffness(weights))
            direction = asm.bordered_solve(lagged, -grad_r)
        if float(grad_r @ direction) >= 0.0:
            direction = -asm.zero_mean(grad_r)
        # Unit M-norm direction: t becomes a rotation scale comparable
        # across iterations even on strongly anisotropic meshes.
        dir_scale = math.sqrt(max(direction @ (asm.mass @ direction), 0.0))
        if dir_scale == 0.0:
            break
        direction = direction / dir_scale

        def quotient_along(t: float) -> float:
            candidate = normalized(u + t * direction)
            return grad_norm_p(ScalarField(mesh, candidate), p)

        def residual_along(t: float) -> float:
            candidate = ScalarField(mesh, normalized(u + t * direction))
            value = grad_norm_p(candidate, p)
            lhs = p_form_apply(candidate, p, eps=eps)
            dd = lhs - value * q_form_apply(candidate, q)
            dn = np.linalg.norm(_project_residual(asm, lhs))
            return np.linalg.norm(_project_residual(asm, dd)) / dn if dn > 0.0 else 0.0

        # Find a descending step scale, widen while improving, then refine.
        # An Armijo-first step keeps the stiffest modes undamped, so the
        # minimum along the ray is bracketed instead.
        t = min(max(t_prev, 1e-8), 4.0)
        f_t = quotient_along(t)
        for _ in range(60):
            if f_t < rayleigh:
                break
            t *= 0.5
            f_t = quotient_along(t)
        best_t, best_f = t, f_t
        t_hi = t
        if f_t < rayleigh:
            for _ in range(40):
                t_hi *= 2.0
                f_hi = quotient_along(t_hi)
                if f_hi < best_f:
                    best_t, best_f = t_hi, f_hi
                else:
                    break
        refine = minimize_scalar(
            quotient_along,
            bounds=(0.0, t_hi),
            method="bounded",
            options={"xatol": 1e-3 * max(best_t, 1e-12)},
        )
        if float(refine.fun) < best_f:
            best_t, best_f = float(refine.x), float(refine.fun)
        if rayleigh - best_f <= 1e-12 * rayleigh:
            # The quotient is flat to machine precision along the ray (its
            # error is quadratic in the eigenvector error), so steer by the
            # first-order weak residual instead.
            polish = minimize_scalar(
                residual_along,
                bounds=(0.0, max(2.0 * best_t, 1e-8)),
                method="bounded",
                options={"xatol": 1e-3 * max(best_t, 1e-8)},
            )
            if float(polish.fun) < resid:
                best_t, best_f = float(polish.x), quotient_along(float(polish.x))
        if best_f <= rayleigh * (1.0 + 1e-14):
            u = normalized(u + best_t * direction)
            t_prev = best_t
    else:
        raise ConvergenceError(
            f"Rayleigh descent did not reach residual {tol:g} in {max_iter} "
            f"iterations (last residual {resid:.3e})"
        )

    values = _sign_normalize(u)
    field_u = ScalarField(mesh, values)
    lam = rayleigh_quotient(field_u, p, q)
    diagnostics: dict = {"history": history}
    if eps > 0.0:
        # Quotient recomputed with the smoothed weight at the final iterate.
        g = assembly(mesh).gradients(values)
        sq = np.einsum("ci,ci->c", g, g) + eps * eps
        reg_energy = float(np.sum(assembly(mesh).volumes * sq ** (p / 2.0)))
        diagnostics["lambda_regularized"] = reg_energy / lq_norm(field_u, q) ** p
    return EigenPair(
        lam=lam,
        u=field_u,
        weak_residual=check_weak_residual(field_u, lam, p, q),
        constraint_residual=abs(constraint_value(field_u, q)),
        iterations=iteration,
        diagnostics=diagnostics,
    )
