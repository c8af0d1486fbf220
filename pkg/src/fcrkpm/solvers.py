"""Matrix-free solvers: static CG, nonlinear CG, transient stepping.

Dirichlet data is enforced strongly by coefficient freezing: the Dirichlet
nodes' coefficients are set to the boundary data once, and every solver
update is masked by chi_omega (active minus Dirichlet), so the frozen
values carry their stiffness contribution into every residual without a
separate right-hand-side lift.

The static solver is plain (un-preconditioned) conjugate gradient on the
masked subspace; each iteration costs one internal-force pipeline.  The
nonlinear solver is Polak-Ribiere nonlinear CG with a backtracking line
search on the residual norm.  Transient diffusion offers forward Euler with
the lumped mass and backward Euler with the consistent mass (inner masked
CG on the shifted operator).
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import LineSearchError
from .moment import MomentPrecomp
from .operators import (
    evaluate_field,
    internal_force,
    lumped_mass,
    mass_force,
    nonlinear_force_scalar,
)

__all__ = [
    "SolverConfig",
    "SolveReport",
    "TransientState",
    "solve_static_linear",
    "solve_static_nonlinear",
    "step_transient_diffusion",
    "run_transient",
    "explicit_stable_dt",
    "default_explicit_dt",
]


@dataclass
class SolverConfig:
    """Iteration and time-stepping controls.

    max_iter defaults to 10x the number of active unknowns.  For transient
    runs, dt=None selects the diffusion stability heuristic
    0.2 * min(dx)^2 / (2 * dim * nu) (forward Euler).
    """

    tol: float = 1e-12
    max_iter: int | None = None
    dt: float | None = None
    n_steps: int = 0
    scheme: str = "explicit-euler"
    nu: float = 1.0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("explicit-euler", "implicit-euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def iter_cap(self, n_active: int) -> int:
        return self.max_iter if self.max_iter is not None else 10 * n_active


@dataclass
class SolveReport:
    iterations: int
    residual: float
    wall_time: float
    converged: bool
    warnings: list[str] = field(default_factory=list)
    residual_history: list[float] | None = None


@dataclass
class TransientState:
    t: float
    d: np.ndarray
    step: int = 0


def default_explicit_dt(precomp: MomentPrecomp, nu: float = 1.0) -> float:
    return 0.2 * min(precomp.grid.spacing) ** 2 / (2 * precomp.dim * nu)


def _masked_cg(apply_op, rhs, d0, mask, tol, max_iter):
    """Conjugate gradient on the mask-projected operator.

    The residual and every search direction are multiplied by the 0/1 mask,
    so frozen coefficients never move; convergence is relative to the
    initial residual.
    """
    d = d0.copy()
    r = mask * (rhs - apply_op(d))
    r0 = float(np.linalg.norm(r))
    if r0 == 0.0:
        return d, 0, 0.0, True
    p = r.copy()
    rr = r0 * r0
    for it in range(1, max_iter + 1):
        Ap = mask * apply_op(p)
        pAp = float(np.dot(p.ravel(), Ap.ravel()))
        if pAp <= 0.0:
            return d, it, float(np.sqrt(rr)) / r0, False
        alpha = rr / pAp
        d = d + alpha * p
        r = r - alpha * Ap
        rr_new = float(np.dot(r.ravel(), r.ravel()))
        if np.sqrt(rr_new) / r0 <= tol:
            return d, it, np.sqrt(rr_new) / r0, True
        p = r + (rr_new / rr) * p
        rr = rr_new
    return d, max_iter, float(np.sqrt(rr)) / r0, False


def solve_static_linear(
    precomp: MomentPrecomp,
    chi_omega: np.ndarray,
    rhs: np.ndarray,
    dirichlet: np.ndarray | None = None,
    config: SolverConfig | None = None,
    provider=None,
    operator=None,
):
    """Solve the linear static system by masked conjugate gradient.

    Args:
        chi_omega: mask of the updated coefficients (active minus Dirichlet).
        rhs: assembled load, e.g. external plus boundary force.
        dirichlet: field carrying the boundary data on the Dirichlet nodes
            (zero elsewhere); kept frozen throughout.
        operator: optional replacement for the internal force (must be
            symmetric positive definite on the masked subspace).

    Returns:
        (d, u_h, SolveReport)
    """
    config = config or SolverConfig()
    grid = precomp.grid
    grid.check_field(rhs, "rhs")
    apply_op = operator or (lambda x: internal_force(x, precomp, provider))
    d0 = np.zeros(grid.shape) if dirichlet is None else dirichlet.copy()
    n_active = int(np.count_nonzero(chi_omega))
    start = time.perf_counter()
    d, iters, resid, converged = _masked_cg(
        apply_op, rhs, d0, chi_omega, config.tol, config.iter_cap(n_active)
    )
    wall = time.perf_counter() - start
    report = SolveReport(iters, resid, wall, converged)
    if not converged:
        report.warnings.append(
            f"CG stopped at relative residual {resid:.3e} after {iters} iterations"
        )
        warnings.warn(report.warnings[-1], stacklevel=2)
    u_h = evaluate_field(d, precomp, provider)
    return d, u_h, report


def solve_static_nonlinear(
    precomp: MomentPrecomp,
    chi_omega: np.ndarray,
    rhs: np.ndarray,
    nonlinearity,
    nonlinearity_prime=None,
    dirichlet: np.ndarray | None = None,
    config: SolverConfig | None = None,
    provider=None,
):
    """Polak-Ribiere nonlinear CG for f_int(d) + f_N(d) = rhs.

    Minimizes half the squared masked-residual norm; the descent directions
    are Polak-Ribiere updates of its gradient J(d) R(d) and the trial step
    is the Gauss-Newton length along the direction, safeguarded by a
    backtracking line search (Armijo factor 1e-4, halving, at most 40
    halvings) on the residual norm itself, so accepted steps decrease it
    monotonically.  Convergence is ||masked R|| / ||masked R_0|| <= tol.

    `nonlinearity` maps the evaluated field u_h to the pointwise term
    N(u_h) projected against the shape functions; `nonlinearity_prime` is
    its derivative, used for exact Jacobian products (without it a
    finite-difference product is used, whose rounding floor limits the
    reachable residual to about sqrt(machine eps)).

    Returns:
        (d, u_h, SolveReport)
    """
    config = config or SolverConfig()
    grid = precomp.grid

    def residual(dd):
        """Masked residual and the evaluated field it was built from."""
        u = evaluate_field(dd, precomp, provider)
        fN = nonlinear_force_scalar(nonlinearity(u), precomp, provider)
        R = chi_omega * (internal_force(dd, precomp, provider) + fN - rhs)
        return R, u

    d = np.zeros(grid.shape) if dirichlet is None else dirichlet.copy()

    # the products read the current iterate (d, u, R) from this scope
    if nonlinearity_prime is not None:

        def jacobian_product(v):
            dv = evaluate_field(v, precomp, provider)
            fNp = nonlinear_force_scalar(
                nonlinearity_prime(u) * dv, precomp, provider
            )
            return chi_omega * (internal_force(v, precomp, provider) + fNp)

    else:

        def jacobian_product(v):
            eps = np.sqrt(np.finfo(float).eps) * (
                1.0 + float(np.linalg.norm(d))
            ) / float(np.linalg.norm(v))
            return (residual(d + eps * v)[0] - R) / eps

    n_active = int(np.count_nonzero(chi_omega))
    max_iter = config.iter_cap(n_active)
    start = time.perf_counter()
    R, u = residual(d)
    R_norm0 = float(np.linalg.norm(R))
    if R_norm0 == 0.0:
        u_h = evaluate_field(d, precomp, provider)
        return d, u_h, SolveReport(0, 0.0, time.perf_counter() - start, True)
    R_norm = R_norm0
    history = [R_norm0]

    g = jacobian_product(R)  # merit gradient J R (J is symmetric)
    p = -g
    g_dot = float(np.vdot(g, g))
    iters = 0
    converged = False
    for iters in range(1, max_iter + 1):
        slope = float(np.vdot(g, p))  # directional derivative of the merit
        if slope >= 0.0:  # lost descent: restart on the gradient
            p = -g
            slope = -g_dot
        Jp = jacobian_product(p)
        Jp_sq = float(np.vdot(Jp, Jp))
        if Jp_sq == 0.0:
            break
        # Gauss-Newton length: minimizes ||R + alpha J p|| exactly
        alpha = -float(np.vdot(R, Jp)) / Jp_sq
        if alpha <= 0.0:
            alpha = g_dot / Jp_sq
        merit = 0.5 * R_norm * R_norm
        accepted = False
        for _ in range(41):
            d_try = d + alpha * p
            R_try, u_try = residual(d_try)
            R_try_norm = float(np.linalg.norm(R_try))
            merit_try = 0.5 * R_try_norm * R_try_norm
            if merit_try <= merit + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            raise LineSearchError(
                f"line search failed at iteration {iters} "
                f"(residual {R_norm / R_norm0:.3e})"
            )
        d, R, u, R_norm = d_try, R_try, u_try, R_try_norm
        history.append(R_norm)
        if R_norm / R_norm0 <= config.tol:
            converged = True
            break
        g_new = jacobian_product(R)
        beta = max(0.0, float(np.vdot(g_new, g_new - g)) / g_dot)
        p = -g_new + beta * p
        g = g_new
        g_dot = float(np.vdot(g, g))
    wall = time.perf_counter() - start
    report = SolveReport(
        iters, R_norm / R_norm0, wall, converged, residual_history=history
    )
    if not converged:
        report.warnings.append(
            f"nonlinear CG stopped at relative residual {report.residual:.3e}"
        )
        warnings.warn(report.warnings[-1], stacklevel=2)
    u_h = evaluate_field(d, precomp, provider)
    return d, u_h, report


def step_transient_diffusion(
    state: TransientState,
    precomp: MomentPrecomp,
    chi_omega: np.ndarray,
    rhs: np.ndarray,
    config: SolverConfig,
    lumped: np.ndarray | None = None,
    provider=None,
) -> TransientState:
    """Advance the diffusion system one time step.

    Forward Euler divides by the (precomputed) lumped mass on the active
    nodes; backward Euler solves the consistent-mass system by masked CG.
    Dirichlet coefficients stay frozen either way.

    Raises:
        FloatingPointError: the step produced NaN (reported with its index).
    """
    dt = config.dt if config.dt is not None else default_explicit_dt(
        precomp, config.nu
    )
    d = state.d
    if config.scheme == "explicit-euler":
        if lumped is None:
            raise ValueError("explicit stepping needs the lumped mass field")
        f = rhs - config.nu * internal_force(d, precomp, provider)
        upd = np.zeros(precomp.grid.shape)
        active = chi_omega > 0.5
        upd[active] = f[active] / lumped[active]
        d_new = d + dt * upd
    else:
        def apply_op(x):
            return mass_force(x, precomp, provider) / dt + config.nu * (
                internal_force(x, precomp, provider)
            )

        b = mass_force(d, precomp, provider) / dt + rhs
        n_active = int(np.count_nonzero(chi_omega))
        d_new, iters, resid, converged = _masked_cg(
            apply_op, b, d, chi_omega, config.tol, config.iter_cap(n_active)
        )
        if not converged:
            warnings.warn(
                f"implicit step {state.step + 1}: CG residual {resid:.3e}",
                stacklevel=2,
            )
    if np.any(np.isnan(d_new)):
        raise FloatingPointError(
            f"NaN detected at transient step {state.step + 1}"
        )
    return TransientState(t=state.t + dt, d=d_new, step=state.step + 1)


def run_transient(
    precomp: MomentPrecomp,
    chi_omega: np.ndarray,
    rhs: np.ndarray,
    config: SolverConfig,
    dirichlet: np.ndarray | None = None,
    provider=None,
    callback=None,
) -> TransientState:
    """March `config.n_steps` diffusion steps from the Dirichlet-lifted
    initial state; `callback(state)` is invoked after every step."""
    d0 = (
        np.zeros(precomp.grid.shape)
        if dirichlet is None
        else dirichlet.copy()
    )
    lumped = None
    if config.scheme == "explicit-euler":
        lumped = lumped_mass(precomp, provider)
    state = TransientState(t=0.0, d=d0)
    if callback is not None:
        callback(state)
    for _ in range(config.n_steps):
        state = step_transient_diffusion(
            state, precomp, chi_omega, rhs, config, lumped, provider
        )
        if callback is not None:
            callback(state)
    return state


def explicit_stable_dt(
    precomp: MomentPrecomp,
    chi_omega: np.ndarray,
    lumped: np.ndarray,
    nu: float = 1.0,
    iterations: int = 120,
    seed: int = 0,
    provider=None,
) -> float:
    """Forward-Euler stability limit 2 / (nu * lambda_max) with lambda_max
    of the lumped-mass-scaled stiffness estimated by power iteration."""
    rng = np.random.default_rng(seed)
    active = chi_omega > 0.5
    z = chi_omega * rng.standard_normal(precomp.grid.shape)
    z /= np.linalg.norm(z)
    lam = 1.0
    for _ in range(iterations):
        w = np.zeros(precomp.grid.shape)
        f = internal_force(z, precomp, provider)
        w[active] = f[active] / lumped[active]
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            break
        z = w / lam
    return 2.0 / (nu * lam)
