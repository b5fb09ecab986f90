"""Barzilai-Borwein shooting loop and the momentum-target relaxation.

One optimization step is: forward solve, backward sweep, reduced gradient,
control update u <- u - alpha g.  The problem is handed in as a callable
u -> (value, gradient, payload) so pendulum trajectories and beam grids run
through the identical loop, and the gradient the optimizer consumes is the
module-level one with nothing in between.

There is no line search: the first update uses a conservatively scaled
fallback step and every later one a Barzilai-Borwein quotient, which is
non-monotone by nature -- the objective may spike and recover.  A step cap
guards against blowup.
"""

import dataclasses

import numpy as np

from .beam import BeamStepFailure
from .numerics import NonConvergence, SingularJacobian


@dataclasses.dataclass
class ShootingSettings:
    """Loop controls; None entries are scaled from the first iterate.

    step_fallback defaults to 1e-3 (1+|u0|_inf)/(1+|g0|_inf) and the cap to
    1e3 times that; the gradient tolerance is relative, |g|_inf <= tol (1+|J|).
    bb_variant is "bb1", "bb2" or "alternate".
    """

    max_iterations: int = 200
    gradient_tolerance: float = 1e-6
    bb_variant: str = "bb1"
    step_fallback: float = None
    step_cap: float = None


@dataclasses.dataclass
class OptimizationResult:
    controls: np.ndarray
    trajectory: object
    objective_history: np.ndarray
    gradient_norm_history: np.ndarray
    iterations: int
    status: str


def bb_step(u_prev, u_curr, g_prev, g_curr, variant="bb1", fallback=1.0,
            cap=np.inf):
    """Barzilai-Borwein step from the last control/gradient pair.

    BB1 = (du.du)/(du.dg), BB2 = (du.dg)/(dg.dg); a non-finite or
    non-positive quotient falls back, and the result is clamped to cap.
    """
    du = np.ravel(np.asarray(u_curr, dtype=float) - u_prev)
    dg = np.ravel(np.asarray(g_curr, dtype=float) - g_prev)
    if variant == "bb1":
        den = du @ dg
        quot = (du @ du) / den if den != 0.0 else np.inf
    elif variant == "bb2":
        den = dg @ dg
        quot = (du @ dg) / den if den != 0.0 else np.inf
    else:
        raise ValueError(f"unknown BB variant {variant!r}")
    if not np.isfinite(quot) or quot <= 0.0:
        quot = fallback
    return min(quot, cap)


def _variant_for(settings, it):
    if settings.bb_variant == "alternate":
        return "bb1" if it % 2 == 1 else "bb2"
    return settings.bb_variant


def shoot(problem, u_init, settings=None, callback=None):
    """Minimize the reduced objective problem(u) -> (value, gradient, payload).

    Stops when |g|_inf <= gradient_tolerance (1+|J|) or after max_iterations
    evaluations.  A forward solve that stops converging ends the loop with
    status "forward_failure" (the returned controls are the last that did
    solve); a singular linear system reports "adjoint_failure".  callback,
    if given, is called as callback(it, u, value, gradient) after each
    evaluation.
    """
    settings = settings or ShootingSettings()
    u = np.asarray(u_init, dtype=float).copy()
    values, gnorms = [], []
    status = "max_iterations"
    u_eval = u
    payload = None
    u_prev = g_prev = None
    first_step = settings.step_fallback
    cap = settings.step_cap
    for it in range(settings.max_iterations):
        try:
            value, grad, payload_new = problem(u)
        except (NonConvergence, BeamStepFailure):
            status = "forward_failure"
            break
        except SingularJacobian:
            status = "adjoint_failure"
            break
        u_eval, payload = u, payload_new
        gnorm = float(np.max(np.abs(grad)))
        values.append(float(value))
        gnorms.append(gnorm)
        if callback is not None:
            callback(it, u, value, grad)
        if gnorm <= settings.gradient_tolerance * (1.0 + abs(value)):
            status = "converged"
            break
        if it == 0:
            if first_step is None:
                first_step = 1e-3 * (1.0 + np.max(np.abs(u))) / (1.0 + gnorm)
            if cap is None:
                cap = 1e3 * first_step
            alpha = first_step
        else:
            alpha = bb_step(u_prev, u, g_prev, grad, _variant_for(settings, it),
                            fallback=first_step, cap=cap)
        u_prev, g_prev = u, grad
        u = u - alpha * np.asarray(grad, dtype=float)
    return OptimizationResult(
        controls=u_eval,
        trajectory=payload,
        objective_history=np.array(values),
        gradient_norm_history=np.array(gnorms),
        iterations=len(values),
        status=status,
    )


def momentum_homotopy(solve, obj, u_init, beta=0.5, threshold=None,
                      max_outer=20):
    """Momentum-target relaxation around a shooting solver.

    solve(objective_variant, u_start) -> OptimizationResult whose trajectory
    carries p_N.  The first pass drops the momentum cost entirely (S_p = 0);
    afterwards the desired end momentum is pulled toward the real target by
    the convex rule p~ = (1-beta) p_N + beta p_target, so the interim target
    is never farther from the achieved momentum than the real one is.  Once
    the gap |p_N - p_target| falls under the threshold (default
    0.1 |p_target| + 1e-3) a final pass runs with the true objective.

    Returns (result, gaps) with the gap recorded after every pass.
    """
    target = np.atleast_1d(np.asarray(obj.p_target, dtype=float))
    if threshold is None:
        threshold = 0.1 * np.linalg.norm(target) + 1e-3
    relaxed = dataclasses.replace(obj, s_p=np.zeros_like(obj.s_p))
    result = solve(relaxed, np.asarray(u_init, dtype=float))
    gaps = []
    for _ in range(max_outer):
        gap = float(np.linalg.norm(result.trajectory.p_N - target))
        gaps.append(gap)
        if gap <= threshold:
            break
        interim = (1.0 - beta) * result.trajectory.p_N + beta * target
        result = solve(dataclasses.replace(obj, p_target=interim),
                       result.controls)
    result = solve(obj, result.controls)
    gaps.append(float(np.linalg.norm(result.trajectory.p_N - target)))
    return result, np.array(gaps)
