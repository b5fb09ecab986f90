"""Dense Newton solves, finite differences and grid-error utilities.

Everything here works on small numpy arrays (a handful up to a few hundred
unknowns); no sparsity, no cleverness.  The rest of the package funnels all
of its implicit solves through ``newton_solve`` so that tolerances and error
reporting stay in one place.
"""

import dataclasses

import numpy as np


class NonConvergence(RuntimeError):
    """Newton ran out of iterations before meeting the residual tolerance."""


class SingularJacobian(RuntimeError):
    """The linearized system inside a Newton step could not be solved."""


class GridMismatch(ValueError):
    """Two trajectories do not share time nodes, so no error can be formed."""


class DegenerateFit(ValueError):
    """Convergence-order fit is impossible for this error table."""


@dataclasses.dataclass(frozen=True)
class NewtonSettings:
    """Knobs for the damped Newton iteration.

    residual_tolerance is on the infinity norm of the residual.  step_damping
    of 1.0 means the plain (undamped) Newton update.  With line_search=True
    every update backtracks until the residual norm shrinks (taking the best
    candidate seen if it never does); plain Newton is the default because its
    uphill excursions are often what carry it over residual ridges.
    """

    residual_tolerance: float = 1e-10
    max_iterations: int = 50
    step_damping: float = 1.0
    line_search: bool = False

    def __post_init__(self):
        if not self.residual_tolerance > 0.0:
            raise ValueError("residual_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not 0.0 < self.step_damping <= 1.0:
            raise ValueError("step_damping must lie in (0, 1]")


DEFAULT_NEWTON = NewtonSettings()


def fd_jacobian(residual, x, eps=1e-7):
    """Forward-difference Jacobian of residual at x.

    Column j uses the step eps * (1 + |x_j|).  Meant as a fallback when no
    analytic Jacobian is available; accuracy is O(step).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    r0 = np.atleast_1d(np.asarray(residual(x), dtype=float))
    jac = np.empty((r0.size, x.size))
    for j in range(x.size):
        step_j = eps * (1.0 + abs(x[j]))
        xj = x.copy()
        xj[j] += step_j
        rj = np.atleast_1d(np.asarray(residual(xj), dtype=float))
        jac[:, j] = (rj - r0) / step_j
    return jac


def newton_solve(residual, jacobian, x0, settings=DEFAULT_NEWTON):
    """Solve residual(x) = 0 by (optionally damped) Newton iteration.

    residual maps R^k -> R^k.  jacobian maps R^k -> R^(k x k); pass None to
    fall back on a forward-difference Jacobian.  The residual is checked
    *before* each update, so an affine residual converges in exactly one
    undamped iteration.

    With settings.line_search each update backtracks (halving from
    step_damping) until the residual max-norm shrinks, falling back on the
    best candidate seen; near a root the first trial always wins, so the
    asymptotic behavior is plain Newton either way.

    Raises NonConvergence if the tolerance is not met within
    settings.max_iterations updates, and SingularJacobian if a linear solve
    fails.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if jacobian is None:
        jacobian = lambda z: fd_jacobian(residual, z)
    tol = settings.residual_tolerance
    r = np.atleast_1d(np.asarray(residual(x), dtype=float))
    r_norm = np.max(np.abs(r))
    for _ in range(settings.max_iterations):
        if r_norm <= tol:
            return x
        jac = np.atleast_2d(np.asarray(jacobian(x), dtype=float))
        try:
            dx = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(str(exc)) from exc
        if not settings.line_search:
            x = x + settings.step_damping * dx
            r = np.atleast_1d(np.asarray(residual(x), dtype=float))
            r_norm = np.max(np.abs(r))
            continue
        best = None
        scale = settings.step_damping
        for _cut in range(20):
            x_try = x + scale * dx
            r_try = np.atleast_1d(np.asarray(residual(x_try), dtype=float))
            norm_try = np.max(np.abs(r_try))
            if not np.isfinite(norm_try):
                norm_try = np.inf
            if best is None or norm_try < best[2]:
                best = (x_try, r_try, norm_try)
            if norm_try < r_norm:
                break
            scale *= 0.5
        x, r, r_norm = best
    if r_norm <= tol:
        return x
    raise NonConvergence(
        "residual %.3e after %d Newton iterations (tolerance %.1e)"
        % (r_norm, settings.max_iterations, tol)
    )


def fd_gradient(f, x, eps=1e-6):
    """Central finite-difference gradient of the scalar function f at x.

    Component i is (f(x + eps e_i) - f(x - eps e_i)) / (2 eps); the caller
    picks eps (scale it with the size of x for best accuracy).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    grad = np.empty(x.size)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += eps
        xm[i] -= eps
        grad[i] = (f(xp) - f(xm)) / (2.0 * eps)
    return grad


def _shared_nodes(coarse, reference):
    """Integer step ratio between two step sizes, or raise GridMismatch."""
    ratio = coarse.h / reference.h
    r = int(round(ratio))
    if r < 1 or abs(ratio - r) > 1e-9 * max(r, 1):
        raise GridMismatch(
            "step sizes %g and %g are not integer-ratio aligned" % (coarse.h, reference.h)
        )
    return r


def infinity_error(coarse, reference, field="q"):
    """Max absolute componentwise difference over the shared time nodes.

    Both arguments need .h and the requested array attribute ('q' for states
    sampled on nodes 0..N, 'lam' for adjoint values on 0..N-1).  The coarse
    step must be an integer multiple of the reference step and both series
    must cover the same horizon, otherwise GridMismatch is raised.
    """
    a = getattr(coarse, field)
    b = getattr(reference, field)
    if a is None or b is None:
        raise GridMismatch("missing '%s' series" % field)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    r = _shared_nodes(coarse, reference)
    if field == "q":
        # node series: lengths N+1, shared horizon means (len-1) scales by r
        if (len(b) - 1) != r * (len(a) - 1):
            raise GridMismatch("node counts %d and %d do not cover the same horizon"
                               % (len(a), len(b)))
        sub = b[::r]
    else:
        # interval series of length N: coarse node n sits at fine index n*r
        if len(b) != r * len(a):
            raise GridMismatch("interval counts %d and %d do not cover the same horizon"
                               % (len(a), len(b)))
        sub = b[:: r][: len(a)] if r > 1 else b
    return float(np.max(np.abs(a - sub)))


@dataclasses.dataclass(frozen=True)
class ErrorTable:
    """Step sizes (strictly decreasing) and the matching non-negative errors."""

    step_sizes: tuple
    errors: tuple
    label: str = ""

    def __post_init__(self):
        hs = tuple(float(h) for h in self.step_sizes)
        es = tuple(float(e) for e in self.errors)
        object.__setattr__(self, "step_sizes", hs)
        object.__setattr__(self, "errors", es)
        if len(hs) != len(es):
            raise ValueError("step_sizes and errors must have equal length")
        if any(h <= 0 for h in hs):
            raise ValueError("step sizes must be positive")
        if any(hs[i + 1] >= hs[i] for i in range(len(hs) - 1)):
            raise ValueError("step sizes must be strictly decreasing")
        if any(e < 0 for e in es):
            raise ValueError("errors must be non-negative")


def estimate_order(table):
    """Least-squares slope of log(error) against log(h).

    All-equal errors give slope 0.0.  Raises DegenerateFit when fewer than
    two rows are available, when any error is non-positive (no logarithm), or
    when the step sizes carry no spread in log space.
    """
    hs = np.asarray(table.step_sizes, dtype=float)
    es = np.asarray(table.errors, dtype=float)
    if hs.size < 2:
        raise DegenerateFit("need at least two rows to fit an order")
    if np.any(es <= 0):
        raise DegenerateFit("errors must be strictly positive for a log-log fit")
    lh = np.log(hs)
    le = np.log(es)
    var = np.sum((lh - lh.mean()) ** 2)
    if var == 0.0:
        raise DegenerateFit("no spread in log(h)")
    slope = np.sum((lh - lh.mean()) * (le - le.mean())) / var
    return float(slope)
