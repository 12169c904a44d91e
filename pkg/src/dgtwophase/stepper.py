"""The five time-advancement strategies.

All schemes discretise time with the theta-like family
``M_Phi (s - s_old) + tau (alpha F_s(u; s-bar) + (1 - alpha) F_s(u_old))``
and differ in how the coefficient argument ``s-bar`` is chosen and how
the pressure and saturation equations are coupled:

``linear``           s-bar = s_old, one coupled linear solve
``implicit``         s-bar = s_new, Newton on the coupled system
``iterative``        fixed point on s-bar with coupled linear solves
``impes_iterative``  fixed point; pressure solve then saturation solve
``impes``            one pressure solve, then one saturation solve
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .dgspace import P, S, DgFunction
from .forms import TimeForm
from .limiter import LimiterConfig, apply_scaling_limiter
from .physics import DomainError
from .solver import (LinearSolverError, LinearSystem, NewtonConfig, NonlinearSolverError,
                     linear_solve, newton_solve)

log = logging.getLogger(__name__)

SCHEMES = ("linear", "implicit", "iterative", "impes_iterative", "impes")


@dataclass
class SchemeConfig:
    kind: str = "implicit"
    tau: float = 3.0
    alpha: float = 1.0
    tol_iter: float = 3e-2
    max_outer: int = 100
    check_stop: bool = True
    limit_each_newton: bool = False  # limiter after every Newton iterate, not just the solve
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    limiter: LimiterConfig = field(default_factory=LimiterConfig)
    linear_tol: float = 1e-10

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown scheme {self.kind!r}; choose from {SCHEMES}")
        if self.tau <= 0:
            raise ValueError("time step must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.tol_iter <= 0:
            raise ValueError("tol_iter must be positive")


@dataclass
class TimeState:
    t: float
    step: int
    u: DgFunction


@dataclass
class StepDiagnostics:
    outer_iters: int = 0
    newton_iters: int = 0
    linear_solves: int = 0
    n_limited: int = 0
    converged: bool = True


class StepFailure(RuntimeError):
    def __init__(self, scheme, t, reason, diagnostics=None):
        super().__init__(f"{scheme} step at t={t:g} failed: {reason}")
        self.scheme, self.t, self.reason = scheme, t, reason
        self.diagnostics = diagnostics


def stopping_criterion(s_new, s_prev, tol_iter, field=S):
    """True (stop) iff ||s_new - s_prev|| < tol_iter ||s_prev|| in L2."""
    diff = DgFunction(s_new.space, s_new.coeffs - s_prev.coeffs).l2_norm(field)
    ref = s_prev.l2_norm(field)
    if ref == 0.0:
        return diff == 0.0
    return diff < tol_iter * ref


def _solve_rows(tf, u, sbar, rows, diag, tol):
    """One linear solve of the system restricted to ``rows`` (others frozen)."""
    sysm = tf(u, sbar)
    J = sysm.jacobian
    if rows is not None:
        J = J[rows][:, rows]
        R = sysm.residual[rows]
    else:
        R = sysm.residual
    du = linear_solve(LinearSystem(J, -R), tol=tol)
    diag.linear_solves += 1
    out = u.copy()
    if rows is None:
        out += du
    else:
        out[rows] += du
    return out


def advance(state, scheme, disc):
    """Advance ``state`` by one step of ``scheme`` on discretisation ``disc``.

    Returns ``(new_state, StepDiagnostics)``; raises :class:`StepFailure`.
    """
    space = state.u.space
    if not space.same_layout(disc.space):
        raise ValueError("state and discretisation live on different spaces")
    u_old = state.u.coeffs
    tf = TimeForm(disc, u_old, scheme.tau, scheme.alpha)
    diag = StepDiagnostics()
    p_rows, s_rows = space.field_slices[P], space.field_slices[S]
    kind = scheme.kind
    lim = lambda c: apply_scaling_limiter(DgFunction(space, c), scheme.limiter)

    try:
        if kind == "linear":
            new = lim(_solve_rows(tf, u_old, u_old, None, diag, scheme.linear_tol))
            diag.outer_iters = 1
        elif kind == "implicit":
            provider = lambda c: tuple(tf(c, sbar_is_u=True))
            post = (lambda c: lim(c).coeffs) if scheme.limit_each_newton else None
            c, its = newton_solve(provider, u_old, scheme.newton, scheme.linear_tol, post)
            diag.newton_iters = its
            diag.outer_iters = 1
            new = lim(c)
        else:
            prev = DgFunction(space, u_old.copy())
            single = kind == "impes"
            max_outer = 1 if single else scheme.max_outer
            for k in range(1, max_outer + 1):
                cur = prev.coeffs
                if kind == "iterative":
                    c = _solve_rows(tf, cur, cur, None, diag, scheme.linear_tol)
                else:
                    c = _solve_rows(tf, cur, cur, p_rows, diag, scheme.linear_tol)
                    c = _solve_rows(tf, c, cur, s_rows, diag, scheme.linear_tol)
                new = lim(c)
                diag.outer_iters = k
                if single or (scheme.check_stop and stopping_criterion(new, prev, scheme.tol_iter)):
                    break
                prev = new
            else:
                if scheme.check_stop:
                    diag.converged = False
                    raise StepFailure(kind, state.t,
                                      f"no convergence in {max_outer} outer iterations", diag)
    except NonlinearSolverError as err:
        diag.converged = False
        diag.newton_iters = err.iterations
        raise StepFailure(kind, state.t, str(err), diag) from err
    except (LinearSolverError, DomainError, FloatingPointError) as err:
        diag.converged = False
        raise StepFailure(kind, state.t, str(err), diag) from err
    diag.n_limited = new.n_limited
    if not np.all(np.isfinite(new.coeffs)):
        raise StepFailure(kind, state.t, "non-finite solution", diag)
    return TimeState(state.t + scheme.tau, state.step + 1, new), diag
