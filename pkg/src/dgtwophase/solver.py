"""Sparse linear solves and Newton's method."""
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DIRECT_THRESHOLD = 100_000


class LinearSolverError(RuntimeError):
    def __init__(self, msg, residual=np.nan):
        super().__init__(f"{msg} (relative residual {residual:.3e})")
        self.residual = residual


class NonlinearSolverError(RuntimeError):
    """Newton failed; ``last`` holds the final iterate."""

    def __init__(self, msg, last=None, iterations=0):
        super().__init__(msg)
        self.last = last
        self.iterations = iterations


@dataclass
class LinearSystem:
    matrix: object
    rhs: np.ndarray


@dataclass
class NewtonConfig:
    atol: float = 1e-10
    rtol: float = 1e-8
    max_iter: int = 30
    line_search: bool = False
    max_growth: int = 3
    reuse_factor: bool = True  # precondition later iterations with the first LU
    krylov_rtol: float = 1e-6  # relative accuracy of those preconditioned solves

    def __post_init__(self):
        if self.atol <= 0 or self.rtol <= 0:
            raise ValueError("Newton tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("need at least one Newton iteration")


class FactorCache:
    """Holds the last sparse LU so that nearby matrices (successive Newton
    Jacobians) can be solved by GMRES preconditioned with it instead of a
    fresh factorisation.  Falls back to factorising when GMRES stalls.
    """

    def __init__(self, rtol=1e-6, krylov_iters=25):
        self.lu = None
        self.rtol = rtol
        self.krylov_iters = krylov_iters
        self.factorizations = 0

    def try_solve(self, A, b):
        if self.lu is None or self.lu.shape != A.shape:
            return None
        M = spla.LinearOperator(A.shape, self.lu.solve)
        x, _ = spla.gmres(A, b, rtol=0.1 * self.rtol, restart=self.krylov_iters, maxiter=1, M=M)
        if np.all(np.isfinite(x)) and np.linalg.norm(A @ x - b) <= self.rtol * np.linalg.norm(b):
            return x
        return None


def _factorize(A):
    # DG Jacobians are structurally symmetric; a symmetric minimum-degree
    # ordering with mild diagonal pivoting gives far less fill than COLAMD
    return spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A",
                     diag_pivot_thresh=0.1, options=dict(SymmetricMode=True))


def linear_solve(system, tol=1e-10, direct_threshold=DIRECT_THRESHOLD, maxiter=500, cache=None):
    """Solve ``A x = b``.

    Systems up to ``direct_threshold`` unknowns use a sparse LU factorisation;
    larger ones restarted GMRES with an incomplete-LU preconditioner.  With a
    :class:`FactorCache` the previous LU is tried first as a preconditioner.

    Raises
    ------
    LinearSolverError
        Singular matrix, Krylov breakdown or a residual above ``tol``.
    """
    A, b = system.matrix, np.asarray(system.rhs, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix and right-hand side sizes differ")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    if not sp.issparse(A):
        A = np.asarray(A, dtype=float)
        try:
            x = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as err:
            raise LinearSolverError(f"singular matrix: {err}") from err
    elif n <= direct_threshold:
        x = cache.try_solve(A, b) if cache is not None else None
        if x is not None:
            return x
        try:
            lu = _factorize(A)
            x = lu.solve(b)
        except RuntimeError as err:
            raise LinearSolverError(f"singular matrix: {err}") from err
        if cache is not None:
            cache.lu = lu
            cache.factorizations += 1
    else:
        A = sp.csr_matrix(A)
        try:
            ilu = spla.spilu(sp.csc_matrix(A), drop_tol=1e-6, fill_factor=20)
        except RuntimeError as err:
            raise LinearSolverError(f"ILU failed: {err}") from err
        M = spla.LinearOperator(A.shape, ilu.solve)
        x, info = spla.gmres(A, b, rtol=tol, restart=100, maxiter=maxiter, M=M)
        if info != 0:
            res = np.linalg.norm(A @ x - b) / bnorm
            raise LinearSolverError("GMRES did not converge", res)
    if not np.all(np.isfinite(x)):
        raise LinearSolverError("non-finite solution")
    res = np.linalg.norm(A @ x - b) / bnorm
    if res > max(tol, 1e-6):
        raise LinearSolverError("inaccurate solve (ill-conditioned or singular matrix)", res)
    return x


def newton_solve(provider: Callable, u0, cfg=None, linear_tol=1e-10, post_step=None):
    """Full-step Newton iteration.

    ``provider(u)`` returns ``(R, J)``.  Stops when ``||R|| <= atol`` or
    ``||R|| <= rtol * ||R(u0)||``.  Returns ``(u, iterations)``.
    ``post_step``, if given, maps every new iterate (e.g. a limiter).
    """
    cfg = cfg or NewtonConfig()
    u = np.array(u0, dtype=float, copy=True)
    R, J = provider(u)
    r0 = rn = np.linalg.norm(R)
    growth = 0
    cache = FactorCache(cfg.krylov_rtol) if cfg.reuse_factor else None
    for it in range(1, cfg.max_iter + 1):
        if rn <= cfg.atol or rn <= cfg.rtol * r0:
            return u, it - 1
        try:
            du = linear_solve(LinearSystem(J, -np.atleast_1d(R)), tol=linear_tol, cache=cache)
        except LinearSolverError as err:
            raise NonlinearSolverError(f"linear solve failed: {err}", u, it) from err
        step = 1.0
        while True:
            trial = u + step * du
            if post_step is not None:
                trial = post_step(trial)
            try:
                R_new, J_new = provider(trial)
                r_new = np.linalg.norm(R_new)
            except (ArithmeticError, FloatingPointError) as err:
                if not cfg.line_search or step < 1e-3:
                    raise NonlinearSolverError(f"residual evaluation failed: {err}", u, it) from err
                step *= 0.5
                continue
            if cfg.line_search and r_new > rn and step > 1e-3:
                step *= 0.5
                continue
            break
        growth = growth + 1 if r_new > rn else 0
        u, R, J, rn = trial, R_new, J_new, r_new
        log.debug("newton %d: |R| = %.3e", it, rn)
        if not np.isfinite(rn):
            raise NonlinearSolverError("non-finite residual", u, it)
        if growth >= cfg.max_growth:
            raise NonlinearSolverError("Newton diverged", u, it)
    if rn <= cfg.atol or rn <= cfg.rtol * r0:
        return u, cfg.max_iter
    raise NonlinearSolverError(f"no convergence in {cfg.max_iter} iterations (|R| = {rn:.3e})",
                               u, cfg.max_iter)
