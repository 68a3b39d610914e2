"""LMI feasibility for quadratic and two-piece max-quadratic Lyapunov functions over an LDI."""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import cvxpy as cp
import numpy as np
from scipy.optimize import minimize_scalar

from roa_forge.config import Config
from roa_forge.errors import DimensionError
from roa_forge.models import LdiSystem, MarginReport, PwqCertificate, sym_matrix

logger = logging.getLogger(__name__)

_ITERATION_OPTION = {'CLARABEL': 'max_iter', 'SCS': 'max_iters', 'CVXOPT': 'maxiters', 'ECOS': 'max_iters'}


@dataclass(frozen=True, eq=False)
class LmiTerm:
    """coeff * L @ P_piece @ R"""

    coeff: float
    left: np.ndarray
    piece: int
    right: np.ndarray


@dataclass(frozen=True, eq=False)
class LmiConstraint:
    """Symmetric part of a sum of LmiTerms, required to be positive definite."""

    label: str
    terms: Tuple[LmiTerm, ...]

    def evaluate(self, P_list):
        M = sum(term.coeff * term.left @ P_list[term.piece] @ term.right for term in self.terms)
        return 0.5 * (M + M.T)

    def expression(self, variables):
        M = sum(term.coeff * (term.left @ variables[term.piece] @ term.right) for term in self.terms)
        return 0.5 * (M + M.T)


@dataclass(frozen=True, eq=False)
class CoreResult:
    P_list: Optional[Tuple[np.ndarray, ...]]
    t: Optional[float]
    status: str
    diagnostics: str = ''

    @property
    def feasible(self):
        return self.P_list is not None


def lyapunov_constraints(sys, n_pieces, lambdas=None):
    """Constraint family of the Lyapunov conditions on `sys`.

    One piece:  P > 0 and -(P A_i + A_i'P) > 0 for every vertex.
    Two pieces: P_1, P_2 > 0 and, for j in {1, 2} with o the other piece,
                lambda_j (P_o - P_j) - (P_j A_i + A_i'P_j) > 0 for every vertex.
    """
    n = sys.dim
    eye = np.eye(n)
    lambdas = tuple(lambdas) if lambdas is not None else (0.0,) * n_pieces
    if n_pieces not in (1, 2):
        raise DimensionError(f'only one or two quadratic pieces are supported, got {n_pieces}')
    if len(lambdas) != n_pieces:
        raise DimensionError('one lambda per piece is required')

    constraints = [LmiConstraint(f'P{j + 1}', (LmiTerm(1.0, eye, j, eye),)) for j in range(n_pieces)]
    for j in range(n_pieces):
        for i, A in enumerate(sys.vertices):
            terms = [LmiTerm(-1.0, eye, j, A), LmiTerm(-1.0, A.T, j, eye)]
            if n_pieces == 2 and lambdas[j] != 0.0:
                other = 1 - j
                terms += [LmiTerm(lambdas[j], eye, other, eye), LmiTerm(-lambdas[j], eye, j, eye)]
            constraints.append(LmiConstraint(f'piece{j + 1}/vertex{i + 1}', tuple(terms)))
    return constraints


def verify_certificate(cert, sys, tol=None):
    """Solver-independent check: smallest eigenvalue of every constraint matrix."""
    tol = Config.VERIFY_TOL if tol is None else tol
    if cert.dim != sys.dim:
        raise DimensionError(f'certificate is {cert.dim}-dimensional, system is {sys.dim}-dimensional')
    constraints = lyapunov_constraints(sys, len(cert.P_list), cert.lambdas)
    margins = {c.label: float(np.linalg.eigvalsh(c.evaluate(cert.P_list))[0]) for c in constraints}
    margin = min(margins.values())
    return MarginReport(margins, margin, margin >= tol, tol)


def _piece_margin(P_list, sys, piece, lam):
    lambdas = [0.0, 0.0]
    lambdas[piece] = lam
    constraints = lyapunov_constraints(sys, 2, lambdas)
    return min(float(np.linalg.eigvalsh(c.evaluate(P_list))[0])
               for c in constraints if c.label.startswith(f'piece{piece + 1}/'))


def refine_lambdas(P_list, sys, lambda_grid=None, tol=None):
    """Best coupling scalars for given P matrices.

    Each piece's worst decrease margin is concave in its own lambda, so a grid
    scan followed by a bounded scalar search around the best grid point finds
    the maximizer.
    """
    P_list = tuple(sym_matrix(P, f'P{j + 1}') for j, P in enumerate(P_list))
    if len(P_list) == 1:
        cert = PwqCertificate(P_list, (0.0,))
        return PwqCertificate(P_list, (0.0,), verify_certificate(cert, sys, tol).margin)
    if len(P_list) != 2:
        raise DimensionError(f'only one or two quadratic pieces are supported, got {len(P_list)}')

    grid = sorted(set(float(v) for v in (lambda_grid or Config.LAMBDA_GRID)))
    best = []
    for piece in range(2):
        values = [_piece_margin(P_list, sys, piece, lam) for lam in grid]
        b = int(np.argmax(values))
        low = grid[b - 1] if b > 0 else 0.0
        high = grid[b + 1] if b + 1 < len(grid) else max(10.0 * grid[b], 1.0)
        lam, value = grid[b], values[b]
        if high > low:
            found = minimize_scalar(lambda v: -_piece_margin(P_list, sys, piece, v),
                                    bounds=(low, high), method='bounded', options={'xatol': 1e-10})
            if -found.fun > value:
                lam, value = float(found.x), float(-found.fun)
        logger.debug('piece %d: best lambda %.6g with decrease margin %.3e', piece + 1, lam, value)
        best.append(lam)

    cert = PwqCertificate(P_list, tuple(best))
    return PwqCertificate(P_list, tuple(best), verify_certificate(cert, sys, tol).margin)


class LmiSolver:
    """Margin-maximizing SDP front end; every answer is re-verified by eigenvalues."""

    def __init__(self, solver=None, iteration_cap=None, margin_tol=None, verify_tol=None,
                 trace_cap=None):
        self.solver = solver or Config.SOLVER
        self.iteration_cap = iteration_cap or Config.ITERATION_CAP
        self.margin_tol = Config.MARGIN_TOL if margin_tol is None else margin_tol
        self.verify_tol = Config.VERIFY_TOL if verify_tol is None else verify_tol
        self.trace_cap = trace_cap or Config.SECONDARY_TRACE_CAP

    def _solve_options(self):
        option = _ITERATION_OPTION.get(self.solver.upper())
        return {option: self.iteration_cap} if option else {}

    def feasibility_core(self, constraints, n, n_pieces):
        """max t  s.t.  every constraint >= t I,  trace(P_1) = n,  trace(P_j) <= cap * n."""
        variables = [cp.Variable((n, n), symmetric=True) for _ in range(n_pieces)]
        t = cp.Variable()
        eye = np.eye(n)
        problem_constraints = [cp.trace(variables[0]) == n]
        problem_constraints += [cp.trace(P) <= self.trace_cap * n for P in variables[1:]]
        problem_constraints += [c.expression(variables) - t * eye >> 0 for c in constraints]
        problem = cp.Problem(cp.Maximize(t), problem_constraints)

        try:
            problem.solve(solver=self.solver, **self._solve_options())
        except cp.error.SolverError as exc:
            logger.warning('solver %s failed: %s', self.solver, exc)
            return CoreResult(None, None, 'solver_error', str(exc))

        status = problem.status
        if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or t.value is None:
            diagnostics = f'solver status {status}'
            if status == cp.USER_LIMIT:
                diagnostics += f' (iteration cap {self.iteration_cap} reached)'
            return CoreResult(None, None, status, diagnostics)
        margin = float(t.value)
        if margin <= self.margin_tol:
            return CoreResult(None, margin, status, f'optimal margin {margin:.3e} is not above {self.margin_tol:g}')
        P_list = tuple(np.array(P.value, dtype=float) for P in variables)
        return CoreResult(P_list, margin, status)

    def _certify(self, P_list, lambdas, sys):
        scale = sys.dim / float(np.trace(P_list[0]))
        cert = PwqCertificate(tuple(scale * P for P in P_list), lambdas)
        report = verify_certificate(cert, sys, self.verify_tol)
        if not report.accepted:
            logger.warning('solver answer rejected by verification: %s margin %.3e',
                           report.worst, report.margin)
            return None
        return PwqCertificate(cert.P_list, lambdas, report.margin)

    def solve_quadratic_ldi(self, sys):
        """Common quadratic Lyapunov matrix for every vertex, trace-normalized, or None."""
        result = self.feasibility_core(lyapunov_constraints(sys, 1), sys.dim, 1)
        if not result.feasible:
            logger.info('no common quadratic certificate: %s', result.diagnostics)
            return None
        cert = self._certify(result.P_list, (0.0,), sys)
        return None if cert is None else cert.P_list[0]

    def solve_quadratic_lti(self, A):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f'system matrix must be square, got shape {A.shape}')
        return self.solve_quadratic_ldi(LdiSystem(A[np.newaxis]))

    def solve_pwq(self, sys, lambda_grid=None):
        """First verified two-piece certificate over the lambda grid, or None.

        None means no certificate at this grid; it is not a proof of infeasibility.
        """
        grid = list(Config.LAMBDA_GRID if lambda_grid is None else lambda_grid)
        if not grid or any(v < 0 for v in grid):
            raise DimensionError('lambda grid must be non-empty and non-negative')
        grid = sorted(set(float(v) for v in grid))

        for lam1 in grid:
            for lam2 in grid:
                constraints = lyapunov_constraints(sys, 2, (lam1, lam2))
                result = self.feasibility_core(constraints, sys.dim, 2)
                logger.debug('lambda=(%g, %g): %s', lam1, lam2, result.diagnostics or result.status)
                if not result.feasible:
                    continue
                cert = self._certify(result.P_list, (lam1, lam2), sys)
                if cert is not None:
                    logger.info('certificate found at lambda=(%g, %g) with margin %.3e',
                                lam1, lam2, cert.margin)
                    return cert
        logger.warning('no certificate on the %dx%d lambda grid', len(grid), len(grid))
        return None


# Global instance
lmi_solver = LmiSolver()
