"""Multi-transform ROA flow: transform, TS model, certificate, level set, union."""
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from roa_forge.config import Config
from roa_forge.errors import (
    AllCasesFailedError,
    CertificateError,
    DimensionError,
    FactorizationError,
    LevelSetError,
    RoaForgeError,
)
from roa_forge.models import (
    AreaEstimate,
    BoxDomain,
    CaseOutcome,
    LdiSystem,
    PwqCertificate,
    RoaEstimate,
    SolverOptions,
    UnionRegion,
)
from roa_forge.services import levelset
from roa_forge.services.lmikit import LmiSolver, refine_lambdas, verify_certificate
from roa_forge.services.polyalg import compose_linear, map_box
from roa_forge.services.tsmodel import build_ts, reconstruct_residual

logger = logging.getLogger(__name__)


def default_options(**overrides):
    values = {
        'lambda_grid': tuple(Config.LAMBDA_GRID),
        'margin_tol': Config.MARGIN_TOL,
        'verify_tol': Config.VERIFY_TOL,
        'solver': Config.SOLVER,
        'iteration_cap': Config.ITERATION_CAP,
        'residual_samples': Config.RESIDUAL_SAMPLES,
        'level_samples': Config.LEVEL_SAMPLES,
        'seed': Config.SEED,
    }
    values.update(overrides)
    return SolverOptions(**values)


class StageFailure(RoaForgeError):
    pass


class RoaPipeline:
    """Runs every case independently and merges the results in case order."""

    def __init__(self, options=None, threads=None):
        self.options = options or default_options()
        self.threads = threads or Config.THREADS
        self.solver = LmiSolver(
            solver=self.options.solver,
            iteration_cap=self.options.iteration_cap,
            margin_tol=self.options.margin_tol,
            verify_tol=self.options.verify_tol,
        )

    def _certificate(self, case, sys):
        pinned = case.certificate
        if pinned is None:
            cert = self.solver.solve_pwq(sys, self.options.lambda_grid)
            if cert is None:
                raise CertificateError('no certificate found on the lambda grid')
            return cert, self.options.verify_tol
        tol = self.options.verify_tol if pinned.tol is None else pinned.tol
        if pinned.lambdas is not None:
            return PwqCertificate(pinned.P_list, pinned.lambdas), tol
        return refine_lambdas(pinned.P_list, sys, self.options.lambda_grid, tol), tol

    def _run_stages(self, case, system, outcome):
        try:
            field = compose_linear(system, case.transform)
        except RoaForgeError as exc:
            raise StageFailure(str(exc), stage='transform') from exc

        unstable = np.linalg.eigvals(field.jacobian_at_origin()).real.max() >= 0.0
        if unstable:
            raise CertificateError('linearization at the origin is not Hurwitz; no Lyapunov certificate can exist')

        if case.vertices is not None:
            sys = LdiSystem(case.vertices)
            if sys.dim != system.dim:
                raise StageFailure('pinned vertices do not match the system dimension', stage='factorization')
        elif case.factorization is None:
            raise StageFailure('case has neither a factorization nor pinned vertices', stage='factorization')
        else:
            try:
                model = build_ts(field, case.factorization, case.box,
                                 samples=self.options.residual_samples, seed=self.options.seed)
            except FactorizationError:
                raise
            except RoaForgeError as exc:
                raise StageFailure(str(exc), stage='factorization') from exc
            outcome['model'] = model
            outcome['residual'] = reconstruct_residual(model, self.options.residual_samples, self.options.seed)
            sys = LdiSystem(model.vertices)
        outcome['vertices'] = sys.vertices

        cert, tol = self._certificate(case, sys)
        report = verify_certificate(cert, sys, tol)
        outcome['details'] = {'verification': report.to_dict()}
        if not report.accepted:
            raise StageFailure(f'certificate fails verification: {report.worst} margin {report.margin:.3e}',
                               stage='verification')
        cert = PwqCertificate(cert.P_list, cert.lambdas, report.margin)
        outcome['certificate'] = cert

        level = levelset.max_level(cert.P_list, case.box, self.options.level_samples, self.options.seed)
        if not np.isfinite(level.k) or level.k <= 0.0:
            raise LevelSetError(f'degenerate level k={level.k}')
        return RoaEstimate(cert.P_list, level.k, case.transform, case.box, level.approximate, cert,
                           level.witness, case.label)

    def run_case(self, case, system, index=0):
        """Run one case; failures come back as an outcome naming the failing stage."""
        logger.info('case %d (%s): start', index, case.label or 'unnamed')
        partial = {}
        try:
            estimate = self._run_stages(case, system, partial)
        except RoaForgeError as exc:
            logger.warning('case %d failed at stage %s: %s', index, exc.stage, exc)
            return CaseOutcome(index, case.label, case.transform, case.box, error=exc, **partial)
        logger.info('case %d: k=%.6g with lambdas %s', index, estimate.k, estimate.certificate.lambdas)
        return CaseOutcome(index, case.label, case.transform, case.box, estimate=estimate, **partial)

    def run_all(self, spec):
        jobs = list(enumerate(spec.cases))
        if self.threads <= 1 or len(jobs) == 1:
            return [self.run_case(case, spec.system, i) for i, case in jobs]
        with ThreadPoolExecutor(max_workers=min(self.threads, len(jobs))) as pool:
            return list(pool.map(lambda job: self.run_case(job[1], spec.system, job[0]), jobs))

    def run_multi(self, spec):
        return union_from_outcomes(self.run_all(spec))


def union_from_outcomes(outcomes):
    members = [o.estimate for o in outcomes if o.success]
    if not members:
        raise AllCasesFailedError('every case failed', outcomes)
    return UnionRegion(tuple(members))


def run_case(case, system, options=None):
    return RoaPipeline(options).run_case(case, system)


def run_multi(spec, threads=None):
    return RoaPipeline(spec.options, threads).run_multi(spec)


def union_contains(region, x):
    x = np.asarray(x, dtype=float)
    inside = np.zeros(x.shape[:-1], dtype=bool)
    for member in region.members:
        inside |= levelset.contains(member, x)
    return inside


def membership(region, x):
    if isinstance(region, UnionRegion):
        return union_contains(region, x)
    return levelset.contains(region, x)


def region_bounds(region):
    """Bounding box, in original coordinates, of the mapped modeling box(es)."""
    members = region.members if isinstance(region, UnionRegion) else (region,)
    boxes = [map_box(m.box, m.transform.inverse()).bounding_box() for m in members]
    lower = np.min([b.lower_array for b in boxes], axis=0)
    upper = np.max([b.upper_array for b in boxes], axis=0)
    return BoxDomain(tuple(lower), tuple(upper))


def area_estimate(region, bounding_box=None, n_samples=None, seed=None):
    """Monte Carlo area with a binomial 95% half-width."""
    bounding_box = bounding_box or region_bounds(region)
    if bounding_box.dim != 2:
        raise DimensionError('area estimates are only defined for planar regions')
    n_samples = n_samples or Config.AREA_SAMPLES
    seed = Config.SEED if seed is None else seed
    rng = np.random.default_rng(seed)
    X = bounding_box.scale_points(rng.random((n_samples, 2)))
    hits = int(np.count_nonzero(membership(region, X)))
    p = hits / n_samples
    area = p * bounding_box.volume
    half_width = 1.96 * np.sqrt(p * (1.0 - p) / n_samples) * bounding_box.volume
    return AreaEstimate(float(area), float(half_width), hits, n_samples, int(seed), bounding_box)


def area_comparison(region, n_samples=None, seed=None):
    """Areas of the union and of each member over one shared bounding box and sample stream."""
    bounding_box = region_bounds(region)
    union = area_estimate(region, bounding_box, n_samples, seed)
    members = [area_estimate(m, bounding_box, n_samples, seed) for m in region.members]
    first = members[0]
    comparison = {
        'union_area': union.area,
        'first_member_area': first.area,
        'gain': union.area - first.area,
        # non-overlapping 95% intervals
        'union_exceeds_first': bool(union.interval[0] > first.interval[1]),
    }
    logger.info('union area %.5f +/- %.5f vs first member %.5f +/- %.5f',
                union.area, union.half_width, first.area, first.half_width)
    return union, members, comparison
