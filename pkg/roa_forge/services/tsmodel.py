"""Sector-nonlinearity TS models built from a user-supplied factorization f(x) = A(z(x)) x."""
import logging
from itertools import product

import numpy as np

from roa_forge.config import Config
from roa_forge.errors import DegeneratePremiseError, DimensionError, FactorizationError
from roa_forge.models import PremiseVar, TSModel
from roa_forge.services import sampling
from roa_forge.services.polyalg import compile_field, compile_poly

logger = logging.getLogger(__name__)


def _power_range(lo, hi, p):
    """Exact range of t**p for t in [lo, hi]."""
    if p == 0:
        return 1.0, 1.0
    candidates = [lo ** p, hi ** p]
    if lo < 0.0 < hi:
        candidates.append(0.0)
    return min(candidates), max(candidates)


def _monomial_range(term, lower, upper):
    """Exact range of one monomial over a box: the factors are independent per axis."""
    factor_ranges = [_power_range(lo, hi, p) for lo, hi, p in zip(lower, upper, term.powers)]
    extremes = [term.coeff * np.prod(choice) for choice in product(*factor_ranges)]
    return min(extremes), max(extremes)


def _interval_bounds(poly, box, cells_per_axis):
    """Interval-arithmetic bounds of `poly` over a uniform grid of sub-boxes."""
    n = box.dim
    edges = [np.linspace(lo, hi, cells_per_axis + 1) for lo, hi in zip(box.lower, box.upper)]
    grids_lo = np.meshgrid(*[e[:-1] for e in edges], indexing='ij')
    grids_hi = np.meshgrid(*[e[1:] for e in edges], indexing='ij')
    cell_lo = np.stack([g.ravel() for g in grids_lo], axis=1)
    cell_hi = np.stack([g.ravel() for g in grids_hi], axis=1)

    total_lo = np.zeros(cell_lo.shape[0])
    total_hi = np.zeros(cell_lo.shape[0])
    for term in poly.terms:
        factor_lo = np.ones(cell_lo.shape[0])
        factor_hi = np.ones(cell_lo.shape[0])
        for axis in range(n):
            p = term.powers[axis]
            if p == 0:
                continue
            a, b = cell_lo[:, axis] ** p, cell_hi[:, axis] ** p
            lo = np.minimum(a, b)
            hi = np.maximum(a, b)
            if p % 2 == 0:
                lo = np.where((cell_lo[:, axis] < 0) & (cell_hi[:, axis] > 0), 0.0, lo)
            products = np.stack([factor_lo * lo, factor_lo * hi, factor_hi * lo, factor_hi * hi])
            factor_lo, factor_hi = products.min(axis=0), products.max(axis=0)
        scaled = np.stack([term.coeff * factor_lo, term.coeff * factor_hi])
        total_lo += scaled.min(axis=0)
        total_hi += scaled.max(axis=0)
    return float(total_lo.min()), float(total_hi.max())


def bound_premise(z, box, cells_per_axis=None):
    """Bounds (z_min, z_max, tight) of premise `z` over `box`.

    Monomial premises get exact bounds. Sums of monomials get interval bounds
    refined on a grid of box-edge/64 cells, which may be loose and are flagged so.
    """
    if z.dim != box.dim:
        raise DimensionError(f'premise is in {z.dim} variables, box has {box.dim}')
    if z.is_constant:
        raise DegeneratePremiseError('constant premise has a zero-width sector')

    if z.is_monomial:
        z_min, z_max = _monomial_range(z.terms[0], box.lower, box.upper)
        tight = True
    else:
        z_min, z_max = _interval_bounds(z, box, cells_per_axis or Config.PREMISE_GRID)
        tight = False
    if not z_max - z_min > 1e-12:
        raise DegeneratePremiseError(f'premise sector [{z_min}, {z_max}] has zero width over the box')
    return z_min, z_max, tight


def corner_assignments(p):
    """Corner bit patterns in Cartesian-product order: the last premise varies fastest."""
    return list(product((0, 1), repeat=p))


def _vertices(factorization, premises):
    vertices = []
    for bits in corner_assignments(len(premises)):
        z = [prem.z_max if bit else prem.z_min for prem, bit in zip(premises, bits)]
        vertices.append(factorization.evaluate(z))
    return np.array(vertices).reshape(2 ** len(premises), factorization.dim, factorization.dim)


def build_ts(f, factorization, box, samples=None, tol=None, seed=0):
    """Enumerate the 2^p vertex matrices of the sector-nonlinearity model.

    Raises FactorizationError with the worst sample when A(z(x)) x does not
    reproduce f on the box.
    """
    if factorization.dim != f.dim or box.dim != f.dim:
        raise DimensionError('field, factorization and box dimensions must agree')
    premises = []
    for k, z in enumerate(factorization.premises):
        z_min, z_max, tight = bound_premise(z, box)
        if not tight:
            logger.warning('premise %d bounds come from interval arithmetic and may be loose', k)
        premises.append(PremiseVar(z, z_min, z_max, tight))
    model = TSModel(tuple(premises), _vertices(factorization, premises), factorization, box, f)

    tol = Config.RESIDUAL_TOL if tol is None else tol
    residual, worst = _residual(model, f, samples or Config.RESIDUAL_SAMPLES, seed)
    if residual > tol:
        raise FactorizationError(
            f'factorization does not reproduce the field: residual {residual:.3e} at {worst.tolist()}',
            point=worst, residual=residual)
    logger.info('built TS model with %d premises, %d vertices, residual %.2e',
                len(premises), len(model.vertices), residual)
    return model


def _pair_weights(model, X):
    """Per-premise weights (w_zmin, w_zmax), shape (..., p, 2)."""
    columns = []
    for prem in model.premises:
        z = compile_poly(prem.definition)(X)
        w_min = (prem.z_max - z) / (prem.z_max - prem.z_min)
        columns.append(np.stack([w_min, 1.0 - w_min], axis=-1))
    if not columns:
        return np.zeros(np.shape(X)[:-1] + (0, 2))
    return np.stack(columns, axis=-2)


def _tensor_weights(pairs):
    weights = np.ones(pairs.shape[:-2] + (1,))
    for k in range(pairs.shape[-2]):
        # kron over premises with the later premise varying fastest
        weights = (weights[..., :, np.newaxis] * pairs[..., k, np.newaxis, :]).reshape(
            pairs.shape[:-2] + (-1,))
    return weights


def weights(model, x):
    """Membership weights at x and whether x lies in the modeling box."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.dim:
        raise DimensionError(f'point has {x.shape[-1]} coordinates, model expects {model.dim}')
    w = _tensor_weights(_pair_weights(model, x))
    return w, model.box.contains(x)


def ts_field(model, X):
    """sum_i w_i(x) A_i x for a batch of points."""
    X = np.asarray(X, dtype=float)
    w, _ = weights(model, X)
    A = np.tensordot(w, model.vertices, axes=([-1], [0]))
    return np.einsum('...ij,...j->...i', A, X)


def _residual(model, f, samples, seed):
    X = sampling.halton(model.box, samples, seed=seed)
    exact = compile_field(f)(X)
    err = np.linalg.norm(ts_field(model, X) - exact, axis=1) / (1.0 + np.linalg.norm(exact, axis=1))
    worst = int(np.argmax(err))
    return float(err[worst]), X[worst]


def reconstruct_residual(model, samples=None, seed=0):
    """Max over in-box samples of |sum w_i A_i x - f(x)| / (1 + |f(x)|)."""
    if model.system is None:
        raise DimensionError('model carries no vector field to compare against')
    residual, _ = _residual(model, model.system, samples or Config.RESIDUAL_SAMPLES, seed)
    return residual
