"""Piecewise quadratic level sets V(x) = max_j x'P_j x inside a modeling box."""
import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Tuple

import numpy as np

from roa_forge.config import Config
from roa_forge.errors import DimensionError, LevelSetError
from roa_forge.services import sampling

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LevelResult:
    k: float
    witness: Optional[Tuple[float, ...]]
    approximate: bool


def v_eval(P_list, x):
    """max_j x'P_j x, for a single point or a batch (..., n)."""
    if len(P_list) == 0:
        raise DimensionError('V needs at least one quadratic piece')
    x = np.asarray(x, dtype=float)
    values = [np.einsum('...i,ij,...j->...', x, np.asarray(P), x) for P in P_list]
    return np.max(values, axis=0)


def _check_box(P_list, box):
    if len(P_list) == 0:
        raise DimensionError('V needs at least one quadratic piece')
    if any(np.shape(P) != (box.dim, box.dim) for P in P_list):
        raise DimensionError('P matrices do not match the box dimension')
    if not np.all((box.lower_array < 0.0) & (box.upper_array > 0.0)):
        raise LevelSetError('the origin must lie strictly inside the box')


def _facet_candidates(P_list, c, e, t_lo, t_hi):
    """Parameters t where min over [t_lo, t_hi] of max_j q_j(t) can be attained."""
    coeffs = [(e @ P @ e, 2.0 * (c @ P @ e), c @ P @ c) for P in P_list]
    candidates = [t_lo, t_hi]
    for alpha, beta, _ in coeffs:
        if alpha > 0.0:
            candidates.append(-beta / (2.0 * alpha))
    for (a1, b1, g1), (a2, b2, g2) in combinations(coeffs, 2):
        da, db, dg = a1 - a2, b1 - b2, g1 - g2
        if da == 0.0:
            if db != 0.0:
                candidates.append(-dg / db)
            continue
        roots = np.roots([da, db, dg])
        candidates.extend(float(r.real) for r in roots if abs(r.imag) <= 1e-12 * (1.0 + abs(r.real)))
    return [t for t in candidates if t_lo <= t <= t_hi]


def _exact_level_2d(P_list, box):
    best_k, best_x = np.inf, None
    for axis in range(2):
        free = 1 - axis
        e = np.zeros(2)
        e[free] = 1.0
        for bound in (box.lower[axis], box.upper[axis]):
            c = np.zeros(2)
            c[axis] = bound
            for t in _facet_candidates(P_list, c, e, box.lower[free], box.upper[free]):
                x = c + t * e
                value = float(v_eval(P_list, x))
                if value < best_k:
                    best_k, best_x = value, x
    return best_k, best_x


def max_level(P_list, box, samples=None, seed=0):
    """Largest k with {V <= k} inside the box, i.e. min of V over the box boundary.

    Exact for n <= 2. For n >= 3 the boundary is sampled and the result is an
    upper estimate flagged as approximate.
    """
    _check_box(P_list, box)
    P_list = [np.asarray(P, dtype=float) for P in P_list]
    if box.dim == 1:
        candidates = [np.array([box.lower[0]]), np.array([box.upper[0]])]
        values = [float(v_eval(P_list, x)) for x in candidates]
        i = int(np.argmin(values))
        return LevelResult(values[i], tuple(candidates[i]), False)
    if box.dim == 2:
        k, witness = _exact_level_2d(P_list, box)
        return LevelResult(k, tuple(float(v) for v in witness), False)

    X = sampling.boundary_points(box, samples or Config.LEVEL_SAMPLES, seed=seed)
    values = v_eval(P_list, X)
    i = int(np.argmin(values))
    logger.warning('level set in %d dimensions estimated from %d boundary samples; k=%.6g is an upper estimate',
                   box.dim, len(X), values[i])
    return LevelResult(float(values[i]), tuple(float(v) for v in X[i]), True)


def contains(roa, x):
    """T x in box and V(T x) <= k; works for one point or a batch."""
    xb = roa.transform.apply(x)
    return roa.box.contains(xb) & (v_eval(roa.P_list, xb) <= roa.k)


def _ray_box_exit(box, directions):
    """Distance along each direction (from the origin) to the box boundary."""
    with np.errstate(divide='ignore'):
        upper = np.where(directions > 0, box.upper_array / directions, np.inf)
        lower = np.where(directions < 0, box.lower_array / directions, np.inf)
    return np.min(np.minimum(upper, lower), axis=-1)


def boundary_polyline(roa, samples=None):
    """Points where each of `samples` rays from the origin leaves the region, ordered by angle.

    V(T x) is homogeneous of degree two along rays, so the crossing radius has
    the closed form sqrt(k / V(T d)); rays are also clipped at the modeling box.
    """
    if roa.dim != 2:
        raise DimensionError('boundary polylines are only drawn for planar systems')
    samples = samples or Config.RENDER_RAYS
    angles = 2.0 * np.pi * np.arange(samples) / samples
    directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    mapped = roa.transform.apply(directions)
    radius = np.sqrt(roa.k / v_eval(roa.P_list, mapped))
    radius = np.minimum(radius, _ray_box_exit(roa.box, mapped))
    return directions * radius[:, np.newaxis]
