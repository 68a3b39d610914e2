"""Polynomial vector fields: evaluation and linear changes of coordinates."""
import logging

import numpy as np
import sympy as sp

from roa_forge.errors import DegreeLimitError, DimensionError, SingularTransformError
from roa_forge.models import Monomial, PolyMap, Polynomial, Polytope

logger = logging.getLogger(__name__)

MAX_COMPOSE_DEGREE = 8


def _term_arrays(poly):
    if not poly.terms:
        return np.zeros(0), np.zeros((0, poly.dim), dtype=int)
    coeffs = np.array([t.coeff for t in poly.terms])
    powers = np.array([t.powers for t in poly.terms], dtype=int)
    return coeffs, powers


def compile_poly(poly):
    """Vectorized evaluator X (..., n) -> (...,) for a scalar polynomial."""
    coeffs, powers = _term_arrays(poly)

    def evaluate(X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != poly.dim:
            raise DimensionError(f'point has {X.shape[-1]} coordinates, polynomial expects {poly.dim}')
        if not coeffs.size:
            return np.zeros(X.shape[:-1])
        monomials = np.prod(X[..., np.newaxis, :] ** powers, axis=-1)
        return monomials @ coeffs

    return evaluate


def compile_field(f):
    """Vectorized evaluator X (..., n) -> (..., n) for a PolyMap."""
    parts = [compile_poly(c) for c in f.components]

    def evaluate(X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != f.dim:
            raise DimensionError(f'point has {X.shape[-1]} coordinates, field expects {f.dim}')
        return np.stack([part(X) for part in parts], axis=-1)

    return evaluate


def eval_field(f, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != f.dim:
        raise DimensionError(f'expected a {f.dim}-vector, got shape {x.shape}')
    if not np.all(np.isfinite(x)):
        raise ValueError('point must be finite')
    return compile_field(f)(x)


def _symbols(n):
    return sp.symbols(f'x0:{n}')


def _to_sympy(poly, xs):
    return sp.Add(*[sp.Float(t.coeff) * sp.Mul(*[x ** p for x, p in zip(xs, t.powers)])
                    for t in poly.terms])


def _from_sympy(expr, xs):
    if expr == 0:
        return Polynomial(len(xs))
    terms = sp.Poly(sp.expand(expr), *xs).terms()
    return Polynomial(len(xs), tuple(Monomial(float(c), powers) for powers, c in terms))


def compose_linear(f, transform):
    """Return f_bar with f_bar(T x) = T f(x), i.e. f_bar(y) = T f(T^-1 y)."""
    if transform.dim != f.dim:
        raise DimensionError(f'transform is {transform.dim}x{transform.dim}, field has dimension {f.dim}')
    if abs(np.linalg.det(transform.T)) <= 1e-9:
        raise SingularTransformError('transform is singular')
    if f.degree > MAX_COMPOSE_DEGREE:
        raise DegreeLimitError(
            f'field degree {f.degree} exceeds the composition limit of {MAX_COMPOSE_DEGREE}')
    if transform.is_identity:
        return f

    ys = _symbols(f.dim)
    # x = T^-1 y, substituted coordinate by coordinate
    substitution = {
        x: sp.Add(*[sp.Float(transform.T_inv[i, j]) * ys[j] for j in range(f.dim)])
        for i, x in enumerate(ys)
    }
    pulled_back = [sp.expand(_to_sympy(c, ys).xreplace(substitution)) for c in f.components]
    components = []
    for i in range(f.dim):
        row = sp.Add(*[sp.Float(transform.T[i, j]) * pulled_back[j]
                       for j in range(f.dim) if transform.T[i, j] != 0.0])
        components.append(_from_sympy(row, ys))
    composed = PolyMap(f.dim, tuple(components))
    logger.debug('composed field of degree %d under a %dx%d transform', composed.degree, f.dim, f.dim)
    return composed


def map_box(box, transform):
    """Image {T x : x in box} as a vertex-listed polytope (corner images, corner order)."""
    if transform.dim != box.dim:
        raise DimensionError('transform and box dimensions differ')
    if abs(np.linalg.det(transform.T)) <= 1e-9:
        raise SingularTransformError('transform is singular')
    return Polytope(transform.apply(box.corners()))


def polynomials_close(p, q, tol=1e-9):
    a, b = p.as_mapping(), q.as_mapping()
    scale = 1.0 + max((abs(c) for c in a.values()), default=0.0)
    return all(abs(a.get(k, 0.0) - b.get(k, 0.0)) <= tol * scale for k in set(a) | set(b))


def fields_close(f, g, tol=1e-9):
    return f.dim == g.dim and all(polynomials_close(p, q, tol) for p, q in zip(f.components, g.components))
