from dataclasses import dataclass, field
from itertools import product
from typing import Any, Dict, Optional, Tuple

import numpy as np

from roa_forge.errors import DimensionError, RoaForgeError, SingularTransformError

MERGE_TOL = 1e-12
SYMMETRY_TOL = 1e-12


def sym_matrix(value, name='matrix'):
    """Return `value` as a float symmetric matrix, or raise if it is not one."""
    M = np.array(value, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f'{name} must be square, got shape {M.shape}')
    if np.max(np.abs(M - M.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.max(np.abs(M), initial=0.0)):
        raise DimensionError(f'{name} is not symmetric')
    return 0.5 * (M + M.T)


def _matrix_to_list(M):
    return [[float(v) for v in row] for row in np.asarray(M)]


@dataclass(frozen=True)
class Monomial:
    coeff: float
    powers: Tuple[int, ...]

    def __post_init__(self):
        powers = tuple(int(p) for p in self.powers)
        if any(p < 0 for p in powers):
            raise DimensionError(f'negative exponent in {powers}')
        object.__setattr__(self, 'powers', powers)
        object.__setattr__(self, 'coeff', float(self.coeff))

    @property
    def degree(self):
        return sum(self.powers)

    def to_dict(self):
        return {'coeff': self.coeff, 'powers': list(self.powers)}

    @classmethod
    def from_dict(cls, data):
        return cls(coeff=data['coeff'], powers=tuple(data['powers']))


def _grlex_key(monomial):
    return (monomial.degree, monomial.powers)


@dataclass(frozen=True)
class Polynomial:
    """Scalar polynomial in `dim` variables, kept in canonical merged form.

    Terms sharing an exponent vector are merged, coefficients with magnitude
    at most MERGE_TOL are dropped and the rest are sorted graded-lexicographically
    (highest degree first), so two equal polynomials compare equal term by term.
    """

    dim: int
    terms: Tuple[Monomial, ...] = ()

    def __post_init__(self):
        merged: Dict[Tuple[int, ...], float] = {}
        for term in self.terms:
            if not isinstance(term, Monomial):
                term = Monomial(*term)
            if len(term.powers) != self.dim:
                raise DimensionError(
                    f'monomial {term.powers} has {len(term.powers)} exponents, expected {self.dim}')
            merged[term.powers] = merged.get(term.powers, 0.0) + term.coeff
        canonical = sorted(
            (Monomial(c, p) for p, c in merged.items() if abs(c) > MERGE_TOL),
            key=_grlex_key,
            reverse=True,
        )
        object.__setattr__(self, 'dim', int(self.dim))
        object.__setattr__(self, 'terms', tuple(canonical))

    @classmethod
    def from_terms(cls, dim, pairs):
        """Build from (coeff, powers) pairs, e.g. [(-1.0, (2, 0)), (-2.0, (1, 0))]."""
        return cls(dim, tuple(Monomial(c, p) for c, p in pairs))

    @classmethod
    def variable(cls, dim, index, power=1):
        powers = [0] * dim
        powers[index] = power
        return cls(dim, (Monomial(1.0, tuple(powers)),))

    def as_mapping(self):
        return {t.powers: t.coeff for t in self.terms}

    @property
    def degree(self):
        return max((t.degree for t in self.terms), default=0)

    @property
    def is_monomial(self):
        return len(self.terms) == 1

    @property
    def is_constant(self):
        return all(t.degree == 0 for t in self.terms)

    def to_dict(self):
        return [t.to_dict() for t in self.terms]

    @classmethod
    def from_dict(cls, dim, data):
        return cls(dim, tuple(Monomial.from_dict(item) for item in data))


@dataclass(frozen=True)
class PolyMap:
    """Polynomial vector field f: R^n -> R^n with f(0) = 0."""

    dim: int
    components: Tuple[Polynomial, ...]

    def __post_init__(self):
        components = tuple(self.components)
        if len(components) != self.dim:
            raise DimensionError(f'expected {self.dim} components, got {len(components)}')
        for i, comp in enumerate(components):
            if comp.dim != self.dim:
                raise DimensionError(f'component {i} is in {comp.dim} variables, expected {self.dim}')
            if any(t.degree == 0 for t in comp.terms):
                raise RoaForgeError(
                    f'component {i} has a constant term; the origin must be an equilibrium',
                    stage='input')
        object.__setattr__(self, 'components', components)

    @property
    def degree(self):
        return max((c.degree for c in self.components), default=0)

    def jacobian_at_origin(self):
        J = np.zeros((self.dim, self.dim))
        for i, comp in enumerate(self.components):
            for term in comp.terms:
                if term.degree == 1:
                    J[i, term.powers.index(1)] += term.coeff
        return J

    def to_dict(self):
        return {'dim': self.dim, 'equations': [c.to_dict() for c in self.components]}

    @classmethod
    def from_dict(cls, data):
        dim = int(data['dim'])
        return cls(dim, tuple(Polynomial.from_dict(dim, eq) for eq in data['equations']))


@dataclass(frozen=True, eq=False)
class BoxDomain:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        lower = tuple(float(v) for v in np.ravel(self.lower))
        upper = tuple(float(v) for v in np.ravel(self.upper))
        if len(lower) != len(upper) or not lower:
            raise DimensionError('box lower and upper bounds must have the same, non-zero length')
        if not all(lo < 0.0 < up for lo, up in zip(lower, upper)):
            raise DimensionError(f'box {lower}..{upper} must contain the origin strictly')
        object.__setattr__(self, 'lower', lower)
        object.__setattr__(self, 'upper', upper)

    @property
    def dim(self):
        return len(self.lower)

    @property
    def lower_array(self):
        return np.array(self.lower)

    @property
    def upper_array(self):
        return np.array(self.upper)

    @property
    def volume(self):
        return float(np.prod(self.upper_array - self.lower_array))

    def corners(self):
        """Corners in Cartesian-product order (last axis fastest, lower bound first)."""
        return np.array(list(product(*zip(self.lower, self.upper))))

    def contains(self, X, tol=0.0):
        X = np.asarray(X, dtype=float)
        return np.all((X >= self.lower_array - tol) & (X <= self.upper_array + tol), axis=-1)

    def scale_points(self, U):
        """Map points of the unit cube onto the box."""
        return self.lower_array + np.asarray(U) * (self.upper_array - self.lower_array)

    def to_dict(self):
        return {'lower': list(self.lower), 'upper': list(self.upper)}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data['lower']), tuple(data['upper']))

    @classmethod
    def symmetric(cls, half_widths):
        half_widths = np.asarray(half_widths, dtype=float)
        return cls(tuple(-half_widths), tuple(half_widths))


@dataclass(frozen=True, eq=False)
class Transform:
    """Linear change of coordinates x_bar = T x."""

    T: np.ndarray
    T_inv: np.ndarray

    def __post_init__(self):
        T = np.array(self.T, dtype=float)
        T_inv = np.array(self.T_inv, dtype=float)
        if T.ndim != 2 or T.shape[0] != T.shape[1] or T_inv.shape != T.shape:
            raise DimensionError(f'transform must be square, got shape {T.shape}')
        if abs(np.linalg.det(T)) <= 1e-9:
            raise SingularTransformError('transform is singular (|det T| <= 1e-9)')
        scale = max(1.0, np.linalg.norm(T) * np.linalg.norm(T_inv))
        if np.max(np.abs(T @ T_inv - np.eye(T.shape[0]))) > 1e-12 * scale:
            raise SingularTransformError('T_inv is not the inverse of T')
        T.setflags(write=False)
        T_inv.setflags(write=False)
        object.__setattr__(self, 'T', T)
        object.__setattr__(self, 'T_inv', T_inv)

    @classmethod
    def from_matrix(cls, T):
        T = np.array(T, dtype=float)
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise DimensionError(f'transform must be square, got shape {T.shape}')
        if abs(np.linalg.det(T)) <= 1e-9:
            raise SingularTransformError('transform is singular (|det T| <= 1e-9)')
        return cls(T, np.linalg.inv(T))

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n), np.eye(n))

    @property
    def dim(self):
        return self.T.shape[0]

    @property
    def is_identity(self):
        return bool(np.array_equal(self.T, np.eye(self.dim)))

    def inverse(self):
        return Transform(self.T_inv, self.T)

    def apply(self, X):
        return np.asarray(X, dtype=float) @ self.T.T

    def to_dict(self):
        return _matrix_to_list(self.T)

    @classmethod
    def from_dict(cls, data):
        return cls.from_matrix(data)


@dataclass(frozen=True, eq=False)
class Polytope:
    """Vertex-listed image of a box under a linear map."""

    vertices: np.ndarray

    def bounding_box(self):
        return BoxDomain(tuple(self.vertices.min(axis=0)), tuple(self.vertices.max(axis=0)))

    @property
    def over_approximate(self):
        # the bounding box is exact only when the image is itself axis-aligned
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        on_corner = np.all(np.isclose(self.vertices, lo) | np.isclose(self.vertices, hi), axis=1)
        return not bool(np.all(on_corner))


@dataclass(frozen=True)
class PremiseVar:
    definition: Polynomial
    z_min: float
    z_max: float
    tight: bool = True

    def __post_init__(self):
        if not self.z_max - self.z_min > 1e-12:
            raise RoaForgeError(
                f'premise sector [{self.z_min}, {self.z_max}] is degenerate', stage='factorization')

    def to_dict(self):
        return {
            'poly': self.definition.to_dict(),
            'z_min': float(self.z_min),
            'z_max': float(self.z_max),
            'tight': bool(self.tight),
        }


@dataclass(frozen=True)
class AffineEntry:
    """Matrix entry c0 + sum_k c_k z_k over the premise variables."""

    const: float = 0.0
    coeffs: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'const', float(self.const))
        object.__setattr__(self, 'coeffs', tuple(float(c) for c in self.coeffs))

    def evaluate(self, z):
        value = self.const
        for c, zk in zip(self.coeffs, z):
            value += c * zk
        return value

    def to_dict(self):
        return {'const': self.const, 'coeffs': list(self.coeffs)}

    @classmethod
    def from_dict(cls, data):
        return cls(data.get('const', 0.0), tuple(data.get('coeffs', ())))


@dataclass(frozen=True)
class Factorization:
    """User-supplied rewrite f(x) = A(z(x)) x with entries affine in the premises."""

    premises: Tuple[Polynomial, ...]
    entries: Tuple[Tuple[AffineEntry, ...], ...]

    def __post_init__(self):
        p = len(self.premises)
        n = len(self.entries)
        rows = []
        for i, row in enumerate(self.entries):
            if len(row) != n:
                raise DimensionError(f'factorization row {i} has {len(row)} entries, expected {n}')
            fixed = []
            for j, entry in enumerate(row):
                if len(entry.coeffs) > p:
                    raise DimensionError(
                        f'factorization entry ({i},{j}) has {len(entry.coeffs)} premise coefficients, '
                        f'only {p} premises defined')
                fixed.append(AffineEntry(entry.const, entry.coeffs + (0.0,) * (p - len(entry.coeffs))))
            rows.append(tuple(fixed))
        for k, z in enumerate(self.premises):
            if z.dim != n:
                raise DimensionError(f'premise {k} is in {z.dim} variables, expected {n}')
        object.__setattr__(self, 'premises', tuple(self.premises))
        object.__setattr__(self, 'entries', tuple(rows))

    @property
    def dim(self):
        return len(self.entries)

    @property
    def n_premises(self):
        return len(self.premises)

    def evaluate(self, z):
        return np.array([[entry.evaluate(z) for entry in row] for row in self.entries])

    @classmethod
    def from_linear(cls, A):
        A = np.asarray(A, dtype=float)
        return cls((), tuple(tuple(AffineEntry(v) for v in row) for row in A))

    def to_dict(self):
        return {
            'premises': [{'poly': z.to_dict()} for z in self.premises],
            'factorization': [[e.to_dict() for e in row] for row in self.entries],
        }

    @classmethod
    def from_dict(cls, dim, premises, entries):
        return cls(
            tuple(Polynomial.from_dict(dim, item['poly']) for item in premises),
            tuple(tuple(AffineEntry.from_dict(e) for e in row) for row in entries),
        )


@dataclass(frozen=True, eq=False)
class TSModel:
    premises: Tuple[PremiseVar, ...]
    vertices: np.ndarray
    factorization: Factorization
    box: BoxDomain
    system: Optional[PolyMap] = None

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=float)
        expected = 2 ** len(self.premises)
        if vertices.shape[0] != expected:
            raise DimensionError(f'expected {expected} vertex matrices, got {vertices.shape[0]}')
        object.__setattr__(self, 'vertices', vertices)

    @property
    def dim(self):
        return self.vertices.shape[1]

    def to_dict(self):
        return {
            'premises': [z.to_dict() for z in self.premises],
            'factorization': self.factorization.to_dict(),
            'vertices': [_matrix_to_list(A) for A in self.vertices],
            'box': self.box.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class LdiSystem:
    vertices: np.ndarray

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=float)
        if vertices.ndim == 2:
            vertices = vertices[np.newaxis]
        if vertices.ndim != 3 or vertices.shape[0] < 1 or vertices.shape[1] != vertices.shape[2]:
            raise DimensionError(f'LDI vertices must be a non-empty stack of square matrices, got {vertices.shape}')
        object.__setattr__(self, 'vertices', vertices)

    @property
    def dim(self):
        return self.vertices.shape[1]

    def __len__(self):
        return self.vertices.shape[0]

    def to_dict(self):
        return [_matrix_to_list(A) for A in self.vertices]


@dataclass(frozen=True, eq=False)
class PwqCertificate:
    """Piecewise quadratic certificate V(x) = max_j x'P_j x.

    A single-piece certificate carries one P and lambdas == (0.0,).
    """

    P_list: Tuple[np.ndarray, ...]
    lambdas: Tuple[float, ...]
    margin: float = float('nan')

    def __post_init__(self):
        P_list = tuple(sym_matrix(P, f'P{j + 1}') for j, P in enumerate(self.P_list))
        if not P_list:
            raise DimensionError('certificate needs at least one P matrix')
        if len({P.shape for P in P_list}) != 1:
            raise DimensionError('certificate P matrices differ in size')
        lambdas = tuple(float(v) for v in self.lambdas)
        if len(lambdas) != len(P_list) or any(v < 0 for v in lambdas):
            raise DimensionError('one non-negative lambda per piece is required')
        object.__setattr__(self, 'P_list', P_list)
        object.__setattr__(self, 'lambdas', lambdas)
        object.__setattr__(self, 'margin', float(self.margin))

    @property
    def dim(self):
        return self.P_list[0].shape[0]

    def scaled(self, c):
        return PwqCertificate(tuple(c * P for P in self.P_list), self.lambdas, c * self.margin)

    def to_dict(self):
        return {
            'P': [_matrix_to_list(P) for P in self.P_list],
            'lambdas': list(self.lambdas),
            'margin': self.margin,
        }

    @classmethod
    def from_dict(cls, data):
        P_list = tuple(np.array(P, dtype=float) for P in data['P'])
        lambdas = data.get('lambdas') or [0.0] * len(P_list)
        return cls(P_list, tuple(lambdas), data.get('margin', float('nan')))


@dataclass(frozen=True)
class MarginReport:
    margins: Dict[str, float]
    margin: float
    accepted: bool
    tol: float

    @property
    def worst(self):
        return min(self.margins, key=self.margins.get)

    def to_dict(self):
        return {'margin': self.margin, 'accepted': self.accepted, 'tol': self.tol,
                'worst': self.worst, 'margins': dict(self.margins)}


@dataclass(frozen=True, eq=False)
class RoaEstimate:
    """Certified region {x : T x in box and V(T x) <= k}."""

    P_list: Tuple[np.ndarray, ...]
    k: float
    transform: Transform
    box: BoxDomain
    approximate: bool = False
    certificate: Optional[PwqCertificate] = None
    witness: Optional[Tuple[float, ...]] = None
    label: str = ''

    def __post_init__(self):
        if not self.k > 0:
            raise RoaForgeError(f'level k must be positive, got {self.k}', stage='level')
        if self.transform.dim != self.box.dim:
            raise DimensionError('transform and box dimensions differ')
        object.__setattr__(self, 'P_list', tuple(np.asarray(P, dtype=float) for P in self.P_list))
        object.__setattr__(self, 'k', float(self.k))

    @property
    def dim(self):
        return self.box.dim

    def to_dict(self):
        return {
            'label': self.label,
            'k': self.k,
            'transform': self.transform.to_dict(),
            'box': self.box.to_dict(),
            'approximate': self.approximate,
            'witness': None if self.witness is None else list(self.witness),
        }


@dataclass(frozen=True)
class UnionRegion:
    members: Tuple[RoaEstimate, ...]

    def __post_init__(self):
        object.__setattr__(self, 'members', tuple(self.members))
        if len({m.dim for m in self.members}) > 1:
            raise DimensionError('union members live in different dimensions')

    @property
    def dim(self):
        return self.members[0].dim if self.members else 0


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    converged: bool
    exit_reason: str

    @property
    def final_state(self):
        return self.states[-1]


@dataclass(frozen=True)
class AreaEstimate:
    area: float
    half_width: float
    hits: int
    samples: int
    seed: int
    bounding_box: BoxDomain = field(compare=False)

    @property
    def interval(self):
        return (self.area - self.half_width, self.area + self.half_width)

    def to_dict(self):
        return {'area': self.area, 'half_width': self.half_width, 'hits': self.hits,
                'samples': self.samples, 'seed': self.seed,
                'bounding_box': self.bounding_box.to_dict()}


@dataclass(frozen=True)
class ValidationReport:
    tested: int
    converged: int
    worst_point: Optional[Tuple[float, ...]]
    failures: Tuple[Tuple[float, ...], ...] = ()
    exit_reasons: Dict[str, int] = field(default_factory=dict)
    left_boxes: int = 0

    @property
    def fraction(self):
        return self.converged / self.tested if self.tested else 1.0

    @property
    def passed(self):
        return self.tested > 0 and self.converged == self.tested

    def to_dict(self):
        return {
            'tested': self.tested,
            'converged': self.converged,
            'fraction': self.fraction,
            'worst_point': None if self.worst_point is None else list(self.worst_point),
            'failures': [list(p) for p in self.failures],
            'exit_reasons': dict(sorted(self.exit_reasons.items())),
            'left_boxes': self.left_boxes,
        }


@dataclass(frozen=True)
class DecreaseReport:
    max_delta: float
    violations: int
    steps: int
    worst_point: Optional[Tuple[float, ...]] = None

    @property
    def passed(self):
        return self.violations == 0

    def to_dict(self):
        max_delta = self.max_delta if np.isfinite(self.max_delta) else None
        return {'max_delta': max_delta, 'violations': self.violations, 'steps': self.steps,
                'worst_point': None if self.worst_point is None else list(self.worst_point)}


@dataclass(frozen=True)
class SolverOptions:
    lambda_grid: Tuple[float, ...]
    margin_tol: float
    verify_tol: float
    solver: str
    iteration_cap: int
    residual_samples: int
    level_samples: int
    seed: int = 0

    def to_dict(self):
        return {'lambda_grid': list(self.lambda_grid), 'margin_tol': self.margin_tol,
                'verify_tol': self.verify_tol, 'solver': self.solver,
                'iteration_cap': self.iteration_cap}


@dataclass(frozen=True, eq=False)
class PinnedCertificate:
    """Externally supplied P matrices; lambdas are refined if not given."""

    P_list: Tuple[np.ndarray, ...]
    lambdas: Optional[Tuple[float, ...]] = None
    tol: Optional[float] = None


@dataclass(frozen=True, eq=False)
class PipelineCase:
    transform: Transform
    box: BoxDomain
    factorization: Optional[Factorization]
    vertices: Optional[np.ndarray] = None
    certificate: Optional[PinnedCertificate] = None
    label: str = ''


@dataclass(frozen=True, eq=False)
class PipelineSpec:
    system: PolyMap
    original_box: BoxDomain
    cases: Tuple[PipelineCase, ...]
    options: SolverOptions

    def __post_init__(self):
        if not self.cases:
            raise RoaForgeError('a pipeline needs at least one case', stage='config')
        for i, case in enumerate(self.cases):
            if case.box.dim != self.system.dim or case.transform.dim != self.system.dim:
                raise DimensionError(f'case {i} dimension does not match the system')
        object.__setattr__(self, 'cases', tuple(self.cases))


@dataclass(frozen=True, eq=False)
class CaseOutcome:
    index: int
    label: str
    transform: Transform
    box: BoxDomain
    estimate: Optional[RoaEstimate] = None
    model: Optional[TSModel] = None
    vertices: Optional[np.ndarray] = None
    certificate: Optional[PwqCertificate] = None
    residual: Optional[float] = None
    error: Optional[RoaForgeError] = None
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def success(self):
        return self.estimate is not None

    @property
    def stage(self):
        return None if self.error is None else self.error.stage

    @property
    def message(self):
        return '' if self.error is None else str(self.error)

    def to_dict(self):
        data: Dict[str, Any] = {
            'index': self.index,
            'label': self.label,
            'success': self.success,
            'transform': self.transform.to_dict(),
            'box': self.box.to_dict(),
            'vertices': None if self.vertices is None else LdiSystem(self.vertices).to_dict(),
            'residual': self.residual,
        }
        if self.model is not None:
            data['model'] = self.model.to_dict()
        if self.certificate is not None:
            data['certificate'] = self.certificate.to_dict()
        if self.estimate is not None:
            data.update(self.estimate.to_dict())
        elif self.error is not None:
            data.update(self.error.to_dict())
        if self.details:
            data['details'] = self.details
        return data

