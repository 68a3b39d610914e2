"""Run configuration: JSON schema, semantic checks and the RunConfig loader."""
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from jsonschema import Draft7Validator

from roa_forge.config import Config
from roa_forge.errors import ConfigError, RoaForgeError
from roa_forge.models import (
    BoxDomain,
    Factorization,
    PinnedCertificate,
    PipelineCase,
    PipelineSpec,
    PolyMap,
    Transform,
    sym_matrix,
)
from roa_forge.services.pipeline import default_options
from roa_forge.services.polyalg import map_box

logger = logging.getLogger(__name__)

_NUMBER = {'type': 'number'}
_VECTOR = {'type': 'array', 'items': _NUMBER, 'minItems': 1}
_MATRIX = {'type': 'array', 'items': _VECTOR, 'minItems': 1}
_POSITIVE_INT = {'type': 'integer', 'minimum': 1}

_MONOMIAL = {
    'type': 'object',
    'properties': {
        'coeff': _NUMBER,
        'powers': {'type': 'array', 'items': {'type': 'integer', 'minimum': 0}},
    },
    'required': ['coeff', 'powers'],
    'additionalProperties': False,
}
_POLYNOMIAL = {'type': 'array', 'items': _MONOMIAL}
_BOX = {
    'type': 'object',
    'properties': {'lower': _VECTOR, 'upper': _VECTOR},
    'required': ['lower', 'upper'],
    'additionalProperties': False,
}
_ENTRY = {
    'type': 'object',
    'properties': {'const': _NUMBER, 'coeffs': {'type': 'array', 'items': _NUMBER}},
    'additionalProperties': False,
}

RUN_CONFIG_SCHEMA = {
    '$schema': 'http://json-schema.org/draft-07/schema#',
    'title': 'roa-forge run configuration',
    'type': 'object',
    'properties': {
        'system': {
            'type': 'object',
            'properties': {
                'dim': _POSITIVE_INT,
                'equations': {'type': 'array', 'items': _POLYNOMIAL, 'minItems': 1},
            },
            'required': ['dim', 'equations'],
            'additionalProperties': False,
        },
        'original_box': _BOX,
        'cases': {
            'type': 'array',
            'minItems': 1,
            'items': {
                'type': 'object',
                'properties': {
                    'label': {'type': 'string'},
                    'transform': _MATRIX,
                    'box': _BOX,
                    'premises': {
                        'type': 'array',
                        'items': {
                            'type': 'object',
                            'properties': {'poly': _POLYNOMIAL},
                            'required': ['poly'],
                            'additionalProperties': False,
                        },
                    },
                    'factorization': {'type': 'array', 'items': {'type': 'array', 'items': _ENTRY}},
                    'vertices': {'type': 'array', 'items': _MATRIX, 'minItems': 1},
                    'certificate': {
                        'type': 'object',
                        'properties': {
                            'P': {'type': 'array', 'items': _MATRIX, 'minItems': 1, 'maxItems': 2},
                            'lambdas': {'type': 'array', 'items': {'type': 'number', 'minimum': 0}},
                            'tol': _NUMBER,
                        },
                        'required': ['P'],
                        'additionalProperties': False,
                    },
                },
                'required': ['box'],
                'additionalProperties': False,
            },
        },
        'solver': {
            'type': 'object',
            'properties': {
                'lambda_grid': {'type': 'array', 'items': {'type': 'number', 'minimum': 0}, 'minItems': 1},
                'margin_tol': {'type': 'number', 'minimum': 0},
                'verify_tol': _NUMBER,
                'solver': {'type': 'string'},
                'iteration_cap': _POSITIVE_INT,
                'residual_samples': _POSITIVE_INT,
                'level_samples': _POSITIVE_INT,
            },
            'additionalProperties': False,
        },
        'validation': {
            'type': 'object',
            'properties': {
                'samples': _POSITIVE_INT,
                'seed': {'type': 'integer', 'minimum': 0},
                'dt': {'type': 'number', 'exclusiveMinimum': 0},
                'horizon': {'type': 'number', 'exclusiveMinimum': 0},
                'conv_radius': {'type': 'number', 'exclusiveMinimum': 0},
                'area_samples': _POSITIVE_INT,
            },
            'additionalProperties': False,
        },
        'outputs': {
            'type': 'object',
            'properties': {
                'results': {'type': 'string'},
                'svg': {'type': 'string'},
                'csv': {'type': 'string'},
            },
            'additionalProperties': False,
        },
    },
    'required': ['system', 'cases'],
    'additionalProperties': False,
}

_validator = Draft7Validator(RUN_CONFIG_SCHEMA)


@dataclass(frozen=True)
class ValidationSettings:
    samples: int
    seed: int
    dt: float
    horizon: float
    conv_radius: float
    area_samples: int


@dataclass(frozen=True)
class OutputPaths:
    results: Path
    svg: Path
    csv: Path


@dataclass(frozen=True, eq=False)
class RunConfig:
    spec: PipelineSpec
    validation: ValidationSettings
    outputs: OutputPaths
    source: Optional[Path] = None


def field_path(parts):
    """['cases', 0, 'transform'] -> 'cases[0].transform'"""
    text = ''
    for part in parts:
        if isinstance(part, int):
            text += f'[{part}]'
        else:
            text += f'.{part}' if text else str(part)
    return text or '<root>'


def validate_document(doc):
    """Schema errors first (the shallowest one is reported), then semantic checks."""
    errors = sorted(_validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        error = errors[0]
        raise ConfigError(error.message, field=field_path(error.absolute_path))
    _check_semantics(doc)


def _matrix_shape(value, field):
    try:
        M = np.array(value, dtype=float)
    except ValueError as exc:
        raise ConfigError('rows have different lengths', field=field) from exc
    return M.shape


def _check_square(value, n, field, what='matrix'):
    shape = _matrix_shape(value, field)
    if len(shape) != 2 or shape[0] != shape[1]:
        raise ConfigError(f'{what} must be square, got shape {shape}', field=field)
    if shape[0] != n:
        raise ConfigError(f'{what} is {shape[0]}x{shape[1]}, the system has dimension {n}', field=field)


def _check_polynomial(poly, n, field):
    for k, term in enumerate(poly):
        if len(term['powers']) != n:
            raise ConfigError(f'monomial has {len(term["powers"])} exponents, expected {n}',
                              field=f'{field}[{k}].powers')


def _check_box(box, n, field):
    for side in ('lower', 'upper'):
        if len(box[side]) != n:
            raise ConfigError(f'expected {n} bounds, got {len(box[side])}', field=f'{field}.{side}')
    if not all(lo < 0.0 < up for lo, up in zip(box['lower'], box['upper'])):
        raise ConfigError('box must contain the origin strictly', field=field)


def _check_semantics(doc):
    n = doc['system']['dim']
    equations = doc['system']['equations']
    if len(equations) != n:
        raise ConfigError(f'expected {n} equations, got {len(equations)}', field='system.equations')
    for i, eq in enumerate(equations):
        _check_polynomial(eq, n, f'system.equations[{i}]')
    if 'original_box' in doc:
        _check_box(doc['original_box'], n, 'original_box')

    for c, case in enumerate(doc['cases']):
        prefix = f'cases[{c}]'
        if 'transform' in case:
            _check_square(case['transform'], n, f'{prefix}.transform', 'transform')
        _check_box(case['box'], n, f'{prefix}.box')
        premises = case.get('premises', [])
        for k, prem in enumerate(premises):
            _check_polynomial(prem['poly'], n, f'{prefix}.premises[{k}].poly')
        if 'factorization' in case:
            rows = case['factorization']
            if len(rows) != n or any(len(row) != n for row in rows):
                raise ConfigError(f'factorization must be {n}x{n}', field=f'{prefix}.factorization')
            for i, row in enumerate(case['factorization']):
                for j, entry in enumerate(row):
                    if len(entry.get('coeffs', [])) > len(premises):
                        raise ConfigError(f'{len(entry["coeffs"])} premise coefficients but only '
                                          f'{len(premises)} premises', field=f'{prefix}.factorization[{i}][{j}]')
        elif premises:
            raise ConfigError('premises given without a factorization', field=f'{prefix}.premises')
        if 'vertices' in case:
            for i, A in enumerate(case['vertices']):
                _check_square(A, n, f'{prefix}.vertices[{i}]', 'vertex matrix')
        if 'factorization' not in case and 'vertices' not in case:
            raise ConfigError('a case needs a factorization or pinned vertices', field=prefix)
        if 'certificate' in case:
            cert = case['certificate']
            for j, P in enumerate(cert['P']):
                _check_square(P, n, f'{prefix}.certificate.P[{j}]', 'P')
                try:
                    sym_matrix(P)
                except RoaForgeError as exc:
                    raise ConfigError(str(exc), field=f'{prefix}.certificate.P[{j}]') from exc
            if 'lambdas' in cert and len(cert['lambdas']) != len(cert['P']):
                raise ConfigError('one lambda per P matrix is required', field=f'{prefix}.certificate.lambdas')


def _build_case(case, n, index):
    prefix = f'cases[{index}]'
    try:
        transform = Transform.from_matrix(case['transform']) if 'transform' in case else Transform.identity(n)
    except RoaForgeError as exc:
        raise ConfigError(str(exc), field=f'{prefix}.transform') from exc
    factorization = None
    if 'factorization' in case:
        factorization = Factorization.from_dict(n, case.get('premises', []), case['factorization'])
    vertices = np.array(case['vertices'], dtype=float) if 'vertices' in case else None
    certificate = None
    if 'certificate' in case:
        cert = case['certificate']
        lambdas = tuple(cert['lambdas']) if 'lambdas' in cert else None
        certificate = PinnedCertificate(tuple(np.array(P, dtype=float) for P in cert['P']),
                                        lambdas, cert.get('tol'))
    return PipelineCase(transform, BoxDomain.from_dict(case['box']), factorization, vertices,
                        certificate, case.get('label', f'case {index}'))


def covering_box(cases):
    """Bounding box, in original coordinates, of every case's box mapped back through T^-1."""
    boxes = [map_box(case.box, case.transform.inverse()).bounding_box() for case in cases]
    lower = np.min([b.lower_array for b in boxes], axis=0)
    upper = np.max([b.upper_array for b in boxes], axis=0)
    return BoxDomain(tuple(lower), tuple(upper))


def build_run_config(doc, source=None, seed=None, lambda_grid=None, samples=None):
    """Validated document plus CLI overrides -> RunConfig. Flags beat the file, the file beats Config."""
    validate_document(doc)
    n = doc['system']['dim']
    try:
        system = PolyMap.from_dict(doc['system'])
    except RoaForgeError as exc:
        raise ConfigError(str(exc), field='system.equations') from exc
    cases = tuple(_build_case(case, n, c) for c, case in enumerate(doc['cases']))

    validation_doc = dict(doc.get('validation', {}))
    if seed is not None:
        validation_doc['seed'] = seed
    if samples is not None:
        validation_doc['samples'] = samples
        validation_doc['area_samples'] = samples
    validation = ValidationSettings(
        samples=validation_doc.get('samples', Config.VALIDATION_SAMPLES),
        seed=validation_doc.get('seed', Config.SEED),
        dt=validation_doc.get('dt', Config.DT),
        horizon=validation_doc.get('horizon', Config.HORIZON),
        conv_radius=validation_doc.get('conv_radius', Config.CONV_RADIUS),
        area_samples=validation_doc.get('area_samples', Config.AREA_SAMPLES),
    )
    if not validation.horizon > validation.dt:
        raise ConfigError('horizon must exceed dt', field='validation.horizon')

    solver_doc = dict(doc.get('solver', {}))
    if lambda_grid is not None:
        if not lambda_grid or any(v < 0 for v in lambda_grid):
            raise ConfigError('lambda grid must be non-empty and non-negative', field='solver.lambda_grid')
        solver_doc['lambda_grid'] = lambda_grid
    if 'lambda_grid' in solver_doc:
        solver_doc['lambda_grid'] = tuple(float(v) for v in solver_doc['lambda_grid'])
    options = default_options(seed=validation.seed, **solver_doc)

    if 'original_box' in doc:
        original_box = BoxDomain.from_dict(doc['original_box'])
    else:
        original_box = covering_box(cases)
    spec = PipelineSpec(system, original_box, cases, options)

    base = Path(source).parent if source is not None else Path('.')
    stem = Path(source).stem if source is not None else 'roa'
    out = doc.get('outputs', {})
    outputs = OutputPaths(
        results=base / out.get('results', f'{stem}.results.json'),
        svg=base / out.get('svg', f'{stem}.svg'),
        csv=base / out.get('csv', f'{stem}.csv'),
    )
    return RunConfig(spec, validation, outputs, None if source is None else Path(source))


def load_run_config(path, seed=None, lambda_grid=None, samples=None):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f'config file {path} not found', field='<file>') from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f'invalid JSON: {exc}', field='<file>') from exc
    config = build_run_config(doc, path, seed, lambda_grid, samples)
    logger.info('loaded %s: %d case(s), seed %d', path, len(config.spec.cases), config.validation.seed)
    return config


def with_results_path(config, results):
    return replace(config, outputs=replace(config.outputs, results=Path(results)))
