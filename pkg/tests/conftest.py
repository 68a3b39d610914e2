import shutil
from pathlib import Path

import numpy as np
import pytest

from roa_forge.models import (
    AffineEntry,
    BoxDomain,
    Factorization,
    LdiSystem,
    PolyMap,
    Polynomial,
    Transform,
)

DATA_DIR = Path(__file__).resolve().parent.parent / 'data'

SEC3_P = (
    np.array([[0.1071, -0.0829], [-0.0829, 0.2836]]),
    np.array([[0.1045, -0.0852], [-0.0852, 0.2605]]),
)
SEC4_P = (
    np.array([[5.0473, -1.1747], [-1.1747, 8.4518]]),
    np.array([[5.0896, -1.0599], [-1.0599, 8.7648]]),
)
SEC3_VERTICES = np.array([
    [[-1.0, -2.0], [0.0, -1.0]],
    [[-1.0, -2.0], [0.0, -0.75]],
    [[-3.0, -2.0], [0.0, -1.0]],
    [[-3.0, -2.0], [0.0, -0.75]],
])


def sec4_printed_vertices(a8_sign=-1.0):
    """A1..A8 as printed for the sheared system; A8's (1,2) sign is uncertain."""
    return np.array([
        [[-1.45, -0.3328], [0.0, -1.1664]],
        [[-1.45, 0.3328], [0.0, -0.8336]],
        [[-0.24, -1.5428], [0.0, -1.1664]],
        [[-0.24, 0.8773], [0.0, -0.8336]],
        [[-2.55, -0.3328], [0.0, -1.1664]],
        [[-2.55, 0.3328], [0.0, -0.8336]],
        [[-1.34, -1.5428], [0.0, -1.1664]],
        [[-1.34, a8_sign * 0.8773], [0.0, -0.8336]],
    ])


@pytest.fixture
def sec3_system():
    return PolyMap(2, (
        Polynomial.from_terms(2, [(-1.0, (2, 0)), (-2.0, (1, 0)), (-2.0, (0, 1))]),
        Polynomial.from_terms(2, [(1.0, (0, 3)), (-1.0, (0, 1))]),
    ))


@pytest.fixture
def sec4_system():
    return PolyMap(2, (
        Polynomial.from_terms(2, [(-1.0, (2, 0)), (4.0, (1, 1)), (-2.0, (1, 0)), (2.0, (0, 3)), (-4.0, (0, 2))]),
        Polynomial.from_terms(2, [(1.0, (0, 3)), (-1.0, (0, 1))]),
    ))


@pytest.fixture
def sec3_box():
    return BoxDomain((-1.0, -0.5), (1.0, 0.5))


@pytest.fixture
def sec4_box():
    return BoxDomain.symmetric([0.55, 0.55])


@pytest.fixture
def shear():
    return Transform.from_matrix([[1.0, 2.0], [0.0, 1.0]])


@pytest.fixture
def sec3_factorization():
    # A(z) = [[-2 - z1, -2], [0, -1 + z2]] with z1 = x1, z2 = x2^2
    return Factorization(
        (Polynomial.variable(2, 0), Polynomial.variable(2, 1, 2)),
        (
            (AffineEntry(-2.0, (-1.0, 0.0)), AffineEntry(-2.0)),
            (AffineEntry(0.0), AffineEntry(-1.0, (0.0, 1.0))),
        ),
    )


@pytest.fixture
def sec4_factorization():
    # z1 = x1, z2 = x2, z3 = x2^2 in sheared coordinates
    return Factorization(
        (Polynomial.variable(2, 0), Polynomial.variable(2, 1), Polynomial.variable(2, 1, 2)),
        (
            (AffineEntry(-2.0, (-1.0, 0.0, 0.0)), AffineEntry(0.0, (4.0, -4.0, 2.0))),
            (AffineEntry(0.0), AffineEntry(-1.0, (0.0, 0.0, 1.0))),
        ),
    )


@pytest.fixture
def sec3_ldi():
    return LdiSystem(SEC3_VERTICES)


@pytest.fixture
def linear_field():
    """x' = A x as a PolyMap, for any square A."""
    def build(A):
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        rows = []
        for i in range(n):
            powers = [tuple(int(k == j) for k in range(n)) for j in range(n)]
            rows.append(Polynomial.from_terms(n, [(A[i, j], powers[j]) for j in range(n)]))
        return PolyMap(n, tuple(rows))
    return build


@pytest.fixture
def data_config(tmp_path):
    """Copy a bundled run config into tmp_path so its outputs land there."""
    def copy(name):
        target = tmp_path / name
        shutil.copy(DATA_DIR / name, target)
        return target
    return copy
