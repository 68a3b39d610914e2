from dataclasses import replace

import numpy as np
import pytest

from roa_forge.errors import DegeneratePremiseError, FactorizationError
from roa_forge.models import AffineEntry, BoxDomain, Factorization, Polynomial
from roa_forge.services import sampling
from roa_forge.services.polyalg import compile_poly, compose_linear
from roa_forge.services.tsmodel import (
    bound_premise,
    build_ts,
    corner_assignments,
    reconstruct_residual,
    ts_field,
    weights,
)

from conftest import SEC3_VERTICES


@pytest.mark.parametrize('poly, box, expected', [
    (Polynomial.variable(2, 0), BoxDomain((-1.0, -0.5), (1.0, 0.5)), (-1.0, 1.0)),
    (Polynomial.variable(2, 1, 2), BoxDomain((-1.0, -0.5), (1.0, 0.5)), (0.0, 0.25)),
    (Polynomial.variable(2, 0), BoxDomain.symmetric([0.55, 0.55]), (-0.55, 0.55)),
])
def test_monomial_premise_bounds_are_exact(poly, box, expected):
    z_min, z_max, tight = bound_premise(poly, box)
    assert (z_min, z_max) == expected
    assert tight


def test_sum_premise_bounds_enclose_range(sec3_box):
    z = Polynomial.from_terms(2, [(1.0, (1, 0)), (1.0, (0, 2))])
    z_min, z_max, tight = bound_premise(z, sec3_box)
    assert not tight
    assert z_min <= -1.0 and z_max >= 1.25
    assert z_min == pytest.approx(-1.0, abs=1e-9) and z_max == pytest.approx(1.25, abs=1e-9)


def test_constant_premise_rejected(sec3_box):
    with pytest.raises(DegeneratePremiseError):
        bound_premise(Polynomial.from_terms(2, [(3.0, (0, 0))]), sec3_box)


def test_corner_order_last_premise_fastest():
    assert corner_assignments(2) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_sec3_vertices_match_printed_matrices(sec3_system, sec3_factorization, sec3_box):
    model = build_ts(sec3_system, sec3_factorization, sec3_box)
    np.testing.assert_allclose(model.vertices, SEC3_VERTICES, atol=1e-12, rtol=0)
    assert [p.tight for p in model.premises] == [True, True]


def test_linear_system_has_single_vertex(linear_field):
    A = np.array([[-1.0, 0.5], [-0.5, -2.0]])
    model = build_ts(linear_field(A), Factorization.from_linear(A), BoxDomain.symmetric([1.0, 1.0]))
    assert model.vertices.shape == (1, 2, 2)
    np.testing.assert_array_equal(model.vertices[0], A)
    assert reconstruct_residual(model) <= 1e-12


def test_weights_at_origin(sec3_system, sec3_factorization, sec3_box):
    model = build_ts(sec3_system, sec3_factorization, sec3_box)
    w, in_box = weights(model, np.zeros(2))
    np.testing.assert_allclose(w, [0.5, 0.0, 0.5, 0.0], atol=1e-15)
    assert in_box


def test_weights_at_corner_pick_one_vertex(sec3_system, sec3_factorization, sec3_box):
    model = build_ts(sec3_system, sec3_factorization, sec3_box)
    w, _ = weights(model, np.array([1.0, 0.5]))
    np.testing.assert_allclose(w, [0.0, 0.0, 0.0, 1.0], atol=1e-15)


def test_out_of_box_point_flagged(sec3_system, sec3_factorization, sec3_box):
    model = build_ts(sec3_system, sec3_factorization, sec3_box)
    _, in_box = weights(model, np.array([2.0, 0.0]))
    assert not in_box


def test_convex_sum_and_premise_reconstruction(sec3_system, sec3_factorization, sec3_box):
    model = build_ts(sec3_system, sec3_factorization, sec3_box)
    X = sampling.halton(sec3_box, 1000, seed=7)
    w, _ = weights(model, X)
    assert np.all(np.abs(w.sum(axis=1) - 1.0) <= 1e-12)
    assert np.all((w >= -1e-12) & (w <= 1.0 + 1e-12))
    for k, prem in enumerate(model.premises):
        bits = np.array([corner[k] for corner in corner_assignments(len(model.premises))])
        corner_values = np.where(bits == 1, prem.z_max, prem.z_min)
        np.testing.assert_allclose(w @ corner_values, compile_poly(prem.definition)(X), atol=1e-12)


def test_field_reconstruction(sec3_system, sec3_factorization, sec3_box):
    model = build_ts(sec3_system, sec3_factorization, sec3_box)
    assert reconstruct_residual(model, 1000) <= 1e-9
    x = np.array([[0.3, -0.2]])
    np.testing.assert_allclose(ts_field(model, x)[0], [-0.09 - 0.6 + 0.4, -0.008 + 0.2], atol=1e-12)


def test_sheared_model_has_eight_vertices(sec3_system, sec4_factorization, sec4_box, shear):
    field = compose_linear(sec3_system, shear)
    model = build_ts(field, sec4_factorization, sec4_box)
    assert model.vertices.shape == (8, 2, 2)
    assert reconstruct_residual(model, 1000) <= 1e-9
    # every vertex is upper triangular with a negative diagonal
    assert np.all(model.vertices[:, 1, 0] == 0.0)
    assert np.all(model.vertices[:, [0, 1], [0, 1]] < 0.0)


def test_corrupted_vertex_is_detected(sec3_system, sec3_factorization, sec3_box):
    model = build_ts(sec3_system, sec3_factorization, sec3_box)
    vertices = model.vertices.copy()
    vertices[0, 0, 0] += 0.1
    assert reconstruct_residual(replace(model, vertices=vertices)) > 1e-3


def test_wrong_factorization_reports_worst_point(sec3_system, sec3_box):
    wrong = Factorization(
        (Polynomial.variable(2, 0),),
        ((AffineEntry(-2.0, (1.0,)), AffineEntry(-2.0)), (AffineEntry(0.0), AffineEntry(-1.0))),
    )
    with pytest.raises(FactorizationError) as info:
        build_ts(sec3_system, wrong, sec3_box)
    assert info.value.residual > 1e-9
    assert sec3_box.contains(info.value.point)
