import numpy as np
import pytest

from roa_forge.errors import DimensionError
from roa_forge.models import BoxDomain, RoaEstimate, Transform, UnionRegion
from roa_forge.schema import load_run_config
from roa_forge.services.pipeline import RoaPipeline, membership
from roa_forge.services.simcheck import (
    CONVERGED,
    DIVERGED,
    HORIZON,
    LEFT_DOMAIN,
    integrate,
    integrate_many,
    lyapunov_decrease_check,
    sample_region,
    validate_region,
)

from conftest import DATA_DIR

EYE = np.eye(2)
FAST = {'dt': 0.01, 'horizon': 20.0}


def _union(name):
    config = load_run_config(DATA_DIR / name)
    outcomes = RoaPipeline(config.spec.options).run_all(config.spec)
    assert all(o.success for o in outcomes), [o.message for o in outcomes]
    return config.spec.system, UnionRegion(tuple(o.estimate for o in outcomes))


@pytest.fixture(scope='module')
def sec3_region():
    return _union('sec3.json')


def test_exponential_decay(linear_field):
    trajectory = integrate(linear_field([[-1.0]]), [1.0], dt=0.01, horizon=1.0, conv_radius=1e-12)
    assert trajectory.exit_reason == HORIZON
    assert len(trajectory.states) == 101
    assert trajectory.times[-1] == pytest.approx(1.0)
    assert trajectory.final_state[0] == pytest.approx(np.exp(-1.0), abs=1e-6)


def test_fourth_order_convergence(linear_field):
    f = linear_field([[-1.0]])
    errors = []
    for dt in (0.1, 0.05):
        final = integrate(f, [1.0], dt=dt, horizon=1.0, conv_radius=1e-12).final_state[0]
        errors.append(abs(final - np.exp(-1.0)))
    assert 12.0 <= errors[0] / errors[1] <= 20.0


def test_batch_matches_single_runs(sec3_system):
    X0 = np.array([[0.1, 0.1], [-0.3, 0.2], [0.5, -0.4]])
    batch = integrate_many(sec3_system, X0, dt=0.01, horizon=2.0, conv_radius=1e-12)
    for x0, final in zip(X0, batch.final_states):
        single = integrate(sec3_system, x0, dt=0.01, horizon=2.0, conv_radius=1e-12)
        np.testing.assert_allclose(single.final_state, final, rtol=0, atol=1e-14)


def test_sec3_trajectories(sec3_system):
    near = integrate(sec3_system, [0.1, 0.1], dt=0.01, horizon=50.0)
    assert near.converged and near.exit_reason == CONVERGED
    assert np.linalg.norm(near.final_state) <= 1e-4
    far = integrate(sec3_system, [0.0, 2.0], dt=0.01, horizon=50.0)
    assert not far.converged
    assert far.exit_reason == DIVERGED


def test_leaving_the_domain_stops_a_trajectory(sec3_system):
    outcome = integrate_many(sec3_system, [[0.0, 0.45]], dt=0.01, horizon=5.0, domain=BoxDomain.symmetric([1.0, 0.3]))
    assert outcome.exit_reasons[0] == LEFT_DOMAIN
    assert outcome.exit_times[0] == pytest.approx(0.01)


def test_integration_arguments_checked(sec3_system):
    with pytest.raises(ValueError):
        integrate_many(sec3_system, [[0.1, 0.1]], dt=0.1, horizon=0.05)
    with pytest.raises(ValueError):
        integrate_many(sec3_system, [[0.1, 0.1]], dt=0.0)
    with pytest.raises(DimensionError):
        integrate_many(sec3_system, [[0.1, 0.1, 0.1]], dt=0.01, horizon=1.0)


def test_sampled_points_lie_in_region(sec3_region):
    _, region = sec3_region
    X = sample_region(region, 300, seed=5)
    assert X.shape == (300, 2)
    assert np.all(membership(region, X))
    np.testing.assert_array_equal(X, sample_region(region, 300, seed=5))


def test_certified_region_validates(sec3_region):
    system, region = sec3_region
    report = validate_region(region, system, n_samples=200, seed=0, **FAST)
    assert report.tested == 200
    assert report.passed
    assert report.fraction == 1.0
    assert report.failures == ()
    assert report.left_boxes == 0


def test_oversized_region_fails_validation(sec3_system):
    # x1' < 0 whenever x1 < -2 and x2 ~ 0, so the left part of this box escapes
    box = BoxDomain((-3.0, -0.5), (1.0, 0.5))
    region = RoaEstimate([EYE], 100.0, Transform.identity(2), box)
    report = validate_region(region, sec3_system, n_samples=200, seed=0, **FAST)
    assert report.converged < report.tested
    assert not report.passed
    assert report.exit_reasons.get(DIVERGED, 0) > 0
    assert report.worst_point in report.failures


def test_decrease_along_certified_member(sec3_region):
    system, region = sec3_region
    report = lyapunov_decrease_check(region.members[0], system, n_samples=100, seed=0, **FAST)
    assert report.passed
    assert report.violations == 0
    assert report.steps > 0


def test_decrease_for_stable_linear_system(linear_field):
    roa = RoaEstimate([EYE], 1.0, Transform.identity(2), BoxDomain.symmetric([2.0, 2.0]))
    report = lyapunov_decrease_check(roa, linear_field(-EYE), n_samples=50, seed=1, **FAST)
    assert report.passed
    assert report.max_delta < 0.0


def test_wrong_sign_certificate_is_caught(linear_field):
    roa = RoaEstimate([-EYE], 1.0, Transform.identity(2), BoxDomain.symmetric([2.0, 2.0]))
    report = lyapunov_decrease_check(roa, linear_field(-EYE), n_samples=50, seed=1, **FAST)
    assert not report.passed
    assert report.violations > 0
    assert report.worst_point is not None


def test_fresh_factorized_union_validates():
    system, region = _union('sec4_fresh.json')
    report = validate_region(region, system, n_samples=500, seed=0, dt=0.01, horizon=30.0)
    assert report.tested == 500
    assert report.passed, report.failures
    for member in region.members:
        assert lyapunov_decrease_check(member, system, n_samples=50, seed=0, **FAST).passed
