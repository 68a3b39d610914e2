"""Simulation-based validation of certified regions on the original nonlinear system."""
import logging
from collections import Counter
from dataclasses import dataclass

import numpy as np

from roa_forge.config import Config
from roa_forge.errors import DimensionError
from roa_forge.models import DecreaseReport, Trajectory, UnionRegion, ValidationReport
from roa_forge.services import levelset, sampling
from roa_forge.services.pipeline import membership, region_bounds
from roa_forge.services.polyalg import compile_field

logger = logging.getLogger(__name__)

CONVERGED = 'converged'
HORIZON = 'horizon'
LEFT_DOMAIN = 'left_domain'
DIVERGED = 'diverged'

MAX_REPORTED_FAILURES = 20


@dataclass(frozen=True, eq=False)
class BatchOutcome:
    initial_states: np.ndarray
    final_states: np.ndarray
    exit_reasons: np.ndarray
    exit_times: np.ndarray


def _rk4_step(field, X, dt):
    k1 = field(X)
    k2 = field(X + 0.5 * dt * k1)
    k3 = field(X + 0.5 * dt * k2)
    k4 = field(X + dt * k3)
    return X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_many(f, X0, dt=None, horizon=None, conv_radius=None, domain=None, observer=None):
    """Fixed-step RK4 for a batch of initial states.

    Each trajectory stops on entering the conv_radius ball, on reaching the
    divergence radius or a non-finite state, or, when `domain` is given, on
    leaving it. `observer(indices, X_before, X_after)` sees every step.
    """
    dt = Config.DT if dt is None else dt
    horizon = Config.HORIZON if horizon is None else horizon
    conv_radius = Config.CONV_RADIUS if conv_radius is None else conv_radius
    if not dt > 0 or not horizon > dt:
        raise ValueError('integration needs dt > 0 and horizon > dt')
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    if X0.shape[1] != f.dim:
        raise DimensionError(f'initial states have {X0.shape[1]} coordinates, field expects {f.dim}')

    field = compile_field(f)
    X = X0.copy()
    count = X.shape[0]
    reasons = np.full(count, HORIZON, dtype=object)
    exit_times = np.full(count, float(horizon))
    active = np.ones(count, dtype=bool)

    start = np.linalg.norm(X, axis=1) <= conv_radius
    reasons[start] = CONVERGED
    exit_times[start] = 0.0
    active &= ~start

    n_steps = int(round(horizon / dt))
    for step in range(1, n_steps + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        with np.errstate(over='ignore', invalid='ignore'):
            X_next = _rk4_step(field, X[idx], dt)
            norms = np.linalg.norm(X_next, axis=1)
        if observer is not None:
            observer(idx, X[idx], X_next)
        X[idx] = X_next

        diverged = ~np.all(np.isfinite(X_next), axis=1) | (norms >= Config.DIVERGENCE_RADIUS)
        converged = ~diverged & (norms <= conv_radius)
        left = np.zeros(idx.size, dtype=bool)
        if domain is not None:
            left = ~diverged & ~converged & ~domain.contains(X_next)
        for mask, reason in ((diverged, DIVERGED), (converged, CONVERGED), (left, LEFT_DOMAIN)):
            reasons[idx[mask]] = reason
            exit_times[idx[mask]] = step * dt
            active[idx[mask]] = False

    return BatchOutcome(X0, X, reasons, exit_times)


def integrate(f, x0, dt=None, horizon=None, conv_radius=None, domain=None):
    """Single RK4 trajectory with every state kept."""
    dt = Config.DT if dt is None else dt
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    states = [x0[0].copy()]

    def record(_, __, X_after):
        states.append(X_after[0].copy())

    outcome = integrate_many(f, x0, dt, horizon, conv_radius, domain, observer=record)
    reason = outcome.exit_reasons[0]
    return Trajectory(dt * np.arange(len(states)), np.array(states), reason == CONVERGED, reason)


def sample_region(region, n_samples, seed=0, bounding_box=None):
    """Quasi-random points inside a region (member or union), by rejection from its bounding box."""
    box = bounding_box or region_bounds(region)
    draw = max(4 * n_samples, 4096)
    for _ in range(12):
        X = sampling.halton(box, draw, seed=seed)
        inside = X[membership(region, X)]
        if len(inside) >= n_samples:
            return inside[:n_samples]
        draw *= 4
    logger.warning('only %d of %d requested points found inside the region', len(inside), n_samples)
    return inside


def _box_guard(region):
    members = region.members if isinstance(region, UnionRegion) else (region,)

    def inside_any_box(X):
        inside = np.zeros(len(X), dtype=bool)
        for m in members:
            inside |= m.box.contains(m.transform.apply(X))
        return inside

    return inside_any_box


def validate_region(region, f, n_samples=None, seed=None, dt=None, horizon=None, conv_radius=None):
    """Integrate the original system from points of the region and count convergence."""
    n_samples = n_samples or Config.VALIDATION_SAMPLES
    seed = Config.SEED if seed is None else seed
    X0 = sample_region(region, n_samples, seed)
    if len(X0) == 0:
        return ValidationReport(0, 0, None)

    inside_any_box = _box_guard(region)
    left = np.zeros(len(X0), dtype=bool)

    def watch_boxes(idx, _, X_after):
        left[idx] |= ~inside_any_box(X_after)

    outcome = integrate_many(f, X0, dt, horizon, conv_radius, observer=watch_boxes)
    converged = outcome.exit_reasons == CONVERGED
    failures = X0[~converged]
    if len(failures):
        worst = failures[0]
        logger.warning('%d of %d sampled trajectories did not converge, e.g. from %s',
                       len(failures), len(X0), worst.tolist())
    else:
        worst = X0[int(np.argmax(outcome.exit_times))]
    return ValidationReport(
        tested=len(X0),
        converged=int(converged.sum()),
        worst_point=tuple(float(v) for v in worst),
        failures=tuple(tuple(float(v) for v in p) for p in failures[:MAX_REPORTED_FAILURES]),
        exit_reasons=dict(Counter(str(r) for r in outcome.exit_reasons)),
        left_boxes=int(left.sum()),
    )


def lyapunov_decrease_check(roa, f, n_samples=None, seed=None, dt=None, horizon=None, conv_radius=None):
    """Largest one-step change of V(T x(t)) along trajectories while they stay in the region."""
    n_samples = n_samples or Config.VALIDATION_SAMPLES
    seed = Config.SEED if seed is None else seed
    X0 = sample_region(roa, n_samples, seed)
    inside = np.ones(len(X0), dtype=bool)
    state = {'max_delta': -np.inf, 'violations': 0, 'steps': 0, 'worst': None}

    def track(idx, X_before, X_after):
        tracked = inside[idx]
        if not tracked.any():
            return
        v_before = levelset.v_eval(roa.P_list, roa.transform.apply(X_before[tracked]))
        v_after = levelset.v_eval(roa.P_list, roa.transform.apply(X_after[tracked]))
        delta = v_after - v_before
        bad = delta > 1e-6 * (1.0 + np.abs(v_before))
        state['steps'] += int(tracked.sum())
        state['max_delta'] = max(state['max_delta'], float(delta.max()))
        if bad.any():
            state['violations'] += int(bad.sum())
            if state['worst'] is None:
                state['worst'] = X0[idx[tracked][bad][0]]
        inside[idx] &= levelset.contains(roa, X_after)

    integrate_many(f, X0, dt, horizon, conv_radius, observer=track)
    worst = state['worst']
    if state['violations']:
        logger.warning('Lyapunov decrease violated on %d steps', state['violations'])
    return DecreaseReport(state['max_delta'], state['violations'], state['steps'],
                          None if worst is None else tuple(float(v) for v in worst))
