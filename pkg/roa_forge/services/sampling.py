"""Deterministic point sets shared by the residual, level-set and validation checks."""
import numpy as np
from scipy.stats import qmc


def halton(box, count, seed=0):
    """`count` scrambled Halton points inside `box`, reproducible for a given seed."""
    sampler = qmc.Halton(d=box.dim, scramble=True, seed=seed)
    return box.scale_points(sampler.random(count))


def uniform(box, count, seed=0):
    rng = np.random.default_rng(seed)
    return box.scale_points(rng.random((count, box.dim)))


def boundary_points(box, count, seed=0):
    """Quasi-random points on the faces of `box`, faces weighted by their area."""
    n = box.dim
    lower, upper = box.lower_array, box.upper_array
    widths = upper - lower
    face_areas = np.array([np.prod(np.delete(widths, axis)) for axis in range(n)])
    face_weights = np.repeat(face_areas, 2) / (2.0 * face_areas.sum())

    U = qmc.Halton(d=n, scramble=True, seed=seed).random(count)
    faces = np.searchsorted(np.cumsum(face_weights), U[:, 0] * (1.0 - 1e-15), side='right')
    faces = np.minimum(faces, 2 * n - 1)
    # reuse the face-selecting coordinate, rescaled within its face bin
    edges = np.concatenate(([0.0], np.cumsum(face_weights)))
    U[:, 0] = np.clip((U[:, 0] - edges[faces]) / face_weights[faces], 0.0, 1.0)
    X = box.scale_points(np.roll(U, -1, axis=1))
    axis = faces // 2
    rows = np.arange(count)
    X[rows, axis] = np.where(faces % 2 == 0, lower[axis], upper[axis])
    return X
