from dataclasses import replace

import numpy as np
import pytest

from models.noise import NoiseSource
from services import noise_service
from services.lattice_service import make_torus


def test_same_key_same_draws(src):
    a = noise_service.standard_normals(src, 5, 100)
    b = noise_service.standard_normals(NoiseSource(seed=src.seed), 5, 100)
    assert np.array_equal(a, b)


def test_steps_replicas_and_channels_are_distinct(src):
    base = noise_service.standard_normals(src, 0, 50)
    assert not np.array_equal(base, noise_service.standard_normals(src, 1, 50))
    assert not np.array_equal(base, noise_service.standard_normals(src, -1, 50))
    assert not np.array_equal(base, noise_service.standard_normals(noise_service.for_replica(src, 1), 0, 50))
    assert not np.array_equal(base, noise_service.standard_normals(noise_service.independent(src), 0, 50))


def test_draws_are_prefix_consistent(src):
    long = noise_service.standard_normals(src, 3, 40)
    short = noise_service.standard_normals(src, 3, 10)
    assert np.array_equal(long[:10], short)


def test_increment_matches_step_noise(src, torus):
    field = noise_service.step_noise(src, torus, 7)
    x = (2, -1)
    assert noise_service.increment(src, x, 7, torus) == field[torus.index_of(x)]


def test_increment_needs_addressing(src):
    with pytest.raises(ValueError):
        noise_service.increment(src, (0, 0), 0)


def test_window_gives_shared_noise_to_overlapping_grids(src):
    windowed = replace(src, window_origin=(-6, -6), window_shape=(13, 13))
    left = make_torus(2, 2, center=(-1, 0))
    right = make_torus(2, 2, center=(1, 0))
    a = noise_service.step_noise(windowed, left, 4)
    b = noise_service.step_noise(windowed, right, 4)
    # глобальный узел (0, 0): локальная координата (1, 0) слева и (-1, 0) справа
    assert a[left.index_of((1, 0))] == b[right.index_of((-1, 0))]
    assert noise_service.increment(windowed, (0, 0), 4) == a[left.index_of((1, 0))]


def test_window_rejects_grid_outside(src):
    windowed = replace(src, window_origin=(0, 0), window_shape=(3, 3))
    with pytest.raises(ValueError):
        noise_service.step_noise(windowed, make_torus(2, 2), 0)


def test_mean_subtracted_noise_sums_to_zero(src, torus):
    xi = noise_service.mean_subtracted(src, torus, 3)
    assert abs(xi.sum()) < 1e-12


def test_draws_are_standard_normal(src):
    z = noise_service.standard_normals(src, 0, 200_000)
    assert abs(z.mean()) < 0.02
    assert abs(z.var() - 1.0) < 0.02


def test_brownian_increments_scale_with_dt(src):
    fine = replace(src, dt=0.01)
    inc = noise_service.brownian_increments(fine, 1000)
    assert np.allclose(inc, noise_service.standard_normals(fine, 0, 1000) * 0.1)


@pytest.mark.parametrize("bad", [{"seed": -1}, {"seed": 2 ** 64}, {"seed": 1, "replica": -1},
                                 {"seed": 1, "window_origin": (0, 0)}])
def test_noise_source_validation(bad):
    with pytest.raises(ValueError):
        NoiseSource(**bad)
