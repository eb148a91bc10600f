import math

import numpy as np
import pytest

from gmicrolocal.fixtures import (FIXTURES, SYMBOL_LABELS, build_fixture, build_symbol, default_point,
                                  fixture_catalog, periodic_gaussian, periodic_step)
from gmicrolocal.nets import EpsilonGrid
from gmicrolocal.quantize import GridSpec


def test_catalog_size():
    assert len(fixture_catalog()) >= 10


def test_delta_integrates_to_one():
    spec = GridSpec(1, 256)
    u = build_fixture("delta1d", spec, EpsilonGrid(4, 9))
    assert abs(u.slice(0).real.sum() * spec.h - 1) <= 1e-6


def test_delta2d_integrates_to_one():
    spec = GridSpec(2, 128)
    u = build_fixture("delta2d", spec, EpsilonGrid(1, 8))
    for j in range(len(u)):
        assert abs(u.slice(j).real.sum() * spec.h ** 2 - 1) <= 1e-6


def test_heaviside2d_slices_constant_in_x2():
    u = build_fixture("heaviside2d", GridSpec(2, 64), EpsilonGrid(1, 6))
    for d in u.data:
        assert np.ptp(np.abs(d - d[:, :1])) == 0


def test_step_levels():
    x = np.linspace(0, 2 * math.pi, 512, endpoint=False)
    s = periodic_step(x, 1.0, 1e-3)
    assert abs(s[np.argmin(abs(x - 2.5))] - 1) < 1e-12
    assert abs(s[np.argmin(abs(x - 5.0))]) < 1e-12


def test_periodic_gaussian_is_periodic():
    assert abs(periodic_gaussian(0.1, 0.0, 2.0) - periodic_gaussian(0.1 + 2 * math.pi, 0.0, 2.0)) < 1e-14


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_every_fixture_builds(name):
    n = FIXTURES[name].n or 1
    u = build_fixture(name, GridSpec(n, 64), EpsilonGrid(1, 6))
    assert np.all(np.isfinite(u.data))


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError):
        build_fixture("delta2d", GridSpec(1, 64), EpsilonGrid(1, 6))
    with pytest.raises(KeyError):
        build_fixture("nope", GridSpec(1, 64), EpsilonGrid(1, 6))


def test_default_point_is_a_cell_centre():
    spec = GridSpec(1, 256)
    assert abs(default_point(spec)[0] - 1.5 * (2 * math.pi / 4)) < 1e-15


def test_symbol_catalog_builds():
    for lab in SYMBOL_LABELS:
        assert build_symbol(lab).n in (1, 2)
