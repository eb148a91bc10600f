import numpy as np
import pytest

from gmicrolocal.fixtures import build_fixture, build_symbol
from gmicrolocal.nets import EpsilonGrid
from gmicrolocal.quantize import GridSpec
from gmicrolocal.symbols import ConeGrid
from gmicrolocal.wavefront import (CellDecomposition, WFConfig, decay_table, dilate, ginf_verdict,
                                   singsupp_estimate, spectral_derivative, verify_microlocality,
                                   verify_noncharacteristic, w_cl_estimate, wavefront_estimate)

GRID = EpsilonGrid(1, 8)
S1 = GridSpec(1, 256)


@pytest.fixture(scope="module")
def delta1d():
    return build_fixture("delta1d", S1, GRID)


@pytest.mark.parametrize("spec", [GridSpec(1, 256), GridSpec(2, 128)], ids=["1d", "2d"])
def test_windows_partition_unity(spec):
    cells = CellDecomposition(spec)
    total = sum(cells.window(c) for c in cells.cells)
    np.testing.assert_allclose(total, 1, atol=1e-14)


def test_cell_geometry():
    cells = CellDecomposition(S1)
    assert cells.C == 4
    assert cells.cell_of([0.1]) == (0,) and cells.cell_of([6.2]) == (3,)
    nb = cells.neighbours((0,))
    assert (3,) in nb and (1,) in nb


def test_dilation_one_cell_one_sector():
    cells = CellDecomposition(GridSpec(2, 256))
    cones = ConeGrid(2, 16)
    d = dilate({((0, 0), 0)}, cells, cones)
    assert ((3, 3), 15) in d and ((1, 1), 1) in d and ((2, 0), 0) not in d
    assert len(d) == 9 * 3


def test_delta_singular_only_at_its_cell(delta1d):
    est = wavefront_estimate(delta1d)
    assert est.singular_cells() == [(1,)]
    for (c, d), v in est.verdicts.items():
        if c == (1,):
            assert 0.7 <= v.N_slope_vs_l <= 1.3
        else:
            assert v.regular and v.N_slope_vs_l <= 0.15


def test_two_deltas():
    u = build_fixture("two_deltas1d", S1, GRID)
    assert singsupp_estimate(u) == [(1,), (2,)]


@pytest.mark.parametrize("name", ["sin", "constant", "plane_wave", "lorentzian_slow"])
def test_smooth_families_are_regular(name):
    u = build_fixture(name, S1, GRID)
    assert not wavefront_estimate(u).singular


def test_locality_windowed_away(delta1d):
    # multiply by a window vanishing near x0: the delta cell never appears
    cells = CellDecomposition(S1)
    w = cells.window((3,))
    u = delta1d.map(lambda d: w * d)
    assert (1,) not in singsupp_estimate(u)


def test_decay_table_shape(delta1d):
    cells, cones = CellDecomposition(S1), ConeGrid(1, 16)
    t = decay_table(delta1d, cells, cones, 5)
    assert t.log2M[(1,)].shape == (2, 6, len(GRID))


def test_wfconfig_resolution():
    cfg = WFConfig().resolved(GridSpec(2, 128))
    assert cfg.L == 4 and cfg.min_radius == 2


def test_spectral_derivative_of_sine():
    x = S1.axis()
    d = spectral_derivative(S1, np.sin(3 * x), (2,))
    np.testing.assert_allclose(d.real, -9 * np.sin(3 * x), atol=1e-10)


def test_ginf_pair():
    spec, grid = GridSpec(1, 512), EpsilonGrid(1, 10)
    slow = ginf_verdict(build_fixture("lorentzian_slow", spec, grid))
    fast = ginf_verdict(build_fixture("lorentzian_fast", spec, grid))
    assert slow.verdict and not fast.verdict
    assert fast.slope_per_order >= 0.4


def test_ginf_delta_is_not_ginf(delta1d):
    assert not ginf_verdict(delta1d).verdict


def test_identity_microlocality_equal(delta1d):
    r = verify_microlocality(build_symbol("identity1"), delta1d)
    assert r["pass"] and r["equal"]


def test_bracket_noncharacteristic_on_delta(delta1d):
    r = verify_noncharacteristic(build_symbol("bracket"), delta1d)
    assert r["pass"] and r["first_inclusion"] and r["second_inclusion"]


def test_classical_probe_agrees_with_decay_estimate(delta1d):
    est = wavefront_estimate(delta1d)
    assert w_cl_estimate(delta1d) == est.singular


def test_step_directions_2d():
    spec = GridSpec(2, 128)
    est = wavefront_estimate(build_fixture("heaviside2d", spec, GRID))
    for c in est.cells.cells:
        assert {d for (cc, d) in est.singular if cc == c} == {15, 0, 1, 7, 8, 9}


def test_conormal_fixture_singular_along_t():
    spec = GridSpec(2, 128)
    est = wavefront_estimate(build_fixture("conormal", spec, GRID))
    assert {d for _, d in est.singular} == {3, 4, 5, 11, 12, 13}
