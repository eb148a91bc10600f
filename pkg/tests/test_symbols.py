import math

import numpy as np
import pytest

from gmicrolocal import expr as E
from gmicrolocal.fixtures import build_symbol
from gmicrolocal.nets import EpsilonGrid
from gmicrolocal.symbols import (BadAngles, ConeGrid, SamplingBox, SymbolFamily, build_cone_cutoff,
                                 build_proper_cutoff, estimate_order, microellipticity_report,
                                 microsupport_estimate, radial_cutoff)

BOX1 = SamplingBox([math.pi], [math.pi], 8)
BOX2 = SamplingBox([math.pi, math.pi], [math.pi, math.pi], 8)


@pytest.mark.parametrize("label,order", [("bracket", 1.0), ("one_plus_xi2", 2.0), ("sin_x", 0.0),
                                         ("x_xi", 1.0)])
def test_estimated_orders(label, order):
    m = estimate_order(build_symbol(label), BOX1)
    assert abs(m - order) <= 0.05


def test_smoothing_symbol_reaches_floor():
    assert estimate_order(build_symbol("gauss_xi"), BOX1) == -10.0


def test_cone_grid_geometry():
    c = ConeGrid(2, 16)
    assert c.count == 16
    # sectors overlap: each spans one sector spacing on either side of its centre
    assert abs(c.half_width - 2 * math.pi / 16) < 1e-15
    assert sorted(c.sectors_containing(np.array([1.0, 0.0]))) == [0, 1, 15]
    mid = np.array([math.cos(math.pi / 16), math.sin(math.pi / 16)])
    assert sorted(c.sectors_containing(mid)) == [0, 1]
    assert ConeGrid(1, 16).count == 2


def test_radial_cutoff_values():
    chi = radial_cutoff(1, 4.0)
    k = np.array([0.0, 1.9, 4.0, 10.0])
    v = np.real(chi.evaluate({("xi", 0): k}))
    np.testing.assert_allclose(v, [0, 0, 1, 1], atol=1e-15)


def test_cone_cutoff_support():
    tau = build_cone_cutoff(np.array([0.0, 1.0]), math.pi / 8, math.pi / 4, 2)
    xi_in = np.array([[0.0, 10.0]])
    xi_out = np.array([[10.0, 0.0]])
    assert abs(tau(np.zeros((1, 2)), xi_in)[0] - 1) < 1e-14
    assert abs(tau(np.zeros((1, 2)), xi_out)[0]) < 1e-14
    with pytest.raises(BadAngles):
        build_cone_cutoff(np.array([0.0, 1.0]), 0.5, 0.4, 2)


def test_proper_cutoff():
    chi = build_proper_cutoff(0.5)
    assert chi(0.0, 0.4) == 1.0
    assert chi(0.0, 1.5) == 0.0
    assert chi(0.1, 2 * math.pi) == 1.0    # periodic distance


def test_bracket_is_slow_scale_elliptic():
    rep = microellipticity_report(build_symbol("bracket"), [BOX1], ConeGrid(1, 2), EpsilonGrid(1, 8))
    assert rep.all_slow_scale


def test_xi1_characteristic_along_e2():
    cones = ConeGrid(2, 16)
    rep = microellipticity_report(build_symbol("xi1"), [BOX2], cones, EpsilonGrid(1, 8))
    assert rep.verdict(0, 0) == "SlowScaleElliptic"
    assert rep.verdict(0, 4) != "SlowScaleElliptic"


def test_fast_coefficient_is_not_slow_scale_elliptic():
    # 1/eps in front of a vanishing factor destroys the slow-scale lower bound
    a = SymbolFamily(E.add(E.mul(E.EPS, E.power(E.xi(0), 2)), 0.0), 2, 1)
    rep = microellipticity_report(a, [BOX1], ConeGrid(1, 2), EpsilonGrid(1, 8))
    assert not rep.all_slow_scale


def test_cone_cutoff_microsupport():
    cones = ConeGrid(2, 16)
    est = microsupport_estimate(build_symbol("cone_e2"), [BOX2], cones, EpsilonGrid(1, 8))
    assert not est.smoothing(0, 4)
    assert est.smoothing(0, 0) and est.smoothing(0, 12)


def test_symbol_dict_round_trip():
    a = build_symbol("speed_variable")
    b = SymbolFamily.from_dict(a.to_dict())
    assert E.to_sexpr(a.expr) == E.to_sexpr(b.expr)
