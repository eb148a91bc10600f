import math

import numpy as np
import pytest

from gmicrolocal.fixtures import NET_CATALOG
from gmicrolocal.nets import (EpsilonGrid, NetSample, NonFinite, classify_scale, fit_growth_exponent,
                              is_negligible_vs, sample_net)


GRID = EpsilonGrid(1, 12)


@pytest.mark.parametrize("case", NET_CATALOG, ids=[c.label for c in NET_CATALOG])
def test_catalog_classification(case):
    cls = classify_scale(sample_net(case.fn, GRID))
    assert cls.tag == case.tag


@pytest.mark.parametrize("case", [c for c in NET_CATALOG if c.exponent is not None and c.tag != "Negligible"],
                         ids=lambda c: c.label)
def test_pure_power_slopes_exact(case):
    fit = fit_growth_exponent(sample_net(case.fn, GRID))
    assert abs(fit.slope - case.exponent) <= 1e-9


def test_grid_values_and_parse():
    g = EpsilonGrid.parse("3:10")
    assert len(g) == 8
    assert g.eps[0] == 2.0 ** -3 and g.eps[-1] == 2.0 ** -10
    assert str(g) == "3:10"


@pytest.mark.parametrize("a,b", [(0, 8), (1, 5)])
def test_grid_rejects_bad_ranges(a, b):
    with pytest.raises(ValueError):
        EpsilonGrid(a, b)


def test_non_finite_values_raise():
    with pytest.raises(NonFinite):
        sample_net(lambda e: math.inf, GRID)
    with pytest.raises(NonFinite):
        NetSample(GRID, np.full(len(GRID), np.nan))


def test_wrong_length_raises():
    with pytest.raises(ValueError):
        NetSample(GRID, np.ones(3))


def test_product_of_slow_scale_nets_is_slow_scale():
    a = sample_net(lambda e: 1 + math.log2(1 / e), GRID)
    b = sample_net(lambda e: 2 + math.log2(1 / e) ** 2, GRID)
    assert classify_scale(a * b).tag == "SlowScale"


def test_negligible_vs_power():
    assert is_negligible_vs(sample_net(lambda e: math.exp(-1 / e), GRID))
    assert not is_negligible_vs(sample_net(lambda e: e ** 2, GRID))


def test_classification_is_scale_invariant_for_moderate_powers():
    for c in (1e-3, 1.0, 1e3):
        cls = classify_scale(sample_net(lambda e: c * e ** -2, GRID))
        assert cls.tag == "Moderate" and abs(cls.exponent - 2) < 1e-9
