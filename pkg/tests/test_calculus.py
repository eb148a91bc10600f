import math

import numpy as np
import pytest

from gmicrolocal import expr as E
from gmicrolocal.calculus import (Expansion, NotElliptic, borel_sum, composition_residual_order,
                                  composition_symbol, expand_adjoint, expand_compose,
                                  expand_transpose, parametrix,
                                  reduce_amplitude)
from gmicrolocal.fixtures import build_symbol
from gmicrolocal.quantize import GridSpec, apply_symbol
from gmicrolocal.symbols import SymbolFamily

X, XI, Y = E.x(0), E.xi(0), E.y(0)
PTS = {("x", 0): np.linspace(0.3, 5.9, 9), ("xi", 0): np.linspace(-7, 11, 9), ("eps", 0): 0.25}


def _vals(ex):
    return [np.broadcast_to(t.expr.evaluate(PTS), (9,)) for _, t in ex.terms]


def _check(ex, orders, exprs):
    assert ex.orders == orders
    for got, want in zip(_vals(ex), exprs):
        np.testing.assert_allclose(got, np.broadcast_to(want.evaluate(PTS), (9,)), atol=1e-12)


def test_compose_xi_x():
    ex = expand_compose(SymbolFamily(XI, 1, 1), SymbolFamily(X, 0, 1), 2)
    _check(ex, [1, 0], [E.mul(X, XI), E.const(0, -1)])


def test_compose_with_identity():
    b = build_symbol("speed_variable")
    ex = expand_compose(SymbolFamily(E.ONE, 0, 1), b, 5)
    _check(ex, [1], [b.expr])


def test_compose_xi2_sin():
    # D_x^2 = -d^2/dx^2, so the order-0 term is +sin x
    ex = expand_compose(SymbolFamily(E.power(XI, 2), 2, 1), SymbolFamily(E.sin(X), 0, 1), 3)
    _check(ex, [2, 1, 0], [E.mul(E.power(XI, 2), E.sin(X)),
                           E.mul(E.const(0, -2), XI, E.cos(X)), E.sin(X)])


def test_compose_exact_on_grid():
    spec = GridSpec(1, 128)
    a, b = SymbolFamily(E.power(XI, 2), 2, 1), SymbolFamily(E.sin(X), 0, 1)
    c = expand_compose(a, b, 3).total()
    rng = np.random.default_rng(1)
    k = spec.freqs()
    for _ in range(5):
        uh = np.where(np.abs(k) < 30, rng.normal(size=128) + 1j * rng.normal(size=128), 0)
        u = np.fft.ifft(uh)
        lhs = apply_symbol(a.expr, spec, apply_symbol(b.expr, spec, u, 1.0), 1.0)
        np.testing.assert_allclose(apply_symbol(c, spec, u, 1.0), lhs, atol=1e-9 * np.abs(lhs).max())


def test_adjoint_examples():
    _check(expand_adjoint(SymbolFamily(E.mul(X, XI), 1, 1), 2), [1, 0], [E.mul(X, XI), E.const(0, -1)])
    _check(expand_adjoint(build_symbol("bracket"), 3), [1], [E.jb(1)])
    _check(expand_adjoint(SymbolFamily(E.mul(E.const(0, 1), X), 0, 1), 2), [0],
           [E.mul(E.const(0, -1), X)])


def test_transpose_examples():
    _check(expand_transpose(SymbolFamily(XI, 1, 1), 2), [1], [E.neg(XI)])
    _check(expand_transpose(SymbolFamily(X, 0, 1), 2), [0], [X])
    # transpose of x D is -D x = -x D + i, so the lower term is +i
    _check(expand_transpose(SymbolFamily(E.mul(X, XI), 1, 1), 2), [1, 0],
           [E.neg(E.mul(X, XI)), E.const(0, 1)])


def test_transpose_duality_on_grid():
    spec = GridSpec(1, 256)
    x = spec.axis()
    env = np.exp(-(x - math.pi) ** 2 / 0.18)
    rng = np.random.default_rng(3)
    u = env * np.cos(3 * x + rng.normal())
    v = env * np.sin(5 * x + rng.normal())
    t = expand_transpose(SymbolFamily(E.mul(X, XI), 1, 1), 2).total()
    lhs = np.sum(apply_symbol(E.mul(X, XI), spec, u, 1.0) * v)
    rhs = np.sum(u * apply_symbol(t, spec, v, 1.0))
    assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(u) * np.linalg.norm(v)


def test_reduce_amplitude_examples():
    a = build_symbol("speed_variable")
    _check(reduce_amplitude(a.expr, 4, 1, 1), [1], [a.expr])
    _check(reduce_amplitude(E.sin(Y), 2, 1, 0), [0], [E.sin(X)])
    _check(reduce_amplitude(E.mul(Y, XI), 2, 1, 1), [1, 0], [E.mul(X, XI), E.const(0, -1)])


def test_borel_geometric_orders():
    terms = [(-j, SymbolFamily(E.power(E.jb(1), -j), -j, 1)) for j in range(4)]
    res = borel_sum(Expansion(terms))
    assert res.cut_radii == [1.0, 2.0, 4.0, 8.0]
    assert res.remainder_orders[1] <= -1 + 0.25
    assert res.remainder_orders[2] <= -2 + 0.25


def test_borel_two_terms_exact_at_high_frequency():
    res = borel_sum(Expansion([(1, SymbolFamily(XI, 1, 1)), (0, SymbolFamily(E.ONE, 0, 1))]),
                    check_remainder=False)
    t1 = res.cut_radii[-1]
    k = np.array([t1, 2 * t1, 50.0 * t1])
    v = res.symbol.expr.evaluate({("xi", 0): k, ("eps", 0): 0.5})
    np.testing.assert_allclose(v, k + 1, atol=1e-12)


def test_parametrix_constant_coefficient():
    p = parametrix(build_symbol("one_plus_xi2"), 4)
    assert p.excision_radius > 0
    assert all(_is_zero_term(t) for _, t in p.expansion.terms[1:])
    assert p.residual_order_estimate <= -10 + 1e-12


def _is_zero_term(t):
    return np.all(np.abs(np.broadcast_to(t.expr.evaluate(PTS), (9,))) < 1e-14)


def test_parametrix_bracket_residual_orders():
    assert parametrix(build_symbol("bracket"), 1).residual_order_estimate <= -1 + 0.25
    assert parametrix(build_symbol("bracket"), 2).residual_order_estimate <= -2 + 0.25


def test_parametrix_slow_coefficient_is_exact_inverse():
    a = build_symbol("slow_coeff")
    p = parametrix(a, 3)
    assert p.excision_radius == 0
    v = (p.truncated_symbol.expr.evaluate(PTS) * a.expr.evaluate(PTS))
    np.testing.assert_allclose(v, 1, atol=1e-13)


def test_parametrix_variable_elliptic_residual():
    a = SymbolFamily(E.add(2.0, E.sin(X), E.power(XI, 2)), 2, 1)
    p = parametrix(a, 3)
    assert p.residual_order_estimate <= -2 - 3 + 0.25


def test_parametrix_rejects_non_elliptic():
    with pytest.raises(NotElliptic):
        parametrix(SymbolFamily(E.sin(X), 0, 1), 2)


def test_terminating_residual_is_zero():
    spec = GridSpec(1, 128)
    sig = composition_symbol(SymbolFamily(XI, 1, 1), SymbolFamily(E.sin(X), 0, 1), spec, 0.5)
    x, k = spec.axis()[:, None], spec.freqs()[None, :]
    want = k * np.sin(x) - 1j * np.cos(x)
    inner = np.abs(spec.freqs()) < spec.G // 2 - 1     # k +- 1 wraps at the Nyquist edge
    np.testing.assert_allclose(sig[:, inner], want[:, inner], atol=1e-10)


def test_composition_residual_orders_later_steps():
    # from r = 2 on, each extra term gains one order; the r = 1 -> 2 step gains three
    # because the second derivative of <xi> has order -3
    a, b = build_symbol("bracket"), build_symbol("sin_x")
    o = [composition_residual_order(a, b, r, GridSpec(1, 512))[0] for r in (1, 2, 3)]
    assert abs(o[0]) < 0.1
    assert abs(o[1] + 3) < 0.1
    assert abs(o[2] - o[1] + 1) < 0.3


def test_expansion_orders_must_decrease():
    with pytest.raises(ValueError):
        Expansion([(0, SymbolFamily(E.ONE, 0, 1)), (0, SymbolFamily(E.ONE, 0, 1))])
