import math

import numpy as np
import pytest

from gmicrolocal import expr as E
from gmicrolocal.fixtures import build_fixture, build_symbol, default_point
from gmicrolocal.hyperbolic import (CauchyProblem, CFLViolation, ConormalPresent, FlowState,
                                    HamiltonianField, Instability, StepTooLarge,
                                    bicharacteristic_lift, cfl_bound, flow_batch, hamilton_flow,
                                    push_forward, solve_cauchy, spacetime_transport,
                                    transport_symbol, verify_propagation, wf_restrict_predict)
from gmicrolocal.nets import EpsilonGrid
from gmicrolocal.quantize import GridFunctionFamily, GridSpec
from gmicrolocal.symbols import ConeGrid, SymbolFamily
from gmicrolocal.wavefront import CellDecomposition, wavefront_estimate

X, XI = E.x(0), E.xi(0)
VAR = HamiltonianField(build_symbol("speed_variable"))
GRID = EpsilonGrid(1, 8)


def _state(x, xi):
    return FlowState(np.array([x]), np.array([xi]))


def test_constant_speed_translation():
    f = HamiltonianField(SymbolFamily(E.mul(2.5, XI), 1, 1))
    s = hamilton_flow(f, _state(1.0, 3.0), 0.8)
    assert abs(s.x[0] - 3.0) < 1e-12 and abs(s.xi[0] - 3.0) < 1e-12


def test_x_xi_flow_is_exponential():
    f = HamiltonianField(SymbolFamily(E.mul(X, XI), 1, 1))
    s = hamilton_flow(f, _state(0.5, 2.0), 1.0, 1e-3, wrap=False)
    assert abs(s.x[0] - 0.5 * math.e) < 1e-8
    assert abs(s.xi[0] - 2.0 / math.e) < 1e-8


def test_principal_symbol_conserved():
    s0 = _state(1.0, 5.0)
    s = hamilton_flow(VAR, s0, 2.0)
    assert abs(VAR.value(s.x[None], s.xi[None])[0] - VAR.value(s0.x[None], s0.xi[None])[0]) < 1e-9


def test_group_law():
    s0 = _state(0.4, -3.0)
    a = hamilton_flow(VAR, hamilton_flow(VAR, s0, 0.6), 0.9)
    b = hamilton_flow(VAR, s0, 1.5)
    assert abs(a.x[0] - b.x[0]) < 1e-7 and abs(a.xi[0] - b.xi[0]) < 1e-7


@pytest.mark.parametrize("lam", [2.0, 4.0])
def test_homogeneity_equivariance(lam):
    a = hamilton_flow(VAR, _state(2.0, 1.5), 1.0)
    b = hamilton_flow(VAR, _state(2.0, lam * 1.5), 1.0)
    assert abs(a.x[0] - b.x[0]) < 1e-9 and abs(lam * a.xi[0] - b.xi[0]) < 1e-8


def test_time_reversal():
    s0 = _state(5.0, 2.0)
    back = hamilton_flow(VAR, hamilton_flow(VAR, s0, 1.3), -1.3)
    assert abs(back.x[0] - 5.0) < 1e-9 and abs(back.xi[0] - 2.0) < 1e-9


def test_step_too_large():
    with pytest.raises(StepTooLarge):
        flow_batch(VAR, [[1.0]], [[50.0]], 5.0, dt=0.5)


def test_validation_rejects_bad_principal_symbols():
    with pytest.raises(ValueError):
        HamiltonianField(SymbolFamily(E.mul(E.const(0, 1), XI), 1, 1)).validate()
    with pytest.raises(ValueError):
        HamiltonianField(SymbolFamily(E.power(XI, 2), 2, 1)).validate()
    assert VAR.validate()


def test_time_dependent_field():
    f = HamiltonianField(SymbolFamily(E.mul(E.add(1.0, E.T), XI), 1, 1))
    s = hamilton_flow(f, _state(0.0, 1.0), 1.0)
    assert abs(s.x[0] - 1.5) < 1e-10


def test_lift_satisfies_tau_equation():
    c = bicharacteristic_lift(VAR, [1.0], [4.0], (0.0, 1.0))
    assert c.residual <= 1e-8
    assert np.all(np.abs(c.tau + VAR.value(c.x, c.xi)) <= 1e-8)
    assert len(c.rows()[0]) == 4


def test_transport_symbol_constant_speed():
    spec = GridSpec(1, 64)
    f = HamiltonianField(build_symbol("speed_constant"))
    q = SymbolFamily(E.sin(X), 0, 1)
    tab = transport_symbol(q, f, 0.5, spec, ConeGrid(1, 16))
    x = spec.axis()
    np.testing.assert_allclose(tab[:, 0, 0].real, np.sin(x - 0.5), atol=1e-10)


def test_multiplier_matches_method_of_lines():
    spec = GridSpec(1, 128)
    g = build_fixture("delta1d", spec, EpsilonGrid(1, 6))
    P = build_symbol("speed_constant")
    exact = solve_cauchy(CauchyProblem(P, g, record_times=[0.7]))
    # a zero x-coefficient forces the stepping path on the same operator
    P2 = SymbolFamily(E.mul(E.add(1.0, E.mul(1e-300, E.sin(X))), XI), 1, 1)
    mol = solve_cauchy(CauchyProblem(P2, g, record_times=[0.7]))
    assert exact.method == "multiplier" and mol.method == "method-of-lines"
    np.testing.assert_allclose(mol.states[0].data, exact.states[0].data, atol=1e-8)


def test_exact_translation_of_data():
    spec = GridSpec(1, 128)
    x = spec.axis()
    g = GridFunctionFamily(spec, EpsilonGrid(1, 6), np.stack([np.exp(np.cos(x))] * 6).astype(complex))
    sol = solve_cauchy(CauchyProblem(build_symbol("speed_constant"), g, record_times=[1.0, -0.5]))
    np.testing.assert_allclose(sol.at(1.0).data[0], np.exp(np.cos(x - 1.0)), atol=1e-12)
    np.testing.assert_allclose(sol.at(-0.5).data[0], np.exp(np.cos(x + 0.5)), atol=1e-12)


def test_cfl_violation():
    spec = GridSpec(1, 64)
    g = build_fixture("sin", spec, EpsilonGrid(1, 6))
    P = build_symbol("speed_variable")
    bound = cfl_bound(HamiltonianField(P), spec)
    with pytest.raises(CFLViolation):
        solve_cauchy(CauchyProblem(P, g, dt=2 * bound, record_times=[0.1]))


def test_instability_detected():
    spec = GridSpec(1, 64)
    g = build_fixture("plane_wave", spec, EpsilonGrid(1, 6))
    # a large imaginary lower-order term makes the evolution grow like exp(20 t |k|)
    P = SymbolFamily(E.add(E.mul(E.add(1.0, E.mul(0.5, E.sin(X))), XI),
                           E.mul(E.const(0, 40.0), E.jb(1))), 1, 1)
    with pytest.raises(Instability):
        solve_cauchy(CauchyProblem(P, g, record_times=[1.0], principal=build_symbol("speed_variable")))


def test_push_forward_constant_speed():
    spec = GridSpec(1, 256)
    cells, cones = CellDecomposition(spec), ConeGrid(1, 16)
    out = push_forward({((1,), 0), ((1,), 1)}, HamiltonianField(build_symbol("speed_constant")),
                       cells, cones, 1.0)
    assert out == {((2,), 0), ((2,), 1)}


@pytest.mark.parametrize("label", ["speed_constant", "speed_variable"])
def test_propagation_and_reversal(label):
    g = build_fixture("delta1d", GridSpec(1, 256), GRID)
    reps = verify_propagation(CauchyProblem(build_symbol(label), g, record_times=[1.0, -1.0]))
    assert all(r.passed for r in reps), [r.as_dict() for r in reps]


def test_restriction_and_conormal():
    g = build_fixture("delta1d", GridSpec(1, 128), GRID)
    u = spacetime_transport(g, build_symbol("speed_constant"))
    est = wavefront_estimate(u, CellDecomposition(u.spec), ConeGrid(2, 16))
    pred = wf_restrict_predict(est, 1.0)
    assert {d for _, d in pred} == {0, 1}
    cn = build_fixture("conormal", GridSpec(2, 128), GRID)
    est_c = wavefront_estimate(cn, CellDecomposition(cn.spec), ConeGrid(2, 16))
    with pytest.raises(ConormalPresent):
        wf_restrict_predict(est_c, float(default_point(cn.spec)[1]))


def test_spacetime_requires_constant_coefficients():
    g = build_fixture("delta1d", GridSpec(1, 128), GRID)
    with pytest.raises(ValueError):
        spacetime_transport(g, build_symbol("speed_variable"))


def test_lift_time_dependent_field():
    P = SymbolFamily(E.mul(E.add(1.0, E.mul(0.5, E.sin(E.add(X, E.T)))), XI), 1, 1)
    c = bicharacteristic_lift(HamiltonianField(P), [1.0], [40.0], (0.0, 1.0))
    assert c.residual <= 1e-8
    # tau changes because P1 depends on t
    assert np.ptp(c.tau) > 1.0
