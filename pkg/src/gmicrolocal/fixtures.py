"""Named test families: grid functions with known singularities and a net catalog
with analytic ground truth."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from .nets import EpsilonGrid
from .quantize import GridFunctionFamily, GridSpec

# mollifier width sigma_eps = MOLLIFIER_SCALE * eps, independent of the grid
MOLLIFIER_SCALE = 4 * math.pi

_erf = np.frompyfunc(math.erf, 1, 1)


def erf(v):
    return np.asarray(_erf(np.asarray(v, float)), float)


def mollifier_width(eps: float, scale: float = MOLLIFIER_SCALE) -> float:
    return scale * eps


def default_cells(spec: GridSpec) -> int:
    """Cells per axis: 64 grid points per cell."""
    return max(2, spec.G // 64)


def cell_center(spec: GridSpec, c: int, cells: Optional[int] = None) -> float:
    C = cells or default_cells(spec)
    return (c + 0.5) * 2 * math.pi / C


def periodic_gaussian(x, x0, sigma):
    """Unit-mass Gaussian of width sigma wrapped onto the circle."""
    d = (np.asarray(x, float) - x0 + math.pi) % (2 * math.pi) - math.pi
    M = int(math.ceil(6 * sigma / (2 * math.pi))) + 3
    out = np.zeros_like(d)
    for m in range(-M, M + 1):
        out += np.exp(-(d + 2 * math.pi * m) ** 2 / (2 * sigma ** 2))
    return out / (math.sqrt(2 * math.pi) * sigma)


def periodic_step(x, x0, sigma, width=math.pi):
    """Mollified indicator of [x0, x0 + width] on the circle: jumps up at x0, down at x0 + width."""
    x = np.asarray(x, float)
    r = math.sqrt(2) * sigma
    M = int(math.ceil(6 * sigma / (2 * math.pi))) + 2
    out = np.zeros_like(x)
    for m in range(-M, M + 1):
        out += 0.5 * (erf((x - x0 + 2 * math.pi * m) / r) - erf((x - x0 - width + 2 * math.pi * m) / r))
    return out


def _family(spec, grid, fn, label):
    data = np.stack([fn(e) for e in grid.eps]).astype(complex)
    return GridFunctionFamily(spec, grid, data, label)


def delta(spec: GridSpec, grid: EpsilonGrid, x0=None, scale: float = MOLLIFIER_SCALE) -> GridFunctionFamily:
    """Mollified delta at x0 (default: a cell centre near the middle of the domain)."""
    x0 = np.atleast_1d(default_point(spec) if x0 is None else x0).astype(float)
    ax = spec.axis()

    def f(e):
        s = mollifier_width(e, scale)
        g = [periodic_gaussian(ax, x0[i % len(x0)], s) for i in range(spec.n)]
        return g[0] if spec.n == 1 else np.multiply.outer(g[0], g[1])
    return _family(spec, grid, f, "delta")


def default_point(spec: GridSpec):
    C = default_cells(spec)
    return np.array([cell_center(spec, C // 2 - 1, C)] * spec.n)


def heaviside(spec: GridSpec, grid: EpsilonGrid, x0=None, scale: float = MOLLIFIER_SCALE) -> GridFunctionFamily:
    """Mollified periodic step in x_1 (jumps at x0 and x0 + pi), constant in x_2."""
    x0 = float(default_point(spec)[0] if x0 is None else np.atleast_1d(x0)[0])
    ax = spec.axis()

    def f(e):
        v = periodic_step(ax, x0, mollifier_width(e, scale))
        return v if spec.n == 1 else np.repeat(v[:, None], spec.G, axis=1)
    return _family(spec, grid, f, "heaviside")


def two_deltas(spec: GridSpec, grid: EpsilonGrid, scale: float = MOLLIFIER_SCALE) -> GridFunctionFamily:
    C = default_cells(spec)
    a = delta(spec, grid, [cell_center(spec, 1, C)] * spec.n, scale)
    b = delta(spec, grid, [cell_center(spec, C - 2, C)] * spec.n, scale)
    out = a + b
    out.label = "two_deltas"
    return out


def slow_scale_c(eps):
    return 1.0 + math.log2(1.0 / eps)


def fast_c(eps):
    return 1.0 / eps


def lorentzian(spec: GridSpec, grid: EpsilonGrid, c: Callable[[float], float] = slow_scale_c,
               label="lorentzian_slow") -> GridFunctionFamily:
    """1/(1 + c_eps x^2) on [-pi, pi), periodized as 1/(1 + c_eps (2 sin(x/2))^2), centred at pi."""
    if spec.n != 1:
        raise ValueError("lorentzian fixture is one-dimensional")
    s = 2 * np.sin((spec.axis() - math.pi) / 2)
    return _family(spec, grid, lambda e: 1.0 / (1.0 + c(e) * s ** 2), label)


def smooth_sin(spec, grid):
    xs = spec.coords()
    return _family(spec, grid, lambda e: np.sin(xs[0]) + (np.cos(xs[1]) if spec.n == 2 else 0), "sin")


def constant(spec, grid):
    return _family(spec, grid, lambda e: np.ones(spec.shape), "constant")


def plane_wave(spec, grid, k0=(20, 0)):
    xs = spec.coords()
    k0 = tuple(k0)[:spec.n]
    return _family(spec, grid, lambda e: np.exp(1j * sum(k * x for k, x in zip(k0, xs))), "plane_wave")


def delta_plus_smooth(spec, grid):
    out = delta(spec, grid) + smooth_sin(spec, grid)
    out.label = "delta_plus_smooth"
    return out


def conormal_spacetime(spec: GridSpec, grid: EpsilonGrid, t0=None, scale: float = MOLLIFIER_SCALE):
    """Space-time family on (x, t): smooth in x times a mollified step in t at t0.

    Its wave front is conormal to the slice t = t0, so restricting to that
    slice is not allowed.
    """
    if spec.n != 2:
        raise ValueError("conormal fixture lives on a 2D (x, t) grid")
    t0 = float(default_point(spec)[1] if t0 is None else t0)
    ax = spec.axis()

    def f(e):
        step = periodic_step(ax, t0, mollifier_width(e, scale))
        return np.multiply.outer(1.0 + 0.5 * np.sin(ax), step)
    return _family(spec, grid, f, "conormal")


@dataclass(frozen=True)
class Fixture:
    name: str
    n: int
    builder: Callable
    description: str

    def build(self, spec: GridSpec, grid: EpsilonGrid) -> GridFunctionFamily:
        if spec.n != self.n and self.n != 0:
            raise ValueError(f"fixture {self.name} needs n={self.n}")
        return self.builder(spec, grid)


FIXTURES: Dict[str, Fixture] = {f.name: f for f in [
    Fixture("delta1d", 1, delta, "mollified delta at a cell centre"),
    Fixture("delta2d", 2, delta, "mollified point delta in the plane"),
    Fixture("heaviside1d", 1, heaviside, "mollified step with jumps at x0 and x0 + pi"),
    Fixture("heaviside2d", 2, heaviside, "mollified step in x1, constant in x2"),
    Fixture("two_deltas1d", 1, two_deltas, "two separated mollified deltas"),
    Fixture("lorentzian_slow", 1, lambda s, g: lorentzian(s, g, slow_scale_c, "lorentzian_slow"),
            "1/(1 + c x^2) with slowly growing c = 1 + log2(1/eps)"),
    Fixture("lorentzian_fast", 1, lambda s, g: lorentzian(s, g, fast_c, "lorentzian_fast"),
            "1/(1 + c x^2) with c = 1/eps"),
    Fixture("sin", 0, smooth_sin, "eps-independent smooth function"),
    Fixture("constant", 0, constant, "constant one"),
    Fixture("plane_wave", 0, plane_wave, "single frequency exp(i k0 x)"),
    Fixture("delta_plus_smooth", 0, delta_plus_smooth, "delta plus a smooth perturbation"),
    Fixture("conormal", 2, conormal_spacetime, "space-time family singular across a time slice"),
]}


def fixture_catalog() -> List[str]:
    return sorted(FIXTURES)


def build_fixture(name: str, spec: GridSpec, grid: EpsilonGrid) -> GridFunctionFamily:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name}; known: {', '.join(fixture_catalog())}")
    return FIXTURES[name].build(spec, grid)


# ----------------------------------------------------------------------------
# nets with analytic classification; L = log2(1/eps)

@dataclass(frozen=True)
class NetCase:
    label: str
    fn: Callable[[float], float]
    tag: str
    exponent: Optional[float] = None   # exact slope for pure powers


def _L(e):
    return math.log2(1.0 / e)


NET_CATALOG: List[NetCase] = [
    NetCase("1", lambda e: 1.0, "SlowScale", 0.0),
    NetCase("5", lambda e: 5.0, "SlowScale", 0.0),
    NetCase("0.3", lambda e: 0.3, "SlowScale", 0.0),
    NetCase("3+L", lambda e: 3 + _L(e), "SlowScale"),
    NetCase("(1+L)^2", lambda e: (1 + _L(e)) ** 2, "SlowScale"),
    NetCase("(1+L)^3", lambda e: (1 + _L(e)) ** 3, "SlowScale"),
    NetCase("1+log2(2+L)", lambda e: 1 + math.log2(2 + _L(e)), "SlowScale"),
    NetCase("(3+L)(1+log2(2+L))", lambda e: (3 + _L(e)) * (1 + math.log2(2 + _L(e))), "SlowScale"),
    NetCase("eps^-0.5", lambda e: e ** -0.5, "Moderate", 0.5),
    NetCase("eps^-1", lambda e: e ** -1, "Moderate", 1.0),
    NetCase("7 eps^-2", lambda e: 7 * e ** -2, "Moderate", 2.0),
    NetCase("eps^-5", lambda e: e ** -5, "Moderate", 5.0),
    NetCase("eps^-1 L", lambda e: _L(e) / e, "Moderate"),
    NetCase("eps^-0.5 (1+L)", lambda e: (1 + _L(e)) * e ** -0.5, "Moderate"),
    NetCase("eps^3", lambda e: e ** 3, "Moderate", -3.0),
    NetCase("exp(-1/eps)", lambda e: math.exp(-1 / e), "Negligible"),
    NetCase("eps^-2 exp(-1/eps)", lambda e: e ** -2 * math.exp(-1 / e), "Negligible"),
    NetCase("eps^10", lambda e: e ** 10, "Negligible"),
    NetCase("exp(eps^-0.5)", lambda e: math.exp(e ** -0.5), "Unbounded"),
    NetCase("eps^-80", lambda e: e ** -80, "Unbounded"),
]


# ----------------------------------------------------------------------------
# labelled symbols for scenarios

def _symbol_catalog():
    from . import expr as E
    from .symbols import SymbolFamily, build_cone_cutoff
    x, xi = E.x(0), E.xi(0)
    slow = E.add(1.0, E.div(E.neg(E.log(E.EPS)), math.log(2)))
    return {
        "xi": lambda: SymbolFamily(xi, 1, 1, "xi"),
        "x": lambda: SymbolFamily(x, 0, 1, "x"),
        "bracket": lambda: SymbolFamily(E.jb(1), 1, 1, "<xi>"),
        "one_plus_xi2": lambda: SymbolFamily(E.add(1.0, E.power(xi, 2)), 2, 1, "1+xi^2"),
        "x_xi": lambda: SymbolFamily(E.mul(x, xi), 1, 1, "x xi"),
        "sin_x": lambda: SymbolFamily(E.sin(x), 0, 1, "sin x"),
        "gauss_xi": lambda: SymbolFamily(E.exp(E.neg(E.power(xi, 2))), -10, 1, "exp(-xi^2)"),
        "slow_coeff": lambda: SymbolFamily(E.add(1.0, E.mul(slow, E.power(x, 2))), 0, 1, "1+c x^2"),
        "speed_constant": lambda: SymbolFamily(xi, 1, 1, "xi"),
        "speed_variable": lambda: SymbolFamily(E.mul(E.add(1.0, E.mul(0.5, E.sin(x))), xi), 1, 1,
                                               "(1+0.5 sin x) xi"),
        "identity1": lambda: SymbolFamily(E.ONE, 0, 1, "identity"),
        "identity2": lambda: SymbolFamily(E.ONE, 0, 2, "identity"),
        "xi1": lambda: SymbolFamily(E.xi(0), 1, 2, "xi1"),
        "bracket2": lambda: SymbolFamily(E.jb(2), 1, 2, "<xi>"),
        "cone_e2": lambda: build_cone_cutoff(np.array([0.0, 1.0]), math.pi / 8, math.pi / 4, 2),
    }


SYMBOL_LABELS = sorted(_symbol_catalog())


def build_symbol(label: str):
    cat = _symbol_catalog()
    if label not in cat:
        raise KeyError(f"unknown symbol {label}; known: {', '.join(sorted(cat))}")
    return cat[label]()
