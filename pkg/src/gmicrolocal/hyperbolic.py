"""First-order hyperbolic problems: Hamilton flow of the principal symbol,
bicharacteristics, the Cauchy problem du/dt + i P(t, x, D) u = 0 on the torus,
and checks that wave fronts move along the flow."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Set

import numpy as np

from .config import DEFAULT, Thresholds
from .quantize import GridFunctionFamily, GridSpec, apply_symbol
from .symbols import ConeGrid, SymbolFamily
from .wavefront import (CellDecomposition, WFConfig, WavefrontEstimate, _fmt_keys, dilate,
                        wavefront_estimate)

TWO_PI = 2 * math.pi


class StepTooLarge(RuntimeError):
    pass


class Instability(RuntimeError):
    pass


class ConormalPresent(RuntimeError):
    pass


class CFLViolation(ValueError):
    pass


def _env(n, x, xi, t):
    env = {("t", 0): float(t), ("eps", 0): 1.0}
    for i in range(n):
        env[("x", i)] = x[..., i]
        env[("xi", i)] = xi[..., i]
    return env


@dataclass
class HamiltonianField:
    """Real principal symbol P1(t, x, xi), homogeneous of degree one in xi."""
    P1: SymbolFamily

    def __post_init__(self):
        n = self.P1.n
        e = self.P1.expr
        self.n = n
        self.dxi = [e.diff(("xi", i)) for i in range(n)]
        self.dx = [e.diff(("x", i)) for i in range(n)]
        self.autonomous = "t" not in e.kinds()
        self.dt = e.diff(("t", 0))

    def value(self, x, xi, t=0.0) -> np.ndarray:
        x, xi = np.atleast_2d(x), np.atleast_2d(xi)
        v = np.asarray(self.P1.expr.evaluate(_env(self.n, x, xi, t)), complex)
        return np.broadcast_to(v, x.shape[:-1]).real

    def rhs(self, x, xi, t):
        env = _env(self.n, x, xi, t)
        shape = x.shape[:-1]
        dx = np.stack([np.broadcast_to(np.asarray(d.evaluate(env), complex).real, shape)
                       for d in self.dxi], axis=-1)
        dxi = np.stack([-np.broadcast_to(np.asarray(d.evaluate(env), complex).real, shape)
                        for d in self.dx], axis=-1)
        return dx, dxi

    def max_speed(self, spec: GridSpec, radius: Optional[float] = None) -> float:
        """max |grad_xi P1| over the spatial grid and unit directions scaled to `radius`."""
        xs = np.stack([c.ravel() for c in spec.coords()], axis=-1)
        r = radius or spec.G / 4
        if self.n == 1:
            dirs = np.array([[1.0], [-1.0]])
        else:
            th = np.linspace(0, TWO_PI, 32, endpoint=False)
            dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        best = 0.0
        for d in dirs:
            xi = np.broadcast_to(r * d, xs.shape)
            dx, _ = self.rhs(xs, xi, 0.0)
            best = max(best, float(np.sqrt((dx ** 2).sum(axis=-1)).max()))
        return best

    def validate(self, box_points: int = 16, tol_real: float = 1e-12, tol_hom: float = 1e-8):
        """Check that P1 is real and degree-one homogeneous on |xi| >= 1."""
        rng = np.random.default_rng(0)
        x = rng.uniform(0, TWO_PI, (box_points, self.n))
        xi = rng.normal(size=(box_points, self.n))
        xi = xi / np.linalg.norm(xi, axis=1, keepdims=True) * rng.uniform(1, 8, (box_points, 1))
        v = np.asarray(self.P1.expr.evaluate(_env(self.n, x, xi, 0.0)), complex)
        if np.abs(np.imag(v)).max() > tol_real:
            raise ValueError("principal symbol is not real")
        for lam in (2.0, 4.0):
            vl = self.value(x, lam * xi)
            if np.any(np.abs(vl - lam * v.real) > tol_hom * lam * np.linalg.norm(xi, axis=1)):
                raise ValueError("principal symbol is not homogeneous of degree one")
        return True


@dataclass
class FlowState:
    x: np.ndarray
    xi: np.ndarray
    t: float = 0.0
    error: float = 0.0


def _rk4(field_: HamiltonianField, x, xi, t0, t1, nsteps, tau=None):
    """RK4 for (x, xi); when tau is given it is carried along with d tau/dt = -dP1/dt."""
    h = (t1 - t0) / nsteps
    t = t0
    if tau is None:
        for _ in range(nsteps):
            k1x, k1p = field_.rhs(x, xi, t)
            k2x, k2p = field_.rhs(x + 0.5 * h * k1x, xi + 0.5 * h * k1p, t + 0.5 * h)
            k3x, k3p = field_.rhs(x + 0.5 * h * k2x, xi + 0.5 * h * k2p, t + 0.5 * h)
            k4x, k4p = field_.rhs(x + h * k3x, xi + h * k3p, t + h)
            x = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
            xi = xi + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
            t += h
        return x, xi

    def f(x_, p_, t_):
        dx, dp = field_.rhs(x_, p_, t_)
        dtau = -np.broadcast_to(np.asarray(field_.dt.evaluate(_env(field_.n, x_, p_, t_)),
                                           complex).real, x_.shape[:-1])
        return dx, dp, dtau

    for _ in range(nsteps):
        k1 = f(x, xi, t)
        k2 = f(x + 0.5 * h * k1[0], xi + 0.5 * h * k1[1], t + 0.5 * h)
        k3 = f(x + 0.5 * h * k2[0], xi + 0.5 * h * k2[1], t + 0.5 * h)
        k4 = f(x + h * k3[0], xi + h * k3[1], t + h)
        x = x + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        xi = xi + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        tau = tau + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        t += h
    return x, xi, tau


def flow_batch(field_: HamiltonianField, x, xi, t: float, dt: float = 1e-3, t0: float = 0.0,
               wrap: bool = True, check: bool = True, tol: float = DEFAULT.richardson_tol):
    """RK4 flow of many states; returns (x, xi, error estimate) with x wrapped to the torus."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.atleast_2d(np.asarray(x, float))
    xi = np.atleast_2d(np.asarray(xi, float))
    if t == 0:
        return (x % TWO_PI if wrap else x), xi, 0.0
    if abs(t) / dt > 1e7:
        raise StepTooLarge("too many steps")
    n = max(1, int(math.ceil(abs(t) / dt - 1e-9)))
    xa, pa = _rk4(field_, x, xi, t0, t0 + t, n)
    err = 0.0
    if check:
        xb, pb = _rk4(field_, x, xi, t0, t0 + t, 2 * n)
        scale = max(1.0, float(np.abs(np.concatenate([xa, pa], axis=-1)).max()))
        err = float(np.abs(np.concatenate([xa - xb, pa - pb], axis=-1)).max()) / scale
        if err > tol:
            raise StepTooLarge(f"Richardson estimate {err:.2e} exceeds {tol:.0e}")
        xa, pa = xb, pb
    return (xa % TWO_PI if wrap else xa), pa, err


def hamilton_flow(field_: HamiltonianField, s0: FlowState, t: float, dt: float = 1e-3,
                  wrap: bool = True) -> FlowState:
    """Phi_t applied to one state (x, xi) with a dt/2 Richardson check."""
    x, xi, err = flow_batch(field_, s0.x, s0.xi, t, dt, s0.t, wrap)
    return FlowState(x[0], xi[0], s0.t + t, err)


@dataclass
class LiftCurve:
    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    tau: np.ndarray
    residual: float

    def rows(self):
        return [[float(t), float(x[0]), float(p[0]), float(tau)]
                for t, x, p, tau in zip(self.t, self.x, self.xi, self.tau)]


CURVE_HEADER = ["t", "x", "xi", "tau"]


def bicharacteristic_lift(field_: HamiltonianField, x0, xi0, t_range=(0.0, 1.0), dt: float = 1e-3,
                          samples: int = 101, wrap: bool = True) -> LiftCurve:
    """(x(t), t; xi(t), tau(t)) through (x0, xi0) with tau(t0) = -P1.

    tau is integrated alongside the flow, so `residual` = max |tau + P1| along
    the curve measures how well the lift stays on the characteristic set.
    """
    xi0 = np.atleast_1d(np.asarray(xi0, float))
    if not np.any(xi0):
        raise ValueError("xi0 must be nonzero")
    x0 = np.atleast_1d(np.asarray(x0, float))
    ts = np.linspace(t_range[0], t_range[1], samples)
    x, p, tc = x0[None, :], xi0[None, :], 0.0
    if t_range[0] != 0:
        x, p, _ = flow_batch(field_, x, p, t_range[0], dt, 0.0, wrap)
        tc = t_range[0]
    tau = -field_.value(x, p, tc)
    xs, ps, taus = [], [], []
    for t in ts:
        if t != tc:
            n = max(1, int(math.ceil(abs(t - tc) / dt - 1e-9)))
            x, p, tau = _rk4(field_, x, p, tc, t, n, tau)
            tc = t
        xs.append(x[0] % TWO_PI if wrap else x[0].copy())
        ps.append(p[0].copy())
        taus.append(float(tau[0]))
    xs, ps, taus = np.array(xs), np.array(ps), np.array(taus)
    P = np.array([field_.value(xx[None], pp[None], t)[0] for xx, pp, t in zip(xs, ps, ts)])
    return LiftCurve(ts, xs, ps, taus, float(np.abs(taus + P).max()))


def transport_symbol(q: SymbolFamily, field_: HamiltonianField, t: float, spec: GridSpec,
                     cones: Optional[ConeGrid] = None, radii=(2.0, 4.0, 8.0, 16.0),
                     dt: float = 1e-2, eps: float = 1.0) -> np.ndarray:
    """q sampled at Phi_{-t}(x, r * sector centre) on (x grid, sector, radius)."""
    cones = cones or ConeGrid(spec.n, 16)
    xs = np.stack([c.ravel() for c in spec.coords()], axis=-1)
    P = xs.shape[0]
    X = np.repeat(xs, cones.count * len(radii), axis=0)
    dirs = np.stack([cones.direction(d) for d in range(cones.count)])
    XI = np.tile((np.asarray(radii)[None, :, None] * dirs[:, None, :]).reshape(-1, spec.n), (P, 1))
    xb, pb, _ = flow_batch(field_, X, XI, -t, dt, t, wrap=True, check=False)
    env = _env(spec.n, xb, pb, 0.0)
    env[("eps", 0)] = eps
    v = np.broadcast_to(np.asarray(q.expr.evaluate(env), complex), (X.shape[0],))
    return v.reshape(P, cones.count, len(radii))


# ----------------------------------------------------------------------------
# Cauchy problem

@dataclass
class CauchyProblem:
    """du/dt + i P(t, x, D) u = 0, u(0) = g.  P's principal part drives the flow."""
    P: SymbolFamily
    g: GridFunctionFamily
    T: float = 1.0
    dt: Optional[float] = None
    record_times: Sequence[float] = (1.0,)
    principal: Optional[SymbolFamily] = None

    @property
    def field(self) -> HamiltonianField:
        return HamiltonianField(self.principal or self.P)


@dataclass
class CauchySolution:
    times: List[float]
    states: List[GridFunctionFamily]
    method: str
    dt: Optional[float]

    def at(self, t: float) -> GridFunctionFamily:
        for tt, s in zip(self.times, self.states):
            if abs(tt - t) < 1e-12:
                return s
        raise KeyError(t)


def cfl_bound(field_: HamiltonianField, spec: GridSpec, cfl: float = DEFAULT.cfl) -> float:
    return cfl / (spec.G * max(field_.max_speed(spec, 1.0), 1e-12))


def is_constant_coefficient(P: SymbolFamily) -> bool:
    k = P.expr.kinds()
    return "x" not in k and "t" not in k


def solve_cauchy(prob: CauchyProblem, thresholds: Thresholds = DEFAULT) -> CauchySolution:
    """Exact multiplier stepping for constant coefficients, RK4 method of lines otherwise."""
    g = prob.g
    spec = g.spec
    times = [float(t) for t in prob.record_times]
    if is_constant_coefficient(prob.P):
        ks = spec.kgrid()
        env = {("eps", 0): 1.0}
        for i in range(spec.n):
            env[("xi", i)] = ks[i]
        states = []
        for t in times:
            data = []
            for d, e in zip(g.data, g.eps_grid.eps):
                env[("eps", 0)] = float(e)
                Pk = np.broadcast_to(np.asarray(prob.P.expr.evaluate(env), complex), spec.shape)
                data.append(np.fft.ifftn(np.exp(-1j * t * Pk) * np.fft.fftn(d)))
            states.append(GridFunctionFamily(spec, g.eps_grid, np.stack(data), f"u(t={t:g})"))
        return CauchySolution(times, states, "multiplier", None)

    bound = cfl_bound(prob.field, spec, thresholds.cfl)
    dt = prob.dt if prob.dt is not None else bound
    if dt > bound * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:.3g} exceeds the CFL bound {bound:.3g}")

    def L(u, t, e):
        return -1j * apply_symbol(prob.P.expr, spec, u, e, extra={("t", 0): float(t)})

    cur = g.data.copy()
    t_now = 0.0
    n0 = np.abs(g.data).reshape(len(g), -1).max(axis=1)
    order = sorted(range(len(times)), key=lambda i: abs(times[i]))
    results = {}
    for i in order:
        target = times[i]
        if target * t_now < 0:
            cur, t_now = g.data.copy(), 0.0
        span = target - t_now
        n = int(math.ceil(abs(span) / dt - 1e-9)) if span else 0
        h = span / n if n else 0.0
        nxt = []
        for u, e, u0 in zip(cur, g.eps_grid.eps, n0):
            t = t_now
            for _ in range(n):
                k1 = L(u, t, e)
                k2 = L(u + 0.5 * h * k1, t + 0.5 * h, e)
                k3 = L(u + 0.5 * h * k2, t + 0.5 * h, e)
                k4 = L(u + h * k3, t + h, e)
                u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                t += h
                growth = np.abs(u).max() / max(u0, 1e-300)
                if not growth <= thresholds.blowup_factor:
                    raise Instability(f"max-norm grew by {growth:.3g} at t={t:.4g} (eps={e:g})")
            nxt.append(u)
        cur = np.stack(nxt)
        t_now = target
        results[i] = GridFunctionFamily(spec, g.eps_grid, cur.copy(), f"u(t={target:g})")
    return CauchySolution(times, [results[i] for i in range(len(times))], "method-of-lines", dt)


# ----------------------------------------------------------------------------
# propagation of singularities

@dataclass
class PropagationReport:
    t: float
    passed: bool
    estimated: Set
    predicted: Set
    extras: Set
    missing: Set
    wavefront: Optional[WavefrontEstimate] = None

    def as_dict(self):
        return {"t": self.t, "pass": self.passed, "estimated": _fmt_keys(self.estimated),
                "predicted": _fmt_keys(self.predicted), "extras": _fmt_keys(self.extras),
                "missing": _fmt_keys(self.missing)}


def push_forward(wf_keys, field_: HamiltonianField, cells: CellDecomposition, cones: ConeGrid,
                 t: float, dt: float = 1e-3, t0: float = 0.0) -> Set:
    """Image of (cell, sector) pairs under Phi_t using cell centres and sector-centre rays."""
    keys = sorted(wf_keys)
    if not keys:
        return set()
    R = cells.spec.G / 4
    X = np.array([[cells.center(c) for c in cell] for cell, _ in keys], float)
    XI = np.array([R * cones.direction(d) for _, d in keys], float)
    xt, pt, _ = flow_batch(field_, X, XI, t, dt, t0)
    out = set()
    for x, p in zip(xt, pt):
        cell = cells.cell_of(x)
        for d in cones.sectors_containing(p):
            out.add((cell, d))
    return out


def compare_sets(estimated: Set, predicted: Set, cells, cones):
    extras = estimated - dilate(predicted, cells, cones)
    missing = predicted - dilate(estimated, cells, cones)
    return extras, missing


def verify_propagation(prob: CauchyProblem, cells: Optional[CellDecomposition] = None,
                       cones: Optional[ConeGrid] = None, config: Optional[WFConfig] = None,
                       dt_flow: float = 1e-3) -> List[PropagationReport]:
    """Compare WF(u(t)) with Phi_t(WF(g)) at every record time."""
    spec = prob.g.spec
    cells = cells or CellDecomposition(spec)
    cones = cones or ConeGrid(spec.n, 16)
    fld = prob.field
    wf0 = wavefront_estimate(prob.g, cells, cones, config)
    sol = solve_cauchy(prob)
    reports = []
    for t, u in zip(sol.times, sol.states):
        est = wavefront_estimate(u, cells, cones, config)
        pred = push_forward(wf0.singular, fld, cells, cones, t, dt_flow) if t else set(wf0.singular)
        extras, missing = compare_sets(est.singular, pred, cells, cones)
        reports.append(PropagationReport(t, not extras and not missing, est.singular, pred,
                                         extras, missing, est))
    return reports


# ----------------------------------------------------------------------------
# space-time runs (n = 1 in space, so (x, t) is a 2D grid)

def spacetime_transport(g1d: GridFunctionFamily, P: SymbolFamily) -> GridFunctionFamily:
    """u(x, t) on [0, 2 pi)^2 for a t-periodic constant-coefficient transport."""
    if g1d.spec.n != 1:
        raise ValueError("space-time runs take 1D initial data")
    if not is_constant_coefficient(P):
        raise ValueError("space-time runs need a t-periodic solution; use constant coefficients")
    G = g1d.spec.G
    ts = g1d.spec.axis()
    sol = solve_cauchy(CauchyProblem(P, g1d, record_times=list(ts)))
    data = np.stack([np.stack([s.data[j] for s in sol.states], axis=1) for j in range(len(g1d))])
    return GridFunctionFamily(GridSpec(2, G), g1d.eps_grid, data, "u(x,t)")


def spacetime_prediction(wf_g: Set, field_: HamiltonianField, cells2: CellDecomposition,
                         cones2: ConeGrid, cones1: ConeGrid, samples: int = 256,
                         dt: float = 1e-3) -> Set:
    """Union of bicharacteristics through the singular data points, binned on (x, t) cells
    and (xi, tau) sectors."""
    out = set()
    R = cells2.spec.G / 4
    ts = np.linspace(0, TWO_PI, samples, endpoint=False)
    for cell, d in sorted(wf_g):
        x0 = cells2.center(cell[0])
        xi0 = R * cones1.direction(d)
        curve = bicharacteristic_lift(field_, [x0], xi0, (0.0, ts[-1]), dt, samples)
        for t, x, p, tau in zip(curve.t, curve.x, curve.xi, curve.tau):
            c = cells2.cell_of([x[0], t])
            for s in cones2.sectors_containing(np.array([p[0], tau])):
                out.add((c, s))
    return out


def _t_cells(cells2: CellDecomposition, t0: float) -> List[int]:
    return sorted({c[0] for c in cells2.cells_meeting([t0])})


def wf_restrict_predict(wf_st: WavefrontEstimate, t0: float) -> Set:
    """Project singular (x-cell, (xi, tau)-sector) pairs at t = t0 to (x-cell, xi-sector).

    Raises ConormalPresent when a sector centred on a pure tau direction is
    singular at a cell on the slice.
    """
    cells2, cones2 = wf_st.cells, wf_st.cones
    tcs = set(_t_cells(cells2, t0))
    conormal = [d for d in range(cones2.count)
                if abs(math.cos(cones2.center_angle(d))) < 1e-9]
    bad = [(c, d) for (c, d) in wf_st.singular if c[1] in tcs and d in conormal]
    if bad:
        raise ConormalPresent(f"time-conormal singular directions at the slice: {sorted(bad)[:4]}")
    out = set()
    hw = cones2.half_width
    for (c, d) in wf_st.singular:
        if c[1] not in tcs:
            continue
        th = cones2.center_angle(d) + np.linspace(-hw, hw, 33)
        cs = np.cos(th)
        if (cs > 1e-12).any():
            out.add(((c[0],), 0))
        if (cs < -1e-12).any():
            out.add(((c[0],), 1))
    return out
