"""Symbol families a_eps(x, xi): seminorms, order, micro-ellipticity, microsupport.

Suprema over frequency space are taken over a lattice of radius shells times
directions, which is enough to see the polynomial growth rates that symbol
estimates are about.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import expr as E
from .config import DEFAULT, Thresholds
from .nets import EpsilonGrid, NetSample, ScaleClass, classify_scale, fit_growth_exponent


class OrderNotFound(RuntimeError):
    pass


class BadAngles(ValueError):
    pass


DEFAULT_RADII = np.concatenate([[0.0], 2.0 ** np.arange(0, 10.5, 0.5)])


@dataclass
class SymbolFamily:
    expr: E.Expr
    order: float
    n: int = 1
    label: str = ""
    scale_witness: Optional[NetSample] = None

    def __post_init__(self):
        self.expr = E.wrap(self.expr)
        if self.n not in (1, 2):
            raise ValueError("only n = 1 or 2 is supported")

    def env(self, x, xi, eps, extra=None) -> Dict:
        """Variable bindings; for n=2 the last axis of x and xi holds components."""
        x = np.asarray(x, float)
        xi = np.asarray(xi, float)
        env = {("eps", 0): float(eps)}
        if self.n == 1:
            env[("x", 0)] = x
            env[("xi", 0)] = xi
        else:
            for i in range(2):
                env[("x", i)] = x[..., i]
                env[("xi", i)] = xi[..., i]
        if extra:
            env.update(extra)
        return env

    def __call__(self, x, xi, eps=1.0, check=True):
        return E.evaluate(self.expr, self.env(x, xi, eps), check=check)

    def with_expr(self, expr, order=None, label=None):
        return SymbolFamily(expr, self.order if order is None else order, self.n,
                            self.label if label is None else label, self.scale_witness)

    @property
    def depends_on_x(self):
        return "x" in self.expr.kinds()

    @property
    def depends_on_eps(self):
        return "eps" in self.expr.kinds()

    def to_dict(self):
        return {"label": self.label, "order": self.order, "n": self.n,
                "expr": E.to_sexpr(self.expr)}

    @classmethod
    def from_dict(cls, d):
        return cls(E.from_sexpr(d["expr"]), float(d["order"]), int(d["n"]), d.get("label", ""))


def eval_symbol(a: SymbolFamily, x, xi, eps: float) -> complex:
    """Pointwise value a_eps(x, xi); raises DomainError at singularities."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    v = a(np.asarray(x, float), np.asarray(xi, float), eps)
    return complex(np.asarray(v).ravel()[0])


def diff_symbol(a: SymbolFamily, alpha=(), beta=(), cap: int = 12) -> SymbolFamily:
    """Exact derivative d_xi^alpha d_x^beta a; the order drops by |alpha|."""
    alpha = tuple(alpha) if not isinstance(alpha, int) else (alpha,)
    beta = tuple(beta) if not isinstance(beta, int) else (beta,)
    d = E.diff_multi(a.expr, alpha, beta, cap=cap)
    return SymbolFamily(d, a.order - sum(alpha), a.n, f"d{alpha}{beta}{a.label}")


# ----------------------------------------------------------------------------
# geometry

@dataclass
class ConeGrid:
    """Direction sectors covering the sphere with 50% overlap.

    n=1: two half-lines (+, -).  n=2: D closed sectors centred at 2*pi*d/D with
    half-width 2*pi/D, so neighbours share one half-width.
    """
    n: int = 1
    D: int = 16
    min_radius: float = 1.0

    def __post_init__(self):
        if self.n == 1:
            self.D = 2
        if self.min_radius < 1:
            raise ValueError("min_radius must be >= 1")

    @property
    def count(self):
        return 2 if self.n == 1 else self.D

    @property
    def half_width(self):
        return math.pi / 2 if self.n == 1 else 2 * math.pi / self.D

    def center_angle(self, d):
        return 0.0 if (self.n == 1 and d == 0) else (math.pi if self.n == 1 else 2 * math.pi * d / self.D)

    def direction(self, d) -> np.ndarray:
        if self.n == 1:
            return np.array([1.0 if d == 0 else -1.0])
        th = self.center_angle(d)
        return np.array([math.cos(th), math.sin(th)])

    def sample_directions(self, d, count=9) -> np.ndarray:
        """Unit vectors spanning the closed sector (boundaries included)."""
        if self.n == 1:
            return self.direction(d)[None, :]
        c = self.center_angle(d)
        th = c + np.linspace(-self.half_width, self.half_width, count)
        return np.stack([np.cos(th), np.sin(th)], axis=1)

    def masks(self, k: Sequence[np.ndarray], radius_min=None) -> np.ndarray:
        """Boolean membership array of shape (count,) + k[0].shape."""
        rmin = self.min_radius if radius_min is None else radius_min
        if self.n == 1:
            k0 = np.asarray(k[0])
            return np.stack([k0 >= rmin, k0 <= -rmin])
        k1, k2 = np.asarray(k[0], float), np.asarray(k[1], float)
        rad = np.hypot(k1, k2)
        th = np.arctan2(k2, k1)
        out = []
        for d in range(self.D):
            dth = np.abs((th - self.center_angle(d) + math.pi) % (2 * math.pi) - math.pi)
            out.append((dth <= self.half_width + 1e-12) & (rad >= rmin))
        return np.stack(out)

    def contains(self, d, v) -> bool:
        v = np.asarray(v, float)
        if self.n == 1:
            return bool(v[0] > 0) if d == 0 else bool(v[0] < 0)
        th = math.atan2(v[1], v[0])
        dth = abs((th - self.center_angle(d) + math.pi) % (2 * math.pi) - math.pi)
        return dth <= self.half_width + 1e-12

    def sectors_containing(self, v) -> List[int]:
        return [d for d in range(self.count) if self.contains(d, v)]

    def neighbours(self, d) -> List[int]:
        if self.n == 1:
            return [d]
        return [(d - 1) % self.D, d, (d + 1) % self.D]


@dataclass
class SamplingBox:
    center: Tuple[float, ...]
    half_widths: Tuple[float, ...]
    points_per_axis: int = 8

    def __post_init__(self):
        self.center = tuple(np.atleast_1d(np.asarray(self.center, float)))
        self.half_widths = tuple(np.atleast_1d(np.asarray(self.half_widths, float)))
        if len(self.center) != len(self.half_widths):
            raise ValueError("center and half_widths differ in dimension")
        if any(h <= 0 for h in self.half_widths):
            raise ValueError("half widths must be positive")
        if self.points_per_axis < 8:
            raise ValueError("points_per_axis must be >= 8")

    @property
    def n(self):
        return len(self.center)

    def lattice(self) -> np.ndarray:
        axes = [np.linspace(c - h, c + h, self.points_per_axis)
                for c, h in zip(self.center, self.half_widths)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.n)


# ----------------------------------------------------------------------------
# sampled suprema

def _lattice_values(a_expr, n, xs, ks, eps, check=False):
    """|expr| on the product of x points (P, n) and frequency points (Q, n)."""
    env = {("eps", 0): float(eps)}
    for i in range(n):
        env[("x", i)] = xs[:, i][:, None]
        env[("xi", i)] = ks[:, i][None, :]
    v = np.asarray(a_expr.evaluate(env), complex)
    return np.broadcast_to(v, (xs.shape[0], ks.shape[0]))


def _shell_points(n, radii, dirs):
    """Frequency points radius x direction, returned with the radius of each."""
    pts = (np.asarray(radii)[:, None, None] * dirs[None, :, :]).reshape(-1, n)
    rad = np.repeat(np.asarray(radii), dirs.shape[0])
    return pts, rad


def _all_dirs(n, cones: Optional[ConeGrid]):
    if n == 1:
        return np.array([[1.0], [-1.0]])
    cg = cones or ConeGrid(2, 16)
    return np.concatenate([cg.sample_directions(d, 3) for d in range(cg.count)])


def shell_table(expr, n, K: SamplingBox, radii, dirs, grid: EpsilonGrid, weight: float):
    """Table (eps, shell) of max over x in K and dirs of <xi>^weight |expr|."""
    xs = K.lattice()
    pts, rad = _shell_points(n, radii, dirs)
    jb = (1 + rad ** 2) ** (weight / 2)
    out = np.empty((len(grid), len(radii)))
    for ji, e in enumerate(grid.eps):
        with np.errstate(all="ignore"):
            v = np.abs(_lattice_values(expr, n, xs, pts, e)) * jb[None, :]
        v = np.where(np.isnan(v), np.inf, v)
        out[ji] = v.max(axis=0).reshape(len(radii), -1).max(axis=1)
    return out


def estimate_seminorm(a: SymbolFamily, K: SamplingBox, alpha=(), beta=(), m: float = None,
                      grid: EpsilonGrid = EpsilonGrid(), xi_radii=None,
                      cones: ConeGrid = None) -> NetSample:
    """Per eps: sup of <xi>^(-m+|alpha|) |d_xi^alpha d_x^beta a| over the lattice."""
    m = a.order if m is None else m
    alpha = tuple(alpha) if not isinstance(alpha, int) else (alpha,)
    beta = tuple(beta) if not isinstance(beta, int) else (beta,)
    radii = DEFAULT_RADII[1:] if xi_radii is None else np.asarray(xi_radii, float)
    d = E.diff_multi(a.expr, alpha, beta)
    tab = shell_table(d, a.n, K, radii, _all_dirs(a.n, cones), grid, -m + sum(alpha))
    return NetSample(grid, tab.max(axis=1))


def _order_ok(a, K, grid, m, radii, th: Thresholds, dirs):
    tab = shell_table(a.expr, a.n, K, radii, dirs, grid, -m)
    net = NetSample(grid, tab.max(axis=1))
    cls = classify_scale(net, th)
    if cls.tag == "Unbounded":
        return False
    tab1 = tab * (1 + radii ** 2) ** (-0.5)
    net1 = NetSample(grid, tab1.max(axis=1))
    s0 = fit_growth_exponent(net, th.tail_fraction).slope
    s1 = fit_growth_exponent(net1, th.tail_fraction).slope
    if math.isfinite(s0) and s0 > s1 + th.order_slope_slack:
        return False
    prof = tab[0]
    mid = len(radii) // 2
    return bool(prof[mid:].max() <= (1 + th.order_profile_slack) * prof[mid] or prof[mid:].max() == 0)


def estimate_order(a: SymbolFamily, K: SamplingBox, grid: EpsilonGrid = EpsilonGrid(1, 8),
                   thresholds: Thresholds = DEFAULT, lo=-10.0, hi=10.0) -> float:
    """Smallest m (to 0.05) for which <xi>^-m |a| is bounded in xi and moderate in eps."""
    radii = 2.0 ** np.arange(0, 10.5, 0.5)
    dirs = _all_dirs(a.n, None)
    if not _order_ok(a, K, grid, hi, radii, thresholds, dirs):
        raise OrderNotFound(f"no order <= {hi} certifies {a.label}")
    if _order_ok(a, K, grid, lo, radii, thresholds, dirs):
        return lo
    while hi - lo > thresholds.order_tol / 2:
        mid = 0.5 * (lo + hi)
        if _order_ok(a, K, grid, mid, radii, thresholds, dirs):
            hi = mid
        else:
            lo = mid
    return hi


# ----------------------------------------------------------------------------
# micro-ellipticity

@dataclass
class EllipticityCell:
    box_id: int
    sector_id: int
    verdict: str
    s_net: NetSample
    r_net: NetSample
    s_class: ScaleClass
    r_class: ScaleClass
    min_modulus: np.ndarray  # (eps, shell) table of <xi>^m / |a|


@dataclass
class EllipticityReport:
    cells: List[EllipticityCell]
    radii: np.ndarray

    def verdict(self, box_id, sector_id):
        for c in self.cells:
            if c.box_id == box_id and c.sector_id == sector_id:
                return c.verdict
        raise KeyError((box_id, sector_id))

    @property
    def all_slow_scale(self):
        return all(c.verdict == "SlowScaleElliptic" for c in self.cells)

    def rows(self):
        out = []
        for c in self.cells:
            out.append({"box_id": c.box_id, "sector_id": c.sector_id, "verdict": c.verdict,
                        "s_slope": c.s_class.fit.slope, "r_slope": c.r_class.fit.slope})
        return out


def microellipticity_report(a: SymbolFamily, U, cones: ConeGrid, grid: EpsilonGrid = EpsilonGrid(),
                            xi_radii=None, thresholds: Thresholds = DEFAULT,
                            directions_per_sector: int = 9) -> EllipticityReport:
    """Lower bound |a| >= <xi>^m / s_eps for |xi| >= r_eps on each box x sector."""
    boxes = U if isinstance(U, (list, tuple)) else [U]
    radii = DEFAULT_RADII if xi_radii is None else np.asarray(xi_radii, float)
    m = a.order
    cells = []
    for bi, box in enumerate(boxes):
        for d in range(cones.count):
            dirs = cones.sample_directions(d, directions_per_sector)
            absa = shell_table_min(a.expr, a.n, box, radii, dirs, grid)
            jbm = (1 + radii ** 2) ** (m / 2)
            with np.errstate(divide="ignore"):
                # moduli at rounding level relative to <xi>^m count as zeros
                live = absa > 1e-10 * jbm[None, :]
                q = np.where(live, jbm[None, :] / np.where(live, absa, 1), np.inf)
            s_vals, r_vals = [], []
            never = False
            growing = False
            for ji in range(len(grid)):
                fin = np.isfinite(q[ji])
                # first shell from which every larger shell is finite
                bad = np.where(~fin)[0]
                start = 0 if len(bad) == 0 else bad[-1] + 1
                if start >= len(radii):
                    never = True
                    s_vals.append(1.0)
                    r_vals.append(radii[-1])
                    continue
                s_vals.append(max(1.0, q[ji, start:].max()))
                r_vals.append(max(1.0, radii[start]))
                tail = q[ji, -4:]
                if np.all(np.isfinite(tail)) and tail[0] > 0:
                    lr = np.log(radii[-4:])
                    sl = np.polyfit(lr, np.log(tail), 1)[0]
                    if sl > thresholds.ellip_growth_tol:
                        growing = True
            s_net = NetSample(grid, np.array(s_vals))
            r_net = NetSample(grid, np.array(r_vals))
            sc, rc = classify_scale(s_net, thresholds), classify_scale(r_net, thresholds)
            if never or growing or sc.tag == "Unbounded":
                verdict = "Characteristic"
            elif sc.tag == "SlowScale" and rc.tag == "SlowScale":
                verdict = "SlowScaleElliptic"
            else:
                verdict = "Elliptic"
            cells.append(EllipticityCell(bi, d, verdict, s_net, r_net, sc, rc, q))
    return EllipticityReport(cells, radii)


def shell_table_min(expr, n, K, radii, dirs, grid):
    """Table (eps, shell) of min over x in K and dirs of |expr|."""
    xs = K.lattice()
    pts, rad = _shell_points(n, radii, dirs)
    out = np.empty((len(grid), len(radii)))
    for ji, e in enumerate(grid.eps):
        with np.errstate(all="ignore"):
            v = np.abs(_lattice_values(expr, n, xs, pts, e))
        v = np.where(np.isnan(v), 0.0, v)
        out[ji] = v.min(axis=0).reshape(len(radii), -1).min(axis=1)
    return out


def characteristic_set(a: SymbolFamily, U, cones: ConeGrid, grid: EpsilonGrid = EpsilonGrid(),
                       **kw) -> List[Tuple[int, int]]:
    rep = microellipticity_report(a, U, cones, grid, **kw)
    return [(c.box_id, c.sector_id) for c in rep.cells if c.verdict == "Characteristic"]


def derivative_ratio_net(a: SymbolFamily, U: SamplingBox, cones: ConeGrid, sector: int,
                         alpha, beta, r_net: NetSample, radii=None) -> NetSample:
    """max |d^alpha_xi d^beta_x a| <xi>^|alpha| / |a| over U x sector, |xi| >= r_eps."""
    radii = DEFAULT_RADII[1:] if radii is None else np.asarray(radii)
    d = E.diff_multi(a.expr, alpha, beta)
    dirs = cones.sample_directions(sector, 9)
    xs = U.lattice()
    pts, rad = _shell_points(a.n, radii, dirs)
    vals = []
    for ji, e in enumerate(r_net.grid.eps):
        keep = rad >= r_net.values[ji]
        with np.errstate(all="ignore"):
            num = np.abs(_lattice_values(d, a.n, xs, pts[keep], e))
            den = np.abs(_lattice_values(a.expr, a.n, xs, pts[keep], e))
            ratio = num * (1 + rad[keep] ** 2)[None, :] ** (sum(alpha) / 2) / den
        vals.append(np.nanmax(ratio) if ratio.size else 0.0)
    return NetSample(r_net.grid, np.array(vals))


# ----------------------------------------------------------------------------
# microsupport

@dataclass
class MicrosupportCell:
    box_id: int
    sector_id: int
    smoothing: bool
    N: float
    slopes: Dict[str, float]


@dataclass
class MicrosupportEstimate:
    cells: List[MicrosupportCell]

    def smoothing(self, box_id, sector_id):
        for c in self.cells:
            if c.box_id == box_id and c.sector_id == sector_id:
                return c.smoothing
        raise KeyError((box_id, sector_id))

    def rows(self):
        return [{"box_id": c.box_id, "sector_id": c.sector_id,
                 "verdict": "smoothing" if c.smoothing else "microsupport",
                 "s_slope": c.N, "r_slope": float("nan")} for c in self.cells]


def _multi_indices(n, total):
    for k in range(total + 1):
        for combo in itertools.product(range(k + 1), repeat=2 * n):
            if sum(combo) == k:
                yield combo[:n], combo[n:]


def microsupport_estimate(a: SymbolFamily, U, cones: ConeGrid, grid: EpsilonGrid = EpsilonGrid(1, 8),
                          weights=(-4, -2, 0), max_deriv: int = 4, radii=None,
                          thresholds: Thresholds = DEFAULT) -> MicrosupportEstimate:
    """Smoothing on a sector iff every weighted derivative sup is bounded in xi
    and its eps-growth stays within slack of the undifferentiated exponent."""
    if not {-4, -2, 0} <= set(weights):
        raise ValueError("weights must include -4, -2 and 0")
    boxes = U if isinstance(U, (list, tuple)) else [U]
    radii = 2.0 ** np.arange(0, 10.5, 0.5) if radii is None else np.asarray(radii, float)
    radii = radii[radii >= cones.min_radius]
    derivs = list(_multi_indices(a.n, max_deriv))
    dexprs = {ab: E.diff_multi(a.expr, ab[0], ab[1]) for ab in derivs}
    cells = []
    for bi, box in enumerate(boxes):
        for d in range(cones.count):
            dirs = cones.sample_directions(d, 9)
            slopes = {}
            ok = True
            tables = {}
            for ab in derivs:
                tables[ab] = shell_table(dexprs[ab], a.n, box, radii, dirs, grid, 0.0)
            t0 = tables[((0,) * a.n, (0,) * a.n)]
            N0 = fit_growth_exponent(NetSample(grid, t0.max(axis=1)), thresholds.tail_fraction).slope
            Nstar = N0 if math.isfinite(N0) else 0.0
            for m in weights:
                w = (1 + radii ** 2) ** (-m / 2)
                for ab in derivs:
                    tab = tables[ab] * w[None, :]
                    net = NetSample(grid, tab.max(axis=1))
                    sl = fit_growth_exponent(net, thresholds.tail_fraction).slope
                    slopes[f"m={m},a={ab[0]},b={ab[1]}"] = sl
                    prof = tab.max(axis=0)
                    half = len(radii) // 2
                    bounded = prof[half:].max() <= (1 + thresholds.order_profile_slack) * max(prof[:half + 1].max(), 1e-300) \
                        or prof.max() <= 1e-300
                    if not bounded or (math.isfinite(sl) and sl > Nstar + thresholds.smoothing_slack):
                        ok = False
            cells.append(MicrosupportCell(bi, d, ok, Nstar, slopes))
    return MicrosupportEstimate(cells)


# ----------------------------------------------------------------------------
# cutoffs

def _xi_norm2(n):
    return E.add(*(E.power(E.xi(i), 2) for i in range(n)))


def radial_cutoff(n: int, scale: float = 1.0) -> E.Expr:
    """chi(xi/scale): 0 for |xi| <= scale/2, 1 for |xi| >= scale (smooth in |xi|^2)."""
    r2 = _xi_norm2(n)
    t = (r2 * (1.0 / scale ** 2) - 0.25) * (1 / 0.75)
    return E.smooth(t)


def build_cone_cutoff(direction, inner_halfangle: float, outer_halfangle: float, n: int,
                      label: str = "cone") -> SymbolFamily:
    """tau(xi) = rho(|xi|) sigma(angle(xi, direction)), order 0 and eps-independent."""
    if not 0 < inner_halfangle < outer_halfangle < math.pi:
        raise BadAngles("need 0 < inner < outer < pi")
    e = np.asarray(direction, float).reshape(-1)
    if e.size != n:
        raise ValueError("direction has wrong dimension")
    e = e / np.linalg.norm(e)
    dot = E.add(*(float(e[i]) * E.xi(i) for i in range(n)))
    cos_t = dot * E.power(_xi_norm2(n), -0.5)
    ci, co = math.cos(inner_halfangle), math.cos(outer_halfangle)
    sig = E.smooth((cos_t - co) * (1.0 / (ci - co)))
    return SymbolFamily(E.mul(radial_cutoff(n), sig), 0.0, n, label)


def periodic_distance(x, y, period=2 * math.pi):
    d = np.abs(np.asarray(x, float) - np.asarray(y, float)) % period
    d = np.minimum(d, period - d)
    if d.ndim and d.shape[-1] in (1, 2) and np.ndim(x) > 1:
        return np.sqrt((d ** 2).sum(axis=-1))
    return d


def build_proper_cutoff(diag_width: float, n: int = 1) -> Callable:
    """chi(x, y) = s((2w - d(x, y))/w): 1 for d <= w, 0 for d >= 2w."""
    if diag_width <= 0:
        raise ValueError("diag_width must be positive")
    w = float(diag_width)

    def chi(xv, yv):
        xv = np.asarray(xv, float)
        yv = np.asarray(yv, float)
        if n == 1:
            d = periodic_distance(xv, yv)
        else:
            dd = np.abs(xv - yv) % (2 * math.pi)
            dd = np.minimum(dd, 2 * math.pi - dd)
            d = np.sqrt((dd ** 2).sum(axis=-1))
        return E.smoothstep((2 * w - d) / w)

    chi.diag_width = w
    chi.n = n
    return chi
