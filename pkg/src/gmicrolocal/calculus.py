"""Asymptotic expansions of symbols: composition, adjoint, transpose,
amplitude reduction, Borel-type summation and elliptic parametrices."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import expr as E
from .config import DEFAULT, Thresholds
from .nets import EpsilonGrid, NetSample
from .quantize import GridSpec, symbol_matrix
from .symbols import (ConeGrid, SamplingBox, SymbolFamily, estimate_order, microellipticity_report,
                      radial_cutoff, shell_table, _all_dirs, DEFAULT_RADII)


class NoAdmissibleRadius(RuntimeError):
    pass


class NotElliptic(ValueError):
    pass


MAX_BOREL_RADIUS = 2.0 ** 30


@dataclass
class Expansion:
    """Terms ordered by strictly decreasing order."""
    terms: List[Tuple[float, SymbolFamily]]
    common_witness: Optional[NetSample] = None
    refined: bool = False

    def __post_init__(self):
        orders = [m for m, _ in self.terms]
        if any(b >= a for a, b in zip(orders, orders[1:])):
            raise ValueError("expansion orders must strictly decrease")
        for m, t in self.terms:
            if t.order != m:
                raise ValueError("term order does not match its slot")

    def __len__(self):
        return len(self.terms)

    @property
    def orders(self):
        return [m for m, _ in self.terms]

    @property
    def n(self):
        return self.terms[0][1].n if self.terms else 1

    def exprs(self):
        return [t.expr for _, t in self.terms]

    def total(self, upto: Optional[int] = None) -> E.Expr:
        return E.add(*[t.expr for _, t in self.terms[:upto]]) if self.terms else E.ZERO

    def to_dict(self):
        return {"refined": self.refined,
                "terms": [t.to_dict() for _, t in self.terms]}


def is_zero(e: E.Expr) -> bool:
    return isinstance(e, E.Const) and e.value == 0


def multi_indices(n: int, k: int):
    """Multi-indices of length n and total k in lexicographic order."""
    return [g for g in itertools.product(range(k + 1), repeat=n) if sum(g) == k][::-1]


def _fact(g):
    return float(np.prod([math.factorial(v) for v in g]))


def _dx(e, g, xvar="x"):
    """D^g = (-i d)^g in the given spatial variable."""
    k = sum(g)
    d = E.diff_multi(e, (), g, cap=64, xvar=xvar)
    return E.mul((-1j) ** k, d) if k else d


def _group(pieces: Dict[int, List[E.Expr]], base_order: float, n: int, label: str,
           keep_zero=False) -> Expansion:
    terms = []
    for k in sorted(pieces):
        e = E.add(*pieces[k]) if pieces[k] else E.ZERO
        if is_zero(e) and not keep_zero:
            continue
        terms.append((base_order - k, SymbolFamily(e, base_order - k, n, f"{label}[{k}]")))
    return Expansion(terms)


def _check_cap(r, cap):
    if r - 1 > cap:
        raise E.CapExceeded(f"truncation r={r} needs derivatives of order {r - 1} > cap {cap}")


def compose_pieces(a: E.Expr, b: E.Expr, n: int, r: int) -> Dict[int, List[E.Expr]]:
    out = {}
    for k in range(r):
        out[k] = []
        for g in multi_indices(n, k):
            da = E.diff_multi(a, g, (), cap=64)
            if is_zero(da):
                continue
            db = _dx(b, g)
            if is_zero(db):
                continue
            out[k].append(E.mul(1.0 / _fact(g), da, db))
    return out


def expand_compose(a: SymbolFamily, b: SymbolFamily, r: int = 4, cap: int = 12) -> Expansion:
    """a#b ~ sum over |g| < r of (1/g!) d_xi^g a D_x^g b, grouped by total order."""
    if r < 1:
        raise ValueError("r must be >= 1")
    if a.n != b.n:
        raise ValueError("symbol dimensions differ")
    _check_cap(r, cap)
    pieces = compose_pieces(a.expr, b.expr, a.n, r)
    return _group(pieces, a.order + b.order, a.n, f"{a.label}#{b.label}")


def reduce_amplitude(b: E.Expr, r: int = 4, n: int = 1, order: float = 0.0, cap: int = 12,
                     label: str = "amp") -> Expansion:
    """sigma ~ sum over |g| < r of (1/g!) d_xi^g D_y^g b(x, y, xi) at y = x."""
    if r < 1:
        raise ValueError("r must be >= 1")
    _check_cap(r, cap)
    b = E.wrap(b)
    diag = {("y", i): E.x(i) for i in range(n)}
    pieces = {}
    for k in range(r):
        pieces[k] = []
        for g in multi_indices(n, k):
            d = E.diff_multi(b, g, (), cap=64)
            if is_zero(d):
                continue
            d = _dx(d, g, xvar="y")
            if is_zero(d):
                continue
            pieces[k].append(E.mul(1.0 / _fact(g), E.substitute(d, diag)))
    return _group(pieces, order, n, label)


def expand_adjoint(a: SymbolFamily, r: int = 4, cap: int = 12) -> Expansion:
    """a* ~ sum over |g| < r of (1/g!) d_xi^g D_x^g conj(a).

    The kernel of the adjoint is conj(k(y, x)); the amplitude conj(a(y, xi))
    reduces to exactly this sum.
    """
    amp = E.substitute(E.conj(a.expr), {("x", i): E.y(i) for i in range(a.n)})
    return reduce_amplitude(amp, r, a.n, a.order, cap, f"{a.label}*")


def expand_transpose(a: SymbolFamily, r: int = 4, cap: int = 12) -> Expansion:
    """Transpose symbol from the amplitude a(y, -xi) of the kernel k(y, x)."""
    sub = {("x", i): E.y(i) for i in range(a.n)}
    sub.update({("xi", i): E.neg(E.xi(i)) for i in range(a.n)})
    amp = E.substitute(a.expr, sub)
    return reduce_amplitude(amp, r, a.n, a.order, cap, f"t{a.label}")


# ----------------------------------------------------------------------------
# Borel summation

@dataclass
class BorelSumResult:
    symbol: SymbolFamily
    cut_radii: List[float]
    terms_used: int
    remainder_orders: Dict[int, float] = field(default_factory=dict)
    probe_domains: List[dict] = field(default_factory=list)


def _default_boxes(n):
    return [SamplingBox((math.pi,) * n, (math.pi,) * n, 8)]


def borel_sum(e: Expansion, probe_boxes: Optional[Sequence[SamplingBox]] = None,
              grid: EpsilonGrid = EpsilonGrid(1, 8), check_remainder: bool = True,
              thresholds: Thresholds = DEFAULT) -> BorelSumResult:
    """sum_j chi(xi/t_j) term_j with doubling radii chosen on the probe lattice."""
    if len(e) < 2:
        raise ValueError("borel_sum needs at least two terms")
    n = e.n
    boxes = list(probe_boxes) if probe_boxes else _default_boxes(n)
    radii = DEFAULT_RADII[1:]
    dirs = _all_dirs(n, None)
    wit = e.common_witness.values if e.common_witness is not None else np.zeros(len(grid))
    ts = [1.0]
    for j in range(1, len(e)):
        m_prev = e.terms[j - 1][0]
        term = e.terms[j][1].expr
        t = 2.0 * ts[-1]
        while True:
            if t > MAX_BOREL_RADIUS:
                raise NoAdmissibleRadius(f"term {j} needs a radius beyond 2^30")
            cut = E.mul(radial_cutoff(n, t), term)
            worst = max(shell_table(cut, n, K, radii, dirs, grid, -m_prev).max()
                        for K in boxes)
            bound = 2.0 ** (-j) * (1 + wit.min())
            if worst <= bound:
                break
            t *= 2.0
        ts.append(t)
    total = E.add(*[E.mul(radial_cutoff(n, t), term.expr) for t, (_, term) in zip(ts, e.terms)])
    sym = SymbolFamily(total, e.terms[0][0], n, "borel")
    res = BorelSumResult(sym, ts, len(e),
                         probe_domains=[{"center": list(K.center), "half_widths": list(K.half_widths),
                                         "radii_max": float(radii[-1])} for K in boxes])
    if check_remainder:
        for r in (1, 2):
            if r >= len(e):
                break
            rem = E.sub(total, e.total(r))
            m = min(estimate_order(SymbolFamily(rem, e.terms[r][0], n), K, grid, thresholds)
                    for K in boxes[:1])
            res.remainder_orders[r] = m
    return res


# ----------------------------------------------------------------------------
# parametrix

@dataclass
class ParametrixResult:
    expansion: Expansion
    truncated_symbol: SymbolFamily
    residual_order_estimate: float
    excision_radius: float
    symbol: SymbolFamily = None


def parametrix(a: SymbolFamily, r: int = 4, probe_boxes: Optional[Sequence[SamplingBox]] = None,
               grid: EpsilonGrid = EpsilonGrid(1, 8), cones: Optional[ConeGrid] = None,
               thresholds: Thresholds = DEFAULT) -> ParametrixResult:
    """Right parametrix p with a#p = 1 modulo order -m-r, from the elliptic recursion."""
    n = a.n
    boxes = list(probe_boxes) if probe_boxes else _default_boxes(n)
    cones = cones or ConeGrid(n, 16 if n == 2 else 2)
    rep = microellipticity_report(a, boxes, cones, grid, thresholds=thresholds)
    if not rep.all_slow_scale:
        bad = [(c.box_id, c.sector_id, c.verdict) for c in rep.cells
               if c.verdict != "SlowScaleElliptic"]
        raise NotElliptic(f"not slow-scale elliptic on {bad[:4]}")
    if "xi" in a.expr.kinds():
        R = max(float(c.r_net.values.max()) for c in rep.cells)
        chi = radial_cutoff(n, 2 * R)
    else:
        R = 0.0
        chi = E.ONE
    inv = E.div(E.ONE, a.expr)
    b = [E.mul(chi, inv)]
    for k in range(1, r):
        acc = []
        for j in range(k):
            for g in multi_indices(n, k - j):
                da = E.diff_multi(a.expr, g, (), cap=64)
                if is_zero(da):
                    continue
                db = _dx(b[j], g)
                if is_zero(db):
                    continue
                acc.append(E.mul(1.0 / _fact(g), da, db))
        b.append(E.neg(E.mul(b[0], E.add(*acc))) if acc else E.ZERO)
    m = a.order
    exp_ = Expansion([(-m - k, SymbolFamily(bk, -m - k, n, f"p[{k}]")) for k, bk in enumerate(b)])
    nonzero = [(mm, t) for mm, t in exp_.terms if not is_zero(t.expr)]
    if len(nonzero) >= 2:
        trunc = borel_sum(Expansion(nonzero), boxes, grid, check_remainder=False).symbol
    else:
        trunc = SymbolFamily(nonzero[0][1].expr if nonzero else E.ZERO, -m, n)
    trunc = SymbolFamily(trunc.expr, -m, n, f"parametrix({a.label})")
    res = ParametrixResult(exp_, trunc, float("nan"), R, trunc)
    res.residual_order_estimate = expansion_residual_order(a, res, r, boxes[0], grid, thresholds)
    return res


def parametrix_residual(a: SymbolFamily, p: ParametrixResult, r: int) -> E.Expr:
    """sum over j < r, |g| < r of (1/g!) d_xi^g a D_x^g b_j, minus 1."""
    acc = []
    for j, (_, bj) in enumerate(p.expansion.terms[:r]):
        for k, parts in compose_pieces(a.expr, bj.expr, a.n, r).items():
            acc.extend(parts)
    return E.sub(E.add(*acc), E.ONE)


def expansion_residual_order(a: SymbolFamily, p, r: int, box: Optional[SamplingBox] = None,
                             grid: EpsilonGrid = EpsilonGrid(1, 8),
                             thresholds: Thresholds = DEFAULT, spec: Optional[GridSpec] = None,
                             eps: float = 2.0 ** -4) -> float:
    """Fitted order of a truncation residual.

    For a ParametrixResult the residual is the symbol-level a#p - 1 with all
    cross terms below order r.  For a second symbol b the residual is the
    exact discrete composition symbol minus the truncated expansion, fitted
    on the grid frequency shells.
    """
    box = box or _default_boxes(a.n)[0]
    if isinstance(p, ParametrixResult):
        res = parametrix_residual(a, p, r)
        if is_zero(res):
            return thresholds.order_floor
        # the residual is compactly supported below the excision radius when
        # the recursion closes exactly; estimate_order reports the floor then
        return estimate_order(SymbolFamily(res, -r, a.n), box, grid, thresholds,
                              lo=thresholds.order_floor)
    return composition_residual_order(a, p, r, spec or GridSpec(1, 512), eps)[0]


def composition_symbol(a: SymbolFamily, b: SymbolFamily, spec: GridSpec, eps: float) -> np.ndarray:
    """Exact discrete symbol of Op(a)Op(b): exp(-ixk) Op(a)[b(., k) exp(i.k)](x), n = 1."""
    if spec.n != 1 or a.n != 1:
        raise ValueError("composition symbols are computed for n = 1")
    ph = np.exp(1j * np.outer(spec.axis(), spec.freqs()))
    # Op(a) as a dense matrix at this eps
    A = (ph * symbol_matrix(a.expr, spec, eps)) @ ph.conj().T / spec.G
    B = symbol_matrix(b.expr, spec, eps) * ph
    return ph.conj() * (A @ B)


def composition_residual_order(a: SymbolFamily, b: SymbolFamily, r: int, spec: GridSpec,
                               eps: float = 2.0 ** -4, kmin: float = 4.0, kmax_frac: float = 1 / 8):
    """Fitted order of sigma(Op(a)Op(b)) minus the r-term expansion.

    The fit regresses log max_x |residual| on log <k> over frequencies
    kmin <= |k| <= G*kmax_frac, away from the Nyquist wrap-around.
    """
    sig = composition_symbol(a, b, spec, eps)
    ex = expand_compose(a, b, r)
    approx = np.zeros_like(sig)
    for _, t in ex.terms:
        approx = approx + symbol_matrix(t.expr, spec, eps)
    res = np.abs(sig - approx).max(axis=0)
    k = np.abs(spec.freqs())
    sel = (k >= kmin) & (k <= spec.G * kmax_frac)
    scale = np.abs(sig).max(axis=0)[sel].max()
    y = res[sel]
    if y.max() <= 1e-13 * scale:
        return DEFAULT.order_floor, res
    y = np.maximum(y, 1e-300)
    # envelope over +k and -k at each |k|
    kk = k[sel]
    uk = np.unique(kk)
    env = np.array([y[kk == v].max() for v in uk])
    slope = np.polyfit(np.log(np.sqrt(1 + uk ** 2)), np.log(env), 1)[0]
    return float(slope), res
