"""Wave front estimation from directional Fourier decay of windowed families.

For every spatial cell and direction sector the table M(l, eps) holds the
largest value of <k>^l |FFT(window * u_eps)(k)| over the sector.  A direction
is regular when the eps-growth exponent N(l) of M(l, .) does not increase with
l, i.e. one N serves every l.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from . import expr as E
from .config import DEFAULT, Thresholds
from .expr import smoothstep
from .nets import NetSample, classify_scale, fit_growth_exponent, tail_count
from .quantize import GridFunctionFamily, GridSpec, ResolutionWarning, quantize_kn
from .symbols import (ConeGrid, SamplingBox, SymbolFamily, build_cone_cutoff,
                      microellipticity_report, microsupport_estimate)

Cell = Tuple[int, ...]
Key = Tuple[Cell, int]


@dataclass
class CellDecomposition:
    """C equal cells per axis (default 64 grid points each); window = smoothstep ramp over one cell width on each side.

    Adjacent windows sum to one exactly, so the windows form a partition of unity.
    """
    spec: GridSpec
    C: Optional[int] = None

    def __post_init__(self):
        if self.C is None:
            self.C = max(2, self.spec.G // 64)
        if self.spec.G % self.C:
            raise ValueError("C must divide G")
        self.width = 2 * math.pi / self.C
        ax = self.spec.axis()
        self._win1 = []
        for c in range(self.C):
            d = (ax - self.center(c) + math.pi) % (2 * math.pi) - math.pi
            self._win1.append(smoothstep(1 - np.abs(d) / self.width))

    def center(self, c: int) -> float:
        return (c + 0.5) * self.width

    @property
    def cells(self) -> List[Cell]:
        return list(itertools.product(range(self.C), repeat=self.spec.n))

    def window(self, cell: Cell) -> np.ndarray:
        w = self._win1[cell[0]]
        for c in cell[1:]:
            w = np.multiply.outer(w, self._win1[c])
        return w

    def cell_of(self, point) -> Cell:
        p = np.atleast_1d(np.asarray(point, float)) % (2 * math.pi)
        return tuple(int(v // self.width) % self.C for v in p)

    def cells_meeting(self, point, tol: float = 1e-9) -> List[Cell]:
        """Cells whose closure contains the point."""
        p = np.atleast_1d(np.asarray(point, float)) % (2 * math.pi)
        per_axis = []
        for v in p:
            q = v / self.width
            opts = {int(math.floor(q)) % self.C}
            if abs(q - round(q)) < tol:
                opts |= {int(round(q)) % self.C, (int(round(q)) - 1) % self.C}
            per_axis.append(sorted(opts))
        return [tuple(c) for c in itertools.product(*per_axis)]

    def neighbours(self, cell: Cell) -> List[Cell]:
        return [tuple((c + d) % self.C for c, d in zip(cell, off))
                for off in itertools.product((-1, 0, 1), repeat=len(cell))]

    def box(self, cell: Cell) -> SamplingBox:
        return SamplingBox(tuple(self.center(c) for c in cell), (self.width / 2,) * len(cell), 8)

    def coverage(self) -> np.ndarray:
        tot = np.zeros(self.spec.shape)
        for c in self.cells:
            tot += self.window(c)
        return tot


@dataclass
class WFConfig:
    L: Optional[int] = None            # 6 in 1D, 4 in 2D
    tau_dir: float = DEFAULT.tau_dir
    n_max: float = DEFAULT.n_max
    min_radius: Optional[float] = None  # G/64
    tail_points: int = DEFAULT.wf_tail_points
    verdict_r2: float = DEFAULT.verdict_r2

    def resolved(self, spec: GridSpec) -> "WFConfig":
        return WFConfig(self.L if self.L is not None else (6 if spec.n == 1 else 4),
                        self.tau_dir, self.n_max,
                        self.min_radius if self.min_radius is not None else spec.G / 64,
                        self.tail_points, self.verdict_r2)

    def as_dict(self):
        return asdict(self)


@dataclass
class DecayTable:
    cells: CellDecomposition
    cones: ConeGrid
    L: int
    eps_grid: object
    log2M: Dict[Cell, np.ndarray]   # cell -> (sector, l, eps)

    def M(self, cell, sector):
        return 2.0 ** self.log2M[cell][sector]


@dataclass
class RegularityVerdict:
    regular: bool
    N_slope_vs_l: float
    N_at_l0: float
    N: List[float]
    r2: List[float]
    reliable: bool


@dataclass
class WavefrontEstimate:
    verdicts: Dict[Key, RegularityVerdict]
    cells: CellDecomposition
    cones: ConeGrid
    config: dict

    @property
    def singular(self) -> Set[Key]:
        return {k for k, v in self.verdicts.items() if not v.regular}

    def singular_cells(self) -> List[Cell]:
        return sorted({c for c, _ in self.singular})

    def verdict_map(self) -> Dict[Key, bool]:
        return {k: v.regular for k, v in self.verdicts.items()}

    def rows(self):
        out = []
        for (cell, d), v in sorted(self.verdicts.items()):
            cy = cell[1] if len(cell) > 1 else 0
            out.append([cell[0], cy, d, self.cones.center_angle(d), int(v.regular),
                        float(v.N_at_l0), float(v.N_slope_vs_l)])
        return out


WF_HEADER = ["cell_x", "cell_y", "sector", "theta_center", "regular", "N0", "slope"]


def spectral_resolution(u: GridFunctionFamily) -> float:
    """Largest ratio of outer-band to peak spectrum over eps (outer band: |k| > 3G/8)."""
    G = u.spec.G
    k = np.abs(u.spec.freqs())
    outer = k > 3 * G / 8
    worst = 0.0
    for d in u.data:
        F = np.abs(np.fft.fftn(d))
        top = F.max()
        if top == 0:
            continue
        if u.spec.n == 1:
            band = F[outer]
        else:
            band = F[outer[:, None] | outer[None, :]]
        worst = max(worst, band.max() / top)
    return worst


def _sector_index(spec: GridSpec, cones: ConeGrid, min_radius: float):
    ks = spec.kgrid()
    masks = cones.masks(ks, radius_min=min_radius)
    rad2 = sum(k.astype(float) ** 2 for k in ks)
    if spec.n > 1:
        # the square's corners alias along the diagonals; keep an isotropic band
        masks = masks & (rad2 < (spec.G / 2) ** 2)
    lk = 0.5 * np.log2(1 + rad2)
    return [np.flatnonzero(m.ravel()) for m in masks], lk.ravel()


def decay_table(u: GridFunctionFamily, cells: CellDecomposition, cones: ConeGrid, L: int = 8,
                min_radius: Optional[float] = None, guard: bool = True) -> DecayTable:
    """log2 of max over each sector of <k>^l |FFT(window * u_eps)| for l = 0..L."""
    spec = u.spec
    if cones.n != spec.n:
        raise ValueError("cone grid and data dimensions differ")
    if guard and spectral_resolution(u) > 1e-2:
        warnings.warn("smallest-eps slices are not resolved on this grid", ResolutionWarning,
                      stacklevel=2)
    R = spec.G / 64 if min_radius is None else min_radius
    idx, lk = _sector_index(spec, cones, R)
    # content below rounding level of the family's own magnitude counts as zero
    floor = 1e-13 * np.abs(u.data).max() * spec.size
    ls = np.arange(L + 1)
    out = {}
    for cell in cells.cells:
        w = cells.window(cell)
        tab = np.empty((cones.count, L + 1, len(u)))
        for ji, d in enumerate(u.data):
            F = np.abs(np.fft.fftn(w * d)).ravel()
            with np.errstate(divide="ignore"):
                lf = np.where(F > floor, np.log2(np.maximum(F, 1e-300)), -np.inf)
            for s, ix in enumerate(idx):
                if ix.size == 0:
                    tab[s, :, ji] = -np.inf
                    continue
                a = lf[ix][None, :] + ls[:, None] * lk[ix][None, :]
                tab[s, :, ji] = a.max(axis=1)
        out[cell] = tab
    return DecayTable(cells, cones, L, u.eps_grid, out)


def direction_verdict(t: DecayTable, cell: Cell, sector: int, tau_dir: float = DEFAULT.tau_dir,
                      n_max: float = DEFAULT.n_max, tail_points: int = DEFAULT.wf_tail_points,
                      verdict_r2: float = DEFAULT.verdict_r2) -> RegularityVerdict:
    """Regular iff the fitted slope of N(l) against l is at most tau_dir and N(0) <= n_max."""
    if t.L + 1 < 4:
        raise ValueError("need at least 4 weights l")
    J = len(t.eps_grid)
    tf = tail_points / J
    if tail_count(J, tf) != tail_points:
        tf = (tail_points - 0.5) / J
    rows = t.log2M[cell][sector]
    Ns, r2s = [], []
    for l in range(t.L + 1):
        v = np.where(np.isfinite(rows[l]), 2.0 ** np.clip(rows[l], -1100, 1000), 0.0)
        fit = fit_growth_exponent(NetSample(t.eps_grid, v), tf)
        N = fit.slope if math.isfinite(fit.slope) else 0.0
        Ns.append(max(N, 0.0))
        r2s.append(fit.r_squared)
    Ns_a = np.array(Ns)
    slope = float(np.polyfit(np.arange(t.L + 1), Ns_a, 1)[0])
    reliable = all(r >= verdict_r2 or n <= tau_dir for r, n in zip(r2s, Ns))
    regular = slope <= tau_dir and Ns[0] <= n_max
    return RegularityVerdict(bool(regular), slope, float(Ns[0]), Ns, r2s, reliable)


def wavefront_estimate(u: GridFunctionFamily, cells: Optional[CellDecomposition] = None,
                       cones: Optional[ConeGrid] = None,
                       config: Optional[WFConfig] = None) -> WavefrontEstimate:
    cells = cells or CellDecomposition(u.spec)
    cones = cones or ConeGrid(u.spec.n, 16)
    cfg = (config or WFConfig()).resolved(u.spec)
    tab = decay_table(u, cells, cones, cfg.L, cfg.min_radius)
    verdicts = {}
    for cell in cells.cells:
        for d in range(cones.count):
            verdicts[(cell, d)] = direction_verdict(tab, cell, d, cfg.tau_dir, cfg.n_max,
                                                    cfg.tail_points, cfg.verdict_r2)
    conf = cfg.as_dict()
    conf.update(cells=cells.C, sectors=cones.count, G=u.spec.G, n=u.spec.n, eps=str(u.eps_grid))
    return WavefrontEstimate(verdicts, cells, cones, conf)


def singsupp_estimate(u, cells=None, cones=None, config=None) -> List[Cell]:
    """Cells carrying at least one singular sector."""
    return wavefront_estimate(u, cells, cones, config).singular_cells()


# ----------------------------------------------------------------------------
# G-infinity regularity

@dataclass
class GinfReport:
    verdict: bool
    exponents: Dict[str, float]
    tags: Dict[str, str]
    spread: float
    slope_per_order: float

    def as_dict(self):
        return asdict(self)


def spectral_derivative(spec: GridSpec, data: np.ndarray, alpha: Sequence[int]) -> np.ndarray:
    F = np.fft.fftn(data)
    k = spec.freqs()
    for axis, a in enumerate(alpha):
        if a == 0:
            continue
        ka = (1j * k) ** a
        if a % 2:
            ka[spec.G // 2] = 0.0   # the Nyquist mode has no odd derivative
        shape = [1] * spec.n
        shape[axis] = spec.G
        F = F * ka.reshape(shape)
    return np.fft.ifftn(F)


def ginf_verdict(u: GridFunctionFamily, D_max: int = 6,
                 thresholds: Thresholds = DEFAULT) -> GinfReport:
    """G-infinity: every derivative obeys a moderate bound with one common exponent."""
    if spectral_resolution(u) > 1e-2:
        warnings.warn("smallest-eps slices are not resolved on this grid", ResolutionWarning,
                      stacklevel=2)
    alphas = [a for a in itertools.product(range(D_max + 1), repeat=u.spec.n) if sum(a) <= D_max]
    exps, tags = {}, {}
    by_order: Dict[int, float] = {}
    for a in alphas:
        vals = [np.abs(spectral_derivative(u.spec, d, a)).max() for d in u.data]
        cls = classify_scale(NetSample(u.eps_grid, np.array(vals)), thresholds)
        key = ",".join(map(str, a))
        N = cls.fit.slope if math.isfinite(cls.fit.slope) else 0.0
        exps[key] = N
        tags[key] = cls.tag
        by_order[sum(a)] = max(by_order.get(sum(a), -math.inf), N)
    N0 = exps[",".join(["0"] * u.spec.n)]
    spread = max(exps.values()) - N0
    orders = sorted(by_order)
    slope = float(np.polyfit(orders, [by_order[o] for o in orders], 1)[0])
    ok = spread <= thresholds.ginf_spread and all(t != "Unbounded" for t in tags.values())
    return GinfReport(bool(ok), exps, tags, float(spread), slope)


# ----------------------------------------------------------------------------
# set comparisons

def dilate(keys: Set[Key], cells: CellDecomposition, cones: ConeGrid) -> Set[Key]:
    out = set()
    for cell, d in keys:
        for c in cells.neighbours(cell):
            for dd in cones.neighbours(d):
                out.add((c, dd))
    return out


def _cellwise(cells: CellDecomposition, cones: ConeGrid, a: SymbolFamily, fn) -> Dict[Key, bool]:
    """Evaluate a per-(box, sector) symbol property on every cell; x-free symbols once."""
    if a.depends_on_x:
        boxes = [cells.box(c) for c in cells.cells]
        res = fn(boxes)
        return {(cells.cells[b], d): v for (b, d), v in res.items()}
    res = fn([cells.box(cells.cells[0])])
    return {(c, d): res[(0, d)] for c in cells.cells for d in range(cones.count)}


def microsupport_map(a: SymbolFamily, cells: CellDecomposition, cones: ConeGrid,
                     grid=None) -> Set[Key]:
    """(cell, sector) pairs where a is not smoothing."""
    from .nets import EpsilonGrid
    grid = grid or EpsilonGrid(1, 8)

    def fn(boxes):
        est = microsupport_estimate(a, boxes, cones, grid)
        return {(c.box_id, c.sector_id): c.smoothing for c in est.cells}
    sm = _cellwise(cells, cones, a, fn)
    return {k for k, v in sm.items() if not v}


def non_elliptic_map(a: SymbolFamily, cells: CellDecomposition, cones: ConeGrid,
                     grid=None) -> Set[Key]:
    """(cell, sector) pairs outside the slow-scale elliptic region."""
    from .nets import EpsilonGrid
    grid = grid or EpsilonGrid(1, 8)

    def fn(boxes):
        rep = microellipticity_report(a, boxes, cones, grid)
        return {(c.box_id, c.sector_id): c.verdict for c in rep.cells}
    v = _cellwise(cells, cones, a, fn)
    return {k for k, s in v.items() if s != "SlowScaleElliptic"}


def _fmt_keys(keys):
    return sorted([list(c) + [d] for c, d in keys])


def verify_microlocality(a: SymbolFamily, u: GridFunctionFamily, cells=None, cones=None,
                         config: Optional[WFConfig] = None) -> dict:
    """WF(Op(a)u) inside the one-cell, one-sector dilation of WF(u) and musupp(a)."""
    cells = cells or CellDecomposition(u.spec)
    cones = cones or ConeGrid(u.spec.n, 16)
    wu = wavefront_estimate(u, cells, cones, config)
    au = quantize_kn(a, u)
    wau = wavefront_estimate(au, cells, cones, config)
    mu = microsupport_map(a, cells, cones)
    bound = dilate(wu.singular & mu, cells, cones)
    off = wau.singular - bound
    return {"pass": not off, "offending": _fmt_keys(off),
            "estimated": _fmt_keys(wau.singular), "input": _fmt_keys(wu.singular),
            "microsupport_size": len(mu), "equal": wau.verdict_map() == wu.verdict_map()}


def verify_noncharacteristic(a: SymbolFamily, u: GridFunctionFamily, cells=None, cones=None,
                             config: Optional[WFConfig] = None) -> dict:
    """WF(Pu) in dilated WF(u), and WF(u) in dilated WF(Pu) together with the non-elliptic set."""
    cells = cells or CellDecomposition(u.spec)
    cones = cones or ConeGrid(u.spec.n, 16)
    wu = wavefront_estimate(u, cells, cones, config).singular
    wpu = wavefront_estimate(quantize_kn(a, u), cells, cones, config).singular
    ne = non_elliptic_map(a, cells, cones)
    off1 = wpu - dilate(wu, cells, cones)
    off2 = wu - dilate(wpu | ne, cells, cones)
    return {"pass": not off1 and not off2,
            "offending": _fmt_keys(off1 | off2),
            "first_inclusion": not off1, "second_inclusion": not off2,
            "wf_u": _fmt_keys(wu), "wf_pu": _fmt_keys(wpu), "non_elliptic": _fmt_keys(ne)}


# ----------------------------------------------------------------------------
# classical probes

def classical_cone(cones: ConeGrid, sector: int) -> SymbolFamily:
    """eps-independent order-0 cutoff equal to one on the sector away from the origin."""
    if cones.n == 1:
        sgn = float(cones.direction(sector)[0])
        # 0 for sgn*xi <= 1, 1 for sgn*xi >= 3
        e = E.smooth(E.mul(0.5, E.sub(E.mul(sgn, E.xi()), 1.0)))
        return SymbolFamily(e, 0.0, 1, f"cone{sector}")
    hw = cones.half_width
    return build_cone_cutoff(cones.direction(sector), hw, min(2 * hw, 3.0), 2, f"cone{sector}")


def w_cl_estimate(u: GridFunctionFamily, cells=None, cones=None, D_max: int = 6) -> Set[Key]:
    """(cell, sector) pairs not cleared by a classical probe.

    The probe for (cell, sector) is window(x) * cone(xi) with both factors
    eps-independent and equal to one at the cell centre and on the sector; the
    pair is regular when the probe maps u to a G-infinity family.
    """
    cells = cells or CellDecomposition(u.spec)
    cones = cones or ConeGrid(u.spec.n, 16)
    out = set()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        for d in range(cones.count):
            v = quantize_kn(classical_cone(cones, d), u)
            for cell in cells.cells:
                w = cells.window(cell)
                if not ginf_verdict(v.map(lambda a: w * a), D_max).verdict:
                    out.add((cell, d))
    return out
