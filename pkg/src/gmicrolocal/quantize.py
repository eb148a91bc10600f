"""Kohn-Nirenberg quantization on the periodic grid [0, 2*pi)^n.

Op(a)u(x_m) = G^-n sum_k exp(i x_m.k) a(x_m, k) u_hat(k) with u_hat the
unnormalised FFT.  Symbols see integer lattice frequencies, which are the
physical ones on a torus of circumference 2*pi.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import List

import numpy as np

from . import expr as E
from .nets import EpsilonGrid, NetSample, classify_scale

DIRECT_BUDGET = 2 ** 32


class SeparabilityFallbackTooLarge(RuntimeError):
    pass


class TooLarge(RuntimeError):
    pass


class NoCertificate(RuntimeError):
    pass


class ResolutionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GridSpec:
    n: int = 1
    G: int = 256

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError("n must be 1 or 2")
        if self.G & (self.G - 1) or self.G < 2:
            raise ValueError("G must be a power of two")
        hi = 1024 if self.n == 1 else 256
        if not 64 <= self.G <= hi:
            raise ValueError(f"G must lie in [64, {hi}] for n={self.n}")

    @property
    def h(self) -> float:
        return 2 * math.pi / self.G

    @property
    def shape(self):
        return (self.G,) * self.n

    @property
    def size(self):
        return self.G ** self.n

    def axis(self) -> np.ndarray:
        return np.arange(self.G) * self.h

    def freqs(self) -> np.ndarray:
        return np.fft.fftfreq(self.G, 1.0 / self.G)

    def coords(self) -> List[np.ndarray]:
        ax = self.axis()
        return list(np.meshgrid(*([ax] * self.n), indexing="ij"))

    def kgrid(self) -> List[np.ndarray]:
        k = self.freqs()
        return list(np.meshgrid(*([k] * self.n), indexing="ij"))


@dataclass
class GridFunctionFamily:
    spec: GridSpec
    eps_grid: EpsilonGrid
    data: np.ndarray
    label: str = ""

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        want = (len(self.eps_grid),) + self.spec.shape
        if d.shape != want:
            raise ValueError(f"data shape {d.shape} != {want}")
        if not np.all(np.isfinite(d)):
            raise ValueError("grid function values must be finite")
        self.data = d

    def __len__(self):
        return len(self.eps_grid)

    def slice(self, j: int) -> np.ndarray:
        return self.data[j - self.eps_grid.j_min]

    def map(self, fn, label=None) -> "GridFunctionFamily":
        return GridFunctionFamily(self.spec, self.eps_grid,
                                  np.stack([fn(d) for d in self.data]), label or self.label)

    def __add__(self, other):
        return GridFunctionFamily(self.spec, self.eps_grid, self.data + other.data, self.label)

    def __sub__(self, other):
        return GridFunctionFamily(self.spec, self.eps_grid, self.data - other.data, self.label)

    def scaled(self, c):
        return GridFunctionFamily(self.spec, self.eps_grid, c * self.data, self.label)

    def max_norm_net(self) -> NetSample:
        return NetSample(self.eps_grid, np.abs(self.data).reshape(len(self), -1).max(axis=1))

    def is_moderate(self) -> bool:
        return classify_scale(self.max_norm_net()).tag != "Unbounded"

    def l2_norms(self) -> np.ndarray:
        return np.sqrt((np.abs(self.data) ** 2).reshape(len(self), -1).sum(axis=1) * self.spec.h ** self.spec.n)


def symbol_env(spec: GridSpec, xs: List[np.ndarray], ks: List[np.ndarray], eps: float, extra=None):
    env = {("eps", 0): float(eps)}
    for i in range(spec.n):
        env[("x", i)] = xs[i]
        env[("xi", i)] = ks[i]
    if extra:
        env.update(extra)
    return env


def _eval_on(expr_, env, shape):
    v = np.asarray(expr_.evaluate(env), dtype=complex)
    if not np.all(np.isfinite(v)):
        raise E.DomainError("symbol is not finite on the frequency lattice")
    return np.broadcast_to(v, shape)


def separable_terms(a_expr, cap=64):
    return E.separate(a_expr, cap)


def _apply_one(expr_, spec: GridSpec, uhat: np.ndarray, eps: float, pairs, extra=None,
               chunk: int = None) -> np.ndarray:
    n = spec.n
    xs = spec.coords()
    ks = spec.kgrid()
    if pairs is not None:
        out = np.zeros(spec.shape, complex)
        for fx, gk in pairs:
            fv = _eval_on(fx, symbol_env(spec, xs, ks, eps, extra), spec.shape)
            gv = _eval_on(gk, symbol_env(spec, xs, ks, eps, extra), spec.shape)
            out += fv * np.fft.ifftn(gv * uhat)
        return out
    # direct sum over frequencies, chunked over output points
    xflat = [x.ravel() for x in xs]
    kflat = [k.ravel() for k in ks]
    N = spec.size
    chunk = chunk or max(1, min(N, 2 ** 22 // N))
    out = np.empty(N, complex)
    uh = uhat.ravel()
    for s in range(0, N, chunk):
        xc = [x[s:s + chunk, None] for x in xflat]
        kc = [k[None, :] for k in kflat]
        env = {("eps", 0): float(eps)}
        for i in range(n):
            env[("x", i)] = xc[i]
            env[("xi", i)] = kc[i]
        if extra:
            env.update(extra)
        av = _eval_on(expr_, env, (xc[0].shape[0], N))
        phase = np.zeros((xc[0].shape[0], N))
        for i in range(n):
            phase = phase + xc[i] * kc[i]
        out[s:s + chunk] = (np.exp(1j * phase) * av) @ uh
    return (out / N).reshape(spec.shape)


def apply_symbol(a_expr, spec: GridSpec, u: np.ndarray, eps: float, extra=None,
                 force_direct: bool = False) -> np.ndarray:
    """Op(a) on a single grid array at one epsilon."""
    pairs = None if force_direct else separable_terms(a_expr)
    if pairs is None and spec.size ** 2 > DIRECT_BUDGET:
        raise SeparabilityFallbackTooLarge(f"direct sum needs {spec.size ** 2} multiply-adds")
    return _apply_one(a_expr, spec, np.fft.fftn(u), eps, pairs, extra)


def quantize_kn(a, u: GridFunctionFamily, extra=None, force_direct: bool = False) -> GridFunctionFamily:
    """Apply a(x, D) to every epsilon slice of u."""
    a_expr = a.expr if hasattr(a, "expr") else E.wrap(a)
    if hasattr(a, "n") and a.n != u.spec.n:
        raise ValueError("symbol and grid dimensions differ")
    pairs = None if force_direct else separable_terms(a_expr)
    if pairs is None and len(u) * u.spec.size ** 2 > DIRECT_BUDGET:
        raise SeparabilityFallbackTooLarge(
            f"direct sum needs {len(u) * u.spec.size ** 2} multiply-adds")
    out = np.stack([_apply_one(a_expr, u.spec, np.fft.fftn(d), e, pairs, extra)
                    for d, e in zip(u.data, u.eps_grid.eps)])
    return GridFunctionFamily(u.spec, u.eps_grid, out, f"Op({getattr(a, 'label', '')}){u.label}")


def symbol_matrix(a_expr, spec: GridSpec, eps: float, extra=None) -> np.ndarray:
    """Values a(x_m, k) on the full grid x lattice, shape (G^n, G^n)."""
    xs = [x.ravel()[:, None] for x in spec.coords()]
    ks = [k.ravel()[None, :] for k in spec.kgrid()]
    env = {("eps", 0): float(eps)}
    for i in range(spec.n):
        env[("x", i)] = xs[i]
        env[("xi", i)] = ks[i]
    if extra:
        env.update(extra)
    return _eval_on(a_expr, env, (spec.size, spec.size))


# ----------------------------------------------------------------------------
# kernels

@dataclass
class KernelMatrix:
    """Per-epsilon weighted kernel matrices: (M @ u) applies the operator."""
    spec: GridSpec
    eps_grid: EpsilonGrid
    mats: np.ndarray
    label: str = ""

    @property
    def kernel(self) -> np.ndarray:
        """Unweighted kernel samples k(x_m, y_l)."""
        return self.mats / self.spec.h ** self.spec.n

    @classmethod
    def from_kernel_samples(cls, spec, eps_grid, samples, label=""):
        samples = np.asarray(samples, complex)
        if samples.ndim == 2:
            samples = np.broadcast_to(samples, (len(eps_grid),) + samples.shape)
        return cls(spec, eps_grid, samples * spec.h ** spec.n, label)

    def apply(self, u: GridFunctionFamily) -> GridFunctionFamily:
        out = np.stack([(M @ d.ravel()).reshape(self.spec.shape) for M, d in zip(self.mats, u.data)])
        return GridFunctionFamily(u.spec, u.eps_grid, out, f"K{u.label}")


def _check_kernel_size(spec):
    if spec.n == 2 and spec.G > 64:
        raise TooLarge("dense kernels in 2D are limited to G <= 64")


def kernel_matrix(a, spec: GridSpec, grid: EpsilonGrid) -> KernelMatrix:
    """Columns are Op(a) applied to discrete unit vectors."""
    if spec.n == 2 and spec.G > 64:
        raise TooLarge("dense kernels in 2D are limited to G <= 64")
    a_expr = a.expr if hasattr(a, "expr") else E.wrap(a)
    N = spec.size
    xs = [x.ravel() for x in spec.coords()]
    ks = [k.ravel() for k in spec.kgrid()]
    phase_x = np.zeros((N, N))
    for i in range(spec.n):
        phase_x = phase_x + xs[i][:, None] * ks[i][None, :]
    ex = np.exp(1j * phase_x)                 # e^{i x_m k}
    fwd = np.exp(-1j * phase_x).T             # e^{-i k y_l}
    mats = []
    for e in grid.eps:
        av = symbol_matrix(a_expr, spec, e)
        mats.append(((ex * av) @ fwd) / N)
    return KernelMatrix(spec, grid, np.stack(mats), getattr(a, "label", ""))


def proper_cutoff_matrix(chi, spec: GridSpec) -> np.ndarray:
    pts = np.stack([x.ravel() for x in spec.coords()], axis=-1)
    if spec.n == 1:
        return chi(pts[:, 0][:, None], pts[:, 0][None, :])
    return chi(pts[:, None, :], pts[None, :, :])


def split_proper_smoothing(a, chi, spec: GridSpec, grid: EpsilonGrid):
    """Kernel times chi (near-diagonal part) and times 1 - chi (smoothing part)."""
    km = kernel_matrix(a, spec, grid)
    c = proper_cutoff_matrix(chi, spec)
    proper = KernelMatrix(spec, grid, km.mats * c[None], km.label + "_proper")
    smooth = KernelMatrix(spec, grid, km.mats - proper.mats, km.label + "_smoothing")
    return proper, smooth


def _periodic_diff(arr, axis, order):
    out = arr
    for _ in range(order):
        out = (np.roll(out, -1, axis=axis) - np.roll(out, 1, axis=axis)) * 0.5
    return out


def kernel_certificate(k: KernelMatrix, max_order: int = 4, spectral_tol: float = 1e-2):
    """Uniform-exponent moderateness of finite-difference derivatives of the kernel.

    Returns (ok, report).  The kernel must also be resolved on the grid: its
    2D spectrum beyond half the Nyquist band stays below spectral_tol times its peak.
    """
    if k.spec.n != 1:
        raise TooLarge("kernel certificates are implemented for n = 1")
    h = k.spec.h
    K = k.kernel
    slopes = {}
    for p in range(max_order + 1):
        for q in range(max_order + 1 - p):
            D = _periodic_diff(_periodic_diff(K, 1, p), 2, q) / h ** (p + q)
            net = NetSample(k.eps_grid, np.abs(D).reshape(len(k.eps_grid), -1).max(axis=1))
            cls = classify_scale(net)
            if cls.tag == "Unbounded":
                return False, {"reason": f"derivative ({p},{q}) not moderate"}
            slopes[f"{p},{q}"] = cls.fit.slope
    finite = [s for s in slopes.values() if math.isfinite(s)]
    spread = (max(finite) - min(finite)) if finite else 0.0
    spec_ok = True
    G = k.spec.G
    f = np.abs(np.fft.fftfreq(G, 1.0 / G))
    high = (f[:, None] > G / 4) | (f[None, :] > G / 4)
    for Kj in K:
        F = np.abs(np.fft.fft2(Kj))
        top = F.max()
        if top > 0 and F[high].max() > spectral_tol * top:
            spec_ok = False
    ok = spread <= 0.75 and spec_ok
    return ok, {"slopes": slopes, "spread": spread, "resolved": spec_ok}


def apply_regular_kernel(k: KernelMatrix, u: GridFunctionFamily) -> GridFunctionFamily:
    """R u with a certified smoothing kernel; raises NoCertificate otherwise."""
    # operator entries at round-off level: the kernel is zero
    if np.abs(k.mats).max() <= 1e-12:
        return u.scaled(0.0)
    ok, rep = kernel_certificate(k)
    if not ok:
        raise NoCertificate(str(rep))
    return k.apply(u)


def resolution_guard(width: float, spec: GridSpec, cells: float = 4.0) -> bool:
    """Warn when a feature of the given width spans fewer than `cells` grid cells."""
    if width < cells * spec.h:
        warnings.warn(f"feature width {width:.3g} is below {cells} grid cells", ResolutionWarning,
                      stacklevel=2)
        return False
    return True
