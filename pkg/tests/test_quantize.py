import math

import numpy as np
import pytest

from gmicrolocal import expr as E
from gmicrolocal.fixtures import build_symbol
from gmicrolocal.nets import EpsilonGrid
from gmicrolocal.quantize import (GridFunctionFamily, GridSpec, KernelMatrix, TooLarge,
                                  apply_regular_kernel, apply_symbol, kernel_certificate,
                                  kernel_matrix, quantize_kn, resolution_guard,
                                  split_proper_smoothing, symbol_matrix)
from gmicrolocal.symbols import SymbolFamily, build_proper_cutoff

X, XI = E.x(0), E.xi(0)
GRID = EpsilonGrid(1, 6)


def _random(spec, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=spec.shape) + 1j * rng.normal(size=spec.shape)


@pytest.mark.parametrize("G,n", [(48, 1), (2048, 1), (512, 2)])
def test_grid_bounds(G, n):
    with pytest.raises(ValueError):
        GridSpec(n, G)


def test_non_finite_data_rejected():
    spec = GridSpec(1, 64)
    data = np.ones((len(GRID), 64), complex)
    data[0, 0] = np.nan
    with pytest.raises(ValueError):
        GridFunctionFamily(spec, GRID, data)


def test_multiplier_is_fourier_multiplier():
    spec = GridSpec(1, 128)
    u = _random(spec)
    v = apply_symbol(E.power(XI, 2), spec, u, 1.0)
    k = spec.freqs()
    np.testing.assert_allclose(v, np.fft.ifft(k ** 2 * np.fft.fft(u)), atol=1e-10)


def test_x_only_symbol_is_pointwise_product():
    spec = GridSpec(1, 128)
    u = _random(spec)
    np.testing.assert_allclose(apply_symbol(E.sin(X), spec, u, 1.0), np.sin(spec.axis()) * u,
                               atol=1e-13)


@pytest.mark.parametrize("label", ["speed_variable", "x_xi", "slow_coeff"])
def test_fast_path_matches_direct_sum(label):
    a = build_symbol(label)
    spec = GridSpec(1, 64)
    u = GridFunctionFamily(spec, GRID, np.stack([_random(spec, j) for j in range(len(GRID))]))
    fast = quantize_kn(a, u)
    direct = quantize_kn(a, u, force_direct=True)
    np.testing.assert_allclose(fast.data, direct.data, atol=1e-11)


def test_nonseparable_2d_direct_sum():
    spec = GridSpec(2, 64)
    a = SymbolFamily(E.exp(E.mul(E.sin(E.x(0)), E.power(E.jb(2), -1))), 0, 2)
    u = GridFunctionFamily(spec, EpsilonGrid(1, 6), np.stack([_random(spec, j) for j in range(6)]))
    v = quantize_kn(a, u)
    assert v.data.shape == u.data.shape and np.all(np.isfinite(v.data))


def test_symbol_matrix_matches_apply():
    spec = GridSpec(1, 64)
    a = build_symbol("speed_variable").expr
    S = symbol_matrix(a, spec, 1.0)
    u = _random(spec)
    # sum over k of S[x, k] uhat[k] / G  reproduces Op(a)u
    v = np.einsum("xk,xk->x", S * np.exp(1j * np.outer(spec.axis(), spec.freqs())),
                  np.fft.fft(u)[None, :].repeat(64, 0)) / 64
    np.testing.assert_allclose(v, apply_symbol(a, spec, u, 1.0), atol=1e-10)


def test_gaussian_multiplier_kernel_is_periodized_gaussian():
    spec = GridSpec(1, 64)
    k = kernel_matrix(SymbolFamily(E.exp(E.neg(E.power(XI, 2))), -10, 1), spec, GRID)
    x = spec.axis()
    kk = spec.freqs()
    oracle = (np.exp(1j * np.outer(x, kk)) * np.exp(-kk ** 2)).sum(axis=1) / (2 * math.pi)
    np.testing.assert_allclose(k.kernel[0][:, 0], oracle, atol=1e-14)
    # the kernel at distance pi/2 is far from negligible
    assert abs(k.kernel[0][16, 0] / k.kernel[0][0, 0]) > 0.5


def test_kernel_apply_matches_quantization():
    spec = GridSpec(1, 64)
    a = build_symbol("speed_variable")
    u = GridFunctionFamily(spec, GRID, np.stack([_random(spec, j) for j in range(len(GRID))]))
    k = kernel_matrix(a, spec, GRID)
    np.testing.assert_allclose(k.apply(u).data, quantize_kn(a, u).data, atol=1e-10)


def test_kernel_matrix_size_limit():
    with pytest.raises(TooLarge):
        kernel_matrix(build_symbol("bracket2"), GridSpec(2, 128), GRID)


def test_smoothing_part_is_certified_and_identity_has_none():
    spec = GridSpec(1, 64)
    chi = build_proper_cutoff(math.pi / 4)
    _, smooth = split_proper_smoothing(build_symbol("gauss_xi"), chi, spec, GRID)
    ok, info = kernel_certificate(smooth)
    assert ok, info
    _, smooth1 = split_proper_smoothing(build_symbol("identity1"), chi, spec, GRID)
    assert np.abs(smooth1.mats).max() < 1e-13
    u = GridFunctionFamily(spec, GRID, np.ones((len(GRID), 64), complex))
    assert np.abs(apply_regular_kernel(smooth1, u).data).max() < 1e-12


def test_delta_kernel_is_not_certified():
    spec = GridSpec(1, 64)
    eye = KernelMatrix.from_kernel_samples(spec, GRID, np.stack([np.eye(64) / spec.h] * len(GRID)))
    ok, _ = kernel_certificate(eye)
    assert not ok


def test_resolution_guard():
    spec = GridSpec(1, 256)
    assert resolution_guard(0.5, spec)
    assert not resolution_guard(spec.h, spec)
