"""Spectral transform contracts, pinned against a dense DFT oracle."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latefuse import tensor as T
from latefuse.tensor import Tensor


def dense_dft(x: np.ndarray) -> np.ndarray:
    """O(n^2) reference transform, same convention as the engine's forward."""
    n = x.shape[-1]
    j = np.arange(n)
    mat = np.exp(-2j * np.pi * np.outer(j, j) / n)
    return x @ mat.T


def test_single_cosine_bin_magnitude():
    n = 8
    x = np.cos(2 * np.pi * np.arange(n) / n)
    spec = T.rfft(Tensor(x[None, None]), axes=(-1,)).data[0, 0]
    assert abs(spec[1]) == pytest.approx(n / 2, abs=1e-12)
    rest = np.delete(np.abs(spec), 1)
    assert np.max(rest) < 1e-12


@pytest.mark.parametrize("n", [7, 8, 128])
def test_roundtrip_identity(n):
    rng = np.random.default_rng(n)
    x = rng.standard_normal((2, 3, n))
    spec = T.rfft(Tensor(x), axes=(-1,))
    back = T.irfft(spec, axes=(-1,), out_lens=(n,))
    assert np.max(np.abs(back.data - x)) < 1e-12


@pytest.mark.parametrize("n", [7, 8, 128])
def test_parseval_half_spectrum(n):
    rng = np.random.default_rng(n + 1)
    x = rng.standard_normal(n)
    spec = T.rfft(Tensor(x[None, None]), axes=(-1,)).data[0, 0]
    weights = np.full(spec.size, 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    lhs = np.sum(x ** 2)
    rhs = np.sum(weights * np.abs(spec) ** 2) / n
    assert abs(lhs - rhs) / abs(lhs) < 1e-10


def test_forward_matches_dense_dft_oracle():
    rng = np.random.default_rng(0)
    for n in (6, 7, 16):
        x = rng.standard_normal(n)
        full = dense_dft(x)
        half = T.rfft(Tensor(x[None, None]), axes=(-1,)).data[0, 0]
        assert np.max(np.abs(half - full[: n // 2 + 1])) < 1e-10


def test_roundtrip_2d():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 1, 6, 9))
    spec = T.rfft(Tensor(x), axes=(-2, -1))
    back = T.irfft(spec, axes=(-2, -1), out_lens=(6, 9))
    assert np.max(np.abs(back.data - x)) < 1e-12


@pytest.mark.parametrize("n", [6, 7])
def test_rfft_adjoint_identity(n):
    """<v, F(x)>_R == <F^T(v), x> for random cotangents (exact adjoint)."""
    rng = np.random.default_rng(n)
    x = Tensor(rng.standard_normal((1, 1, n)), requires_grad=True)
    m = n // 2 + 1
    v = rng.standard_normal(m) + 1j * rng.standard_normal(m)

    spec = T.rfft(x, axes=(-1,))
    pair = T.add(T.reduce_sum(T.mul(T.real(spec), Tensor(v.real[None, None]))),
                 T.reduce_sum(T.mul(T.imag(spec), Tensor(v.imag[None, None]))))
    pair.backward()

    # dense Jacobian oracle
    J = np.zeros((2 * m, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        s = np.fft.rfft(e)
        J[:m, j] = s.real
        J[m:, j] = s.imag
    want = J.T @ np.concatenate([v.real, v.imag])
    assert np.max(np.abs(x.grad[0, 0] - want)) < 1e-10


@pytest.mark.parametrize("n", [6, 7])
def test_irfft_gradient_matches_finite_differences(n):
    from latefuse.optim import finite_diff_check

    rng = np.random.default_rng(n + 40)
    m = n // 2 + 1
    re = Tensor(rng.standard_normal((1, 1, m)), requires_grad=True)
    im = Tensor(rng.standard_normal((1, 1, m)), requires_grad=True)
    target = rng.standard_normal((1, 1, n))

    def f():
        y = T.irfft(T.as_complex(re, im), axes=(-1,), out_lens=(n,))
        d = T.sub(y, Tensor(target))
        return T.reduce_sum(T.mul(d, d))

    assert finite_diff_check(f, [re, im], h=1e-6) < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 64), st.integers(0, 2 ** 31 - 1))
def test_roundtrip_property(n, seed):
    x = np.random.default_rng(seed).standard_normal((1, 1, n))
    back = T.irfft(T.rfft(Tensor(x), axes=(-1,)), axes=(-1,), out_lens=(n,))
    assert np.max(np.abs(back.data - x)) < 1e-11


def test_irfft_length_validation():
    spec = T.rfft(Tensor(np.zeros((1, 1, 8))), axes=(-1,))
    with pytest.raises(ValueError):
        T.irfft(spec, axes=(-1,), out_lens=(12,))


def test_axis_out_of_range_rejected():
    with pytest.raises(ValueError, match="out of range"):
        T.rfft(Tensor(np.zeros((1, 1, 8))), axes=(5,))
