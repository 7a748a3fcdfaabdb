import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from monoracle.spectral import (
    SpectralKernel,
    build_grid,
    evaluate_kernel,
    kernel_from_json,
    kernel_l2_norm_sq,
    kernel_to_json,
)


def random_kernel(rng, W=4, t=3, zero_tail=True):
    g = build_grid(W, t)
    v = np.sort(rng.uniform(size=g.m))[::-1]
    v[0] = 1.0
    if zero_tail:
        v[rng.integers(1, g.m) :] = 0.0
    return SpectralKernel(g, v)


@st.composite
def kernels(draw, max_bins=64):
    W = draw(st.sampled_from([0.5, 1, 2, 3, 4]))
    t = draw(st.integers(1, 4))
    g = build_grid(W, t)
    if g.m > max_bins:
        g = build_grid(W, 1)
    raw = draw(st.lists(st.floats(0, 1), min_size=g.m, max_size=g.m))
    v = np.sort(np.asarray(raw))[::-1].copy()
    v[0] = 1.0
    return SpectralKernel(g, v)


class TestGrid:
    def test_edges(self):
        g = build_grid(2, 1)
        assert g.m == 4
        np.testing.assert_array_equal(g.edges, [0, 0.5, 1, 1.5, 2])

    def test_single_bin(self):
        g = build_grid(1, 0)
        assert g.m == 1 and g.width == 1.0

    def test_non_power_of_two_band(self):
        g = build_grid(3, 2)
        assert g.m == 12 and g.width == 0.25

    def test_non_integral_rejected_names_both(self):
        with pytest.raises(ValueError, match=r"W=0\.3.*t=2"):
            build_grid(0.3, 2)

    @pytest.mark.parametrize("bad", [dict(W=-1, t=0), dict(W=0, t=1), dict(W=1, t=-1), dict(W=1, t=1.5)])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            build_grid(**bad)

    def test_refinement_splits_bins(self):
        g = build_grid(3, 2)
        r = g.refined()
        assert r.m == 2 * g.m
        np.testing.assert_array_equal(r.edges[::2], g.edges)
        assert r.coarsened() == g


class TestKernel:
    def test_invariants_enforced(self):
        g = build_grid(2, 0)
        with pytest.raises(ValueError, match="nonincreasing"):
            SpectralKernel(g, [0.5, 1.0])
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            SpectralKernel(g, [1.0, -0.1])
        with pytest.raises(ValueError, match="v\\[0\\]"):
            SpectralKernel(g, [0.9, 0.1])
        with pytest.raises(ValueError):
            SpectralKernel(g, [1.0])

    def test_non_strict_allows_adversarial(self):
        K = SpectralKernel(build_grid(2, 0), [0.0, 1.0], strict=False)
        assert list(K.v) == [0.0, 1.0]

    def test_values_are_frozen(self):
        K = SpectralKernel(build_grid(1, 1), [1.0, 0.5])
        with pytest.raises(ValueError):
            K.v[1] = 0.2

    def test_lift_preserves_function(self):
        rng = np.random.default_rng(3)
        K = random_kernel(rng)
        L = K.lifted(K.grid.t + 2)
        x = np.linspace(-7, 7, 31)
        np.testing.assert_allclose(evaluate_kernel(L, x), evaluate_kernel(K, x), atol=1e-13)
        assert kernel_l2_norm_sq(L) == pytest.approx(kernel_l2_norm_sq(K), rel=1e-14)


class TestNorm:
    def test_indicator(self):
        K = SpectralKernel(build_grid(1, 0), [1.0])
        assert kernel_l2_norm_sq(K) == pytest.approx(1 / np.pi)

    def test_half_band(self):
        K = SpectralKernel(build_grid(2, 0), [1.0, 0.0])
        assert kernel_l2_norm_sq(K) == pytest.approx(1 / np.pi)

    @pytest.mark.parametrize("seed", range(5))
    def test_parseval_against_space_quadrature(self, seed):
        # int K^2 over the line: quadrature on [-L, L] plus the tail bound ~ (2 / pi^2) / L
        K = random_kernel(np.random.default_rng(seed), W=2, t=2)
        f = lambda x: evaluate_kernel(K, x) ** 2
        L = 4000.0
        knots = np.linspace(0, L, 4001)
        total = 2 * sum(integrate.quad(f, a, b, epsabs=1e-13)[0] for a, b in zip(knots[:-1], knots[1:]))
        # remaining tail: K(x)^2 averages c^2 / (2 pi^2 x^2) with c^2 = sum of squared jumps
        v = np.concatenate([K.v, [0.0]])
        c2 = np.sum(np.diff(v) ** 2)
        total += 2 * c2 / (2 * np.pi**2 * L)
        assert total == pytest.approx(kernel_l2_norm_sq(K), abs=1e-6)

    @given(kernels())
    @settings(max_examples=50, deadline=None)
    def test_cap(self, K):
        assert kernel_l2_norm_sq(K) <= K.grid.W / np.pi + 1e-15


class TestEvaluate:
    def test_indicator_at_zero(self):
        K = SpectralKernel(build_grid(1, 0), [1.0])
        assert evaluate_kernel(K, 0.0) == pytest.approx(1 / np.pi)

    def test_indicator_sinc_zero(self):
        K = SpectralKernel(build_grid(1, 0), [1.0])
        assert evaluate_kernel(K, np.pi) == pytest.approx(0.0, abs=1e-16)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_inverse_fourier_quadrature(self, seed):
        rng = np.random.default_rng(100 + seed)
        K = random_kernel(rng, W=3, t=2)
        for x in rng.uniform(-20, 20, size=4):
            direct = 0.0
            for lo, v in zip(K.grid.edges[:-1], K.v):
                if v:
                    direct += v * integrate.quad(lambda w: np.cos(w * x), lo, lo + K.grid.width, epsabs=1e-14)[0]
            assert evaluate_kernel(K, x) == pytest.approx(direct / np.pi, abs=1e-8)

    @given(kernels(), st.floats(-50, 50))
    @settings(max_examples=60, deadline=None)
    def test_even(self, K, x):
        assert evaluate_kernel(K, x) == pytest.approx(evaluate_kernel(K, -x), abs=1e-14)

    @given(kernels())
    @settings(max_examples=40, deadline=None)
    def test_continuous_at_zero(self, K):
        k0 = evaluate_kernel(K, 0.0)
        assert abs(evaluate_kernel(K, 1e-9) - k0) < 1e-6
        assert abs(evaluate_kernel(K, -1e-9) - k0) < 1e-6
        assert abs(evaluate_kernel(K, 1e-7) - k0) < 1e-6

    def test_unit_mass(self):
        # int_{-L}^{L} K = (2/pi) sum_k c_k Si(w_k L) over the jumps c_k at w_k, which tends to v_0 = 1
        K = random_kernel(np.random.default_rng(9), W=2, t=2)
        f = lambda x: evaluate_kernel(K, x)
        L = 500.0
        knots = np.linspace(0, L, 501)
        mass = 2 * sum(integrate.quad(f, a, b, epsabs=1e-13)[0] for a, b in zip(knots[:-1], knots[1:]))
        v = np.concatenate([K.v, [0.0]])
        c = v[:-1] - v[1:]
        w = K.grid.edges[1:]
        si = special.sici(w * L)[0]
        assert mass == pytest.approx(2 / np.pi * np.sum(c * si), abs=1e-9)
        assert np.sum(c) == pytest.approx(1.0)

    def test_shape(self):
        K = SpectralKernel(build_grid(1, 0), [1.0])
        assert evaluate_kernel(K, np.zeros((2, 3))).shape == (2, 3)
        assert isinstance(evaluate_kernel(K, 0.5), float)


class TestJson:
    @given(kernels())
    @settings(max_examples=40, deadline=None)
    def test_round_trip_bit_exact(self, K):
        back = kernel_from_json(kernel_to_json(K))
        assert back == K
        assert back.v.tobytes() == K.v.tobytes()

    def test_invalid_rejected(self):
        with pytest.raises(ValueError):
            kernel_from_json(json.dumps({"W": 2, "t": 0, "v": [0.5, 1.0]}))
        with pytest.raises(ValueError):
            kernel_from_json(json.dumps({"W": 2, "v": [1.0, 0.0]}))

    def test_lenient_load(self):
        K = kernel_from_json(json.dumps({"W": 2, "t": 0, "v": [0.0, 1.0]}), strict=False)
        assert not K.strict
