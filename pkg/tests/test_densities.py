import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from monoracle.densities import (
    Cauchy,
    Gaussian,
    GaussianMixture,
    Laplace,
    Mixture,
    SpectralEnergy,
    Uniform,
    characteristic_function,
    l2_norm_sq,
    parse_model,
    read_sample_file,
    replication_seed,
    sample,
    write_sample_file,
)

ROSTER = [
    Gaussian(0, 1),
    Gaussian(1.5, 0.4),
    Laplace(0, 1),
    Laplace(-1, 2.5),
    Cauchy(0, 1),
    Cauchy(2, 0.5),
    Uniform(0, 1),
    Uniform(-3, 1),
    GaussianMixture([0.5, 0.5], [(-2, 1), (2, 1)]),
    Mixture((0.3, 0.7), (Laplace(0, 0.5), Gaussian(3, 1.2))),
]
IDS = [m.spec() for m in ROSTER]


def _quad_line(f, pts, scale):
    pts = sorted(pts)
    lo, hi = pts[0] - 60 * scale, pts[-1] + 60 * scale
    inner = integrate.quad(f, lo, hi, points=pts, limit=800, epsabs=1e-13)[0]
    return inner + integrate.quad(f, -np.inf, lo, limit=400)[0] + integrate.quad(f, hi, np.inf, limit=400)[0]


def _scale(m):
    return {"gaussian": "sigma", "laplace": "b", "cauchy": "gamma"}.get(m.kind)


class TestCharacteristicFunction:
    def test_gaussian_at_zero(self):
        assert characteristic_function(Gaussian(0, 1), 0.0) == pytest.approx(1.0)

    def test_laplace_at_one(self):
        assert characteristic_function(Laplace(0, 1), 1.0) == pytest.approx(0.5)

    def test_cauchy_at_two(self):
        assert characteristic_function(Cauchy(0, 1), 2.0) == pytest.approx(np.exp(-2))

    @pytest.mark.parametrize("m", ROSTER, ids=IDS)
    def test_basic_invariants(self, m):
        w = np.linspace(-300, 300, 10_001)
        c = m.cf(w)
        assert np.all(np.abs(c) <= 1 + 1e-12)
        assert m.cf(0.0) == pytest.approx(1.0)
        np.testing.assert_allclose(m.cf(-w), np.conj(c), atol=1e-15)

    @pytest.mark.parametrize("m", ROSTER[:4] + ROSTER[6:], ids=IDS[:4] + IDS[6:])
    def test_matches_fourier_integral(self, m):
        pts = m.breakpoints()
        for w in (0.3, 1.7):
            re = _quad_line(lambda x: m.pdf(x) * np.cos(w * x), pts, 1.0)
            im = _quad_line(lambda x: m.pdf(x) * np.sin(w * x), pts, 1.0)
            assert complex(m.cf(w)) == pytest.approx(complex(re, im), abs=1e-7)


class TestNorms:
    def test_uniform(self):
        assert l2_norm_sq(Uniform(0, 1)) == pytest.approx(1.0)

    def test_gaussian(self):
        assert l2_norm_sq(Gaussian(0, 1)) == pytest.approx(1 / (2 * np.sqrt(np.pi)))
        q = integrate.quad(lambda x: Gaussian(0, 1).pdf(x) ** 2, -np.inf, np.inf)[0]
        assert l2_norm_sq(Gaussian(0, 1)) == pytest.approx(q, rel=1e-10)

    def test_laplace(self):
        q = 2 * integrate.quad(lambda x: Laplace(0, 1).pdf(x) ** 2, 0, np.inf)[0]
        assert l2_norm_sq(Laplace(0, 1)) == pytest.approx(0.25)
        assert q == pytest.approx(0.25, rel=1e-10)

    @pytest.mark.parametrize("m", ROSTER, ids=IDS)
    def test_space_quadrature(self, m):
        q = _quad_line(lambda x: m.pdf(x) ** 2, m.breakpoints(), 1.0)
        assert m.l2_norm_sq == pytest.approx(q, rel=1e-8, abs=1e-10)

    @pytest.mark.parametrize("m", ROSTER, ids=IDS)
    def test_parseval(self, m):
        # (1/pi) int_0^W |fhat|^2 + tail(W) = ||f||^2
        W = 40.0
        band = SpectralEnergy(m, W).total / np.pi
        assert band + m.tail_energy(W) == pytest.approx(m.l2_norm_sq, abs=1e-6)

    @pytest.mark.parametrize("m", ROSTER, ids=IDS)
    def test_pdf_integrates_to_one(self, m):
        assert _quad_line(m.pdf, m.breakpoints(), 1.0) == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("m", ROSTER, ids=IDS)
    def test_sup_norm(self, m):
        xs = np.linspace(-30, 30, 600_001)
        assert m.sup_norm >= m.pdf(xs).max() - 1e-9
        assert m.sup_norm <= m.pdf(xs).max() * (1 + 1e-3)


class TestTailEnergy:
    @pytest.mark.parametrize("m", ROSTER, ids=IDS)
    @pytest.mark.parametrize("W", [0.5, 3.0, 20.0])
    def test_matches_quadrature(self, m, W):
        if m.kind == "uniform":
            # oscillatory sinc^2 tail: panelwise quadrature to B, then the sin^2-averaged remainder 2 / (L^2 B)
            L, B = m.b - m.a, 4000.0
            knots = np.arange(W, B + 1e-9, 0.5)
            q = sum(integrate.quad(m.power, a, b, epsabs=1e-15)[0] for a, b in zip(knots[:-1], knots[1:]))
            q = (q + 2 / (L * L * B)) / np.pi
        else:
            q = integrate.quad(m.power, W, np.inf, limit=2000, epsabs=1e-13)[0] / np.pi
        assert m.tail_energy(W) == pytest.approx(q, abs=1e-10, rel=1e-6)

    @pytest.mark.parametrize("m", ROSTER, ids=IDS)
    def test_nonincreasing_and_vanishing(self, m):
        Ws = np.array([0.0, 0.1, 1, 5, 10, 50, 200, 1000, 1e5])
        tails = np.array([m.tail_energy(W) for W in Ws])
        assert np.all(np.diff(tails) <= 1e-15)
        assert tails[-1] < 1e-5
        assert tails[0] == pytest.approx(m.l2_norm_sq, rel=1e-8)

    def test_laplace_large_band_series(self):
        # the asymptotic branch must join the closed form smoothly
        m = Laplace(0, 1)
        assert m.tail_energy(100.0 - 1e-9) == pytest.approx(m.tail_energy(100.0 + 1e-9), rel=1e-6)


class TestSampling:
    def test_uniform_mean(self):
        n = 100_000
        s = sample(Uniform(0, 1), n, 1)
        assert abs(s.values.mean() - 0.5) < 3 * np.sqrt(1 / 12) / np.sqrt(n)

    @pytest.mark.parametrize("m", ROSTER, ids=IDS)
    def test_deterministic(self, m):
        a = sample(m, 5, 7)
        b = sample(m, 5, 7)
        assert a.values.tobytes() == b.values.tobytes()
        assert a.n == 5 and a.seed == 7

    def test_cauchy_empirical_cf(self):
        s = sample(Cauchy(0, 1), 10_000, 11)
        phi = np.mean(np.exp(1j * s.values))
        assert abs(phi - np.exp(-1)) < 0.05

    @pytest.mark.parametrize(
        "m,mean,var",
        [
            (Gaussian(1.5, 0.4), 1.5, 0.16),
            (Laplace(-1, 2.5), -1, 2 * 2.5**2),
            (Uniform(-3, 1), -1, 16 / 12),
            (GaussianMixture([0.5, 0.5], [(-2, 1), (2, 1)]), 0.0, 5.0),
        ],
    )
    def test_moments(self, m, mean, var):
        n = 50_000
        x = sample(m, n, 3).values
        assert abs(x.mean() - mean) < 3 * np.sqrt(var / n)
        # the variance of the sample variance needs the fourth moment; 5 percent is ~10 sigma here
        assert x.var() == pytest.approx(var, rel=0.05)

    @pytest.mark.parametrize("n", [0, -1, 2.5])
    def test_bad_size(self, n):
        with pytest.raises(ValueError):
            sample(Gaussian(), n, 0)

    def test_replication_seeds_stable(self):
        s = [replication_seed(42, r) for r in range(5)]
        assert len(set(s)) == 5
        assert s == [replication_seed(42, r) for r in range(5)]
        assert replication_seed(43, 0) != s[0]


class TestParse:
    @pytest.mark.parametrize("m", ROSTER, ids=IDS)
    def test_round_trip(self, m):
        assert parse_model(m.spec()) == m

    def test_unicode_minus_and_spaces(self):
        m = parse_model("mix:0.5*gaussian:−2,1 + 0.5*gaussian:2,1")
        assert m == GaussianMixture([0.5, 0.5], [(-2, 1), (2, 1)])

    def test_exponent_weights(self):
        m = parse_model("mix:2.5e-1*laplace:0,1+7.5e-1*gaussian:0,1")
        assert m.weights == (0.25, 0.75)

    @pytest.mark.parametrize(
        "bad", ["foo:1,2", "gaussian:0", "gaussian:0,-1", "mix:0.4*gaussian:0,1+0.4*gaussian:1,1", "uniform:1,0", ""]
    )
    def test_errors_name_grammar(self, bad):
        with pytest.raises(ValueError, match="grammar"):
            parse_model(bad)


class TestSampleFile:
    def test_round_trip(self, tmp_path):
        s = sample(Laplace(0, 1), 50, 5)
        p = tmp_path / "s.txt"
        write_sample_file(p, s)
        back = read_sample_file(p)
        assert back.values.tobytes() == s.values.tobytes()

    def test_comments_and_errors(self, tmp_path):
        p = tmp_path / "s.txt"
        p.write_text("# header\n1.5\n\n-2 # trailing\n")
        np.testing.assert_array_equal(read_sample_file(p).values, [1.5, -2.0])
        p.write_text("1\nabc\n")
        with pytest.raises(ValueError, match=":2:"):
            read_sample_file(p)


class TestSpectralEnergy:
    @pytest.mark.parametrize("m", ROSTER, ids=IDS)
    def test_cumulative_matches_quad(self, m):
        se = SpectralEnergy(m, 16.0)
        for w in (0.0, 0.37, 3.3, 16.0):
            q = integrate.quad(m.power, 0, w, limit=500, epsabs=1e-14)[0]
            assert se.cumulative(w) == pytest.approx(q, abs=1e-12)

    @given(st.floats(0.0, 1.0))
    @settings(max_examples=40, deadline=None)
    def test_inverse(self, frac):
        se = SpectralEnergy(Laplace(0, 1), 32.0)
        w = se.inverse(frac * se.total)[0]
        assert abs(se.cumulative(w) - frac * se.total) <= 1e-10 * se.total

    def test_double_zero_meets_energy_tolerance(self):
        # |fhat|^2 of Uniform(-1, 1) has a double zero at pi, where G is nearly flat
        se = SpectralEnergy(Uniform(-1, 1), 8.0)
        target = se.cumulative(np.pi)
        w = se.inverse(target)[0]
        assert abs(se.cumulative(w) - target) <= 1e-10 * se.total
        assert w == pytest.approx(np.pi, abs=1e-3)

    def test_flat_stretch_takes_leftmost_root(self):
        class Triangle(Gaussian):
            # Fejer-type spectrum: |fhat| = (1 - |w|)_+, no energy beyond |w| = 1
            def cf(self, omega):
                return np.maximum(0.0, 1.0 - np.abs(np.asarray(omega, dtype=float))) + 0j

        se = SpectralEnergy(Triangle(), 4.0)
        assert se.total == pytest.approx(1 / 3)
        w = se.inverse(se.total)[0]
        assert w <= 1.0 + 1e-12
        assert abs(se.cumulative(w) - se.total) <= 1e-10 * se.total

    def test_out_of_range_target(self):
        se = SpectralEnergy(Gaussian(), 4.0)
        with pytest.raises(ValueError):
            se.inverse(-1.0)
        with pytest.raises(ValueError):
            se.inverse(2 * se.total)
