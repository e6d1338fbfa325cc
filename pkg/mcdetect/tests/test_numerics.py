from math import erfc, exp, factorial

import mpmath
import numpy as np
import pytest

from mcdetect import exceptions
from mcdetect.numerics import (
    CubicRoots,
    erfcx_complex,
    integrate_transient,
    poisson_pmf,
    poisson_tail,
    solve_cubic_from_symmetric,
    w_stable,
)

mpmath.mp.dps = 50


def mp_erfcx(z):
    z = mpmath.mpc(z)
    return complex(mpmath.exp(z**2) * mpmath.erfc(z))


def mp_w(n, m):
    n, m = mpmath.mpf(n), mpmath.mpc(m)
    return complex(mpmath.exp(2 * n * m + m**2) * mpmath.erfc(n + m))


def assert_close(got, expected, rel):
    assert abs(got - expected) <= rel * abs(expected), (got, expected)


class TestErfcxComplex:
    def test_zero(self):
        assert erfcx_complex(0) == 1

    def test_real(self):
        assert_close(erfcx_complex(0.5), exp(0.25) * erfc(0.5), rel=1e-12)

    @pytest.mark.parametrize("y", [0.1, 1.0, 3.0, -2.0, 9.5])
    def test_imaginary_axis(self, y):
        assert_close(erfcx_complex(1j * y), mp_erfcx(1j * y), rel=1e-10)

    def test_grid_against_arbitrary_precision(self, subtests):
        axis = np.linspace(-10, 10, 9)
        for re in axis:
            for im in axis:
                z = complex(re, im)
                with subtests.test(z=z):
                    assert_close(erfcx_complex(z), mp_erfcx(z), rel=1e-10)

    def test_arrays(self):
        z = np.array([0, 0.5, 2j])
        got = erfcx_complex(z)
        assert got.shape == (3,)
        assert_close(got[2], mp_erfcx(2j), rel=1e-10)

    def test_reflection(self):
        for x in np.linspace(0, 5, 11):
            assert_close(
                erfcx_complex(-x),
                2 * exp(x**2) - erfcx_complex(x),
                rel=1e-9,
            )

    def test_out_of_domain(self):
        with pytest.raises(exceptions.OutOfDomain):
            erfcx_complex(2e6)

    def test_overflow(self):
        with pytest.raises(exceptions.ErfcxOverflow) as e:
            erfcx_complex(-30)
        assert e.value == exceptions.ErfcxOverflow(z=-30 + 0j)


class TestWStable:
    def test_m_zero_is_erfc(self):
        assert_close(w_stable(1, 0), erfc(1), rel=1e-12)

    def test_n_zero_is_erfcx(self):
        assert_close(w_stable(0, 1 + 0j), mp_erfcx(1), rel=1e-12)

    @pytest.mark.parametrize(
        "n, m",
        [
            (5, 2 + 3j),
            (0.3, -0.7 + 0.2j),
            (1.5, -4 + 1j),
            (2.0, 60 - 60j),
        ],
    )
    def test_against_arbitrary_precision(self, n, m):
        assert_close(w_stable(n, m), mp_w(n, m), rel=1e-10)

    def test_conjugate_symmetry(self):
        for m in [0.5 + 1e-12j, 2 + 3j, -1 + 0.5j]:
            assert_close(
                w_stable(1.2, m.conjugate()),
                w_stable(1.2, m).conjugate(),
                rel=1e-14,
            )

    def test_log_scale_tames_growth(self):
        """
        A growing W times a decaying prefactor stays finite.
        """
        n, m = 0.0, -30.0
        with pytest.raises(exceptions.ErfcxOverflow):
            w_stable(n, m)
        got = w_stable(n, m, log_scale=-900.0)
        oracle = mpmath.exp(-900) * mpmath.exp(mpmath.mpf(m) ** 2)
        assert_close(got, complex(oracle * mpmath.erfc(m)), rel=1e-10)

    def test_broadcasts(self):
        got = w_stable(np.array([0.5, 1.0]), np.array([[0.1], [0.2 + 1j]]))
        assert got.shape == (2, 2)

    def test_negative_n(self):
        with pytest.raises(exceptions.OutOfDomain):
            w_stable(-1, 0)


class TestSolveCubicFromSymmetric:
    def test_factored(self):
        roots = solve_cubic_from_symmetric(6, 11, 6)
        assert sorted(r.real for r in roots) == pytest.approx([1, 2, 3])
        assert all(r.imag == 0 for r in roots)
        assert not roots.degenerate

    def test_zero(self):
        roots = solve_cubic_from_symmetric(0, 0, 0)
        assert roots == CubicRoots(alpha=0j, beta=0j, gamma=0j)
        assert roots.degenerate

    def test_degenerate_check(self):
        roots = solve_cubic_from_symmetric(0, 0, 0)
        with pytest.raises(exceptions.DegenerateRoots):
            roots.check()

    def test_conjugate_pair(self):
        # (t - 2)(t² + 1)
        roots = solve_cubic_from_symmetric(2, 1, 2)
        assert roots.alpha == 2
        assert roots.beta == roots.gamma.conjugate()
        assert abs(roots.beta.imag) == pytest.approx(1)

    def test_not_finite(self):
        with pytest.raises(exceptions.OutOfDomain):
            solve_cubic_from_symmetric(1, float("nan"), 0)

    def test_vieta_round_trip(self, subtests):
        rng = np.random.default_rng(20251019)
        done = 0
        while done < 200:
            s = rng.uniform(-5, 5, size=3)
            roots = solve_cubic_from_symmetric(*s)
            if roots.separation < 1e-3:
                continue
            done += 1
            with subtests.test(s=s):
                expected = pytest.approx(s, rel=1e-9, abs=1e-9)
                assert roots.symmetric_functions() == expected
                scale = max(1, *np.abs(s))
                for root in roots:
                    residual = abs(np.polyval([1, -s[0], s[1], -s[2]], root))
                    assert residual <= 1e-9 * scale

    def test_reaction_like_scales(self):
        """
        One large real root and a small complex pair, as for a slowly
        unbinding receiver.
        """
        s1, s2, s3 = 154.96, 5e-5, 0.005717
        roots = solve_cubic_from_symmetric(s1, s2, s3)
        assert not roots.degenerate
        assert roots.symmetric_functions() == pytest.approx(
            (s1, s2, s3),
            rel=1e-9,
        )
        scale = max(1, s1, s2, s3)
        for root in roots:
            residual = abs(np.polyval([1, -s1, s2, -s3], root))
            assert residual <= 1e-9 * scale


class TestPoissonTail:
    def test_zero_mean(self):
        for tau in [0, 1, 16, 1000]:
            assert poisson_tail(tau, 0) == 0

    def test_zero_threshold(self):
        assert poisson_tail(0, 3.5) == pytest.approx(1 - exp(-3.5), rel=1e-14)

    def test_against_summation(self, subtests):
        for tau, zeta in [(16, 10), (0, 0.1), (5, 20), (40, 12.5)]:
            with subtests.test(tau=tau, zeta=zeta):
                head = sum(
                    mpmath.exp(-zeta) * mpmath.mpf(zeta) ** i / factorial(i)
                    for i in range(tau + 1)
                )
                assert abs(poisson_tail(tau, zeta) - float(1 - head)) <= 1e-12

    def test_monotone(self):
        taus = np.arange(0, 40)
        zetas = np.linspace(0.5, 30, 25)
        values = poisson_tail(taus[:, None], zetas[None, :])
        assert np.all(np.diff(values, axis=0) <= 0)
        assert np.all(np.diff(values, axis=1) >= 0)

    def test_negative(self):
        with pytest.raises(exceptions.OutOfDomain):
            poisson_tail(-1, 1)


class TestPoissonPMF:
    def test_zero_mean(self):
        assert poisson_pmf(0, 0) == 1
        assert poisson_pmf(3, 0) == 0

    def test_value(self):
        assert poisson_pmf(16, 10) == pytest.approx(
            exp(-10) * 10**16 / factorial(16),
            rel=1e-12,
        )

    def test_sums_to_tail(self):
        head = sum(poisson_pmf(i, 7.0) for i in range(13))
        assert 1 - head == pytest.approx(poisson_tail(12, 7.0), abs=1e-14)


class TestIntegrateTransient:
    def test_constant(self):
        result = integrate_transient(lambda t: 1.0, 1.0)
        assert result.value == pytest.approx(1)

    def test_exponential(self):
        result = integrate_transient(lambda t: exp(-t), 10.0)
        assert result.value == pytest.approx(1 - exp(-10), rel=1e-10)
        assert result.error <= 1e-8

    def test_integrable_singularity(self):
        result = integrate_transient(lambda t: t**-0.5, 4.0)
        assert result.value == pytest.approx(4, rel=1e-6)

    def test_breakpoints(self):
        result = integrate_transient(
            lambda t: exp(-1e4 * t) * 1e4,
            1.0,
            breakpoints=[1e-5, 1e-4, 1e-3, 5.0],
        )
        assert result.value == pytest.approx(1, rel=1e-6)

    def test_zero_length(self):
        assert integrate_transient(lambda t: 1 / t, 0).value == 0

    def test_does_not_converge(self):
        with pytest.raises(exceptions.QuadratureDidNotConverge):
            integrate_transient(lambda t: 1 / t, 1.0)
