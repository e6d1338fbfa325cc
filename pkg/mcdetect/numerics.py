"""
Special functions and root solving underneath the channel model.

Everything here is a pure function of its arguments. Functions documented as
elementwise accept either Python scalars (returning Python scalars) or
``numpy`` arrays (returning arrays of the broadcast shape).
"""

from __future__ import annotations

from itertools import combinations
from typing import TYPE_CHECKING, Any
import logging

from scipy import integrate, special
import numpy as np

from mcdetect import exceptions
from mcdetect._attrs import frozen

if TYPE_CHECKING:
    from collections.abc import Sequence

    from mcdetect.typing import Integrand, RealLike

logger = logging.getLogger(__name__)

#: Largest argument magnitude accepted by `erfcx_complex`.
ERFCX_DOMAIN = 1e6

#: Relative pairwise root distance below which roots count as degenerate.
DEGENERATE_ROOT_TOLERANCE = 1e-8

#: Relative size of an imaginary part below which a root is taken as real.
_REAL_ROOT_TOLERANCE = 1e-12


def _unwrap(value: np.ndarray) -> Any:
    """
    Hand back Python scalars for 0-d results.
    """
    if value.ndim == 0:
        return value.item()
    return value


def erfcx_complex(z: complex | RealLike) -> Any:
    """
    The scaled complementary error function ``exp(z²)·erfc(z)``.

    Evaluated elementwise through the Faddeeva-package implementation in
    `scipy.special.erfcx`, which switches between a continued fraction and
    series expansions depending on the region of the complex plane.

    Raises:

        `exceptions.OutOfDomain`

            if ``|z|`` exceeds `ERFCX_DOMAIN`

        `exceptions.ErfcxOverflow`

            if the result is not representable (i.e. for arguments with a
            large negative real part, where the value grows like
            ``2·exp(z²)``)

    """
    array = np.asarray(z, dtype=complex)
    if np.any(np.abs(array) > ERFCX_DOMAIN):
        worst = array.flat[int(np.argmax(np.abs(array)))]
        raise exceptions.OutOfDomain(
            name="z",
            value=complex(worst),
            constraint=f"|z| <= {ERFCX_DOMAIN:g}",
        )
    with np.errstate(over="ignore", invalid="ignore"):
        result = special.erfcx(array)
    finite = np.isfinite(result)
    if not np.all(finite):
        bad = array[~finite].flat[0] if array.ndim else array.item()
        raise exceptions.ErfcxOverflow(z=complex(bad))
    return _unwrap(result)


def w_stable(n: RealLike, m: complex | RealLike, log_scale: RealLike = 0.0):
    """
    ``exp(log_scale)·W(n, m)`` where ``W(n, m) = exp(2nm + m²)·erfc(n + m)``.

    ``W`` itself is evaluated as ``exp(−n²)·erfcx(n + m)``, which never
    overflows for ``Re(n + m) ≥ 0``. In the left half plane the reflection
    ``erfcx(−z) = 2·exp(z²) − erfcx(z)`` splits off the growing part so that
    it can be combined with ``log_scale`` before exponentiating; this lets a
    decaying prefactor like ``exp(−k_d·t)`` tame a growing ``W``.

    Elementwise; ``n`` must be non-negative.
    """
    n = np.asarray(n, dtype=float)
    m = np.asarray(m, dtype=complex)
    log_scale = np.asarray(log_scale, dtype=float)
    if np.any(n < 0):
        raise exceptions.OutOfDomain(
            name="n",
            value=float(np.min(n)),
            constraint="n >= 0",
        )
    n, m, log_scale = np.broadcast_arrays(n, m, log_scale)
    z = n + m
    right = z.real >= 0

    result = np.empty(z.shape, dtype=complex)
    result[right] = np.exp(log_scale[right] - n[right] ** 2) * erfcx_complex(
        z[right],
    )

    left = ~right
    if np.any(left):
        nl, ml, sl = n[left], m[left], log_scale[left]
        with np.errstate(over="ignore", invalid="ignore"):
            growing = 2 * np.exp(sl + 2 * nl * ml + ml**2)
            result[left] = growing - np.exp(sl - nl**2) * erfcx_complex(
                -z[left],
            )
    if not np.all(np.isfinite(result)):
        raise exceptions.ErfcxOverflow(z=complex(z[~np.isfinite(result)][0]))
    return _unwrap(result)


@frozen
class CubicRoots:
    """
    The three roots of the channel cubic, in s^(-1/2).

    Real roots are stored with an exactly zero imaginary part and complex
    roots as an exact conjugate pair, so that symmetric combinations of them
    come out real.
    """

    alpha: complex
    beta: complex
    gamma: complex

    def __iter__(self):
        return iter((self.alpha, self.beta, self.gamma))

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma], dtype=complex)

    @property
    def separation(self) -> float:
        """
        The smallest pairwise distance relative to the largest root.
        """
        roots = self.as_array()
        scale = float(np.max(np.abs(roots)))
        if scale == 0:
            return 0.0
        closest = min(abs(x - y) for x, y in combinations(roots, 2))
        return float(closest / scale)

    @property
    def degenerate(self) -> bool:
        """
        Whether two roots are too close for divided differences.
        """
        return self.separation < DEGENERATE_ROOT_TOLERANCE

    def symmetric_functions(self) -> tuple[float, float, float]:
        """
        Reconstruct ``(s1, s2, s3)`` from the roots (Vieta's formulas).
        """
        a, b, c = self.as_array()
        return (
            (a + b + c).real,
            (a * b + b * c + c * a).real,
            (a * b * c).real,
        )

    def check(self) -> None:
        """
        Raise `exceptions.DegenerateRoots` if the roots are degenerate.
        """
        if self.degenerate:
            raise exceptions.DegenerateRoots(
                roots=(self.alpha, self.beta, self.gamma),
                separation=self.separation,
            )


def _polish(root: complex, coefficients: Sequence[float]) -> complex:
    value = np.polyval(coefficients, root)
    slope = np.polyval(np.polyder(coefficients), root)
    if slope == 0:
        return root
    polished = root - value / slope
    if abs(np.polyval(coefficients, polished)) <= abs(value):
        return complex(polished)
    return root


def solve_cubic_from_symmetric(s1: float, s2: float, s3: float) -> CubicRoots:
    """
    Solve ``t³ − s1·t² + s2·t − s3 = 0``.

    In other words, find the three numbers whose elementary symmetric
    functions are ``s1``, ``s2`` and ``s3``.

    Companion matrix eigenvalues provide the starting points, each of which
    then gets a Newton polish in complex arithmetic. Real-coefficient
    structure is then restored exactly: near-real roots are made real and a
    complex pair is made an exact conjugate pair.

    The returned roots are always usable for inspection; check
    `CubicRoots.degenerate` (or call `CubicRoots.check`) before dividing by
    their differences.
    """
    for name, value in (("s1", s1), ("s2", s2), ("s3", s3)):
        if not np.isfinite(value):
            raise exceptions.OutOfDomain(
                name=name,
                value=value,
                constraint="finite",
            )
    coefficients = [1.0, -s1, s2, -s3]
    if s1 == s2 == s3 == 0:
        return CubicRoots(alpha=0j, beta=0j, gamma=0j)

    roots = [
        _polish(complex(each), coefficients)
        for each in np.roots(coefficients)
    ]
    scale = max(abs(each) for each in roots)

    real = sorted(
        (r for r in roots if abs(r.imag) <= _REAL_ROOT_TOLERANCE * scale),
        key=lambda r: r.real,
    )
    if len(real) == 1 or len(real) == 3:
        cutoff = _REAL_ROOT_TOLERANCE * scale
        paired = [r for r in roots if abs(r.imag) > cutoff]
    else:
        # Two of three "real" means the pair sits right at the tolerance;
        # keep the one with the largest imaginary part as a complex pair.
        real = sorted(roots, key=lambda r: abs(r.imag))[:1]
        paired = sorted(roots, key=lambda r: abs(r.imag))[1:]

    if paired:
        upper = max(paired, key=lambda r: r.imag)
        lower = min(paired, key=lambda r: r.imag)
        mean_real = (upper.real + lower.real) / 2
        mean_imag = (upper.imag - lower.imag) / 2
        pair = [complex(mean_real, mean_imag), complex(mean_real, -mean_imag)]
        alpha = complex(real[0].real, 0.0)
        beta, gamma = pair
    else:
        alpha, beta, gamma = (complex(r.real, 0.0) for r in real)

    result = CubicRoots(alpha=alpha, beta=beta, gamma=gamma)
    if result.degenerate:
        logger.debug("degenerate cubic roots for %r", (s1, s2, s3))
    return result


def poisson_tail(tau: RealLike, zeta: RealLike) -> Any:
    """
    ``P[Y > τ]`` for ``Y ~ Poisson(ζ)``.

    Elementwise. This is the regularized lower incomplete gamma function
    ``P(τ + 1, ζ)`` (`scipy.special.pdtrc`), which is accurate in the far
    tail where ``1 − CDF`` would cancel catastrophically.
    """
    tau = np.asarray(tau)
    zeta = np.asarray(zeta, dtype=float)
    if np.any(tau < 0) or np.any(zeta < 0):
        raise exceptions.OutOfDomain(
            name="(tau, zeta)",
            value=(tau.tolist(), zeta.tolist()),
            constraint="tau >= 0 and zeta >= 0",
        )
    return _unwrap(np.asarray(special.pdtrc(tau, zeta), dtype=float))


def poisson_pmf(count: RealLike, zeta: RealLike) -> Any:
    """
    ``P[Y = count]`` for ``Y ~ Poisson(ζ)``.

    ``P[Y = 0] = 1`` at ``ζ = 0``.

    Elementwise, evaluated in log space so that large counts and means do not
    overflow the factorial.
    """
    count = np.asarray(count, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    with np.errstate(divide="ignore"):
        log_pmf = (
            special.xlogy(count, zeta) - zeta - special.gammaln(count + 1)
        )
    return _unwrap(np.exp(log_pmf))


@frozen
class Quadrature:
    """
    An integral estimate together with QUADPACK's estimate of its error.
    """

    value: float
    error: float


def integrate_transient(
    f: Integrand,
    upper: float,
    breakpoints: Sequence[float] = (),
) -> Quadrature:
    """
    Integrate ``f`` over ``(0, upper]`` adaptively.

    ``f`` may have an integrable singularity or a very steep onset at ``0``;
    the Gauss-Kronrod rules never evaluate the endpoints. Interior
    ``breakpoints`` (those outside the interval are ignored) help the
    subdivision find features spread over several orders of magnitude in
    time.

    Converges to an absolute error of ``1e-8`` or a relative error of
    ``1e-6``, whichever is looser.

    Raises:

        `exceptions.QuadratureDidNotConverge`

            if the subdivision budget is exhausted first

    """
    if upper < 0:
        raise exceptions.OutOfDomain(
            name="upper",
            value=upper,
            constraint="upper >= 0",
        )
    if upper == 0:
        return Quadrature(value=0.0, error=0.0)

    points = sorted({p for p in breakpoints if 0 < p < upper}) or None
    value, error, _, *message = integrate.quad(
        f,
        0.0,
        upper,
        epsabs=1e-8,
        epsrel=1e-6,
        limit=500,
        points=points,
        full_output=True,
    )
    if message:
        raise exceptions.QuadratureDidNotConverge(
            upper=upper,
            estimate=value,
            error=error,
            message=str(message[0]),
        )
    return Quadrature(value=value, error=error)
